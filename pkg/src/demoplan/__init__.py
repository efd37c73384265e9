"""Learn cost-annotated stacking operators from hand demonstrations.

The pipeline turns recorded tabletop traces into a typed STRIPS domain:
grounding maps tracked positions onto symbolic hand and environment
state, segmentation classifies per-frame activities, operator learning
extracts lifted preconditions and effects with observation counts, and
the planner searches the grounded domain for minimum-cost stacking
plans. PDDL emission keeps the domain usable by external planners.
"""

__version__ = "0.1.0"
