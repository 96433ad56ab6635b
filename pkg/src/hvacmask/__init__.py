"""Desk-scale laboratory for masked reinforcement-learning HVAC control.

A physics-based 7-zone building simulator (zone heat balance, FCU and pump
laws, a Newton-Raphson chilled-water network, Fanger comfort metrics), a
kNN oracle that mines state-dependent feasible fan-speed sets from
demonstration logs, and a masked DQN that optimizes within the pruned joint
action space. The ``hvacmask`` CLI ties the pipeline together.
"""

__version__ = "0.1.0"
