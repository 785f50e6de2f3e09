"""Signal-free intersection control without lane allocation.

Joint optimization of vehicle routes (including multi-arm detours and
in-link turn-arounds) and trajectories (car following plus lane changing)
as a discrete-time MILP, embedded in an adaptive-horizon rolling
simulation with an independent safety verifier.
"""

__version__ = "0.1.0"
