"""Closed-loop irrigation toolkit.

Ground-truth soil-moisture simulation, LSTM surrogate models, online
mismatch correction, and zone-tracking MPC, wired together by the
``irriloop`` command line tool.
"""

__version__ = "0.1.0"
