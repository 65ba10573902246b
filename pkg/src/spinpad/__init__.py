"""spinpad: cross-layer evaluation of spin-torque MRAM scratchpads for DNN training.

Layers, bottom to top:

- magnetics: stochastic macro-spin switching of the MTJ bit cell, write
  error rates, and pulse-energy trade-offs.
- arraymodel: calibrated array-level latency/energy/area/leakage versus
  capacity for SRAM and MRAM scratchpads, including reduced-cost write
  modes that trade write error rate for energy and latency.
- dataflow: output-stationary systolic-array access counting for one
  training iteration (forward, backward, weight update) with a serial
  FIFO scratchpad residency model.
- energy: system-level training energy estimates and iso-capacity /
  iso-area technology comparisons, plus heterogeneous per-segment write
  energy for IEEE-754 words.
- errortrain: bit-level write-error injection into a small numpy MLP
  trainer to measure accuracy impact of segment-targeted error rates.
- cli: reproducible command-line front end over all of the above.
"""

__version__ = "0.1.0"
