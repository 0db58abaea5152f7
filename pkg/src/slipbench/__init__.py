"""slipbench: model-based vs data-driven sideslip-angle estimation workbench.

A library plus CLI that generates synthetic manoeuvre datasets from a
two-track vehicle plant, runs EKF/UKF observers (with adaptive tyre-force
observation noise) and from-scratch FFNN/LSTM regressors over them, and
reports the four standard sideslip KPIs per estimator.
"""

__version__ = "0.1.0"
