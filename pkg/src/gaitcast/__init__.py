"""gaitcast: sEMG gait analysis toolkit.

Signal preprocessing, windowed feature extraction, Gaussian process
regression, an xLSTM sequence regressor, and a probabilistic lag-feature
forecaster for joint angle/torque series.
"""

__version__ = "0.1.0"
