"""EKF localization for a simulated mecanum-drive competition robot."""

__version__ = "0.1.0"
