"""
Gaussian white noise module - discretized observations, estimator risk
and the bias/MAD frontier
"""
