"""Variable importance under correlated predictors: simulation, estimation,
and bias-variance analysis of permutation-based importance measures."""

__version__ = "0.1.0"
