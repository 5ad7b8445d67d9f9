"""Service layer: solver, resampling, surrogate, training and evaluation."""
