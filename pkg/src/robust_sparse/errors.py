"""Shared exception types."""


class ParameterError(ValueError):
    """Invalid parameter (sparsity out of range, bad shapes, ...)."""


class DegenerateWeightsError(ValueError):
    """All weights zero where positive mass is required."""


class EmptySliceError(RuntimeError):
    """Interval conditioning retained no (or too few) samples; redraw."""


class VarianceStepError(RuntimeError):
    """Robust variance estimation produced an unusable value."""
