"""Small argument checks in the spirit of sklearn.utils.validation."""
import math
import numbers

from .exceptions import ParameterError


def check_scalar(x, name, target_type=numbers.Real, min_val=None, max_val=None,
                 include_min=True, include_max=True):
    if isinstance(x, bool) or not isinstance(x, target_type):
        raise ParameterError(f"{name} must be {getattr(target_type, '__name__', target_type)}, got {x!r}")
    if isinstance(x, numbers.Real) and not math.isfinite(x):
        raise ParameterError(f"{name} must be finite, got {x!r}")
    if min_val is not None:
        if x < min_val or (x == min_val and not include_min):
            op = ">=" if include_min else ">"
            raise ParameterError(f"{name} must be {op} {min_val}, got {x!r}")
    if max_val is not None:
        if x > max_val or (x == max_val and not include_max):
            op = "<=" if include_max else "<"
            raise ParameterError(f"{name} must be {op} {max_val}, got {x!r}")
    return x


def check_count(x, name, min_val=1):
    return check_scalar(x, name, numbers.Integral, min_val=min_val)
