import numpy as np

# Zero power maps to this value wherever a finite dB number is required (CSV cells).
DB_FLOOR = -300.0


def db_to_linear(x_db):
    out = np.power(10.0, np.asarray(x_db, dtype=float) / 10.0)
    return out if out.ndim else float(out)


def linear_to_db(x, floor=None):
    """10*log10 of a power ratio; ``floor`` replaces -inf for zero power."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(x)
    if floor is not None:
        out = np.where(x > 0, out, floor)
    return out if out.ndim else float(out)
