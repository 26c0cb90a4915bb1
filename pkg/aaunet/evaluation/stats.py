from collections import namedtuple

import numpy as np
from scipy.special import betainc

from ..errors import DegenerateError

TTestResult = namedtuple("TTestResult", "t df p")

def t_sf_two_sided(t, df):
    """
    Two-sided tail probability P(|T| >= |t|) of Student's t distribution,
    via the regularized incomplete beta function.
    """
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))

def paired_t_test(a, b):
    """
    Paired Student's t-test on per-fold metric values.

    Parameters
    ----------
    a, b : sequences of equal length >= 2

    Returns
    -------
    TTestResult
        t = mean(d) / (sd(d) / sqrt(n)) with d = a - b, df = n - 1 and the
        two-sided p-value.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired_t_test needs two 1-D sequences of equal length")
    n = a.size
    if n < 2:
        raise DegenerateError("paired_t_test needs at least 2 pairs")
    d = a - b
    if np.all(d == 0):
        raise DegenerateError("degenerate: identical samples")
    sd = d.std(ddof=1)
    if sd == 0:
        raise DegenerateError("degenerate: constant difference, zero variance")
    t = d.mean() / (sd / np.sqrt(n))
    df = n - 1
    return TTestResult(float(t), df, t_sf_two_sided(t, df))
