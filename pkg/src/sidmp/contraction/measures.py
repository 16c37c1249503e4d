"""Matrix measures (logarithmic norms) for the 1, 2 and infinity norms."""
import numpy as np


def _norm_key(norm):
    if norm in (1, "1"):
        return 1
    if norm in (2, "2"):
        return 2
    if norm in (np.inf, "inf", "∞", float("inf")):
        return np.inf
    raise ValueError(f"unsupported norm {norm!r}; use 1, 2 or inf")


def matrix_measure(a, norm=2):
    """Matrix measure ``mu(A) = lim_{h->0+} (||I + hA|| - 1) / h``.

    Closed forms: ``mu_2`` is the largest eigenvalue of the symmetric part,
    ``mu_1`` the largest column sum with the diagonal taken signed and the
    off-diagonal entries in absolute value, ``mu_inf`` the same over rows.
    Leading batch axes are allowed.
    """
    a = np.asarray(a, dtype=float)
    key = _norm_key(norm)
    if key == 2:
        return np.linalg.eigvalsh(0.5 * (a + np.swapaxes(a, -1, -2)))[..., -1]
    diag = np.diagonal(a, axis1=-2, axis2=-1)
    off = np.abs(a)
    off_sum_cols = off.sum(axis=-2) - np.abs(diag)
    off_sum_rows = off.sum(axis=-1) - np.abs(diag)
    if key == 1:
        return np.max(diag + off_sum_cols, axis=-1)
    return np.max(diag + off_sum_rows, axis=-1)
