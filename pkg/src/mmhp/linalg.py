"""Dense linear algebra for small square matrices.

Everything here targets the state-space sizes this package works with
(a handful of hidden states, N <= ~20).  The only nontrivial routine is
the matrix exponential, implemented by scaling-and-squaring with a
diagonal Pade approximant and norm-based order selection.
"""

import numpy as np

from .errors import InputError

# Pade numerator coefficients b_0..b_m for the [m/m] diagonal approximant
# of exp, and the 1-norm thresholds below which each order keeps the
# backward error at unit-roundoff level.
_PADE_COEFFS = {
    3: (120.0, 60.0, 12.0, 1.0),
    5: (30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0),
    7: (17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0),
    9: (17643225600.0, 8821612800.0, 2075673600.0, 302702400.0, 30270240.0,
        2162160.0, 110880.0, 3960.0, 90.0, 1.0),
    13: (64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
         1187353796428800.0, 129060195264000.0, 10559470521600.0,
         670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
         960960.0, 16380.0, 182.0, 1.0),
}
_THETA = {
    3: 1.495585217958292e-2,
    5: 2.539398330063230e-1,
    7: 9.504178996162932e-1,
    9: 2.097847961257068e0,
    13: 5.371920351148152e0,
}


def as_square_matrix(m):
    """Validate and return ``m`` as a finite square float matrix."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise InputError(f"expected a nonempty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InputError("matrix entries must be finite")
    return m


def as_vector(x, n=None):
    """Validate and return ``x`` as a finite 1-d float vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InputError(f"expected a nonempty vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("vector entries must be finite")
    if n is not None and x.size != n:
        raise InputError(f"expected a vector of length {n}, got {x.size}")
    return x


def _pade(a, m):
    """Evaluate the [m/m] Pade approximant of exp at ``a``."""
    b = _PADE_COEFFS[m]
    n = a.shape[0]
    ident = np.eye(n)
    powers = {0: ident, 2: a @ a}
    if m >= 5:
        powers[4] = powers[2] @ powers[2]
    if m >= 7:
        powers[6] = powers[4] @ powers[2]
    if m >= 9:
        powers[8] = powers[6] @ powers[2]
    if m == 13:
        a2, a4, a6 = powers[2], powers[4], powers[6]
        u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
                 + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
        v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
             + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    else:
        u = b[1] * ident
        v = b[0] * ident
        for k in range(2, m + 1, 2):
            v = v + b[k] * powers[k]
        for k in range(3, m + 1, 2):
            u = u + b[k] * powers[k - 1]
        u = a @ u
    return np.linalg.solve(v - u, v + u)


def mat_exp(m, tol=1e-12):
    """Matrix exponential e^m by scaling-and-squaring.

    Parameters
    ----------
    m : array_like, shape (n, n)
        Square matrix with finite entries.
    tol : float
        Upper bound on the acceptable backward error, in (0, 1e-6].
        The Pade orders used here keep the backward error at unit
        roundoff, well below any admissible ``tol``.
    """
    m = as_square_matrix(m)
    if not (0.0 < tol <= 1e-6):
        raise InputError(f"tol must lie in (0, 1e-6], got {tol}")
    norm = np.linalg.norm(m, 1)
    if norm == 0.0:
        return np.eye(m.shape[0])
    for order in (3, 5, 7, 9):
        if norm <= _THETA[order]:
            return _pade(m, order)
    n_squarings = max(0, int(np.ceil(np.log2(norm / _THETA[13]))))
    result = _pade(m / (2.0 ** n_squarings), 13)
    for _ in range(n_squarings):
        result = result @ result
    return result


def mat_vec(m, x):
    """Matrix-vector product with dimension checking."""
    m = as_square_matrix(m)
    x = as_vector(x)
    if m.shape[1] != x.size:
        raise InputError(
            f"dimension mismatch: matrix is {m.shape}, vector has length {x.size}")
    return m @ x


def expm_stack(mats):
    """Matrix exponentials of a stack of small matrices, shape (m, n, n).

    Same scaling-and-squaring construction as :func:`mat_exp`, with one
    squaring count shared across the stack (sized for the largest norm;
    extra squarings are exact for the others).  Vectorizing over the
    stack is what makes the per-bin filter updates cheap.
    """
    mats = np.asarray(mats, dtype=float)
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise InputError(f"expected a stack of square matrices, got {mats.shape}")
    if not np.all(np.isfinite(mats)):
        raise InputError("matrix entries must be finite")
    m, n, _ = mats.shape
    if m == 0:
        return mats.copy()
    norms = np.abs(mats).sum(axis=1).max(axis=1)
    max_norm = float(np.max(norms))
    n_squarings = 0 if max_norm <= _THETA[13] else \
        max(0, int(np.ceil(np.log2(max_norm / _THETA[13]))))
    a = mats / (2.0 ** n_squarings)
    b = _PADE_COEFFS[13]
    ident = np.broadcast_to(np.eye(n), (m, n, n))
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    result = np.linalg.solve(v - u, v + u)
    for _ in range(n_squarings):
        result = result @ result
    return result
