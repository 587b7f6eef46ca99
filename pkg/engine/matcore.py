"""
Dense small-matrix arithmetic used by every other engine module.

Matrices are plain numpy arrays (float64, or complex128 where a realization
needs complex entries). Everything here is a pure function of its inputs.
"""
import logging, math
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import hessenberg, qr

from . import settings
from .errors import ModelError, NumericalError

logger = logging.getLogger(__name__)

Mat = np.ndarray

# Degree-13 Padé numerator/denominator coefficients b_0 .. b_13
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)

_EPS = np.finfo(float).eps


def as_mat(a, name: str = "matrix") -> Mat:
    """Copy `a` into a read-only 2-D array with finite entries"""
    arr = np.array(a)
    arr = arr.astype(complex if np.iscomplexobj(arr) else float)
    if arr.ndim != 2 or 0 in arr.shape:
        raise ModelError(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def _square(a, name: str) -> Mat:
    arr = as_mat(a, name)
    if arr.shape[0] != arr.shape[1]:
        raise ModelError(f"{name} must be square, got shape {arr.shape}")
    return arr


def bracket(a, b) -> Mat:
    """Commutator AB - BA"""
    a = _square(a, "left bracket operand")
    b = _square(b, "right bracket operand")
    if a.shape != b.shape:
        raise ModelError(f"bracket of mismatched dimensions {a.shape} and {b.shape}")
    return a @ b - b @ a


def _pade13(z: Mat) -> Mat:
    b = _PADE13
    n = z.shape[0]
    ident = np.eye(n, dtype=z.dtype)
    z2 = z @ z
    z4 = z2 @ z2
    z6 = z2 @ z4
    u = z @ (z6 @ (b[13] * z6 + b[11] * z4 + b[9] * z2)
             + b[7] * z6 + b[5] * z4 + b[3] * z2 + b[1] * ident)
    v = (z6 @ (b[12] * z6 + b[10] * z4 + b[8] * z2)
         + b[6] * z6 + b[4] * z4 + b[2] * z2 + b[0] * ident)
    return np.linalg.solve(v - u, v + u)


def expm(a, t: float = 1.0) -> Mat:
    """
    e^{tA} by scaling and squaring: tA is halved until its 1-norm is at most
    the configured threshold, a degree-13 Padé approximant is evaluated, and
    the result is squared back up.
    """
    a = _square(a, "expm input")
    z = float(t) * a
    n = z.shape[0]
    norm = np.linalg.norm(z, 1)
    if norm == 0.0:
        return np.eye(n, dtype=z.dtype)
    threshold = settings.get("expm_squaring_threshold")
    squarings = 0
    if norm > threshold:
        squarings = int(math.ceil(math.log2(norm / threshold)))
        z = z / (2.0 ** squarings)
    result = _pade13(z)
    for _ in range(squarings):
        result = result @ result
    if not np.all(np.isfinite(result)):
        raise NumericalError(f"matrix exponential overflowed (||tA||_1 = {norm:.3e})")
    return result


def logm_unipotent(m) -> Mat:
    """
    Logarithm of a unipotent matrix through the terminating Mercator series
    log(I + K) = K - K^2/2 + K^3/3 - ...
    """
    m = _square(m, "unipotent matrix")
    n = m.shape[0]
    k = m - np.eye(n, dtype=m.dtype)
    scale = max(1.0, np.linalg.norm(k, np.inf))
    top = np.linalg.matrix_power(k, n)
    residual = float(np.max(np.abs(top)))
    if residual > settings.get("unipotent_tol") * scale ** n:
        raise ModelError(f"M - I is not nilpotent (||(M-I)^{n}|| = {residual:.3e})")
    result = np.zeros_like(k)
    term = np.eye(n, dtype=m.dtype)
    for j in range(1, n):
        term = term @ k
        result = result + ((-1) ** (j + 1) / j) * term
    return result


def _wilkinson_shift(block: Mat) -> complex:
    a, b, c, d = block[0, 0], block[0, 1], block[1, 0], block[1, 1]
    half_trace = (a + d) / 2
    disc = np.sqrt((a - d) ** 2 / 4 + b * c)
    l1, l2 = half_trace + disc, half_trace - disc
    return l1 if abs(l1 - d) <= abs(l2 - d) else l2


def _pair_conjugates(values: np.ndarray, scale: float) -> np.ndarray:
    """Snap near-real values to the real axis and make complex pairs exact conjugates"""
    values = values.copy()
    real_band = 1e-12 * max(scale, 1.0)
    near_real = np.abs(values.imag) <= real_band
    values[near_real] = values[near_real].real
    upper = [i for i in range(len(values)) if values[i].imag > real_band]
    lower = [i for i in range(len(values)) if values[i].imag < -real_band]
    for i in sorted(upper, key=lambda k: (values[k].real, values[k].imag)):
        if not lower:
            break
        j = min(lower, key=lambda k: abs(values[i] - np.conj(values[k])))
        lower.remove(j)
        mid = (values[i] + np.conj(values[j])) / 2
        values[i], values[j] = mid, np.conj(mid)
    return values


def eigenvalues(a) -> List[complex]:
    """
    All eigenvalues with multiplicity: Hessenberg reduction followed by
    Wilkinson-shifted QR sweeps with deflation at the bottom of the active
    block. Real input yields exactly conjugate complex pairs.
    """
    a = _square(a, "eigenvalue input")
    n = a.shape[0]
    h = np.array(hessenberg(np.array(a)), dtype=complex)
    scale = max(float(np.linalg.norm(a, np.inf)), np.finfo(float).tiny)
    cap = int(settings.get("qr_sweeps_per_dim")) * n

    found = []
    hi = n
    sweeps = 0
    stalled = 0
    while hi > 0:
        if hi == 1:
            found.append(h[0, 0])
            break
        sub = abs(h[hi - 1, hi - 2])
        if sub <= _EPS * (abs(h[hi - 1, hi - 1]) + abs(h[hi - 2, hi - 2])) or sub <= _EPS * scale:
            found.append(h[hi - 1, hi - 1])
            hi -= 1
            stalled = 0
            continue
        if sweeps >= cap:
            raise NumericalError(
                f"shifted QR did not converge after {sweeps} sweeps (residual {sub:.3e})"
            )
        sweeps += 1
        stalled += 1
        active = h[:hi, :hi]
        if stalled % 11 == 0:
            # exceptional shift to break cycles
            mu = active[-1, -1] + 1.5 * sub
        else:
            mu = _wilkinson_shift(active[-2:, -2:])
        ident = np.eye(hi)
        q, r = np.linalg.qr(active - mu * ident)
        h[:hi, :hi] = r @ q + mu * ident

    logger.debug("eigenvalues of %dx%d matrix in %d QR sweeps", n, n, sweeps)
    values = np.array(found[::-1], dtype=complex)
    if not np.iscomplexobj(a):
        values = _pair_conjugates(values, scale)
    order = sorted(range(n), key=lambda k: (-values[k].real, -values[k].imag))
    return [complex(values[k]) for k in order]


def span_union(vectors: Sequence, tol: Optional[float] = None) -> np.ndarray:
    """
    Orthonormal basis (as rows) of the span of `vectors`, via QR with column
    pivoting. Directions whose pivot falls below tol times the largest
    vector norm are discarded.
    """
    rows = [np.asarray(v, dtype=float).ravel() for v in vectors]
    if not rows:
        return np.zeros((0, 0))
    dim = rows[0].size
    for v in rows:
        if v.size != dim:
            raise ModelError(f"span_union got vectors of lengths {dim} and {v.size}")
    stacked = np.column_stack(rows)
    largest = float(np.max(np.linalg.norm(stacked, axis=0)))
    if largest == 0.0:
        return np.zeros((0, dim))
    tol = settings.get("rank_tol") if tol is None else tol
    q, r, _ = qr(stacked, mode="economic", pivoting=True)
    pivots = np.abs(np.diag(r))
    rank = int(np.sum(pivots > tol * largest))
    return np.ascontiguousarray(q[:, :rank].T)


def projection_residual(basis: np.ndarray, v) -> float:
    """Norm of the part of v orthogonal to the row space of an orthonormal basis"""
    v = np.asarray(v, dtype=float).ravel()
    if basis.size == 0:
        return float(np.linalg.norm(v))
    return float(np.linalg.norm(v - basis.T @ (basis @ v)))
