"""
Concrete group models.

Every factory returns a cached singleton so that models resolved from
different documents compare by identity. Class flags are declared here and
cross-checked against the derived and lower central series on construction.

Closed-form exponentials take the branch from the sign of the eigenvalue
square (sinh/cosh when positive, sin/cos when negative, the polynomial
limit near zero) and never call the iterative eigensolver.
"""
import logging, math
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import settings
from .errors import ModelError
from .matcore import Mat, as_mat
from .models import (
    FlowBackend, GENERIC_EXPM, GroupElement, LieGroupModel, LinearControlSystem,
    AlgebraElement, ControlRange, algebra_class_flags, derivation_from_inner,
    structure_constants_from_basis,
)

logger = logging.getLogger(__name__)

_J21 = np.diag([1.0, 1.0, -1.0])


def _unit(n: int, i: int, j: int) -> Mat:
    e = np.zeros((n, n))
    e[i, j] = 1.0
    return e


def _scale(z: Mat) -> float:
    return max(1.0, float(np.max(np.abs(z))))


def _build(name: str, basis, flags: Dict[str, bool], flow_backend: FlowBackend,
           constraint, algebra_constraint, exp_closed=None, exp_backend: str = GENERIC_EXPM,
           descriptor=None) -> LieGroupModel:
    model = LieGroupModel(
        name=name,
        basis=tuple(basis),
        structure_constants=structure_constants_from_basis(basis),
        class_flags=dict(flags),
        exp_backend=exp_backend,
        flow_backend=flow_backend,
        constraint=constraint,
        algebra_constraint=algebra_constraint,
        exp_closed=exp_closed,
        descriptor=descriptor if descriptor is not None else name,
    )
    computed = algebra_class_flags(model)
    for key, declared in flags.items():
        if computed[key] != declared:
            raise ModelError(f"{name}: declared {key}={declared} but the algebra says {computed[key]}")
    logger.debug("built model %s (dim %d, ambient %d)", name, model.dim, model.ambient_size)
    return model


# --- Heisenberg ---

def _upper_unipotent_residual(m: Mat) -> float:
    lower = np.tril(m, -1)
    return float(max(np.max(np.abs(lower)), np.max(np.abs(np.diag(m) - 1.0))))


def _strict_upper_residual(z: Mat) -> float:
    return float(np.max(np.abs(np.tril(z))))


def unipotent_exp_closed(z, t: float = 1.0) -> Mat:
    """e^{tZ} for strictly upper triangular Z as the terminating Taylor sum"""
    z = as_mat(z, "nilpotent exponent")
    if np.iscomplexobj(z) or _strict_upper_residual(z) > settings.get("algebra_tol") * _scale(z):
        raise ModelError("unipotent exponential needs a real strictly upper triangular matrix")
    n = z.shape[0]
    tz = float(t) * z
    result = np.eye(n)
    term = np.eye(n)
    for k in range(1, n):
        term = term @ tz / k
        result = result + term
    return result


@lru_cache(maxsize=None)
def heisenberg_model() -> LieGroupModel:
    """3x3 unipotent matrices; basis X1 = E12, X2 = E23, X3 = E13 with [X1, X2] = X3"""
    basis = [_unit(3, 0, 1), _unit(3, 1, 2), _unit(3, 0, 2)]
    return _build(
        "heisenberg", basis,
        {"nilpotent": True, "solvable": True, "semisimple": False},
        FlowBackend.EXP_LOG_TRANSPORT,
        _upper_unipotent_residual, _strict_upper_residual,
        exp_closed=unipotent_exp_closed, exp_backend="unipotent",
    )


def heisenberg_point(x: float, y: float, z: float) -> GroupElement:
    m = np.array([[1.0, x, z], [0.0, 1.0, y], [0.0, 0.0, 1.0]])
    return GroupElement(heisenberg_model(), m)


def heisenberg_coords(g) -> Tuple[float, float, float]:
    m = g.matrix if isinstance(g, GroupElement) else np.asarray(g)
    return float(m[0, 1]), float(m[1, 2]), float(m[0, 2])


def heisenberg_product(a, b) -> Tuple[float, float, float]:
    """(x1, y1, z1)(x2, y2, z2) = (x1 + x2, y1 + y2, z1 + z2 + x1 y2)"""
    x1, y1, z1 = a
    x2, y2, z2 = b
    return x1 + x2, y1 + y2, z1 + z2 + x1 * y2


def heisenberg_exp_coords(v) -> Tuple[float, float, float]:
    x, y, z = v
    return x, y, x * y / 2.0 + z


def heisenberg_log_coords(g) -> Tuple[float, float, float]:
    x, y, z = g
    return x, y, z - x * y / 2.0


def right_invariant_field(y, point) -> Tuple[float, float, float]:
    """Value of the right-invariant field of Y = (m, n, p) at (x, y, z): (m, n, m y + p)"""
    m, n, p = y
    _, py, _ = point
    return m, n, m * py + p


def heisenberg_template_violations(d) -> List[str]:
    """
    Entries of a Heisenberg derivation matrix that break its required pattern:
    column 3 zero above the diagonal and a33 = a11 + a22.
    """
    d = np.asarray(d, dtype=float)
    tol = settings.get("leibniz_tol") * _scale(d)
    problems = []
    for row in (0, 1):
        if abs(d[row, 2]) > tol:
            problems.append(f"a{row + 1}3 = {d[row, 2]:.6g} must be 0")
    if abs(d[2, 2] - d[0, 0] - d[1, 1]) > tol:
        problems.append(f"a33 = {d[2, 2]:.6g} must equal a11 + a22 = {d[0, 0] + d[1, 1]:.6g}")
    return problems


# --- abelian R^n realized as translations ---

def _translation_residual(m: Mat) -> float:
    n = m.shape[0] - 1
    expected = np.eye(n + 1)
    expected[:n, n] = m[:n, n]
    return float(np.max(np.abs(m - expected)))


def _translation_algebra_residual(z: Mat) -> float:
    n = z.shape[0] - 1
    masked = np.array(z)
    masked[:n, n] = 0.0
    return float(np.max(np.abs(masked)))


@lru_cache(maxsize=None)
def abelian_model(n: int) -> LieGroupModel:
    """R^n as (n+1)x(n+1) translation matrices; basis b_i = E_{i,n+1}"""
    if n < 1:
        raise ModelError(f"abelian model needs n >= 1, got {n}")
    basis = [_unit(n + 1, i, n) for i in range(n)]
    return _build(
        f"abelian{n}", basis,
        {"nilpotent": True, "solvable": True, "semisimple": False},
        FlowBackend.EXP_LOG_TRANSPORT,
        _translation_residual, _translation_algebra_residual,
        exp_closed=unipotent_exp_closed, exp_backend="unipotent",
        descriptor={"abelian": n},
    )


# --- GL(n)+ ---

def _det_positive_residual(m: Mat) -> float:
    det = float(np.linalg.det(m))
    return 0.0 if det > 0.0 else 1.0 + abs(det)


@lru_cache(maxsize=None)
def gl_plus_model(n: int) -> LieGroupModel:
    """Invertible n x n matrices with positive determinant; basis E_ij row-major"""
    if n < 2:
        raise ModelError(f"gl_plus needs n >= 2, got {n}")
    basis = [_unit(n, i, j) for i in range(n) for j in range(n)]
    return _build(
        f"gl_plus{n}", basis,
        {"nilpotent": False, "solvable": False, "semisimple": False},
        FlowBackend.INNER_CONJUGATION,
        _det_positive_residual, lambda z: float(np.max(np.abs(np.imag(z)))),
        descriptor={"gl_plus": n},
    )


def gl_linear_system(a, b_list, control_range: Optional[ControlRange] = None) -> LinearControlSystem:
    """Linear system on GL(n)+ with drift X_A(g) = Ag - gA and control fields B_j"""
    a = as_mat(a, "drift matrix A")
    if a.shape[0] != a.shape[1]:
        raise ModelError("drift matrix A must be square")
    model = gl_plus_model(a.shape[0])
    if not b_list:
        raise ModelError("at least one control matrix B_j is required")
    fields = []
    for k, b in enumerate(b_list):
        b = as_mat(b, f"control matrix B_{k + 1}")
        if b.shape != a.shape:
            raise ModelError(f"B_{k + 1} has shape {b.shape}, A has {a.shape}")
        fields.append(AlgebraElement(model, model.coords_of(b)))
    x = AlgebraElement(model, model.coords_of(a))
    return LinearControlSystem(model, derivation_from_inner(model, x), tuple(fields), control_range)


# --- three-dimensional semisimple groups ---

def _sl2_algebra_residual(z: Mat) -> float:
    return float(abs(np.trace(z)) + np.max(np.abs(z.imag)))


def sl2_exp_closed(z, t: float = 1.0) -> Mat:
    """e^{tZ} for traceless real 2x2 Z with mu = -det Z"""
    z = as_mat(z, "sl2 element")
    if z.shape != (2, 2) or np.iscomplexobj(z):
        raise ModelError("sl2 closed form needs a real 2x2 matrix")
    if abs(np.trace(z)) >= settings.get("algebra_tol") * _scale(z):
        raise ModelError(f"sl2 closed form needs a traceless matrix (trace {np.trace(z):.3e})")
    t = float(t)
    mu = -float(np.linalg.det(z))
    ident = np.eye(2)
    tol = settings.get("closed_form_zero_tol")
    if mu > tol:
        s = math.sqrt(mu)
        return math.cosh(t * s) * ident + (math.sinh(t * s) / s) * z
    if mu < -tol:
        w = math.sqrt(-mu)
        return math.cos(t * w) * ident + (math.sin(t * w) / w) * z
    return ident + t * z


def _sl2_residual(m: Mat) -> float:
    return float(abs(np.linalg.det(m) - 1.0) + np.max(np.abs(m.imag)))


def _su2_algebra_residual(z: Mat) -> float:
    return float(np.max(np.abs(z + z.conj().T)) + abs(np.trace(z)))


def _su2_residual(m: Mat) -> float:
    unitary = np.max(np.abs(m.conj().T @ m - np.eye(2)))
    return float(max(unitary, abs(np.linalg.det(m) - 1.0)))


def su2_exp_closed(z, t: float = 1.0) -> Mat:
    """e^{tZ} for anti-Hermitian traceless Z with lambda^2 = det Z"""
    z = np.array(as_mat(z, "su2 element"), dtype=complex)
    if z.shape != (2, 2):
        raise ModelError("su2 closed form needs a 2x2 matrix")
    if _su2_algebra_residual(z) > settings.get("algebra_tol") * _scale(z):
        raise ModelError("su2 closed form needs an anti-Hermitian traceless matrix")
    t = float(t)
    lam_sq = float(np.linalg.det(z).real)
    ident = np.eye(2, dtype=complex)
    if lam_sq > settings.get("closed_form_zero_tol"):
        lam = math.sqrt(lam_sq)
        return math.cos(t * lam) * ident + (math.sin(t * lam) / lam) * z
    return ident + t * z


def _quadratic_exp(z: Mat, t: float) -> Mat:
    """e^{tZ} for 3x3 Z with Z^3 = mu Z, mu = trace(Z^2) / 2"""
    t = float(t)
    z2 = z @ z
    mu = 0.5 * float(np.trace(z2))
    ident = np.eye(3)
    tol = settings.get("closed_form_zero_tol")
    if mu > tol:
        s = math.sqrt(mu)
        return ident + (math.sinh(t * s) / s) * z + (2.0 * math.sinh(t * s / 2.0) ** 2 / mu) * z2
    if mu < -tol:
        w = math.sqrt(-mu)
        return ident + (math.sin(t * w) / w) * z + (2.0 * math.sin(t * w / 2.0) ** 2 / -mu) * z2
    return ident + t * z + (t * t / 2.0) * z2


def _so3_algebra_residual(z: Mat) -> float:
    return float(np.max(np.abs(z + z.T)) + np.max(np.abs(z.imag)))


def _so3_residual(m: Mat) -> float:
    return float(max(np.max(np.abs(m.T @ m - np.eye(3))), abs(np.linalg.det(m) - 1.0)))


def so3_exp_closed(z, t: float = 1.0) -> Mat:
    z = as_mat(z, "so3 element")
    if z.shape != (3, 3) or _so3_algebra_residual(z) > settings.get("algebra_tol") * _scale(z):
        raise ModelError("so3 closed form needs a real skew-symmetric 3x3 matrix")
    return _quadratic_exp(z, t)


def _so21_algebra_residual(z: Mat) -> float:
    return float(np.max(np.abs(z.T @ _J21 + _J21 @ z)) + np.max(np.abs(z.imag)))


def _so21_residual(m: Mat) -> float:
    return float(np.max(np.abs(m.T @ _J21 @ m - _J21)))


def so21_exp_closed(z, t: float = 1.0) -> Mat:
    z = as_mat(z, "so21 element")
    if z.shape != (3, 3) or _so21_algebra_residual(z) > settings.get("algebra_tol") * _scale(z):
        raise ModelError("so21 closed form needs a real 3x3 matrix skew with respect to diag(1, 1, -1)")
    return _quadratic_exp(z, t)


_SEMISIMPLE = {"nilpotent": False, "solvable": False, "semisimple": True}


@lru_cache(maxsize=None)
def sl2_model() -> LieGroupModel:
    """Basis H = diag(1, -1), E = E12, F = E21"""
    basis = [np.diag([1.0, -1.0]), _unit(2, 0, 1), _unit(2, 1, 0)]
    return _build("sl2", basis, _SEMISIMPLE, FlowBackend.INNER_CONJUGATION,
                  _sl2_residual, _sl2_algebra_residual, sl2_exp_closed, "sl2")


@lru_cache(maxsize=None)
def su2_model() -> LieGroupModel:
    basis = [
        np.array([[1j, 0], [0, -1j]]),
        np.array([[0, 1], [-1, 0]], dtype=complex),
        np.array([[0, 1j], [1j, 0]]),
    ]
    return _build("su2", basis, _SEMISIMPLE, FlowBackend.INNER_CONJUGATION,
                  _su2_residual, _su2_algebra_residual, su2_exp_closed, "su2")


@lru_cache(maxsize=None)
def so3_model() -> LieGroupModel:
    """Basis Lx, Ly, Lz (infinitesimal rotations about the coordinate axes)"""
    lx = _unit(3, 2, 1) - _unit(3, 1, 2)
    ly = _unit(3, 0, 2) - _unit(3, 2, 0)
    lz = _unit(3, 1, 0) - _unit(3, 0, 1)
    return _build("so3", [lx, ly, lz], _SEMISIMPLE, FlowBackend.INNER_CONJUGATION,
                  _so3_residual, _so3_algebra_residual, so3_exp_closed, "so3")


@lru_cache(maxsize=None)
def so21_model() -> LieGroupModel:
    """Rotation in the xy-plane and the two boosts E13 + E31, E23 + E32"""
    rot = _unit(3, 1, 0) - _unit(3, 0, 1)
    kx = _unit(3, 0, 2) + _unit(3, 2, 0)
    ky = _unit(3, 1, 2) + _unit(3, 2, 1)
    return _build("so21", [rot, kx, ky], _SEMISIMPLE, FlowBackend.INNER_CONJUGATION,
                  _so21_residual, _so21_algebra_residual, so21_exp_closed, "so21")


_NAMED: Dict[str, Callable[[], LieGroupModel]] = {
    "heisenberg": heisenberg_model,
    "sl2": sl2_model,
    "su2": su2_model,
    "so3": so3_model,
    "so21": so21_model,
}
_SIZED: Dict[str, Callable[[int], LieGroupModel]] = {
    "gl_plus": gl_plus_model,
    "abelian": abelian_model,
}
CLOSED_FORM_GROUPS = ("sl2", "su2", "so3", "so21")


def resolve_group(descriptor) -> LieGroupModel:
    """Model for a document's "group" value"""
    if isinstance(descriptor, str):
        if descriptor not in _NAMED:
            raise ModelError(f"unknown group {descriptor!r}; expected one of {sorted(_NAMED)} or a sized family")
        return _NAMED[descriptor]()
    if isinstance(descriptor, dict) and len(descriptor) == 1:
        (family, n), = descriptor.items()
        if family in _SIZED:
            if isinstance(n, bool) or not isinstance(n, int):
                raise ModelError(f"{family} size must be an integer, got {n!r}")
            return _SIZED[family](n)
    raise ModelError(f"unknown group {descriptor!r}")


def closed_solution_3dim(system: LinearControlSystem, u, t: float) -> GroupElement:
    """exp(t(X + W)) exp(-tX) with the group's own closed-form exponential"""
    model = system.model
    if model.name not in CLOSED_FORM_GROUPS:
        raise ModelError(f"no three-dimensional closed form for {model.name}")
    x = system.derivation.inner_generator
    if x is None:
        raise ModelError("closed-form solution requires an inner derivation")
    sigma = x.matrix + system.control_matrix(u)
    return GroupElement(model, model.exp_closed(sigma, t) @ model.exp_closed(x.matrix, -t))
