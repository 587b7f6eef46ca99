"""
Data model for matrix Lie groups and the linear control systems on them.

A LieGroupModel fixes a realization: a basis of the algebra as ambient
matrices, the structure constants c[k, i, j] with [b_i, b_j] = sum_k
c[k, i, j] b_k, the group's defining constraint and the backends used to
exponentiate and to flow. Algebra elements are coordinate vectors in that
basis; derivations are dim x dim matrices acting on those coordinates
(column j is the image of b_j).

The inner convention is D = ad(X), whose flow is g -> e^{tX} g e^{-tX}.

System documents (JSON, matrices row-major):
    { "group": "heisenberg" | "sl2" | "su2" | "so3" | "so21"
               | {"gl_plus": n} | {"abelian": n},
      "derivation": {"inner": [x1, ...]} | {"matrix": [[...], ...]},
      "control_fields": [[y1, ...], ...],
      "control_range": {"min": [...], "max": [...]},      (optional)
      "initial": {"exp": [y1, ...]},                      (optional)
      "control": [{"duration": t, "u": [u1, ...]}, ...] }
"""
import json, logging, math
from dataclasses import dataclass, InitVar
from enum import Enum
from functools import cached_property
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import settings
from .errors import ModelError
from .matcore import Mat, as_mat, bracket, expm, span_union

logger = logging.getLogger(__name__)

# Keys a system document may carry besides the schema proper
_DOC_EXTRA_KEYS = {"description", "expected"}
_DOC_KEYS = {"group", "derivation", "control_fields", "control_range", "initial", "control"}


class FlowBackend(str, Enum):
    INNER_CONJUGATION = "inner_conjugation"
    EXP_LOG_TRANSPORT = "exp_log_transport"


GENERIC_EXPM = "generic_expm"


def _flatten_basis(basis: Sequence[Mat]) -> np.ndarray:
    """Real (2 * ambient^2) x dim matrix whose columns are the flattened basis"""
    cols = [np.concatenate([b.real.ravel(), b.imag.ravel()]) for b in basis]
    return np.column_stack(cols)


def structure_constants_from_basis(basis: Sequence[Mat]) -> np.ndarray:
    """c[k, i, j] from the matrix brackets of a basis realization"""
    flat = _flatten_basis(basis)
    dim = len(basis)
    c = np.zeros((dim, dim, dim))
    for i in range(dim):
        for j in range(dim):
            commutator = bracket(basis[i], basis[j])
            rhs = np.concatenate([commutator.real.ravel(), commutator.imag.ravel()])
            c[:, i, j] = np.linalg.lstsq(flat, rhs, rcond=None)[0]
    return c


@dataclass(frozen=True, eq=False)
class LieGroupModel:
    name: str
    basis: Tuple[Mat, ...]
    structure_constants: np.ndarray
    class_flags: Dict[str, bool]
    exp_backend: str
    flow_backend: FlowBackend
    constraint: Callable[[Mat], float]
    algebra_constraint: Callable[[Mat], float]
    exp_closed: Optional[Callable[[Mat, float], Mat]] = None
    descriptor: Any = None

    def __post_init__(self):
        if not self.basis:
            raise ModelError(f"{self.name}: empty basis")
        basis = tuple(as_mat(b, f"{self.name} basis element") for b in self.basis)
        shape = basis[0].shape
        if shape[0] != shape[1] or any(b.shape != shape for b in basis):
            raise ModelError(f"{self.name}: basis matrices must be square and of equal size")
        object.__setattr__(self, "basis", basis)
        c = np.array(self.structure_constants, dtype=float)
        dim = len(basis)
        if c.shape != (dim, dim, dim):
            raise ModelError(f"{self.name}: structure constants must have shape {(dim, dim, dim)}")
        c.setflags(write=False)
        object.__setattr__(self, "structure_constants", c)
        residual = structure_residual(self)
        if residual > settings.get("structure_tol"):
            raise ModelError(f"{self.name}: structure constants disagree with the basis brackets (residual {residual:.3e})")
        asym = float(np.max(np.abs(c + np.transpose(c, (0, 2, 1)))))
        if asym > settings.get("structure_tol"):
            raise ModelError(f"{self.name}: structure constants are not antisymmetric ({asym:.3e})")

    @property
    def dim(self) -> int:
        return len(self.basis)

    @property
    def ambient_size(self) -> int:
        return self.basis[0].shape[0]

    @property
    def is_complex(self) -> bool:
        return any(np.iscomplexobj(b) for b in self.basis)

    @property
    def nilpotent(self) -> bool:
        return bool(self.class_flags.get("nilpotent", False))

    @property
    def solvable(self) -> bool:
        return bool(self.class_flags.get("solvable", False))

    @cached_property
    def _coords_pinv(self) -> np.ndarray:
        return np.linalg.pinv(_flatten_basis(self.basis))

    def identity(self) -> Mat:
        return np.eye(self.ambient_size, dtype=complex if self.is_complex else float)

    def to_matrix(self, coords) -> Mat:
        coords = np.asarray(coords, dtype=float).ravel()
        if coords.size != self.dim:
            raise ModelError(f"{self.name}: expected {self.dim} coordinates, got {coords.size}")
        out = np.zeros((self.ambient_size, self.ambient_size),
                       dtype=complex if self.is_complex else float)
        for c, b in zip(coords, self.basis):
            out = out + c * b
        return out

    def coords_of(self, matrix) -> np.ndarray:
        """Coordinates of an algebra matrix; raises if it lies outside the algebra"""
        m = as_mat(matrix, f"{self.name} algebra matrix")
        if m.shape != (self.ambient_size, self.ambient_size):
            raise ModelError(f"{self.name}: algebra matrix must be {self.ambient_size}x{self.ambient_size}")
        flat = np.concatenate([m.real.ravel(), m.imag.ravel()])
        coords = self._coords_pinv @ flat
        residual = float(np.linalg.norm(_flatten_basis(self.basis) @ coords - flat))
        if residual > settings.get("algebra_tol") * max(1.0, float(np.linalg.norm(flat))):
            raise ModelError(f"{self.name}: matrix is not in the algebra (residual {residual:.3e})")
        defect = self.algebra_constraint(m)
        if defect > settings.get("algebra_tol") * max(1.0, float(np.max(np.abs(m)))):
            raise ModelError(f"{self.name}: matrix violates the algebra constraint (defect {defect:.3e})")
        return coords

    def bracket_coords(self, a, b) -> np.ndarray:
        return np.einsum("kij,i,j->k", self.structure_constants,
                         np.asarray(a, dtype=float), np.asarray(b, dtype=float))

    def ad_matrix(self, coords) -> np.ndarray:
        """Matrix of ad(X) on coordinates: column j holds the coordinates of [X, b_j]"""
        return np.einsum("kij,i->kj", self.structure_constants, np.asarray(coords, dtype=float))

    def exp(self, z, t: float = 1.0) -> Mat:
        """Group exponential e^{tZ} through the model's exp backend"""
        if self.exp_closed is not None:
            return self.exp_closed(z, t)
        return expm(z, t)

    def element(self, coords) -> "AlgebraElement":
        return AlgebraElement(self, coords)

    def group_element(self, matrix, validate: bool = True) -> "GroupElement":
        return GroupElement(self, matrix, validate)


def structure_residual(model: LieGroupModel) -> float:
    """Largest ||[b_i, b_j] - sum_k c^k_ij b_k|| over basis pairs"""
    worst = 0.0
    for i in range(model.dim):
        for j in range(model.dim):
            commutator = bracket(model.basis[i], model.basis[j])
            expanded = sum(model.structure_constants[k, i, j] * model.basis[k] for k in range(model.dim))
            worst = max(worst, float(np.linalg.norm(commutator - expanded)))
    return worst


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    model: LieGroupModel
    coords: np.ndarray

    def __post_init__(self):
        c = np.array(self.coords, dtype=float).ravel()
        if c.size != self.model.dim:
            raise ModelError(f"{self.model.name}: expected {self.model.dim} coordinates, got {c.size}")
        if not np.all(np.isfinite(c)):
            raise ModelError(f"{self.model.name}: algebra coordinates must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def matrix(self) -> Mat:
        return self.model.to_matrix(self.coords)


@dataclass(frozen=True, eq=False)
class GroupElement:
    model: LieGroupModel
    matrix: Mat
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool):
        m = as_mat(self.matrix, f"{self.model.name} group element")
        n = self.model.ambient_size
        if m.shape != (n, n):
            raise ModelError(f"{self.model.name}: group element must be {n}x{n}, got {m.shape}")
        object.__setattr__(self, "matrix", m)
        if validate:
            residual = self.model.constraint(m)
            if residual > settings.get("group_tol"):
                raise ModelError(f"{self.model.name}: matrix violates the group constraint (residual {residual:.3e})")

    def constraint_residual(self) -> float:
        return float(self.model.constraint(self.matrix))

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        if other.model is not self.model:
            raise ModelError("product of elements from different models")
        return GroupElement(self.model, self.matrix @ other.matrix, validate=False)


@dataclass(frozen=True, eq=False)
class Derivation:
    model: LieGroupModel
    matrix: np.ndarray
    inner_generator: Optional[AlgebraElement] = None

    def __post_init__(self):
        m = as_mat(self.matrix, "derivation matrix")
        if np.iscomplexobj(m):
            raise ModelError("derivation matrix must be real")
        dim = self.model.dim
        if m.shape != (dim, dim):
            raise ModelError(f"{self.model.name}: derivation matrix must be {dim}x{dim}, got {m.shape}")
        object.__setattr__(self, "matrix", m)
        if self.inner_generator is not None:
            if self.inner_generator.model is not self.model:
                raise ModelError("inner generator belongs to a different model")
            ad = self.model.ad_matrix(self.inner_generator.coords)
            residual = float(np.max(np.abs(ad - m)))
            if residual > settings.get("leibniz_tol") * max(1.0, float(np.max(np.abs(ad)))):
                raise ModelError(f"derivation matrix is not ad of its inner generator (residual {residual:.3e})")

    @property
    def is_inner(self) -> bool:
        return self.inner_generator is not None


@dataclass(frozen=True)
class ControlRange:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float).ravel()
        hi = np.array(self.upper, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise ModelError("control_range min and max must have the same length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo > hi):
            raise ModelError("control_range requires min <= max componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def contains(self, u) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lower) and np.all(u <= self.upper))


@dataclass(frozen=True, eq=False)
class LinearControlSystem:
    model: LieGroupModel
    derivation: Derivation
    control_fields: Tuple[AlgebraElement, ...]
    control_range: Optional[ControlRange] = None
    initial: Optional[AlgebraElement] = None

    def __post_init__(self):
        fields = tuple(self.control_fields)
        if not fields:
            raise ModelError("a linear control system needs at least one control field")
        if self.derivation.model is not self.model:
            raise ModelError("derivation belongs to a different model")
        for y in fields:
            if y.model is not self.model:
                raise ModelError("control fields must all belong to the system's model")
        object.__setattr__(self, "control_fields", fields)
        if self.control_range is not None and self.control_range.lower.size != len(fields):
            raise ModelError(f"control_range has {self.control_range.lower.size} entries for {len(fields)} controls")
        if self.initial is not None and self.initial.model is not self.model:
            raise ModelError("initial point belongs to a different model")

    @property
    def m(self) -> int:
        return len(self.control_fields)

    def control_matrix(self, u) -> Mat:
        """Matrix of W = sum_j u_j Y_j"""
        u = np.asarray(u, dtype=float).ravel()
        if u.size != self.m:
            raise ModelError(f"control vector has {u.size} entries, system has {self.m} fields")
        coords = sum(uj * y.coords for uj, y in zip(u, self.control_fields))
        return self.model.to_matrix(coords)

    def start_point(self) -> Optional[GroupElement]:
        if self.initial is None:
            return None
        return GroupElement(self.model, self.model.exp(self.initial.matrix))


@dataclass(frozen=True)
class Segment:
    duration: float
    u: np.ndarray

    def __post_init__(self):
        d = float(self.duration)
        if not math.isfinite(d) or d <= 0.0:
            raise ModelError(f"segment duration must be positive and finite, got {self.duration}")
        u = np.array(self.u, dtype=float).ravel()
        if not np.all(np.isfinite(u)):
            raise ModelError("segment controls must be finite")
        u.setflags(write=False)
        object.__setattr__(self, "duration", d)
        object.__setattr__(self, "u", u)


@dataclass(frozen=True)
class PiecewiseControl:
    segments: Tuple[Segment, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ModelError("a piecewise control needs at least one segment")
        m = segs[0].u.size
        if any(s.u.size != m for s in segs):
            raise ModelError("all control segments must have the same number of inputs")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def constant(cls, u, duration: float) -> "PiecewiseControl":
        return cls((Segment(duration, u),))

    @property
    def m(self) -> int:
        return self.segments[0].u.size

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    def boundaries(self) -> np.ndarray:
        """End time of each segment"""
        return np.cumsum([s.duration for s in self.segments])

    def segment_index(self, t: float) -> int:
        """Index of the segment active at time t (segments are closed on the right)"""
        ends = self.boundaries()
        idx = int(np.searchsorted(ends, t, side="left"))
        return min(idx, len(self.segments) - 1)

    def control_at(self, t: float) -> np.ndarray:
        return self.segments[self.segment_index(t)].u


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    points: Tuple[GroupElement, ...]
    method_tag: str

    def __post_init__(self):
        times = np.array(self.times, dtype=float).ravel()
        points = tuple(self.points)
        if times.size == 0 or times.size != len(points):
            raise ModelError("trajectory needs equally many (at least one) times and points")
        if times[0] != 0.0:
            raise ModelError("trajectory times must start at 0")
        if np.any(np.diff(times) <= 0.0):
            raise ModelError("trajectory times must be strictly increasing")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def endpoint(self) -> GroupElement:
        return self.points[-1]


class LeibnizViolation(NamedTuple):
    i: int
    j: int
    residual: float


def derivation_from_inner(model: LieGroupModel, x: AlgebraElement) -> Derivation:
    """D = ad(X); column j holds the coordinates of [X, b_j]"""
    if x.model is not model:
        raise ModelError("inner generator belongs to a different model")
    return Derivation(model, model.ad_matrix(x.coords), inner_generator=x)


def validate_derivation(d: Derivation) -> List[LeibnizViolation]:
    """
    Check D[b_i, b_j] = [D b_i, b_j] + [b_i, D b_j] on every basis pair.
    Returns one record per failing pair (zero-based indices); empty when valid.
    """
    c = d.model.structure_constants
    m = d.matrix
    tol = settings.get("leibniz_tol") * max(1.0, float(np.max(np.abs(m))))
    violations = []
    for i in range(d.model.dim):
        for j in range(i + 1, d.model.dim):
            lhs = m @ c[:, i, j]
            rhs = c[:, :, j] @ m[:, i] + c[:, i, :] @ m[:, j]
            residual = float(np.linalg.norm(lhs - rhs))
            if residual > tol:
                violations.append(LeibnizViolation(i, j, residual))
    return violations


# --- algebra class diagnostics ---

def _bracket_span(model: LieGroupModel, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    products = [model.bracket_coords(a, b) for a in left for b in right]
    if not products:
        return np.zeros((0, model.dim))
    basis = span_union(products)
    return basis if basis.size else np.zeros((0, model.dim))


def derived_series_dims(model: LieGroupModel) -> List[int]:
    """Dimensions of g, [g,g], [[g,g],[g,g]], ... until they stabilize"""
    current = np.eye(model.dim)
    dims = [model.dim]
    while True:
        current = _bracket_span(model, current, current)
        if current.shape[0] == dims[-1]:
            return dims
        dims.append(current.shape[0])
        if current.shape[0] == 0:
            return dims


def lower_central_series_dims(model: LieGroupModel) -> List[int]:
    """Dimensions of g, [g,g], [g,[g,g]], ... until they stabilize"""
    full = np.eye(model.dim)
    current = full
    dims = [model.dim]
    while True:
        current = _bracket_span(model, full, current)
        if current.shape[0] == dims[-1]:
            return dims
        dims.append(current.shape[0])
        if current.shape[0] == 0:
            return dims


def killing_form_rank(model: LieGroupModel) -> int:
    ads = [model.structure_constants[:, i, :] for i in range(model.dim)]
    killing = np.array([[np.trace(a @ b) for b in ads] for a in ads])
    scale = max(1.0, float(np.max(np.abs(killing))))
    return int(np.linalg.matrix_rank(killing, tol=settings.get("rank_tol") * scale))


def algebra_class_flags(model: LieGroupModel) -> Dict[str, bool]:
    """nilpotent / solvable / semisimple, computed from the structure constants"""
    return {
        "nilpotent": lower_central_series_dims(model)[-1] == 0,
        "solvable": derived_series_dims(model)[-1] == 0,
        "semisimple": killing_form_rank(model) == model.dim,
    }


# --- JSON documents ---

def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModelError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ModelError(f"{where}: expected a finite number, got {value!r}")
    return float(value)


def _vector(value, length: Optional[int], where: str, allow_infinite: bool = False) -> np.ndarray:
    if not isinstance(value, list):
        raise ModelError(f"{where}: expected a list of numbers")
    if length is not None and len(value) != length:
        raise ModelError(f"{where}: expected {length} entries, got {len(value)}")
    out = []
    for k, v in enumerate(value):
        if allow_infinite and v is None:
            out.append(math.inf if "max" in where else -math.inf)
            continue
        out.append(_number(v, f"{where}[{k}]"))
    return np.array(out, dtype=float)


def _matrix(value, size: int, where: str) -> np.ndarray:
    if not isinstance(value, list) or len(value) != size:
        raise ModelError(f"{where}: expected {size} rows")
    return np.array([_vector(row, size, f"{where} row {r}") for r, row in enumerate(value)])


def load_system(json_text: str) -> Tuple[LinearControlSystem, PiecewiseControl]:
    """Parse and validate a system document"""
    from .catalog import resolve_group

    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as e:
        raise ModelError(f"system document is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ModelError("system document must be a JSON object")
    unknown = set(doc) - _DOC_KEYS - _DOC_EXTRA_KEYS
    if unknown:
        raise ModelError(f"unknown keys in system document: {sorted(unknown)}")
    for key in ("group", "derivation", "control_fields", "control"):
        if key not in doc:
            raise ModelError(f"system document is missing '{key}'")

    model = resolve_group(doc["group"])
    dim = model.dim

    entry = doc["derivation"]
    if not isinstance(entry, dict) or len(entry) != 1 or not ({"inner", "matrix"} & set(entry)):
        raise ModelError("derivation must be {\"inner\": [...]} or {\"matrix\": [[...]]}")
    if "inner" in entry:
        x = AlgebraElement(model, _vector(entry["inner"], dim, "derivation.inner"))
        derivation = derivation_from_inner(model, x)
    else:
        derivation = Derivation(model, _matrix(entry["matrix"], dim, "derivation.matrix"))
        violations = validate_derivation(derivation)
        if violations:
            first = violations[0]
            raise ModelError(
                f"derivation matrix fails the Leibniz rule on {len(violations)} basis pair(s), "
                f"first at ({first.i}, {first.j}) with residual {first.residual:.3e}"
            )

    fields_doc = doc["control_fields"]
    if not isinstance(fields_doc, list) or not fields_doc:
        raise ModelError("control_fields must be a non-empty list")
    fields = tuple(AlgebraElement(model, _vector(y, dim, f"control_fields[{k}]"))
                   for k, y in enumerate(fields_doc))
    m = len(fields)

    control_range = None
    if "control_range" in doc:
        rng = doc["control_range"]
        if not isinstance(rng, dict) or set(rng) != {"min", "max"}:
            raise ModelError("control_range must be {\"min\": [...], \"max\": [...]}")
        control_range = ControlRange(_vector(rng["min"], m, "control_range.min", allow_infinite=True),
                                     _vector(rng["max"], m, "control_range.max", allow_infinite=True))

    initial = None
    if "initial" in doc:
        init = doc["initial"]
        if not isinstance(init, dict) or set(init) != {"exp"}:
            raise ModelError("initial must be {\"exp\": [...]}")
        initial = AlgebraElement(model, _vector(init["exp"], dim, "initial.exp"))

    control_doc = doc["control"]
    if not isinstance(control_doc, list) or not control_doc:
        raise ModelError("control must be a non-empty list of segments")
    segments = []
    for k, seg in enumerate(control_doc):
        if not isinstance(seg, dict) or set(seg) != {"duration", "u"}:
            raise ModelError(f"control[{k}] must be {{\"duration\": t, \"u\": [...]}}")
        u = _vector(seg["u"], m, f"control[{k}].u")
        if control_range is not None and not control_range.contains(u):
            raise ModelError(f"control[{k}].u lies outside control_range")
        segments.append(Segment(_number(seg["duration"], f"control[{k}].duration"), u))

    system = LinearControlSystem(model, derivation, fields, control_range, initial)
    logger.info("loaded %s system with %d control field(s), %d segment(s)", model.name, m, len(segments))
    return system, PiecewiseControl(tuple(segments))


def _bound_list(values: np.ndarray) -> List[Optional[float]]:
    return [float(v) if math.isfinite(v) else None for v in values]


def emit_system(system: LinearControlSystem, control: PiecewiseControl) -> str:
    """Serialize a system and its control back into the document format"""
    d = system.derivation
    doc: Dict[str, Any] = {"group": system.model.descriptor}
    if d.is_inner:
        doc["derivation"] = {"inner": d.inner_generator.coords.tolist()}
    else:
        doc["derivation"] = {"matrix": d.matrix.tolist()}
    doc["control_fields"] = [y.coords.tolist() for y in system.control_fields]
    if system.control_range is not None:
        doc["control_range"] = {"min": _bound_list(system.control_range.lower),
                                "max": _bound_list(system.control_range.upper)}
    if system.initial is not None:
        doc["initial"] = {"exp": system.initial.coords.tolist()}
    doc["control"] = [{"duration": s.duration, "u": s.u.tolist()} for s in control.segments]
    return json.dumps(doc, indent=2)
