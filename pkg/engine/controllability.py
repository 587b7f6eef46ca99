"""
Lie-algebraic controllability diagnostics.

Subspaces are orthonormal coordinate bases stored as rows:
  a      the subalgebra generated by the control fields Y_1..Y_m
  D a    span of D^i v for v in a, 0 <= i < dim g (i = 0 included)
  h      the subalgebra generated by D a; it is D-invariant
The eigenvalues of D restricted to h split it into h+ (positive real
part), h0 (zero real part) and h- (negative real part).

The attainable set A(g) is the set of points reached from g in
nonnegative time; A_H and A*_H denote the sets attained from the identity
inside H by the system and by its time-reversed counterpart. They are
named in report trails only and never computed.

Verdicts are evaluated in a fixed order and every rule is recorded with
its hypothesis trail; the first rule that applies decides.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import eigvals

from . import settings
from .errors import ModelError, NumericalError
from .matcore import eigenvalues, projection_residual, span_union
from .models import AlgebraElement, Derivation, LieGroupModel, LinearControlSystem

logger = logging.getLogger(__name__)


class Verdict(str, Enum):
    NOT_CONTROLLABLE_ON_G = "NOT_CONTROLLABLE_ON_G"
    CONTROLLABLE_ON_H = "CONTROLLABLE_ON_H"
    NOT_CONTROLLABLE_ON_H = "NOT_CONTROLLABLE_ON_H"
    INCONCLUSIVE = "INCONCLUSIVE"


def _as_rows(vectors, dim: int) -> List[np.ndarray]:
    rows = []
    for v in vectors:
        c = v.coords if isinstance(v, AlgebraElement) else np.asarray(v, dtype=float).ravel()
        if c.size != dim:
            raise ModelError(f"expected coordinate vectors of length {dim}, got {c.size}")
        rows.append(c)
    return rows


def _span(vectors: Sequence[np.ndarray], dim: int) -> np.ndarray:
    if not len(vectors):
        return np.zeros((0, dim))
    basis = span_union(vectors)
    return basis if basis.shape[0] else np.zeros((0, dim))


def _closure(model: LieGroupModel, rows: Sequence[np.ndarray]) -> np.ndarray:
    basis = _span(rows, model.dim)
    for _ in range(model.dim + 1):
        products = [model.bracket_coords(basis[i], basis[j])
                    for i in range(basis.shape[0]) for j in range(i + 1, basis.shape[0])]
        if products:
            # brackets of unit rows can be far longer than the rows themselves
            largest = max(float(np.linalg.norm(p)) for p in products)
            products = [p / max(1.0, largest) for p in products]
        grown = _span(list(basis) + products, model.dim)
        if grown.shape[0] == basis.shape[0]:
            return grown
        basis = grown
    raise NumericalError("bracket closure failed to stabilize")


def bracket_closure(model: LieGroupModel, generators: Sequence[Union[AlgebraElement, np.ndarray]]) -> np.ndarray:
    """Orthonormal basis of the smallest subalgebra containing the generators"""
    if not len(generators):
        raise ModelError("bracket_closure needs at least one generator")
    return _closure(model, _as_rows(generators, model.dim))


def _derivation_matrix(d: Union[Derivation, np.ndarray]) -> np.ndarray:
    return d.matrix if isinstance(d, Derivation) else np.asarray(d, dtype=float)


def d_orbit(d: Union[Derivation, np.ndarray], subspace_basis: np.ndarray) -> np.ndarray:
    """
    span{D^i v : v in the subspace, 0 <= i < dim}, grown one application of
    D/|D| at a time on an orthonormal basis.
    """
    m = _derivation_matrix(d)
    dim = m.shape[0]
    basis = _span(list(np.asarray(subspace_basis, dtype=float).reshape(-1, dim)), dim)
    scale = max(1.0, float(np.linalg.norm(m, 2)))
    for _ in range(dim):
        grown = _span(list(basis) + [m @ v / scale for v in basis], dim)
        if grown.shape[0] == basis.shape[0]:
            return grown
        basis = grown
    return basis


def compute_a(system: LinearControlSystem) -> np.ndarray:
    return _closure(system.model, _as_rows(system.control_fields, system.model.dim))


def compute_h(system: LinearControlSystem) -> np.ndarray:
    """Subalgebra generated by the D-orbit of a"""
    return _closure(system.model, list(d_orbit(system.derivation, compute_a(system))))


def rank_condition(system: LinearControlSystem) -> bool:
    return compute_h(system).shape[0] == system.model.dim


def is_D_invariant(d: Union[Derivation, np.ndarray], subspace_basis: np.ndarray) -> bool:
    m = _derivation_matrix(d)
    basis = np.asarray(subspace_basis, dtype=float).reshape(-1, m.shape[0])
    tol = settings.get("rank_tol") * max(1.0, float(np.linalg.norm(m, 2)))
    return all(projection_residual(basis, m @ v) <= tol for v in basis)


def _contains(big: np.ndarray, small: np.ndarray) -> bool:
    tol = settings.get("rank_tol") * max(1, big.shape[1])
    return all(projection_residual(big, v) <= tol for v in small)


def _restriction(d, basis: np.ndarray) -> np.ndarray:
    return basis @ _derivation_matrix(d) @ basis.T


def _defect_clusters(values: np.ndarray, scale: float) -> List[List[int]]:
    """
    Group eigenvalues that may come from one perturbed Jordan block. A block
    of size m moved by a relative perturbation eps scatters its eigenvalues on
    a circle of radius about scale * eps^(1/m); any m eigenvalues that fit in
    such a disc are merged.
    """
    k = len(values)
    parent = list(range(k))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    eps = 16.0 * k * np.finfo(float).eps
    distance = np.abs(values[:, None] - values[None, :])
    for m in range(2, k + 1):
        radius = 2.0 * scale * eps ** (1.0 / m)
        for i in range(k):
            ball = np.flatnonzero(distance[i] <= radius)
            if ball.size >= m:
                for j in ball:
                    parent[find(int(j))] = find(i)
    clusters: Dict[int, List[int]] = {}
    for i in range(k):
        clusters.setdefault(find(i), []).append(i)
    return list(clusters.values())


def eigensplit(d: Union[Derivation, np.ndarray], h_basis: np.ndarray) -> Tuple[int, int, int]:
    """
    (dim h+, dim h0, dim h-) of D restricted to h.

    Eigenvalues are clustered first (see _defect_clusters) and every cluster
    is classified by its mean real part, which stays accurate when the
    individual eigenvalues of a defective block do not.
    """
    basis = np.asarray(h_basis, dtype=float).reshape(-1, _derivation_matrix(d).shape[0])
    if basis.shape[0] == 0:
        return 0, 0, 0
    if not is_D_invariant(d, basis):
        raise NumericalError("subspace is not D-invariant; cannot restrict the derivation")
    r = _restriction(d, basis)
    scale = float(np.linalg.norm(r, 2))
    if scale == 0.0:
        return 0, r.shape[0], 0
    values = eigvals(r)
    band = settings.get("zero_real_band") * max(1.0, scale)
    plus = zero = minus = 0
    for cluster in _defect_clusters(values, scale):
        real_part = float(np.mean(values[cluster].real))
        if real_part > band:
            plus += len(cluster)
        elif real_part < -band:
            minus += len(cluster)
        else:
            zero += len(cluster)
    return plus, zero, minus


def restricted_spectrum(d: Union[Derivation, np.ndarray], h_basis: np.ndarray) -> List[complex]:
    basis = np.asarray(h_basis, dtype=float).reshape(-1, _derivation_matrix(d).shape[0])
    if basis.shape[0] == 0:
        return []
    return eigenvalues(_restriction(d, basis))


@dataclass(frozen=True)
class RuleOutcome:
    rule: str
    theorem: str
    applies: bool
    verdict: Verdict
    trail: Tuple[str, ...]


@dataclass(frozen=True, eq=False)
class ControllabilityReport:
    """
    Findings for one system. `verdicts` holds every rule in evaluation order;
    the decisive one is the first with applies=True. When dim_h == dim_g the
    "on H" verdicts concern the whole group G.
    """
    a_basis: np.ndarray
    h_basis: np.ndarray
    dim_a: int
    dim_h: int
    dim_g: int
    rank_condition: bool
    a_is_D_invariant: bool
    split_dims: Tuple[int, int, int]
    h_spectrum: Tuple[complex, ...]
    verdicts: Tuple[RuleOutcome, ...]

    def __post_init__(self):
        if not (self.dim_a <= self.dim_h <= self.dim_g):
            raise NumericalError(f"inconsistent dimensions a={self.dim_a}, h={self.dim_h}, g={self.dim_g}")
        if sum(self.split_dims) != self.dim_h:
            raise NumericalError(f"eigensplit {self.split_dims} does not add up to dim h = {self.dim_h}")
        if self.rank_condition != (self.dim_h == self.dim_g):
            raise NumericalError("rank condition disagrees with dim h")

    @property
    def decisive(self) -> RuleOutcome:
        return next(v for v in self.verdicts if v.applies)

    @property
    def verdict(self) -> Verdict:
        return self.decisive.verdict

    @property
    def scope(self) -> str:
        return "G" if self.dim_h == self.dim_g else "H"


def _mark(ok: bool) -> str:
    return "✓" if ok else "✗"


def _rule_dimension(dim_h: int, dim_g: int) -> Tuple[bool, Tuple[str, ...]]:
    applies = dim_h < dim_g
    relation = "<" if applies else "="
    return applies, (f"{_mark(applies)} dim h = {dim_h} {relation} dim g = {dim_g}",
                     "H is a proper subgroup, so A(e) stays inside H" if applies
                     else "rank condition holds (h = g)")


def _rule_invariant(a_inv: bool, dim_a: int, dim_h: int) -> Tuple[bool, Tuple[str, ...]]:
    return a_inv, (f"{_mark(a_inv)} a is D-invariant",
                   f"{_mark(dim_a == dim_h)} a = h (dim a = {dim_a}, dim h = {dim_h})")


def _rule_solvable(solvable: bool, split: Tuple[int, int, int], dim_h: int) -> Tuple[bool, Tuple[str, ...]]:
    central = split == (0, dim_h, 0)
    return solvable and central, (f"{_mark(solvable)} group is solvable",
                                  f"{_mark(central)} D|h has only eigenvalues with zero real part "
                                  f"(split +{split[0]} / 0:{split[1]} / -{split[2]})")


def _rule_nilpotent(nilpotent: bool, bounded: bool, split, dim_h: int) -> Tuple[bool, Verdict, Tuple[str, ...]]:
    applies = nilpotent and bounded
    central = split == (0, dim_h, 0)
    verdict = Verdict.CONTROLLABLE_ON_H if central else Verdict.NOT_CONTROLLABLE_ON_H
    return applies, verdict, (f"{_mark(nilpotent)} group is nilpotent",
                              f"{_mark(bounded)} control range is bounded",
                              f"{_mark(central)} H = H0 (split +{split[0]} / 0:{split[1]} / -{split[2]})")


def controllability_report(system: LinearControlSystem) -> ControllabilityReport:
    model = system.model
    d = system.derivation
    a = compute_a(system)
    h = _closure(model, list(d_orbit(d, a)))
    if not is_D_invariant(d, h):
        raise NumericalError("computed h is not D-invariant")
    if not _contains(h, a):
        raise NumericalError("computed h does not contain a")
    a_inv = is_D_invariant(d, a)
    split = eigensplit(d, h)
    spectrum = tuple(restricted_spectrum(d, h))
    dim_a, dim_h, dim_g = a.shape[0], h.shape[0], model.dim
    bounded = system.control_range is not None and system.control_range.bounded

    outcomes = []
    applies, trail = _rule_dimension(dim_h, dim_g)
    outcomes.append(RuleOutcome("a", "proper subgroup H obstructs controllability", applies,
                                Verdict.NOT_CONTROLLABLE_ON_G, trail))
    applies, trail = _rule_invariant(a_inv, dim_a, dim_h)
    if applies and model.name.startswith("gl_plus") and d.is_inner:
        trail += ("span{B_j} is invariant under ad(A)",)
    outcomes.append(RuleOutcome("b", "D-invariant a gives controllability on H", applies,
                                Verdict.CONTROLLABLE_ON_H, trail))
    applies, trail = _rule_solvable(model.solvable, split, dim_h)
    outcomes.append(RuleOutcome("c", "solvable group with D|h spectrum on the imaginary axis", applies,
                                Verdict.CONTROLLABLE_ON_H, trail))
    applies, verdict, trail = _rule_nilpotent(model.nilpotent, bounded, split, dim_h)
    outcomes.append(RuleOutcome("d", "nilpotent group, bounded controls: controllable on H iff H = H0",
                                applies, verdict, trail))
    outcomes.append(RuleOutcome("e", "no applicable criterion", True, Verdict.INCONCLUSIVE,
                                ("no earlier rule applies",)))

    report = ControllabilityReport(a, h, dim_a, dim_h, dim_g, dim_h == dim_g, a_inv, split,
                                   spectrum, tuple(outcomes))
    logger.info("%s system: dim a=%d, dim h=%d, dim g=%d, verdict %s", model.name, dim_a, dim_h, dim_g,
                report.verdict.value)
    return report


def report_to_dict(report: ControllabilityReport) -> Dict:
    """JSON-ready form of a report"""
    plus, zero, minus = report.split_dims
    return {
        "a_basis": report.a_basis.tolist(),
        "h_basis": report.h_basis.tolist(),
        "dim_a": report.dim_a,
        "dim_h": report.dim_h,
        "dim_g": report.dim_g,
        "rank_condition": report.rank_condition,
        "a_is_D_invariant": report.a_is_D_invariant,
        "split_dims": {"plus": plus, "zero": zero, "minus": minus},
        "h_spectrum": [[v.real, v.imag] for v in report.h_spectrum],
        "verdict": report.verdict.value,
        "scope": report.scope,
        "rules": [
            {"rule": v.rule, "theorem": v.theorem, "applies": v.applies,
             "conclusion": v.verdict.value, "trail": list(v.trail)}
            for v in report.verdicts
        ],
    }


def _format_eigenvalue(v: complex) -> str:
    if v.imag == 0.0:
        return f"{v.real:.6g}"
    sign = "+" if v.imag > 0 else "-"
    return f"{v.real:.6g}{sign}{abs(v.imag):.6g}i"


def render_report(report: ControllabilityReport) -> str:
    plus, zero, minus = report.split_dims
    lines = [
        f"dim a = {report.dim_a}, dim h = {report.dim_h}, dim g = {report.dim_g}",
        f"rank condition: {_mark(report.rank_condition)}",
        f"a is D-invariant: {_mark(report.a_is_D_invariant)}",
        f"eigensplit of h: +{plus} / 0:{zero} / -{minus}",
        "spectrum of D|h: " + (", ".join(_format_eigenvalue(v) for v in report.h_spectrum) or "(empty)"),
        "rules:",
    ]
    decisive = report.decisive
    for v in report.verdicts:
        marker = "->" if v is decisive else "  "
        lines.append(f" {marker} ({v.rule}) {_mark(v.applies)} {v.theorem}")
        lines.extend(f"        {step}" for step in v.trail)
    lines.append(f"verdict: {report.verdict.value} (scope {report.scope})")
    return "\n".join(lines)


def check_individual_rules(system: LinearControlSystem) -> Dict[str, bool]:
    """Which verdict rules apply, by rule letter"""
    return {v.rule: v.applies for v in controllability_report(system).verdicts}
