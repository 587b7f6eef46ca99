"""
Solutions of linear control systems dg/dt = X(g) + sum_j u_j Y_j g.

Two automorphism-flow backends:
  inner_conjugation   phi_t(g) = e^{tX} g e^{-tX}        (D = ad X)
  exp_log_transport   phi_t(g) = exp(e^{tD} log g)      (nilpotent models)

Solutions from the identity under a constant control are the ordered product
F_0 F_1 ... F_{n-1}, F_i = phi_{i t/n}(exp(t/n W)), whose limit is exact; inner
systems also have exp(t(X + W)) exp(-tX). Piecewise controls are chained by
phi_{t+s}(u, e) = phi_s(u2, e) phi_s(phi_t(u1, e)) and a start point g is
reached through phi_t(u, g) = phi_t(u, e) phi_t(g).

The RK4 oracle integrates the ODE directly in the ambient matrix space and
is kept independent of the product and closed-form code paths.
"""
import csv, logging, math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import settings
from .catalog import CLOSED_FORM_GROUPS, closed_solution_3dim
from .errors import ModelError, NumericalError
from .matcore import Mat, expm, logm_unipotent
from .models import (
    FlowBackend, GroupElement, LinearControlSystem, PiecewiseControl, Trajectory,
)

logger = logging.getLogger(__name__)


def flow_backend_for(system: LinearControlSystem, backend: Optional[FlowBackend] = None) -> FlowBackend:
    """Backend used to evaluate the automorphism flow of `system`"""
    model = system.model
    inner = system.derivation.is_inner
    if backend is None:
        backend = model.flow_backend
        if backend is FlowBackend.INNER_CONJUGATION and not inner and model.nilpotent:
            backend = FlowBackend.EXP_LOG_TRANSPORT
        if backend is FlowBackend.INNER_CONJUGATION and not inner:
            raise ModelError(
                f"no flow backend for {model.name}: the derivation is neither inner "
                "nor on a nilpotent group; supply it as {\"inner\": [...]}"
            )
    if backend is FlowBackend.INNER_CONJUGATION and not inner:
        raise ModelError("inner_conjugation requires a derivation with an inner generator")
    if backend is FlowBackend.EXP_LOG_TRANSPORT and not model.nilpotent:
        raise ModelError(f"exp_log_transport requires a nilpotent model, {model.name} is not")
    return backend


def _flow_matrix(system: LinearControlSystem, t: float, g: Mat, backend: FlowBackend) -> Mat:
    model = system.model
    if t == 0.0:
        return np.array(g)
    if backend is FlowBackend.INNER_CONJUGATION:
        x = system.derivation.inner_generator.matrix
        return model.exp(x, t) @ g @ model.exp(x, -t)
    y = model.coords_of(logm_unipotent(g))
    y_t = expm(system.derivation.matrix, t) @ y
    return model.exp(model.to_matrix(y_t))


def automorphism_flow(system: LinearControlSystem, t: float, g: GroupElement,
                      backend: Optional[FlowBackend] = None) -> GroupElement:
    """phi_t(g) for the drift's one-parameter group of automorphisms"""
    if g.model is not system.model:
        raise ModelError("group element belongs to a different model than the system")
    chosen = flow_backend_for(system, backend)
    return GroupElement(system.model, _flow_matrix(system, float(t), g.matrix, chosen))


def product_formula_solution(system: LinearControlSystem, u, t: float, n: int,
                             backend: Optional[FlowBackend] = None) -> GroupElement:
    """P_n = F_0 F_1 ... F_{n-1}, F_i = phi_{i t/n}(exp(t/n W)); F_0 is leftmost"""
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ModelError(f"product formula needs a positive integer n, got {n!r}")
    n = int(n)
    chosen = flow_backend_for(system, backend)
    model = system.model
    tau = float(t) / n
    step = model.exp(system.control_matrix(u), tau)
    result = model.identity()
    for i in range(n):
        result = result @ _flow_matrix(system, i * tau, step, chosen)
    return GroupElement(model, result)


def inner_closed_form_solution(system: LinearControlSystem, u, t: float) -> GroupElement:
    """
    exp(t(X + W)) exp(-tX). The three-dimensional semisimple groups use
    their closed-form exponentials, every other group the generic expm.
    """
    if system.model.name in CLOSED_FORM_GROUPS:
        return closed_solution_3dim(system, u, t)
    x = system.derivation.inner_generator
    if x is None:
        raise ModelError("closed-form solution requires an inner derivation")
    w = system.control_matrix(u)
    return GroupElement(system.model, expm(x.matrix + w, t) @ expm(x.matrix, -t))


@dataclass(frozen=True)
class SolveMethod:
    kind: str
    param: Optional[int] = None

    KINDS = ("product", "closed", "rk4")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ModelError(f"unknown method {self.kind!r}; expected product:<n>, closed or rk4:<steps>")
        if self.kind == "closed":
            if self.param is not None:
                raise ModelError("method 'closed' takes no parameter")
        elif self.param is None or self.param < 1:
            raise ModelError(f"method '{self.kind}' needs a positive integer parameter")

    @classmethod
    def parse(cls, text: str) -> "SolveMethod":
        kind, sep, value = text.strip().partition(":")
        if not sep:
            return cls(kind)
        try:
            return cls(kind, int(value))
        except ValueError as e:
            raise ModelError(f"bad method parameter in {text!r}") from e

    @property
    def tag(self) -> str:
        return self.kind if self.param is None else f"{self.kind}:{self.param}"


def _vector_field(system: LinearControlSystem, g: Mat, w: Mat, backend: FlowBackend) -> Mat:
    """X(g) + W g; the drift is Xg - gX when inner, else a central difference of the flow"""
    if system.derivation.is_inner:
        x = system.derivation.inner_generator.matrix
        drift = x @ g - g @ x
    else:
        h = settings.get("fd_step")
        drift = (_flow_matrix(system, h, g, backend) - _flow_matrix(system, -h, g, backend)) / (2.0 * h)
    return drift + w @ g


def _rk4_segment(system: LinearControlSystem, w: Mat, g: Mat, duration: float, steps: int,
                 record_every: int, backend: FlowBackend, drift_state: dict) -> List[Tuple[float, Mat]]:
    h = duration / steps
    f = lambda m: _vector_field(system, m, w, backend)
    out = []
    for k in range(1, steps + 1):
        k1 = f(g)
        k2 = f(g + 0.5 * h * k1)
        k3 = f(g + 0.5 * h * k2)
        k4 = f(g + h * k3)
        g = g + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        drift = system.model.constraint(g)
        drift_state["max"] = max(drift_state["max"], drift)
        if drift > settings.get("drift_warning") and not drift_state["warned"]:
            logger.warning("rk4 constraint drift %.3e exceeds %.0e at step %d",
                           drift, settings.get("drift_warning"), k)
            drift_state["warned"] = True
        if k % record_every == 0:
            out.append((k * h if k < steps else duration, g))
    return out


def rk4_oracle(system: LinearControlSystem, control: PiecewiseControl, g0: GroupElement,
               steps_per_unit_time: int) -> Trajectory:
    """Classical RK4 on the ambient ODE from g0, one sample per step"""
    if steps_per_unit_time < settings.get("min_oracle_density"):
        raise NumericalError(
            f"rk4 oracle needs at least {settings.get('min_oracle_density')} steps per unit time, "
            f"got {steps_per_unit_time}"
        )
    if g0.model is not system.model:
        raise ModelError("start point belongs to a different model than the system")
    backend = None if system.derivation.is_inner else flow_backend_for(system)
    times = [0.0]
    points = [g0.matrix]
    t0 = 0.0
    drift_state = {"max": 0.0, "warned": False}
    for seg in control.segments:
        steps = max(1, int(math.ceil(seg.duration * steps_per_unit_time)))
        samples = _rk4_segment(system, system.control_matrix(seg.u), points[-1], seg.duration,
                               steps, 1, backend, drift_state)
        for s, g in samples:
            times.append(t0 + s)
            points.append(g)
        t0 += seg.duration
    logger.debug("rk4 oracle: %d steps, max constraint drift %.3e", len(points) - 1, drift_state["max"])
    tag = f"rk4:{steps_per_unit_time}"
    return Trajectory(np.array(times), tuple(GroupElement(system.model, p, validate=False) for p in points), tag)


def solve_piecewise(system: LinearControlSystem, control: PiecewiseControl, method: SolveMethod,
                    samples_per_segment: int = 1, backend: Optional[FlowBackend] = None) -> Trajectory:
    """Trajectory from the identity, segments chained by the cocycle rule"""
    if samples_per_segment < 1:
        raise ModelError(f"samples_per_segment must be >= 1, got {samples_per_segment}")
    if control.m != system.m:
        raise ModelError(f"control has {control.m} inputs, system has {system.m} fields")
    if method.kind == "closed" and not system.derivation.is_inner:
        raise ModelError("method 'closed' requires an inner derivation")
    if method.kind == "rk4" and method.param < settings.get("min_oracle_density"):
        raise NumericalError(
            f"rk4 needs at least {settings.get('min_oracle_density')} steps per unit time, got {method.param}"
        )
    chosen = flow_backend_for(system, backend)
    model = system.model
    h = model.identity()
    times = [0.0]
    points = [h]
    t0 = 0.0
    drift_state = {"max": 0.0, "warned": False}
    for seg in control.segments:
        if method.kind == "rk4":
            raw = int(math.ceil(seg.duration * method.param / samples_per_segment))
            steps = samples_per_segment * max(1, raw)
            local = _rk4_segment(system, system.control_matrix(seg.u), model.identity(), seg.duration,
                                 steps, steps // samples_per_segment, chosen, drift_state)
        else:
            local = []
            for k in range(1, samples_per_segment + 1):
                s = seg.duration if k == samples_per_segment else seg.duration * k / samples_per_segment
                if method.kind == "product":
                    a = product_formula_solution(system, seg.u, s, method.param, chosen).matrix
                else:
                    a = inner_closed_form_solution(system, seg.u, s).matrix
                local.append((s, a))
        for s, a in local:
            times.append(t0 + s)
            points.append(a @ _flow_matrix(system, s, h, chosen))
        h = points[-1]
        t0 += seg.duration
    validate = method.kind != "rk4"
    logger.info("solved %s system over %d segment(s) with %s", model.name, len(control.segments), method.tag)
    return Trajectory(np.array(times), tuple(GroupElement(model, p, validate=validate) for p in points),
                      method.tag)


def translate_solution(system: LinearControlSystem, traj_at_e: Trajectory, g: GroupElement,
                       backend: Optional[FlowBackend] = None) -> Trajectory:
    """Pointwise phi_t(u, e) phi_t(g)"""
    if g.model is not system.model:
        raise ModelError("start point belongs to a different model than the system")
    first = traj_at_e.points[0].matrix
    if np.max(np.abs(first - system.model.identity())) > settings.get("identity_tol"):
        raise ModelError("translate_solution needs a trajectory that starts at the identity")
    chosen = flow_backend_for(system, backend)
    validate = not traj_at_e.method_tag.startswith("rk4")
    points = tuple(
        GroupElement(system.model, p.matrix @ _flow_matrix(system, t, g.matrix, chosen), validate=validate)
        for t, p in zip(traj_at_e.times, traj_at_e.points)
    )
    return Trajectory(traj_at_e.times, points, traj_at_e.method_tag)


def ode_residual(system: LinearControlSystem, traj: Trajectory, control: PiecewiseControl) -> float:
    """
    Largest mismatch between the central-difference derivative of the sampled
    curve and the right-hand side of the ODE, over interior samples whose
    neighbours lie in the same control segment, divided by the largest
    Frobenius norm along the curve.
    """
    needed = int(settings.get("min_residual_samples"))
    if len(traj) < needed:
        raise ModelError(f"ode_residual needs at least {needed} samples, trajectory has {len(traj)}")
    backend = None if system.derivation.is_inner else flow_backend_for(system)
    mats = [p.matrix for p in traj.points]
    times = traj.times
    scale = max(float(np.linalg.norm(m)) for m in mats)
    worst = 0.0
    for k in range(1, len(mats) - 1):
        left = control.segment_index(0.5 * (times[k - 1] + times[k]))
        right = control.segment_index(0.5 * (times[k] + times[k + 1]))
        if left != right:
            continue
        w = system.control_matrix(control.segments[left].u)
        derivative = (mats[k + 1] - mats[k - 1]) / (times[k + 1] - times[k - 1])
        field = _vector_field(system, mats[k], w, backend)
        worst = max(worst, float(np.linalg.norm(derivative - field)))
    return worst / max(scale, np.finfo(float).tiny)


def trajectory_header(traj: Trajectory) -> List[str]:
    n = traj.points[0].matrix.shape[0]
    cells = [(i, j) for i in range(n) for j in range(n)]
    if np.iscomplexobj(traj.points[0].matrix):
        return ["t"] + [f"m_{i}{j}_{part}" for i, j in cells for part in ("re", "im")]
    return ["t"] + [f"m_{i}{j}" for i, j in cells]


def write_trajectory_csv(traj: Trajectory, out: Union[str, IO[str]]) -> None:
    """One row per sample: t then the row-major matrix, 17 significant digits"""
    fmt = lambda v: format(float(v), ".17g")
    is_complex = np.iscomplexobj(traj.points[0].matrix)

    def rows():
        yield trajectory_header(traj)
        for t, p in zip(traj.times, traj.points):
            flat = p.matrix.ravel()
            if is_complex:
                cells = [fmt(part) for v in flat for part in (v.real, v.imag)]
            else:
                cells = [fmt(v) for v in flat]
            yield [fmt(t)] + cells

    if isinstance(out, str):
        with open(out, "w", newline="", encoding="utf-8") as f:
            csv.writer(f, lineterminator="\n").writerows(rows())
    else:
        csv.writer(out, lineterminator="\n").writerows(rows())


# --- convergence of the product formula ---

def doubling_ladder(n_max: int) -> List[int]:
    """1, 2, 4, ... up to n_max"""
    if n_max < 1:
        raise ModelError(f"n-max must be >= 1, got {n_max}")
    ladder = [1]
    while ladder[-1] * 2 <= n_max:
        ladder.append(ladder[-1] * 2)
    return ladder


def convergence_study(system: LinearControlSystem, control: PiecewiseControl, n_values: Sequence[int],
                      jobs: int = 1) -> Tuple[str, List[Tuple[int, float]]]:
    """
    Frobenius error of the product-formula endpoint for each n against a
    reference: the closed form for inner systems, dense RK4 otherwise.
    Returns (reference tag, [(n, error), ...]).
    """
    if not n_values:
        raise ModelError("convergence study needs at least one n")
    if system.derivation.is_inner:
        reference = solve_piecewise(system, control, SolveMethod("closed")).endpoint.matrix
        tag = "closed"
    else:
        shortest = min(s.duration for s in control.segments)
        density = max(int(settings.get("min_oracle_density")),
                      int(math.ceil(10 * max(n_values) / shortest)))
        start = GroupElement(system.model, system.model.identity())
        reference = rk4_oracle(system, control, start, density).endpoint.matrix
        tag = f"rk4:{density}"

    def error(n: int) -> float:
        approx = solve_piecewise(system, control, SolveMethod("product", int(n))).endpoint.matrix
        return float(np.linalg.norm(approx - reference))

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        errors = list(pool.map(error, n_values))
    logger.info("convergence study over %d value(s) of n against %s", len(n_values), tag)
    return tag, list(zip((int(n) for n in n_values), errors))


def fitted_order(rows: Sequence[Tuple[int, float]], floor: float = 1e-12, min_n: int = 8) -> Optional[float]:
    """Least-squares slope of -log(error) against log(n); None when errors sit at round-off"""
    usable = [(n, e) for n, e in rows if e > floor]
    asymptotic = [(n, e) for n, e in usable if n >= min_n]
    if len(asymptotic) >= 2:
        usable = asymptotic
    if len(usable) < 2:
        return None
    logs_n = np.log([n for n, _ in usable])
    logs_e = np.log([e for _, e in usable])
    slope = np.polyfit(logs_n, logs_e, 1)[0]
    return float(-slope)
