"""Builders shared by the test modules."""
import os

import numpy as np

from engine import catalog
from engine.models import (
    AlgebraElement, Derivation, GroupElement, LinearControlSystem, PiecewiseControl, Segment,
    derivation_from_inner,
)

SYSTEMS_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "data", "systems")

INNER_MODELS = {
    "sl2": catalog.sl2_model,
    "su2": catalog.su2_model,
    "so3": catalog.so3_model,
    "so21": catalog.so21_model,
    "gl_plus2": lambda: catalog.gl_plus_model(2),
}


def fixture_path(name: str) -> str:
    return os.path.join(SYSTEMS_DIR, name)


def fixture_text(name: str) -> str:
    with open(fixture_path(name), "r", encoding="utf-8") as f:
        return f.read()


def random_coords(model, rng, scale: float = 1.0) -> np.ndarray:
    """Coordinates whose matrix has Frobenius norm at most `scale`"""
    c = rng.uniform(-1.0, 1.0, model.dim)
    norm = np.linalg.norm(model.to_matrix(c))
    return c * (scale * rng.uniform(0.2, 1.0) / max(norm, 1e-12))


def random_group_element(model, rng, scale: float = 1.0) -> GroupElement:
    return GroupElement(model, model.exp(model.to_matrix(random_coords(model, rng, scale))))


def random_inner_system(model, rng, m: int = 1) -> LinearControlSystem:
    x = AlgebraElement(model, random_coords(model, rng))
    fields = tuple(AlgebraElement(model, random_coords(model, rng)) for _ in range(m))
    return LinearControlSystem(model, derivation_from_inner(model, x), fields)


def heisenberg_derivation(a11, a12, a21, a22, a31=0.0, a32=0.0) -> Derivation:
    d = np.array([[a11, a12, 0.0], [a21, a22, 0.0], [a31, a32, a11 + a22]])
    return Derivation(catalog.heisenberg_model(), d)


def heisenberg_system(derivation: Derivation, fields) -> LinearControlSystem:
    model = catalog.heisenberg_model()
    return LinearControlSystem(model, derivation, tuple(AlgebraElement(model, y) for y in fields))


def constant_control(u, duration: float) -> PiecewiseControl:
    return PiecewiseControl((Segment(duration, np.atleast_1d(np.asarray(u, dtype=float))),))


def random_control(rng, m: int, segments: int = 3, max_duration: float = 0.5) -> PiecewiseControl:
    return PiecewiseControl(tuple(
        Segment(rng.uniform(0.1, max_duration), rng.uniform(-1.0, 1.0, m)) for _ in range(segments)
    ))
