"""
Engine Package - Linear Control Systems on Matrix Lie Groups

Modules:
    matcore: expm, unipotent log, eigenvalues, spans
    models: group models, elements, derivations, systems, JSON documents
    catalog: Heisenberg, abelian R^n, GL(n)+, SL(2), SU(2), SO(3), SO(2,1)
    flows: automorphism flows, product formula, closed forms, RK4 oracle
    controllability: a, h, rank condition, eigensplit, verdicts
    settings: numerical tolerances loaded from data/numerics.json

Features:
    - Exact flows for inner derivations and for nilpotent groups
    - Piecewise-constant controls chained by the cocycle rule
    - Controllability verdicts with per-rule hypothesis trails
"""

from .errors import ModelError, NumericalError
from .models import load_system, emit_system
from .flows import solve_piecewise, SolveMethod
from .controllability import controllability_report

__version__ = "1.0.0"
__all__ = ['ModelError', 'NumericalError', 'load_system', 'emit_system',
           'solve_piecewise', 'SolveMethod', 'controllability_report']
