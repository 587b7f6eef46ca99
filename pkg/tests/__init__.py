"""
Tests Package

Test Modules:
    test_settings: tolerance loading and cache behaviour
    test_matcore: expm, unipotent log, eigenvalues, spans
    test_models: value types, derivations, algebra series, documents
    test_catalog: group models and closed-form exponentials
    test_flows: automorphism flows, solvers, oracle, residual, CSV
    test_controllability: a, h, eigensplit, verdicts
    test_cli: simulate / converge / check end to end
    test_fixtures: every shipped system document against its expected block
"""

# Test configuration
import os
import sys

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

__all__ = []
