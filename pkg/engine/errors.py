"""
Exception types shared by the engine modules.

ModelError covers anything wrong with the input (schema, group membership,
derivation validity, missing flow backend). NumericalError covers failures
of the numerics themselves (iteration caps, oracle guards, consistency
checks that should never trip).
"""


class ModelError(ValueError):
    """Invalid system, element or request"""


class NumericalError(ArithmeticError):
    """A numerical routine failed or produced an inconsistent result"""
