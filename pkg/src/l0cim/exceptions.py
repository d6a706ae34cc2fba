class DivergenceError(FloatingPointError):
    """A solver state became non-finite or left its allowed range."""

    def __init__(self, message: str, index: int | None = None, step: int | None = None):
        super().__init__(message)
        self.index = index
        self.step = step


class SingularDiagonalError(ZeroDivisionError):
    def __init__(self, index: int):
        super().__init__(f"zero diagonal entry in Jacobi system at index {index}")
        self.index = index


class ConfigError(ValueError):
    pass
