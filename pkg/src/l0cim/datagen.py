"""Random instances of the linear observation model ``y = A (xi * x) + w``."""

import numpy as np

from .model import ProblemInstance, round_half_away

GENERATOR = "PCG64"
GENERATOR_VERSION = f"numpy-{np.__version__}"


def gen_instance(N: int, alpha: float, a: float, nu: float = 0.0, seed: int = 0) -> ProblemInstance:
    """Gaussian sensing matrix (variance ``1/M``), Gaussian signal, exact support size.

    Draw order from a single PCG64 stream: ``A``, then ``x``, then support
    positions, then noise.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if not 0 <= a <= 1:
        raise ValueError("a must lie in [0, 1]")
    if nu < 0:
        raise ValueError("nu must be non-negative")
    M = max(1, round_half_away(alpha * N))
    K = round_half_away(a * N)
    rng = np.random.Generator(np.random.PCG64(seed))
    A = rng.normal(0.0, 1.0 / np.sqrt(M), size=(M, N))
    x = rng.normal(0.0, 1.0, size=N)
    xi = np.zeros(N)
    xi[rng.choice(N, size=K, replace=False)] = 1.0
    w = rng.normal(0.0, nu, size=M)
    y = A @ (xi * x) + w
    return ProblemInstance(A=A, y=y, x_true=x, xi_true=xi, a=a, alpha=M / N, nu=nu, seed=seed)
