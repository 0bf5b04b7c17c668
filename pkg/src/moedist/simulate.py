"""Two-class regression data sets used by the demos and acceptance tests.

Every scenario draws ``x ~ uniform(0, 10)`` for ``2 n`` rows; the first
``n`` rows belong to class 1 and the rest to class 2.

``npreg``
    class 1: ``5 x + 3 e``; class 2: ``40 - (x - 5)^2 + 3 e``.
``hetero``
    as ``npreg`` but the class 1 noise has sd ``3 exp(-1 + x / 5)``.
``zeroinf``
    class 1 as in ``hetero``; class 2 is identically zero.
"""
from __future__ import annotations

import numpy as np

from .exceptions import SpecError

SCENARIOS = ("npreg", "hetero", "zeroinf")


def hetero_sd(x):
    """Noise standard deviation of the heteroscedastic class."""
    return 3.0 * np.exp(-1.0 + np.asarray(x, dtype=float) / 5.0)


def simulate(scenario: str, n: int, seed: int = 0) -> dict[str, np.ndarray]:
    """Simulate ``n`` rows per class.

    Returns
    -------
    dict
        Columns ``x``, ``xsq``, ``yn`` and ``true_class`` (1 or 2).
    """
    if scenario not in SCENARIOS:
        raise SpecError(f"unknown scenario {scenario!r}; choose from {', '.join(SCENARIOS)}")
    n = int(n)
    if n < 2:
        raise SpecError("n must be >= 2")
    rng = np.random.default_rng(int(seed))
    x = rng.uniform(0.0, 10.0, 2 * n)
    eps = rng.standard_normal(2 * n)
    x1, x2 = x[:n], x[n:]
    sd1 = 3.0 if scenario == "npreg" else hetero_sd(x1)
    y1 = 5.0 * x1 + sd1 * eps[:n]
    if scenario == "zeroinf":
        y2 = np.zeros(n)
    else:
        y2 = 40.0 - (x2 - 5.0) ** 2 + 3.0 * eps[n:]
    return {
        "x": x,
        "xsq": x * x,
        "yn": np.concatenate([y1, y2]),
        "true_class": np.repeat([1, 2], n),
    }
