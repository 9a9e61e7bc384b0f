"""The attenuation factor: the root of ``gamma = (1 - gamma) ** (kappa + 1)``."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class GammaValue:
    kappa: int
    gamma: float

    @property
    def residual(self) -> float:
        return self.gamma - (1.0 - self.gamma) ** (self.kappa + 1)

    def __float__(self) -> float:
        return self.gamma


def gamma_fixed_point(kappa: int, tol: float = 1e-12) -> GammaValue:
    """Unique root in (0, 1) by bisection.

    ``f(g) = g - (1 - g)**(kappa + 1)`` is increasing with ``f(0) = -1`` and
    ``f(1) = 1``, so the bracket always holds.
    """
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    lo, hi = 0.0, 1.0
    e = kappa + 1
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid - (1.0 - mid) ** e < 0:
            lo = mid
        else:
            hi = mid
    return GammaValue(kappa, 0.5 * (lo + hi))
