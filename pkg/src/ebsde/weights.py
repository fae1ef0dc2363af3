"""Growth weight functions rho defining the weighted sup-norm.

Two families, both radial, increasing in |x| and >= 1 everywhere:

    exponential:  rho(x) = exp(alpha |x|)
    polynomial:   rho(x) = (1 + alpha |x|)^beta      (beta >= 1)

The exponential family is only admissible for contraction bounds when
C_A = 1; the polynomial family works for any C_A.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EXPONENTIAL = "exponential"
POLYNOMIAL = "polynomial"


@dataclass(frozen=True)
class WeightFunction:
    kind: str
    alpha: float
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in (EXPONENTIAL, POLYNOMIAL):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.kind == POLYNOMIAL and self.beta < 1:
            raise ValueError("beta must be >= 1 for the polynomial weight")

    def __call__(self, x):
        """Evaluate rho at points x of shape (d,) or (m, d)."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(np.atleast_2d(x), axis=-1)
        if self.kind == EXPONENTIAL:
            out = np.exp(self.alpha * r)
        else:
            out = (1.0 + self.alpha * r) ** self.beta
        return float(out[0]) if x.ndim == 1 else out
