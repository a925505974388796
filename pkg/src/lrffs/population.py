"""Exact population functionals for piecewise-uniform class-conditional laws.

A population has R classes and K unit-width bins ``[k, k+1)``. Class ``r``
puts mass ``bin_probs[r, k]`` on bin ``k``, spread uniformly. Every CDF is
then piecewise linear and every expectation of a product of CDFs is a sum
of polynomial integrals over ``[0, 1]``, so the functionals below are exact
up to float rounding. Continuity matters: identities such as
``E_{Y=r} F_{Y=r}(X) = 1/2`` fail for atoms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P


@dataclass(frozen=True, eq=False)
class PiecewisePopulation:
    bin_probs: np.ndarray  # R x K, rows sum to 1
    class_probs: np.ndarray  # R, sums to 1

    def __post_init__(self):
        B = np.asarray(self.bin_probs, dtype=np.float64)
        pi = np.asarray(self.class_probs, dtype=np.float64)
        if B.ndim != 2 or pi.shape != (B.shape[0],):
            raise ValueError("bin_probs must be R x K and class_probs length R")
        if np.any(B < 0) or not np.allclose(B.sum(axis=1), 1.0):
            raise ValueError("each class needs a probability vector over bins")
        if np.any(pi < 0) or not np.isclose(pi.sum(), 1.0):
            raise ValueError("class_probs must be a probability vector")
        object.__setattr__(self, "bin_probs", B)
        object.__setattr__(self, "class_probs", pi)

    @property
    def R(self) -> int:
        return self.bin_probs.shape[0]

    @property
    def K(self) -> int:
        return self.bin_probs.shape[1]

    def with_class_probs(self, class_probs) -> "PiecewisePopulation":
        return PiecewisePopulation(self.bin_probs, class_probs)

    # -- building blocks --------------------------------------------------

    def mixture_bins(self, weights) -> np.ndarray:
        """Bin masses of the class mixture with (unnormalised) ``weights``."""
        w = np.asarray(weights, dtype=np.float64)
        tot = w.sum()
        if tot <= 0:
            raise ValueError("mixture weights must have positive total")
        return (w / tot) @ self.bin_probs

    def cdf_pieces(self, weights) -> np.ndarray:
        """Per-bin linear CDF coefficients ``[C_k, P_k]`` so ``F = C_k + P_k t``."""
        mass = self.mixture_bins(weights)
        start = np.concatenate([[0.0], np.cumsum(mass)[:-1]])
        return np.stack([start, mass], axis=1)

    def class_weights(self, r: int) -> np.ndarray:
        w = np.zeros(self.R)
        w[r] = 1.0
        return w

    def complement_weights(self, r: int) -> np.ndarray:
        w = self.class_probs.copy()
        w[r] = 0.0
        return w

    def expect(self, measure_weights, poly_pieces) -> float:
        """``E[g(X)]`` under a class mixture; ``poly_pieces[k]`` is g on bin k in t."""
        mass = self.mixture_bins(measure_weights)
        total = 0.0
        for k in range(self.K):
            if mass[k] == 0.0:
                continue
            integral = P.polyval(1.0, P.polyint(poly_pieces[k])) - P.polyval(
                0.0, P.polyint(poly_pieces[k])
            )
            total += mass[k] * integral
        return float(total)

    def product(self, factors) -> list[np.ndarray]:
        """Piecewise product of CDFs; ``factors`` is a list of (weights, power)."""
        pieces = [np.array([1.0]) for _ in range(self.K)]
        for weights, power in factors:
            lin = self.cdf_pieces(weights)
            for k in range(self.K):
                for _ in range(power):
                    pieces[k] = P.polymul(pieces[k], lin[k])
        return pieces

    # -- named functionals --------------------------------------------------

    def gamma(self, r: int) -> float:
        """``E_{Y=r} F_{Y!=r}(X)``."""
        return self.expect(
            self.class_weights(r), self.product([(self.complement_weights(r), 1)])
        )

    def pair_gamma(self, r: int, k: int) -> float:
        """``E_{Y=r} F_{Y=k}(X)``."""
        return self.expect(self.class_weights(r), self.product([(self.class_weights(k), 1)]))

    def gamma_dd1(self, r: int, d: int, d1: int) -> float:
        """``E_{Y=r}[F_{Y!=r}^d1 F_{Y=r}^(d-d1)]``."""
        pieces = self.product(
            [(self.complement_weights(r), d1), (self.class_weights(r), d - d1)]
        )
        return self.expect(self.class_weights(r), pieces)

    def difference_moment(self, r: int, d: int, under: str = "r") -> float:
        """``E[(F_{Y!=r} - F_{Y=r})^d]`` under ``Y = r`` (``under='r'``) or ``Y != r``."""
        g = self.cdf_pieces(self.complement_weights(r))
        f = self.cdf_pieces(self.class_weights(r))
        pieces = [P.polypow(g[k] - f[k], d) for k in range(self.K)]
        measure = self.class_weights(r) if under == "r" else self.complement_weights(r)
        return self.expect(measure, pieces)

    def omega(self, r: int, d: int = 1) -> float:
        return abs(self.difference_moment(r, d))

    def omega_matrix(self, d: int = 1) -> np.ndarray:
        return np.array([self.omega(r, d) for r in range(self.R)])

    def cru_original(self) -> float:
        """``sum_r (E[F(X) I(Y=r)] - pi_r / 2)^2``."""
        pi = self.class_probs
        total = 0.0
        for r in range(self.R):
            e = pi[r] * self.expect(self.class_weights(r), self.product([(pi, 1)]))
            total += (e - pi[r] / 2) ** 2
        return total

    def cavs_tau(self, r: int) -> float:
        """``E(F(X) | Y=r) - 1/2``."""
        pi = self.class_probs
        return self.expect(self.class_weights(r), self.product([(pi, 1)])) - 0.5

    def mv_original(self) -> float:
        """``sum_r pi_r int (F_r - F)^2 dF``."""
        pi = self.class_probs
        total = 0.0
        fr_all = self.cdf_pieces(pi)
        for r in range(self.R):
            fr = self.cdf_pieces(self.class_weights(r))
            pieces = [P.polypow(fr[k] - fr_all[k], 2) for k in range(self.K)]
            total += pi[r] * self.expect(pi, pieces)
        return total

    # -- expected client uploads ------------------------------------------

    def expected_first_order(self) -> tuple[np.ndarray, np.ndarray]:
        """Expectations of Û_r and θ̂_r for a sample from this population.

        Both are unbiased U-statistics, so these are exact.
        """
        pi = self.class_probs
        u = np.zeros(self.R)
        for r in range(self.R):
            if pi[r] == 0 or pi[r] == 1:
                continue
            u[r] = pi[r] * (1 - pi[r]) * self.gamma(r)
        return u, pi * (1 - pi)

    def expected_mv(self) -> tuple[np.ndarray, np.ndarray]:
        """Expectations of the MV-SIS client triples θ1_r, θ2_r."""
        pi = self.class_probs
        t1 = np.zeros(self.R)
        t2 = np.zeros(self.R)
        for r in range(self.R):
            wr = self.class_weights(r)
            t1[r] = pi[r] ** 2 * self.expect(pi, self.product([(wr, 2)]))
            t2[r] = pi[r] * self.expect(pi, self.product([(wr, 1), (pi, 1)]))
        return t1, t2


def random_population(rng: np.random.Generator, R: int, K: int, sparsity: float = 0.3):
    """A random piecewise-uniform population; some bins are emptied per class."""
    B = rng.gamma(1.0, size=(R, K))
    B[rng.random((R, K)) < sparsity] = 0.0
    for r in range(R):
        if B[r].sum() == 0:
            B[r, rng.integers(K)] = 1.0
    B /= B.sum(axis=1, keepdims=True)
    pi = rng.dirichlet(np.ones(R))
    return PiecewisePopulation(B, pi)

