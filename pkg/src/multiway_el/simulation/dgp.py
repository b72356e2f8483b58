"""Data generating processes used by the coverage experiments.

Each DGP returns the generated array together with a :class:`HoeffdingOracle`
holding the latent components ``L_i0, L_0j, W_ij, R_ij`` of the draw, which
reconstruct the cells exactly as ``theta + L_i0 + L_0j + W_ij + R_ij``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import ThreeWayArray, TwoWayArray
from ..errors import SBMScaleError
from .rng import stream

__all__ = [
    "BipartiteSBMDGP",
    "HoeffdingOracle",
    "RandomEffectDGP",
    "ThreeWayRandomEffectDGP",
    "generate",
    "sbm_scale",
]


def _param_code(x: float) -> int:
    return int(round(float(x) * 1_000_000))


@dataclass
class HoeffdingOracle:
    theta: float
    L_row: np.ndarray
    L_col: np.ndarray
    W: np.ndarray
    R: np.ndarray
    sigma2_L: float
    sigma2_R: float

    def reconstruct(self) -> np.ndarray:
        return self.theta + self.L_row[:, None] + self.L_col[None, :] + self.W + self.R

    def omega(self, n_min: int) -> float:
        """``n_min * sigma2_L + 2 sigma2_R``: limiting denominator of the plain MEL."""
        return n_min * self.sigma2_L + 2.0 * self.sigma2_R

    def xi_variance(self, n_min: int) -> float:
        return n_min * self.sigma2_L + self.sigma2_R


@dataclass(frozen=True)
class RandomEffectDGP:
    """``X_ij = theta + a_i + b_j + e_ij`` with ``a, b ~ N(0, sigma2)``."""

    N: int
    M: int
    sigma2: float
    theta: float = 1.0
    noise_var: float = 1.0

    name = "random_effect"
    param_name = "sigma2"

    def __post_init__(self):
        if self.sigma2 < 0 or self.noise_var < 0:
            raise ValueError("variances must be non-negative")

    @property
    def param(self) -> float:
        return self.sigma2

    @property
    def cell_key(self) -> tuple:
        return (2, self.N, self.M, _param_code(self.sigma2))

    def generate(self, seed: int, replication: int = 0):
        sd = np.sqrt(self.sigma2)
        a = sd * stream(seed, replication, "row_effect", self.cell_key).standard_normal(self.N)
        b = sd * stream(seed, replication, "col_effect", self.cell_key).standard_normal(self.M)
        e = np.sqrt(self.noise_var) * stream(seed, replication, "noise", self.cell_key).standard_normal((self.N, self.M))
        x = self.theta + a[:, None] + b[None, :] + e
        n = self.N + self.M
        oracle = HoeffdingOracle(self.theta, a, b, np.zeros((self.N, self.M)), e,
                                 n * (self.sigma2 / self.N + self.sigma2 / self.M),
                                 self.noise_var)
        return TwoWayArray(x), oracle


_PI1 = (0.7, 0.3)
_PI2 = (0.2, 0.8)
_S = ((0.6, 0.4), (0.3, 0.7))


def sbm_scale(theta: float, pi1=_PI1, pi2=_PI2, S=_S) -> float:
    """``s`` such that ``pi1' (s S) pi2 = theta``."""
    return float(theta / (np.asarray(pi1) @ np.asarray(S) @ np.asarray(pi2)))


@dataclass(frozen=True)
class BipartiteSBMDGP:
    """Bipartite two-block stochastic block model with edge probabilities ``s S_ab``.

    Block memberships are redrawn for every replication.
    """

    N: int
    M: int
    theta: float
    pi1: tuple = _PI1
    pi2: tuple = _PI2
    S: tuple = _S

    name = "sbm"
    param_name = "theta"

    def __post_init__(self):
        if self.scale * np.max(self.S) > 1.0:
            raise SBMScaleError(f"theta={self.theta} needs edge probabilities above one")

    @property
    def param(self) -> float:
        return self.theta

    @property
    def cell_key(self) -> tuple:
        return (3, self.N, self.M, _param_code(self.theta))

    @property
    def scale(self) -> float:
        return sbm_scale(self.theta, self.pi1, self.pi2, self.S)

    @property
    def F(self) -> np.ndarray:
        return self.scale * np.asarray(self.S, dtype=float)

    def population_components(self):
        """Population ``(sigma2_L, sigma2_R)`` of the Hoeffding decomposition."""
        F = self.F
        p1, p2 = np.asarray(self.pi1), np.asarray(self.pi2)
        row = F @ p2 - self.theta
        col = p1 @ F - self.theta
        n = self.N + self.M
        s2L = n * ((p1 @ row ** 2) / self.N + (p2 @ col ** 2) / self.M)
        s2R = float(p1 @ (F * (1 - F)) @ p2)
        return float(s2L), s2R

    def generate(self, seed: int, replication: int = 0):
        F = self.F
        A = stream(seed, replication, "row_block", self.cell_key).choice(2, size=self.N, p=self.pi1)
        B = stream(seed, replication, "col_block", self.cell_key).choice(2, size=self.M, p=self.pi2)
        P = F[A][:, B]
        U = stream(seed, replication, "edge", self.cell_key).random((self.N, self.M))
        x = (U < P).astype(float)
        L_row = F[A] @ np.asarray(self.pi2) - self.theta
        L_col = np.asarray(self.pi1) @ F[:, B] - self.theta
        W = P - L_row[:, None] - L_col[None, :] - self.theta
        s2L, s2R = self.population_components()
        oracle = HoeffdingOracle(self.theta, L_row, L_col, W, x - P, s2L, s2R)
        return TwoWayArray(x), oracle


@dataclass(frozen=True)
class ThreeWayRandomEffectDGP:
    """``X_ijt = theta + a_i + b_j + c_t + e_ijt``."""

    N: int
    M: int
    T: int
    sigma2: float = 1.0
    theta: float = 1.0
    noise_var: float = 1.0

    name = "threeway_random_effect"
    param_name = "sigma2"

    @property
    def param(self) -> float:
        return self.sigma2

    @property
    def cell_key(self) -> tuple:
        return (4, self.N, self.M, self.T, _param_code(self.sigma2))

    def generate(self, seed: int, replication: int = 0):
        sd = np.sqrt(self.sigma2)
        a = sd * stream(seed, replication, "row_effect", self.cell_key).standard_normal(self.N)
        b = sd * stream(seed, replication, "col_effect", self.cell_key).standard_normal(self.M)
        c = sd * stream(seed, replication, "slab_effect", self.cell_key).standard_normal(self.T)
        e = np.sqrt(self.noise_var) * stream(seed, replication, "noise", self.cell_key).standard_normal(
            (self.N, self.M, self.T))
        x = self.theta + a[:, None, None] + b[None, :, None] + c[None, None, :] + e
        return ThreeWayArray(x), None


def generate(dgp, seed: int, replication: int = 0):
    """Deterministic draw ``(array, oracle)`` for one replication."""
    return dgp.generate(seed, replication)
