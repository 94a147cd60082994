"""Polynomial feature library for latent vector fields.

Degree 1 yields [1, v_1, ..., v_d]; degree 2 appends all products
v_i v_j with i <= j in lexicographic order. The library may act on the
latent state alone or on the state augmented with the design parameters
(set ``n_mu`` > 0), in which case d = latent_dim + n_mu.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["FeatureLibrary"]


@dataclass(frozen=True)
class FeatureLibrary:
    latent_dim: int
    degree: int = 1
    n_mu: int = 0

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.degree not in (1, 2):
            raise ValueError("only polynomial degrees 1 and 2 are supported")
        if self.n_mu < 0:
            raise ValueError("n_mu must be >= 0")

    @property
    def dim(self) -> int:
        """Dimension of the vector the library acts on."""
        return self.latent_dim + self.n_mu

    @property
    def augmented(self) -> bool:
        return self.n_mu > 0

    @property
    def size(self) -> int:
        """Feature count J."""
        d = self.dim
        j = 1 + d
        if self.degree == 2:
            j += d * (d + 1) // 2
        return j

    def evaluate(self, v: np.ndarray) -> np.ndarray:
        """theta(v). Accepts a single vector (d,) or batched rows (m, d)."""
        v = np.asarray(v, dtype=float)
        single = v.ndim == 1
        rows = v[None, :] if single else v
        if rows.shape[1] != self.dim:
            raise ValueError(f"expected vectors of length {self.dim}, got {rows.shape[1]}")
        cols = [np.ones((rows.shape[0], 1)), rows]
        if self.degree == 2:
            iu, ju = np.triu_indices(self.dim)
            cols.append(rows[:, iu] * rows[:, ju])
        theta = np.hstack(cols)
        return theta[0] if single else theta

    def jacobian(self, v: np.ndarray) -> np.ndarray:
        """Gradient of theta at v, shape (size, dim); row j is grad f_j."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"expected a vector of length {self.dim}")
        d = self.dim
        jac = np.zeros((self.size, d))
        jac[1 : 1 + d, :] = np.eye(d)
        if self.degree == 2:
            iu, ju = np.triu_indices(d)
            base = 1 + d
            rows = np.arange(iu.size) + base
            # d(v_i v_j) = v_j e_i + v_i e_j (adds 2 v_i e_i when i == j).
            np.add.at(jac, (rows, iu), v[ju])
            np.add.at(jac, (rows, ju), v[iu])
        return jac
