"""Parametric coefficient operators: W(mu) and its mu-derivatives.

Five strategies are available.

* global: one stacked fit over all trajectories; W is mu-independent and
  every parameter sensitivity is exactly zero.
* implicit: the latent state is augmented with mu itself, one global W is
  fit for the augmented dynamics; again dW/dmu = 0 exactly, parameter
  dependence enters through the augmented initial condition.
* rbf: Gaussian radial-basis interpolation of vectorized per-trajectory
  coefficient matrices, exact at the training parameters, with the
  closed-form kernel gradient.
* convex: inverse-squared Mahalanobis-distance weights (convex, summing
  to one), with quotient-rule gradients. At a training parameter the
  limit value W^(k) is returned; the gradient there falls back to a
  one-sided finite difference since the closed form is singular.
* gp: independent Gaussian-process predictive means per coefficient
  entry with a squared-exponential kernel and analytic gradient.
"""
from __future__ import annotations

import abc
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io as wio
from .features import FeatureLibrary
from .weakform import TestFunctionBasis, wendy_fit

__all__ = [
    "TrainingCoefficients",
    "CoefficientProvider",
    "GlobalCoefficients",
    "ImplicitCoefficients",
    "RBFCoefficients",
    "ConvexCoefficients",
    "GPCoefficients",
    "fit_global",
    "fit_implicit",
    "fit_rbf",
    "fit_convex",
    "fit_gp",
    "save_provider",
    "load_provider",
]


@dataclass(frozen=True)
class TrainingCoefficients:
    """Per-trajectory coefficient matrices W^(k) at training parameters."""

    params: np.ndarray  # (K, n_mu)
    coeffs: np.ndarray  # (K, J, d)

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.params, dtype=float))
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 3:
            raise ValueError("coeffs must have shape (K, J, d)")
        if p.shape[0] != c.shape[0]:
            raise ValueError("params and coeffs must list the same K entries")
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "coeffs", c)

    @property
    def count(self) -> int:
        return self.params.shape[0]


class CoefficientProvider(abc.ABC):
    """Strategy object producing W(mu) and dW/dmu_i."""

    strategy: str = ""
    augmented: bool = False
    parameter_dependent: bool = True

    @property
    @abc.abstractmethod
    def shape(self) -> tuple[int, int]:
        """Shape (J, d) of the coefficient matrix."""

    @abc.abstractmethod
    def coefficients(self, mu) -> np.ndarray:
        """W(mu), shape (J, d)."""

    @abc.abstractmethod
    def coefficient_gradients(self, mu) -> np.ndarray:
        """dW/dmu stacked over components, shape (len(mu), J, d)."""


class _ConstantCoefficients(CoefficientProvider):
    parameter_dependent = False

    def __init__(self, w: np.ndarray):
        self._w = np.asarray(w, dtype=float)
        if self._w.ndim != 2:
            raise ValueError("coefficient matrix must be 2-d")

    @property
    def shape(self) -> tuple[int, int]:
        return self._w.shape

    def coefficients(self, mu) -> np.ndarray:
        return self._w

    def coefficient_gradients(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        return np.zeros((mu.size,) + self._w.shape)


class GlobalCoefficients(_ConstantCoefficients):
    strategy = "global"
    augmented = False


class ImplicitCoefficients(_ConstantCoefficients):
    strategy = "implicit"
    augmented = True


def fit_global(
    latents, library: FeatureLibrary, basis: TestFunctionBasis
) -> GlobalCoefficients:
    """Single mu-independent W from the stacked weak-form fit."""
    return GlobalCoefficients(wendy_fit(latents, library, basis).coefficients)


def augment_latents(latents, params) -> list[np.ndarray]:
    """Append each trajectory's constant parameter vector to its rows."""
    params = np.atleast_2d(np.asarray(params, dtype=float))
    trajs = [latents] if isinstance(latents, np.ndarray) else list(latents)
    if len(trajs) != params.shape[0]:
        raise ValueError("one parameter vector per trajectory required")
    out = []
    for traj, mu in zip(trajs, params):
        traj = np.asarray(traj, dtype=float)
        out.append(np.hstack([traj, np.tile(mu, (traj.shape[0], 1))]))
    return out


def fit_implicit(
    latents, params, library: FeatureLibrary, basis: TestFunctionBasis
) -> ImplicitCoefficients:
    """Global W for the parameter-augmented latent state.

    ``library`` must act on the augmented vector (library.n_mu matching the
    parameter count). With zero parameters this degenerates to fit_global.
    """
    params = np.atleast_2d(np.asarray(params, dtype=float))
    if library.n_mu != params.shape[1]:
        raise ValueError(
            f"library expects {library.n_mu} parameter components, got {params.shape[1]}"
        )
    if params.shape[1] == 0:
        return ImplicitCoefficients(
            wendy_fit(latents, library, basis).coefficients
        )
    augmented = augment_latents(latents, params)
    return ImplicitCoefficients(wendy_fit(augmented, library, basis).coefficients)


def _pairwise_distances(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))


class RBFCoefficients(CoefficientProvider):
    strategy = "rbf"
    augmented = False

    def __init__(self, tc: TrainingCoefficients, epsilon: float | None = None):
        self._params = tc.params
        self._train_coeffs = tc.coeffs
        self._shape = tc.coeffs.shape[1:]
        dists = _pairwise_distances(tc.params)
        off_diag = dists[~np.eye(tc.count, dtype=bool)]
        if tc.count > 1 and np.min(off_diag) == 0.0:
            raise ValueError("duplicate training parameters")
        if epsilon is None:
            scale = np.median(off_diag) if tc.count > 1 else 1.0
            epsilon = 1.0 / scale
        self.epsilon = float(epsilon)
        kernel = np.exp(-((self.epsilon * dists) ** 2))
        flat = tc.coeffs.reshape(tc.count, -1)
        self._alphas = np.linalg.solve(kernel, flat)

    @property
    def shape(self) -> tuple[int, int]:
        return self._shape

    def _kernel_row(self, mu) -> tuple[np.ndarray, np.ndarray]:
        mu = np.asarray(mu, dtype=float)
        diff = mu[None, :] - self._params
        r2 = np.sum(diff**2, axis=1)
        return np.exp(-(self.epsilon**2) * r2), diff

    def coefficients(self, mu) -> np.ndarray:
        k, _ = self._kernel_row(mu)
        return (k @ self._alphas).reshape(self._shape)

    def coefficient_gradients(self, mu) -> np.ndarray:
        # phi'(r)/r = -2 eps^2 phi(r) for the Gaussian kernel; the r -> 0
        # limit is finite so no special casing is needed.
        k, diff = self._kernel_row(mu)
        weights = (-2.0 * self.epsilon**2) * k[:, None] * diff  # (K, n_mu)
        grads = weights.T @ self._alphas  # (n_mu, J*d)
        return grads.reshape((diff.shape[1],) + self._shape)


class ConvexCoefficients(CoefficientProvider):
    strategy = "convex"
    augmented = False

    #: squared Mahalanobis distance below which a query point is treated
    #: as coinciding with a training parameter
    _EXACT_TOL = 1e-24

    def __init__(self, tc: TrainingCoefficients):
        if tc.count < 2:
            raise ValueError("convex interpolation needs at least 2 training points")
        self._params = tc.params
        self._coeffs = tc.coeffs
        cov = np.cov(tc.params.T, ddof=1)
        cov = np.atleast_2d(cov)
        n_mu = tc.params.shape[1]
        trace = float(np.trace(cov))
        if trace <= 0.0:
            raise ValueError("degenerate training parameter covariance")
        jitter = 1e-10 * trace / n_mu
        if np.min(np.linalg.eigvalsh(cov)) <= jitter:
            cov = cov + jitter * np.eye(n_mu)
        if np.min(np.linalg.eigvalsh(cov)) <= 0.0:
            raise ValueError("training parameter covariance is singular")
        self._cov_inv = np.linalg.inv(cov)

    @property
    def shape(self) -> tuple[int, int]:
        return self._coeffs.shape[1:]

    def _mahalanobis_sq(self, mu) -> tuple[np.ndarray, np.ndarray]:
        mu = np.asarray(mu, dtype=float)
        diff = mu[None, :] - self._params  # (K, n_mu)
        sdiff = diff @ self._cov_inv
        return np.sum(sdiff * diff, axis=1), sdiff

    def weights(self, mu) -> np.ndarray:
        r2, _ = self._mahalanobis_sq(mu)
        hit = r2 <= self._EXACT_TOL
        if np.any(hit):
            w = np.zeros_like(r2)
            w[np.argmin(r2)] = 1.0
            return w
        inv = 1.0 / r2
        return inv / np.sum(inv)

    def coefficients(self, mu) -> np.ndarray:
        return np.einsum("k,kjd->jd", self.weights(mu), self._coeffs)

    def coefficient_gradients(self, mu) -> np.ndarray:
        mu = np.asarray(mu, dtype=float)
        r2, sdiff = self._mahalanobis_sq(mu)
        if np.any(r2 <= self._EXACT_TOL):
            # The closed form is singular exactly at a training parameter;
            # substitute a one-sided finite difference.
            h = 1e-7
            base = self.coefficients(mu)
            grads = np.empty((mu.size,) + self.shape)
            for i in range(mu.size):
                shifted = mu.copy()
                shifted[i] += h
                grads[i] = (self.coefficients(shifted) - base) / h
            return grads
        inv = 1.0 / r2
        total = np.sum(inv)
        # d(r_j^-2)/dmu_i = -2 (S^-1 (mu - mu_j))_i / r_j^4
        dinv = -2.0 * sdiff * inv[:, None] ** 2  # (K, n_mu)
        dtotal = np.sum(dinv, axis=0)  # (n_mu,)
        dbeta = dinv / total - np.outer(inv, dtotal) / total**2  # (K, n_mu)
        return np.einsum("kp,kjd->pjd", dbeta, self._coeffs)


class GPCoefficients(CoefficientProvider):
    strategy = "gp"
    augmented = False

    def __init__(
        self,
        tc: TrainingCoefficients,
        lengthscale: float | None = None,
        amplitude: float | None = None,
        jitter: float | None = None,
    ):
        self._params = tc.params
        self._train_coeffs = tc.coeffs
        self._shape = tc.coeffs.shape[1:]
        dists = _pairwise_distances(tc.params)
        if lengthscale is None:
            if tc.count > 1:
                big = np.where(np.eye(tc.count, dtype=bool), np.inf, dists)
                lengthscale = float(np.mean(np.min(big, axis=1)))
            else:
                lengthscale = 1.0
        if lengthscale <= 0.0:
            raise ValueError("lengthscale must be positive")
        flat = tc.coeffs.reshape(tc.count, -1)
        if amplitude is None:
            amplitude = float(np.mean(np.var(flat, axis=0, ddof=1))) if tc.count > 1 else 1.0
            if amplitude <= 0.0:
                amplitude = 1.0
        if jitter is None:
            jitter = 1e-8 * amplitude
        self.lengthscale = float(lengthscale)
        self.amplitude = float(amplitude)
        self.jitter = float(jitter)
        kernel = self.amplitude * np.exp(-(dists**2) / (2.0 * self.lengthscale**2))
        kernel += self.jitter * np.eye(tc.count)
        self._alphas = np.linalg.solve(kernel, flat)

    @property
    def shape(self) -> tuple[int, int]:
        return self._shape

    def _kernel_row(self, mu) -> tuple[np.ndarray, np.ndarray]:
        mu = np.asarray(mu, dtype=float)
        diff = self._params - mu[None, :]  # (K, n_mu), note the sign
        r2 = np.sum(diff**2, axis=1)
        k = self.amplitude * np.exp(-r2 / (2.0 * self.lengthscale**2))
        return k, diff

    def coefficients(self, mu) -> np.ndarray:
        k, _ = self._kernel_row(mu)
        return (k @ self._alphas).reshape(self._shape)

    def coefficient_gradients(self, mu) -> np.ndarray:
        k, diff = self._kernel_row(mu)
        weights = k[:, None] * diff / self.lengthscale**2  # (K, n_mu)
        grads = weights.T @ self._alphas
        return grads.reshape((diff.shape[1],) + self._shape)


def fit_rbf(tc: TrainingCoefficients, epsilon: float | None = None) -> RBFCoefficients:
    return RBFCoefficients(tc, epsilon)


def fit_convex(tc: TrainingCoefficients) -> ConvexCoefficients:
    return ConvexCoefficients(tc)


def fit_gp(
    tc: TrainingCoefficients,
    lengthscale: float | None = None,
    amplitude: float | None = None,
    jitter: float | None = None,
) -> GPCoefficients:
    return GPCoefficients(tc, lengthscale, amplitude, jitter)


def save_provider(provider: CoefficientProvider, prefix) -> None:
    """Persist a provider as <prefix>.coeffs.bin (+ .params.bin) and metadata."""
    prefix = Path(prefix)
    meta = {"kind": "coefficient_provider", "strategy": provider.strategy,
            "shape": list(provider.shape)}
    if isinstance(provider, _ConstantCoefficients):
        wio.write_matrix(f"{prefix}.coeffs.bin", provider._w, meta)
        return
    meta["hyperparameters"] = {}
    if isinstance(provider, RBFCoefficients):
        meta["hyperparameters"]["epsilon"] = provider.epsilon
        train = provider._train_coeffs
    elif isinstance(provider, GPCoefficients):
        meta["hyperparameters"].update(
            lengthscale=provider.lengthscale,
            amplitude=provider.amplitude,
            jitter=provider.jitter,
        )
        train = provider._train_coeffs
    elif isinstance(provider, ConvexCoefficients):
        train = provider._coeffs
    else:
        raise ValueError(f"cannot serialize provider {provider.strategy!r}")
    wio.write_matrix(f"{prefix}.coeffs.bin", train.reshape(train.shape[0], -1), meta)
    wio.write_matrix(f"{prefix}.params.bin", provider._params,
                     {"kind": "provider_params"})


def load_provider(prefix) -> CoefficientProvider:
    prefix = Path(prefix)
    coeffs, meta = wio.read_matrix(f"{prefix}.coeffs.bin", with_meta=True)
    if meta.get("kind") != "coefficient_provider":
        raise wio.ConsistencyError(f"{prefix}: not a provider bundle")
    strategy = meta["strategy"]
    if strategy == "global":
        return GlobalCoefficients(coeffs)
    if strategy == "implicit":
        return ImplicitCoefficients(coeffs)
    params = wio.read_matrix(f"{prefix}.params.bin")
    shape = tuple(meta["shape"])
    tc = TrainingCoefficients(params, coeffs.reshape((params.shape[0],) + shape))
    hp = meta.get("hyperparameters", {})
    if strategy == "rbf":
        return RBFCoefficients(tc, epsilon=hp.get("epsilon"))
    if strategy == "convex":
        return ConvexCoefficients(tc)
    if strategy == "gp":
        return GPCoefficients(
            tc,
            lengthscale=hp.get("lengthscale"),
            amplitude=hp.get("amplitude"),
            jitter=hp.get("jitter"),
        )
    raise wio.ConsistencyError(f"{prefix}: unknown strategy {strategy!r}")
