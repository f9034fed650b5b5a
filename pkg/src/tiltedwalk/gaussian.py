"""Exponential tilting of stationary Gaussian increment processes.

A model is (mu, sigma2, correlation family).  The correlation sums
R = sum rho_r and S = sum r*rho_r determine everything: the tilt parameter
is 2*mu / (sigma2*(1+2R)), the limit constant is
exp(-4*mu^2*S / (sigma2*(1+2R)^2)), and the tilted conditional law of a
finite window is again Gaussian with an exponential-linear density factor
exp(alpha.x + beta) whose coefficients come from tail correlation sums.
The boundary 1 + 2R = 0 (partial-sum variance stays bounded) admits no
tilt and is rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve, toeplitz

from .core import IncrementPath, IncrementSampler, stream_rng
from .defaults import (
    DEGENERATE_EPS,
    EXP_GUARD,
    TOEPLITZ_N_CAP,
    TRUNCATION_CAP,
    TRUNCATION_M0,
    TRUNCATION_TOL,
    WINDOW_CAP,
)
from .errors import ConvergenceError, DegenerateCaseError, ModelError, TiltOverflowError

__all__ = [
    "IID",
    "AR1",
    "MA",
    "ExplicitCorr",
    "GaussianModel",
    "GaussianTilt",
    "ConditionalTiltCoeffs",
    "MartingaleCoeffs",
    "GaussianSampler",
    "rho",
    "rho_tail",
    "rho_partial",
    "correlation_sums",
    "gaussian_tilt",
    "var_Sn_exact",
    "laplace_Sn_exact",
    "toeplitz_cov",
    "sample_path",
    "conditional_tilt_coeffs",
    "associated_model",
    "martingale_coeffs",
    "tilt_density_normalization",
    "martingale_mean",
]


@dataclass(frozen=True)
class IID:
    """Uncorrelated increments."""


@dataclass(frozen=True)
class AR1:
    """Autoregressive lag-1 correlations rho_r = phi^r, |phi| < 1."""

    phi: float

    def __post_init__(self):
        if not abs(self.phi) < 1:
            raise ModelError(f"AR1 weight must satisfy |phi| < 1, got {self.phi}")


@dataclass(frozen=True)
class MA:
    """Moving-average weights b_1..b_q on i.i.d. innovations (b_0 = 1)."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(b) for b in self.coeffs))
        if len(self.coeffs) == 0:
            raise ModelError("MA needs at least one weight; use IID instead")


@dataclass(frozen=True)
class ExplicitCorr:
    """Correlations rho_1..rho_L listed directly; zero beyond L."""

    rhos: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "rhos", tuple(float(r) for r in self.rhos))
        if any(abs(r) > 1 for r in self.rhos):
            raise ModelError("correlations must lie in [-1, 1]")


CorrSpec = Union[IID, AR1, MA, ExplicitCorr]

_CORR_TAGS = {"iid": IID, "ar1": AR1, "ma": MA, "explicit": ExplicitCorr}


@dataclass(frozen=True)
class GaussianModel:
    """Stationary Gaussian increments: mean mu > 0, variance sigma2, corr family.

    ``associated`` relaxes mu > 0 to mu < 0: the drift-reversed process
    produced by tilting has the same covariance structure and mean -mu.
    """

    mu: float
    sigma2: float
    corr: CorrSpec = IID()
    associated: bool = False

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ModelError(f"sigma2 must be positive, got {self.sigma2}")
        if self.associated:
            if self.mu >= 0:
                raise ModelError("associated model must have negative mean")
        elif self.mu <= 0:
            raise ModelError(f"mu must be positive, got {self.mu}")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @classmethod
    def from_dict(cls, obj: dict) -> "GaussianModel":
        try:
            mu = float(obj["mu"])
            sigma2 = float(obj["sigma2"])
            corr_obj = obj.get("corr", {"type": "iid"})
            tag = corr_obj["type"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"bad Gaussian model spec: {exc}") from exc
        if tag not in _CORR_TAGS:
            raise ModelError(f"unknown correlation type {tag!r}")
        if tag == "iid":
            corr: CorrSpec = IID()
        elif tag == "ar1":
            corr = AR1(float(corr_obj["phi"]))
        elif tag == "ma":
            corr = MA(tuple(corr_obj["coeffs"]))
        else:
            corr = ExplicitCorr(tuple(corr_obj["rhos"]))
        return cls(mu, sigma2, corr, associated=bool(obj.get("associated", False)))

    def to_dict(self) -> dict:
        if isinstance(self.corr, IID):
            corr = {"type": "iid"}
        elif isinstance(self.corr, AR1):
            corr = {"type": "ar1", "phi": self.corr.phi}
        elif isinstance(self.corr, MA):
            corr = {"type": "ma", "coeffs": list(self.corr.coeffs)}
        else:
            corr = {"type": "explicit", "rhos": list(self.corr.rhos)}
        out = {"mu": self.mu, "sigma2": self.sigma2, "corr": corr}
        if self.associated:
            out["associated"] = True
        return out


@dataclass(frozen=True)
class GaussianTilt:
    """Tilt parameter with the correlation sums and the limit constant."""

    theta: float
    R: float
    S: float
    q: float


@dataclass(frozen=True)
class ConditionalTiltCoeffs:
    """Window density factor exp(alpha.x + beta) of the tilted law on
    coordinates -k..k (alpha has length 2k+1)."""

    k: int
    alpha: np.ndarray
    beta: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))


@dataclass(frozen=True)
class MartingaleCoeffs:
    """Martingale V_k = exp(gamma.(X_1..X_k) + delta); gamma absorbs the
    -theta*S_k term."""

    k: int
    gamma: np.ndarray
    delta: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))

    def evaluate(self, paths: np.ndarray) -> np.ndarray:
        """V_k for each row of an (n_paths, >=k) increment array."""
        paths = np.atleast_2d(paths)
        return np.exp(paths[:, : self.k] @ self.gamma + self.delta)


# ---------------------------------------------------------------------------
# correlations
# ---------------------------------------------------------------------------

def rho(model: GaussianModel, r: int) -> float:
    """Correlation of increments r apart (r >= 1)."""
    if r < 1:
        raise ValueError("lag must be at least 1")
    corr = model.corr
    if isinstance(corr, IID):
        return 0.0
    if isinstance(corr, AR1):
        return corr.phi**r
    if isinstance(corr, MA):
        b = np.concatenate([[1.0], corr.coeffs])
        q = len(corr.coeffs)
        if r > q:
            return 0.0
        return float(b[: q + 1 - r] @ b[r:]) / float(b @ b)
    if r > len(corr.rhos):
        return 0.0
    return corr.rhos[r - 1]


def _rho_array(model: GaussianModel, L: int) -> np.ndarray:
    """rho_1..rho_L as an array (vectorized where the family allows)."""
    if L <= 0:
        return np.empty(0)
    corr = model.corr
    if isinstance(corr, IID):
        return np.zeros(L)
    if isinstance(corr, AR1):
        return corr.phi ** np.arange(1, L + 1)
    if isinstance(corr, MA):
        q = len(corr.coeffs)
        out = np.zeros(L)
        for r in range(1, min(L, q) + 1):
            out[r - 1] = rho(model, r)
        return out
    out = np.zeros(L)
    m = min(L, len(corr.rhos))
    out[:m] = corr.rhos[:m]
    return out


def rho_tail(model: GaussianModel, j: int) -> float:
    """Tail sum of correlations from lag j on (j >= 1)."""
    if j < 1:
        raise ValueError("tail sums start at lag 1 or beyond")
    corr = model.corr
    if isinstance(corr, IID):
        return 0.0
    if isinstance(corr, AR1):
        return corr.phi**j / (1.0 - corr.phi)
    L = len(corr.coeffs) if isinstance(corr, MA) else len(corr.rhos)
    if j > L:
        return 0.0
    return float(sum(rho(model, r) for r in range(j, L + 1)))


def rho_partial(model: GaussianModel, a: int, b: int) -> float:
    """Sum of correlations over lags a..b inclusive (empty when b < a)."""
    if a < 1:
        raise ValueError("partial sums start at lag 1 or beyond")
    if b < a:
        return 0.0
    corr = model.corr
    if isinstance(corr, AR1):
        return (corr.phi**a - corr.phi ** (b + 1)) / (1.0 - corr.phi)
    return rho_tail(model, a) - rho_tail(model, b + 1)


def correlation_sums(model: GaussianModel, tol: float = 0.0) -> tuple[float, float]:
    """(R, S) = (sum rho_r, sum r*rho_r).

    The built-in families are evaluated exactly (AR1 by geometric closed
    forms, MA and explicit lists by finite sums), so ``tol`` is accepted
    for interface symmetry but unused.  Raises ``DegenerateCaseError``
    when 1 + 2R is numerically zero or negative.
    """
    corr = model.corr
    if isinstance(corr, IID):
        R, S = 0.0, 0.0
    elif isinstance(corr, AR1):
        R = corr.phi / (1.0 - corr.phi)
        S = corr.phi / (1.0 - corr.phi) ** 2
    else:
        L = len(corr.coeffs) if isinstance(corr, MA) else len(corr.rhos)
        rhos = _rho_array(model, L)
        R = float(rhos.sum())
        S = float(np.arange(1, L + 1) @ rhos)
    if 1.0 + 2.0 * R <= DEGENERATE_EPS:
        raise DegenerateCaseError(
            f"1 + 2R = {1.0 + 2.0 * R:.3g} <= {DEGENERATE_EPS:g}: partial-sum "
            "variance stays bounded, no tilt exists"
        )
    return R, S


def gaussian_tilt(model: GaussianModel) -> GaussianTilt:
    """Tilt parameter and limit constant from the correlation sums."""
    R, S = correlation_sums(model)
    theta = 2.0 * model.mu / (model.sigma2 * (1.0 + 2.0 * R))
    q = math.exp(-4.0 * model.mu**2 * S / (model.sigma2 * (1.0 + 2.0 * R) ** 2))
    return GaussianTilt(theta=theta, R=R, S=S, q=q)


def var_Sn_exact(model: GaussianModel, n: int) -> float:
    """Exact variance of S_n: sigma2 * (n + 2 * sum_{r<n} (n-r) rho_r)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rhos = _rho_array(model, n - 1)
    weights = n - np.arange(1, n)
    return model.sigma2 * (n + 2.0 * float(weights @ rhos))


def laplace_Sn_exact(model: GaussianModel, theta: float, n: int) -> float:
    """E(exp(-theta * S_n)) in closed form: exp(-n mu theta + var(S_n) theta^2 / 2)."""
    exponent = -n * model.mu * theta + 0.5 * var_Sn_exact(model, n) * theta**2
    if exponent > EXP_GUARD:
        raise TiltOverflowError(
            f"exp({exponent:.3g}) exceeds double range at theta={theta:.6g}, n={n}"
        )
    return math.exp(exponent)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def toeplitz_cov(model: GaussianModel, size: int) -> np.ndarray:
    """Covariance of a length-``size`` window: sigma2 * rho_|i-j|."""
    first = np.concatenate([[1.0], _rho_array(model, size - 1)])
    return model.sigma2 * toeplitz(first)


def _window_cholesky(model: GaussianModel, size: int):
    cov = toeplitz_cov(model, size)
    try:
        return cho_factor(cov, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ModelError(
            f"correlation sequence is not positive definite on a window of "
            f"size {size}"
        ) from exc


class GaussianSampler(IncrementSampler):
    """Stationary draws for each correlation family.

    AR1 uses the stationary recursion started from the marginal law, MA
    convolves pre-warmed i.i.d. innovations, explicit correlations go
    through a dense Toeplitz factorization (path length capped).
    """

    def __init__(self, model: GaussianModel):
        self.model = model

    def sample_block(self, seed: int, stream_id: int, n_paths: int, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError("path length must be positive")
        rng = stream_rng(seed, stream_id)
        m = self.model
        corr = m.corr
        if isinstance(corr, IID):
            return m.mu + m.sigma * rng.standard_normal((n_paths, n))
        if isinstance(corr, AR1):
            phi = corr.phi
            innov_sd = m.sigma * math.sqrt(1.0 - phi * phi)
            out = np.empty((n_paths, n))
            y = m.sigma * rng.standard_normal(n_paths)
            out[:, 0] = y
            for t in range(1, n):
                y = phi * y + innov_sd * rng.standard_normal(n_paths)
                out[:, t] = y
            return m.mu + out
        if isinstance(corr, MA):
            kern = np.concatenate([[1.0], corr.coeffs])
            q = len(corr.coeffs)
            scale = m.sigma / math.sqrt(float(kern @ kern))
            z = rng.standard_normal((n_paths, n + q))
            out = np.zeros((n_paths, n))
            for i, b in enumerate(kern):  # X_t = sum_i b_i Z_{t-i}, t >= q warm
                out += b * z[:, q - i : q - i + n]
            return m.mu + scale * out
        if n > TOEPLITZ_N_CAP:
            raise ModelError(
                f"explicit-correlation sampling capped at n <= {TOEPLITZ_N_CAP}"
            )
        cov = toeplitz_cov(m, n)
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ModelError(
                f"correlation sequence is not positive definite on a window "
                f"of size {n}"
            ) from exc
        z = rng.standard_normal((n_paths, n))
        return m.mu + z @ L.T


def sample_path(model: GaussianModel, n: int, seed: int, stream_id: int = 0) -> IncrementPath:
    """One stationary path X_1..X_n."""
    return GaussianSampler(model).sample(seed, stream_id, n)


# ---------------------------------------------------------------------------
# conditional tilt and martingale coefficients
# ---------------------------------------------------------------------------

def _doubling_limit(evaluate, m0: int, cap: int, tol: float) -> float:
    """Limit of evaluate(M) under M-doubling with Cauchy-style stopping."""
    M = m0
    prev = evaluate(M)
    delta = math.inf
    while M <= cap:
        M *= 2
        cur = evaluate(M)
        delta = abs(cur - prev)
        if delta < tol:
            return cur
        prev = cur
    raise ConvergenceError(
        f"truncation doubling reached M={cap} with last delta {delta:.3g} "
        f"(tol {tol:g})"
    )


def conditional_tilt_coeffs(
    model: GaussianModel,
    k: int,
    m0: int = TRUNCATION_M0,
    cap: int = TRUNCATION_CAP,
    tol: float = TRUNCATION_TOL,
) -> ConditionalTiltCoeffs:
    """Limiting density factor exp(alpha.x + beta) on the window -k..k.

    alpha = -theta * Sigma^{-1} v where v collects the two tail correlation
    sums of each coordinate against the outside of the window.  beta is the
    limit of the remaining conditional-Gaussian terms, evaluated at
    truncation m = n = M and M-doubled until successive values agree: the
    individually divergent mean and variance terms cancel at the tilt
    parameter, leaving a finite limit.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    size = 2 * k + 1
    if size > WINDOW_CAP:
        raise ValueError(f"window 2k+1 = {size} exceeds cap {WINDOW_CAP}")
    tilt = gaussian_tilt(model)
    theta = tilt.theta
    s2 = model.sigma2
    cho = _window_cholesky(model, size)
    coords = np.arange(-k, k + 1)
    ones = np.ones(size)
    mu_vec = model.mu * ones

    v_inf = np.array(
        [s2 * (rho_tail(model, i + k + 1) + rho_tail(model, k + 1 - i)) for i in coords]
    )
    alpha = -theta * cho_solve(cho, v_inf)

    base_cov = float(ones @ toeplitz_cov(model, size) @ ones)

    def beta_at(M: int) -> float:
        v = np.array(
            [
                s2 * (rho_partial(model, i + k + 1, i + M) + rho_partial(model, k + 1 - i, M - i))
                for i in coords
            ]
        )
        nu = (2 * M - 2 * k) * model.mu
        tau2 = var_Sn_exact(model, 2 * M + 1) - base_cov - 2.0 * float(v.sum())
        y = cho_solve(cho, v)
        return (
            -nu * theta
            + theta * float(v @ cho_solve(cho, mu_vec))
            + 0.5 * tau2 * theta**2
            - 0.5 * theta**2 * float(v @ y)
        )

    beta = _doubling_limit(beta_at, max(m0, k + 1), cap, tol)
    return ConditionalTiltCoeffs(k=k, alpha=alpha, beta=beta, theta=theta)


def tilt_density_normalization(model: GaussianModel, coeffs: ConditionalTiltCoeffs) -> float:
    """Closed-form E exp(-theta 1.X + alpha.X + beta) over the window law.

    Equals the limit constant q when the coefficients are right: with
    a = -theta 1 + alpha the Gaussian moment formula gives
    exp(a.mu1 + a.Sigma a/2 + beta).
    """
    size = 2 * coeffs.k + 1
    cov = toeplitz_cov(model, size)
    a = -coeffs.theta * np.ones(size) + coeffs.alpha
    mu_vec = model.mu * np.ones(size)
    return math.exp(float(a @ mu_vec) + 0.5 * float(a @ cov @ a) + coeffs.beta)


def associated_model(model: GaussianModel) -> GaussianModel:
    """Same covariance structure, mean flipped to -mu, flagged associated."""
    return GaussianModel(
        mu=-model.mu,
        sigma2=model.sigma2,
        corr=model.corr,
        associated=not model.associated,
    )


def martingale_coeffs(
    model: GaussianModel,
    k: int,
    m0: int = TRUNCATION_M0,
    cap: int = TRUNCATION_CAP,
    tol: float = TRUNCATION_TOL,
) -> MartingaleCoeffs:
    """Coefficients of V_k = exp(gamma.(X_1..X_k) + delta).

    One-sided analog of the window construction: the tail sum S_{k+1,n} is
    conditioned on X_1..X_k and n is doubled to its limit.  gamma includes
    the -theta contribution of S_k itself, so in the uncorrelated case
    gamma = -theta*1 and delta = 0.
    """
    if k < 1:
        raise ValueError("the martingale needs at least one conditioning coordinate")
    if k > WINDOW_CAP:
        raise ValueError(f"window k = {k} exceeds cap {WINDOW_CAP}")
    tilt = gaussian_tilt(model)
    theta = tilt.theta
    s2 = model.sigma2
    cho = _window_cholesky(model, k)
    coords = np.arange(1, k + 1)
    mu_vec = model.mu * np.ones(k)

    w_inf = np.array([s2 * rho_tail(model, k + 1 - i) for i in coords])
    gamma = -theta * (np.ones(k) + cho_solve(cho, w_inf))

    def delta_at(M: int) -> float:
        w = np.array([s2 * rho_partial(model, k + 1 - i, M - i) for i in coords])
        nu = (M - k) * model.mu
        tau2 = var_Sn_exact(model, M - k)
        y = cho_solve(cho, w)
        return (
            -nu * theta
            + theta * float(w @ cho_solve(cho, mu_vec))
            + 0.5 * tau2 * theta**2
            - 0.5 * theta**2 * float(w @ y)
        )

    delta = _doubling_limit(delta_at, max(m0, 2 * k + 2), cap, tol)
    return MartingaleCoeffs(k=k, gamma=gamma, delta=delta, theta=theta)


def martingale_mean(model: GaussianModel, coeffs: MartingaleCoeffs) -> float:
    """Closed-form E V_k = exp(gamma.mu1 + gamma.Sigma gamma/2 + delta).

    Equals the limit constant q: the defining measure of the martingale
    has total mass q on every level.
    """
    cov = toeplitz_cov(model, coeffs.k)
    mu_vec = model.mu * np.ones(coeffs.k)
    g = coeffs.gamma
    return math.exp(float(g @ mu_vec) + 0.5 * float(g @ cov @ g) + coeffs.delta)
