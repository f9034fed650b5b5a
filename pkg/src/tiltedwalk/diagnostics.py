"""Cross-model diagnostic harness.

Checks the three structural properties both increment models are built on:
convergence of the tilted expectations E(exp(-theta S_n)) to a positive
limit, the dichotomy away from the tilt parameter (phi < theta decays to 0,
phi > theta blows up), the martingale property of V_k, and — for finite
Markov chains — convergence of tilted cylinder ratios to the associated
chain's cylinder probabilities.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import gaussian as g
from . import markov as mk
from .core import MCEstimate, _block_layout, mc_tilted_expectation
from .defaults import CYLINDER_CAP, FLAT_TOL, MC_BLOCK_SIZE, MC_SAMPLES, SCAN_TOL
from .errors import ModelError

__all__ = [
    "ConvergenceReport",
    "FactorTrend",
    "PhiSweepReport",
    "Assumption2Report",
    "MarkovDiagnostics",
    "GaussianDiagnostics",
    "assumption1_scan",
    "phi_sweep",
    "martingale_mc_test",
    "assumption2_convergence",
]

# stream spacing between grid points sharing one seed
_STREAM_STRIDE = 10**6


# ---------------------------------------------------------------------------
# model adaptors
# ---------------------------------------------------------------------------

class MarkovDiagnostics:
    """Adaptor exposing the exact evaluator, sampler and martingale of a chain."""

    def __init__(self, model: mk.MarkovModel, tilt: Optional[mk.TiltSolution] = None):
        mk.require_valid(model)
        self.model = model
        self.tilt = tilt if tilt is not None else mk.solve_tilt(model)
        self.sampler = mk.MarkovSampler(model)

    @property
    def theta(self) -> float:
        return self.tilt.theta

    @property
    def q(self) -> float:
        return self.tilt.q

    def exact_laplace(self, theta: float, n: int) -> float:
        """pi . Q(theta)^n . 1 by repeated matvec."""
        Q = mk.tilt_matrix(self.model, theta)
        w = np.ones(self.model.n_states)
        for _ in range(n):
            w = Q @ w
        return float(self.model.pi @ w)

    def martingale_block(self, seed: int, stream_id: int, n_paths: int, k_max: int) -> np.ndarray:
        """V_1..V_{k_max+1} per path as an (n_paths, k_max+1) array."""
        idx = self.sampler.sample_index_block(seed, stream_id, n_paths, k_max + 1)
        S = np.cumsum(self.model.states[idx], axis=1)
        return self.tilt.c[idx] * np.exp(-self.tilt.theta * S)


class GaussianDiagnostics:
    """Adaptor for a Gaussian increment model (martingale coefficients cached)."""

    def __init__(self, model: g.GaussianModel, tilt: Optional[g.GaussianTilt] = None):
        self.model = model
        self.tilt = tilt if tilt is not None else g.gaussian_tilt(model)
        self.sampler = g.GaussianSampler(model)
        self._coeffs: dict[int, g.MartingaleCoeffs] = {}

    @property
    def theta(self) -> float:
        return self.tilt.theta

    @property
    def q(self) -> float:
        return self.tilt.q

    def exact_laplace(self, theta: float, n: int) -> float:
        return g.laplace_Sn_exact(self.model, theta, n)

    def martingale_coeffs(self, k: int) -> g.MartingaleCoeffs:
        if k not in self._coeffs:
            self._coeffs[k] = g.martingale_coeffs(self.model, k)
        return self._coeffs[k]

    def martingale_block(self, seed: int, stream_id: int, n_paths: int, k_max: int) -> np.ndarray:
        paths = self.sampler.sample_block(seed, stream_id, n_paths, k_max + 1)
        out = np.empty((n_paths, k_max + 1))
        for k in range(1, k_max + 2):
            out[:, k - 1] = self.martingale_coeffs(k).evaluate(paths)
        return out


Diagnostics = Union[MarkovDiagnostics, GaussianDiagnostics]


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class ConvergenceReport:
    """Tilted-expectation table over an n grid with a convergence verdict.

    Exact mode: converged iff the last two grid values differ by less than
    ``tol``.  MC mode: converged iff the last two 3-stderr intervals
    overlap.  ``q_hat`` extrapolates the limit (Aitken when the exact tail
    behaves geometrically, otherwise the last value).
    """

    theta: float
    n_grid: list[int]
    values: list  # floats (exact) or MCEstimate (mc)
    mode: str
    converged: bool
    final_delta: float
    q_hat: float
    tol: float

    def to_dict(self) -> dict:
        vals = [
            {"mean": v.mean, "stderr": v.stderr} if isinstance(v, MCEstimate) else v
            for v in self.values
        ]
        return {
            "theta": self.theta,
            "n_grid": self.n_grid,
            "values": vals,
            "mode": self.mode,
            "converged": self.converged,
            "final_delta": self.final_delta,
            "q_hat": self.q_hat,
            "tol": self.tol,
        }

    def csv_rows(self) -> list[tuple]:
        rows = [("n", "value", "stderr")]
        for n, v in zip(self.n_grid, self.values):
            if isinstance(v, MCEstimate):
                rows.append((n, v.mean, v.stderr))
            else:
                rows.append((n, v, ""))
        return rows


@dataclass
class FactorTrend:
    factor: float
    phi: float
    values: list[float]
    verdict: str
    expected: str

    @property
    def ok(self) -> bool:
        return self.verdict == self.expected

    def to_dict(self) -> dict:
        return {
            "factor": self.factor,
            "phi": self.phi,
            "values": self.values,
            "verdict": self.verdict,
            "expected": self.expected,
            "ok": self.ok,
        }


@dataclass
class PhiSweepReport:
    theta_star: float
    n_grid: list[int]
    trends: list[FactorTrend]

    @property
    def passed(self) -> bool:
        return all(t.ok for t in self.trends)

    def to_dict(self) -> dict:
        return {
            "theta_star": self.theta_star,
            "n_grid": self.n_grid,
            "trends": [t.to_dict() for t in self.trends],
            "passed": self.passed,
        }

    def csv_rows(self) -> list[tuple]:
        rows = [("factor", "n", "value")]
        for t in self.trends:
            for n, v in zip(self.n_grid, t.values):
                rows.append((t.factor, n, v))
        return rows


@dataclass
class Assumption2Report:
    """Max cylinder-ratio error against the associated chain, per (m, n).

    ``decreasing`` allows an additive 1e-12 slack: once the geometric decay
    reaches the rounding floor the errors plateau near 1e-13 and may wiggle
    by an ulp-level amount.
    """

    k: int
    mn_grid: list[tuple[int, int]]
    max_errors: list[float]
    tol: float = 1e-10

    @property
    def decreasing(self) -> bool:
        return all(
            b <= a + 1e-12 for a, b in zip(self.max_errors, self.max_errors[1:])
        )

    @property
    def passed(self) -> bool:
        return self.decreasing and self.max_errors[-1] < self.tol

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "mn_grid": [list(mn) for mn in self.mn_grid],
            "max_errors": self.max_errors,
            "decreasing": self.decreasing,
            "passed": self.passed,
            "tol": self.tol,
        }

    def csv_rows(self) -> list[tuple]:
        rows = [("m", "n", "max_error")]
        for (m, n), e in zip(self.mn_grid, self.max_errors):
            rows.append((m, n, e))
        return rows


# ---------------------------------------------------------------------------
# checks
# ---------------------------------------------------------------------------

def _aitken(values: Sequence[float]) -> float:
    """Aitken delta-squared extrapolation from the last three values."""
    v0, v1, v2 = values[-3], values[-2], values[-1]
    denom = (v2 - v1) - (v1 - v0)
    if denom == 0.0 or not math.isfinite(denom):
        return v2
    acc = v2 - (v2 - v1) ** 2 / denom
    return acc if math.isfinite(acc) else v2


def assumption1_scan(
    diag: Diagnostics,
    theta: float,
    n_grid: Sequence[int],
    mode: str = "exact",
    n_samples: int = MC_SAMPLES,
    seed: int = 0,
    tol: float = SCAN_TOL,
    threads: int = 1,
) -> ConvergenceReport:
    """Convergence table for E(exp(-theta S_n)) over the n grid."""
    n_grid = list(n_grid)
    if len(n_grid) < 2 or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be increasing with at least two points")
    if mode == "exact":
        values: list = [diag.exact_laplace(theta, n) for n in n_grid]
        final_delta = abs(values[-1] - values[-2])
        converged = final_delta < tol
        q_hat = _aitken(values) if len(values) >= 3 else values[-1]
    elif mode == "mc":
        values = [
            mc_tilted_expectation(
                diag.sampler,
                theta,
                n,
                n_samples=n_samples,
                seed=seed,
                threads=threads,
                stream_offset=j * _STREAM_STRIDE,
            )
            for j, n in enumerate(n_grid)
        ]
        final_delta = abs(values[-1].mean - values[-2].mean)
        converged = final_delta <= 3.0 * (values[-1].stderr + values[-2].stderr)
        q_hat = values[-1].mean
    else:
        raise ValueError(f"mode must be 'exact' or 'mc', got {mode!r}")
    return ConvergenceReport(
        theta=theta,
        n_grid=n_grid,
        values=values,
        mode=mode,
        converged=converged,
        final_delta=final_delta,
        q_hat=q_hat,
        tol=tol,
    )


def _trend(values: Sequence[float], flat_tol: float) -> str:
    diffs = np.diff(values)
    if np.abs(diffs).max() < flat_tol:
        return "flat"
    if (diffs < 0).all():
        return "decreasing"
    if (diffs > 0).all():
        return "increasing"
    return "mixed"


def _expected_trend(factor: float) -> str:
    if factor == 1.0:
        return "flat"
    return "decreasing" if factor < 1.0 else "increasing"


def phi_sweep(
    diag: Diagnostics,
    theta_star: float,
    factors: Sequence[float],
    n_grid: Sequence[int],
    flat_tol: float = FLAT_TOL,
    expect: Optional[dict] = None,
) -> PhiSweepReport:
    """Trend of the exact E(exp(-phi S_n)) sequence at phi = factor * theta_star.

    Below the tilt parameter the sequence must fall toward 0, above it it
    must blow up, and at the tilt parameter it is flat up to ``flat_tol``.
    ``expect`` overrides the expected verdict per factor (keys may be
    floats or their string form).
    """
    n_grid = list(n_grid)
    trends = []
    for f in factors:
        phi = f * theta_star
        values = [diag.exact_laplace(phi, n) for n in n_grid]
        verdict = _trend(values, flat_tol)
        expected = _expected_trend(f)
        if expect is not None:
            for key in (f, str(f)):
                if key in expect:
                    expected = expect[key]
        trends.append(
            FactorTrend(factor=f, phi=phi, values=values, verdict=verdict, expected=expected)
        )
    return PhiSweepReport(theta_star=theta_star, n_grid=n_grid, trends=trends)


def martingale_mc_test(
    diag: Diagnostics,
    k_max: int,
    n_samples: int = MC_SAMPLES,
    seed: int = 0,
    threads: int = 1,
    block_size: int = MC_BLOCK_SIZE,
) -> list[MCEstimate]:
    """MC estimates of E(V_{k+1} - V_k) for k = 1..k_max.

    Every estimate must sit within a few standard errors of 0 when the
    martingale construction is right.  Block/stream layout matches the
    MC engine, so thread count cannot change the result.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")

    def run_block(spec: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
        stream, size = spec
        V = diag.martingale_block(seed, stream, size, k_max)
        D = np.diff(V, axis=1)
        return D.sum(axis=0), (D * D).sum(axis=0)

    blocks = _block_layout(n_samples, block_size)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(run_block, blocks))
    else:
        partials = [run_block(b) for b in blocks]

    total = np.zeros(k_max)
    total_sq = np.zeros(k_max)
    for s, sq in partials:
        total += s
        total_sq += sq
    out = []
    for k in range(k_max):
        mean = total[k] / n_samples
        var = max(0.0, (total_sq[k] - n_samples * mean * mean) / (n_samples - 1))
        out.append(MCEstimate(float(mean), math.sqrt(var / n_samples), n_samples, seed))
    return out


def assumption2_convergence(
    model: mk.MarkovModel,
    tilt: mk.TiltSolution,
    k: int,
    mn_grid: Sequence[tuple[int, int]],
    tol: float = 1e-10,
    cap: int = CYLINDER_CAP,
) -> Assumption2Report:
    """Max error of tilted cylinder ratios vs associated-chain probabilities.

    For each (m, n), every (2k+1)-cylinder's two-sided tilted expectation is
    divided by the unconditional one and compared with the stationary
    cylinder probability of the associated chain — all by exact matrix
    powers.  Errors along a nested grid shrink geometrically with the
    subdominant eigenvalue.
    """
    s = model.n_states
    n_cyl = s ** (2 * k + 1)
    if n_cyl > cap:
        raise ModelError(f"{n_cyl} cylinders exceeds the cap of {cap}")
    mn_grid = [(int(m), int(n)) for m, n in mn_grid]
    for m, n in mn_grid:
        if m <= k or n <= k:
            raise ValueError(f"need m, n > k; got ({m}, {n}) with k={k}")

    theta = tilt.theta
    Q = mk.tilt_matrix(model, theta)
    P_star, pi_star = mk._associated_pair(model, theta, tilt.v, tilt.c)
    mu = model.pi * np.exp(-theta * model.states)
    states = model.states
    P = model.P
    pi = model.pi

    max_errors = []
    for m, n in mn_grid:
        fwd = np.ones(s)
        for _ in range(n - k):
            fwd = Q @ fwd
        bwd = mu.copy()
        for _ in range(m - k):
            bwd = bwd @ Q
        denom = bwd.copy()
        for _ in range(n + k):
            denom = denom @ Q
        denom_val = float(denom.sum())

        worst = 0.0
        for cyl in itertools.product(range(s), repeat=2 * k + 1):
            w = math.exp(-theta * float(states[list(cyl)].sum())) * pi[cyl[0]]
            p_cyl = pi_star[cyl[0]]
            for a, b in zip(cyl, cyl[1:]):
                w *= P[a, b]
                p_cyl *= P_star[a, b]
            num = w * fwd[cyl[-1]] * bwd[cyl[0]] / mu[cyl[0]]
            worst = max(worst, abs(num / denom_val - p_cyl))
        max_errors.append(float(worst))
    return Assumption2Report(k=k, mn_grid=mn_grid, max_errors=max_errors, tol=tol)
