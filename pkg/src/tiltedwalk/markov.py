"""Exponential tilting of finite-state Markov increment chains.

States ARE the increment values: a chain on distinct reals, with a
row-stochastic transition matrix and its stationary vector.  Tilting by
theta multiplies column j of the transition matrix by exp(-theta * s_j);
the unique theta > 0 that restores Perron eigenvalue 1 is the decay rate
of ruin probabilities, and the Perron pair (v, c) builds the associated
(drift-reversed) chain and the martingale c_{X_k} exp(-theta * S_k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import IncrementPath, IncrementSampler, stream_rng
from .defaults import EIGEN_TOL, EXP_GUARD, POWER_ITER_CAP, ROOT_TOL, THETA_CAP
from .errors import ConvergenceError, ModelError, NoTiltError, TiltOverflowError

__all__ = [
    "MarkovModel",
    "TiltSolution",
    "MarkovSampler",
    "validate",
    "require_valid",
    "tilt_matrix",
    "perron",
    "solve_theta",
    "solve_tilt",
    "q_value",
    "associated",
    "cylinder_pstar",
    "exact_tilted_expectation",
    "exact_tilted_cylinder",
    "martingale_path",
    "one_step_martingale_identity",
    "duality_roundtrip",
]

_ROW_SUM_TOL = 1e-12
_STATIONARY_TOL = 1e-10


@dataclass(frozen=True)
class MarkovModel:
    """Finite stationary increment chain.

    ``states`` are the increment values (distinct reals), ``P`` the
    row-stochastic transition matrix, ``pi`` the stationary distribution.
    ``associated`` marks a drift-reversed chain produced by tilting, whose
    drift is required to be negative instead of positive.
    """

    states: np.ndarray
    P: np.ndarray
    pi: np.ndarray
    associated: bool = False

    def __post_init__(self):
        object.__setattr__(self, "states", np.asarray(self.states, dtype=float))
        object.__setattr__(self, "P", np.asarray(self.P, dtype=float))
        object.__setattr__(self, "pi", np.asarray(self.pi, dtype=float))

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    @property
    def drift(self) -> float:
        return float(self.pi @ self.states)

    def state_index(self, value: float) -> int:
        hits = np.flatnonzero(self.states == value)
        if hits.size != 1:
            raise ValueError(f"unknown state {value!r}")
        return int(hits[0])

    @classmethod
    def from_dict(cls, obj: dict, associated: bool = False) -> "MarkovModel":
        """Build from the JSON interchange form {"states", "P", "pi"?}.

        When "pi" is absent it is computed as the Perron left vector of P.
        """
        try:
            states = np.asarray(obj["states"], dtype=float)
            P = np.asarray(obj["P"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelError(f"bad Markov model spec: {exc}") from exc
        if "pi" in obj and obj["pi"] is not None:
            pi = np.asarray(obj["pi"], dtype=float)
        else:
            if P.ndim != 2 or P.shape[0] != P.shape[1]:
                raise ModelError("P must be a square matrix")
            _, pi, _ = perron(P)
        flag = bool(obj.get("associated", associated))
        return cls(states, P, pi, associated=flag)

    def to_dict(self) -> dict:
        out = {
            "states": self.states.tolist(),
            "P": self.P.tolist(),
            "pi": self.pi.tolist(),
        }
        if self.associated:
            out["associated"] = True
        return out


@dataclass(frozen=True)
class TiltSolution:
    """Tilt parameter with its Perron pair, normalized so v.1 = v.c = 1.

    q = pi.c is the limit of the tilted expectations E(exp(-theta S_n)).
    """

    theta: float
    v: np.ndarray
    c: np.ndarray
    q: float

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    stack = [start]
    seen[start] = True
    while stack:
        u = stack.pop()
        for v in np.flatnonzero(adj[u]):
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    return seen


def _is_irreducible(adj: np.ndarray) -> bool:
    return bool(_reachable(adj, 0).all() and _reachable(adj.T, 0).all())


def _period(adj: np.ndarray) -> int:
    """gcd of cycle lengths through state 0 (chain assumed irreducible)."""
    n = adj.shape[0]
    level = np.full(n, -1)
    level[0] = 0
    queue = [0]
    g = 0
    while queue:
        u = queue.pop(0)
        for v in np.flatnonzero(adj[u]):
            if level[v] < 0:
                level[v] = level[u] + 1
                queue.append(int(v))
            else:
                g = math.gcd(g, level[u] + 1 - level[v])
    return abs(g) if g != 0 else 0


def validate(model: MarkovModel) -> list[str]:
    """Every violated invariant, as human-readable strings (empty = valid).

    Drift must be positive, or negative when the model carries the
    ``associated`` flag.
    """
    out: list[str] = []
    n = model.n_states
    if n == 0:
        return ["model has no states"]
    if model.states.ndim != 1:
        return ["states must be a 1-d list of reals"]
    if np.unique(model.states).size != n:
        out.append("state values must be distinct reals")
    if model.P.shape != (n, n):
        out.append(f"P must be {n}x{n}, got {model.P.shape}")
        return out
    if model.pi.shape != (n,):
        out.append(f"pi must have length {n}, got {model.pi.shape}")
        return out
    if (model.P < 0).any():
        out.append("P has negative entries")
    row_err = np.abs(model.P.sum(axis=1) - 1.0).max()
    if row_err > _ROW_SUM_TOL:
        out.append(f"P rows must sum to 1 (max deviation {row_err:.3g})")
    if (model.pi <= 0).any():
        out.append("pi must be strictly positive")
    if abs(model.pi.sum() - 1.0) > _STATIONARY_TOL:
        out.append(f"pi must sum to 1 (got {model.pi.sum():.12g})")
    stat_err = np.abs(model.pi @ model.P - model.pi).max()
    if stat_err > _STATIONARY_TOL:
        out.append(f"pi is not stationary for P (max deviation {stat_err:.3g})")
    adj = model.P > 0
    if not _is_irreducible(adj):
        out.append("chain is reducible")
    elif _period(adj) != 1:
        out.append(f"chain is periodic (period {_period(adj)})")
    drift = model.drift
    if model.associated:
        if drift >= 0:
            out.append(f"associated chain must have negative drift (got {drift:.6g})")
    elif drift <= 0:
        out.append(f"chain must have positive drift (got {drift:.6g})")
    return out


def require_valid(model: MarkovModel) -> None:
    violations = validate(model)
    if violations:
        raise ModelError("; ".join(violations))


# ---------------------------------------------------------------------------
# tilts
# ---------------------------------------------------------------------------

def tilt_matrix(model: MarkovModel, theta: float) -> np.ndarray:
    """Matrix with entries p_ij * exp(-theta * s_j)."""
    exponents = -theta * model.states
    if exponents.max() > EXP_GUARD:
        raise TiltOverflowError(
            f"tilt factor exp({exponents.max():.3g}) exceeds double range at "
            f"theta={theta:.6g}"
        )
    return model.P * np.exp(exponents)[None, :]


def perron(
    M: np.ndarray,
    tol: float = EIGEN_TOL,
    max_iter: int = POWER_ITER_CAP,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Perron root with left/right vectors of a nonnegative irreducible matrix.

    Power iteration with max-norm normalization, started from the ones
    vector; the residual test runs on the finally-normalized pair
    (v.1 = 1, v.c = 1) with tolerance relative to max(1, lambda).
    Non-convergence inside ``max_iter`` (periodic pattern, or tol below
    attainable precision) raises ``ConvergenceError``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    if (M < 0).any():
        raise ValueError("matrix must be nonnegative")
    n = M.shape[0]
    if n == 1:
        return float(M[0, 0]), np.ones(1), np.ones(1)
    if not (_is_irreducible(M > 0)):
        raise ValueError("matrix must be irreducible")

    c = np.ones(n)
    v = np.ones(n)
    for _ in range(max_iter):
        Mc = M @ c
        vM = v @ M
        c_new = Mc / Mc.max()
        v_new = vM / vM.max()
        vn = v_new / v_new.sum()
        cn = c_new / (vn @ c_new)
        lam = float(vn @ M @ cn)  # equals vn.(M cn)/(vn.cn) with vn.cn = 1
        scale = max(1.0, abs(lam))
        res_c = np.abs(M @ cn - lam * cn).max()
        res_v = np.abs(vn @ M - lam * vn).max()
        c, v = c_new, v_new
        if res_c <= tol * scale and res_v <= tol * scale:
            return lam, vn, cn
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} steps "
        f"(periodic matrix, or tol={tol:.1e} too tight)"
    )


def _perron_root(model: MarkovModel, theta: float, tol: float) -> float:
    """Perron eigenvalue of the tilted matrix; +inf when entries overflow."""
    try:
        lam, _, _ = perron(tilt_matrix(model, theta), tol=tol)
    except TiltOverflowError:
        return math.inf
    return lam


def solve_theta(
    model: MarkovModel,
    tol: float = ROOT_TOL,
    theta_cap: float = THETA_CAP,
) -> float:
    """The unique theta > 0 with Perron root 1 of the tilted matrix.

    The root is bracketed by doubling from ``tol`` until the eigenvalue
    exceeds 1 (it equals 1 at theta = 0, initially descends because the
    drift is positive, and is log-convex, so the positive crossing is
    unique), then bisected until |lambda - 1| < tol.  If the eigenvalue
    never exceeds 1 up to ``theta_cap`` — e.g. all increments positive —
    ``NoTiltError`` reports the cap.
    """
    require_valid(model)
    eigen_tol = min(tol, EIGEN_TOL)
    # 64-ulp margin: near theta = 0 the eigenvalue sits just below 1 and
    # solver noise must not fake a bracket.
    margin = 64.0 * np.finfo(float).eps

    lo = None
    hi = None
    t = max(tol, 1e-12)
    while t <= theta_cap:
        lam = _perron_root(model, t, eigen_tol)
        if lam > 1.0 + margin:
            hi = t
            break
        lo = t
        t *= 2.0
    if hi is None:
        lam_cap = _perron_root(model, theta_cap, eigen_tol)
        if lam_cap > 1.0 + margin:
            hi = theta_cap
        else:
            raise NoTiltError(
                f"Perron root stays below 1 for all theta in (0, {theta_cap}]; "
                "no tilt exists (is every increment nonnegative?)"
            )
    if lo is None:
        lo = 0.0

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lam = _perron_root(model, mid, eigen_tol)
        if abs(lam - 1.0) < tol:
            return mid
        if lam > 1.0:
            hi = mid
        else:
            lo = mid
    raise ConvergenceError(
        f"bisection stalled on [{lo:.17g}, {hi:.17g}] without reaching "
        f"|lambda - 1| < {tol:.1e}"
    )


def solve_tilt(model: MarkovModel, tol: float = ROOT_TOL) -> TiltSolution:
    """Solve for theta and package the normalized Perron pair and q."""
    theta = solve_theta(model, tol=tol)
    _, v, c = perron(tilt_matrix(model, theta))
    return TiltSolution(theta=theta, v=v, c=c, q=float(model.pi @ c))


def q_value(model: MarkovModel, tilt: TiltSolution) -> float:
    """Limit constant of the tilted expectations: pi.c (v is 1-normalized)."""
    return float(model.pi @ tilt.c)


def _associated_pair(
    model: MarkovModel, theta: float, v: np.ndarray, c: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """(P*, pi*) built self-consistently: rows are divided by the computed
    (Qc)_i rather than c_i, so stochasticity holds to rounding even when the
    eigenvector carries residual error (Qc = c makes the two identical)."""
    Q = tilt_matrix(model, theta)
    Qc = Q @ c
    P_star = Q * c[None, :] / Qc[:, None]
    pi_star = c * v
    pi_star = pi_star / pi_star.sum()
    return P_star, pi_star


def associated(model: MarkovModel, tilt: TiltSolution) -> MarkovModel:
    """The drift-reversed chain: p*_ij = p_ij e^{-theta j} c_j / c_i, pi* = c v."""
    P_star, pi_star = _associated_pair(model, tilt.theta, tilt.v, tilt.c)
    return MarkovModel(model.states, P_star, pi_star, associated=not model.associated)


def cylinder_pstar(model: MarkovModel, tilt: TiltSolution, cyl_states: Sequence[float]) -> float:
    """Associated-chain probability of the cylinder fixing the listed states."""
    if len(cyl_states) == 0:
        raise ValueError("cylinder must fix at least one coordinate")
    idx = [model.state_index(s) for s in cyl_states]
    P_star, pi_star = _associated_pair(model, tilt.theta, tilt.v, tilt.c)
    prob = float(pi_star[idx[0]])
    for a, b in zip(idx, idx[1:]):
        prob *= P_star[a, b]
    return prob


def _tilted_power_vec(Q: np.ndarray, n: int) -> np.ndarray:
    """Q^n applied to the ones vector by repeated matvec."""
    w = np.ones(Q.shape[0])
    for _ in range(n):
        w = Q @ w
    return w


def exact_tilted_expectation(model: MarkovModel, theta: float, m: int, n: int) -> float:
    """E(exp(-theta * S_{-m,n})) by matrix powers: mu^T Q^{m+n} 1 with
    mu_i = pi_i exp(-theta * s_i)."""
    if m < 0 or n < 0:
        raise ValueError("m and n must be nonnegative")
    Q = tilt_matrix(model, theta)
    mu = model.pi * np.exp(-theta * model.states)
    return float(mu @ _tilted_power_vec(Q, m + n))


def exact_tilted_cylinder(
    model: MarkovModel,
    theta: float,
    m: int,
    n: int,
    k: int,
    cyl_states: Sequence[float],
) -> float:
    """E(exp(-theta * S_{-m,n}); X_{-k} = i_{-k}, ..., X_k = i_k), exactly.

    Three factors, no sampling: the tilted window probability; the forward
    continuation (Q^{n-k} 1 at the right edge); and the reversed-chain
    continuation (mu^T Q^{m-k} at the left edge, divided by mu there).
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    if m <= k or n <= k:
        raise ValueError(f"need m > k and n > k, got m={m}, n={n}, k={k}")
    if len(cyl_states) != 2 * k + 1:
        raise ValueError(f"cylinder must fix 2k+1 = {2 * k + 1} coordinates")
    idx = [model.state_index(s) for s in cyl_states]
    Q = tilt_matrix(model, theta)

    window = math.exp(-theta * float(np.sum(cyl_states))) * model.pi[idx[0]]
    for a, b in zip(idx, idx[1:]):
        window *= model.P[a, b]

    forward = _tilted_power_vec(Q, n - k)[idx[-1]]

    mu = model.pi * np.exp(-theta * model.states)
    w = mu.copy()
    for _ in range(m - k):
        w = w @ Q
    backward = w[idx[0]] / mu[idx[0]]

    return float(window * forward * backward)


def martingale_path(model: MarkovModel, tilt: TiltSolution, path: IncrementPath) -> np.ndarray:
    """V_k = c_{X_k} exp(-theta * S_k) along a path of states X_1..X_n."""
    if path.start_index != 1:
        raise ValueError("martingale paths start at index 1")
    idx = np.array([model.state_index(x) for x in path.values])
    S = np.cumsum(path.values)
    return tilt.c[idx] * np.exp(-tilt.theta * S)


def one_step_martingale_identity(model: MarkovModel, tilt: TiltSolution, state: float) -> float:
    """Residual sum_j p_ij e^{-theta s_j} c_j - c_i; zero iff Qc = c holds at i."""
    i = model.state_index(state)
    Q = tilt_matrix(model, tilt.theta)
    return float(Q[i] @ tilt.c - tilt.c[i])


def duality_roundtrip(model: MarkovModel, tilt: TiltSolution) -> tuple[MarkovModel, float]:
    """Tilt the associated chain by -theta and rebuild; distance to original.

    Returns the reconstructed model and the max-norm error over the
    transition matrix and the stationary vector.
    """
    assoc = associated(model, tilt)
    _, v2, c2 = perron(tilt_matrix(assoc, -tilt.theta))
    P_back, pi_back = _associated_pair(assoc, -tilt.theta, v2, c2)
    rebuilt = MarkovModel(model.states, P_back, pi_back, associated=model.associated)
    err = max(
        float(np.abs(P_back - model.P).max()),
        float(np.abs(pi_back - model.pi).max()),
    )
    return rebuilt, err


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

class MarkovSampler(IncrementSampler):
    """Stationary chain sampler: X_1 from pi, then row-wise transitions."""

    def __init__(self, model: MarkovModel):
        require_valid(model)
        self.model = model
        self._cum_pi = np.cumsum(model.pi)
        self._cum_P = np.cumsum(model.P, axis=1)

    def sample_index_block(self, seed: int, stream_id: int, n_paths: int, n: int) -> np.ndarray:
        """State indices as an (n_paths, n) integer array."""
        rng = stream_rng(seed, stream_id)
        idx = np.empty((n_paths, n), dtype=np.intp)
        cur = np.searchsorted(self._cum_pi, rng.random(n_paths), side="right")
        np.minimum(cur, self.model.n_states - 1, out=cur)
        idx[:, 0] = cur
        for t in range(1, n):
            u = rng.random(n_paths)
            cur = (self._cum_P[cur] < u[:, None]).sum(axis=1)
            np.minimum(cur, self.model.n_states - 1, out=cur)
            idx[:, t] = cur
        return idx

    def sample_block(self, seed: int, stream_id: int, n_paths: int, n: int) -> np.ndarray:
        return self.model.states[self.sample_index_block(seed, stream_id, n_paths, n)]
