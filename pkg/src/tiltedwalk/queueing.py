"""Single-server waiting times and their exponential tail decay.

Waiting times follow W_{n+1} = (W_n + U_n - T_n)^+ with i.i.d. service
times U and stationary inter-arrival times T.  The walk with increments
T - U determines the tail: its tilt parameter is the decay rate of the
equilibrium waiting-time distribution.  Covered arrival disciplines are
Poisson (renewal exponential) and a regular appointments book with i.i.d.
clock errors, whose inter-arrival sequence is 1-dependent stationary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .core import stream_rng
from .defaults import (
    BURN_IN_FRACTION,
    QUEUE_ROOT_TOL,
    TAIL_BLOCKS,
    TAIL_GRID_POINTS,
    TAIL_LOWER_Q,
    TAIL_UPPER_Q,
)
from .errors import ConvergenceError, ModelError, NoRootError

__all__ = [
    "ExponentialService",
    "GammaService",
    "DeterministicService",
    "UniformError",
    "NoError",
    "PoissonArrivals",
    "AppointmentArrivals",
    "QueueModel",
    "WaitingSample",
    "lindley",
    "simulate_queue",
    "mm1_theta",
    "poisson_theta",
    "appointments_laplace_Sn",
    "appointments_theta",
    "comparison_factor",
    "tail_decay_estimate",
    "tail_regression_points",
    "spot_check_service",
]


# ---------------------------------------------------------------------------
# service and error distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentialService:
    """Exponential service at rate mu: phi(t) = mu / (mu + t), finite for t > -mu."""

    mu: float

    def __post_init__(self):
        if self.mu <= 0:
            raise ModelError("service rate must be positive")

    @property
    def mean(self) -> float:
        return 1.0 / self.mu

    @property
    def phi_sup(self) -> float:
        """Largest theta with phi(-theta) finite."""
        return self.mu

    def phi(self, t: float) -> float:
        if t <= -self.mu:
            raise ValueError(f"transform argument {t} outside domain (> {-self.mu})")
        return self.mu / (self.mu + t)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.exponential(1.0 / self.mu, size=size)


@dataclass(frozen=True)
class GammaService:
    """Gamma(shape, rate) service: phi(t) = (rate / (rate + t))^shape."""

    shape: float
    rate: float

    def __post_init__(self):
        if self.shape <= 0 or self.rate <= 0:
            raise ModelError("gamma shape and rate must be positive")

    @property
    def mean(self) -> float:
        return self.shape / self.rate

    @property
    def phi_sup(self) -> float:
        return self.rate

    def phi(self, t: float) -> float:
        if t <= -self.rate:
            raise ValueError(f"transform argument {t} outside domain (> {-self.rate})")
        return (self.rate / (self.rate + t)) ** self.shape

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.gamma(self.shape, 1.0 / self.rate, size=size)


@dataclass(frozen=True)
class DeterministicService:
    """Constant service time d: phi(t) = exp(-t d), entire."""

    d: float

    def __post_init__(self):
        if self.d <= 0:
            raise ModelError("service time must be positive")

    @property
    def mean(self) -> float:
        return self.d

    @property
    def phi_sup(self) -> float:
        return math.inf

    def phi(self, t: float) -> float:
        return math.exp(-t * self.d)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.full(size, self.d)


Service = Union[ExponentialService, GammaService, DeterministicService]


@dataclass(frozen=True)
class UniformError:
    """Appointment error uniform on (-a, a): psi(t) = sinh(a t) / (a t)."""

    a: float

    def __post_init__(self):
        if self.a <= 0:
            raise ModelError("error half-width must be positive")

    def psi(self, t: float) -> float:
        x = self.a * t
        if x == 0.0:
            return 1.0
        return math.sinh(x) / x

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(-self.a, self.a, size=size)


@dataclass(frozen=True)
class NoError:
    """Perfectly punctual appointments: psi = 1."""

    def psi(self, t: float) -> float:
        return 1.0

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return np.zeros(size)


ErrorDist = Union[UniformError, NoError]


@dataclass(frozen=True)
class PoissonArrivals:
    """Renewal exponential inter-arrivals at rate lam."""

    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ModelError("arrival rate must be positive")


@dataclass(frozen=True)
class AppointmentArrivals:
    """Customer n booked at clock time n/lam + error_n.

    Inter-arrival times are 1/lam + e_n - e_{n-1}, a 1-dependent stationary
    sequence.  The error half-width must stay below 1/(2 lam) so arrivals
    keep their order.
    """

    lam: float
    error: ErrorDist = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.lam <= 0:
            raise ModelError("arrival rate must be positive")
        if self.error is None:
            object.__setattr__(self, "error", UniformError(0.25 / self.lam))
        if isinstance(self.error, UniformError) and self.error.a >= 0.5 / self.lam:
            raise ModelError(
                f"error half-width {self.error.a} must be below 1/(2 lam) = "
                f"{0.5 / self.lam} to keep arrivals ordered"
            )


Arrivals = Union[PoissonArrivals, AppointmentArrivals]


@dataclass(frozen=True)
class QueueModel:
    """Arrival discipline plus i.i.d. service law; must be stable."""

    arrivals: Arrivals
    service: Service

    @property
    def lam(self) -> float:
        return self.arrivals.lam

    @property
    def stable(self) -> bool:
        return 1.0 / self.lam > self.service.mean

    def require_stable(self) -> None:
        if not self.stable:
            raise ModelError(
                f"unstable queue: mean inter-arrival {1.0 / self.lam:.6g} must "
                f"exceed mean service {self.service.mean:.6g}"
            )

    @classmethod
    def from_dict(cls, obj: dict) -> "QueueModel":
        try:
            arr = obj["arrivals"]
            svc = obj["service"]
            akind = arr["type"]
            skind = svc["type"]
        except (KeyError, TypeError) as exc:
            raise ModelError(f"bad queue spec: {exc}") from exc
        if akind == "poisson":
            arrivals: Arrivals = PoissonArrivals(float(arr["lambda"]))
        elif akind == "appointments":
            err = arr.get("error")
            if err is None:
                error: ErrorDist = None  # type: ignore[assignment]
            elif err["type"] == "uniform":
                error = UniformError(float(err["a"]))
            elif err["type"] == "none":
                error = NoError()
            else:
                raise ModelError(f"unknown error distribution {err['type']!r}")
            arrivals = AppointmentArrivals(float(arr["lambda"]), error)
        else:
            raise ModelError(f"unknown arrival type {akind!r}")
        if skind == "exponential":
            service: Service = ExponentialService(float(svc["mu"]))
        elif skind == "gamma":
            service = GammaService(float(svc["shape"]), float(svc["rate"]))
        elif skind == "deterministic":
            service = DeterministicService(float(svc["d"]))
        else:
            raise ModelError(f"unknown service type {skind!r}")
        return cls(arrivals, service)

    def to_dict(self) -> dict:
        if isinstance(self.arrivals, PoissonArrivals):
            arr: dict = {"type": "poisson", "lambda": self.arrivals.lam}
        else:
            err = self.arrivals.error
            err_obj = (
                {"type": "uniform", "a": err.a}
                if isinstance(err, UniformError)
                else {"type": "none"}
            )
            arr = {"type": "appointments", "lambda": self.arrivals.lam, "error": err_obj}
        if isinstance(self.service, ExponentialService):
            svc: dict = {"type": "exponential", "mu": self.service.mu}
        elif isinstance(self.service, GammaService):
            svc = {"type": "gamma", "shape": self.service.shape, "rate": self.service.rate}
        else:
            svc = {"type": "deterministic", "d": self.service.d}
        return {"arrivals": arr, "service": svc}


@dataclass(frozen=True)
class WaitingSample:
    """Simulated equilibrium waits (burn-in already discarded)."""

    waits: np.ndarray
    n_customers: int
    burn_in: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "waits", np.asarray(self.waits, dtype=float))
        if (self.waits < 0).any():
            raise ValueError("waiting times must be nonnegative")


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def lindley(T, U) -> np.ndarray:
    """Waiting times from inter-arrival and service sequences.

    W_1 = 0 and W_{n+1} = (W_n + U_n - T_n)^+, applied exactly; the output
    has one more entry than the inputs.
    """
    T = np.asarray(T, dtype=float)
    U = np.asarray(U, dtype=float)
    if T.shape != U.shape or T.ndim != 1:
        raise ValueError("T and U must be 1-d sequences of equal length")
    xi = (U - T).tolist()
    out = np.empty(len(xi) + 1)
    out[0] = 0.0
    w = 0.0
    for i, x in enumerate(xi):
        w = w + x
        if w < 0.0:
            w = 0.0
        out[i + 1] = w
    return out


def _interarrival_times(arrivals: Arrivals, count: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(arrivals, PoissonArrivals):
        return rng.exponential(1.0 / arrivals.lam, size=count)
    eps = arrivals.error.sample(rng, count + 1)
    return 1.0 / arrivals.lam + eps[1:] - eps[:-1]


def simulate_queue(model: QueueModel, n: int, burn_in: int | None = None, seed: int = 0) -> WaitingSample:
    """Waits of ``n`` customers in equilibrium-ish state.

    Runs the recursion for burn_in + n customers (burn-in defaults to 1% of
    n) and keeps the last n waits.  Stream 0 drives arrivals, stream 1
    services, so one seed reproduces the sample exactly.
    """
    model.require_stable()
    if n < 1:
        raise ValueError("need at least one customer")
    if burn_in is None:
        burn_in = max(1, int(BURN_IN_FRACTION * n))
    total = burn_in + n
    T = _interarrival_times(model.arrivals, total - 1, stream_rng(seed, 0))
    U = model.service.sample(stream_rng(seed, 1), total - 1)
    waits = lindley(T, U)
    return WaitingSample(waits=waits[burn_in:], n_customers=n, burn_in=burn_in, seed=seed)


# ---------------------------------------------------------------------------
# tilt parameters
# ---------------------------------------------------------------------------

def mm1_theta(lam: float, mu: float) -> float:
    """Decay rate mu - lam of the M/M/1 waiting-time tail."""
    if not mu > lam > 0:
        raise ModelError(f"need mu > lam > 0, got lam={lam}, mu={mu}")
    return mu - lam


def _guarded(g: Callable[[float], float], t: float, finite_sup: bool) -> float:
    """g(t) with overflow handling.

    Near a finite divergence abscissa an overflow really means the factor
    blew up (g > 0), because the exp(-t/lam) part is bounded below there.
    With an infinite abscissa the overflow is inconclusive, so the search
    is reported as exhausted.
    """
    try:
        return g(t)
    except OverflowError:
        if finite_sup:
            return math.inf
        raise NoRootError(
            f"transform factor overflowed at theta={t:.6g} with no sign "
            "change found below; no root on the searched interval"
        ) from None


def _bisect_root(
    g: Callable[[float], float], lo: float, hi: float, tol: float, finite_sup: bool
) -> float:
    """Bisection for g(lo) < 0 < g(hi) down to |g| < tol."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        val = _guarded(g, mid, finite_sup)
        if abs(val) < tol:
            return mid
        if val > 0:
            hi = mid
        else:
            lo = mid
    raise ConvergenceError(
        f"bisection stalled on [{lo:.17g}, {hi:.17g}] without |g| < {tol:.1e}"
    )


def poisson_theta(service: Service, lam: float, tol: float = QUEUE_ROOT_TOL) -> float:
    """Tilt parameter for Poisson arrivals and the given service law.

    Solves lam * phi(-theta) = lam + theta; reduces to mu - lam exactly for
    exponential service.
    """
    if isinstance(service, ExponentialService):
        return mm1_theta(lam, service.mu)
    if not 1.0 / lam > service.mean:
        raise ModelError("unstable queue")
    g = lambda t: lam * service.phi(-t) - (lam + t)
    hi = _find_upcross(g, service.phi_sup)
    lo = _find_downcross(g, hi)
    return _bisect_root(g, lo, hi, tol, not math.isinf(service.phi_sup))


def _find_upcross(g: Callable[[float], float], sup: float) -> float:
    """Smallest probed t with g(t) > 0, probing geometrically toward sup."""
    finite = not math.isinf(sup)
    if finite:
        probes = (sup * (1.0 - 0.5**j) for j in range(1, 50))
    else:
        probes = (2.0**j for j in range(61))
    last = 0.0
    for t in probes:
        if _guarded(g, t, finite) > 0:
            return t
        last = t
    raise NoRootError(
        "tilt equation stays nonpositive over the searched interval "
        f"(up to {sup if finite else last:.6g}); no root"
    )


def _find_downcross(g: Callable[[float], float], hi: float) -> float:
    """A t in (0, hi) with g(t) < 0 (exists: g(0) = 0 with negative slope)."""
    t = 0.5 * hi
    for _ in range(80):
        if g(t) < 0:
            return t
        t *= 0.5
    raise NoRootError("could not find a negative bracket near 0; g'(0) >= 0?")


def appointments_laplace_Sn(
    phi: Callable[[float], float],
    psi: Callable[[float], float],
    lam: float,
    theta: float,
    n: int,
) -> float:
    """E(exp(-theta S_n)) for the appointments walk T - U:
    phi(-theta)^n exp(-n theta / lam) psi(theta) psi(-theta)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    return phi(-theta) ** n * math.exp(-n * theta / lam) * psi(theta) * psi(-theta)


def appointments_theta(
    phi: Callable[[float], float],
    lam: float,
    tol: float = QUEUE_ROOT_TOL,
    phi_sup: float = math.inf,
) -> float:
    """Positive root of phi(-theta) exp(-theta / lam) = 1.

    The equation does not involve the appointment-error distribution at
    all, so no error spec is accepted here.  The root is bracketed on
    (0, phi_sup), where phi_sup is the abscissa at which phi(-theta)
    diverges, and bisected down to residual ``tol``.  ``NoRootError``
    means the function stayed below 1 on the whole bracket.
    """
    g = lambda t: phi(-t) * math.exp(-t / lam) - 1.0
    hi = _find_upcross(g, phi_sup)
    lo = _find_downcross(g, hi)
    return _bisect_root(g, lo, hi, tol, not math.isinf(phi_sup))


def comparison_factor(service: Service, lam: float) -> float:
    """phi(-theta) exp(-theta / lam) evaluated at the Poisson-arrival tilt.

    Below 1 exactly when appointments beat Poisson arrivals (a larger tilt
    parameter, hence a thinner waiting-time tail).  For exponential service
    at rate mu this is (mu / lam) exp(1 - mu / lam).
    """
    theta = poisson_theta(service, lam)
    return service.phi(-theta) * math.exp(-theta / lam)


# ---------------------------------------------------------------------------
# tail estimation
# ---------------------------------------------------------------------------

def _log_survival(sorted_pos: np.ndarray, grid: np.ndarray) -> np.ndarray:
    counts = sorted_pos.size - np.searchsorted(sorted_pos, grid, side="right")
    with np.errstate(divide="ignore"):
        return np.log(counts / sorted_pos.size)


def _ls_slope(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


def tail_regression_points(
    sample,
    lower_q: float = TAIL_LOWER_Q,
    upper_q: float = TAIL_UPPER_Q,
    n_points: int = TAIL_GRID_POINTS,
) -> tuple[np.ndarray, np.ndarray]:
    """The (threshold, log empirical survival) points the tail fit runs on.

    Thresholds span the window between the two quantiles of the positive
    waits; survival is conditional on a positive wait.
    """
    waits = np.asarray(getattr(sample, "waits", sample), dtype=float)
    if not 0.0 < lower_q < upper_q < 1.0:
        raise ValueError("need 0 < lower_q < upper_q < 1")
    pos = waits[waits > 0]
    if pos.size < 10**4:
        raise ValueError(
            f"insufficient tail mass: {pos.size} positive waits, need >= 10^4"
        )
    lo, hi = np.quantile(pos, [lower_q, upper_q])
    grid = np.linspace(lo, hi, n_points)
    return grid, _log_survival(np.sort(pos), grid)


def tail_decay_estimate(
    sample,
    lower_q: float = TAIL_LOWER_Q,
    upper_q: float = TAIL_UPPER_Q,
    n_points: int = TAIL_GRID_POINTS,
    n_blocks: int = TAIL_BLOCKS,
) -> tuple[float, float]:
    """Exponential decay rate of the waiting-time tail.

    Least-squares slope of the empirical log survival function on the
    window between the two quantiles of the positive waits, negated.  The
    standard error comes from re-estimating the slope on ``n_blocks``
    consecutive time blocks (batch means): the survival curve's deviations
    are strongly correlated across thresholds, so a naive regression SE
    would be far too small.

    ``sample`` is a WaitingSample or a bare array of waits.
    """
    waits = np.asarray(getattr(sample, "waits", sample), dtype=float)
    grid, logs = tail_regression_points(waits, lower_q, upper_q, n_points)
    theta_hat = -_ls_slope(grid, logs)

    slopes = []
    for chunk in np.array_split(waits, n_blocks):
        cpos = np.sort(chunk[chunk > 0])
        logs = _log_survival(cpos, grid)
        ok = np.isfinite(logs)
        if ok.sum() >= max(8, n_points // 4):
            slopes.append(-_ls_slope(grid[ok], logs[ok]))
    if len(slopes) < 2:
        raise ValueError("too few usable blocks for a standard error")
    stderr = float(np.std(slopes, ddof=1) / math.sqrt(len(slopes)))
    return theta_hat, stderr


def spot_check_service(
    service: Service,
    seed: int = 0,
    n_samples: int = 20000,
    k: float = 4.0,
) -> list[str]:
    """Monte Carlo consistency check of a service sampler against its transform.

    Compares E exp(-t U) with phi(t) at three positive grid points scaled
    by the mean service time; returns violation messages (empty = pass).
    """
    rng = stream_rng(seed, 2)
    draws = service.sample(rng, n_samples)
    out = []
    for t in (0.5 / service.mean, 1.0 / service.mean, 2.0 / service.mean):
        w = np.exp(-t * draws)
        mean = w.mean()
        se = w.std(ddof=1) / math.sqrt(n_samples)
        target = service.phi(t)
        if abs(mean - target) > k * max(se, 1e-15):
            out.append(
                f"E exp(-{t:.4g} U) = {mean:.6g} +- {se:.2g} disagrees with "
                f"phi({t:.4g}) = {target:.6g}"
            )
    return out
