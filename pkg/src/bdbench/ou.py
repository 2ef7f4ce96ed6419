"""Closed-form Ornstein-Uhlenbeck ground truth.

For the linear drift a(x) = -alpha x the process is Gaussian, so every
quantity the benchmark needs exists in closed form: transition moments, the
exact per-scheme moments of the three discretizations, the backward
Kolmogorov solution u(t, x) for the observables x and x^2, the leading
weak-error coefficients of the non-Markovian and Euler-Maruyama schemes, and
their accumulated time integrals.

The discrete-moment formulas are derived from the one-step affine recursions
(each scheme's update is affine in the state and the Gaussian increments)
and are cross-checked against step-by-step propagation of those recursions
in `discrete_moment_recursion`.  For the Euler scheme the stationary
variance is sigma^2/(2 alpha) * 1/(1 - alpha h/2): the discrete chain is an
AR(1) process X' = (1 - alpha h) X + sigma sqrt(h) xi whose fixed-point
variance is sigma^2 h / (1 - (1 - alpha h)^2), so the ergodic bias is
+sigma^2 h / 4 + O(h^2).  The non-Markovian scheme's ergodic variance is
exactly sigma^2/(2 alpha).
"""

import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.special

from .errors import StabilityDomainError
from .model import Cosine, PotentialSpec, Quadratic


@dataclass(frozen=True)
class OUParams:
    alpha: float
    sigma: float
    x0: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def gibbs_variance(self) -> float:
        return self.sigma ** 2 / (2.0 * self.alpha)


class Observable(enum.Enum):
    IDENTITY = "x"
    SQUARE = "x2"


def ou_exact_moments(p: OUParams, t: float) -> tuple[float, float]:
    """Mean and variance of the exact process at time t from x0."""
    if t < 0:
        raise ValueError("time must be nonnegative")
    mean = p.x0 * math.exp(-p.alpha * t)
    var = p.gibbs_variance * (1.0 - math.exp(-2.0 * p.alpha * t))
    return mean, var


def ou_transition_mean(p: OUParams, x: float, t: float) -> float:
    return x * math.exp(-p.alpha * t)


def ou_transition_variance(p: OUParams, t: float) -> float:
    return p.gibbs_variance * (1.0 - math.exp(-2.0 * p.alpha * t))


def _check_stability(p: OUParams, h: float) -> None:
    if not h > 0:
        raise ValueError("stepsize must be positive")
    if p.alpha * h >= 1.0:
        raise StabilityDomainError(f"alpha*h = {p.alpha * h} is outside alpha*h < 1")


def em_discrete_moments(p: OUParams, h: float, n: int) -> tuple[float, float]:
    """Exact mean/variance of the Euler-Maruyama chain after n steps."""
    _check_stability(p, h)
    if n == 0:
        return p.x0, 0.0
    z = p.alpha * h
    phi = 1.0 - z
    mean = p.x0 * phi ** n
    var = p.gibbs_variance * (1.0 - phi ** (2 * n)) / (1.0 - 0.5 * z)
    return mean, var


def em_limit_variance(p: OUParams, h: float) -> float:
    """Stationary variance of the Euler chain: biased by +sigma^2 h/4 + O(h^2)."""
    _check_stability(p, h)
    return p.gibbs_variance / (1.0 - 0.5 * p.alpha * h)


def lm_discrete_moments(p: OUParams, h: float, n: int) -> tuple[float, float]:
    """Exact mean/variance of the non-Markovian chain after n steps (xi_0 fresh)."""
    _check_stability(p, h)
    if n == 0:
        return p.x0, 0.0
    z = p.alpha * h
    phi = 1.0 - z
    mean = p.x0 * phi ** n
    var = p.gibbs_variance * (1.0 - phi ** (2 * n) / phi)
    return mean, var


def lm_limit_variance(p: OUParams, h: float) -> float:
    """Stationary variance of the non-Markovian chain: exactly sigma^2/(2 alpha)."""
    _check_stability(p, h)
    return p.gibbs_variance


def heun_discrete_moments(p: OUParams, h: float, n: int) -> tuple[float, float]:
    """Exact mean/variance of the Heun chain after n steps."""
    _check_stability(p, h)
    if n == 0:
        return p.x0, 0.0
    z = p.alpha * h
    phi = 1.0 - z + 0.5 * z * z
    c = 1.0 - 0.5 * z
    mean = p.x0 * phi ** n
    var = p.sigma ** 2 * h * c * c * (1.0 - phi ** (2 * n)) / (1.0 - phi * phi)
    return mean, var


def discrete_moment_recursion(scheme: str, p: OUParams, h: float, n: int) -> tuple[float, float]:
    """Mean/variance after n steps by propagating the affine one-step recursion.

    Independent of the closed forms above: tracks (mean, variance, and for
    the non-Markovian scheme the state/noise covariance) step by step.
    """
    _check_stability(p, h)
    z = p.alpha * h
    phi = 1.0 - z
    s2h = p.sigma ** 2 * h
    mean = p.x0
    var = 0.0
    if scheme == "em":
        for _ in range(n):
            mean = phi * mean
            var = phi * phi * var + s2h
    elif scheme == "lm":
        cov = 0.0  # Cov(X_k, xi_k); xi_0 is fresh so it starts at 0
        sq = p.sigma * math.sqrt(h)
        for _ in range(n):
            mean = phi * mean
            var = phi * phi * var + phi * sq * cov + 0.25 * s2h * 2.0
            cov = 0.5 * sq
    elif scheme == "heun":
        phi_h = 1.0 - z + 0.5 * z * z
        c = 1.0 - 0.5 * z
        for _ in range(n):
            mean = phi_h * mean
            var = phi_h * phi_h * var + s2h * c * c
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return mean, var


# ---------------------------------------------------------------------------
# Backward Kolmogorov solution and leading error coefficients


@dataclass(frozen=True)
class BackwardSolution:
    """u(t, x) = E phi(X_{t,x}(tau)) and its x-derivatives, in closed form.

    Identity: u = x e^{-alpha (tau - t)}.
    Square:   u = x^2 e^{-2 alpha (tau - t)} + (sigma^2/2 alpha)(1 - e^{-2 alpha (tau - t)}).
    """

    params: OUParams
    tau: float
    observable: Observable

    def _check(self, t: float) -> float:
        if t > self.tau:
            raise ValueError("evaluation time exceeds the terminal time")
        return self.tau - t

    def u(self, t: float, x: float) -> float:
        s = self._check(t)
        a = self.params.alpha
        if self.observable is Observable.IDENTITY:
            return x * math.exp(-a * s)
        e = math.exp(-2.0 * a * s)
        return x * x * e + self.params.gibbs_variance * (1.0 - e)

    def u_x(self, t: float, x: float) -> float:
        s = self._check(t)
        a = self.params.alpha
        if self.observable is Observable.IDENTITY:
            return math.exp(-a * s)
        return 2.0 * x * math.exp(-2.0 * a * s)

    def u_xx(self, t: float, x: float) -> float:
        s = self._check(t)
        if self.observable is Observable.IDENTITY:
            return 0.0
        return 2.0 * math.exp(-2.0 * self.params.alpha * s)

    def u_xxx(self, t: float, x: float) -> float:
        self._check(t)
        return 0.0

    def u_xxxx(self, t: float, x: float) -> float:
        self._check(t)
        return 0.0

    def u_t(self, t: float, x: float) -> float:
        s = self._check(t)
        a = self.params.alpha
        if self.observable is Observable.IDENTITY:
            return a * x * math.exp(-a * s)
        e = math.exp(-2.0 * a * s)
        return 2.0 * a * x * x * e - self.params.sigma ** 2 * e

    def ergodic_value(self) -> float:
        if self.observable is Observable.IDENTITY:
            return 0.0
        return self.params.gibbs_variance


def backward_solution(p: OUParams, tau: float, obs: Observable) -> BackwardSolution:
    if not tau > 0:
        raise ValueError("terminal time must be positive")
    return BackwardSolution(p, tau, obs)


def b0_lm(p: OUParams, sol: BackwardSolution, t: float, x: float) -> float:
    """Leading one-step error coefficient of the non-Markovian scheme (1-D).

    B0 = 1/2 [ a a' u_x + (sigma^2/2) a' u_xx + (sigma^2/2) a'' u_x ] with
    a = -alpha x (so a'' = 0).  For the square observable this reduces to
    alpha e^{-2 alpha (tau - t)} (alpha x^2 - sigma^2/2).
    """
    a = -p.alpha * x
    ap = -p.alpha
    s2 = p.sigma ** 2
    return 0.5 * (a * ap * sol.u_x(t, x) + 0.5 * s2 * ap * sol.u_xx(t, x))


def b0_euler(p: OUParams, sol: BackwardSolution, t: float, x: float) -> float:
    """Leading one-step error coefficient of the Euler-Maruyama scheme (1-D).

    Derived by expanding the one-step error against exp(h L):

        B0^E = 1/2 [ a a' u_x + (sigma^2/2) a'' u_x + sigma^2 a' u_xx ],

    i.e. the non-Markovian B0 plus an extra (sigma^2/4) a' u_xx.  Its
    invariant average does not vanish, which is the source of the Euler
    scheme's O(h) ergodic bias; the time integral below reproduces the
    closed-form stationary variance bias coefficient -sigma^2/4.
    """
    a = -p.alpha * x
    ap = -p.alpha
    s2 = p.sigma ** 2
    return 0.5 * (a * ap * sol.u_x(t, x) + s2 * ap * sol.u_xx(t, x))


def c0_lm(p: OUParams, tau: float, obs: Observable) -> float:
    """C0(tau, x0) = int_0^tau E B0(t, X(t)) dt for the non-Markovian scheme.

    Identity: (alpha^2 x0 tau / 2) e^{-alpha tau}.
    Square:   alpha tau e^{-2 alpha tau} (alpha x0^2 - sigma^2/2).
    Decays exponentially in tau.
    """
    a = p.alpha
    if obs is Observable.IDENTITY:
        return 0.5 * a * a * p.x0 * tau * math.exp(-a * tau)
    return a * tau * math.exp(-2.0 * a * tau) * (a * p.x0 ** 2 - 0.5 * p.sigma ** 2)


def c0_euler(p: OUParams, tau: float, obs: Observable) -> float:
    """Accumulated Euler coefficient; tends to -sigma^2/4 (square observable)."""
    a = p.alpha
    if obs is Observable.IDENTITY:
        return 0.5 * a * a * p.x0 * tau * math.exp(-a * tau)
    e = math.exp(-2.0 * a * tau)
    return a * tau * e * (a * p.x0 ** 2 - 0.5 * p.sigma ** 2) - 0.25 * p.sigma ** 2 * (1.0 - e)


def expected_b0(b0_fn, p: OUParams, sol: BackwardSolution, t: float, n_nodes: int = 40) -> float:
    """E b0(t, X_x0(t)) by Gauss-Hermite quadrature over the transition law."""
    m = ou_transition_mean(p, p.x0, t)
    s = math.sqrt(ou_transition_variance(p, t))
    y, w = scipy.special.roots_hermite(n_nodes)
    vals = [b0_fn(p, sol, t, m + math.sqrt(2.0) * s * yi) for yi in y]
    return float(np.dot(w, vals) / math.sqrt(math.pi))


def c0_time_integral(b0_fn, p: OUParams, tau: float, obs: Observable) -> float:
    """int_0^tau E b0(t, X(t)) dt by adaptive quadrature (independent route)."""
    sol = backward_solution(p, tau, obs)
    val, _ = scipy.integrate.quad(
        lambda t: expected_b0(b0_fn, p, sol, t), 0.0, tau, epsabs=1e-10, epsrel=1e-10, limit=400
    )
    return val


# ---------------------------------------------------------------------------
# Cancellation-free total weak errors for phi(x) = x^2


def lm_total_error_square(p: OUParams, h: float, n: int) -> float:
    """E x^2 under the exact flow minus under the non-Markovian chain at tau = n h.

    Grouped so the exponentially small terms subtract before anything large
    is added; naive evaluation loses everything to cancellation once
    e^{-2 alpha tau} approaches machine epsilon.
    """
    _check_stability(p, h)
    z = p.alpha * h
    phi = 1.0 - z
    tau = n * h
    q2n = phi ** (2 * n)
    e2 = math.exp(-2.0 * p.alpha * tau)
    return p.gibbs_variance * (q2n / phi - e2) + p.x0 ** 2 * (e2 - q2n)


def em_total_error_square(p: OUParams, h: float, n: int) -> float:
    """E x^2 under the exact flow minus under the Euler chain at tau = n h."""
    _check_stability(p, h)
    z = p.alpha * h
    phi = 1.0 - z
    tau = n * h
    q2n = phi ** (2 * n)
    e2 = math.exp(-2.0 * p.alpha * tau)
    var_part = p.gibbs_variance * (q2n - e2 + 0.5 * z * (e2 - 1.0)) / (1.0 - 0.5 * z)
    return var_part + p.x0 ** 2 * (e2 - q2n)


# ---------------------------------------------------------------------------
# Invariant-measure quadrature


def invariant_average_1d(f, spec: PotentialSpec, beta: float, nodes: int | None = None) -> float:
    """int f d(rho_beta) with rho_beta proportional to exp(-beta V).

    Quadratic potential: Gauss-Hermite with 200 nodes (default); Cosine:
    periodic trapezoid with 2048 nodes.  Both are far below 1e-10 absolute
    error for smooth, polynomially bounded f; doubling the node count moves
    results by less than 1e-12.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    if isinstance(spec, Quadratic):
        n = 200 if nodes is None else nodes
        y, w = scipy.special.roots_hermite(n)
        scale = math.sqrt(2.0 / (beta * spec.alpha))
        x = scale * y
        vals = np.array([f(xi) for xi in x])
        return float(np.dot(w, vals) / math.sqrt(math.pi))
    if isinstance(spec, Cosine):
        n = 2048 if nodes is None else nodes
        x = 2.0 * math.pi * np.arange(n) / n
        weights = np.exp(-beta * np.cos(x))
        vals = np.array([f(xi) for xi in x])
        return float(np.dot(weights, vals) / weights.sum())
    raise ValueError("invariant averages support Quadratic and Cosine potentials")
