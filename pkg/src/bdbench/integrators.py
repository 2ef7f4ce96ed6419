"""One-step schemes and the trajectory runner.

Three schemes share the update skeleton X' = X + h a(X) + noise term:

* Euler-Maruyama: fresh increment sigma*sqrt(h)*xi each step, one force call.
* Non-Markovian: sigma*(sqrt(h)/2)*(xi_prev + xi_fresh), reusing half of the
  previous step's Gaussian; still one force call, but successive increments
  are correlated.  The cached xi_prev is seeded with a fresh deviate drawn at
  the sentinel step address -1.
* Heun: Euler predictor, trapezoidal corrector with the same noise vector;
  two force calls.

`run_trajectory` drives a single trajectory, feeding every post-equilibration
state to an observer.  For the potential/observer combinations the kernels
cover it dispatches to the selected backend; otherwise it falls back to a
generic step-by-step loop with identical semantics.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import stats
from .backend import kernels as _K
from .errors import TrajectoryExplodedError
from .model import (
    Configuration,
    Cosine,
    LennardJonesBox,
    PotentialSpec,
    Quadratic,
    Unbounded,
    force,
    wrap,
)
from .noise import NoiseStream


class Scheme(enum.Enum):
    EULER_MARUYAMA = "em"
    NON_MARKOVIAN = "lm"
    HEUN = "heun"

    @property
    def code(self) -> int:
        return {"em": 0, "lm": 1, "heun": 2}[self.value]

    @property
    def force_evals_per_step(self) -> int:
        return 2 if self is Scheme.HEUN else 1

    @classmethod
    def from_name(cls, name: str) -> "Scheme":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"unknown scheme {name!r}; expected em, lm or heun") from None


@dataclass(frozen=True)
class RunSpec:
    """Stepsize, noise strength and run-length bookkeeping for one trajectory."""

    h: float
    sigma: float
    n_steps: int
    equilibration_steps: int = 0
    blowup_threshold: float = 1e6
    seed: int = 0

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("stepsize h must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.n_steps < 0 or self.equilibration_steps < 0:
            raise ValueError("step counts must be nonnegative")
        if not self.blowup_threshold > 0:
            raise ValueError("blowup threshold must be positive")


@dataclass
class StepperState:
    """Integrator-owned state: position, cached noise (non-Markovian), counters."""

    x: Configuration
    xi_prev: np.ndarray | None = None
    steps_taken: int = 0
    force_evals: int = 0

    @classmethod
    def initial(
        cls,
        scheme: Scheme,
        x: Configuration,
        stream: NoiseStream | None = None,
        trajectory_index: int = 0,
    ) -> "StepperState":
        """Fresh state; draws the non-Markovian xi_0 at the sentinel address."""
        xi = None
        if scheme is Scheme.NON_MARKOVIAN:
            if stream is None:
                raise ValueError("non-Markovian scheme needs a noise stream for xi_0")
            xi = stream.normals(trajectory_index, -1, x.domain.dim)
        return cls(x=x, xi_prev=xi)


def _sigma_sqrt_h(run: RunSpec) -> float:
    return run.sigma * math.sqrt(run.h)


def _finish(state: StepperState, spec, run: RunSpec, new_pos, evals: int) -> StepperState:
    dom = state.x.domain
    if isinstance(dom, Unbounded):
        if not np.all(np.abs(new_pos) <= run.blowup_threshold):
            raise TrajectoryExplodedError(state.steps_taken)
    else:
        new_pos = wrap(dom, new_pos)
    return StepperState(
        x=Configuration(new_pos, dom),
        xi_prev=state.xi_prev,
        steps_taken=state.steps_taken + 1,
        force_evals=state.force_evals + evals,
    )


def em_step(state: StepperState, spec: PotentialSpec, run: RunSpec, noise: np.ndarray) -> StepperState:
    """Euler-Maruyama update X' = X + h a(X) + sigma sqrt(h) xi."""
    if state.xi_prev is not None:
        raise ValueError("Euler-Maruyama carries no cached noise")
    noise = np.asarray(noise, dtype=float)
    a = force(spec, state.x)
    new = state.x.position + run.h * a + _sigma_sqrt_h(run) * noise
    return _finish(state, spec, run, new, 1)


def lm_step(state: StepperState, spec: PotentialSpec, run: RunSpec, fresh_noise: np.ndarray) -> StepperState:
    """Non-Markovian update X' = X + h a(X) + sigma (sqrt(h)/2)(xi_prev + xi)."""
    if state.xi_prev is None:
        raise ValueError("non-Markovian step needs the cached previous increment")
    fresh_noise = np.asarray(fresh_noise, dtype=float)
    a = force(spec, state.x)
    half_sig = 0.5 * _sigma_sqrt_h(run)
    new = state.x.position + run.h * a + half_sig * (state.xi_prev + fresh_noise)
    out = _finish(state, spec, run, new, 1)
    out.xi_prev = fresh_noise.copy()
    return out


def heun_step(state: StepperState, spec: PotentialSpec, run: RunSpec, noise: np.ndarray) -> StepperState:
    """Predictor-corrector update; the predictor is deliberately not wrapped."""
    if state.xi_prev is not None:
        raise ValueError("Heun carries no cached noise")
    noise = np.asarray(noise, dtype=float)
    sig = _sigma_sqrt_h(run)
    a = force(spec, state.x)
    xh = state.x.position + run.h * a + sig * noise
    ah = force(spec, Configuration(xh, state.x.domain))
    new = state.x.position + (0.5 * run.h) * (ah + a) + sig * noise
    return _finish(state, spec, run, new, 2)


_STEP_FN = {
    Scheme.EULER_MARUYAMA: em_step,
    Scheme.NON_MARKOVIAN: lm_step,
    Scheme.HEUN: heun_step,
}


# ---------------------------------------------------------------------------
# Observers: associative accumulators fed with every observed position.


class NullObserver:
    def observe(self, position: np.ndarray) -> None:
        pass

    def merge(self, other: "NullObserver") -> None:
        pass


class MomentObserver:
    """Tallies n, sum x, sum x^2, sum x^4 of a scalar coordinate."""

    def __init__(self):
        self.n = 0
        self.sum_x = 0.0
        self.sum_x2 = 0.0
        self.sum_x4 = 0.0

    def observe(self, position: np.ndarray) -> None:
        x = position[0]
        self.n += 1
        self.sum_x += x
        x2 = x * x
        self.sum_x2 += x2
        self.sum_x4 += x2 * x2

    def merge(self, other: "MomentObserver") -> None:
        self.n += other.n
        self.sum_x += other.sum_x
        self.sum_x2 += other.sum_x2
        self.sum_x4 += other.sum_x4

    @property
    def mean(self) -> float:
        return self.sum_x / self.n

    @property
    def variance(self) -> float:
        m = self.mean
        return self.sum_x2 / self.n - m * m

    @property
    def fourth_moment(self) -> float:
        return self.sum_x4 / self.n


class HistogramObserver:
    """Bins a scalar coordinate into a stats.HistogramAccumulator."""

    def __init__(self, lower: float, upper: float, n_bins: int):
        self.acc = stats.HistogramAccumulator(lower, upper, n_bins)

    def observe(self, position: np.ndarray) -> None:
        self.acc.add(position[0])

    def merge(self, other: "HistogramObserver") -> None:
        self.acc.merge(other.acc)

    def density(self) -> stats.HistogramDensity:
        return self.acc.density()


class SnapshotObserver:
    """Histograms of the state at selected step indices (0 = initial state)."""

    def __init__(self, snap_steps, lower: float, upper: float, n_bins: int):
        self.snap_steps = np.asarray(snap_steps, dtype=np.int64)
        if np.any(np.diff(self.snap_steps) <= 0):
            raise ValueError("snapshot steps must be strictly increasing")
        self.lower = lower
        self.upper = upper
        self.n_bins = n_bins
        self.counts = np.zeros((len(self.snap_steps), n_bins), dtype=np.int64)

    def observe_at(self, step: int, position: np.ndarray) -> None:
        hits = np.nonzero(self.snap_steps == step)[0]
        if hits.size:
            w = self.n_bins / (self.upper - self.lower)
            idx = int((position[0] - self.lower) * w)
            if 0 <= idx < self.n_bins:
                self.counts[hits[0], idx] += 1

    def merge(self, other: "SnapshotObserver") -> None:
        self.counts += other.counts

    def density(self, snap_index: int) -> stats.HistogramDensity:
        c = self.counts[snap_index]
        return stats.HistogramDensity(self.lower, self.upper, c / c.sum(), int(c.sum()))


class RdfObserver:
    """Accumulates pair-distance counts of every observed configuration."""

    def __init__(self, r_max: float, n_bins: int, particles: int, box_length: float):
        self.acc = stats.RdfAccumulator(r_max, n_bins, particles)
        self.box_length = box_length

    def observe(self, position: np.ndarray) -> None:
        self.acc.add_positions(position, self.box_length)

    def merge(self, other: "RdfObserver") -> None:
        self.acc.merge(other.acc)


@dataclass
class TrajectoryReport:
    final: StepperState
    observer: object
    rejected: bool = False
    blown_step: int | None = None


def _run_generic(scheme, spec, run, initial, trajectory_index, observer):
    stream = NoiseStream(run.seed)
    state = StepperState.initial(scheme, initial, stream, trajectory_index)
    step_fn = _STEP_FN[scheme]
    dim = initial.domain.dim
    snapshots = isinstance(observer, SnapshotObserver)
    if snapshots:
        observer.observe_at(0, state.x.position)
    for k in range(run.n_steps):
        noise = stream.normals(trajectory_index, k, dim)
        try:
            state = step_fn(state, spec, run, noise)
        except TrajectoryExplodedError as err:
            return TrajectoryReport(state, observer, rejected=True, blown_step=err.step)
        if snapshots:
            observer.observe_at(k + 1, state.x.position)
        elif k >= run.equilibration_steps:
            observer.observe(state.x.position)
    return TrajectoryReport(state, observer, rejected=False)


def run_trajectory(
    scheme: Scheme,
    spec: PotentialSpec,
    run: RunSpec,
    initial: Configuration,
    trajectory_index: int = 0,
    observer=None,
) -> TrajectoryReport:
    """Run one trajectory, feeding every post-equilibration state to the observer.

    Noise comes from the counter-based stream at (trajectory_index, step,
    component), so the result is a pure function of (inputs, seed).  On
    blow-up the report is marked rejected with the offending step recorded;
    the caller owns the restart policy.
    """
    if initial.domain != spec.domain():
        raise ValueError("initial configuration's domain does not match the potential")
    if observer is None:
        observer = NullObserver()

    pot_code = None
    period = 0.0
    if isinstance(spec, Quadratic) and spec.dim == 1:
        pot_code = _K.POT_QUADRATIC
    elif isinstance(spec, Cosine):
        pot_code = _K.POT_COSINE
        period = 2.0 * math.pi

    if pot_code is not None and isinstance(observer, (NullObserver, MomentObserver, HistogramObserver)):
        hist_counts = None
        lo = hi = 0.0
        if isinstance(observer, HistogramObserver):
            hist_counts = np.zeros(observer.acc.n_bins, dtype=np.int64)
            lo, hi = observer.acc.lower, observer.acc.upper
        alpha = spec.alpha if isinstance(spec, Quadratic) else 0.0
        (x, xi, n_obs, oor, sx, sx2, sx4, blown, evals) = _K.run_chain_1d(
            scheme.code, pot_code, alpha, period, run.h, run.sigma,
            run.n_steps, run.equilibration_steps, 0, run.seed, trajectory_index,
            initial.position[0], None, run.blowup_threshold,
            hist_counts, lo, hi,
        )
        if isinstance(observer, HistogramObserver):
            observer.acc.add_counts(hist_counts, n_obs, oor)
        elif isinstance(observer, MomentObserver):
            observer.n += n_obs
            observer.sum_x += sx
            observer.sum_x2 += sx2
            observer.sum_x4 += sx4
        steps_done = run.n_steps if blown < 0 else blown + 1
        final = StepperState(
            x=Configuration(np.array([x]), initial.domain),
            xi_prev=np.array([xi]) if scheme is Scheme.NON_MARKOVIAN else None,
            steps_taken=steps_done,
            force_evals=evals,
        )
        if blown >= 0:
            return TrajectoryReport(final, observer, rejected=True, blown_step=blown)
        return TrajectoryReport(final, observer)

    if isinstance(spec, LennardJonesBox) and isinstance(observer, (NullObserver, RdfObserver)):
        rdf_counts = None
        r_max = 0.0
        if isinstance(observer, RdfObserver):
            rdf_counts = np.zeros(observer.acc.n_bins, dtype=np.int64)
            r_max = observer.acc.r_max
        pos, xi, status, fail_step, n_samples, evals = _K.run_lj_chain(
            scheme.code, spec.particles, spec.box_length, run.h, run.sigma,
            run.n_steps, run.equilibration_steps, 0, run.seed, trajectory_index,
            np.asarray(initial.position, dtype=float), None, rdf_counts, r_max,
        )
        if isinstance(observer, RdfObserver):
            observer.acc.add_counts(rdf_counts, n_samples)
        steps_done = run.n_steps if status == 0 else fail_step + 1
        final = StepperState(
            x=Configuration(pos, initial.domain),
            xi_prev=xi if scheme is Scheme.NON_MARKOVIAN else None,
            steps_taken=steps_done,
            force_evals=evals,
        )
        if status != 0:
            return TrajectoryReport(final, observer, rejected=True, blown_step=fail_step)
        return TrajectoryReport(final, observer)

    return _run_generic(scheme, spec, run, initial, trajectory_index, observer)
