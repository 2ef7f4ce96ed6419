"""Empirical densities and error metrics.

Histograms store integer bin counts, so merging partial results from
different workers is exact and order-independent; normalized masses are
computed only at read-out.  The error metrics follow the benchmark's
conventions: L2 on bin masses, relative entropy sum rho_i ln(rho_i/rhohat_i),
RDF L2 on normalized pair-distance densities, and convergence orders from a
log-log least-squares fit.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.special

from .backend import kernels as _K
from .errors import UndersampledDistributionError
from .model import Cosine, PotentialSpec, Quadratic


@dataclass
class HistogramDensity:
    """Equal-width bins on [lower, upper) with normalized masses."""

    lower: float
    upper: float
    mass: np.ndarray
    total_samples: int = 0

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=float)
        if self.mass.ndim != 1 or self.mass.size == 0:
            raise ValueError("mass must be a nonempty vector")
        if np.any(self.mass < 0):
            raise ValueError("bin masses must be nonnegative")

    @property
    def n_bins(self) -> int:
        return self.mass.size

    @property
    def bin_width(self) -> float:
        return (self.upper - self.lower) / self.n_bins

    def edges(self) -> np.ndarray:
        return self.lower + self.bin_width * np.arange(self.n_bins + 1)

    def same_layout(self, other: "HistogramDensity") -> bool:
        return (
            self.n_bins == other.n_bins
            and self.lower == other.lower
            and self.upper == other.upper
        )


class HistogramAccumulator:
    """Integer-count histogram builder; merge is exact and associative."""

    def __init__(self, lower: float, upper: float, n_bins: int):
        if not upper > lower:
            raise ValueError("upper must exceed lower")
        if n_bins < 1:
            raise ValueError("need at least one bin")
        self.lower = float(lower)
        self.upper = float(upper)
        self.n_bins = int(n_bins)
        self.counts = np.zeros(n_bins, dtype=np.int64)
        self.total_samples = 0
        self.out_of_range = 0

    def add(self, x: float) -> None:
        idx = int((x - self.lower) * (self.n_bins / (self.upper - self.lower)))
        if 0 <= idx < self.n_bins and x >= self.lower:
            self.counts[idx] += 1
            self.total_samples += 1
        else:
            self.out_of_range += 1

    def add_array(self, xs: np.ndarray) -> None:
        xs = np.asarray(xs, dtype=float)
        w = self.n_bins / (self.upper - self.lower)
        idx = ((xs - self.lower) * w).astype(np.int64)
        ok = (xs >= self.lower) & (idx >= 0) & (idx < self.n_bins)
        np.add.at(self.counts, idx[ok], 1)
        self.total_samples += int(ok.sum())
        self.out_of_range += int(xs.size - ok.sum())

    def add_counts(self, counts: np.ndarray, n_samples: int, out_of_range: int = 0) -> None:
        """Fold in raw bin counts produced by a kernel run."""
        if counts.shape != self.counts.shape:
            raise ValueError("bin layout mismatch")
        self.counts += counts
        self.total_samples += int(n_samples) - int(out_of_range)
        self.out_of_range += int(out_of_range)

    def merge(self, other: "HistogramAccumulator") -> None:
        if (self.lower, self.upper, self.n_bins) != (other.lower, other.upper, other.n_bins):
            raise ValueError("bin layout mismatch")
        self.counts += other.counts
        self.total_samples += other.total_samples
        self.out_of_range += other.out_of_range

    def density(self) -> HistogramDensity:
        if self.total_samples == 0:
            raise ValueError("no samples accumulated")
        mass = self.counts / float(self.total_samples)
        return HistogramDensity(self.lower, self.upper, mass, self.total_samples)


def l2_error(est: HistogramDensity, ref: HistogramDensity) -> float:
    """sqrt(sum_i (est_i - ref_i)^2) over bin masses."""
    if not est.same_layout(ref):
        raise ValueError("histograms have different bin layouts")
    d = est.mass - ref.mass
    return math.sqrt(float(d @ d))


def kl_error(ref: HistogramDensity, est: HistogramDensity) -> float:
    """Relative entropy sum_i ref_i ln(ref_i / est_i); ref-empty bins contribute 0."""
    if not est.same_layout(ref):
        raise ValueError("histograms have different bin layouts")
    sup = ref.mass > 0
    if np.any(est.mass[sup] <= 0):
        raise UndersampledDistributionError(
            "estimated histogram has empty bins on the reference support"
        )
    r = ref.mass[sup]
    return float(np.sum(r * np.log(r / est.mass[sup])))


# ---------------------------------------------------------------------------
# Reference densities by quadrature


def partition_function_1d(spec: PotentialSpec, beta: float, lower: float, upper: float) -> float:
    """integral of exp(-beta V) over [lower, upper] by adaptive quadrature."""
    val, _ = scipy.integrate.quad(
        lambda x: math.exp(-beta * _v1d(spec, x)), lower, upper, epsabs=1e-13, limit=200
    )
    return val


def _v1d(spec: PotentialSpec, x: float) -> float:
    if isinstance(spec, Quadratic):
        return 0.5 * spec.alpha * x * x
    if isinstance(spec, Cosine):
        return math.cos(x)
    raise ValueError("reference densities support 1-D potentials only")


def reference_density_1d(
    spec: PotentialSpec, beta: float, lower: float, upper: float, n_bins: int
) -> HistogramDensity:
    """Per-bin masses of the Gibbs density exp(-beta V)/Z by adaptive quadrature.

    Each bin integral is computed to absolute tolerance well below 1e-10 and
    the masses are normalized over the binned range.
    """
    if not beta >= 0:
        raise ValueError("beta must be nonnegative")
    edges = lower + (upper - lower) / n_bins * np.arange(n_bins + 1)
    raw = np.empty(n_bins)
    for i in range(n_bins):
        raw[i], _ = scipy.integrate.quad(
            lambda x: math.exp(-beta * _v1d(spec, x)),
            edges[i],
            edges[i + 1],
            epsabs=1e-13,
            epsrel=1e-13,
            limit=200,
        )
    return HistogramDensity(lower, upper, raw / raw.sum(), 0)


# ---------------------------------------------------------------------------
# Radial distribution functions


@dataclass
class RdfEstimate:
    """Normalized pair-distance density over (0, r_max): g_i = counts_i /
    (pairs * samples * bin_width)."""

    r_max: float
    g: np.ndarray
    sample_count: int

    @property
    def n_bins(self) -> int:
        return self.g.size

    @property
    def bin_width(self) -> float:
        return self.r_max / self.n_bins

    def edges(self) -> np.ndarray:
        return self.bin_width * np.arange(self.n_bins + 1)

    def mass(self) -> np.ndarray:
        """Per-bin probability that a pair lies in the bin."""
        return self.g * self.bin_width


class RdfAccumulator:
    """Pair-distance histogram builder for a fixed particle count."""

    def __init__(self, r_max: float, n_bins: int, particles: int):
        if not r_max > 0 or n_bins < 1 or particles < 2:
            raise ValueError("bad RDF layout")
        self.r_max = float(r_max)
        self.n_bins = int(n_bins)
        self.particles = int(particles)
        self.n_pairs = particles * (particles - 1) // 2
        self.counts = np.zeros(n_bins, dtype=np.int64)
        self.sample_count = 0

    def add_positions(self, positions: np.ndarray, box_length: float) -> None:
        _K.rdf_bin_pairs(
            np.asarray(positions, dtype=float), self.particles, box_length,
            self.counts, self.r_max,
        )
        self.sample_count += 1

    def add_counts(self, counts: np.ndarray, n_samples: int) -> None:
        if counts.shape != self.counts.shape:
            raise ValueError("bin layout mismatch")
        self.counts += counts
        self.sample_count += int(n_samples)

    def merge(self, other: "RdfAccumulator") -> None:
        if (self.r_max, self.n_bins, self.particles) != (other.r_max, other.n_bins, other.particles):
            raise ValueError("RDF layout mismatch")
        self.counts += other.counts
        self.sample_count += other.sample_count

    def estimate(self) -> RdfEstimate:
        if self.sample_count == 0:
            raise ValueError("no configurations accumulated")
        norm = self.n_pairs * self.sample_count * (self.r_max / self.n_bins)
        return RdfEstimate(self.r_max, self.counts / norm, self.sample_count)


def rdf_l2(a: RdfEstimate, b: RdfEstimate) -> float:
    """L2 difference of two RDFs from identical protocols (raw densities)."""
    if a.n_bins != b.n_bins or a.r_max != b.r_max:
        raise ValueError("RDF layout mismatch")
    d = a.g - b.g
    return math.sqrt(float(d @ d))


# ---------------------------------------------------------------------------
# Convergence-order fits


@dataclass
class ErrorSeries:
    """(h, error) pairs with the fitted log-log slope."""

    points: list
    fitted_slope: float
    fitted_intercept: float
    r_squared: float
    slope_stderr: float = float("nan")


def fit_order(points) -> ErrorSeries:
    """Least-squares line through (ln h, ln error); the slope is the order."""
    pts = sorted((float(h), float(e)) for h, e in points)
    if len(pts) < 3:
        raise ValueError("need at least three points to fit an order")
    if any(e <= 0 for _, e in pts) or any(h <= 0 for h, _ in pts):
        raise ValueError("stepsizes and errors must be positive")
    x = np.log([h for h, _ in pts])
    y = np.log([e for _, e in pts])
    n = len(pts)
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    stderr = math.sqrt(ss_res / (n - 2) / sxx) if n > 2 else float("nan")
    return ErrorSeries(pts, slope, intercept, r2, stderr)
