"""Experiment orchestration.

Four experiments are wired here: the Ornstein-Uhlenbeck moment verification
(`ou-verify`), the long-time cosine distribution benchmark (`longtime-1d`),
the finite-time evolving-distribution benchmark (`finite-time-1d`), and the
Lennard-Jones radial-distribution benchmark (`lj-rdf`).  Each experiment is
a pure function of (config, seed): work is split into tasks whose partition
never depends on the worker count, all noise is addressed by counters, and
partial results are merged in task order, so the emitted CSV is byte
identical no matter how many workers run it.

Desk-scale defaults live in configs/desk.ini; configs/paper.ini reproduces
the published experiment sizes and is opt-in via --scale paper.
"""

import configparser
import json
import math
import multiprocessing
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import stats
from .backend import kernels as _K
from .errors import ConfigError
from .integrators import Scheme
from .model import Cosine, LennardJonesBox, lattice_configuration
from .ou import (
    OUParams,
    em_discrete_moments,
    heun_discrete_moments,
    lm_discrete_moments,
    ou_exact_moments,
)

TWO_PI = 2.0 * math.pi

EXPERIMENTS = ("ou-verify", "longtime-1d", "finite-time-1d", "lj-rdf")

CSV_HEADER = "experiment,scheme,h,time,metric,value,std_error,realizations,force_evals,rejected,seed"

# Trajectory-block size for ensemble experiments; fixed so that the task
# partition (and therefore the merge order) is independent of the worker
# count.
OU_BLOCK = 8192
SNAPSHOT_BLOCK = 65536


@dataclass
class ResultRow:
    experiment: str
    scheme: str
    h: float | None
    time: float | None
    metric: str
    value: float
    std_error: float | None
    realizations: int
    force_evals: int
    rejected: int
    seed: int

    def to_csv(self) -> str:
        def num(v):
            return "" if v is None else repr(float(v))

        return ",".join(
            [
                self.experiment,
                self.scheme,
                num(self.h),
                num(self.time),
                self.metric,
                repr(float(self.value)),
                num(self.std_error),
                str(self.realizations),
                str(self.force_evals),
                str(self.rejected),
                str(self.seed),
            ]
        )


def emit_results(rows, path) -> None:
    """Write rows as CSV; identical configs and seeds give identical bytes."""
    if not rows:
        raise ValueError("no result rows to emit")
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.to_csv() + "\n")


def emit_sidecar(config_dict: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(config_dict, fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit_histogram(density: stats.HistogramDensity, path) -> None:
    edges = density.edges()
    with open(path, "w") as fh:
        fh.write("bin_lower,bin_upper,mass\n")
        for i in range(density.n_bins):
            fh.write(f"{float(edges[i])!r},{float(edges[i + 1])!r},{float(density.mass[i])!r}\n")


def emit_rdf(est: stats.RdfEstimate, path) -> None:
    edges = est.edges()
    mass = est.mass()
    with open(path, "w") as fh:
        fh.write("bin_lower,bin_upper,mass\n")
        for i in range(est.n_bins):
            fh.write(f"{float(edges[i])!r},{float(edges[i + 1])!r},{float(mass[i])!r}\n")


# ---------------------------------------------------------------------------
# Configuration


def _ladder(start: float, ratio: float, count: int) -> list[float]:
    if not (start > 0 and ratio > 1.0 and count >= 1):
        raise ConfigError("ladder needs start > 0, ratio > 1, count >= 1")
    return [start * ratio ** k for k in range(count)]


def resolve_noise(beta: float | None, sigma: float | None) -> tuple[float, float]:
    """Exactly one of (beta, sigma) must be given; beta = 2 sigma^-2 links them."""
    if (beta is None) == (sigma is None):
        raise ConfigError("give exactly one of beta or sigma")
    if beta is None:
        if not sigma > 0:
            raise ConfigError("sigma must be positive")
        return 2.0 / sigma ** 2, sigma
    if not beta > 0:
        raise ConfigError("beta must be positive")
    return beta, math.sqrt(2.0 / beta)


_FLOAT = float
_INT = int


def _schemes(raw: str) -> list[str]:
    names = [s.strip() for s in raw.split(",") if s.strip()]
    if not names:
        raise ConfigError("empty scheme list")
    return [Scheme.from_name(s).value for s in names]


def _floats(raw: str) -> list[float]:
    return [float(s) for s in raw.split(",") if s.strip()]


_FIELDS = {
    "ou-verify": {
        "alpha": _FLOAT,
        "sigma": _FLOAT,
        "beta": _FLOAT,
        "x0": _FLOAT,
        "h": _FLOAT,
        "tau": _FLOAT,
        "trajectories": _INT,
        "h_ladder_start": _FLOAT,
        "h_ladder_ratio": _FLOAT,
        "h_ladder_count": _INT,
        "blowup_threshold": _FLOAT,
        "schemes": _schemes,
    },
    "longtime-1d": {
        "beta": _FLOAT,
        "sigma": _FLOAT,
        "total_time": _FLOAT,
        "h_ladder_start": _FLOAT,
        "h_ladder_ratio": _FLOAT,
        "h_ladder_count": _INT,
        "realizations": _INT,
        "equilibration_steps": _INT,
        "bins": _INT,
        "x0": _FLOAT,
        "schemes": _schemes,
    },
    "finite-time-1d": {
        "beta": _FLOAT,
        "sigma": _FLOAT,
        "h_values": _floats,
        "baseline_h": _FLOAT,
        "baseline_scheme": str,
        "snapshot_interval": _FLOAT,
        "t_max": _FLOAT,
        "trajectories": _INT,
        "bins": _INT,
        "schemes": _schemes,
    },
    "lj-rdf": {
        "beta": _FLOAT,
        "sigma": _FLOAT,
        "particles": _INT,
        "box_length": _FLOAT,
        "window_time": _FLOAT,
        "equilibration_steps": _INT,
        "h_ladder_start": _FLOAT,
        "h_ladder_ratio": _FLOAT,
        "h_ladder_count": _INT,
        "realizations": _INT,
        "realizations_lm": _INT,
        "baseline_h": _FLOAT,
        "baseline_steps": _INT,
        "baseline_realizations": _INT,
        "rdf_r_max": _FLOAT,
        "rdf_bins": _INT,
        "schemes": _schemes,
    },
}


@dataclass
class ExperimentConfig:
    """Resolved settings for one experiment run."""

    experiment: str
    scale: str
    seed: int
    values: dict

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    def resolved_dict(self) -> dict:
        d = dict(self.values)
        d["experiment"] = self.experiment
        d["scale"] = self.scale
        d["seed"] = self.seed
        return d


def _builtin_ini(scale: str) -> configparser.ConfigParser:
    if scale not in ("desk", "paper"):
        raise ConfigError(f"unknown scale {scale!r}; expected desk or paper")
    parser = configparser.ConfigParser()
    text = resources.files("bdbench.configs").joinpath(f"{scale}.ini").read_text()
    parser.read_string(text)
    return parser


def load_config(
    experiment: str,
    scale: str = "desk",
    seed: int = 0,
    config_path: str | None = None,
) -> ExperimentConfig:
    """Built-in scale defaults overlaid with an optional user config file.

    Unknown keys (and unknown sections in the user file) are errors; beta and
    sigma are mutually exclusive, with the missing one derived.
    """
    if experiment not in _FIELDS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    fields = _FIELDS[experiment]
    raw: dict[str, str] = dict(_builtin_ini(scale)[experiment])
    if config_path is not None:
        user = configparser.ConfigParser()
        read = user.read(config_path)
        if not read:
            raise ConfigError(f"cannot read config file {config_path}")
        for section in user.sections():
            if section not in _FIELDS:
                raise ConfigError(f"unknown config section [{section}]")
        if user.has_section(experiment):
            overlay = dict(user[experiment])
            if "beta" in overlay or "sigma" in overlay:
                raw.pop("beta", None)
                raw.pop("sigma", None)
            raw.update(overlay)
    values: dict = {}
    for key, sval in raw.items():
        if key not in fields:
            raise ConfigError(f"unknown key {key!r} in section [{experiment}]")
        try:
            values[key] = fields[key](sval)
        except ValueError as err:
            raise ConfigError(f"bad value for {key!r}: {sval!r} ({err})") from None
    beta, sigma = resolve_noise(values.get("beta"), values.get("sigma"))
    values["beta"] = beta
    values["sigma"] = sigma
    return ExperimentConfig(experiment, scale, seed, values)


# ---------------------------------------------------------------------------
# Deterministic parallel map


def _call(packed):
    fn, args = packed
    return fn(*args)


def parallel_map(fn, arg_tuples, workers: int):
    """Ordered map over tasks; the result list never depends on `workers`."""
    tasks = [(fn, a) for a in arg_tuples]
    if workers <= 1 or len(tasks) <= 1:
        return [_call(t) for t in tasks]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(processes=min(workers, len(tasks))) as pool:
        return pool.map(_call, tasks, chunksize=1)


def default_workers() -> int:
    return min(os.cpu_count() or 1, 8)


def _jackknife_se(full_stat: float, loo_stats: list[float]) -> float:
    """Leave-one-out jackknife standard error of a merged statistic."""
    n = len(loo_stats)
    if n < 2:
        return float("nan")
    m = sum(loo_stats) / n
    var = (n - 1) / n * sum((s - m) ** 2 for s in loo_stats)
    return math.sqrt(var)


# ---------------------------------------------------------------------------
# ou-verify


def _ou_block_task(scheme_code, alpha, h, sigma, n_steps, seed, traj_start, n_traj, x0, blowup):
    return _K.run_ensemble_final_1d(
        scheme_code, _K.POT_QUADRATIC, alpha, h, sigma, n_steps, seed, traj_start, n_traj, x0, blowup
    )


_DISCRETE_MOMENTS = {
    "em": em_discrete_moments,
    "lm": lm_discrete_moments,
    "heun": heun_discrete_moments,
}


def run_ou_verify(cfg: ExperimentConfig, workers: int | None = None) -> tuple[list[ResultRow], dict]:
    """Ensemble moments at tau versus the scheme-specific closed forms.

    Emits the sampled mean/variance, z-scores against the scheme's own
    closed-form moments, a z-score of the variance against the unbiased
    Gibbs value (the Euler scheme must reject it), and a formula-only
    stepsize ladder of |scheme variance - exact variance| with its fitted
    order.
    """
    workers = default_workers() if workers is None else workers
    p = OUParams(cfg.alpha, cfg.sigma, cfg.x0)
    n_steps = int(round(cfg.tau / cfg.h))
    tau = n_steps * cfg.h
    rows: list[ResultRow] = []
    for scheme_name in cfg.schemes:
        scheme = Scheme.from_name(scheme_name)
        blocks = []
        start = 0
        while start < cfg.trajectories:
            n = min(OU_BLOCK, cfg.trajectories - start)
            blocks.append(
                (scheme.code, cfg.alpha, cfg.h, cfg.sigma, n_steps, cfg.seed, start, n, cfg.x0, cfg.blowup_threshold)
            )
            start += n
        parts = parallel_map(_ou_block_task, blocks, workers)
        sum_x = sum_x2 = 0.0
        n_done = rejected = force_evals = 0
        for sx, sx2, nd, rej, fe in parts:
            sum_x += sx
            sum_x2 += sx2
            n_done += nd
            rejected += rej
            force_evals += fe
        n = n_done
        mean = sum_x / n
        var = (sum_x2 - n * mean * mean) / (n - 1)
        mean_ref, var_ref = _DISCRETE_MOMENTS[scheme_name](p, cfg.h, n_steps)
        se_mean = math.sqrt(var / n)
        se_var = var * math.sqrt(2.0 / (n - 1))
        common = dict(
            experiment=cfg.experiment, scheme=scheme_name, h=cfg.h, time=tau,
            realizations=n, force_evals=force_evals, rejected=rejected, seed=cfg.seed,
        )
        rows.append(ResultRow(metric="mean", value=mean, std_error=se_mean, **common))
        rows.append(ResultRow(metric="variance", value=var, std_error=se_var, **common))
        rows.append(ResultRow(metric="z_mean_scheme", value=(mean - mean_ref) / se_mean, std_error=None, **common))
        rows.append(ResultRow(metric="z_var_scheme", value=(var - var_ref) / se_var, std_error=None, **common))
        rows.append(
            ResultRow(metric="z_var_gibbs", value=(var - p.gibbs_variance) / se_var, std_error=None, **common)
        )

    # Formula-only ladder: closed-form variance error versus the exact flow.
    ladder = _ladder(cfg.h_ladder_start, cfg.h_ladder_ratio, cfg.h_ladder_count)
    _, var_exact = ou_exact_moments(p, tau)
    for scheme_name in cfg.schemes:
        pts = []
        for h in ladder:
            nh = int(round(tau / h))
            _, v = _DISCRETE_MOMENTS[scheme_name](p, h, nh)
            err = abs(v - var_exact)
            pts.append((h, err))
            rows.append(
                ResultRow(cfg.experiment, scheme_name, h, tau, "var_formula_error", err, None, 0, 0, 0, cfg.seed)
            )
        fit = stats.fit_order(pts)
        rows.append(
            ResultRow(
                cfg.experiment, scheme_name, None, tau, "var_formula_order",
                fit.fitted_slope, fit.slope_stderr, 0, 0, 0, cfg.seed,
            )
        )
    return rows, {}


# ---------------------------------------------------------------------------
# longtime-1d


def _longtime_task(scheme_code, h, sigma, n_steps, equil, seed, traj, x0, bins):
    counts = np.zeros(bins, dtype=np.int64)
    res = _K.run_chain_1d(
        scheme_code, _K.POT_COSINE, 0.0, TWO_PI, h, sigma, n_steps, equil, 0,
        seed, traj, x0, None, 1e6, counts, 0.0, TWO_PI,
    )
    (_x, _xi, n_obs, oor, _sx, _sx2, _sx4, _blown, force_evals) = res
    return counts, n_obs, oor, force_evals


def run_longtime_1d(cfg: ExperimentConfig, workers: int | None = None) -> tuple[list[ResultRow], dict]:
    """Invariant-distribution error of each scheme across the stepsize ladder.

    Each realization is one trajectory over [0, total_time]; histograms from
    all realizations of a (scheme, h) pair are merged and compared with the
    quadrature reference density in L2 and relative entropy, then each
    scheme's errors are fitted for their order in h.
    """
    workers = default_workers() if workers is None else workers
    ladder = _ladder(cfg.h_ladder_start, cfg.h_ladder_ratio, cfg.h_ladder_count)
    ref = stats.reference_density_1d(Cosine(), cfg.beta, 0.0, TWO_PI, cfg.bins)
    rows: list[ResultRow] = []
    dumps = {"reference": ref}

    tasks = []
    index = {}
    for scheme_name in cfg.schemes:
        scheme = Scheme.from_name(scheme_name)
        for h in ladder:
            n_steps = int(round(cfg.total_time / h))
            for r in range(cfg.realizations):
                index[(scheme_name, h, r)] = len(tasks)
                tasks.append(
                    (scheme.code, h, cfg.sigma, n_steps, cfg.equilibration_steps, cfg.seed, r, cfg.x0, cfg.bins)
                )
    results = parallel_map(_longtime_task, tasks, workers)

    slope_pts: dict[tuple[str, str], list] = {}
    for scheme_name in cfg.schemes:
        for h in ladder:
            parts = [results[index[(scheme_name, h, r)]] for r in range(cfg.realizations)]
            acc = stats.HistogramAccumulator(0.0, TWO_PI, cfg.bins)
            force_evals = 0
            for counts, n_obs, oor, fe in parts:
                acc.add_counts(counts, n_obs, oor)
                force_evals += fe
            est = acc.density()
            dumps[f"hist_{scheme_name}_h{h:.6g}"] = est

            def _metric_pair(density):
                l2 = stats.l2_error(density, ref)
                try:
                    kl = stats.kl_error(ref, density)
                except stats.UndersampledDistributionError:
                    kl = float("nan")
                return l2, kl

            l2_full, kl_full = _metric_pair(est)
            loo_l2, loo_kl = [], []
            if cfg.realizations > 1:
                for r in range(cfg.realizations):
                    sub = stats.HistogramAccumulator(0.0, TWO_PI, cfg.bins)
                    for rr, (counts, n_obs, oor, _fe) in enumerate(parts):
                        if rr != r:
                            sub.add_counts(counts, n_obs, oor)
                    l2_r, kl_r = _metric_pair(sub.density())
                    loo_l2.append(l2_r)
                    loo_kl.append(kl_r)
            common = dict(
                experiment=cfg.experiment, scheme=scheme_name, h=h, time=cfg.total_time,
                realizations=cfg.realizations, force_evals=force_evals, rejected=0, seed=cfg.seed,
            )
            rows.append(ResultRow(metric="l2", value=l2_full, std_error=_jackknife_se(l2_full, loo_l2), **common))
            rows.append(ResultRow(metric="kl", value=kl_full, std_error=_jackknife_se(kl_full, loo_kl), **common))
            slope_pts.setdefault((scheme_name, "l2"), []).append((h, l2_full))
            slope_pts.setdefault((scheme_name, "kl"), []).append((h, kl_full))

    for (scheme_name, metric), pts in slope_pts.items():
        good = [(h, e) for h, e in pts if e > 0 and not math.isnan(e)]
        if len(good) >= 3:
            fit = stats.fit_order(good)
            rows.append(
                ResultRow(
                    cfg.experiment, scheme_name, None, cfg.total_time, f"{metric}_slope",
                    fit.fitted_slope, fit.slope_stderr, cfg.realizations, 0, 0, cfg.seed,
                )
            )
    return rows, dumps


# ---------------------------------------------------------------------------
# finite-time-1d


def _snapshot_task(scheme_code, h, sigma, seed, traj_start, n_traj, snap_steps, bins):
    counts = np.zeros((len(snap_steps), bins), dtype=np.int64)
    _rej, force_evals = _K.run_ensemble_snapshots_1d(
        scheme_code, h, sigma, seed, traj_start, n_traj,
        np.asarray(snap_steps, dtype=np.int64), counts, 0.0, TWO_PI, math.pi, 1.0,
    )
    return counts, force_evals


def _snapshot_schedule(h: float, interval: float, t_max: float):
    """Step indices of the snapshot times (multiples of `interval` up to t_max).

    Exact multiples need no rounding; otherwise the step count rounds down
    and the actual time is recorded.
    """
    n = int(round(t_max / interval))
    steps, times = [0], [0.0]
    for j in range(1, n + 1):
        t = j * interval
        k = int(math.floor(t / h + 1e-9))
        steps.append(k)
        times.append(k * h)
    return np.asarray(steps, dtype=np.int64), times


def run_finite_time_1d(cfg: ExperimentConfig, workers: int | None = None) -> tuple[list[ResultRow], dict]:
    """Weak error of the evolving distribution against a fine-step baseline.

    All schemes and the baseline share trajectory indices, so every run sees
    the same initial ensemble (the t = 0 snapshots are identical) and the
    error differences are common-random-number correlated.
    """
    workers = default_workers() if workers is None else workers
    rows: list[ResultRow] = []
    dumps = {}
    pairs = [(cfg.baseline_scheme, cfg.baseline_h)]
    for scheme_name in cfg.schemes:
        for h in cfg.h_values:
            pairs.append((scheme_name, h))

    blocks = []
    start = 0
    while start < cfg.trajectories:
        n = min(SNAPSHOT_BLOCK, cfg.trajectories - start)
        blocks.append((start, n))
        start += n

    tasks = []
    index = {}
    schedules = {}
    for scheme_name, h in pairs:
        scheme = Scheme.from_name(scheme_name)
        snap_steps, snap_times = _snapshot_schedule(h, cfg.snapshot_interval, cfg.t_max)
        schedules[(scheme_name, h)] = (snap_steps, snap_times)
        for b, (bstart, bn) in enumerate(blocks):
            index[(scheme_name, h, b)] = len(tasks)
            tasks.append((scheme.code, h, cfg.sigma, cfg.seed, bstart, bn, snap_steps, cfg.bins))
    results = parallel_map(_snapshot_task, tasks, workers)

    merged = {}
    evals = {}
    for scheme_name, h in pairs:
        counts = None
        fe = 0
        for b in range(len(blocks)):
            c, f = results[index[(scheme_name, h, b)]]
            counts = c.copy() if counts is None else counts + c
            fe += f
        merged[(scheme_name, h)] = counts
        evals[(scheme_name, h)] = fe

    def _density(counts_row):
        tot = counts_row.sum()
        return stats.HistogramDensity(0.0, TWO_PI, counts_row / tot, int(tot))

    base_key = (cfg.baseline_scheme, cfg.baseline_h)
    base_counts = merged[base_key]
    _, base_times = schedules[base_key]
    n_snaps = len(base_times)
    for j, t in enumerate(base_times):
        dumps[f"hist_baseline_t{t:.6g}"] = _density(base_counts[j])

    slope_pts: dict[float, dict[str, list]] = {}
    for scheme_name, h in pairs[1:]:
        snap_steps, snap_times = schedules[(scheme_name, h)]
        counts = merged[(scheme_name, h)]
        common = dict(
            experiment=cfg.experiment, scheme=scheme_name, h=h,
            realizations=cfg.trajectories, rejected=0, seed=cfg.seed,
        )
        for j in range(n_snaps):
            t = snap_times[j]
            est = _density(counts[j])
            base = _density(base_counts[j])
            err = stats.l2_error(est, base)
            loo = []
            if len(blocks) > 1:
                for b in range(len(blocks)):
                    cj = counts[j] - results[index[(scheme_name, h, b)]][0][j]
                    bj = base_counts[j] - results[index[(base_key[0], base_key[1], b)]][0][j]
                    loo.append(stats.l2_error(_density(cj), _density(bj)))
            rows.append(
                ResultRow(
                    metric="l2", value=err, std_error=_jackknife_se(err, loo), time=t,
                    force_evals=evals[(scheme_name, h)], **common,
                )
            )
            if j > 0:
                slope_pts.setdefault(base_times[j], {}).setdefault(scheme_name, []).append((h, err))
            dumps[f"hist_{scheme_name}_h{h:.6g}_t{t:.6g}"] = est

    for t, by_scheme in slope_pts.items():
        for scheme_name, pts in by_scheme.items():
            if len(pts) >= 3 and all(e > 0 for _, e in pts):
                fit = stats.fit_order(pts)
                rows.append(
                    ResultRow(
                        cfg.experiment, scheme_name, None, t, "l2_slope",
                        fit.fitted_slope, fit.slope_stderr, cfg.trajectories, 0, 0, cfg.seed,
                    )
                )
    return rows, dumps


# ---------------------------------------------------------------------------
# lj-rdf


def _lj_task(scheme_code, particles, box_length, h, sigma, n_steps, equil, seed, traj, pos0, r_max, bins):
    """One realization with the reject-and-restart policy; fresh trajectory
    indices are attempt-shifted so restarts stay deterministic."""
    counts = np.zeros(bins, dtype=np.int64)
    rejected = 0
    force_evals = 0
    attempt = 0
    while True:
        pos, _xi, status, _fail, n_samples, fe = _K.run_lj_chain(
            scheme_code, particles, box_length, h, sigma, n_steps, equil, 0,
            seed, traj + (attempt << 40), pos0, None, counts, r_max,
        )
        force_evals += fe
        if status == 0:
            return counts, n_samples, rejected, force_evals
        counts[:] = 0
        rejected += 1
        attempt += 1
        if attempt >= 1000:
            raise RuntimeError("LJ realization restart limit exceeded")


def run_lj_rdf(cfg: ExperimentConfig, workers: int | None = None) -> tuple[list[ResultRow], dict]:
    """Radial-distribution error of each scheme against a fine-step baseline.

    The baseline is the non-Markovian scheme at a small stepsize; main runs
    sweep the ladder with per-scheme realization counts (the non-Markovian
    scheme needs more realizations because its bias is small).
    """
    workers = default_workers() if workers is None else workers
    spec = LennardJonesBox(cfg.particles, cfg.box_length)
    pos0 = lattice_configuration(spec).position
    ladder = _ladder(cfg.h_ladder_start, cfg.h_ladder_ratio, cfg.h_ladder_count)
    rows: list[ResultRow] = []
    dumps = {}

    jobs = [("baseline", "lm", cfg.baseline_h, cfg.baseline_steps, cfg.baseline_realizations)]
    for scheme_name in cfg.schemes:
        n_real = cfg.realizations_lm if scheme_name == "lm" else cfg.realizations
        for h in ladder:
            jobs.append(("main", scheme_name, h, int(round(cfg.window_time / h)), n_real))

    tasks = []
    index = {}
    for kind, scheme_name, h, n_steps, n_real in jobs:
        scheme = Scheme.from_name(scheme_name)
        for r in range(n_real):
            index[(kind, scheme_name, h, r)] = len(tasks)
            tasks.append(
                (
                    scheme.code, cfg.particles, cfg.box_length, h, cfg.sigma, n_steps,
                    cfg.equilibration_steps, cfg.seed, r, pos0, cfg.rdf_r_max, cfg.rdf_bins,
                )
            )
    results = parallel_map(_lj_task, tasks, workers)

    def _merge(kind, scheme_name, h, n_real, skip=None):
        acc = stats.RdfAccumulator(cfg.rdf_r_max, cfg.rdf_bins, cfg.particles)
        rejected = force_evals = 0
        for r in range(n_real):
            if r == skip:
                continue
            counts, n_samples, rej, fe = results[index[(kind, scheme_name, h, r)]]
            acc.add_counts(counts, n_samples)
            rejected += rej
            force_evals += fe
        return acc, rejected, force_evals

    def _noise_power(kind, scheme_name, h, n_real, skip=None):
        """Estimated Sum_i Var(mean g_i): the additive noise-floor bias of the
        squared L2 distance, from the across-realization scatter."""
        gs = []
        pairs = cfg.particles * (cfg.particles - 1) // 2
        width = cfg.rdf_r_max / cfg.rdf_bins
        for r in range(n_real):
            if r == skip:
                continue
            counts, n_samples, _rej, _fe = results[index[(kind, scheme_name, h, r)]]
            gs.append(counts / (pairs * n_samples * width))
        g = np.asarray(gs)
        n = g.shape[0]
        if n < 2:
            return 0.0
        return float(np.sum(g.var(axis=0, ddof=1)) / n)

    base_acc, base_rej, base_fe = _merge("baseline", "lm", cfg.baseline_h, cfg.baseline_realizations)
    base_est = base_acc.estimate()
    dumps["rdf_baseline"] = base_est
    rows.append(
        ResultRow(
            cfg.experiment, "lm", cfg.baseline_h, cfg.baseline_steps * cfg.baseline_h,
            "baseline_samples", float(base_est.sample_count), None,
            cfg.baseline_realizations, base_fe, base_rej, cfg.seed,
        )
    )

    base_noise = _noise_power("baseline", "lm", cfg.baseline_h, cfg.baseline_realizations)

    slope_pts: dict[tuple[str, str], list] = {}
    for scheme_name in cfg.schemes:
        n_real = cfg.realizations_lm if scheme_name == "lm" else cfg.realizations
        for h in ladder:
            acc, rejected, force_evals = _merge("main", scheme_name, h, n_real)
            est = acc.estimate()
            err = stats.rdf_l2(est, base_est)
            # Noise-debiased squared distance: E ||ghat - gbase||^2 equals
            # ||bias||^2 plus both estimators' summed mean-variances, so
            # subtracting the estimated noise powers recovers the bias norm
            # (essential for the fine-step schemes, whose bias is close to
            # the sampling floor at desk scale).
            noise = _noise_power("main", scheme_name, h, n_real)
            deb2 = err * err - noise - base_noise
            deb = math.sqrt(deb2) if deb2 > 0 else float("nan")
            loo, loo_deb = [], []
            if n_real > 1:
                for r in range(n_real):
                    sub, _, _ = _merge("main", scheme_name, h, n_real, skip=r)
                    e_r = stats.rdf_l2(sub.estimate(), base_est)
                    loo.append(e_r)
                    d2 = e_r * e_r - _noise_power("main", scheme_name, h, n_real, skip=r) - base_noise
                    loo_deb.append(math.sqrt(d2) if d2 > 0 else 0.0)
            common = dict(
                experiment=cfg.experiment, scheme=scheme_name, h=h, time=cfg.window_time,
                realizations=n_real, force_evals=force_evals, rejected=rejected, seed=cfg.seed,
            )
            rows.append(ResultRow(metric="l2", value=err, std_error=_jackknife_se(err, loo), **common))
            rows.append(
                ResultRow(metric="l2_debiased", value=deb, std_error=_jackknife_se(deb, loo_deb), **common)
            )
            slope_pts.setdefault((scheme_name, "l2_raw_slope"), []).append((h, err))
            slope_pts.setdefault((scheme_name, "l2_slope"), []).append((h, deb))
            dumps[f"rdf_{scheme_name}_h{h:.6g}"] = est

    for (scheme_name, metric), pts in slope_pts.items():
        good = [(h, e) for h, e in pts if e > 0 and not math.isnan(e)]
        if len(good) >= 3:
            fit = stats.fit_order(good)
            rows.append(
                ResultRow(
                    cfg.experiment, scheme_name, None, cfg.window_time, metric,
                    fit.fitted_slope, fit.slope_stderr, 0, 0, 0, cfg.seed,
                )
            )
    return rows, dumps


RUNNERS = {
    "ou-verify": run_ou_verify,
    "longtime-1d": run_longtime_1d,
    "finite-time-1d": run_finite_time_1d,
    "lj-rdf": run_lj_rdf,
}


def run_experiment(cfg: ExperimentConfig, out_dir: str, workers: int | None = None) -> list[ResultRow]:
    """Run one experiment and write results.csv, config.json and the dumps."""
    os.makedirs(out_dir, exist_ok=True)
    rows, dumps = RUNNERS[cfg.experiment](cfg, workers)
    emit_results(rows, os.path.join(out_dir, "results.csv"))
    emit_sidecar(cfg.resolved_dict(), os.path.join(out_dir, "config.json"))
    for name, obj in dumps.items():
        path = os.path.join(out_dir, f"{name}.csv")
        if isinstance(obj, stats.HistogramDensity):
            emit_histogram(obj, path)
        elif isinstance(obj, stats.RdfEstimate):
            emit_rdf(obj, path)
    return rows
