"""Backend benchmark: compiled kernels versus the pure-Python mirror.

Run with `python -m bdbench.benchmark`.  Times the 1-D cosine chain and the
Lennard-Jones box chain on both backends and reports steps per second; also
asserts that the two backends produce bit-identical results on the timed
workloads.
"""

import time

import numpy as np

from . import _kernels_py
from .backend import get_kernels
from .model import LennardJonesBox, lattice_configuration

TWO_PI = 2.0 * np.pi


def _time_chain_1d(k, n_steps, scheme):
    counts = np.zeros(100, dtype=np.int64)
    t0 = time.perf_counter()
    res = k.run_chain_1d(
        scheme, k.POT_COSINE, 0.0, TWO_PI, 0.2, 1.4142135623730951,
        n_steps, 0, 0, 12345, 7, 3.14, None, 1e6, counts, 0.0, TWO_PI,
    )
    dt = time.perf_counter() - t0
    return dt, res, counts


def _time_lj(k, n_steps, scheme):
    spec = LennardJonesBox(27, 4.5)
    pos0 = lattice_configuration(spec).position
    counts = np.zeros(90, dtype=np.int64)
    t0 = time.perf_counter()
    res = k.run_lj_chain(
        scheme, 27, 4.5, 0.003, 0.4472135954999579, n_steps, 0, 0, 12345, 3,
        pos0, None, counts, 4.5,
    )
    dt = time.perf_counter() - t0
    return dt, res, counts


def main() -> int:
    try:
        compiled = get_kernels("compiled")
    except ImportError:
        print("compiled backend not built; run pip install -e . --no-build-isolation")
        return 1
    py = _kernels_py

    print(f"{'workload':<28}{'compiled steps/s':>18}{'python steps/s':>18}{'speedup':>10}")
    for label, fn, n_fast, n_slow in [
        ("cosine chain, EM", lambda k, n: _time_chain_1d(k, n, k.SCHEME_EM), 2_000_000, 20_000),
        ("cosine chain, non-Markovian", lambda k, n: _time_chain_1d(k, n, k.SCHEME_LM), 2_000_000, 20_000),
        ("cosine chain, Heun", lambda k, n: _time_chain_1d(k, n, k.SCHEME_HEUN), 2_000_000, 20_000),
        ("LJ box 27, non-Markovian", lambda k, n: _time_lj(k, n, k.SCHEME_LM), 5_000, 50),
    ]:
        dt_c, _, _ = fn(compiled, n_fast)
        dt_p, _, _ = fn(py, n_slow)
        rate_c = n_fast / dt_c
        rate_p = n_slow / dt_p
        print(f"{label:<28}{rate_c:>18.3e}{rate_p:>18.3e}{rate_c / rate_p:>10.1f}")

    # Bit-identity spot check on a shared small workload.
    for scheme in (compiled.SCHEME_EM, compiled.SCHEME_LM, compiled.SCHEME_HEUN):
        dt, res_c, counts_c = _time_chain_1d(compiled, 5000, scheme)
        dt, res_p, counts_p = _time_chain_1d(py, 5000, scheme)
        assert res_c[0] == res_p[0] and np.array_equal(counts_c, counts_p)
    _, res_c, counts_c = _time_lj(compiled, 200, compiled.SCHEME_HEUN)
    _, res_p, counts_p = _time_lj(py, 200, py.SCHEME_HEUN)
    assert np.array_equal(res_c[0], res_p[0]) and np.array_equal(counts_c, counts_p)
    print("bit-identity check: backends agree exactly")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
