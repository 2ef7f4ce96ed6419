"""Cross-backend contract: the compiled kernels and the pure-Python mirror
must produce bit-identical results on every entry point."""

import math

import numpy as np
import pytest

from bdbench.model import Configuration, LennardJonesBox, force, lattice_configuration
from bdbench.noise import TAG_INIT, TAG_STEP

TWO_PI = 2.0 * math.pi
SQRT2 = math.sqrt(2.0)


class TestBitIdentity:
    def test_philox_normals(self, kernels_compiled, kernels_python):
        for traj, step, tag, n in [(0, 0, TAG_STEP, 1), (3, -1, TAG_STEP, 8), (2 ** 40 + 5, 10 ** 9, TAG_INIT, 81)]:
            a = kernels_compiled.philox_normals(0x0123456789ABCDEF, traj, step, tag, n)
            b = kernels_python.philox_normals(0x0123456789ABCDEF, traj, step, tag, n)
            np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("scheme", [0, 1, 2])
    @pytest.mark.parametrize("pot,alpha,period,x0", [(0, 1.0, 0.0, 1.0), (1, 0.0, TWO_PI, 3.0)])
    def test_run_chain_1d(self, kernels_compiled, kernels_python, scheme, pot, alpha, period, x0):
        args = (scheme, pot, alpha, period, 0.2, SQRT2, 2000, 100, 0, 42, 9, x0, None, 1e6)
        hc = np.zeros(64, dtype=np.int64)
        hp = np.zeros(64, dtype=np.int64)
        lo, hi = (0.0, TWO_PI) if period else (-6.0, 6.0)
        rc = kernels_compiled.run_chain_1d(*args, hc, lo, hi)
        rp = kernels_python.run_chain_1d(*args, hp, lo, hi)
        assert rc == rp
        np.testing.assert_array_equal(hc, hp)

    def test_run_chain_continuation(self, kernels_compiled, kernels_python):
        # Chained segments with step offsets and carried xi_prev.
        for k in (kernels_compiled, kernels_python):
            full = k.run_chain_1d(1, 1, 0.0, TWO_PI, 0.25, SQRT2, 400, 0, 0, 7, 1, 3.0, None, 1e6, None, 0.0, 0.0)
            half1 = k.run_chain_1d(1, 1, 0.0, TWO_PI, 0.25, SQRT2, 200, 0, 0, 7, 1, 3.0, None, 1e6, None, 0.0, 0.0)
            half2 = k.run_chain_1d(
                1, 1, 0.0, TWO_PI, 0.25, SQRT2, 200, 0, 200, 7, 1, half1[0], half1[1], 1e6, None, 0.0, 0.0
            )
            assert half2[0] == full[0]

    def test_run_ensemble_final(self, kernels_compiled, kernels_python):
        a = kernels_compiled.run_ensemble_final_1d(1, 0, 1.0, 0.1, SQRT2, 50, 11, 100, 500, 1.0, 1e6)
        b = kernels_python.run_ensemble_final_1d(1, 0, 1.0, 0.1, SQRT2, 50, 11, 100, 500, 1.0, 1e6)
        assert a == b

    def test_run_ensemble_snapshots(self, kernels_compiled, kernels_python):
        snaps = np.array([0, 3, 10, 24], dtype=np.int64)
        ca = np.zeros((4, 21), dtype=np.int64)
        cb = np.zeros((4, 21), dtype=np.int64)
        ra = kernels_compiled.run_ensemble_snapshots_1d(2, 0.24, SQRT2, 13, 5, 300, snaps, ca, 0.0, TWO_PI, math.pi, 1.0)
        rb = kernels_python.run_ensemble_snapshots_1d(2, 0.24, SQRT2, 13, 5, 300, snaps, cb, 0.0, TWO_PI, math.pi, 1.0)
        assert ra == rb
        np.testing.assert_array_equal(ca, cb)

    @pytest.mark.parametrize("scheme", [0, 1, 2])
    def test_run_lj_chain(self, kernels_compiled, kernels_python, scheme):
        pos0 = lattice_configuration(LennardJonesBox(8, 4.0)).position
        ca = np.zeros(40, dtype=np.int64)
        cb = np.zeros(40, dtype=np.int64)
        args = (scheme, 8, 4.0, 0.003, math.sqrt(0.2), 250, 50, 0, 3, 2, pos0, None)
        pa, xa, sa, fa, na, ea = kernels_compiled.run_lj_chain(*args, ca, 4.0)
        pb, xb, sb, fb, nb, eb = kernels_python.run_lj_chain(*args, cb, 4.0)
        np.testing.assert_array_equal(pa, pb)
        np.testing.assert_array_equal(xa, xb)
        assert (sa, fa, na, ea) == (sb, fb, nb, eb)
        np.testing.assert_array_equal(ca, cb)

    def test_lj_forces_and_energy(self, kernels_compiled, kernels_python, rng):
        pos = rng.uniform(0, 4.0, 24)
        fa = np.zeros(24)
        fb = np.zeros(24)
        ra = kernels_compiled.lj_forces(pos, 8, 4.0, fa)
        rb = kernels_python.lj_forces(pos, 8, 4.0, fb)
        assert ra == rb
        np.testing.assert_array_equal(fa, fb)
        assert kernels_compiled.lj_energy(pos, 8, 4.0) == kernels_python.lj_energy(pos, 8, 4.0)

    def test_rdf_bin_pairs(self, kernels_compiled, kernels_python, rng):
        pos = rng.uniform(0, 4.0, 24)
        ca = np.zeros(50, dtype=np.int64)
        cb = np.zeros(50, dtype=np.int64)
        kernels_compiled.rdf_bin_pairs(pos, 8, 4.0, ca, 4.0)
        kernels_python.rdf_bin_pairs(pos, 8, 4.0, cb, 4.0)
        np.testing.assert_array_equal(ca, cb)


class TestKernelSemantics:
    def test_kernel_lj_forces_match_model(self, kernels_compiled, rng):
        # The kernel's scalar pair loop against the vectorized model forces.
        spec = LennardJonesBox(8, 4.0)
        for _ in range(20):
            pos = rng.uniform(0, 4.0, 24)
            f_model = force(spec, Configuration(pos, spec.domain()))
            f_kernel = np.zeros(24)
            assert kernels_compiled.lj_forces(pos, 8, 4.0, f_kernel) == 0
            np.testing.assert_allclose(f_kernel, f_model, rtol=1e-11, atol=1e-11)

    def test_singular_pair_detected(self, kernels_compiled):
        pos = np.zeros(6)
        pos[3:] = [1e-9, 0.0, 0.0]
        f = np.zeros(6)
        assert kernels_compiled.lj_forces(pos, 2, 10.0, f) == 1

    def test_chain_aborts_on_singular_pair(self, kernels_compiled, kernels_python):
        # A status of 1 marks the realization for rejection by the caller.
        pos0 = np.array([0.0, 0.0, 0.0, 1e-9, 0.0, 0.0])
        for k in (kernels_compiled, kernels_python):
            pos, xi, status, fail, ns, fe = k.run_lj_chain(
                2, 2, 10.0, 0.01, 0.1, 100, 0, 0, 1, 0, pos0, None, None, 0.0
            )
            assert status == 1
            assert fail == 0
            assert fe == 0

    def test_equilibration_skips_observation(self, kernels_compiled):
        counts = np.zeros(10, dtype=np.int64)
        res = kernels_compiled.run_chain_1d(
            0, 1, 0.0, TWO_PI, 0.2, SQRT2, 100, 40, 0, 5, 0, 3.0, None, 1e6, counts, 0.0, TWO_PI
        )
        assert res[2] == 60
        assert counts.sum() == 60

    def test_blowup_detection(self, kernels_compiled):
        res = kernels_compiled.run_chain_1d(
            0, 0, 1.0, 0.0, 0.1, SQRT2, 1000, 0, 0, 5, 0, 0.0, None, 1e-3, None, 0.0, 0.0
        )
        assert res[7] >= 0  # blew past the tiny threshold and stopped
        assert res[8] == res[7] + 1  # force evals counted up to the failure
