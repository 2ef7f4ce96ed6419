import math

import numpy as np
import pytest
import scipy.special

from bdbench.errors import UndersampledDistributionError
from bdbench.model import Cosine, LennardJonesBox, Quadratic, lattice_configuration
from bdbench.stats import (
    HistogramAccumulator,
    HistogramDensity,
    RdfAccumulator,
    fit_order,
    kl_error,
    l2_error,
    partition_function_1d,
    rdf_l2,
    reference_density_1d,
)

TWO_PI = 2.0 * math.pi


class TestHistogram:
    def test_single_sample_single_bin(self):
        acc = HistogramAccumulator(0.0, 10.0, 10)
        acc.add(3.5)
        d = acc.density()
        expect = np.zeros(10)
        expect[3] = 1.0
        np.testing.assert_array_equal(d.mass, expect)

    def test_out_of_range_counted_not_fatal(self):
        acc = HistogramAccumulator(0.0, 1.0, 4)
        acc.add(-0.1)
        acc.add(1.0)
        acc.add(0.5)
        assert acc.out_of_range == 2
        assert acc.total_samples == 1

    def test_merge_equals_sequential(self, rng):
        xs = rng.uniform(0, TWO_PI, 5000)
        a = HistogramAccumulator(0.0, TWO_PI, 32)
        b = HistogramAccumulator(0.0, TWO_PI, 32)
        c = HistogramAccumulator(0.0, TWO_PI, 32)
        a.add_array(xs[:2000])
        b.add_array(xs[2000:])
        c.add_array(xs)
        a.merge(b)
        np.testing.assert_array_equal(a.counts, c.counts)

    def test_merge_associative_commutative(self, rng):
        parts = []
        for i in range(3):
            acc = HistogramAccumulator(0.0, 1.0, 8)
            acc.add_array(rng.uniform(0, 1, 500))
            parts.append(acc)

        def merged(order):
            out = HistogramAccumulator(0.0, 1.0, 8)
            for i in order:
                out.merge(parts[i])
            return out.counts.copy()

        np.testing.assert_array_equal(merged([0, 1, 2]), merged([2, 0, 1]))
        np.testing.assert_array_equal(merged([1, 2, 0]), merged([0, 2, 1]))

    def test_layout_mismatch(self):
        a = HistogramAccumulator(0.0, 1.0, 8)
        b = HistogramAccumulator(0.0, 2.0, 8)
        with pytest.raises(ValueError):
            a.merge(b)

    def test_uniform_binomial_bound(self, rng):
        n, bins = 1_000_000, 100
        acc = HistogramAccumulator(0.0, TWO_PI, bins)
        acc.add_array(rng.uniform(0, TWO_PI, n))
        p = 1.0 / bins
        se = math.sqrt(p * (1 - p) / n)
        assert np.all(np.abs(acc.density().mass - p) < 5 * se)

    def test_normalization(self, rng):
        acc = HistogramAccumulator(0.0, 1.0, 13)
        acc.add_array(rng.uniform(0, 1, 9999))
        assert acc.density().mass.sum() == pytest.approx(1.0, abs=1e-12)


class TestErrors:
    def make(self, mass):
        m = np.asarray(mass, dtype=float)
        return HistogramDensity(0.0, 1.0, m / m.sum())

    def test_l2_identical(self):
        d = self.make([0.25, 0.75])
        assert l2_error(d, d) == 0.0

    def test_l2_hand_value(self):
        assert l2_error(self.make([0.6, 0.4]), self.make([0.5, 0.5])) == pytest.approx(
            math.sqrt(0.02), rel=1e-15
        )

    def test_l2_layout_mismatch(self):
        with pytest.raises(ValueError):
            l2_error(self.make([1, 1]), self.make([1, 1, 1]))

    def test_kl_identical_zero(self):
        d = self.make([0.2, 0.3, 0.5])
        assert kl_error(d, d) == 0.0

    def test_kl_nonnegative_random_pairs(self, rng):
        for _ in range(1000):
            a = self.make(rng.uniform(0.01, 1, 16))
            b = self.make(rng.uniform(0.01, 1, 16))
            assert kl_error(a, b) >= 0.0
            if not np.array_equal(a.mass, b.mass):
                assert kl_error(a, b) > 0.0

    def test_kl_zero_iff_equal(self, rng):
        a = self.make(rng.uniform(0.01, 1, 16))
        assert kl_error(a, a) == 0.0

    def test_kl_undersampled(self):
        ref = self.make([0.5, 0.5])
        est = HistogramDensity(0.0, 1.0, np.array([1.0, 0.0]))
        with pytest.raises(UndersampledDistributionError):
            kl_error(ref, est)

    def test_kl_reference_zero_bins_contribute_nothing(self):
        ref = HistogramDensity(0.0, 1.0, np.array([0.0, 1.0]))
        est = self.make([0.5, 0.5])
        assert kl_error(ref, est) == pytest.approx(math.log(2.0), rel=1e-14)

    def test_kl_quadratic_in_perturbation(self, rng):
        # rho_hat = rho (1 + eps psi) with sum psi rho = 0: KL / eps^2 tends
        # to sum psi^2 rho / 2; the ratio is constant within 1% between
        # eps = 1e-2 and 1e-3.
        rho = rng.uniform(0.5, 1.5, 64)
        rho /= rho.sum()
        psi = rng.uniform(-1, 1, 64)
        psi -= np.dot(psi, rho)  # orthogonality: sum psi rho = 0
        ratios = []
        for eps in (1e-2, 1e-3):
            est = HistogramDensity(0.0, 1.0, rho * (1 + eps * psi))
            ref = HistogramDensity(0.0, 1.0, rho)
            ratios.append(kl_error(ref, est) / eps ** 2)
        limit = 0.5 * np.dot(psi ** 2, rho)
        assert abs(ratios[0] - ratios[1]) / ratios[1] < 0.01
        assert ratios[1] == pytest.approx(limit, rel=1e-2)


class TestReferenceDensity:
    def test_flat_potential_uniform(self):
        d = reference_density_1d(Cosine(), 1e-12, 0.0, TWO_PI, 20)
        np.testing.assert_allclose(d.mass, 1.0 / 20, rtol=1e-10)

    def test_cosine_peak_at_pi(self):
        d = reference_density_1d(Cosine(), 1.0, 0.0, TWO_PI, 100)
        assert d.mass.argmax() in (49, 50)
        assert d.mass.sum() == pytest.approx(1.0, abs=1e-13)

    def test_partition_function_bessel(self):
        # Z = int_0^{2 pi} e^{-cos x} dx = 2 pi I0(1).
        z = partition_function_1d(Cosine(), 1.0, 0.0, TWO_PI)
        assert z == pytest.approx(TWO_PI * scipy.special.i0(1.0), rel=1e-12)

    def test_refinement_stable(self):
        a = reference_density_1d(Cosine(), 1.0, 0.0, TWO_PI, 50)
        b = reference_density_1d(Cosine(), 1.0, 0.0, TWO_PI, 100)
        paired = b.mass.reshape(50, 2).sum(axis=1)
        np.testing.assert_allclose(paired, a.mass, atol=1e-10)

    def test_quadrature_depth_stable(self):
        # Independent high-depth Simpson per bin agrees with the adaptive
        # quadrature to well under 1e-10 per bin mass.
        import scipy.integrate as si
        bins = 25
        d = reference_density_1d(Cosine(), 1.0, 0.0, TWO_PI, bins)
        edges = np.linspace(0.0, TWO_PI, bins + 1)
        raw = np.empty(bins)
        for i in range(bins):
            xs = np.linspace(edges[i], edges[i + 1], 4097)
            raw[i] = si.simpson(np.exp(-np.cos(xs)), x=xs)
        np.testing.assert_allclose(d.mass, raw / raw.sum(), atol=1e-12)

    def test_exact_sampler_agrees(self, rng):
        # Inverse-CDF sampling from the Gibbs density lands within the Monte
        # Carlo error scale of the quadrature reference.
        bins = 100
        ref = reference_density_1d(Cosine(), 1.0, 0.0, TWO_PI, bins)
        grid = np.linspace(0, TWO_PI, 20001)
        pdf = np.exp(-np.cos(grid))
        cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) / 2)])
        cdf /= cdf[-1]
        draws = np.interp(rng.uniform(0, 1, 2_000_000), cdf, grid)
        acc = HistogramAccumulator(0.0, TWO_PI, bins)
        acc.add_array(draws)
        assert l2_error(acc.density(), ref) < 1e-2

    def test_quadratic_reference(self):
        # beta * alpha = 1 makes the Gibbs density a standard normal, so the
        # exact bin masses come from the normal CDF.
        d = reference_density_1d(Quadratic(1.0), 1.0, -8.0, 8.0, 64)
        edges = np.linspace(-8.0, 8.0, 65)
        cdf = scipy.special.ndtr(edges)
        expect = np.diff(cdf) / (cdf[-1] - cdf[0])
        np.testing.assert_allclose(d.mass, expect, atol=1e-12)


class TestRdf:
    def test_fixed_pair_single_bin(self):
        acc = RdfAccumulator(3.0, 30, 2)
        pos = np.array([0.0, 0.0, 0.0, 1.25, 0.0, 0.0])
        acc.add_positions(pos, 10.0)
        est = acc.estimate()
        idx = int(1.25 / 0.1)
        assert acc.counts[idx] == 1 and acc.counts.sum() == 1
        assert est.g[idx] == pytest.approx(1.0 / 0.1)

    def test_ideal_gas_matches_bruteforce(self, rng):
        # Uniform random particles: kernel binning equals an independent
        # numpy pair-distance histogram, and the counts follow the shell
        # measure within 5 sigma.
        n, L, bins, r_max = 16, 4.0, 40, 4.0
        acc = RdfAccumulator(r_max, bins, n)
        brute = np.zeros(bins)
        samples = 400
        for _ in range(samples):
            pos = rng.uniform(0, L, 3 * n)
            acc.add_positions(pos, L)
            q = pos.reshape(n, 3)
            d = q[:, None, :] - q[None, :, :]
            d -= L * np.floor(d / L + 0.5)
            r = np.sqrt((d ** 2).sum(-1))
            iu = np.triu_indices(n, k=1)
            hist, _ = np.histogram(r[iu], bins=bins, range=(0, r_max))
            brute += hist
        np.testing.assert_array_equal(acc.counts, brute)
        # Below the half-box the shell measure is exact: the probability of a
        # uniform pair landing in [r0, r1) is 4 pi (r1^3 - r0^3) / (3 L^3).
        n_pairs_total = n * (n - 1) // 2 * samples
        edges = np.linspace(0, r_max, bins + 1)
        for i in range(bins):
            if edges[i + 1] >= L / 2:
                break
            p = 4 * math.pi * (edges[i + 1] ** 3 - edges[i] ** 3) / (3 * L ** 3)
            se = math.sqrt(n_pairs_total * p * (1 - p))
            assert abs(acc.counts[i] - n_pairs_total * p) < 5 * se + 1

    def test_merge(self, rng):
        a = RdfAccumulator(4.0, 20, 8)
        b = RdfAccumulator(4.0, 20, 8)
        for _ in range(5):
            a.add_positions(rng.uniform(0, 4, 24), 4.0)
            b.add_positions(rng.uniform(0, 4, 24), 4.0)
        total = a.counts + b.counts
        a.merge(b)
        np.testing.assert_array_equal(a.counts, total)
        assert a.sample_count == 10

    def test_l2_zero_against_itself(self, rng):
        acc = RdfAccumulator(4.0, 20, 8)
        acc.add_positions(rng.uniform(0, 4, 24), 4.0)
        est = acc.estimate()
        assert rdf_l2(est, est) == 0.0

    def test_beyond_half_box_bins_reachable_but_bounded(self):
        # Minimum-image distances never exceed sqrt(3) L / 2.
        acc = RdfAccumulator(4.5, 90, 27)
        pos = lattice_configuration(LennardJonesBox(27, 4.5)).position
        acc.add_positions(pos, 4.5)
        limit = math.sqrt(3) * 4.5 / 2
        top = np.nonzero(acc.counts)[0].max()
        assert (top + 1) * acc.estimate().bin_width <= limit + 0.05


class TestFitOrder:
    def test_exact_first_order(self):
        pts = [(h, 3.0 * h) for h in (0.1, 0.2, 0.4, 0.8, 1.6)]
        fit = fit_order(pts)
        assert fit.fitted_slope == pytest.approx(1.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_exact_second_order(self):
        pts = [(h, 0.5 * h * h) for h in (0.1, 0.2, 0.4, 0.8, 1.6)]
        assert fit_order(pts).fitted_slope == pytest.approx(2.0, abs=1e-12)

    def test_noisy_second_order(self, rng):
        pts = [(h, 0.5 * h * h * (1 + 0.01 * rng.standard_normal())) for h in np.geomspace(0.05, 1.0, 8)]
        fit = fit_order(pts)
        assert 1.9 <= fit.fitted_slope <= 2.1

    def test_requires_positive_errors(self):
        with pytest.raises(ValueError):
            fit_order([(0.1, 1.0), (0.2, 0.0), (0.4, 2.0)])

    def test_requires_three_points(self):
        with pytest.raises(ValueError):
            fit_order([(0.1, 1.0), (0.2, 2.0)])
