# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled trajectory kernels.

Statement-for-statement transliteration of `bdbench._kernels_py`; see the
notes there.  The two modules must stay bit-identical: same operation order,
no FMA contraction (enforced by -ffp-contract=off in setup.py), libm for all
transcendentals.
"""

import numpy as np

from libc.math cimport M_PI, cos, floor, isfinite, log, sin, sqrt
from libc.stdint cimport int64_t, uint32_t, uint64_t

BACKEND = "compiled"

SCHEME_EM = 0
SCHEME_LM = 1
SCHEME_HEUN = 2

POT_QUADRATIC = 0
POT_COSINE = 1

MAX_RESTARTS = 10000

cdef int SCHEME_EM_C = 0
cdef int SCHEME_LM_C = 1
cdef int SCHEME_HEUN_C = 2
cdef int POT_QUADRATIC_C = 0

cdef double TWO_PI = 2.0 * M_PI
cdef double U53 = 1.0 / 9007199254740992.0
cdef int TAG_STEP_C = 0
cdef int TAG_INIT_C = 1


def backend_name():
    return BACKEND


cdef inline double _pair_c(uint32_t k0, uint32_t k1, uint64_t traj, int64_t step,
                           uint32_t tag, uint32_t block, double* z1, bint want_z1) noexcept nogil:
    """z0 of one Philox block; optionally also writes z1."""
    cdef uint64_t s_enc = <uint64_t>(step + 1)
    cdef uint32_t c0 = block | (tag << 28)
    cdef uint32_t c1 = <uint32_t>(s_enc & 0xFFFFFFFFu)
    cdef uint32_t c2 = <uint32_t>(((s_enc >> 32) & 0xFFu) | (((traj >> 32) & 0xFFFFFFu) << 8))
    cdef uint32_t c3 = <uint32_t>(traj & 0xFFFFFFFFu)
    cdef uint64_t p0, p1, x01, x23
    cdef uint32_t hi0, lo0, hi1, lo1
    cdef double u1, u2, r
    cdef int i
    for i in range(10):
        p0 = (<uint64_t>0xD2511F53u) * c0
        p1 = (<uint64_t>0xCD9E8D57u) * c2
        hi0 = <uint32_t>(p0 >> 32)
        lo0 = <uint32_t>p0
        hi1 = <uint32_t>(p1 >> 32)
        lo1 = <uint32_t>p1
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = k0 + 0x9E3779B9u
        k1 = k1 + 0xBB67AE85u
    x01 = ((<uint64_t>c0) << 32) | c1
    x23 = ((<uint64_t>c2) << 32) | c3
    u1 = <double>((x01 >> 11) + 1) * U53
    u2 = <double>((x23 >> 11) + 1) * U53
    r = sqrt(-2.0 * log(u1))
    if want_z1:
        z1[0] = r * sin(TWO_PI * u2)
    return r * cos(TWO_PI * u2)


def philox_normals(seed, traj, step, tag, n):
    """Standard normals for components 0..n-1 at one (trajectory, step) address."""
    cdef uint32_t k0 = <uint32_t>(seed & 0xFFFFFFFF)
    cdef uint32_t k1 = <uint32_t>((seed >> 32) & 0xFFFFFFFF)
    cdef uint64_t traj_c = traj
    cdef int64_t step_c = step
    cdef uint32_t tag_c = tag
    cdef int n_c = n
    out = np.empty(n_c)
    cdef double[:] o = out
    cdef int b
    cdef double z0, z1
    for b in range((n_c + 1) // 2):
        if 2 * b + 1 < n_c:
            z0 = _pair_c(k0, k1, traj_c, step_c, tag_c, b, &z1, True)
            o[2 * b] = z0
            o[2 * b + 1] = z1
        else:
            z0 = _pair_c(k0, k1, traj_c, step_c, tag_c, b, &z1, False)
            o[2 * b] = z0
    return out


cdef inline double _force_1d_c(int pot, double alpha, double x) noexcept nogil:
    if pot == POT_QUADRATIC_C:
        return -alpha * x
    return sin(x)


def run_chain_1d(
    int scheme,
    int pot,
    double alpha,
    double period,
    double h,
    double sigma,
    int64_t n_steps,
    int64_t equil_steps,
    int64_t step_offset,
    seed,
    traj,
    double x0,
    xi_prev,
    double blowup,
    hist_counts,
    double hist_lower,
    double hist_upper,
):
    """See bdbench._kernels_py.run_chain_1d."""
    cdef uint32_t k0 = <uint32_t>(seed & 0xFFFFFFFF)
    cdef uint32_t k1 = <uint32_t>((seed >> 32) & 0xFFFFFFFF)
    cdef uint64_t traj_c = traj
    cdef double sig = sigma * sqrt(h)
    cdef double half_h = 0.5 * h
    cdef double half_sig = 0.5 * sig
    cdef int64_t n_bins = 0
    cdef double inv_w = 0.0
    cdef long long[:] hist = None
    if hist_counts is not None:
        hist = hist_counts
        n_bins = hist.shape[0]
        inv_w = n_bins / (hist_upper - hist_lower)

    cdef double x = x0
    cdef double xi = 0.0
    cdef double zdummy
    if scheme == SCHEME_LM_C and xi_prev is None:
        xi = _pair_c(k0, k1, traj_c, step_offset - 1, TAG_STEP_C, 0, &zdummy, False)
    elif xi_prev is not None:
        xi = xi_prev

    cdef int64_t n_obs = 0
    cdef int64_t out_of_range = 0
    cdef double sum_x = 0.0
    cdef double sum_x2 = 0.0
    cdef double sum_x4 = 0.0
    cdef int64_t blown_step = -1
    cdef int64_t force_evals = 0

    cdef int64_t k, gstep, idx
    cdef double z, ax, xh, axh, x2
    for k in range(n_steps):
        gstep = step_offset + k
        z = _pair_c(k0, k1, traj_c, gstep, TAG_STEP_C, 0, &zdummy, False)
        if scheme == SCHEME_EM_C:
            ax = _force_1d_c(pot, alpha, x)
            force_evals += 1
            x = x + h * ax + sig * z
        elif scheme == SCHEME_LM_C:
            ax = _force_1d_c(pot, alpha, x)
            force_evals += 1
            x = x + h * ax + half_sig * (xi + z)
            xi = z
        else:
            ax = _force_1d_c(pot, alpha, x)
            xh = x + h * ax + sig * z
            axh = _force_1d_c(pot, alpha, xh)
            force_evals += 2
            x = x + half_h * (axh + ax) + sig * z
        if period != 0.0:
            x = x - period * floor(x / period)
            if x == period:
                x = 0.0
        elif x > blowup or x < -blowup or x != x:
            blown_step = gstep
            break
        if k >= equil_steps:
            n_obs += 1
            sum_x += x
            x2 = x * x
            sum_x2 += x2
            sum_x4 += x2 * x2
            if n_bins > 0:
                idx = <int64_t>((x - hist_lower) * inv_w)
                if 0 <= idx < n_bins and x >= hist_lower:
                    hist[idx] += 1
                else:
                    out_of_range += 1

    return (x, xi, n_obs, out_of_range, sum_x, sum_x2, sum_x4, blown_step, force_evals)


def run_ensemble_final_1d(int scheme, int pot, double alpha, double h, double sigma,
                          int64_t n_steps, seed, traj_start, int64_t n_traj,
                          double x0, double blowup):
    """See bdbench._kernels_py.run_ensemble_final_1d."""
    cdef double sum_x = 0.0
    cdef double sum_x2 = 0.0
    cdef int64_t n_rejected = 0
    cdef int64_t force_evals = 0
    cdef uint64_t base_start = traj_start
    cdef int64_t i
    cdef uint64_t base, attempt
    cdef double x
    for i in range(n_traj):
        base = base_start + <uint64_t>i
        attempt = 0
        while True:
            res = run_chain_1d(
                scheme, pot, alpha, 0.0, h, sigma, n_steps, n_steps, 0,
                seed, base + (attempt << 40), x0, None, blowup, None, 0.0, 0.0,
            )
            force_evals += res[8]
            if res[7] < 0:
                break
            n_rejected += 1
            attempt += 1
            if attempt >= MAX_RESTARTS:
                raise RuntimeError("trajectory restart limit exceeded")
        x = res[0]
        sum_x += x
        sum_x2 += x * x
    return sum_x, sum_x2, n_traj, n_rejected, force_evals


def run_ensemble_snapshots_1d(int scheme, double h, double sigma, seed, traj_start,
                              int64_t n_traj, snap_steps, counts,
                              double lower, double upper,
                              double init_mean, double init_std):
    """See bdbench._kernels_py.run_ensemble_snapshots_1d."""
    cdef uint32_t k0 = <uint32_t>(seed & 0xFFFFFFFF)
    cdef uint32_t k1 = <uint32_t>((seed >> 32) & 0xFFFFFFFF)
    cdef uint64_t start = traj_start
    cdef double sig = sigma * sqrt(h)
    cdef double half_h = 0.5 * h
    cdef double half_sig = 0.5 * sig
    cdef long long[:] snaps = snap_steps
    cdef long long[:, :] cnt = counts
    cdef int64_t n_snaps = snaps.shape[0]
    cdef int64_t n_bins = cnt.shape[1]
    cdef double inv_w = n_bins / (upper - lower)
    cdef int64_t n_steps = snaps[n_snaps - 1]
    cdef int64_t force_evals = 0

    cdef int64_t i, k, si, idx
    cdef uint64_t traj, attempt
    cdef double x, z, xi, ax, xh, axh, zdummy
    for i in range(n_traj):
        traj = start + <uint64_t>i
        x = 0.0
        attempt = 0
        while True:
            z = _pair_c(k0, k1, traj, <int64_t>attempt, TAG_INIT_C, 0, &zdummy, False)
            x = init_mean + init_std * z
            if 0.0 <= x < TWO_PI:
                break
            attempt += 1
            if attempt >= MAX_RESTARTS:
                raise RuntimeError("initial-condition rejection limit exceeded")
        si = 0
        if snaps[0] == 0:
            idx = <int64_t>((x - lower) * inv_w)
            if 0 <= idx < n_bins and x >= lower:
                cnt[0, idx] += 1
            si = 1
        xi = 0.0
        if scheme == SCHEME_LM:
            xi = _pair_c(k0, k1, traj, -1, TAG_STEP_C, 0, &zdummy, False)
        for k in range(n_steps):
            z = _pair_c(k0, k1, traj, k, TAG_STEP_C, 0, &zdummy, False)
            if scheme == SCHEME_EM_C:
                ax = sin(x)
                force_evals += 1
                x = x + h * ax + sig * z
            elif scheme == SCHEME_LM_C:
                ax = sin(x)
                force_evals += 1
                x = x + h * ax + half_sig * (xi + z)
                xi = z
            else:
                ax = sin(x)
                xh = x + h * ax + sig * z
                axh = sin(xh)
                force_evals += 2
                x = x + half_h * (axh + ax) + sig * z
            x = x - TWO_PI * floor(x / TWO_PI)
            if x == TWO_PI:
                x = 0.0
            if si < n_snaps and k + 1 == snaps[si]:
                idx = <int64_t>((x - lower) * inv_w)
                if 0 <= idx < n_bins and x >= lower:
                    cnt[si, idx] += 1
                si += 1
    return 0, force_evals


# ---------------------------------------------------------------------------
# Lennard-Jones box


cdef int _lj_forces_c(double[:] pos, int n, double L, double[:] f_out) noexcept nogil:
    cdef double inv_l = 1.0 / L
    cdef double sing_r2 = 1e-16
    cdef int i, j, c
    cdef double dx, dy, dz, r2, inv2, inv6, coef, fx, fy, fz
    for c in range(3 * n):
        f_out[c] = 0.0
    for i in range(n - 1):
        for j in range(i + 1, n):
            dx = pos[3 * i] - pos[3 * j]
            dy = pos[3 * i + 1] - pos[3 * j + 1]
            dz = pos[3 * i + 2] - pos[3 * j + 2]
            dx = dx - L * floor(dx * inv_l + 0.5)
            dy = dy - L * floor(dy * inv_l + 0.5)
            dz = dz - L * floor(dz * inv_l + 0.5)
            r2 = dx * dx + dy * dy + dz * dz
            if r2 < sing_r2:
                return 1
            inv2 = 1.0 / r2
            inv6 = inv2 * inv2 * inv2
            coef = (12.0 * inv6 * inv6 - 6.0 * inv6) * inv2
            fx = coef * dx
            fy = coef * dy
            fz = coef * dz
            f_out[3 * i] += fx
            f_out[3 * i + 1] += fy
            f_out[3 * i + 2] += fz
            f_out[3 * j] -= fx
            f_out[3 * j + 1] -= fy
            f_out[3 * j + 2] -= fz
    return 0


def lj_forces(pos, n, box_length, f_out):
    """Minimum-image pair forces into f_out; returns 1 on a singular pair."""
    cdef double[:] p = pos
    cdef double[:] f = f_out
    return _lj_forces_c(p, n, box_length, f)


def lj_energy(pos, n, box_length):
    """Total pair energy; returns inf on a coincident pair."""
    cdef double[:] p = pos
    cdef int n_c = n
    cdef double L = box_length
    cdef double inv_l = 1.0 / L
    cdef double u = 0.0
    cdef int i, j
    cdef double dx, dy, dz, r2, inv6
    for i in range(n_c - 1):
        for j in range(i + 1, n_c):
            dx = p[3 * i] - p[3 * j]
            dy = p[3 * i + 1] - p[3 * j + 1]
            dz = p[3 * i + 2] - p[3 * j + 2]
            dx = dx - L * floor(dx * inv_l + 0.5)
            dy = dy - L * floor(dy * inv_l + 0.5)
            dz = dz - L * floor(dz * inv_l + 0.5)
            r2 = dx * dx + dy * dy + dz * dz
            if r2 == 0.0:
                return float("inf")
            inv6 = 1.0 / (r2 * r2 * r2)
            u += inv6 * inv6 - inv6
    return u


cdef void _rdf_bin_c(double[:] pos, int n, double L, long long[:] counts, double r_max) noexcept nogil:
    cdef double inv_l = 1.0 / L
    cdef int64_t n_bins = counts.shape[0]
    cdef double inv_w = n_bins / r_max
    cdef int i, j
    cdef int64_t idx
    cdef double dx, dy, dz, r
    for i in range(n - 1):
        for j in range(i + 1, n):
            dx = pos[3 * i] - pos[3 * j]
            dy = pos[3 * i + 1] - pos[3 * j + 1]
            dz = pos[3 * i + 2] - pos[3 * j + 2]
            dx = dx - L * floor(dx * inv_l + 0.5)
            dy = dy - L * floor(dy * inv_l + 0.5)
            dz = dz - L * floor(dz * inv_l + 0.5)
            r = sqrt(dx * dx + dy * dy + dz * dz)
            if r < r_max:
                idx = <int64_t>(r * inv_w)
                if idx < n_bins:
                    counts[idx] += 1


def rdf_bin_pairs(pos, n, box_length, counts, r_max):
    """Bin every pair's minimum-image distance below r_max; one call per sample."""
    cdef double[:] p = pos
    cdef long long[:] c = counts
    _rdf_bin_c(p, n, box_length, c, r_max)


def run_lj_chain(
    int scheme,
    int n,
    double box_length,
    double h,
    double sigma,
    int64_t n_steps,
    int64_t equil_steps,
    int64_t step_offset,
    seed,
    traj,
    pos0,
    xi_prev,
    rdf_counts,
    double r_max,
):
    """See bdbench._kernels_py.run_lj_chain."""
    cdef uint32_t k0 = <uint32_t>(seed & 0xFFFFFFFF)
    cdef uint32_t k1 = <uint32_t>((seed >> 32) & 0xFFFFFFFF)
    cdef uint64_t traj_c = traj
    cdef double L = box_length
    cdef double inv_l = 1.0 / L
    cdef int dim = 3 * n
    cdef int n_blocks = (dim + 1) // 2
    cdef double sig = sigma * sqrt(h)
    cdef double half_h = 0.5 * h
    cdef double half_sig = 0.5 * sig

    pos_arr = np.asarray(pos0, dtype=np.float64).copy()
    f_arr = np.zeros(dim)
    f_hat_arr = np.zeros(dim)
    pos_hat_arr = np.zeros(dim)
    z_arr = np.zeros(dim)
    if scheme == SCHEME_LM_C and xi_prev is None:
        xi_arr = philox_normals(seed, traj, step_offset - 1, TAG_STEP_C, dim)
    elif xi_prev is None:
        xi_arr = np.zeros(dim)
    else:
        xi_arr = np.asarray(xi_prev, dtype=np.float64).copy()

    cdef double[:] pos = pos_arr
    cdef double[:] f = f_arr
    cdef double[:] f_hat = f_hat_arr
    cdef double[:] pos_hat = pos_hat_arr
    cdef double[:] z = z_arr
    cdef double[:] xi = xi_arr
    cdef long long[:] rdf = None
    cdef bint have_rdf = rdf_counts is not None
    if have_rdf:
        rdf = rdf_counts

    cdef int status = 0
    cdef int64_t fail_step = -1
    cdef int64_t n_samples = 0
    cdef int64_t force_evals = 0

    cdef int64_t k, gstep
    cdef int b, c
    cdef double z1, xc
    cdef bint bad
    for k in range(n_steps):
        gstep = step_offset + k
        for b in range(n_blocks):
            if 2 * b + 1 < dim:
                z[2 * b] = _pair_c(k0, k1, traj_c, gstep, TAG_STEP_C, b, &z1, True)
                z[2 * b + 1] = z1
            else:
                z[2 * b] = _pair_c(k0, k1, traj_c, gstep, TAG_STEP_C, b, &z1, False)
        if _lj_forces_c(pos, n, L, f) != 0:
            status = 1
            fail_step = gstep
            break
        force_evals += 1
        if scheme == SCHEME_EM_C:
            for c in range(dim):
                pos[c] = pos[c] + h * f[c] + sig * z[c]
        elif scheme == SCHEME_LM_C:
            for c in range(dim):
                pos[c] = pos[c] + h * f[c] + half_sig * (xi[c] + z[c])
                xi[c] = z[c]
        else:
            for c in range(dim):
                pos_hat[c] = pos[c] + h * f[c] + sig * z[c]
            if _lj_forces_c(pos_hat, n, L, f_hat) != 0:
                status = 1
                fail_step = gstep
                break
            force_evals += 1
            for c in range(dim):
                pos[c] = pos[c] + half_h * (f_hat[c] + f[c]) + sig * z[c]
        bad = False
        for c in range(dim):
            xc = pos[c]
            if not isfinite(xc):
                bad = True
                break
            xc = xc - L * floor(xc * inv_l)
            if xc == L:
                xc = 0.0
            pos[c] = xc
        if bad:
            status = 2
            fail_step = gstep
            break
        if k >= equil_steps and have_rdf:
            _rdf_bin_c(pos, n, L, rdf, r_max)
            n_samples += 1

    return pos_arr, xi_arr, status, fail_step, n_samples, force_evals
