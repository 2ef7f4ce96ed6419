"""Pure-Python trajectory kernels.

This module is the reference implementation of the hot loops.  The compiled
extension `bdbench._kernels` transliterates these functions statement for
statement: every floating-point operation appears in the same order, integer
work is exact in both, and all transcendentals go through libm (`math` here,
`<math.h>` there), so the two backends produce bit-identical trajectories.
Keep them in lockstep when editing.

Scalar loops make this backend orders of magnitude slower than the compiled
one; it exists as a correctness oracle and an import-time fallback, not for
running the desk-scale experiments.
"""

import math

import numpy as np

from .noise import MASK32, PHILOX_M0, PHILOX_M1, PHILOX_W0, PHILOX_W1, TAG_INIT, TAG_STEP

BACKEND = "python"

SCHEME_EM = 0
SCHEME_LM = 1
SCHEME_HEUN = 2

POT_QUADRATIC = 0
POT_COSINE = 1

TWO_PI = 2.0 * math.pi
U53 = 2.0 ** -53

# Attempts per logical trajectory before giving up on the rejection policy.
MAX_RESTARTS = 10000


def backend_name() -> str:
    return BACKEND


def _pair(k0, k1, traj, step, tag, block):
    """Box-Muller pair of one Philox block; the canonical deviate definition."""
    s_enc = step + 1
    c0 = block | (tag << 28)
    c1 = s_enc & MASK32
    c2 = ((s_enc >> 32) & 0xFF) | (((traj >> 32) & 0xFFFFFF) << 8)
    c3 = traj & MASK32
    for _ in range(10):
        p0 = PHILOX_M0 * c0
        p1 = PHILOX_M1 * c2
        hi0, lo0 = p0 >> 32, p0 & MASK32
        hi1, lo1 = p1 >> 32, p1 & MASK32
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = (k0 + PHILOX_W0) & MASK32
        k1 = (k1 + PHILOX_W1) & MASK32
    u1 = (((c0 << 32 | c1) >> 11) + 1) * U53
    u2 = (((c2 << 32 | c3) >> 11) + 1) * U53
    r = math.sqrt(-2.0 * math.log(u1))
    return r * math.cos(TWO_PI * u2), r * math.sin(TWO_PI * u2)


def philox_normals(seed, traj, step, tag, n):
    """Standard normals for components 0..n-1 at one (trajectory, step) address."""
    k0 = seed & MASK32
    k1 = (seed >> 32) & MASK32
    out = np.empty(n)
    for b in range((n + 1) // 2):
        z0, z1 = _pair(k0, k1, traj, step, tag, b)
        out[2 * b] = z0
        if 2 * b + 1 < n:
            out[2 * b + 1] = z1
    return out


def _force_1d(pot, alpha, x):
    if pot == POT_QUADRATIC:
        return -alpha * x
    return math.sin(x)


def run_chain_1d(
    scheme,
    pot,
    alpha,
    period,
    h,
    sigma,
    n_steps,
    equil_steps,
    step_offset,
    seed,
    traj,
    x0,
    xi_prev,
    blowup,
    hist_counts,
    hist_lower,
    hist_upper,
):
    """One 1-D trajectory; every post-equilibration state feeds the observers.

    period = 0.0 means an unbounded domain (blow-up detection active);
    otherwise positions are wrapped into [0, period) after each step.
    xi_prev is the non-Markovian scheme's cached increment; pass None to have
    it drawn at the sentinel step address (step_offset - 1).

    Returns (x, xi_prev, n_obs, out_of_range, sum_x, sum_x2, sum_x4,
    blown_step, force_evals); blown_step is -1 when the trajectory completed.
    """
    k0 = seed & MASK32
    k1 = (seed >> 32) & MASK32
    sig = sigma * math.sqrt(h)
    half_h = 0.5 * h
    half_sig = 0.5 * sig
    n_bins = 0
    inv_w = 0.0
    if hist_counts is not None:
        n_bins = hist_counts.shape[0]
        inv_w = n_bins / (hist_upper - hist_lower)

    x = x0
    if scheme == SCHEME_LM and xi_prev is None:
        xi_prev = _pair(k0, k1, traj, step_offset - 1, TAG_STEP, 0)[0]
    if xi_prev is None:
        xi_prev = 0.0

    n_obs = 0
    out_of_range = 0
    sum_x = 0.0
    sum_x2 = 0.0
    sum_x4 = 0.0
    blown_step = -1
    force_evals = 0

    for k in range(n_steps):
        gstep = step_offset + k
        z = _pair(k0, k1, traj, gstep, TAG_STEP, 0)[0]
        if scheme == SCHEME_EM:
            ax = _force_1d(pot, alpha, x)
            force_evals += 1
            x = x + h * ax + sig * z
        elif scheme == SCHEME_LM:
            ax = _force_1d(pot, alpha, x)
            force_evals += 1
            x = x + h * ax + half_sig * (xi_prev + z)
            xi_prev = z
        else:
            ax = _force_1d(pot, alpha, x)
            xh = x + h * ax + sig * z
            axh = _force_1d(pot, alpha, xh)
            force_evals += 2
            x = x + half_h * (axh + ax) + sig * z
        if period != 0.0:
            x = x - period * math.floor(x / period)
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
                idx = int((x - hist_lower) * inv_w)
                if 0 <= idx < n_bins and x >= hist_lower:
                    hist_counts[idx] += 1
                else:
                    out_of_range += 1

    return (x, xi_prev, n_obs, out_of_range, sum_x, sum_x2, sum_x4, blown_step, force_evals)


def run_ensemble_final_1d(scheme, pot, alpha, h, sigma, n_steps, seed, traj_start, n_traj, x0, blowup):
    """Final-state moment sums over an ensemble of 1-D trajectories.

    Exploded trajectories are rejected and rerun under a fresh trajectory
    index (base + attempt * 2**40), so results stay a pure function of the
    seed regardless of how many rejections occur.

    Returns (sum_x, sum_x2, n_done, n_rejected, force_evals).
    """
    sum_x = 0.0
    sum_x2 = 0.0
    n_rejected = 0
    force_evals = 0
    for i in range(n_traj):
        base = traj_start + i
        for attempt in range(MAX_RESTARTS):
            res = run_chain_1d(
                scheme, pot, alpha, 0.0, h, sigma, n_steps, n_steps, 0,
                seed, base + (attempt << 40), x0, None, blowup, None, 0.0, 0.0,
            )
            force_evals += res[8]
            if res[7] < 0:
                break
            n_rejected += 1
        else:
            raise RuntimeError("trajectory restart limit exceeded")
        x = res[0]
        sum_x += x
        sum_x2 += x * x
    return sum_x, sum_x2, n_traj, n_rejected, force_evals


def run_ensemble_snapshots_1d(
    scheme, h, sigma, seed, traj_start, n_traj, snap_steps, counts, lower, upper, init_mean, init_std
):
    """Cosine-potential ensemble binned into one histogram row per snapshot step.

    Initial positions are drawn from Normal(init_mean, init_std^2) by
    rejection into [0, 2*pi); snap_steps must be sorted and may start at 0
    (the initial ensemble itself).  counts has shape (len(snap_steps), n_bins).

    Returns (n_rejected, force_evals); explosions cannot occur on the circle.
    """
    k0 = seed & MASK32
    k1 = (seed >> 32) & MASK32
    sig = sigma * math.sqrt(h)
    half_h = 0.5 * h
    half_sig = 0.5 * sig
    n_snaps = snap_steps.shape[0]
    n_bins = counts.shape[1]
    inv_w = n_bins / (upper - lower)
    n_steps = int(snap_steps[n_snaps - 1])
    force_evals = 0

    for i in range(n_traj):
        traj = traj_start + i
        x = 0.0
        for attempt in range(MAX_RESTARTS):
            z = _pair(k0, k1, traj, attempt, TAG_INIT, 0)[0]
            x = init_mean + init_std * z
            if 0.0 <= x < TWO_PI:
                break
        else:
            raise RuntimeError("initial-condition rejection limit exceeded")
        si = 0
        if snap_steps[0] == 0:
            idx = int((x - lower) * inv_w)
            if 0 <= idx < n_bins and x >= lower:
                counts[0, idx] += 1
            si = 1
        xi_prev = 0.0
        if scheme == SCHEME_LM:
            xi_prev = _pair(k0, k1, traj, -1, TAG_STEP, 0)[0]
        for k in range(n_steps):
            z = _pair(k0, k1, traj, k, TAG_STEP, 0)[0]
            if scheme == SCHEME_EM:
                ax = math.sin(x)
                force_evals += 1
                x = x + h * ax + sig * z
            elif scheme == SCHEME_LM:
                ax = math.sin(x)
                force_evals += 1
                x = x + h * ax + half_sig * (xi_prev + z)
                xi_prev = z
            else:
                ax = math.sin(x)
                xh = x + h * ax + sig * z
                axh = math.sin(xh)
                force_evals += 2
                x = x + half_h * (axh + ax) + sig * z
            x = x - TWO_PI * math.floor(x / TWO_PI)
            if x == TWO_PI:
                x = 0.0
            if si < n_snaps and k + 1 == snap_steps[si]:
                idx = int((x - lower) * inv_w)
                if 0 <= idx < n_bins and x >= lower:
                    counts[si, idx] += 1
                si += 1
    return 0, force_evals


# ---------------------------------------------------------------------------
# Lennard-Jones box


def lj_forces(pos, n, box_length, f_out):
    """Minimum-image pair forces into f_out; returns 1 on a singular pair."""
    L = box_length
    inv_l = 1.0 / L
    sing_r2 = 1e-16
    for c in range(3 * n):
        f_out[c] = 0.0
    for i in range(n - 1):
        for j in range(i + 1, n):
            dx = pos[3 * i] - pos[3 * j]
            dy = pos[3 * i + 1] - pos[3 * j + 1]
            dz = pos[3 * i + 2] - pos[3 * j + 2]
            dx = dx - L * math.floor(dx * inv_l + 0.5)
            dy = dy - L * math.floor(dy * inv_l + 0.5)
            dz = dz - L * math.floor(dz * inv_l + 0.5)
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


def lj_energy(pos, n, box_length):
    """Total pair energy; raises no error, returns inf on a singular pair."""
    L = box_length
    inv_l = 1.0 / L
    u = 0.0
    for i in range(n - 1):
        for j in range(i + 1, n):
            dx = pos[3 * i] - pos[3 * j]
            dy = pos[3 * i + 1] - pos[3 * j + 1]
            dz = pos[3 * i + 2] - pos[3 * j + 2]
            dx = dx - L * math.floor(dx * inv_l + 0.5)
            dy = dy - L * math.floor(dy * inv_l + 0.5)
            dz = dz - L * math.floor(dz * inv_l + 0.5)
            r2 = dx * dx + dy * dy + dz * dz
            if r2 == 0.0:
                return math.inf
            inv6 = 1.0 / (r2 * r2 * r2)
            u += inv6 * inv6 - inv6
    return u


def rdf_bin_pairs(pos, n, box_length, counts, r_max):
    """Bin every pair's minimum-image distance below r_max; one call per sample."""
    L = box_length
    inv_l = 1.0 / L
    n_bins = counts.shape[0]
    inv_w = n_bins / r_max
    for i in range(n - 1):
        for j in range(i + 1, n):
            dx = pos[3 * i] - pos[3 * j]
            dy = pos[3 * i + 1] - pos[3 * j + 1]
            dz = pos[3 * i + 2] - pos[3 * j + 2]
            dx = dx - L * math.floor(dx * inv_l + 0.5)
            dy = dy - L * math.floor(dy * inv_l + 0.5)
            dz = dz - L * math.floor(dz * inv_l + 0.5)
            r = math.sqrt(dx * dx + dy * dy + dz * dz)
            if r < r_max:
                idx = int(r * inv_w)
                if idx < n_bins:
                    counts[idx] += 1


def run_lj_chain(
    scheme,
    n,
    box_length,
    h,
    sigma,
    n_steps,
    equil_steps,
    step_offset,
    seed,
    traj,
    pos0,
    xi_prev,
    rdf_counts,
    r_max,
):
    """One Lennard-Jones box trajectory with per-step RDF sampling.

    Returns (pos, xi_prev, status, fail_step, n_samples, force_evals) with
    status 0 = completed, 1 = singular pair, 2 = non-finite position.  The
    caller owns the rejection/restart policy.
    """
    k0 = seed & MASK32
    k1 = (seed >> 32) & MASK32
    L = box_length
    inv_l = 1.0 / L
    dim = 3 * n
    n_blocks = (dim + 1) // 2
    sig = sigma * math.sqrt(h)
    half_h = 0.5 * h
    half_sig = 0.5 * sig

    pos = pos0.copy()
    f = np.zeros(dim)
    f_hat = np.zeros(dim)
    pos_hat = np.zeros(dim)
    z = np.zeros(dim)
    if scheme == SCHEME_LM and xi_prev is None:
        xi_prev = philox_normals(seed, traj, step_offset - 1, TAG_STEP, dim)
    if xi_prev is None:
        xi_prev = np.zeros(dim)
    else:
        xi_prev = xi_prev.copy()

    status = 0
    fail_step = -1
    n_samples = 0
    force_evals = 0

    for k in range(n_steps):
        gstep = step_offset + k
        for b in range(n_blocks):
            z0, z1 = _pair(k0, k1, traj, gstep, TAG_STEP, b)
            z[2 * b] = z0
            if 2 * b + 1 < dim:
                z[2 * b + 1] = z1
        if lj_forces(pos, n, L, f) != 0:
            status = 1
            fail_step = gstep
            break
        force_evals += 1
        if scheme == SCHEME_EM:
            for c in range(dim):
                pos[c] = pos[c] + h * f[c] + sig * z[c]
        elif scheme == SCHEME_LM:
            for c in range(dim):
                pos[c] = pos[c] + h * f[c] + half_sig * (xi_prev[c] + z[c])
                xi_prev[c] = z[c]
        else:
            for c in range(dim):
                pos_hat[c] = pos[c] + h * f[c] + sig * z[c]
            if lj_forces(pos_hat, n, L, f_hat) != 0:
                status = 1
                fail_step = gstep
                break
            force_evals += 1
            for c in range(dim):
                pos[c] = pos[c] + half_h * (f_hat[c] + f[c]) + sig * z[c]
        bad = False
        for c in range(dim):
            xc = pos[c]
            if not math.isfinite(xc):
                bad = True
                break
            xc = xc - L * math.floor(xc * inv_l)
            if xc == L:
                xc = 0.0
            pos[c] = xc
        if bad:
            status = 2
            fail_step = gstep
            break
        if k >= equil_steps and rdf_counts is not None:
            rdf_bin_pairs(pos, n, L, rdf_counts, r_max)
            n_samples += 1

    return pos, xi_prev, status, fail_step, n_samples, force_evals
