"""Hot numeric kernels with numba-compiled and pure-numpy variants.

The compiled path is the default. Set ``FLASHCROWD_NO_NUMBA=1`` (or run
without numba installed) to select the numpy fallback. Both variants are
exercised against each other in the test suite, and
``python -m flashcrowd.bench`` compares their throughput.
"""

from __future__ import annotations

import math
import os

import numpy as np

_ENV_FLAG = "FLASHCROWD_NO_NUMBA"

if os.environ.get(_ENV_FLAG, "") not in ("1", "true", "yes"):
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False
else:
    NUMBA_ENABLED = False


# ---------------------------------------------------------------------------
# Counter-based uniform stream (SplitMix64).
#
# Every uniform is a pure function of (key, counter), so sampling is
# reproducible across platforms and across the numba/numpy code paths.
# ---------------------------------------------------------------------------

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, stream: int) -> int:
    """Derive an independent stream key from a master seed and stream index."""
    return mix64((seed & _MASK64) ^ mix64((stream + 1) * _GAMMA))


def unit_block(key: int, start: int, count: int) -> np.ndarray:
    """Uniforms in [0, 1) for counters start..start+count-1 of a stream."""
    ctr = np.arange(1, count + 1, dtype=np.uint64) + np.uint64(start & _MASK64)
    z = np.uint64(key) + ctr * np.uint64(_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * (2.0**-53)


# ---------------------------------------------------------------------------
# Beta sampling (Johnk for both shapes <= 1, Cheng BB/BC otherwise).
#
# Written against a plain uniform buffer so the exact same source compiles
# under numba and runs as-is in pure python; the consumed-counter sequence is
# identical either way. A draw that would run past the buffer reports
# failure and is retried from the same counter with a larger buffer, so the
# stream position per accepted draw does not depend on buffer sizes.
# ---------------------------------------------------------------------------

_LOG4 = 1.3862943611198906


def _draw_beta_impl(a, b, u, pos):
    n = u.shape[0]
    if a <= 1.0 and b <= 1.0:
        while True:
            if pos + 2 > n:
                return False, 0.0, pos
            x = u[pos] ** (1.0 / a)
            y = u[pos + 1] ** (1.0 / b)
            pos += 2
            s = x + y
            if s <= 1.0 and s > 0.0:
                return True, x / s, pos
    elif a > 1.0 and b > 1.0:
        # Cheng's BB rejection algorithm.
        a0 = a if a <= b else b
        b0 = b if a <= b else a
        al = a0 + b0
        be = math.sqrt((al - 2.0) / (2.0 * a0 * b0 - al))
        ga = a0 + 1.0 / be
        while True:
            if pos + 2 > n:
                return False, 0.0, pos
            u1 = u[pos]
            u2 = u[pos + 1]
            pos += 2
            if u1 <= 0.0:
                continue
            v = be * math.log(u1 / (1.0 - u1))
            w = a0 * math.exp(v)
            if w > 1e300:
                w = 1e300
            z = u1 * u1 * u2
            r = ga * v - _LOG4
            s = a0 + r - w
            if z <= 0.0 or s + 2.609437912434100 >= 5.0 * z:
                pass
            else:
                t = math.log(z)
                if s < t and r + al * math.log(al / (b0 + w)) < t:
                    continue
            if a <= b:
                return True, w / (b0 + w), pos
            return True, b0 / (b0 + w), pos
    else:
        # Cheng's BC: one shape <= 1 < the other.
        a0 = a if a >= b else b
        b0 = b if a >= b else a
        al = a0 + b0
        be = 1.0 / b0
        de = 1.0 + a0 - b0
        k1 = de * (0.0138889 + 0.0416667 * b0) / (a0 * be - 0.777778)
        k2 = 0.25 + (0.5 + 0.25 / de) * b0
        while True:
            if pos + 2 > n:
                return False, 0.0, pos
            u1 = u[pos]
            u2 = u[pos + 1]
            pos += 2
            if u1 <= 0.0 or u2 <= 0.0:
                continue
            if u1 < 0.5:
                y = u1 * u2
                z = u1 * y
                if 0.25 * u2 + z - y >= k1:
                    continue
            else:
                z = u1 * u1 * u2
                if z <= 0.25:
                    v = be * math.log(u1 / (1.0 - u1))
                    w = a0 * math.exp(v)
                    if w > 1e300:
                        w = 1e300
                    if a >= b:
                        return True, w / (b0 + w), pos
                    return True, b0 / (b0 + w), pos
                if z >= k2:
                    continue
            v = be * math.log(u1 / (1.0 - u1))
            w = a0 * math.exp(v)
            if w > 1e300:
                w = 1e300
            if al * (math.log(al / (b0 + w)) + v) - _LOG4 >= math.log(z):
                if a >= b:
                    return True, w / (b0 + w), pos
                return True, b0 / (b0 + w), pos


def _fill_counts_impl(alphas, betas, u_max, u, out, start_bin):
    # Returns (first unfinished bin, uniforms consumed by finished bins).
    pos = 0
    nbins = alphas.shape[0]
    for i in range(start_bin, nbins):
        ok, v, newpos = _draw_beta(alphas[i], betas[i], u, pos)
        if not ok:
            return i, pos
        out[i] = int(np.rint(v * u_max))
        pos = newpos
    return nbins, pos


if NUMBA_ENABLED:
    _draw_beta = njit(cache=True)(_draw_beta_impl)
    _fill_counts = njit(cache=True)(_fill_counts_impl)
else:
    _draw_beta = _draw_beta_impl
    _fill_counts = _fill_counts_impl


def beta_counts(alphas, betas, u_max, key, counter):
    """Scaled/rounded beta draws for each (alpha, beta) pair in sequence.

    Returns (int64 counts array, counter after the last consumed uniform).
    """
    alphas = np.ascontiguousarray(alphas, dtype=np.float64)
    betas = np.ascontiguousarray(betas, dtype=np.float64)
    nbins = alphas.shape[0]
    out = np.zeros(nbins, dtype=np.int64)
    done = 0
    chunk = 512
    while done < nbins:
        u = unit_block(key, counter, chunk)
        new_done, used = _fill_counts(alphas, betas, int(u_max), u, out, done)
        counter += used
        if new_done == done:
            chunk *= 2
        else:
            chunk = 512
        done = new_done
    return out, counter


# ---------------------------------------------------------------------------
# Detector kernels: Pearson coefficients, Frechet-bound joint construction,
# entropies. The compiled variant uses explicit loops with Kahan-compensated
# sums; the fallback uses vectorized numpy plus math.fsum.
# ---------------------------------------------------------------------------


def _pearson_counts_loops(c1, c2):
    n = c1.shape[0]
    m1 = 0.0
    m2 = 0.0
    for i in range(n):
        m1 += c1[i]
        m2 += c2[i]
    m1 /= n
    m2 /= n
    cov = 0.0
    v1 = 0.0
    v2 = 0.0
    for i in range(n):
        d1 = c1[i] - m1
        d2 = c2[i] - m2
        cov += d1 * d2
        v1 += d1 * d1
        v2 += d2 * d2
    if v1 <= 0.0 or v2 <= 0.0:
        return 0.0
    return cov / (math.sqrt(v1) * math.sqrt(v2))


def _pearson_counts_numpy(c1, c2):
    m1 = c1.mean()
    m2 = c2.mean()
    d1 = c1 - m1
    d2 = c2 - m2
    v1 = float(np.dot(d1, d1))
    v2 = float(np.dot(d2, d2))
    if v1 <= 0.0 or v2 <= 0.0:
        return 0.0
    return float(np.dot(d1, d2)) / (math.sqrt(v1) * math.sqrt(v2))


def _rho_of_joint_loops(p, f, g, xv, yv):
    n = f.shape[0]
    ex = 0.0
    ex2 = 0.0
    ey = 0.0
    ey2 = 0.0
    for i in range(n):
        ex += xv[i] * f[i]
        ex2 += xv[i] * xv[i] * f[i]
        ey += yv[i] * g[i]
        ey2 += yv[i] * yv[i] * g[i]
    vx = ex2 - ex * ex
    vy = ey2 - ey * ey
    if vx <= 1e-300 or vy <= 1e-300:
        return 0.0
    exy = 0.0
    comp = 0.0
    for i in range(n):
        for j in range(n):
            term = xv[i] * yv[j] * p[i, j] - comp
            tot = exy + term
            comp = (tot - exy) - term
            exy = tot
    return (exy - ex * ey) / (math.sqrt(vx) * math.sqrt(vy))


def _rho_of_joint_numpy(p, f, g, xv, yv):
    ex = float(np.dot(xv, f))
    ex2 = float(np.dot(xv * xv, f))
    ey = float(np.dot(yv, g))
    ey2 = float(np.dot(yv * yv, g))
    vx = ex2 - ex * ex
    vy = ey2 - ey * ey
    if vx <= 1e-300 or vy <= 1e-300:
        return 0.0
    exy = math.fsum((np.outer(xv, yv) * p).ravel())
    return (exy - ex * ey) / (math.sqrt(vx) * math.sqrt(vy))


# Status codes for frechet_mix.
MIX_OK = 0
MIX_DEGENERATE = 1  # rho_bound == 0 while rho != 0; fell back to f*g
MIX_CLAMPED = 2  # |rho| exceeded |rho_bound|; theta clamped to [0, 1]


# Call target used inside _frechet_mix_loops; rebound to the compiled
# variant before frechet_mix itself is compiled.
_rho_joint_impl = _rho_of_joint_loops


def _frechet_mix_loops(f, g, rho, xv, yv):
    n = f.shape[0]
    F = np.empty(n)
    G = np.empty(n)
    accf = 0.0
    accg = 0.0
    for i in range(n):
        accf += f[i]
        accg += g[i]
        F[i] = accf
        G[i] = accg
    p = np.empty((n, n))
    if rho == 0.0:
        for i in range(n):
            for j in range(n):
                p[i, j] = f[i] * g[j]
        return p, 0.0, 0.0, MIX_OK
    pb = np.empty((n, n))
    if rho < 0.0:
        for i in range(n):
            for j in range(n):
                c11 = max(F[i] + G[j] - 1.0, 0.0)
                c01 = max(F[i - 1] + G[j] - 1.0, 0.0) if i > 0 else 0.0
                c10 = max(F[i] + G[j - 1] - 1.0, 0.0) if j > 0 else 0.0
                c00 = 0.0
                if i > 0 and j > 0:
                    c00 = max(F[i - 1] + G[j - 1] - 1.0, 0.0)
                v = c11 - c01 - c10 + c00
                pb[i, j] = v if v > 0.0 else 0.0
    else:
        for i in range(n):
            for j in range(n):
                c11 = min(F[i], G[j])
                c01 = min(F[i - 1], G[j]) if i > 0 else 0.0
                c10 = min(F[i], G[j - 1]) if j > 0 else 0.0
                c00 = 0.0
                if i > 0 and j > 0:
                    c00 = min(F[i - 1], G[j - 1])
                v = c11 - c01 - c10 + c00
                pb[i, j] = v if v > 0.0 else 0.0
    rho_b = _rho_joint_impl(pb, f, g, xv, yv)
    if rho_b == 0.0:
        for i in range(n):
            for j in range(n):
                p[i, j] = f[i] * g[j]
        return p, 0.0, 0.0, MIX_DEGENERATE
    theta = rho / rho_b
    status = MIX_OK
    if theta < 0.0:
        theta = 0.0
        status = MIX_CLAMPED
    elif theta > 1.0:
        theta = 1.0
        status = MIX_CLAMPED
    for i in range(n):
        for j in range(n):
            p[i, j] = theta * pb[i, j] + (1.0 - theta) * f[i] * g[j]
    return p, theta, rho_b, status


def _frechet_mix_numpy(f, g, rho, xv, yv):
    n = f.shape[0]
    if rho == 0.0:
        return np.outer(f, g), 0.0, 0.0, MIX_OK
    F = np.cumsum(f)
    G = np.cumsum(g)
    pad = np.zeros((n + 1, n + 1))
    if rho < 0.0:
        pad[1:, 1:] = np.maximum(F[:, None] + G[None, :] - 1.0, 0.0)
    else:
        pad[1:, 1:] = np.minimum(F[:, None], G[None, :])
    pb = pad[1:, 1:] - pad[:-1, 1:] - pad[1:, :-1] + pad[:-1, :-1]
    np.maximum(pb, 0.0, out=pb)
    rho_b = _rho_of_joint_numpy(pb, f, g, xv, yv)
    if rho_b == 0.0:
        return np.outer(f, g), 0.0, 0.0, MIX_DEGENERATE
    theta = rho / rho_b
    status = MIX_OK
    if theta < 0.0 or theta > 1.0:
        theta = min(max(theta, 0.0), 1.0)
        status = MIX_CLAMPED
    return theta * pb + (1.0 - theta) * np.outer(f, g), theta, rho_b, status


def _entropy_bits_loops(p):
    flat = p.ravel()
    acc = 0.0
    comp = 0.0
    for i in range(flat.shape[0]):
        v = flat[i]
        if v > 0.0:
            term = -v * math.log2(v) - comp
            tot = acc + term
            comp = (tot - acc) - term
            acc = tot
    return acc


def _entropy_bits_numpy(p):
    flat = np.asarray(p).ravel()
    nz = flat[flat > 0.0]
    if nz.size == 0:
        return 0.0
    return -math.fsum(nz * np.log2(nz))


if NUMBA_ENABLED:
    pearson_counts = njit(cache=True)(_pearson_counts_loops)
    rho_of_joint = njit(cache=True)(_rho_of_joint_loops)
    _rho_joint_impl = rho_of_joint
    frechet_mix = njit(cache=True)(_frechet_mix_loops)
    entropy_bits = njit(cache=True)(_entropy_bits_loops)
else:
    pearson_counts = _pearson_counts_numpy
    rho_of_joint = _rho_of_joint_numpy
    frechet_mix = _frechet_mix_numpy
    entropy_bits = _entropy_bits_numpy


def warmup():
    """Trigger JIT compilation of every kernel (no-op on the numpy path)."""
    f = np.array([0.5, 0.5])
    g = np.array([0.25, 0.75])
    xv = np.arange(2, dtype=np.float64)
    frechet_mix(f, g, -0.5, xv, xv)
    frechet_mix(f, g, 0.5, xv, xv)
    entropy_bits(np.outer(f, g))
    pearson_counts(np.array([1.0, 2.0]), np.array([2.0, 1.0]))
    rho_of_joint(np.outer(f, g), f, g, xv, xv)
    beta_counts(np.array([2.0]), np.array([5.0]), 10, stream_key(0, 0), 0)
