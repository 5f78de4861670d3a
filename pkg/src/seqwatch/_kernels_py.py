"""Pure-Python / numpy fallback for the run-to-alarm kernels.

Same entry points and semantics as the compiled ``_kernels`` extension.
Noise is drawn from the generator in fixed-size blocks; because the
underlying double stream is consumed value by value, block size does not
affect the sequence, so results match the compiled kernels which draw one
value at a time from the same bit generator.

Return convention: the 1-based alarm step, or 0 if no alarm occurred
within the horizon.  ``run_mc1`` additionally returns the change-point
estimate in force at the alarm.
"""

import math

import numpy as np

from .charts import hard_stat, soft_stat

_BLOCK = 256


def _shock_rows(gen, m, n, samp_kind, sqrt_e, sqrt_a, g_samp):
    # stream layout per step: n idiosyncratic draws, then one factor draw
    if samp_kind == 0:
        return sqrt_e * gen.standard_normal((m, n))
    raw = gen.standard_normal((m, n + 1))
    return sqrt_e * raw[:, :n] + np.outer(sqrt_a * raw[:, n], g_samp)


def _blocks(gen, n, samp_kind, sqrt_e, sqrt_a, g_samp, mu, nu, horizon):
    """Yield (t0, rows) with the post-change mean already injected."""
    t = 0
    while t < horizon:
        m = min(_BLOCK, horizon - t)
        x = _shock_rows(gen, m, n, samp_kind, sqrt_e, sqrt_a, g_samp)
        lo = min(max(nu - t, 0), m)  # rows with global step index > nu
        if lo < m:
            x[lo:] += mu
        yield t, x
        t += m


def _qf(v, sig2, coef, g):
    gs = float(g @ v)
    return (float(v @ v) - coef * gs * gs) / sig2


def run_ewma(gen, beta, threshold, stat_mode, stat_param,
             samp_kind, sqrt_e, sqrt_a, g_samp, qf_sig2, qf_coef, g_qf,
             mu, nu, horizon):
    n = mu.shape[0]
    y = np.zeros(n)
    for t0, rows in _blocks(gen, n, samp_kind, sqrt_e, sqrt_a, g_samp, mu, nu, horizon):
        for i in range(rows.shape[0]):
            y *= 1.0 - beta
            y += beta * rows[i]
            if stat_mode == 0:
                stat = _qf(y, qf_sig2, qf_coef, g_qf)
            elif stat_mode == 1:
                stat = hard_stat(y, stat_param)
            else:
                stat = soft_stat(y, stat_param)
            if stat > threshold:
                return t0 + i + 1
    return 0


def run_ma(gen, w, threshold, stat_mode, stat_param,
           samp_kind, sqrt_e, sqrt_a, g_samp, qf_sig2, qf_coef, g_qf,
           mu, nu, horizon):
    n = mu.shape[0]
    ring = np.zeros((w, n))
    winsum = np.zeros(n)
    pos = 0
    cnt = 0
    for t0, rows in _blocks(gen, n, samp_kind, sqrt_e, sqrt_a, g_samp, mu, nu, horizon):
        for i in range(rows.shape[0]):
            x = rows[i]
            if cnt == w:
                winsum += x - ring[pos]
            else:
                winsum += x
                cnt += 1
            ring[pos] = x
            pos = (pos + 1) % w
            if cnt < w:
                continue
            if stat_mode == 1:
                stat = hard_stat(winsum / w, stat_param)
            else:
                stat = _qf(winsum, qf_sig2, qf_coef, g_qf) / float(w * w)
            if stat > threshold:
                return t0 + i + 1
    return 0


def run_scan(gen, cap, k_ref, threshold, squared,
             samp_kind, sqrt_e, sqrt_a, g_samp, qf_sig2, qf_coef, g_qf,
             mu, nu, horizon):
    n = mu.shape[0]
    ring = np.zeros((cap, n))
    pos = 0
    cnt = 0
    for t0, rows in _blocks(gen, n, samp_kind, sqrt_e, sqrt_a, g_samp, mu, nu, horizon):
        for i in range(rows.shape[0]):
            ring[pos] = rows[i]
            pos = (pos + 1) % cap
            cnt = min(cnt + 1, cap)
            idx = (pos - 1 - np.arange(cnt)) % cap   # newest first
            csums = np.cumsum(ring[idx], axis=0)     # csums[w-1] = sum of last w
            gs = csums @ g_qf
            q = (np.einsum("ij,ij->i", csums, csums) - qf_coef * gs * gs) / qf_sig2
            np.maximum(q, 0.0, out=q)
            warr = np.arange(1, cnt + 1, dtype=np.float64)
            if squared:
                stat = float(np.max(q / warr))
            else:
                stat = float(np.max(np.sqrt(q) - 0.5 * k_ref * warr))
            if stat > threshold:
                return t0 + i + 1
    return 0


def run_mc1(gen, k_ref, threshold,
            samp_kind, sqrt_e, sqrt_a, g_samp, qf_sig2, qf_coef, g_qf,
            mu, nu, horizon):
    n = mu.shape[0]
    s = np.zeros(n)
    nu_hat = 0
    for t0, rows in _blocks(gen, n, samp_kind, sqrt_e, sqrt_a, g_samp, mu, nu, horizon):
        for i in range(rows.shape[0]):
            t = t0 + i + 1
            s += rows[i]
            stat = math.sqrt(max(_qf(s, qf_sig2, qf_coef, g_qf), 0.0)) \
                - 0.5 * k_ref * (t - nu_hat)
            if stat > threshold:
                return t, nu_hat
            if stat <= 0.0:
                nu_hat = t
                s[...] = 0.0
    return 0, nu_hat


def run_sr(gen, delta, threshold, sum_mode,
           samp_kind, sqrt_e, sqrt_a, g_samp,
           mu, nu, horizon):
    n = mu.shape[0]
    if sum_mode:
        r = np.zeros(n)
        for t0, rows in _blocks(gen, n, samp_kind, sqrt_e, sqrt_a, g_samp, mu, nu, horizon):
            for i in range(rows.shape[0]):
                r = (1.0 + r) * np.exp(delta * (rows[i] - 0.5 * delta))
                if float(r.sum()) > threshold:
                    return t0 + i + 1
        return 0
    r = 0.0
    for t0, rows in _blocks(gen, n, samp_kind, sqrt_e, sqrt_a, g_samp, mu, nu, horizon):
        for i in range(rows.shape[0]):
            g = delta * float(np.sum(rows[i] - 0.5 * delta))
            r = (1.0 + r) * math.exp(g)
            if r > threshold:
                return t0 + i + 1
    return 0


def run_adaptive(gen, beta, threshold, mode,
                 samp_kind, sqrt_e, sqrt_a, g_samp,
                 mu, nu, horizon):
    n = mu.shape[0]
    muh = np.zeros(n)
    wstat = 0.0
    r = 0.0
    rvec = np.zeros(n)
    for t0, rows in _blocks(gen, n, samp_kind, sqrt_e, sqrt_a, g_samp, mu, nu, horizon):
        for i in range(rows.shape[0]):
            x = rows[i]
            if mode == 0:
                g = float(muh @ (x - 0.5 * muh))
                wstat = max(0.0, wstat + g)
                stat = wstat
            elif mode == 1:
                g = float(muh @ (x - 0.5 * muh))
                r = (1.0 + r) * math.exp(g)
                stat = r
            else:
                rvec = (1.0 + rvec) * np.exp(muh * (x - 0.5 * muh))
                stat = float(rvec.sum())
            muh *= 1.0 - beta
            muh += beta * x
            if stat > threshold:
                return t0 + i + 1
    return 0
