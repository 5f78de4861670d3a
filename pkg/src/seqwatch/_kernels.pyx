# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled run-to-alarm kernels for the Monte-Carlo engine.

Each function simulates one full replication of a chart: it draws noise
directly from the caller's numpy bit generator (n idiosyncratic normals
per step, then one shared-factor normal for factor models -- the same
stream layout as ``covariance.sample_shock_block``), injects the
post-change mean after step ``nu``, updates the chart recursion and stops
at the first threshold crossing.

Returns the 1-based alarm step or 0 when censored at the horizon.  The
caller owns the generator; nothing else may draw from it concurrently.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt, fabs
from cpython.pycapsule cimport PyCapsule_GetPointer
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal


cdef bitgen_t *_bitgen(object gen) except NULL:
    capsule = gen.bit_generator.capsule
    return <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")


cdef inline void _draw(bitgen_t *rng, double *x, Py_ssize_t n,
                       int samp_kind, double sqrt_e, double sqrt_a,
                       const double *g_samp, const double *mu, bint shifted) noexcept nogil:
    cdef Py_ssize_t j
    cdef double a
    for j in range(n):
        x[j] = sqrt_e * random_standard_normal(rng)
    if samp_kind == 1:
        a = sqrt_a * random_standard_normal(rng)
        for j in range(n):
            x[j] += g_samp[j] * a
    if shifted:
        for j in range(n):
            x[j] += mu[j]


cdef inline double _qf(const double *v, Py_ssize_t n, double sig2, double coef,
                       const double *g) noexcept nogil:
    cdef Py_ssize_t j
    cdef double vv = 0.0, gs = 0.0
    for j in range(n):
        vv += v[j] * v[j]
        gs += g[j] * v[j]
    return (vv - coef * gs * gs) / sig2


def run_ewma(object gen, double beta, double threshold, int stat_mode,
             double stat_param, int samp_kind, double sqrt_e, double sqrt_a,
             const double[::1] g_samp, double qf_sig2, double qf_coef,
             const double[::1] g_qf, const double[::1] mu, long nu, long horizon):
    cdef bitgen_t *rng = _bitgen(gen)
    cdef Py_ssize_t n = mu.shape[0]
    cdef double[::1] y = np.zeros(n)
    cdef double[::1] x = np.empty(n)
    cdef long t = 0, res = 0
    cdef Py_ssize_t j
    cdef double stat, w, yj
    with nogil:
        while t < horizon:
            t += 1
            _draw(rng, &x[0], n, samp_kind, sqrt_e, sqrt_a, &g_samp[0], &mu[0], t > nu)
            for j in range(n):
                y[j] = (1.0 - beta) * y[j] + beta * x[j]
            if stat_mode == 0:
                stat = _qf(&y[0], n, qf_sig2, qf_coef, &g_qf[0])
            elif stat_mode == 1:
                stat = 0.0
                for j in range(n):
                    if fabs(y[j]) > stat_param:
                        stat += y[j] * y[j]
            else:
                stat = 0.0
                for j in range(n):
                    yj = y[j] * y[j]
                    w = 1.0 / (1.0 + stat_param * exp(-0.5 * yj))
                    stat += w * yj
            if stat > threshold:
                res = t
                break
    return res


def run_ma(object gen, long w, double threshold, int stat_mode,
           double stat_param, int samp_kind, double sqrt_e, double sqrt_a,
           const double[::1] g_samp, double qf_sig2, double qf_coef,
           const double[::1] g_qf, const double[::1] mu, long nu, long horizon):
    cdef bitgen_t *rng = _bitgen(gen)
    cdef Py_ssize_t n = mu.shape[0]
    cdef double[:, ::1] ring = np.zeros((w, n))
    cdef double[::1] winsum = np.zeros(n)
    cdef double[::1] x = np.empty(n)
    cdef long t = 0, pos = 0, cnt = 0, res = 0
    cdef Py_ssize_t j
    cdef double stat, xb
    with nogil:
        while t < horizon:
            t += 1
            _draw(rng, &x[0], n, samp_kind, sqrt_e, sqrt_a, &g_samp[0], &mu[0], t > nu)
            if cnt == w:
                for j in range(n):
                    winsum[j] += x[j] - ring[pos, j]
            else:
                for j in range(n):
                    winsum[j] += x[j]
                cnt += 1
            for j in range(n):
                ring[pos, j] = x[j]
            pos += 1
            if pos == w:
                pos = 0
            if cnt < w:
                continue
            if stat_mode == 1:
                stat = 0.0
                for j in range(n):
                    xb = winsum[j] / w
                    if fabs(xb) > stat_param:
                        stat += xb * xb
            else:
                stat = _qf(&winsum[0], n, qf_sig2, qf_coef, &g_qf[0]) / (<double> w * w)
            if stat > threshold:
                res = t
                break
    return res


def run_scan(object gen, long cap, double k_ref, double threshold,
             int squared, int samp_kind, double sqrt_e, double sqrt_a,
             const double[::1] g_samp, double qf_sig2, double qf_coef,
             const double[::1] g_qf, const double[::1] mu, long nu, long horizon):
    cdef bitgen_t *rng = _bitgen(gen)
    cdef Py_ssize_t n = mu.shape[0]
    cdef double[:, ::1] ring = np.zeros((cap, n))
    cdef double[::1] s = np.empty(n)
    cdef double[::1] x = np.empty(n)
    cdef long t = 0, pos = 0, cnt = 0, wlen, row, res = 0
    cdef Py_ssize_t j
    cdef double stat, cand, q
    with nogil:
        while t < horizon:
            t += 1
            _draw(rng, &x[0], n, samp_kind, sqrt_e, sqrt_a, &g_samp[0], &mu[0], t > nu)
            for j in range(n):
                ring[pos, j] = x[j]
            pos += 1
            if pos == cap:
                pos = 0
            if cnt < cap:
                cnt += 1
            stat = -1e308
            for j in range(n):
                s[j] = 0.0
            row = pos  # one past the newest entry
            for wlen in range(1, cnt + 1):
                row -= 1
                if row < 0:
                    row = cap - 1
                for j in range(n):
                    s[j] += ring[row, j]
                q = _qf(&s[0], n, qf_sig2, qf_coef, &g_qf[0])
                if q < 0.0:
                    q = 0.0
                if squared:
                    cand = q / wlen
                else:
                    cand = sqrt(q) - 0.5 * k_ref * wlen
                if cand > stat:
                    stat = cand
            if stat > threshold:
                res = t
                break
    return res


def run_mc1(object gen, double k_ref, double threshold, int samp_kind,
            double sqrt_e, double sqrt_a, const double[::1] g_samp,
            double qf_sig2, double qf_coef, const double[::1] g_qf,
            const double[::1] mu, long nu, long horizon):
    cdef bitgen_t *rng = _bitgen(gen)
    cdef Py_ssize_t n = mu.shape[0]
    cdef double[::1] s = np.zeros(n)
    cdef double[::1] x = np.empty(n)
    cdef long t = 0, nu_hat = 0, res = 0
    cdef Py_ssize_t j
    cdef double stat, q
    with nogil:
        while t < horizon:
            t += 1
            _draw(rng, &x[0], n, samp_kind, sqrt_e, sqrt_a, &g_samp[0], &mu[0], t > nu)
            for j in range(n):
                s[j] += x[j]
            q = _qf(&s[0], n, qf_sig2, qf_coef, &g_qf[0])
            if q < 0.0:
                q = 0.0
            stat = sqrt(q) - 0.5 * k_ref * (t - nu_hat)
            if stat > threshold:
                res = t
                break
            if stat <= 0.0:
                nu_hat = t
                for j in range(n):
                    s[j] = 0.0
    return res, nu_hat


def run_sr(object gen, double delta, double threshold, int sum_mode,
           int samp_kind, double sqrt_e, double sqrt_a, const double[::1] g_samp,
           const double[::1] mu, long nu, long horizon):
    cdef bitgen_t *rng = _bitgen(gen)
    cdef Py_ssize_t n = mu.shape[0]
    cdef double[::1] rvec = np.zeros(n)
    cdef double[::1] x = np.empty(n)
    cdef long t = 0, res = 0
    cdef Py_ssize_t j
    cdef double r = 0.0, g, stat
    with nogil:
        while t < horizon:
            t += 1
            _draw(rng, &x[0], n, samp_kind, sqrt_e, sqrt_a, &g_samp[0], &mu[0], t > nu)
            if sum_mode:
                stat = 0.0
                for j in range(n):
                    rvec[j] = (1.0 + rvec[j]) * exp(delta * (x[j] - 0.5 * delta))
                    stat += rvec[j]
            else:
                g = 0.0
                for j in range(n):
                    g += x[j] - 0.5 * delta
                r = (1.0 + r) * exp(delta * g)
                stat = r
            if stat > threshold:
                res = t
                break
    return res


def run_adaptive(object gen, double beta, double threshold, int mode,
                 int samp_kind, double sqrt_e, double sqrt_a,
                 const double[::1] g_samp, const double[::1] mu, long nu, long horizon):
    cdef bitgen_t *rng = _bitgen(gen)
    cdef Py_ssize_t n = mu.shape[0]
    cdef double[::1] muh = np.zeros(n)
    cdef double[::1] rvec = np.zeros(n)
    cdef double[::1] x = np.empty(n)
    cdef long t = 0, res = 0
    cdef Py_ssize_t j
    cdef double wstat = 0.0, r = 0.0, g, stat
    with nogil:
        while t < horizon:
            t += 1
            _draw(rng, &x[0], n, samp_kind, sqrt_e, sqrt_a, &g_samp[0], &mu[0], t > nu)
            if mode == 2:
                stat = 0.0
                for j in range(n):
                    rvec[j] = (1.0 + rvec[j]) * exp(muh[j] * (x[j] - 0.5 * muh[j]))
                    stat += rvec[j]
            else:
                g = 0.0
                for j in range(n):
                    g += muh[j] * (x[j] - 0.5 * muh[j])
                if mode == 0:
                    wstat += g
                    if wstat < 0.0:
                        wstat = 0.0
                    stat = wstat
                else:
                    r = (1.0 + r) * exp(g)
                    stat = r
            for j in range(n):
                muh[j] = (1.0 - beta) * muh[j] + beta * x[j]
            if stat > threshold:
                res = t
                break
    return res
