# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled trial kernel. Same contract as ``_pykernel.run_block``."""
from libc.math cimport exp, sqrt, log, log1p, ceil, fabs, isfinite

import numpy as np

from ._pykernel import KernelError

cdef double MAGNITUDE_SLACK = 1e-9


def run_block(int algo, double[:, ::1] cum, double[::1] qsum,
              const double[:, ::1] X, const double[:, ::1] Xo, const double[::1] U,
              const unsigned char[:, :, :] adj, const double[::1] alpha,
              const double[:, :, ::1] theta, const double[:, ::1] sigma_inv,
              double eta, double gamma, bint check, long t0,
              long long[::1] out_action, double[:, ::1] out_pi, double[:, ::1] out_q,
              unsigned char[:, ::1] out_obs, double[:, ::1] out_table,
              double[:, ::1] out_oracle, double[:, ::1] out_rates):
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], K = cum.shape[0]
    cdef Py_ssize_t b, i, j, a
    cdef double logK = log(<double>K) if K > 1 else 0.0
    cdef double eta_t = eta, beta = 0.0, zmax, wsum, acc, c, u, coef, vx, lo
    cdef int err = 0
    cdef Py_ssize_t err_round = 0

    z_arr = np.empty(K)
    v_arr = np.empty(d)
    cdef double[::1] z = z_arr
    cdef double[::1] v = v_arr

    with nogil:
        for b in range(n):
            # scores and softmax
            if algo == 1:
                beta = sqrt(logK / (K + qsum[0]))
                eta_t = beta / sqrt(<double>d)
            zmax = -1e308
            for i in range(K):
                acc = 0.0
                for j in range(d):
                    acc = acc + cum[i, j] * X[b, j]
                z[i] = -eta_t * acc
                if not isfinite(z[i]):
                    err = 1
                if z[i] > zmax:
                    zmax = z[i]
            if err:
                err_round = b
                break
            wsum = 0.0
            for i in range(K):
                z[i] = exp(z[i] - zmax)
                wsum = wsum + z[i]
            for i in range(K):
                if algo == 0:
                    out_pi[b, i] = (1.0 - gamma) * (z[i] / wsum) + gamma / K
                else:
                    out_pi[b, i] = z[i] / wsum
            if algo == 0:
                out_rates[b, 0] = eta
                out_rates[b, 1] = gamma
            else:
                out_rates[b, 0] = eta_t
                out_rates[b, 1] = beta

            # inverse-CDF action draw, ties to the lower index
            u = U[b]
            c = 0.0
            a = -1
            for i in range(K):
                c = c + out_pi[b, i]
                if u < c:
                    a = i
                    break
            if a < 0:
                for i in range(K):
                    if out_pi[b, i] > 0:
                        a = i
            out_action[b] = a

            # observation probabilities and observed set
            for i in range(K):
                acc = out_pi[b, i]
                for j in range(K):
                    if adj[b, j, i]:
                        acc = acc + out_pi[b, j]
                out_q[b, i] = acc
                out_obs[b, i] = 1 if (i == a or adj[b, a, i]) else 0

            # losses at the decision context and at the oracle context
            for i in range(K):
                acc = 0.0
                lo = 0.0
                for j in range(d):
                    acc = acc + theta[b, i, j] * X[b, j]
                    lo = lo + theta[b, i, j] * Xo[b, j]
                out_table[b, i] = acc
                out_oracle[b, i] = lo
                if algo == 1 and out_obs[b, i] and (lo < 0 or acc < 0):
                    err = 2
            if err:
                err_round = b
                break

            # v = Sigma^-1 x~ and <x, v>
            vx = 0.0
            for i in range(d):
                acc = 0.0
                for j in range(d):
                    acc = acc + sigma_inv[i, j] * Xo[b, j]
                v[i] = acc
                vx = vx + acc * X[b, i]

            for i in range(K):
                if not out_obs[b, i]:
                    continue
                if algo == 0:
                    coef = out_oracle[b, i] / out_q[b, i]
                    if check and fabs(eta * coef * vx) > 1.0 + MAGNITUDE_SLACK:
                        err = 3
                else:
                    coef = out_oracle[b, i] / (out_q[b, i] + beta)
                for j in range(d):
                    cum[i, j] = cum[i, j] + coef * v[j]
            if err:
                err_round = b
                break
            if algo == 1:
                qsum[0] = qsum[0] + 2 * alpha[b] * log1p((ceil(K * K / beta) + K) / alpha[b]) + 2

    if err == 1:
        raise KernelError(f"round {t0 + err_round}: non-finite policy score")
    if err == 2:
        raise KernelError(f"round {t0 + err_round}: EXP3-LGC-IX needs nonnegative losses")
    if err == 3:
        raise KernelError(f"round {t0 + err_round}: |eta <x, theta_hat>| > 1")
