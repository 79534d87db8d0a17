"""Pure-Python trial kernel (fallback for ``_ckernel``).

Processes a block of rounds of one trial in place. Both kernels share this
signature; see ``_ckernel.pyx``.

    algo            0 = EXP3-LGC-U, 1 = EXP3-LGC-IX
    cum             (K, d) running sum of estimates, updated in place
    qsum            (1,) running sum of IX Q values, updated in place
    X, Xo           (n, d) decision contexts / oracle contexts
    U               (n,) uniforms for action sampling
    adj             (n, K, K) out-adjacency per round (may be broadcast)
    alpha           (n,) independence numbers fed to the IX Q values
    theta           (n, K, d) loss vectors
    sigma_inv       (d, d)
    eta, gamma      EXP3-LGC-U parameters (ignored by IX)
    check           assert |eta <x, theta_hat>| <= 1 (U only)
    t0              1-based index of the first round, for error messages
    out_*           per-round outputs: action, policy, q, observed mask,
                    loss table <x, theta_i>, oracle losses <x~, theta_i>,
                    rates (eta, gamma) for U or (eta_t, beta_t) for IX
"""
import math

import numpy as np

MAGNITUDE_SLACK = 1e-9


class KernelError(ValueError):
    pass


def run_block(algo, cum, qsum, X, Xo, U, adj, alpha, theta, sigma_inv, eta, gamma, check, t0,
              out_action, out_pi, out_q, out_obs, out_table, out_oracle, out_rates):
    n, d = X.shape
    K = cum.shape[0]
    logK = math.log(K) if K > 1 else 0.0
    for b in range(n):
        x = X[b]
        s = cum @ x
        if algo == 0:
            eta_t = eta
            z = -eta * s
        else:
            beta = math.sqrt(logK / (K + qsum[0]))
            eta_t = beta / math.sqrt(d)
            z = -eta_t * s
        if not np.all(np.isfinite(z)):
            raise KernelError(f"round {t0 + b}: non-finite policy score")
        w = np.exp(z - z.max())
        pi = w / w.sum()
        if algo == 0:
            pi = (1.0 - gamma) * pi + gamma / K
            out_rates[b, 0] = eta
            out_rates[b, 1] = gamma
        else:
            out_rates[b, 0] = eta_t
            out_rates[b, 1] = beta

        c = np.cumsum(pi)
        a = int(np.searchsorted(c, U[b], side="right"))
        if a >= K:
            a = int(np.flatnonzero(pi > 0)[-1])

        A = adj[b]
        q = pi + A.T @ pi
        obs = A[a] != 0
        obs[a] = True

        th = theta[b]
        table = th @ x
        xo = Xo[b]
        lo = th @ xo
        if algo == 1 and np.any(obs & ((lo < 0) | (table < 0))):
            raise KernelError(f"round {t0 + b}: EXP3-LGC-IX needs nonnegative losses")

        v = sigma_inv @ xo
        denom = q if algo == 0 else q + beta
        coef = np.where(obs, lo / denom, 0.0)
        if check and algo == 0:
            if np.any(np.abs(eta * coef * (v @ x)) > 1.0 + MAGNITUDE_SLACK):
                raise KernelError(f"round {t0 + b}: |eta <x, theta_hat>| > 1")
        cum += coef[:, None] * v[None, :]
        if algo == 1:
            qsum[0] += 2 * alpha[b] * math.log1p((math.ceil(K * K / beta) + K) / alpha[b]) + 2

        out_action[b] = a
        out_pi[b] = pi
        out_q[b] = q
        out_obs[b] = obs
        out_table[b] = table
        out_oracle[b] = lo
