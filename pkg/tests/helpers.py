"""Shared independent oracles for the test suite.

These re-derive expected values by straightforward, readable means (extended
precision, enumeration, closed forms) and deliberately avoid the code paths
they are used to check.
"""

import mpmath as mp
import numpy as np

mp.mp.dps = 50


def exp3s_brute_force(weights, policy, arm, reward, eta, beta, t):
    """Direct extended-precision evaluation of the fixed-share update.

    new_i = log[(1 - a) e^{w_i + eta r_i} + a/(N-1) sum_{j != i} e^{w_j + eta r_j}],
    a = 1/t, r_i = (reward * [i == arm] + beta) / policy_i, then shifted so
    logsumexp(new) = 0 (the implementation's normalisation).
    """
    n = len(weights)
    v = []
    for i in range(n):
        r_imp = (mp.mpf(reward) * (1 if i == arm else 0) + mp.mpf(beta)) / mp.mpf(policy[i])
        v.append(mp.mpf(float(weights[i])) + mp.mpf(eta) * r_imp)
    if n == 1:
        return np.array([0.0])
    alpha = mp.mpf(1) / t
    new = []
    for i in range(n):
        share = sum(mp.e ** v[j] for j in range(n) if j != i) * alpha / (n - 1)
        new.append(mp.log((1 - alpha) * mp.e ** v[i] + share))
    lse = mp.log(sum(mp.e ** w for w in new))
    return np.array([float(w - lse) for w in new])


def softmax_direct(w):
    e = np.exp(np.asarray(w, dtype=float))
    return e / e.sum()


def quadratic_toy_trial(theta, x_mean, sigma, alpha, rng):
    """One SGD trial on L(x, th) = 0.5 ||th - x||^2 with x ~ N(x_mean, sigma^2 I).

    Returns the pieces the gain functions consume: losses on the trained-on
    sample x under theta and theta', and on an independent x' from the same
    distribution.
    """
    x = x_mean + sigma * rng.standard_normal(x_mean.size)
    x_prime = x_mean + sigma * rng.standard_normal(x_mean.size)
    grad = theta - x
    theta_after = theta - alpha * grad

    def loss(th, sample):
        d = th - sample
        return 0.5 * float(d @ d)

    return {
        "loss_before": loss(theta, x),
        "loss_after": loss(theta_after, x),
        "extra_before": loss(theta, x_prime),
        "extra_after": loss(theta_after, x_prime),
        "grad": grad,
    }


def gaussian_kl_quadrature(mu_p, sigma_p, mu_q, sigma_q):
    """KL between two 1-d Gaussians by numerical quadrature of p ln(p/q)."""
    from scipy.integrate import quad

    def integrand(x):
        lp = -0.5 * ((x - mu_p) / sigma_p) ** 2 - np.log(sigma_p * np.sqrt(2 * np.pi))
        lq = -0.5 * ((x - mu_q) / sigma_q) ** 2 - np.log(sigma_q * np.sqrt(2 * np.pi))
        return np.exp(lp) * (lp - lq)

    lo = mu_p - 15 * sigma_p
    hi = mu_p + 15 * sigma_p
    val, _ = quad(integrand, lo, hi, epsabs=1e-12, epsrel=1e-11, limit=200)
    return val
