"""Diagonal-Gaussian variational posterior and adaptive prior over all weights.

The posterior has a mean and a pre-softplus scale per network parameter; the
prior shares one (mean, scale) pair across a group of parameters (a single
group for the whole network by default, or one per layer).  Scales go
through softplus so they stay positive under unconstrained optimisation.

All four parameter blocks live in one flat vector, so the same RMSProp
optimiser that trains a plain network trains (posterior, prior) jointly:

    phi = [ mu_post (n) | rho_post (n) | mu_prior (G) | rho_prior (G) ]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Batch, Model


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_inv(y):
    # inverse of log(1 + e^x); y must be positive
    return np.log(np.expm1(y))


def _logistic(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class VariationalState:
    """Views into one flat vector holding posterior and prior parameters."""

    def __init__(self, phi: np.ndarray, n_params: int, groups: np.ndarray,
                 sample_count: float):
        groups = np.asarray(groups, dtype=np.intp)
        n_groups = int(groups.max()) + 1 if groups.size else 1
        if phi.shape != (2 * n_params + 2 * n_groups,):
            raise ValueError("phi length does not match n_params/groups")
        if groups.shape != (n_params,):
            raise ValueError("groups must assign every parameter")
        if sample_count <= 0:
            raise ValueError("sample_count must be positive")
        self.phi = np.asarray(phi, dtype=np.float64)
        self.n_params = n_params
        self.n_groups = n_groups
        self.groups = groups
        self.sample_count = float(sample_count)

    @property
    def mu_post(self):
        return self.phi[:self.n_params]

    @property
    def rho_post(self):
        return self.phi[self.n_params:2 * self.n_params]

    @property
    def mu_prior(self):
        return self.phi[2 * self.n_params:2 * self.n_params + self.n_groups]

    @property
    def rho_prior(self):
        return self.phi[2 * self.n_params + self.n_groups:]

    def sigma_post(self):
        return softplus(self.rho_post)

    def sigma_prior(self):
        return softplus(self.rho_prior)

    def copy(self) -> "VariationalState":
        return VariationalState(self.phi.copy(), self.n_params,
                                self.groups.copy(), self.sample_count)

    def kl(self) -> float:
        """Closed-form KL(posterior || prior), summed over all parameters."""
        sp = self.sigma_post()
        spr = self.sigma_prior()[self.groups]
        d = self.mu_post - self.mu_prior[self.groups]
        per = (d * d + sp * sp - spr * spr) / (2.0 * spr * spr) + np.log(spr / sp)
        return float(per.sum())

    def kl_grads(self):
        """Analytic partials of kl() w.r.t. all four blocks (softplus chain included)."""
        sp = self.sigma_post()
        spr_g = self.sigma_prior()
        spr = spr_g[self.groups]
        d = self.mu_post - self.mu_prior[self.groups]
        inv_var_pr = 1.0 / (spr * spr)

        d_mu_post = d * inv_var_pr
        d_rho_post = (sp * inv_var_pr - 1.0 / sp) * _logistic(self.rho_post)

        d_mu_prior = np.bincount(self.groups, weights=-d * inv_var_pr,
                                 minlength=self.n_groups)
        a = d * d + sp * sp
        d_sigma_prior = np.bincount(self.groups,
                                    weights=-a / (spr ** 3) + 1.0 / spr,
                                    minlength=self.n_groups)
        d_rho_prior = d_sigma_prior * _logistic(self.rho_prior)
        return d_mu_post, d_rho_post, d_mu_prior, d_rho_prior

    def sample_weights(self, rng: np.random.Generator | None = None,
                       eps: np.ndarray | None = None):
        """Reparameterised draw: theta = mu + softplus(rho) * eps, eps ~ N(0, I)."""
        if eps is None:
            eps = rng.standard_normal(self.n_params)
        theta = self.mu_post + self.sigma_post() * eps
        return theta, eps

    def snapshot(self) -> dict:
        return {"phi": self.phi.copy(), "n_params": self.n_params,
                "groups": self.groups.copy(), "sample_count": self.sample_count}

    @classmethod
    def from_snapshot(cls, snap: dict) -> "VariationalState":
        return cls(np.asarray(snap["phi"], dtype=float).copy(), int(snap["n_params"]),
                   np.asarray(snap["groups"]), float(snap["sample_count"]))


def layer_groups(model: Model) -> np.ndarray:
    """Group index per parameter: one group per LSTM layer plus one for the head."""
    groups = np.empty(model.theta.size, dtype=np.intp)
    off = 0
    for li, (wx, wh, b) in enumerate(model.layers):
        size = wx.size + wh.size + b.size
        groups[off:off + size] = li
        off += size
    groups[off:] = len(model.layers)
    return groups


def init_variational(model: Model, rng: np.random.Generator, sample_count: float,
                     prior: str = "scalar", sigma_post_init: float = 1e-3,
                     prior_mu: float = 0.0, prior_sigma: float = 0.1) -> VariationalState:
    """Posterior means from the network init scheme, small initial posterior scale."""
    model.init_params(rng)
    n = model.theta.size
    if prior == "scalar":
        groups = np.zeros(n, dtype=np.intp)
    elif prior == "per_layer":
        groups = layer_groups(model)
    else:
        raise ValueError(f"unknown prior granularity {prior!r}")
    n_groups = int(groups.max()) + 1
    phi = np.empty(2 * n + 2 * n_groups)
    state = VariationalState(phi, n, groups, sample_count)
    state.mu_post[:] = model.theta
    state.rho_post[:] = softplus_inv(sigma_post_init)
    state.mu_prior[:] = prior_mu
    state.rho_prior[:] = softplus_inv(prior_sigma)
    return state


@dataclass
class ViStep:
    """One evaluation of the per-sample variational loss and its gradients."""

    loss: float
    data_loss: float
    kl: float
    grad: np.ndarray            # d loss / d phi, full flat layout
    data_grad_mu: np.ndarray    # d data_loss / d mu_post
    data_grad_rho: np.ndarray   # d data_loss / d rho_post
    theta: np.ndarray
    eps: np.ndarray


def vi_loss_and_grads(state: VariationalState, model: Model, batch: Batch,
                      rng: np.random.Generator | None = None,
                      eps: np.ndarray | None = None) -> ViStep:
    """Single-sample estimate of kl/S + E[data loss], with exact gradients.

    The data expectation uses one reparameterised weight sample; the KL term
    is always the closed form.  `model` is scratch space: its parameters are
    overwritten with the sampled weights.
    """
    theta, eps = state.sample_weights(rng, eps)
    model.set_params(theta)
    per_seq, cache = model.forward(batch)
    data_loss = float(per_seq.sum())
    grad_theta = model.backward(batch, cache)

    kl_val = state.kl()
    kg_mu, kg_rho, kg_mu_pr, kg_rho_pr = state.kl_grads()
    inv_s = 1.0 / state.sample_count

    data_grad_mu = grad_theta
    data_grad_rho = grad_theta * eps * _logistic(state.rho_post)

    grad = np.concatenate([
        data_grad_mu + inv_s * kg_mu,
        data_grad_rho + inv_s * kg_rho,
        inv_s * kg_mu_pr,
        inv_s * kg_rho_pr,
    ])
    return ViStep(loss=inv_s * kl_val + data_loss, data_loss=data_loss, kl=kl_val,
                  grad=grad, data_grad_mu=data_grad_mu, data_grad_rho=data_grad_rho,
                  theta=theta, eps=eps)
