"""Central finite-difference verification of every analytic gradient.

The checks perturb one coordinate at a time with a fixed step and compare
(loss(p+h) - loss(p-h)) / 2h against the analytic gradient.  Stochastic
losses are made deterministic by reusing the same noise sample across
perturbations (common random numbers), so the comparison is exact up to
truncation and roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import SIGMOID, SOFTMAX, Batch, Model, NetSpec
from .variational import vi_loss_and_grads


@dataclass
class CheckReport:
    name: str
    n_coords: int
    max_rel_err: float
    worst_coord: int

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_rel_err < tol


def central_diff(loss_fn, params: np.ndarray, coords, h: float = 1e-5) -> np.ndarray:
    """Two-sided finite differences of loss_fn at the chosen coordinates.

    loss_fn must not keep references into `params`; it is called with the
    same buffer mutated one coordinate at a time.
    """
    out = np.empty(len(coords))
    for i, c in enumerate(coords):
        orig = params[c]
        params[c] = orig + h
        up = loss_fn()
        params[c] = orig - h
        down = loss_fn()
        params[c] = orig
        out[i] = (up - down) / (2.0 * h)
    return out


def relative_errors(analytic: np.ndarray, numeric: np.ndarray,
                    floor: float = 1e-6) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor).

    The floor exists because the finite-difference quotient carries roundoff
    of order eps * |loss| / h no matter how exact the analytic gradient is;
    coordinates whose gradient sits below that noise can only be compared in
    absolute terms.  Use fd_floor() to pick a floor matched to the loss
    scale and step size.
    """
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def fd_floor(loss_scale: float, h: float, tol: float = 1e-4) -> float:
    # ~100 eps of loss roundoff through the difference quotient, spread over tol
    noise = 100.0 * np.finfo(float).eps * max(1.0, abs(loss_scale)) / (2.0 * h)
    return max(1e-6, noise / tol)


def random_batch(spec: NetSpec, batch_size: int, t_len: int,
                 rng: np.random.Generator, mask_all: bool = False) -> Batch:
    inputs = rng.uniform(-1.0, 1.0, size=(batch_size, t_len, spec.input_size))
    mask = (rng.random((batch_size, t_len)) < 0.8).astype(np.float64)
    mask[:, 0] = 1.0  # keep at least one contributing step per sequence
    if mask_all:
        mask[:] = 0.0
    if spec.head == SOFTMAX:
        targets = rng.integers(0, spec.output_size, size=(batch_size, t_len))
    else:
        targets = rng.integers(0, 2, size=(batch_size, t_len, spec.output_size)).astype(float)
    return Batch(task_id=0, inputs=inputs, targets=targets, mask=mask, tau=t_len)


def check_lstm(spec: NetSpec, rng: np.random.Generator, n_coords: int = 200,
               batch_size: int = 3, t_len: int = 5, h: float = 1e-5) -> CheckReport:
    """Analytic backprop-through-time gradient vs central differences."""
    model = Model(spec)
    model.init_params(rng)
    model.theta += rng.uniform(-0.05, 0.05, size=model.theta.shape)
    batch = random_batch(spec, batch_size, t_len, rng)
    per_seq, cache = model.forward(batch)
    analytic = model.backward(batch, cache)
    coords = rng.choice(model.theta.size, size=min(n_coords, model.theta.size),
                        replace=False)

    def loss_fn():
        ps, _ = model.forward(batch)
        return float(ps.sum())

    numeric = central_diff(loss_fn, model.theta, coords, h)
    errs = relative_errors(analytic[coords], numeric, fd_floor(per_seq.sum(), h))
    worst = int(np.argmax(errs))
    return CheckReport(f"lstm/{spec.head}", len(coords), float(errs.max()),
                       int(coords[worst]))


def check_vi_blocks(spec: NetSpec, rng: np.random.Generator, n_coords: int = 100,
                    batch_size: int = 2, t_len: int = 4, h: float = 1e-5,
                    sample_count: float = 50.0):
    """All four variational gradient blocks under common random numbers."""
    from .variational import init_variational

    model = Model(spec)
    state = init_variational(model, rng, sample_count, prior="per_layer",
                             sigma_post_init=0.05, prior_sigma=0.2)
    state.mu_prior[:] = rng.uniform(-0.1, 0.1, size=state.mu_prior.shape)
    batch = random_batch(spec, batch_size, t_len, rng)
    eps = rng.standard_normal(state.n_params)
    scratch = Model(spec)
    step = vi_loss_and_grads(state, scratch, batch, eps=eps)

    def loss_fn():
        return vi_loss_and_grads(state, scratch, batch, eps=eps).loss

    n, g = state.n_params, state.n_groups
    blocks = {
        "vi/mu_post": np.arange(0, n),
        "vi/rho_post": np.arange(n, 2 * n),
        "vi/mu_prior": np.arange(2 * n, 2 * n + g),
        "vi/rho_prior": np.arange(2 * n + g, 2 * n + 2 * g),
    }
    reports = []
    floor = fd_floor(step.loss, h)
    for name, idx in blocks.items():
        take = min(n_coords, idx.size)
        coords = rng.choice(idx, size=take, replace=False)
        numeric = central_diff(loss_fn, state.phi, coords, h)
        errs = relative_errors(step.grad[coords], numeric, floor)
        worst = int(np.argmax(errs))
        reports.append(CheckReport(name, take, float(errs.max()), int(coords[worst])))
    return reports


def run_full_gradcheck(seed: int = 0, n_coords: int = 200):
    """The suite the `gradcheck` CLI prints: randomized specs, both heads."""
    rng = np.random.default_rng(seed)
    reports = []
    for head in (SOFTMAX, SIGMOID):
        for layers in ((rng.integers(4, 17),),
                       (rng.integers(4, 17), rng.integers(4, 17))):
            spec = NetSpec(int(rng.integers(2, 6)), tuple(int(h) for h in layers),
                           int(rng.integers(2, 6)), head)
            reports.append(check_lstm(spec, rng, n_coords))
    spec = NetSpec(3, (6,), 3, SOFTMAX)
    reports.extend(check_vi_blocks(spec, rng, n_coords))
    return reports
