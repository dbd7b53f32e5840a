"""Learning-progress gains and the raw reward they induce.

Every gain is a scalar measured around exactly one optimizer step on one
training batch x.  Loss-driven gains compare losses under the parameters
before and after the step; complexity-driven gains track the model
description cost (the posterior/prior KL, or an L2 surrogate).  The raw
reward handed to the scaler is the gain divided by the batch's processing
time, so the bandit optimises a *rate* of progress.

Gains are tied to a training regime and requesting one under the wrong
regime is an error, never a silent zero: a complexity gain is meaningless
without the matching complexity term in the training loss.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class TrainingMode(str, enum.Enum):
    ML = "ml"    # plain maximum likelihood
    VI = "vi"    # variational inference over the weights
    L2 = "l2"    # maximum likelihood plus (alpha/2) * ||theta||^2


class GainKind(str, enum.Enum):
    PG = "pg"
    GPG = "gpg"
    SPG = "spg"
    TPG = "tpg"
    MPG = "mpg"
    VCG = "vcg"
    GVCG = "gvcg"
    L2G = "l2g"
    GL2G = "gl2g"
    # Baseline policies used by the harness; no gain is computed for them.
    UNIFORM = "uniform"
    TARGET_ONLY = "target_only"


LOSS_DRIVEN = {GainKind.PG, GainKind.GPG, GainKind.SPG, GainKind.TPG, GainKind.MPG}
BASELINES = {GainKind.UNIFORM, GainKind.TARGET_ONLY}

_MODE_FOR_KIND = {
    GainKind.VCG: TrainingMode.VI,
    GainKind.GVCG: TrainingMode.VI,
    GainKind.L2G: TrainingMode.L2,
    GainKind.GL2G: TrainingMode.L2,
}

# Where the extra evaluation batch x' is drawn from, when one is needed.
EXTRA_SOURCE = {GainKind.SPG: "same", GainKind.TPG: "target", GainKind.MPG: "uniform"}


class GainModeError(ValueError):
    """Gain kind requested under an incompatible training mode."""


def required_mode(kind: GainKind):
    """The training mode a gain demands, or None for baselines (any mode)."""
    if kind in BASELINES:
        return None
    return _MODE_FOR_KIND.get(kind, TrainingMode.ML)


def check_mode(kind: GainKind, mode: TrainingMode) -> None:
    need = required_mode(kind)
    if need is not None and mode != need:
        raise GainModeError(f"{kind.value} requires {need.value} training, got {mode.value}")


@dataclass
class GainContext:
    """Everything a gain might read, captured around one optimizer step.

    The harness fills only the fields the configured gain needs; each gain
    validates that its inputs are present and were taken under its mode.
    """

    mode: TrainingMode
    loss_before: float | None = None       # L(x, theta) pre-step
    loss_after: float | None = None        # L(x, theta') post-step
    grad: np.ndarray | None = None         # d L(x, theta) / d theta (unclipped)
    extra_source: str | None = None        # where x' came from: same/target/uniform
    extra_loss_before: float | None = None  # L(x', theta)
    extra_loss_after: float | None = None   # L(x', theta')
    theta_before: np.ndarray | None = None
    theta_after: np.ndarray | None = None
    kl_before: float | None = None
    kl_after: float | None = None
    kl_grad_mu: np.ndarray | None = None    # raw KL partials, posterior blocks
    kl_grad_rho: np.ndarray | None = None
    data_grad_mu: np.ndarray | None = None  # data-term-only posterior gradient
    data_grad_rho: np.ndarray | None = None


def _need(ctx: GainContext, *fields):
    missing = [f for f in fields if getattr(ctx, f) is None]
    if missing:
        raise ValueError(f"gain context missing {missing}")


def pg(ctx: GainContext) -> float:
    """Loss drop on the trained-on batch itself."""
    check_mode(GainKind.PG, ctx.mode)
    _need(ctx, "loss_before", "loss_after")
    return ctx.loss_before - ctx.loss_after


def gpg(ctx: GainContext) -> float:
    """Squared L2 norm of the training gradient."""
    check_mode(GainKind.GPG, ctx.mode)
    _need(ctx, "grad")
    g = ctx.grad
    return float(g @ g)


def _extra_gain(kind: GainKind, ctx: GainContext) -> float:
    check_mode(kind, ctx.mode)
    _need(ctx, "extra_loss_before", "extra_loss_after", "extra_source")
    want = EXTRA_SOURCE[kind]
    if ctx.extra_source != want:
        raise ValueError(
            f"{kind.value} needs an evaluation batch from source {want!r}, "
            f"got {ctx.extra_source!r}")
    return ctx.extra_loss_before - ctx.extra_loss_after


def spg(ctx: GainContext) -> float:
    """Loss drop on a fresh batch from the same task (unbiased progress)."""
    return _extra_gain(GainKind.SPG, ctx)


def tpg(ctx: GainContext) -> float:
    """Loss drop on a fresh batch from the target task."""
    return _extra_gain(GainKind.TPG, ctx)


def mpg(ctx: GainContext) -> float:
    """Loss drop on a fresh batch from a uniformly random task."""
    return _extra_gain(GainKind.MPG, ctx)


def vcg(ctx: GainContext) -> float:
    """Change in posterior/prior KL over the step (exact closed forms)."""
    check_mode(GainKind.VCG, ctx.mode)
    _need(ctx, "kl_before", "kl_after")
    return ctx.kl_after - ctx.kl_before


def gvcg(ctx: GainContext) -> float:
    """First-order KL change: directional derivative of the KL along the
    descent direction of the data term (the sampled-weights gradient of the
    step actually taken).  The prior block of the data gradient is zero, so
    only posterior blocks enter the product."""
    check_mode(GainKind.GVCG, ctx.mode)
    _need(ctx, "kl_grad_mu", "kl_grad_rho", "data_grad_mu", "data_grad_rho")
    return -float(ctx.kl_grad_mu @ ctx.data_grad_mu
                  + ctx.kl_grad_rho @ ctx.data_grad_rho)


def l2g(ctx: GainContext) -> float:
    """Growth of the squared parameter norm over the step."""
    check_mode(GainKind.L2G, ctx.mode)
    _need(ctx, "theta_before", "theta_after")
    tb, ta = ctx.theta_before, ctx.theta_after
    return float(ta @ ta) - float(tb @ tb)


def gl2g(ctx: GainContext) -> float:
    """First-order norm growth: directional derivative of ||theta||^2 along
    the data-loss descent direction (constant factors dropped, the reward is
    rescaled downstream anyway)."""
    check_mode(GainKind.GL2G, ctx.mode)
    _need(ctx, "theta_before", "grad")
    return -float(ctx.theta_before @ ctx.grad)


_DISPATCH = {
    GainKind.PG: pg, GainKind.GPG: gpg, GainKind.SPG: spg, GainKind.TPG: tpg,
    GainKind.MPG: mpg, GainKind.VCG: vcg, GainKind.GVCG: gvcg,
    GainKind.L2G: l2g, GainKind.GL2G: gl2g,
}


def compute_gain(kind: GainKind, ctx: GainContext) -> float:
    if kind in BASELINES:
        raise ValueError(f"{kind.value} is a baseline policy, not a gain")
    return _DISPATCH[kind](ctx)


def raw_reward(nu: float, tau: int) -> float:
    """Progress per unit processing time: r_hat = nu / tau(x)."""
    if tau < 1:
        raise ValueError(f"tau must be >= 1, got {tau}")
    return nu / tau
