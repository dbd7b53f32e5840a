"""Exp3 and Exp3.S adversarial bandits over the tasks of a curriculum.

The bandit's mixed policy is the stochastic syllabus: arm i is played with
probability (1 - epsilon) * softmax(w)_i + epsilon / N.  Exp3 accumulates
importance-weighted rewards additively; Exp3.S additionally shares weight
across arms each round (fixed-share mixing with alpha_t = 1/t), which lets
the policy track a best arm that changes over time.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EXP3 = "exp3"
EXP3S = "exp3s"


@dataclass(frozen=True)
class BanditConfig:
    n_arms: int
    eta: float = 1e-3
    beta: float = 0.0
    epsilon: float = 0.05
    variant: str = EXP3S

    def __post_init__(self):
        if self.n_arms < 1:
            raise ValueError(f"n_arms must be >= 1, got {self.n_arms}")
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {self.epsilon}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.variant not in (EXP3, EXP3S):
            raise ValueError(f"unknown variant {self.variant!r}")


def softmax(w: np.ndarray) -> np.ndarray:
    e = np.exp(w - np.max(w))
    return e / e.sum()


class Bandit:
    """Single-writer bandit state: one owner mutates it, round by round."""

    def __init__(self, config: BanditConfig):
        self.config = config
        self.weights = np.zeros(config.n_arms)
        self.t = 1
        self.last_policy = self.policy()

    def policy(self) -> np.ndarray:
        cfg = self.config
        pi = (1.0 - cfg.epsilon) * softmax(self.weights) + cfg.epsilon / cfg.n_arms
        self.last_policy = pi
        return pi

    def sample_arm(self, rng: np.random.Generator) -> int:
        """Draw an arm from the current mixed policy (one uniform variate)."""
        pi = self.policy()
        u = rng.random()
        return min(int(np.searchsorted(np.cumsum(pi), u, side="right")),
                   self.config.n_arms - 1)

    def update(self, arm: int, reward: float) -> None:
        """Consume the reward of the round just played.

        `reward` must already be rescaled to [-1, 1]; anything outside that
        range means the scaler is broken, so it is rejected loudly.  The
        importance weight uses the mixed policy the arm was sampled from.
        """
        cfg = self.config
        if not 0 <= arm < cfg.n_arms:
            raise ValueError(f"arm {arm} out of range [0, {cfg.n_arms})")
        if not np.isfinite(reward) or not -1.0 <= reward <= 1.0:
            raise ValueError(f"reward {reward} outside [-1, 1]")

        if cfg.beta != 0.0:
            boosted = self.weights + cfg.eta * (cfg.beta / self.last_policy)
        else:
            boosted = self.weights.copy()
        boosted[arm] += cfg.eta * reward / self.last_policy[arm]

        if cfg.variant == EXP3:
            self.weights = boosted
        else:
            self.weights = self._fixed_share(boosted)
        self.t += 1

    def _fixed_share(self, v: np.ndarray) -> np.ndarray:
        """One fixed-share mixing step in log space, then renormalise.

        new_i = log[(1 - a) e^{v_i} + a/(N-1) sum_{j != i} e^{v_j}],  a = 1/t.
        With one arm there is nobody to share with, so the boosted weight
        passes through unchanged (and stays finite).  The result is shifted
        so that logsumexp(weights) = 0; the policy is invariant to the shift
        and the weights stay bounded over arbitrarily long reward histories.
        """
        n = v.size
        if n == 1:
            return v - v  # log of the single softmax probability: exactly 0
        alpha = 1.0 / self.t
        # Exact log-sum-exp over j != i for every i in O(N).  Shifting by the
        # global max keeps every summand in [0, 1]; the subtracted e[i] is at
        # most 1 while the remainder keeps the argmax term of size 1, so no
        # catastrophic cancellation.  The argmax row uses its own shift.
        i1 = int(np.argmax(v))
        e1 = np.exp(v - v[i1])
        others = e1.sum() - e1  # >= 1 everywhere except at i1 itself
        others[i1] = 1.0        # placeholder, replaced with an exact value below
        lse_others = v[i1] + np.log(others)
        v_rest = v.copy()
        v_rest[i1] = -np.inf
        m2 = v_rest.max()
        lse_others[i1] = m2 + np.log(np.exp(v_rest - m2).sum())
        share = np.log(alpha / (n - 1)) + lse_others
        if alpha >= 1.0:
            new = share
        else:
            new = np.logaddexp(np.log1p(-alpha) + v, share)
        m = new.max()
        return new - (m + np.log(np.exp(new - m).sum()))

    def snapshot(self) -> dict:
        return {"weights": self.weights.copy(), "t": self.t,
                "last_policy": self.last_policy.copy()}

    def restore(self, snap: dict) -> None:
        self.weights = np.asarray(snap["weights"], dtype=float).copy()
        self.t = int(snap["t"])
        self.last_policy = np.asarray(snap["last_policy"], dtype=float).copy()
