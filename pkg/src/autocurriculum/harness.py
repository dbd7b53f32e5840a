"""The training loop: bandit -> task -> batch -> step -> gain -> reward -> bandit.

Each round runs, in this fixed order: compute the policy, sample a task,
draw a training batch, take one optimizer step on it, measure the learning
progress nu, divide by the batch's processing time, insert the raw reward
into the scaler, rescale it, and update the bandit.  Baseline policies
(uniform / target-only) skip the whole reward pipeline.

A run is a single-threaded deterministic loop seeded once; all randomness
comes from named child streams of the run seed, so identical configs give
byte-identical logs.  Parallelism belongs across runs, not inside one.

Outputs under the run directory:

    config.json     the exact configuration used
    train_log.csv   one row per round:
                    round,cum_input_steps,task_sampled,nu,raw_reward,
                    scaled_reward,policy_entropy,pi_1..pi_N,loss_on_x
    eval_log.csv    one row per evaluation point:
                    round,cum_input_steps,policy_entropy,complexity,
                    l_mt,l_tt,l_mt_per_output,l_tt_per_output,
                    loss_1..loss_N,po_1..po_N,pi_1..pi_N
    checkpoint.npz  resumable snapshot, written every eval and on abort
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .bandit import Bandit, BanditConfig
from .config import REPEAT_COPY, RunConfig, save_config
from .nn import Model, NonFiniteError, RmsProp, clip_global_norm
from .scaler import RewardScaler, ScalerConfig
from .signals import (BASELINES, EXTRA_SOURCE, GainContext, GainKind,
                      TrainingMode, compute_gain, raw_reward)
from .tasks import Curriculum, NGramCurriculum, RepeatCopyCurriculum
from .variational import VariationalState, init_variational, vi_loss_and_grads

CHECKPOINT_VERSION = 1
STREAM_NAMES = ("init", "arms", "data", "reward", "eval", "scaler", "vi")


class NumericalAbort(RuntimeError):
    """Training hit non-finite numbers; a diagnostic checkpoint was written."""


@dataclass
class EvalReport:
    """Monte-Carlo estimates of the per-task expected losses on fresh batches."""

    round: int
    cum_input_steps: int
    task_losses: np.ndarray        # mean per-sequence total loss, one per task
    per_output_losses: np.ndarray  # the same, divided by predictions per sequence
    policy: np.ndarray
    policy_entropy: float
    complexity: float | None       # posterior/prior KL in VI mode

    @property
    def l_mt(self) -> float:
        return float(self.task_losses.mean())

    @property
    def l_tt(self) -> float:
        return float(self.task_losses[-1])

    @property
    def l_mt_per_output(self) -> float:
        return float(self.per_output_losses.mean())

    @property
    def l_tt_per_output(self) -> float:
        return float(self.per_output_losses[-1])


@dataclass
class RunResult:
    out_dir: str
    rounds: int
    cum_input_steps: int
    stopped_early: bool
    final_eval: EvalReport


def build_curriculum(cfg: RunConfig) -> Curriculum:
    if cfg.task == REPEAT_COPY:
        return RepeatCopyCurriculum(cfg.repeat_copy, cfg.batch_size)
    return NGramCurriculum(cfg.ngram, cfg.batch_size)


def policy_entropy(pi: np.ndarray) -> float:
    p = pi[pi > 0]
    return float(-(p * np.log(p)).sum())


def evaluate(predictor, curriculum: Curriculum, eval_batches: int,
             rng: np.random.Generator, policy: np.ndarray | None = None,
             scratch: Model | None = None, rnd: int = 0,
             cum_input_steps: int = 0) -> EvalReport:
    """Estimate every task's expected loss from fresh evaluation batches.

    `predictor` is a Model, or a VariationalState evaluated at a single
    posterior sample drawn here (no predictive averaging).
    """
    if isinstance(predictor, VariationalState):
        theta, _ = predictor.sample_weights(rng)
        scratch.set_params(theta)
        model = scratch
        complexity = predictor.kl()
    else:
        model = predictor
        complexity = None
    n = curriculum.n_tasks
    losses = np.zeros(n)
    per_out = np.zeros(n)
    for k in range(n):
        total, total_po, n_seq = 0.0, 0.0, 0
        for _ in range(eval_batches):
            batch = curriculum.draw_eval(k, rng)
            per_seq, _ = model.forward(batch)
            total += float(per_seq.sum())
            total_po += float(batch.n_unmasked_outputs(model.spec))
            n_seq += batch.size
        losses[k] = total / n_seq
        per_out[k] = total / total_po if total_po else 0.0
    if policy is None:
        policy = np.full(n, 1.0 / n)
    return EvalReport(round=rnd, cum_input_steps=cum_input_steps,
                      task_losses=losses, per_output_losses=per_out,
                      policy=policy.copy(), policy_entropy=policy_entropy(policy),
                      complexity=complexity)


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))  # shortest round-trip decimal, stable across runs
    return str(x)


class RunState:
    """Everything the loop owns, bundled for checkpointing."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.curriculum = build_curriculum(cfg)
        n = self.curriculum.n_tasks
        ss = np.random.SeedSequence(cfg.seed)
        children = ss.spawn(len(STREAM_NAMES))
        self.rngs = {name: np.random.default_rng(child)
                     for name, child in zip(STREAM_NAMES, children)}
        spec = self.curriculum.net_spec(cfg.hidden_sizes)
        self.model = Model(spec)
        self.mode = cfg.training_mode
        self.gain = cfg.gain_kind
        if self.mode == TrainingMode.VI:
            sample_count = cfg.vi.sample_count or n * 1e4
            self.vstate = init_variational(
                self.model, self.rngs["init"], sample_count, prior=cfg.vi.prior,
                sigma_post_init=cfg.vi.sigma_post_init, prior_mu=cfg.vi.prior_mu,
                prior_sigma=cfg.vi.prior_sigma)
            self.params = self.vstate.phi
        else:
            self.model.init_params(self.rngs["init"])
            self.vstate = None
            self.params = self.model.theta
        self.opt = RmsProp(cfg.opt, self.params.size)
        self.bandit = Bandit(BanditConfig(
            n_arms=n, eta=cfg.bandit.eta, beta=cfg.bandit.beta,
            epsilon=cfg.bandit.epsilon, variant=cfg.bandit.variant))
        self.scaler = RewardScaler(
            ScalerConfig(cfg.scaler.capacity, cfg.scaler.q_lo_pct, cfg.scaler.q_hi_pct),
            self.rngs["scaler"])
        self.round = 0
        self.cum_input_steps = 0

    def predictor(self):
        return self.vstate if self.vstate is not None else self.model

    def save_checkpoint(self, path: str) -> None:
        arrays = {
            "version": np.array([CHECKPOINT_VERSION]),
            "round": np.array([self.round]),
            "cum_input_steps": np.array([self.cum_input_steps]),
            "params": self.params,
            "opt_ms": self.opt.ms, "opt_mom": self.opt.mom,
            "bandit_weights": self.bandit.weights,
            "bandit_t": np.array([self.bandit.t]),
            "bandit_last_policy": self.bandit.last_policy,
            "scaler_reservoir": np.asarray(self.scaler.reservoir, dtype=np.float64),
            "scaler_seen": np.array([self.scaler.seen_count]),
        }
        if self.vstate is not None:
            arrays["vi_groups"] = self.vstate.groups
            arrays["vi_sample_count"] = np.array([self.vstate.sample_count])
        rng_states = {name: rng.bit_generator.state for name, rng in self.rngs.items()}
        rng_states["scaler_rng"] = self.scaler.rng.bit_generator.state
        arrays["rng_json"] = np.frombuffer(
            json.dumps(rng_states).encode("utf-8"), dtype=np.uint8)
        tmp = path + ".tmp"
        with open(tmp, "wb") as f:
            np.savez(f, **arrays)
        os.replace(tmp, path)


def _one_hot_policy(n: int, k: int) -> np.ndarray:
    pi = np.zeros(n)
    pi[k] = 1.0
    return pi


def run(cfg: RunConfig) -> RunResult:
    """Execute the full loop; returns after the budget, early stop, or abort."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    save_config(cfg, os.path.join(cfg.out_dir, "config.json"))
    st = RunState(cfg)
    curriculum, model = st.curriculum, st.model
    n = curriculum.n_tasks
    gain, mode = st.gain, st.mode
    is_baseline = gain in BASELINES
    extra_src = EXTRA_SOURCE.get(gain)
    scratch = Model(model.spec) if mode == TrainingMode.VI else None
    ckpt_path = os.path.join(cfg.out_dir, "checkpoint.npz")

    train_f = open(os.path.join(cfg.out_dir, "train_log.csv"), "w", buffering=1 << 16)
    eval_f = open(os.path.join(cfg.out_dir, "eval_log.csv"), "w", buffering=1 << 16)
    pi_cols = ",".join(f"pi_{i + 1}" for i in range(n))
    train_f.write("round,cum_input_steps,task_sampled,nu,raw_reward,scaled_reward,"
                  f"policy_entropy,{pi_cols},loss_on_x\n")
    eval_f.write("round,cum_input_steps,policy_entropy,complexity,l_mt,l_tt,"
                 "l_mt_per_output,l_tt_per_output,"
                 + ",".join(f"loss_{i + 1}" for i in range(n)) + ","
                 + ",".join(f"po_{i + 1}" for i in range(n)) + f",{pi_cols}\n")

    def write_eval(report: EvalReport) -> None:
        row = [report.round, report.cum_input_steps, report.policy_entropy,
               report.complexity if report.complexity is not None else 0.0,
               report.l_mt, report.l_tt, report.l_mt_per_output,
               report.l_tt_per_output]
        row += list(report.task_losses) + list(report.per_output_losses)
        row += list(report.policy)
        eval_f.write(",".join(_fmt(v) for v in row) + "\n")

    def do_eval() -> EvalReport:
        report = evaluate(st.predictor(), curriculum, cfg.eval_batches,
                          st.rngs["eval"], policy=last_pi, scratch=scratch,
                          rnd=st.round, cum_input_steps=st.cum_input_steps)
        write_eval(report)
        st.save_checkpoint(ckpt_path)
        return report

    last_pi = np.full(n, 1.0 / n)
    last_report = None
    stopped_early = False
    try:
        for t in range(1, cfg.total_steps + 1):
            st.round = t
            # --- policy and task choice
            if gain == GainKind.UNIFORM:
                pi = np.full(n, 1.0 / n)
                k = int(st.rngs["arms"].integers(0, n))
            elif gain == GainKind.TARGET_ONLY:
                pi = _one_hot_policy(n, curriculum.target_index)
                k = curriculum.target_index
            else:
                pi = st.bandit.policy()
                k = st.bandit.sample_arm(st.rngs["arms"])
            last_pi = pi
            x = curriculum.draw_train(k, st.rngs["data"])

            # --- one optimizer step plus the gain bookkeeping around it
            ctx = GainContext(mode=mode)
            if mode == TrainingMode.VI:
                step = vi_loss_and_grads(st.vstate, scratch, x, rng=st.rngs["vi"])
                loss_x = step.data_loss
                if gain == GainKind.VCG:
                    ctx.kl_before = step.kl
                elif gain == GainKind.GVCG:
                    kg_mu, kg_rho, _, _ = st.vstate.kl_grads()
                    ctx.kl_grad_mu, ctx.kl_grad_rho = kg_mu, kg_rho
                    ctx.data_grad_mu = step.data_grad_mu
                    ctx.data_grad_rho = step.data_grad_rho
                grad, _ = clip_global_norm(step.grad, cfg.opt.clip_norm)
                st.opt.step(st.params, grad)
                if gain == GainKind.VCG:
                    ctx.kl_after = st.vstate.kl()
            else:
                per_seq, cache = model.forward(x)
                loss_x = float(per_seq.sum())
                ctx.loss_before = loss_x
                data_grad = model.backward(x, cache)
                ctx.grad = data_grad
                x_prime = None
                if extra_src is not None:
                    if extra_src == "same":
                        k_prime = k
                    elif extra_src == "target":
                        k_prime = curriculum.target_index
                    else:
                        k_prime = int(st.rngs["reward"].integers(0, n))
                    x_prime = curriculum.draw_reward(k_prime, st.rngs["reward"])
                    ctx.extra_source = extra_src
                    per_seq_p, _ = model.forward(x_prime)
                    ctx.extra_loss_before = float(per_seq_p.sum())
                if gain == GainKind.L2G:
                    ctx.theta_before = model.theta.copy()
                elif gain == GainKind.GL2G:
                    ctx.theta_before = model.theta  # read before the step below
                    nu_precomputed = compute_gain(gain, ctx)
                train_grad = data_grad
                if mode == TrainingMode.L2:
                    train_grad = data_grad + cfg.l2_alpha * model.theta
                train_grad, _ = clip_global_norm(train_grad, cfg.opt.clip_norm)
                st.opt.step(model.theta, train_grad)
                if gain == GainKind.PG:
                    per_seq_after, _ = model.forward(x)
                    ctx.loss_after = float(per_seq_after.sum())
                elif extra_src is not None:
                    per_seq_p, _ = model.forward(x_prime)
                    ctx.extra_loss_after = float(per_seq_p.sum())
                elif gain == GainKind.L2G:
                    ctx.theta_after = model.theta

            # --- reward pipeline: nu -> tau division -> observe -> scale -> update
            if is_baseline:
                nu, r_hat, r = 0.0, 0.0, 0.0
            else:
                nu = nu_precomputed if gain == GainKind.GL2G else compute_gain(gain, ctx)
                if not np.isfinite(nu):
                    raise NonFiniteError(f"non-finite gain {nu}")
                r_hat = raw_reward(nu, x.tau)
                st.scaler.observe(r_hat)
                r = st.scaler.scale(r_hat)
                st.bandit.update(k, r)

            st.cum_input_steps += x.tau
            row = [t, st.cum_input_steps, k + 1, nu, r_hat, r, policy_entropy(pi)]
            row += list(pi) + [loss_x]
            train_f.write(",".join(_fmt(v) for v in row) + "\n")

            # --- cadence work and stopping rules
            budget_done = (cfg.max_input_steps is not None
                           and st.cum_input_steps >= cfg.max_input_steps)
            if t % cfg.eval_every == 0 or t == cfg.total_steps or budget_done:
                last_report = do_eval()
                if (cfg.stop_target_loss is not None
                        and last_report.l_tt_per_output < cfg.stop_target_loss):
                    stopped_early = True
            if stopped_early or budget_done:
                break
    except NonFiniteError as e:
        st.save_checkpoint(os.path.join(cfg.out_dir, "checkpoint_abort.npz"))
        train_f.close()
        eval_f.close()
        raise NumericalAbort(f"round {st.round}: {e}") from e

    if last_report is None or last_report.round != st.round:
        last_report = do_eval()
    train_f.close()
    eval_f.close()
    return RunResult(out_dir=cfg.out_dir, rounds=st.round,
                     cum_input_steps=st.cum_input_steps,
                     stopped_early=stopped_early, final_eval=last_report)
