"""From-scratch stacked LSTM sequence model with exact analytic gradients.

Everything runs in float64 numpy: gains are differences of similar losses
and the test suite checks gradients against central finite differences, so
precision matters more than speed here.

Parameter vector layout (flat, in this order):

    for each layer l with input size I_l and width H_l:
        W_x[l]  shape (4*H_l, I_l)   input projection
        W_h[l]  shape (4*H_l, H_l)   recurrent projection
        b[l]    shape (4*H_l,)       gate biases
    W_out   shape (O, H_last)
    b_out   shape (O,)

Gate blocks within the leading 4*H axis are ordered [input, forget,
output, candidate]: the three sigmoid gates sit together so one fused
activation covers them.  Matrices are row-major, so e.g. W_x[l] occupies
4*H_l*I_l consecutive floats.

Binary parameter checkpoint layout (little-endian):

    magic   8 bytes  b"ACPARAMS"
    version u32      currently 1
    hdrlen  u32      length of the JSON header in bytes
    header  JSON     {"input_size", "hidden_sizes", "output_size", "head"}
    theta   n x f64  the flat parameter vector
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

SOFTMAX = "softmax"
SIGMOID = "sigmoid"

CHECKPOINT_MAGIC = b"ACPARAMS"
CHECKPOINT_VERSION = 1


class NonFiniteError(RuntimeError):
    """A forward pass produced NaN/inf activations or loss."""

    def __init__(self, message, layer=None, timestep=None):
        super().__init__(message)
        self.layer = layer
        self.timestep = timestep


class StaleCacheError(RuntimeError):
    """backward() was handed a cache from a different parameter vector."""


@dataclass(frozen=True)
class NetSpec:
    input_size: int
    hidden_sizes: tuple
    output_size: int
    head: str

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_size < 1 or self.output_size < 1 or not self.hidden_sizes:
            raise ValueError(f"all sizes must be >= 1: {self}")
        if any(h < 1 for h in self.hidden_sizes):
            raise ValueError(f"all sizes must be >= 1: {self}")
        if self.head not in (SOFTMAX, SIGMOID):
            raise ValueError(f"unknown head {self.head!r}")


@dataclass
class Batch:
    """One training sample: a batch of sequences drawn from a single task.

    inputs:  (B, T, input_size) float64
    targets: (B, T) int class indices for a softmax head,
             (B, T, output_size) float 0/1 for a sigmoid head
    mask:    (B, T) float 0/1, 1 where the timestep contributes loss
    tau:     processing time of the batch = longest input sequence length
    """

    task_id: int
    inputs: np.ndarray
    targets: np.ndarray
    mask: np.ndarray
    tau: int

    def validate(self, spec: NetSpec) -> None:
        b, t, i = self.inputs.shape
        if b < 1:
            raise ValueError("empty batch")
        if i != spec.input_size:
            raise ValueError(f"batch has {i} input channels, spec wants {spec.input_size}")
        if self.mask.shape != (b, t):
            raise ValueError(f"mask shape {self.mask.shape} != {(b, t)}")
        if spec.head == SOFTMAX:
            if self.targets.shape != (b, t):
                raise ValueError(f"softmax targets shape {self.targets.shape} != {(b, t)}")
            if self.targets.min() < 0 or self.targets.max() >= spec.output_size:
                raise ValueError("softmax target index out of range")
        else:
            if self.targets.shape != (b, t, spec.output_size):
                raise ValueError(
                    f"sigmoid targets shape {self.targets.shape} != {(b, t, spec.output_size)}")
        if self.tau < 1 or self.tau != t:
            raise ValueError(f"tau {self.tau} != padded length {t}")

    @property
    def size(self) -> int:
        return self.inputs.shape[0]

    def n_unmasked_outputs(self, spec: NetSpec) -> float:
        """Number of scalar predictions the loss is summed over."""
        steps = float(self.mask.sum())
        return steps if spec.head == SOFTMAX else steps * spec.output_size


def _layer_shapes(spec: NetSpec):
    shapes = []
    prev = spec.input_size
    for h in spec.hidden_sizes:
        shapes.append(((4 * h, prev), (4 * h, h), (4 * h,)))
        prev = h
    return shapes, (spec.output_size, prev), (spec.output_size,)


def count_params(spec: NetSpec) -> int:
    layers, wo, bo = _layer_shapes(spec)
    n = sum(int(np.prod(s)) for triple in layers for s in triple)
    return n + int(np.prod(wo)) + int(np.prod(bo))


def _sigmoid(z):
    # tanh half-angle form: one ufunc call, stable for any magnitude
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


class Model:
    """Flat parameter vector plus views; forward/backward are pure in (theta, batch)."""

    def __init__(self, spec: NetSpec, theta: np.ndarray | None = None):
        self.spec = spec
        n = count_params(spec)
        if theta is None:
            theta = np.zeros(n)
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (n,):
            raise ValueError(f"theta has {theta.shape}, layout needs ({n},)")
        self.theta = theta
        self._build_views()

    def _build_views(self):
        layers, wo_shape, bo_shape = _layer_shapes(self.spec)
        self.layers = []
        off = 0
        for wx_s, wh_s, b_s in layers:
            views = []
            for s in (wx_s, wh_s, b_s):
                size = int(np.prod(s))
                views.append(self.theta[off:off + size].reshape(s))
                off += size
            self.layers.append(tuple(views))
        size = int(np.prod(wo_shape))
        self.w_out = self.theta[off:off + size].reshape(wo_shape)
        off += size
        self.b_out = self.theta[off:off + bo_shape[0]]

    def init_params(self, rng: np.random.Generator) -> None:
        """Uniform(-0.1, 0.1) weights, zero biases, forget-gate bias +1."""
        self.theta[:] = 0.0
        for (wx, wh, b), h in zip(self.layers, self.spec.hidden_sizes):
            wx[:] = rng.uniform(-0.1, 0.1, size=wx.shape)
            wh[:] = rng.uniform(-0.1, 0.1, size=wh.shape)
            b[h:2 * h] = 1.0
        self.w_out[:] = rng.uniform(-0.1, 0.1, size=self.w_out.shape)

    def clone_params(self) -> np.ndarray:
        return self.theta.copy()

    def apply_params(self, theta: np.ndarray) -> "Model":
        """New model sharing the spec but owning a copy of `theta`."""
        theta = np.asarray(theta, dtype=np.float64)
        return Model(self.spec, theta.copy())

    def set_params(self, theta: np.ndarray) -> None:
        if theta.shape != self.theta.shape:
            raise ValueError(f"length mismatch: {theta.shape} vs {self.theta.shape}")
        self.theta[:] = theta

    def forward(self, batch: Batch):
        """Run the batch; return (per-sequence losses, cache for backward).

        The total sample loss is per_seq.sum(): negative log-likelihood over
        every unmasked timestep of every sequence.
        """
        spec = self.spec
        batch.validate(spec)
        x = np.asarray(batch.inputs, dtype=np.float64)
        bsz, t_len, _ = x.shape
        mask = np.asarray(batch.mask, dtype=np.float64)

        layer_caches = []
        for li, ((wx, wh, b), h_n) in enumerate(zip(self.layers, self.spec.hidden_sizes)):
            zx = x.reshape(bsz * t_len, -1) @ wx.T
            zx = zx.reshape(bsz, t_len, 4 * h_n) + b
            gates = np.empty((bsz, t_len, 4 * h_n))  # [i | f | o | g] blocks
            cs = np.empty((bsz, t_len, h_n))
            tc = np.empty_like(cs)
            hs = np.empty_like(cs)
            h = np.zeros((bsz, h_n))
            c = np.zeros((bsz, h_n))
            for t in range(t_len):
                z = zx[:, t] + h @ wh.T
                sig = _sigmoid(z[:, :3 * h_n])
                g_g = np.tanh(z[:, 3 * h_n:])
                c = sig[:, h_n:2 * h_n] * c + sig[:, :h_n] * g_g
                t_c = np.tanh(c)
                h = sig[:, 2 * h_n:3 * h_n] * t_c
                gates[:, t, :3 * h_n] = sig
                gates[:, t, 3 * h_n:] = g_g
                cs[:, t] = c
                tc[:, t] = t_c
                hs[:, t] = h
            if not np.isfinite(hs).all():
                bad = np.argwhere(~np.isfinite(hs))[0]
                raise NonFiniteError(
                    f"non-finite activation in layer {li} at timestep {bad[1]}",
                    layer=li, timestep=int(bad[1]))
            layer_caches.append({"x": x, "gates": gates, "c": cs,
                                 "tanh_c": tc, "h": hs})
            x = hs

        logits = (x.reshape(bsz * t_len, -1) @ self.w_out.T + self.b_out)
        logits = logits.reshape(bsz, t_len, spec.output_size)

        if spec.head == SOFTMAX:
            m = logits.max(axis=-1, keepdims=True)
            zs = logits - m
            lse = np.log(np.exp(zs).sum(axis=-1, keepdims=True))
            logp = zs - lse
            tgt = np.asarray(batch.targets, dtype=np.int64)
            picked = np.take_along_axis(logp, tgt[..., None], axis=-1)[..., 0]
            per_step = -picked * mask
            head_cache = {"probs": np.exp(logp), "targets": tgt}
        else:
            y = np.asarray(batch.targets, dtype=np.float64)
            per_unit = np.maximum(logits, 0.0) - logits * y + np.log1p(np.exp(-np.abs(logits)))
            per_step = per_unit.sum(axis=-1) * mask
            head_cache = {"sig": _sigmoid(logits), "targets": y}

        per_seq = per_step.sum(axis=1)
        if not np.isfinite(per_seq).all():
            raise NonFiniteError("non-finite loss at the output head")
        cache = {"theta": self.theta.copy(), "layers": layer_caches,
                 "head": head_cache, "mask": mask, "bsz": bsz, "t_len": t_len}
        return per_seq, cache

    def backward(self, batch: Batch, cache) -> np.ndarray:
        """Exact gradient of per_seq.sum() w.r.t. theta (same layout, same length)."""
        if not np.array_equal(cache["theta"], self.theta):
            raise StaleCacheError("cache was computed under different parameters")
        spec = self.spec
        bsz, t_len = cache["bsz"], cache["t_len"]
        mask = cache["mask"]

        head = cache["head"]
        if spec.head == SOFTMAX:
            dlogits = head["probs"].copy()
            np.put_along_axis(
                dlogits, head["targets"][..., None],
                np.take_along_axis(dlogits, head["targets"][..., None], axis=-1) - 1.0,
                axis=-1)
        else:
            dlogits = head["sig"] - head["targets"]
        dlogits *= mask[..., None]

        h_top = cache["layers"][-1]["h"]
        dl_flat = dlogits.reshape(bsz * t_len, -1)
        grad_w_out = dl_flat.T @ h_top.reshape(bsz * t_len, -1)
        grad_b_out = dl_flat.sum(axis=0)
        d_h_all = (dl_flat @ self.w_out).reshape(bsz, t_len, -1)

        layer_grads = []
        for li in range(len(self.layers) - 1, -1, -1):
            wx, wh, b = self.layers[li]
            lc = cache["layers"][li]
            h_n = self.spec.hidden_sizes[li]
            gates, cs, tc = lc["gates"], lc["c"], lc["tanh_c"]
            dz = np.empty((bsz, t_len, 4 * h_n))
            dh_next = np.zeros((bsz, h_n))
            dc_next = np.zeros((bsz, h_n))
            zeros_c = np.zeros((bsz, h_n))
            for t in range(t_len - 1, -1, -1):
                dh = d_h_all[:, t] + dh_next
                g_t = gates[:, t]
                i_g, f_g = g_t[:, :h_n], g_t[:, h_n:2 * h_n]
                o_g, g_g = g_t[:, 2 * h_n:3 * h_n], g_t[:, 3 * h_n:]
                t_c = tc[:, t]
                dc = dh * o_g * (1.0 - t_c * t_c) + dc_next
                c_prev = cs[:, t - 1] if t > 0 else zeros_c
                dz[:, t, :h_n] = dc * g_g * i_g * (1.0 - i_g)
                dz[:, t, h_n:2 * h_n] = dc * c_prev * f_g * (1.0 - f_g)
                dz[:, t, 2 * h_n:3 * h_n] = dh * t_c * o_g * (1.0 - o_g)
                dz[:, t, 3 * h_n:] = dc * i_g * (1.0 - g_g * g_g)
                dh_next = dz[:, t] @ wh
                dc_next = dc * f_g
            dz_flat = dz.reshape(bsz * t_len, -1)
            h_prev = np.concatenate(
                [np.zeros((bsz, 1, h_n)), lc["h"][:, :-1]], axis=1)
            grad_wx = dz_flat.T @ lc["x"].reshape(bsz * t_len, -1)
            grad_wh = dz_flat.T @ h_prev.reshape(bsz * t_len, -1)
            grad_b = dz_flat.sum(axis=0)
            layer_grads.append((grad_wx, grad_wh, grad_b))
            d_h_all = (dz_flat @ wx).reshape(bsz, t_len, -1)

        parts = []
        for grad_wx, grad_wh, grad_b in reversed(layer_grads):
            parts.extend([grad_wx.ravel(), grad_wh.ravel(), grad_b])
        parts.extend([grad_w_out.ravel(), grad_b_out])
        return np.concatenate(parts)


def clip_global_norm(grad: np.ndarray, max_norm: float):
    """Scale `grad` down to `max_norm` if its L2 norm exceeds it."""
    norm = float(np.linalg.norm(grad))
    if max_norm and norm > max_norm:
        return grad * (max_norm / norm), norm
    return grad, norm


@dataclass
class OptConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    ms_decay: float = 0.95
    eps_stabilizer: float = 1e-8
    clip_norm: float = 10.0  # 0 disables clipping; applied before step()


class RmsProp:
    """RMSProp with momentum on a flat parameter vector.

    ms   <- ms_decay * ms + (1 - ms_decay) * g^2
    mom  <- momentum * mom - lr * g / sqrt(ms + eps)
    p    <- p + mom
    """

    def __init__(self, config: OptConfig, n_params: int):
        self.config = config
        self.ms = np.zeros(n_params)
        self.mom = np.zeros(n_params)

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        cfg = self.config
        if grad.shape != params.shape or grad.shape != self.ms.shape:
            raise ValueError("gradient/parameter shape mismatch")
        self.ms *= cfg.ms_decay
        self.ms += (1.0 - cfg.ms_decay) * grad * grad
        with np.errstate(over="ignore", invalid="ignore"):
            update = cfg.learning_rate * grad / np.sqrt(self.ms + cfg.eps_stabilizer)
        if not np.isfinite(update).all():
            raise NonFiniteError("non-finite optimizer update")
        self.mom *= cfg.momentum
        self.mom -= update
        params += self.mom

    def snapshot(self) -> dict:
        return {"ms": self.ms.copy(), "mom": self.mom.copy()}

    def restore(self, snap: dict) -> None:
        self.ms = np.asarray(snap["ms"], dtype=float).copy()
        self.mom = np.asarray(snap["mom"], dtype=float).copy()


def save_params(path, spec: NetSpec, theta: np.ndarray) -> None:
    header = json.dumps({
        "input_size": spec.input_size,
        "hidden_sizes": list(spec.hidden_sizes),
        "output_size": spec.output_size,
        "head": spec.head,
    }).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        f.write(header)
        f.write(np.asarray(theta, dtype="<f8").tobytes())


def load_params(path):
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r}")
        version, hdrlen = struct.unpack("<II", f.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        header = json.loads(f.read(hdrlen).decode("utf-8"))
        spec = NetSpec(header["input_size"], tuple(header["hidden_sizes"]),
                       header["output_size"], header["head"])
        theta = np.frombuffer(f.read(), dtype="<f8").astype(np.float64)
    if theta.size != count_params(spec):
        raise ValueError("checkpoint parameter count does not match its spec")
    return spec, theta
