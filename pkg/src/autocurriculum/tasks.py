"""Synthetic curricula: the repeat-copy grid and the n-gram language suite.

Both expose the same interface: N tasks, a target task (the last one), and
batch draws keyed by purpose (train / reward / eval) so that the run audit
can prove evaluation data never leaks into training or rewards.

Repeat-copy wire format (task (l, r), payload width W):

    input channels   0..W-1  payload bits
                     W       start marker (step 0 only)
                     W+1     repeat count r / max_repeats (one step)
    target channels  0..W-1  payload bits, the sequence repeated r times
                     W       end-of-output marker (final step only)

    timeline: [start] [l payload steps] [repeat step] [l*r+1 output steps]
    so tau(l, r) = l + 2 + l*r + 1.  Loss is masked to the output steps.

N-gram datasets are generated by smoothed character models fitted to a text
corpus at orders 0..n (order 0 = uniform over the corpus alphabet) and are
cached to disk: one flat byte file of alphabet indices per (corpus, order,
seed, length), plus a JSON manifest with the alphabet.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .nn import SIGMOID, SOFTMAX, Batch, NetSpec

LN2 = float(np.log(2.0))


# ---------------------------------------------------------------------------
# repeat copy


@dataclass(frozen=True)
class RepeatCopySpec:
    max_length: int = 6
    max_repeats: int = 6
    bit_width: int = 3

    def __post_init__(self):
        if min(self.max_length, self.max_repeats, self.bit_width) < 1:
            raise ValueError(f"invalid repeat-copy grid {self}")

    @property
    def n_tasks(self) -> int:
        return self.max_length * self.max_repeats

    @property
    def input_size(self) -> int:
        return self.bit_width + 2

    @property
    def output_size(self) -> int:
        return self.bit_width + 1

    def task_params(self, k: int):
        """Task index -> (length, repeats); the target task is the last index."""
        if not 0 <= k < self.n_tasks:
            raise ValueError(f"task index {k} out of range")
        return k // self.max_repeats + 1, k % self.max_repeats + 1

    def tau(self, l: int, r: int) -> int:
        return l + 2 + l * r + 1


def repeat_copy_batch(spec: RepeatCopySpec, l: int, r: int, batch_size: int,
                      rng: np.random.Generator | None = None,
                      bits: np.ndarray | None = None) -> Batch:
    """Sample one batch of task (l, r); `bits` overrides the random payload."""
    if not (1 <= l <= spec.max_length and 1 <= r <= spec.max_repeats):
        raise ValueError(f"task ({l}, {r}) outside the {spec.max_length}x{spec.max_repeats} grid")
    w = spec.bit_width
    if bits is None:
        bits = rng.integers(0, 2, size=(batch_size, l, w)).astype(np.float64)
    else:
        bits = np.asarray(bits, dtype=np.float64).reshape(batch_size, l, w)
    t_len = spec.tau(l, r)
    inputs = np.zeros((batch_size, t_len, spec.input_size))
    targets = np.zeros((batch_size, t_len, spec.output_size))
    mask = np.zeros((batch_size, t_len))

    inputs[:, 0, w] = 1.0
    inputs[:, 1:l + 1, :w] = bits
    inputs[:, l + 1, w + 1] = r / spec.max_repeats

    out0 = l + 2
    targets[:, out0:out0 + l * r, :w] = np.tile(bits, (1, r, 1))
    targets[:, t_len - 1, w] = 1.0
    mask[:, out0:] = 1.0

    k = (l - 1) * spec.max_repeats + (r - 1)
    return Batch(task_id=k, inputs=inputs, targets=targets, mask=mask, tau=t_len)


# ---------------------------------------------------------------------------
# n-gram models


class NGramModel:
    """Interpolated absolute-discount character model of a fixed order.

    Order 0 is the uniform distribution over the corpus alphabet.  For k >= 1
    the conditional blends discounted counts with the next order down:

        p_k(c | ctx) = max(n(ctx, c) - D, 0) / n(ctx)
                       + D * distinct(ctx) / n(ctx) * p_{k-1}(c | ctx[1:])

    and an unseen context falls through to p_{k-1} unchanged.
    """

    def __init__(self, alphabet: str, order: int, discount: float, tables):
        self.alphabet = alphabet
        self.order = order
        self.discount = discount
        self.tables = tables  # per k >= 1: (sorted (k+1)-gram codes, counts)
        self._dist_cache: dict = {}

    @classmethod
    def fit(cls, corpus: str, order: int, discount: float = 0.75) -> "NGramModel":
        if not corpus:
            raise ValueError("empty corpus")
        if len(corpus) < 10 * order:
            raise ValueError(f"corpus of {len(corpus)} chars too short for order {order}")
        if order < 0:
            raise ValueError("order must be >= 0")
        if not 0.0 < discount < 1.0:
            raise ValueError("discount must be in (0, 1)")
        alphabet = "".join(sorted(set(corpus)))
        if len(alphabet) > 256:
            raise ValueError(f"alphabet of {len(alphabet)} chars exceeds byte range")
        idx = encode_text(corpus, alphabet)
        return cls(alphabet, order, discount, _count_tables(idx, len(alphabet), order))

    def reduced(self, order: int) -> "NGramModel":
        """A lower-order model sharing this one's count tables."""
        if order > self.order:
            raise ValueError(f"cannot raise order {self.order} to {order}")
        return NGramModel(self.alphabet, order, self.discount, self.tables[:order])

    def dist(self, context) -> np.ndarray:
        """Conditional distribution over the next character index."""
        a = len(self.alphabet)
        k_eff = min(self.order, len(context))
        ctx = tuple(int(c) for c in context[len(context) - k_eff:])
        key = ctx
        hit = self._dist_cache.get(key)
        if hit is not None:
            return hit
        p = np.full(a, 1.0 / a)
        d = self.discount
        code = 0
        # walk contexts from short to long: ctx[-1:], ctx[-2:], ...
        for j in range(1, k_eff + 1):
            code = ctx[k_eff - j] * (a ** (j - 1)) + code if j > 1 else ctx[-1]
            codes, counts = self.tables[j - 1]
            lo = np.searchsorted(codes, code * a)
            hi = np.searchsorted(codes, code * a + a)
            if lo == hi:
                continue
            sl_codes = codes[lo:hi]
            sl_counts = counts[lo:hi]
            total = sl_counts.sum()
            blended = (d * (hi - lo) / total) * p
            # codes within one context range are distinct, so plain fancy add is safe
            blended[(sl_codes % a).astype(np.intp)] += (sl_counts - d) / total
            p = blended
        self._dist_cache[key] = p
        return p

    def logprob_stream(self, idx: np.ndarray) -> float:
        """Mean per-character negative log-probability of a stream under the model."""
        total = 0.0
        n = len(idx)
        for i in range(n):
            lo = max(0, i - self.order)
            p = self.dist(idx[lo:i])
            total -= np.log(p[idx[i]])
        return total / n

    def generate(self, n_chars: int, rng: np.random.Generator) -> np.ndarray:
        """Sample a character-index stream of exactly n_chars."""
        out = np.empty(n_chars, dtype=np.uint8)
        history: list[int] = []
        for i in range(n_chars):
            cdf = np.cumsum(self.dist(history))
            c = int(np.searchsorted(cdf, rng.random(), side="right"))
            c = min(c, len(self.alphabet) - 1)
            out[i] = c
            history.append(c)
            if len(history) > self.order:
                history.pop(0)
        return out


def encode_text(text: str, alphabet: str) -> np.ndarray:
    lookup = {c: i for i, c in enumerate(alphabet)}
    try:
        return np.fromiter((lookup[c] for c in text), dtype=np.int64, count=len(text))
    except KeyError as e:
        raise ValueError(f"character {e} not in alphabet") from None


def _count_tables(idx: np.ndarray, a: int, order: int):
    """(k+1)-gram code/count tables for k = 1..order; codes are base-a integers."""
    tables = []
    n = len(idx)
    for k in range(1, order + 1):
        m = n - k
        code = idx[:m].copy()
        for j in range(1, k + 1):
            code *= a
            code += idx[j:m + j]
        codes, counts = np.unique(code, return_counts=True)
        tables.append((codes, counts))
    return tables


def corpus_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def generated_stream_path(cache_dir, digest: str, order: int, seed: int, n_chars: int):
    return os.path.join(cache_dir, f"ngram_{digest}_o{order}_s{seed}_n{n_chars}.u8")


def load_or_generate_stream(cache_dir, corpus: str, model: NGramModel, order: int,
                            seed: int, n_chars: int) -> np.ndarray:
    """Disk-cached model sample; the manifest records the shared alphabet."""
    os.makedirs(cache_dir, exist_ok=True)
    digest = corpus_digest(corpus)
    manifest_path = os.path.join(cache_dir, f"ngram_{digest}.json")
    if not os.path.exists(manifest_path):
        # write-to-temp + rename: concurrent runs may race on a cold cache
        tmp = f"{manifest_path}.{os.getpid()}.tmp"
        with open(tmp, "w") as f:
            json.dump({"alphabet": model.alphabet, "corpus_chars": len(corpus),
                       "discount": model.discount}, f)
        os.replace(tmp, manifest_path)
    else:
        with open(manifest_path) as f:
            manifest = json.load(f)
        if manifest["alphabet"] != model.alphabet:
            raise ValueError("cache manifest alphabet does not match this corpus")
    path = generated_stream_path(cache_dir, digest, order, seed, n_chars)
    if os.path.exists(path):
        stream = np.fromfile(path, dtype=np.uint8)
        if len(stream) != n_chars:
            raise ValueError(f"cached stream {path} has wrong length")
        return stream
    sub = model.reduced(order)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(order,)))
    stream = sub.generate(n_chars, rng)
    tmp = f"{path}.{os.getpid()}.tmp"
    stream.tofile(tmp)
    os.replace(tmp, path)
    return stream


# ---------------------------------------------------------------------------
# curricula


class Curriculum:
    """N task generators sharing one batch shape; draws are counted by purpose."""

    n_tasks: int
    batch_size: int
    input_size: int
    output_size: int
    head: str

    def __init__(self, n_tasks: int, batch_size: int):
        self.n_tasks = n_tasks
        self.batch_size = batch_size
        self.draw_counts = {p: np.zeros(n_tasks, dtype=np.int64)
                            for p in ("train", "reward", "eval")}

    @property
    def target_index(self) -> int:
        return self.n_tasks - 1

    def net_spec(self, hidden_sizes) -> NetSpec:
        return NetSpec(self.input_size, tuple(hidden_sizes), self.output_size, self.head)

    def task_label(self, k: int) -> str:
        raise NotImplementedError

    def _draw(self, k: int, rng: np.random.Generator) -> Batch:
        raise NotImplementedError

    def draw_train(self, k: int, rng) -> Batch:
        self.draw_counts["train"][k] += 1
        return self._draw(k, rng)

    def draw_reward(self, k: int, rng) -> Batch:
        self.draw_counts["reward"][k] += 1
        return self._draw(k, rng)

    def draw_eval(self, k: int, rng) -> Batch:
        self.draw_counts["eval"][k] += 1
        return self._draw(k, rng)


class RepeatCopyCurriculum(Curriculum):
    def __init__(self, spec: RepeatCopySpec, batch_size: int):
        super().__init__(spec.n_tasks, batch_size)
        self.spec = spec
        self.input_size = spec.input_size
        self.output_size = spec.output_size
        self.head = SIGMOID

    def task_label(self, k: int) -> str:
        l, r = self.spec.task_params(k)
        return f"l{l}r{r}"

    def _draw(self, k, rng):
        l, r = self.spec.task_params(k)
        return repeat_copy_batch(self.spec, l, r, self.batch_size, rng)


@dataclass(frozen=True)
class NGramSuiteSpec:
    corpus_path: str = ""
    max_order: int = 6
    chars_per_task: int = 200_000
    seq_len: int = 150
    burn_in: int = 50
    discount: float = 0.75
    gen_seed: int = 0
    cache_dir: str | None = None  # default: <corpus dir>/ngram_cache
    eval_fraction: float = 0.1    # tail share of sequences held out for evaluation

    def __post_init__(self):
        if self.max_order < 0 or self.seq_len <= self.burn_in or self.burn_in < 0:
            raise ValueError(f"invalid n-gram suite {self}")
        if not 0.0 < self.eval_fraction < 0.5:
            raise ValueError("eval_fraction must be in (0, 0.5)")


class NGramCurriculum(Curriculum):
    """Tasks 0..max_order: streams generated by models of increasing order.

    Each task's stream is split into disjoint seq_len-character sequences.
    Training draws run through a shuffled epoch without replacement and
    reshuffle when exhausted (recorded in `reshuffle_events`); reward and
    eval draws sample with replacement from disjoint head/tail pools.
    """

    def __init__(self, suite: NGramSuiteSpec, batch_size: int):
        super().__init__(suite.max_order + 1, batch_size)
        self.suite = suite
        with open(suite.corpus_path, encoding="utf-8") as f:
            corpus = f.read()
        cache_dir = suite.cache_dir or os.path.join(
            os.path.dirname(os.path.abspath(suite.corpus_path)), "ngram_cache")
        model = NGramModel.fit(corpus, suite.max_order, suite.discount)
        self.alphabet = model.alphabet
        self.input_size = self.output_size = len(model.alphabet)
        self.head = SOFTMAX
        self.sequences = []   # per task: (n_seq, seq_len) uint8
        self.n_train = []     # first n_train sequences are the training pool
        for order in range(suite.max_order + 1):
            stream = load_or_generate_stream(
                cache_dir, corpus, model, order, suite.gen_seed, suite.chars_per_task)
            n_seq = len(stream) // suite.seq_len
            seqs = stream[:n_seq * suite.seq_len].reshape(n_seq, suite.seq_len)
            self.sequences.append(seqs)
            self.n_train.append(max(1, int(round(n_seq * (1.0 - suite.eval_fraction)))))
        self._epoch_order = [None] * self.n_tasks
        self._cursor = [0] * self.n_tasks
        self.reshuffle_events: list[tuple[int, int]] = []  # (task, round counter)
        self._draws_done = 0

    def task_label(self, k: int) -> str:
        return f"order{k}"

    def _to_batch(self, k: int, seqs: np.ndarray) -> Batch:
        suite = self.suite
        a = self.input_size
        b, t_len = seqs.shape
        inputs = np.zeros((b, t_len, a))
        rows = np.arange(b)[:, None]
        cols = np.arange(t_len)[None, :]
        inputs[rows, cols, seqs] = 1.0
        targets = np.zeros((b, t_len), dtype=np.int64)
        targets[:, :-1] = seqs[:, 1:]
        mask = np.zeros((b, t_len))
        mask[:, suite.burn_in - 1:t_len - 1] = 1.0
        return Batch(task_id=k, inputs=inputs, targets=targets, mask=mask, tau=t_len)

    def _draw_pool(self, k: int, rng, lo: int, hi: int) -> Batch:
        picks = rng.integers(lo, hi, size=self.batch_size)
        return self._to_batch(k, self.sequences[k][picks])

    def _draw(self, k: int, rng) -> Batch:
        # training draw: without replacement within a shuffled epoch
        picks = np.empty(self.batch_size, dtype=np.intp)
        for i in range(self.batch_size):
            if self._epoch_order[k] is None or self._cursor[k] >= self.n_train[k]:
                self._epoch_order[k] = rng.permutation(self.n_train[k])
                if self._cursor[k] >= self.n_train[k]:
                    self.reshuffle_events.append((k, self._draws_done))
                self._cursor[k] = 0
            picks[i] = self._epoch_order[k][self._cursor[k]]
            self._cursor[k] += 1
        self._draws_done += 1
        return self._to_batch(k, self.sequences[k][picks])

    def draw_reward(self, k: int, rng) -> Batch:
        self.draw_counts["reward"][k] += 1
        return self._draw_pool(k, rng, 0, self.n_train[k])

    def draw_eval(self, k: int, rng) -> Batch:
        self.draw_counts["eval"][k] += 1
        n_seq = len(self.sequences[k])
        if self.n_train[k] >= n_seq:
            return self._draw_pool(k, rng, 0, n_seq)
        return self._draw_pool(k, rng, self.n_train[k], n_seq)
