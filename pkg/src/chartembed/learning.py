"""Losses, gradients, and the training loop.

Each training sample holds four encoded charts: three consecutive charts of
one multi-view visualization plus one chart drawn from a different one. All
four pass through the encoder with shared parameters. Two objectives are
combined: an interpolation loss that pulls the middle chart toward the
midpoint of its neighbours (plus an alpha-weighted contraction of the three
pairwise distances), and a margin hinge that keeps the outer pair closer to
each other than the first chart is to the negative. Gradients are exact and
hand-derived; parameters update with Adam.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .encoder import (
    EncodedChart,
    EncoderConfig,
    EncoderParams,
    backward_batch,
    copy_params,
    forward_batch,
    init_params,
    trainable_items,
)

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Raised when the loss turns non-finite."""


@dataclass(frozen=True)
class TrainingSample:
    """Three consecutive charts from one visualization plus a negative."""

    prev: EncodedChart
    mid: EncodedChart
    next: EncodedChart
    negative: EncodedChart
    prev_id: str = ""
    mid_id: str = ""
    next_id: str = ""
    negative_id: str = ""
    vis_id: str = ""
    negative_vis_id: str = ""


@dataclass(frozen=True)
class HyperParams:
    # beta balances the two objectives; the interpolation part runs roughly
    # 30x the hinge part at initialization, and beta ~ 10 keeps the hinge
    # strong enough that embeddings cannot collapse to a single point.
    alpha: float = 0.5
    beta: float = 10.0
    margin: float = 1.0
    learning_rate: float = 0.01
    batch_size: int = 128
    epochs: int = 10
    dropout: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be >= 0")
        if self.margin <= 0:
            raise ValueError("margin must be > 0")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("bad optimizer settings")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


@dataclass(frozen=True)
class LossBreakdown:
    interp_term: float
    pair_term: float
    l1: float
    l2: float
    total: float


def euclidean(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(x, dtype=np.float64) - y))


def euclidean_grad(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """d distance / d x; zero at coincident points (subgradient choice)."""
    diff = np.asarray(x, dtype=np.float64) - y
    dist = np.linalg.norm(diff)
    if dist == 0.0:
        return np.zeros_like(diff)
    return diff / dist


def interpolation_loss(
    x_prev: np.ndarray, x_mid: np.ndarray, x_next: np.ndarray, alpha: float
) -> tuple[float, tuple[float, float]]:
    """Midpoint distance plus alpha times the three pairwise distances.

    Returns (value, (midpoint_term, pair_sum)).
    """
    midpoint = (np.asarray(x_prev, dtype=np.float64) + x_next) / 2.0
    interp = euclidean(x_mid, midpoint)
    pairs = (
        euclidean(x_prev, x_mid) + euclidean(x_mid, x_next) + euclidean(x_prev, x_next)
    )
    return interp + alpha * pairs, (interp, pairs)


def triplet_loss(
    anchor: np.ndarray, positive: np.ndarray, negative: np.ndarray, margin: float
) -> float:
    """Hinge on d(anchor, positive) - d(anchor, negative) + margin."""
    return max(0.0, euclidean(anchor, positive) - euclidean(anchor, negative) + margin)


def batch_loss_from_embeddings(
    prev: np.ndarray,
    mid: np.ndarray,
    nxt: np.ndarray,
    neg: np.ndarray,
    hyper: HyperParams,
    loss_mask: tuple[bool, bool] = (True, True),
) -> LossBreakdown:
    """Sum the combined objective over a batch of embedding quadruples."""
    interp_term = 0.0
    pair_term = 0.0
    l2 = 0.0
    for k in range(prev.shape[0]):
        _, (interp, pairs) = interpolation_loss(prev[k], mid[k], nxt[k], hyper.alpha)
        interp_term += interp
        pair_term += pairs
        l2 += triplet_loss(prev[k], nxt[k], neg[k], hyper.margin)
    l1 = interp_term + hyper.alpha * pair_term
    total = (l1 if loss_mask[0] else 0.0) + (hyper.beta * l2 if loss_mask[1] else 0.0)
    return LossBreakdown(interp_term=interp_term, pair_term=pair_term, l1=l1, l2=l2, total=total)


def loss_gradients_wrt_embeddings(
    prev: np.ndarray,
    mid: np.ndarray,
    nxt: np.ndarray,
    neg: np.ndarray,
    hyper: HyperParams,
    loss_mask: tuple[bool, bool] = (True, True),
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """d(total)/d(embedding) for each of the four blocks."""
    d_prev = np.zeros_like(prev)
    d_mid = np.zeros_like(mid)
    d_next = np.zeros_like(nxt)
    d_neg = np.zeros_like(neg)
    for k in range(prev.shape[0]):
        p, m, n, q = prev[k], mid[k], nxt[k], neg[k]
        if loss_mask[0]:
            center = (p + n) / 2.0
            g_mid = euclidean_grad(m, center)
            d_mid[k] += g_mid
            d_prev[k] += -0.5 * g_mid
            d_next[k] += -0.5 * g_mid
            a = hyper.alpha
            d_prev[k] += a * (euclidean_grad(p, m) + euclidean_grad(p, n))
            d_mid[k] += a * (euclidean_grad(m, p) + euclidean_grad(m, n))
            d_next[k] += a * (euclidean_grad(n, m) + euclidean_grad(n, p))
        if loss_mask[1]:
            hinge = euclidean(p, n) - euclidean(p, q) + hyper.margin
            if hinge > 0.0:
                b = hyper.beta
                d_prev[k] += b * (euclidean_grad(p, n) - euclidean_grad(p, q))
                d_next[k] += b * euclidean_grad(n, p)
                d_neg[k] += -b * euclidean_grad(q, p)
    return d_prev, d_mid, d_next, d_neg


def _stack_batch(samples: Sequence[TrainingSample]) -> tuple[np.ndarray, np.ndarray]:
    schemas = np.stack(
        [s.prev.schema for s in samples]
        + [s.mid.schema for s in samples]
        + [s.next.schema for s in samples]
        + [s.negative.schema for s in samples]
    )
    sems = np.stack(
        [s.prev.semantics for s in samples]
        + [s.mid.semantics for s in samples]
        + [s.next.semantics for s in samples]
        + [s.negative.semantics for s in samples]
    )
    return schemas, sems


def combined_loss(
    samples: Sequence[TrainingSample],
    params: EncoderParams,
    hyper: HyperParams,
    train: bool = True,
    dropout_rng: Optional[np.random.Generator] = None,
    update_running_stats: bool = True,
    loss_mask: tuple[bool, bool] = (True, True),
):
    """One shared-parameter forward over all four charts of every sample.

    Returns (total, LossBreakdown, trace, embeddings); trace is None outside
    train mode. Raises TrainingDivergedError on a non-finite loss.
    """
    if not samples:
        raise ValueError("empty batch")
    schemas, sems = _stack_batch(samples)
    out, trace = forward_batch(
        schemas,
        sems,
        params,
        train=train,
        dropout_rng=dropout_rng,
        update_running_stats=update_running_stats,
    )
    b = len(samples)
    prev, mid, nxt, neg = out[:b], out[b : 2 * b], out[2 * b : 3 * b], out[3 * b :]
    breakdown = batch_loss_from_embeddings(prev, mid, nxt, neg, hyper, loss_mask)
    if not np.isfinite(breakdown.total):
        raise TrainingDivergedError(
            f"non-finite loss (l1={breakdown.l1}, l2={breakdown.l2})"
        )
    return breakdown.total, breakdown, trace, out


def backward(
    trace,
    embeddings: np.ndarray,
    params: EncoderParams,
    hyper: HyperParams,
    loss_mask: tuple[bool, bool] = (True, True),
) -> dict[str, np.ndarray]:
    """Gradients of the combined loss for every trainable parameter."""
    n = embeddings.shape[0]
    if n % 4 != 0 or trace.batch_size != n:
        raise ValueError("trace/embedding mismatch: expected four blocks per sample")
    b = n // 4
    d_prev, d_mid, d_next, d_neg = loss_gradients_wrt_embeddings(
        embeddings[:b], embeddings[b : 2 * b], embeddings[2 * b : 3 * b], embeddings[3 * b :],
        hyper, loss_mask,
    )
    d_out = np.concatenate([d_prev, d_mid, d_next, d_neg], axis=0)
    return backward_batch(trace, d_out, params)


@dataclass
class AdamState:
    """First/second moment accumulators mirroring the trainable arrays."""

    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_adam(params: EncoderParams) -> AdamState:
    state = AdamState()
    for name, arr in trainable_items(params):
        state.m[name] = np.zeros_like(arr)
        state.v[name] = np.zeros_like(arr)
    return state


def adam_step(
    params: EncoderParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> tuple[EncoderParams, AdamState]:
    """Standard bias-corrected Adam update (in place; returned for chaining)."""
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, arr in trainable_items(params):
        g = grads.get(name)
        if g is None:
            raise ValueError(f"missing gradient for {name}")
        if g.shape != arr.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        arr -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def grad_check(
    sample: TrainingSample,
    params: EncoderParams,
    hyper: HyperParams,
    epsilon: float = 1e-5,
    n_coords: int = 200,
    seed: int = 0,
    corrupt: bool = False,
) -> float:
    """Max relative error of analytic vs central-difference gradients.

    Runs with dropout disabled and batch-statistics normalization (running
    statistics frozen), over n_coords randomly chosen parameter coordinates.
    The corrupt flag deliberately perturbs one conv gradient to prove the
    check can fail.
    """
    hyper_nd = replace(hyper, dropout=0.0)
    work = copy_params(params)
    work.config = replace(work.config, dropout=0.0)
    batch = [sample]

    _, _, trace, emb = combined_loss(
        batch, work, hyper_nd, train=True, update_running_stats=False
    )
    grads = backward(trace, emb, work, hyper_nd)
    if corrupt:
        grads["conv1.weight"] = grads["conv1.weight"] * 1.05 + 0.01

    items = trainable_items(work)
    sizes = np.array([arr.size for _, arr in items])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(n_coords, total), replace=False)
    bounds = np.cumsum(sizes)

    worst = 0.0
    for flat_index in picks:
        layer = int(np.searchsorted(bounds, flat_index, side="right"))
        name, arr = items[layer]
        local = int(flat_index - (bounds[layer] - arr.size))
        idx = np.unravel_index(local, arr.shape)

        original = arr[idx]
        arr[idx] = original + epsilon
        plus, _, _, _ = combined_loss(
            batch, work, hyper_nd, train=True, update_running_stats=False
        )
        arr[idx] = original - epsilon
        minus, _, _, _ = combined_loss(
            batch, work, hyper_nd, train=True, update_running_stats=False
        )
        arr[idx] = original

        numeric = (plus - minus) / (2.0 * epsilon)
        analytic = grads[name][idx]
        scale = max(1.0, abs(numeric), abs(analytic))
        worst = max(worst, abs(numeric - analytic) / scale)
    return worst


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    interp_term: float
    pair_term: float
    l1: float
    l2: float
    total: float
    wall_ms: float


def train(
    samples,
    hyper: HyperParams,
    params: Optional[EncoderParams] = None,
    loss_mask: tuple[bool, bool] = (True, True),
) -> tuple[EncoderParams, list[EpochStats]]:
    """Run the full training loop; bitwise reproducible for a fixed seed.

    `samples` is a SampleSet or any sequence of TrainingSample. Initial
    parameters default to init_params(hyper.seed). Shuffling and dropout
    randomness both derive from hyper.seed.
    """
    sample_list: Sequence[TrainingSample] = getattr(samples, "samples", samples)
    if not sample_list:
        raise ValueError("empty sample set")
    if params is None:
        params = init_params(hyper.seed, EncoderConfig(dropout=hyper.dropout))
    shuffle_seq, dropout_seq = np.random.SeedSequence(hyper.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)
    adam = init_adam(params)

    history: list[EpochStats] = []
    n = len(sample_list)
    for epoch in range(hyper.epochs):
        started = time.perf_counter()
        order = shuffle_rng.permutation(n)
        sums = np.zeros(4)  # interp, pair, l1, l2
        total = 0.0
        for lo in range(0, n, hyper.batch_size):
            batch = [sample_list[i] for i in order[lo : lo + hyper.batch_size]]
            _, breakdown, trace, emb = combined_loss(
                batch, params, hyper, train=True, dropout_rng=dropout_rng,
                loss_mask=loss_mask,
            )
            grads = backward(trace, emb, params, hyper, loss_mask)
            adam_step(params, grads, adam, hyper.learning_rate)
            sums += (breakdown.interp_term, breakdown.pair_term, breakdown.l1, breakdown.l2)
            total += breakdown.total
        wall_ms = (time.perf_counter() - started) * 1000.0
        history.append(
            EpochStats(
                epoch=epoch + 1,
                interp_term=sums[0],
                pair_term=sums[1],
                l1=sums[2],
                l2=sums[3],
                total=total,
                wall_ms=wall_ms,
            )
        )
        log.info(
            "epoch %d/%d total=%.6f l1=%.6f l2=%.6f (%.0f ms)",
            epoch + 1, hyper.epochs, total, sums[2], sums[3], wall_ms,
        )
    return params, history


def history_csv(history: Sequence[EpochStats]) -> str:
    """Training history in CSV form."""
    lines = ["epoch,interp_term,pair_term,l1,l2,total,wall_ms"]
    for row in history:
        lines.append(
            f"{row.epoch},{row.interp_term:.17g},{row.pair_term:.17g},"
            f"{row.l1:.17g},{row.l2:.17g},{row.total:.17g},{row.wall_ms:.3f}"
        )
    return "\n".join(lines) + "\n"
