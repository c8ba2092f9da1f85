"""Loss assembly, progressive block-wise training, and fine-tuning.

Batches pair channel realizations with power budgets. Forwards run over
a block-diagonal stack of all batch members, so one graph evaluates the
whole minibatch; large minibatches split into chunks whose gradients
accumulate before each optimizer step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from . import gcnmodel as gm
from .metrics import LN2, wsee_total


@dataclass
class LossConfig:
    """Weights of the training objective terms."""

    eta_m: float = 0.0
    eta_s: float = 0.0
    lambda_s: float = 1e3
    delta_p_db: float = 1.0
    huber_delta: float = 1.0
    selective_supervision: bool = False

    def __post_init__(self):
        if min(self.eta_m, self.eta_s, self.lambda_s) < 0:
            raise ValueError("term weights must be nonnegative")
        if self.delta_p_db <= 0 or self.huber_delta <= 0:
            raise ValueError("budget offset and huber threshold must be positive")


@dataclass
class TrainSchedule:
    """Learning rates, patience windows, and batching granularity."""

    num_blocks: int = 7
    l0: float = 1e-3
    decay: float = 0.6
    decay_l: float = 0.4
    max_epochs: int = 1000
    patience_step1: int = 50
    patience_step2: int = 100
    minibatches_per_epoch: int = 50
    finetune_lr: float = 5e-5
    l2_coeff: float = 1e-6
    chunk_size: int = 64

    def __post_init__(self):
        if min(self.l0, self.decay, self.decay_l, self.finetune_lr) <= 0:
            raise ValueError("rates must be positive")
        if max(self.patience_step1, self.patience_step2) >= self.max_epochs:
            raise ValueError("patience must be shorter than the epoch budget")
        if self.num_blocks < 1 or self.minibatches_per_epoch < 1 or self.chunk_size < 1:
            raise ValueError("counts must be positive")


@dataclass
class Milestone:
    """Best validated snapshot after finishing one block depth."""

    block: int
    val_wsee: float
    params: dict


@dataclass
class TrainData:
    """Channel set with the budget grid it is trained against."""

    channels: np.ndarray
    pm_grid_dbw: np.ndarray
    cfg: object
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float64)
        self.pm_grid_dbw = np.asarray(self.pm_grid_dbw, dtype=np.float64)
        if self.channels.ndim != 3 or self.channels.shape[1] != self.channels.shape[2]:
            raise ValueError("expected channels of shape (N, L, L)")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.float64)
            want = (self.channels.shape[0], self.pm_grid_dbw.size, self.channels.shape[1])
            if self.labels.shape != want:
                raise ValueError(f"labels must have shape {want}, got {self.labels.shape}")

    @property
    def num_users(self):
        return self.channels.shape[1]


@dataclass
class Batch:
    """One minibatch of channel-budget samples."""

    h: np.ndarray
    pm_dbw: np.ndarray
    labels: np.ndarray | None = None

    @property
    def pm_w(self):
        return 10.0 ** (self.pm_dbw / 10.0)

    def pm_minus_w(self, delta_db):
        return 10.0 ** ((self.pm_dbw - delta_db) / 10.0)


@dataclass
class FineTuneOptions:
    """End-to-end adaptation settings."""

    lr: float = 5e-5
    max_epochs: int = 100
    patience: int = 100
    pm_stride_db: float = 1.0
    loss: LossConfig = field(default_factory=LossConfig)


def _selector(B, L, scale=1.0):
    sel = np.zeros((B, B * L))
    for b in range(B):
        sel[b, b * L:(b + 1) * L] = scale
    return sel


def _batch_wsee(h_batch, p_col, cfg):
    """Differentiable per-sample efficiency; returns a (B, 1) tensor."""
    B, L, _ = h_batch.shape
    hd_col = np.einsum("bii->bi", h_batch).reshape(B * L, 1)
    off_big = np.zeros((B * L, B * L))
    for b in range(B):
        block = h_batch[b].copy()
        np.fill_diagonal(block, 0.0)
        off_big[b * L:(b + 1) * L, b * L:(b + 1) * L] = block
    ones = dc.constant(np.ones((B * L, 1)))
    interf = dc.add(ones, dc.matmul(dc.constant(off_big), p_col))
    sinr = dc.hadamard(dc.constant(hd_col), dc.hadamard(p_col, dc.reciprocal(interf)))
    rate = dc.scalar_mul(1.0 / LN2, dc.log(dc.add(ones, sinr)))
    denom = dc.add(dc.scalar_mul(cfg.amp_inefficiency, p_col),
                   dc.constant(np.full((B * L, 1), cfg.static_power)))
    w_col = dc.constant(np.tile(np.asarray(cfg.weights, dtype=np.float64), B)[:, None])
    terms = dc.hadamard(w_col, dc.hadamard(rate, dc.reciprocal(denom)))
    return dc.matmul(dc.constant(_selector(B, L)), terms)


def _forward_col(ctx, params, depth):
    if isinstance(params, gm.UscaParams):
        return gm.batch_usca_graph(ctx, params, depth)
    if isinstance(params, gm.MlpUscaParams):
        rows = gm.batch_mlp_graph(ctx, params, depth)
        return dc.reshape(rows, ctx.num_samples * ctx.num_users, 1)
    if isinstance(params, list):
        return gm.batch_plain_gcn_graph(ctx, params)
    raise TypeError(f"unsupported parameter container: {type(params)!r}")


def loss_total(batch: Batch, params, cfg, loss_cfg: LossConfig, depth=None, scale=None):
    """Training objective as a scalar graph node.

    The base term is the negated batch-mean efficiency. The monotonicity
    term hinges on the forward at the next-lower budget on the dB grid;
    its Huber part compares allocations normalized by the upper budget
    and is gated per sample by the hinge being active. The supervised
    term is a Huber distance to provided allocations in raw Watts.

    `scale` overrides the 1/B averaging so chunked evaluation of a
    larger minibatch can accumulate an exact mean.
    """
    B, L, _ = batch.h.shape
    if B < 1:
        raise ValueError("batch must be nonempty")
    if scale is None:
        scale = 1.0 / B
    ctx = gm.make_batch_context(batch.h, batch.pm_w)
    p_col = _forward_col(ctx, params, depth)
    wsee_b = _batch_wsee(batch.h, p_col, cfg)
    loss = dc.neg(dc.reduce_sum(wsee_b))

    if loss_cfg.eta_m > 0:
        ctx_minus = gm.make_batch_context(batch.h, batch.pm_minus_w(loss_cfg.delta_p_db))
        p_minus = _forward_col(ctx_minus, params, depth)
        wsee_minus = _batch_wsee(batch.h, p_minus, cfg)
        r1 = dc.relu(dc.sub(wsee_minus, wsee_b))
        # the hinge gate is a constant mask; gradients flow through both forwards
        gate = dc.constant((r1.value > 0.0).astype(np.float64))
        inv_bound = dc.constant(1.0 / ctx.bound_col)
        pbar = dc.hadamard(p_col, inv_bound)
        pbar_minus = dc.hadamard(p_minus, inv_bound)
        r2 = dc.matmul(dc.constant(_selector(B, L, scale=1.0 / L)),
                       dc.huber(pbar, pbar_minus, loss_cfg.huber_delta))
        rm = dc.add(r1, dc.scalar_mul(loss_cfg.lambda_s, dc.hadamard(gate, r2)))
        loss = dc.add(loss, dc.scalar_mul(loss_cfg.eta_m, dc.reduce_sum(rm)))

    if loss_cfg.eta_s > 0:
        if batch.labels is None:
            raise ValueError("supervised term requires reference allocations")
        lab_col = dc.constant(batch.labels.reshape(B * L, 1))
        per_sample = dc.matmul(dc.constant(_selector(B, L, scale=1.0 / L)),
                               dc.huber(p_col, lab_col, loss_cfg.huber_delta))
        if loss_cfg.selective_supervision:
            label_wsee = np.array([wsee_total(batch.labels[b], batch.h[b], cfg)
                                   for b in range(B)])
            s_gate = (wsee_b.value[:, 0] < label_wsee).astype(np.float64)[:, None]
            per_sample = dc.hadamard(dc.constant(s_gate), per_sample)
        loss = dc.add(loss, dc.scalar_mul(loss_cfg.eta_s, dc.reduce_sum(per_sample)))

    return dc.scalar_mul(scale, loss)


def validation_wsee(params, channels, pm_grid_dbw, cfg, depth=None):
    """Mean efficiency of the model over channels and the budget grid."""
    pm_w = 10.0 ** (np.asarray(pm_grid_dbw, dtype=np.float64) / 10.0)
    total = 0.0
    for H in channels:
        if isinstance(params, gm.MlpUscaParams):
            P = np.stack([gm.mlp_usca_forward(float(pm), H, params, depth)
                          for pm in pm_w])
        elif isinstance(params, list):
            P = gm.plain_gcn_forward(pm_w, H, params)
        else:
            P = gm.usca_forward(pm_w, H, params, depth)
        total += float(np.mean([wsee_total(P[k], H, cfg) for k in range(pm_w.size)]))
    return total / len(channels)


def step2_rates(tau: int, schedule: TrainSchedule):
    """Per-block rates for joint refinement: older blocks move slower."""
    return [schedule.decay ** (tau - t) * schedule.decay_l * schedule.l0
            for t in range(1, tau + 1)]


def pm_stride_indices(pm_grid_dbw, stride_db: float):
    """Grid indices kept when subsampling budgets every `stride_db` dB."""
    if stride_db <= 0:
        raise ValueError("stride must be positive")
    rel = np.asarray(pm_grid_dbw, dtype=np.float64) - pm_grid_dbw[0]
    ratio = rel / stride_db
    return np.nonzero(np.isclose(ratio, np.round(ratio)))[0]


def _block_names(weights, block: int, include_emb: bool):
    names = [k for k in weights
             if k.startswith(f"p{block}.") or k.startswith(f"s{block}.")]
    if include_emb:
        names = [k for k in weights if k.startswith("emb.")] + names
    return names


def _variant_info(params):
    if isinstance(params, gm.UscaParams):
        return gm.VARIANT_USCA, {"num_blocks": params.num_blocks}
    if isinstance(params, gm.MlpUscaParams):
        return gm.VARIANT_MLP, {"num_blocks": params.num_blocks,
                                "num_users": params.num_users}
    if isinstance(params, list):
        return gm.VARIANT_GCN, {}
    raise TypeError(f"unsupported parameter container: {type(params)!r}")


def _run_phase(weights, rebuild, groups, lrs, data, train_pairs, val_channels,
               loss_cfg, depth, max_epochs, patience, schedule, rng, log_fn,
               phase_name, block_label, epoch_offset):
    """Train the given parameter groups until patience runs out.

    Returns (best weights, best validation value, epochs run). The best
    snapshot includes the incoming weights, so a phase that never
    improves restores its starting point.
    """
    trainable = set().union(*groups) if groups else set()
    tensors = {k: dc.parameter(v.copy()) if k in trainable else dc.constant(v.copy())
               for k, v in weights.items()}
    params_t = rebuild(tensors)
    adam = [dc.AdamState.for_params([tensors[n] for n in g],
                                    weight_decay=schedule.l2_coeff) for g in groups]
    lr_text = ";".join(f"{lr:.6g}" for lr in lrs)

    def snapshot():
        return {k: t.value.copy() for k, t in tensors.items()}

    def np_params():
        return rebuild({k: t.value for k, t in tensors.items()})

    def validate():
        return validation_wsee(np_params(), val_channels, data.pm_grid_dbw,
                               data.cfg, depth)

    best_val = validate()
    best = snapshot()
    if log_fn is not None:
        log_fn({"epoch": epoch_offset, "phase": f"{phase_name}-init",
                "block": block_label, "train_loss": math.nan,
                "val_wsee": best_val, "lrs": lr_text})

    n = len(train_pairs[0])
    use_labels = loss_cfg.eta_s > 0
    stale = 0
    epochs_run = 0
    for epoch in range(max_epochs):
        order = rng.permutation(n)
        losses = []
        for mb in np.array_split(order, min(schedule.minibatches_per_epoch, n)):
            mb_loss = 0.0
            n_chunks = math.ceil(len(mb) / schedule.chunk_size)
            for chunk in np.array_split(mb, n_chunks):
                ch_idx, pm_idx = train_pairs[0][chunk], train_pairs[1][chunk]
                labels = None
                if use_labels and data.labels is not None:
                    labels = data.labels[ch_idx, pm_idx]
                batch = Batch(h=data.channels[ch_idx],
                              pm_dbw=data.pm_grid_dbw[pm_idx], labels=labels)
                loss = loss_total(batch, params_t, data.cfg, loss_cfg, depth,
                                  scale=1.0 / len(mb))
                dc.backward(loss)
                mb_loss += float(loss.value[0, 0])
            for g, st, lr in zip(groups, adam, lrs):
                ps = [tensors[k] for k in g]
                grads = [p.grad if p.grad is not None else np.zeros_like(p.value)
                         for p in ps]
                dc.adam_step(ps, grads, st, lr)
            dc.zero_grads([tensors[k] for g in groups for k in g])
            losses.append(mb_loss)
        epochs_run = epoch + 1
        val = validate()
        if log_fn is not None:
            log_fn({"epoch": epoch_offset + epochs_run, "phase": phase_name,
                    "block": block_label, "train_loss": float(np.mean(losses)),
                    "val_wsee": val, "lrs": lr_text})
        if val > best_val:
            best_val, best, stale = val, snapshot(), 0
        else:
            stale += 1
            if stale >= patience:
                break
    return best, best_val, epochs_run


def _split_pairs(data: TrainData):
    n = data.channels.shape[0]
    if n < 2:
        raise ValueError("need at least two channels to split train/validation")
    n_train = n // 2
    K = data.pm_grid_dbw.size
    ch_idx = np.repeat(np.arange(n_train), K)
    pm_idx = np.tile(np.arange(K), n_train)
    return (ch_idx, pm_idx), data.channels[n_train:]


def progressive_train(data: TrainData, variant: str, schedule: TrainSchedule,
                      loss_cfg: LossConfig, rng, log_fn=None):
    """Block-by-block training; returns final params and per-depth milestones.

    Each depth tau first trains the new block alone (the embedding
    network rides along with the first block), then refines all active
    blocks jointly with depth-dependent rates. Forward depth equals the
    number of blocks trained so far.
    """
    T = schedule.num_blocks
    if variant == gm.VARIANT_USCA:
        params0 = gm.init_usca(T, rng)
    elif variant == gm.VARIANT_MLP:
        params0 = gm.init_mlp_usca(data.num_users, T, rng)
    else:
        raise ValueError(f"progressive training expects a blocked model, got {variant!r}")
    variant, info = _variant_info(params0)

    def rebuild(flat):
        return gm.structure_params(flat, variant, **info)

    weights = {k: v.copy() for k, v in gm.flatten_params(params0).items()}
    train_pairs, val_channels = _split_pairs(data)

    milestones = []
    offset = 0
    for tau in range(1, T + 1):
        grow = _block_names(weights, tau - 1, include_emb=(tau == 1))
        weights, _, ran = _run_phase(
            weights, rebuild, [grow], [schedule.l0], data, train_pairs,
            val_channels, loss_cfg, tau, schedule.max_epochs,
            schedule.patience_step1, schedule, rng, log_fn, "step1", tau, offset)
        offset += ran + 1

        groups = [_block_names(weights, t - 1, include_emb=(t == 1))
                  for t in range(1, tau + 1)]
        weights, val, ran = _run_phase(
            weights, rebuild, groups, step2_rates(tau, schedule), data,
            train_pairs, val_channels, loss_cfg, tau, schedule.max_epochs,
            schedule.patience_step2, schedule, rng, log_fn, "step2", tau, offset)
        offset += ran + 1
        milestones.append(Milestone(block=tau, val_wsee=val,
                                    params={k: v.copy() for k, v in weights.items()}))

    return rebuild(weights), milestones


def fine_tune(params, data: TrainData, options: FineTuneOptions, rng, log_fn=None):
    """End-to-end refinement on a new distribution; no block freezing."""
    variant, info = _variant_info(params)
    if options.loss.eta_s > 0 and data.labels is None:
        raise ValueError("supervised fine-tuning requires reference allocations")

    keep = pm_stride_indices(data.pm_grid_dbw, options.pm_stride_db)
    view = TrainData(channels=data.channels, pm_grid_dbw=data.pm_grid_dbw[keep],
                     cfg=data.cfg,
                     labels=None if data.labels is None else data.labels[:, keep])

    def rebuild(flat):
        return gm.structure_params(flat, variant, **info)

    weights = {k: v.copy() for k, v in gm.flatten_params(params).items()}
    train_pairs, val_channels = _split_pairs(view)
    schedule = TrainSchedule(num_blocks=max(info.get("num_blocks", 1), 1),
                             max_epochs=max(options.max_epochs, 2),
                             patience_step1=1, patience_step2=1)
    weights, _, _ = _run_phase(
        weights, rebuild, [list(weights)], [options.lr], view, train_pairs,
        val_channels, options.loss, None, options.max_epochs, options.patience,
        schedule, rng, log_fn, "finetune", 0, 0)
    return rebuild(weights)
