"""Graph-convolutional models for power allocation.

The unfolded solver network mirrors one damped ascent step per block: a
graph network proposes a candidate allocation, a second one chooses a
per-user step size, and the damped update is clipped to the power
budget. Every forward exists in two flavors: a numpy fast path for
inference, and a diffcore graph for training. The numpy paths accept a
scalar budget or a vector of budgets that share one channel matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc

HIDDEN_DIMS = (8, 32, 32, 16, 8)
PLAIN_GCN_DIMS = (56, 224, 224, 112, 56)
MLP_HIDDEN_DIMS = (64, 64)

VARIANT_USCA = "usca"
VARIANT_GCN = "gcn"
VARIANT_MLP = "mlp"
MODEL_VARIANTS = (VARIANT_USCA, VARIANT_GCN, VARIANT_MLP)


@dataclass(frozen=True)
class GcnSpec:
    """Layer widths of one graph network; the input width is the caller's."""

    in_dim: int
    layer_dims: tuple

    def __post_init__(self):
        if self.in_dim < 1 or any(d < 1 for d in self.layer_dims):
            raise ValueError("layer widths must be positive")
        if len(self.layer_dims) < 1:
            raise ValueError("need at least the output layer")

    def weight_shapes(self):
        dims = (self.in_dim,) + tuple(self.layer_dims)
        return list(zip(dims[:-1], dims[1:]))


# Hidden stacks are shared; output widths differ per role. The listed
# hidden widths are followed by one linear output projection.
EMB_SPEC = GcnSpec(1, HIDDEN_DIMS + (1,))
P_SPEC = GcnSpec(2, HIDDEN_DIMS + (2,))
S_SPEC = GcnSpec(3, HIDDEN_DIMS + (1,))
PLAIN_SPEC = GcnSpec(1, PLAIN_GCN_DIMS + (1,))


@dataclass
class UscaParams:
    """Weight stacks for the embedding network and T unfolded blocks."""

    theta_emb: list
    theta_p: list
    theta_s: list

    def __post_init__(self):
        if len(self.theta_p) != len(self.theta_s) or not self.theta_p:
            raise ValueError("need matching candidate/step stacks for T >= 1 blocks")

    @property
    def num_blocks(self):
        return len(self.theta_p)


@dataclass
class MlpUscaParams:
    """Dense-network variant; the input layout hard-wires the user count."""

    num_users: int
    emb_net: list
    p_nets: list
    s_nets: list

    @property
    def num_blocks(self):
        return len(self.p_nets)


@dataclass
class BlockState:
    """Per-block trace: state matrix, clipped candidate and step size."""

    Z: np.ndarray
    bp: np.ndarray
    gamma: np.ndarray
    bp_raw: np.ndarray
    gamma_raw: np.ndarray
    p_raw: np.ndarray


def xavier_uniform(shape, rng):
    bound = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-bound, bound, size=shape)


def init_gcn(spec: GcnSpec, rng):
    return [xavier_uniform(s, rng) for s in spec.weight_shapes()]


STEP_INIT_GAIN = 4.0


def _init_step_net(rng):
    # The step size is hard-clamped to [0, 1] and the stacks carry no
    # bias, so a freshly drawn network whose output happens to be
    # negative for typical inputs emits gamma = 0 everywhere and never
    # receives a gradient. Folding the last layer onto positive values
    # and scaling it up starts every block near the full step, the same
    # first trial a backtracking line search makes; blocks back off the
    # step only where gradients ask for it.
    weights = init_gcn(S_SPEC, rng)
    weights[-1] = STEP_INIT_GAIN * np.abs(weights[-1])
    return weights


def _mute_power_inputs(weights, channels):
    # Power-valued input features span five decades across the constraint
    # grid. A random first layer is roughly linear in them, so candidate
    # powers overshoot the [0, Pm] clamp at the largest budgets and those
    # samples stop producing gradients. Starting the listed input rows at
    # zero makes the fresh network budget-invariant; the rows only grow
    # where live gradients justify it.
    weights[0] = weights[0].copy()
    weights[0][list(channels)] = 0.0
    return weights


def _init_candidate_net(rng):
    # Same dead-clamp guard as the step net, on the other boundary: the
    # candidate column is clipped at zero, and early training pushes
    # powers down hard, so a mixed-sign head tends to ratchet into an
    # all-zero candidate that never recovers. Starting the head positive
    # and small keeps the candidate below typical targets, where the
    # efficiency gradient pulls it upward through live territory.
    weights = _mute_power_inputs(init_gcn(P_SPEC, rng), (1,))
    weights[-1] = weights[-1].copy()
    weights[-1][:, 1] = np.abs(weights[-1][:, 1])
    return weights


def init_usca(num_blocks: int, rng) -> UscaParams:
    if num_blocks < 1:
        raise ValueError("need at least one block")
    # block inputs are [p_emb, p]; step nets see [p_emb, p, candidate]
    return UscaParams(
        theta_emb=init_gcn(EMB_SPEC, rng),
        theta_p=[_init_candidate_net(rng) for _ in range(num_blocks)],
        theta_s=[_mute_power_inputs(_init_step_net(rng), (1, 2))
                 for _ in range(num_blocks)],
    )


def init_plain_gcn(rng):
    return init_gcn(PLAIN_SPEC, rng)


def _init_mlp(in_dim, out_dim, rng):
    dims = (in_dim,) + MLP_HIDDEN_DIMS + (out_dim,)
    layers = []
    for din, dout in zip(dims[:-1], dims[1:]):
        layers.append((xavier_uniform((din, dout), rng), np.zeros((1, dout))))
    return layers


def _init_mlp_step_net(in_dim, out_dim, rng):
    # same dead-step guard as the graph variant
    layers = _init_mlp(in_dim, out_dim, rng)
    w, b = layers[-1]
    layers[-1] = (np.abs(w), b)
    return layers


def init_mlp_usca(num_users: int, num_blocks: int, rng) -> MlpUscaParams:
    if num_blocks < 1:
        raise ValueError("need at least one block")
    L = num_users
    return MlpUscaParams(
        num_users=L,
        emb_net=_init_mlp(L * L + L, L, rng),
        p_nets=[_init_mlp(L * L + 2 * L, 2 * L, rng) for _ in range(num_blocks)],
        s_nets=[_init_mlp_step_net(L * L + 3 * L, L, rng) for _ in range(num_blocks)],
    )


def normalize_adjacency(H):
    """Symmetric degree normalization of a positive gain matrix."""
    H = np.asarray(H, dtype=np.float64)
    r = H.sum(axis=1)
    if np.any(r <= 0.0):
        raise ValueError("row sums must be positive")
    d = 1.0 / np.sqrt(r)
    return H * d[:, None] * d[None, :]


def _has_tensor(*objs):
    return any(isinstance(o, dc.Tensor) for o in objs)


def gcn_forward(S, X, weights):
    """Chained graph convolutions; ReLU between layers, linear output.

    Dispatches on the operand types: diffcore tensors build a graph,
    arrays run a plain numpy loop. The numpy path also accepts a stacked
    X of shape (B, L, d) sharing one S.
    """
    if _has_tensor(S, X, *weights):
        out = X if isinstance(X, dc.Tensor) else dc.constant(X)
        s_t = S if isinstance(S, dc.Tensor) else dc.constant(S)
        ws = [w if isinstance(w, dc.Tensor) else dc.constant(w) for w in weights]
        for q, theta in enumerate(ws):
            out = dc.matmul(dc.matmul(s_t, out), theta)
            if q < len(ws) - 1:
                out = dc.relu(out)
        return out
    out = np.asarray(X, dtype=np.float64)
    for q, theta in enumerate(weights):
        out = np.matmul(S, out) @ theta
        if q < len(weights) - 1:
            out = np.maximum(out, 0.0)
    return out


def _resolve_depth(params, depth):
    T = params.num_blocks
    if depth is None:
        return T
    if not 1 <= depth <= T:
        raise ValueError(f"depth must lie in [1, {T}]")
    return depth


def usca_forward(pm, H, params: UscaParams, depth=None, trace=False):
    """Unfolded forward pass; returns powers (L,) or (B, L) for vector pm."""
    H = np.asarray(H, dtype=np.float64)
    L = H.shape[0]
    S = normalize_adjacency(H)
    depth = _resolve_depth(params, depth)

    pm_arr = np.asarray(pm, dtype=np.float64)
    batched = pm_arr.ndim == 1
    emb = gcn_forward(S, np.ones((L, 1)), params.theta_emb)
    if batched:
        bound = pm_arr[:, None, None]
        p = np.broadcast_to(bound, (pm_arr.size, L, 1)).copy()
        Z = np.concatenate([np.broadcast_to(emb, p.shape), p], axis=-1)
    else:
        bound = float(pm_arr)
        p = np.full((L, 1), bound)
        Z = np.concatenate([emb, p], axis=-1)

    states = []
    for t in range(depth):
        out_p = gcn_forward(S, Z, params.theta_p[t])
        p_emb = out_p[..., :1]
        bp_raw = out_p[..., 1:]
        bp = np.clip(bp_raw, 0.0, bound)
        gamma_raw = gcn_forward(S, np.concatenate([Z, bp], axis=-1), params.theta_s[t])
        gamma = np.clip(gamma_raw, 0.0, 1.0)
        p_raw = p + gamma * (bp - p)
        p = np.clip(p_raw, 0.0, bound)
        Z = np.concatenate([p_emb, p], axis=-1)
        if trace:
            states.append(BlockState(Z=Z.copy(), bp=bp.copy(), gamma=gamma.copy(),
                                     bp_raw=bp_raw.copy(), gamma_raw=gamma_raw.copy(),
                                     p_raw=p_raw.copy()))
    result = p[..., 0]
    return (result, states) if trace else result


def plain_gcn_forward(pm, H, weights):
    """Single graph network on the full-power input, clipped to the budget."""
    H = np.asarray(H, dtype=np.float64)
    L = H.shape[0]
    S = normalize_adjacency(H)
    pm_arr = np.asarray(pm, dtype=np.float64)
    if pm_arr.ndim == 1:
        bound = pm_arr[:, None, None]
        x0 = np.broadcast_to(bound, (pm_arr.size, L, 1)).copy()
    else:
        bound = float(pm_arr)
        x0 = np.full((L, 1), bound)
    out = np.clip(gcn_forward(S, x0, weights), 0.0, bound)
    return out[..., 0]


def _mlp_apply(x, layers, graph):
    for k, (W, b) in enumerate(layers):
        if graph:
            W = W if isinstance(W, dc.Tensor) else dc.constant(W)
            b = b if isinstance(b, dc.Tensor) else dc.constant(b)
            x = dc.add_rowvec(dc.matmul(x, W), b)
            if k < len(layers) - 1:
                x = dc.relu(x)
        else:
            x = x @ W + b
            if k < len(layers) - 1:
                x = np.maximum(x, 0.0)
    return x


def mlp_usca_forward(pm, H, params: MlpUscaParams, depth=None):
    """Dense variant of the unfolded forward; fixed to the training L.

    Block states are carried in row form, stacked feature group by
    feature group (all embedding entries, then all powers).
    """
    H = np.asarray(H, dtype=np.float64)
    L = H.shape[0]
    if L != params.num_users:
        raise ValueError(
            f"dense model was built for L={params.num_users}, got L={L}")
    depth = _resolve_depth(params, depth)
    pm = float(pm)

    logh = np.log10(H).reshape(1, L * L)
    emb = _mlp_apply(np.concatenate([logh, np.ones((1, L))], axis=1),
                     params.emb_net, graph=False)
    p = np.full((1, L), pm)
    z = np.concatenate([emb, p], axis=1)
    for t in range(depth):
        out = _mlp_apply(np.concatenate([logh, z], axis=1), params.p_nets[t],
                         graph=False)
        p_emb, bp = out[:, :L], np.clip(out[:, L:], 0.0, pm)
        gamma_in = np.concatenate([logh, z, bp], axis=1)
        gamma = np.clip(_mlp_apply(gamma_in, params.s_nets[t], graph=False), 0.0, 1.0)
        p = np.clip(p + gamma * (bp - p), 0.0, pm)
        z = np.concatenate([p_emb, p], axis=1)
    return p[0]


def max_pow(pm, num_users: int):
    """Full-power baseline."""
    return np.full(num_users, float(pm))


# ---------------------------------------------------------------------------
# Graph builders for training. Batches stack samples block-diagonally so
# one matmul evaluates every sample with its own adjacency.

@dataclass
class BatchContext:
    """Precomputed constants for one training batch."""

    h_batch: np.ndarray
    pm: np.ndarray
    s_block: dc.Tensor
    ones_col: dc.Tensor
    p0_col: dc.Tensor
    bound_col: np.ndarray
    logh_rows: dc.Tensor
    ones_rows: dc.Tensor
    p0_rows: dc.Tensor
    bound_rows: np.ndarray

    @property
    def num_samples(self):
        return self.h_batch.shape[0]

    @property
    def num_users(self):
        return self.h_batch.shape[1]


def make_batch_context(h_batch, pm) -> BatchContext:
    h_batch = np.asarray(h_batch, dtype=np.float64)
    if h_batch.ndim != 3 or h_batch.shape[1] != h_batch.shape[2]:
        raise ValueError("expected a (B, L, L) stack of channel matrices")
    B, L, _ = h_batch.shape
    pm = np.broadcast_to(np.asarray(pm, dtype=np.float64), (B,))
    s_block = np.zeros((B * L, B * L))
    for b in range(B):
        s_block[b * L:(b + 1) * L, b * L:(b + 1) * L] = normalize_adjacency(h_batch[b])
    bound_rows = np.repeat(pm[:, None], L, axis=1)
    bound_col = bound_rows.reshape(B * L, 1)
    return BatchContext(
        h_batch=h_batch,
        pm=pm.copy(),
        s_block=dc.constant(s_block),
        ones_col=dc.constant(np.ones((B * L, 1))),
        p0_col=dc.constant(bound_col.copy()),
        bound_col=bound_col,
        logh_rows=dc.constant(np.log10(h_batch).reshape(B, L * L)),
        ones_rows=dc.constant(np.ones((B, L))),
        p0_rows=dc.constant(bound_rows.copy()),
        bound_rows=bound_rows,
    )


def _usca_graph_core(s_t, ones_col, p0_col, bound, params, depth):
    emb = gcn_forward(s_t, ones_col, params.theta_emb)
    p = p0_col
    Z = dc.row_concat(emb, p)
    for t in range(depth):
        out_p = gcn_forward(s_t, Z, params.theta_p[t])
        p_emb = dc.slice_cols(out_p, 0, 1)
        bp = dc.clamp(dc.slice_cols(out_p, 1, 2), 0.0, bound)
        gamma_in = dc.row_concat(Z, bp)
        gamma = dc.clamp(gcn_forward(s_t, gamma_in, params.theta_s[t]), 0.0, 1.0)
        p = dc.clamp(dc.add(p, dc.hadamard(gamma, dc.sub(bp, p))), 0.0, bound)
        Z = dc.row_concat(p_emb, p)
    return p


def batch_usca_graph(ctx: BatchContext, params: UscaParams, depth=None) -> dc.Tensor:
    """Differentiable batched forward; returns stacked powers (B*L, 1)."""
    depth = _resolve_depth(params, depth)
    return _usca_graph_core(ctx.s_block, ctx.ones_col, ctx.p0_col,
                            ctx.bound_col, params, depth)


def usca_graph(pm, H, params: UscaParams, depth=None) -> dc.Tensor:
    """Single-sample differentiable forward; returns powers (L, 1)."""
    ctx = make_batch_context(np.asarray(H, dtype=np.float64)[None], float(pm))
    return batch_usca_graph(ctx, params, depth)


def batch_plain_gcn_graph(ctx: BatchContext, weights) -> dc.Tensor:
    out = gcn_forward(ctx.s_block, ctx.p0_col, weights)
    return dc.clamp(out, 0.0, ctx.bound_col)


def batch_mlp_graph(ctx: BatchContext, params: MlpUscaParams, depth=None) -> dc.Tensor:
    """Differentiable dense-variant forward; returns powers as rows (B, L)."""
    L = ctx.num_users
    if L != params.num_users:
        raise ValueError(
            f"dense model was built for L={params.num_users}, got L={L}")
    depth = _resolve_depth(params, depth)
    emb = _mlp_apply(dc.row_concat(ctx.logh_rows, ctx.ones_rows),
                     params.emb_net, graph=True)
    p = ctx.p0_rows
    z = dc.row_concat(emb, p)
    for t in range(depth):
        out = _mlp_apply(dc.row_concat(ctx.logh_rows, z), params.p_nets[t],
                         graph=True)
        p_emb = dc.slice_cols(out, 0, L)
        bp = dc.clamp(dc.slice_cols(out, L, 2 * L), 0.0, ctx.bound_rows)
        gamma_in = dc.row_concat(ctx.logh_rows, z, bp)
        gamma = dc.clamp(_mlp_apply(gamma_in, params.s_nets[t], graph=True), 0.0, 1.0)
        p = dc.clamp(dc.add(p, dc.hadamard(gamma, dc.sub(bp, p))), 0.0,
                     ctx.bound_rows)
        z = dc.row_concat(p_emb, p)
    return p


# ---------------------------------------------------------------------------
# Flat parameter views for optimizers and checkpoints. Key order is the
# draw order at initialization, so saved models restore byte-identically.

def flatten_params(params):
    """Name->array view of any model's weights, in a stable order."""
    flat = {}
    if isinstance(params, UscaParams):
        for q, w in enumerate(params.theta_emb):
            flat[f"emb.{q}"] = w
        for t in range(params.num_blocks):
            for q, w in enumerate(params.theta_p[t]):
                flat[f"p{t}.{q}"] = w
            for q, w in enumerate(params.theta_s[t]):
                flat[f"s{t}.{q}"] = w
    elif isinstance(params, MlpUscaParams):
        for q, (W, b) in enumerate(params.emb_net):
            flat[f"emb.{q}.w"], flat[f"emb.{q}.b"] = W, b
        for t in range(params.num_blocks):
            for q, (W, b) in enumerate(params.p_nets[t]):
                flat[f"p{t}.{q}.w"], flat[f"p{t}.{q}.b"] = W, b
            for q, (W, b) in enumerate(params.s_nets[t]):
                flat[f"s{t}.{q}.w"], flat[f"s{t}.{q}.b"] = W, b
    elif isinstance(params, list):
        for q, w in enumerate(params):
            flat[f"gcn.{q}"] = w
    else:
        raise TypeError(f"unsupported parameter container: {type(params)!r}")
    return flat


def structure_params(flat, variant, num_blocks=None, num_users=None):
    """Rebuild a model container from a flat view; values pass through,
    so the same code restructures arrays and diffcore tensors alike."""
    if variant == VARIANT_USCA:
        n_layers = len(EMB_SPEC.layer_dims)
        emb = [flat[f"emb.{q}"] for q in range(n_layers)]
        tp = [[flat[f"p{t}.{q}"] for q in range(n_layers)] for t in range(num_blocks)]
        ts = [[flat[f"s{t}.{q}"] for q in range(n_layers)] for t in range(num_blocks)]
        return UscaParams(theta_emb=emb, theta_p=tp, theta_s=ts)
    if variant == VARIANT_MLP:
        n_layers = len(MLP_HIDDEN_DIMS) + 1
        emb = [(flat[f"emb.{q}.w"], flat[f"emb.{q}.b"]) for q in range(n_layers)]
        pn = [[(flat[f"p{t}.{q}.w"], flat[f"p{t}.{q}.b"]) for q in range(n_layers)]
              for t in range(num_blocks)]
        sn = [[(flat[f"s{t}.{q}.w"], flat[f"s{t}.{q}.b"]) for q in range(n_layers)]
              for t in range(num_blocks)]
        return MlpUscaParams(num_users=num_users, emb_net=emb, p_nets=pn, s_nets=sn)
    if variant == VARIANT_GCN:
        return [flat[f"gcn.{q}"] for q in range(len(PLAIN_SPEC.layer_dims))]
    raise ValueError(f"unknown model variant: {variant!r}")


def parameter_count(params) -> int:
    return sum(int(np.asarray(v).size) for v in flatten_params(params).values())


def model_meta(params) -> dict:
    """Architecture descriptor stored next to checkpoint weights."""
    if isinstance(params, UscaParams):
        return {"variant": VARIANT_USCA, "num_blocks": params.num_blocks,
                "hidden_dims": list(HIDDEN_DIMS), "layers_per_net": "5 hidden + 1 linear"}
    if isinstance(params, MlpUscaParams):
        return {"variant": VARIANT_MLP, "num_blocks": params.num_blocks,
                "num_users": params.num_users, "hidden_dims": list(MLP_HIDDEN_DIMS)}
    if isinstance(params, list):
        return {"variant": VARIANT_GCN, "hidden_dims": list(PLAIN_GCN_DIMS)}
    raise TypeError(f"unsupported parameter container: {type(params)!r}")


def save_model(path, params, extra_meta=None) -> None:
    meta = model_meta(params)
    if extra_meta:
        meta.update(extra_meta)
    dc.save_checkpoint(path, flatten_params(params), meta)


def load_model(path):
    flat, meta = dc.load_checkpoint(path)
    params = structure_params(flat, meta["variant"],
                              num_blocks=meta.get("num_blocks"),
                              num_users=meta.get("num_users"))
    return params, meta
