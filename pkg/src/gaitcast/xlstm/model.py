"""Stacked xLSTM regressor.

Layout: input embedding -> [pre-LayerNorm -> (sLSTM | mLSTM) block ->
residual add] per layer -> final LayerNorm -> linear head. The sLSTM
block runs a causal depthwise convolution (SiLU) in front of the cell;
both block types end with GroupNorm and a GELU up/down projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import cells, ops


@dataclass(frozen=True)
class XlstmConfig:
    input_dim: int = 54
    output_dim: int = 16
    hidden_size: int = 32
    num_layers: int = 2
    num_heads: int = 4
    conv_kernel: int = 4
    block_pattern: tuple[str, ...] = ("m", "s")
    slstm_proj_factor: float = 4.0 / 3.0
    mlstm_proj_factor: float = 2.0
    learning_rate: float = 0.01
    train_steps: int = 20
    seed: int = 0
    seq_len: int = 64

    def __post_init__(self):
        if self.hidden_size % self.num_heads != 0:
            raise ValueError("hidden_size must be divisible by num_heads")
        object.__setattr__(self, "block_pattern", tuple(self.block_pattern))
        if len(self.block_pattern) != self.num_layers:
            raise ValueError("block_pattern length must equal num_layers")
        if any(b not in ("s", "m") for b in self.block_pattern):
            raise ValueError("block_pattern entries must be 's' or 'm'")

    def proj_dim(self, block: str) -> int:
        factor = self.slstm_proj_factor if block == "s" else self.mlstm_proj_factor
        return max(1, int(round(factor * self.hidden_size)))


def _uniform_init(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(cfg: XlstmConfig) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(cfg.seed)
    hidden = cfg.hidden_size
    head_dim = hidden // cfg.num_heads
    p: dict[str, np.ndarray] = {}
    p["embed.w"] = _uniform_init(rng, (hidden, cfg.input_dim), cfg.input_dim)
    p["embed.b"] = np.zeros(hidden)
    for layer, block in enumerate(cfg.block_pattern):
        pre = f"layer{layer}"
        p[f"{pre}.ln.g"] = np.ones(hidden)
        p[f"{pre}.ln.b"] = np.zeros(hidden)
        if block == "s":
            p[f"{pre}.conv.w"] = _uniform_init(rng, (hidden, cfg.conv_kernel), cfg.conv_kernel)
            p[f"{pre}.conv.b"] = np.zeros(hidden)
            for g in cells.SLSTM_GATES:
                p[f"{pre}.slstm.w_{g}"] = _uniform_init(rng, (hidden, hidden), hidden)
                p[f"{pre}.slstm.r_{g}"] = _uniform_init(
                    rng, (cfg.num_heads, head_dim, head_dim), head_dim)
                p[f"{pre}.slstm.b_{g}"] = np.zeros(hidden)
            p[f"{pre}.slstm.b_f"] = np.ones(hidden)  # retain memory at init
        else:
            for g in ("q", "k", "v", "o"):
                p[f"{pre}.mlstm.w_{g}"] = _uniform_init(rng, (hidden, hidden), hidden)
                p[f"{pre}.mlstm.b_{g}"] = np.zeros(hidden)
            for g in ("i", "f"):
                p[f"{pre}.mlstm.w_{g}"] = _uniform_init(rng, (cfg.num_heads, hidden), hidden)
                p[f"{pre}.mlstm.b_{g}"] = np.zeros(cfg.num_heads)
            p[f"{pre}.mlstm.b_f"] = np.ones(cfg.num_heads)
        p[f"{pre}.gn.g"] = np.ones(hidden)
        p[f"{pre}.gn.b"] = np.zeros(hidden)
        proj = cfg.proj_dim(block)
        p[f"{pre}.up.w"] = _uniform_init(rng, (proj, hidden), hidden)
        p[f"{pre}.up.b"] = np.zeros(proj)
        p[f"{pre}.down.w"] = _uniform_init(rng, (hidden, proj), proj)
        p[f"{pre}.down.b"] = np.zeros(hidden)
    p["final.ln.g"] = np.ones(hidden)
    p["final.ln.b"] = np.zeros(hidden)
    p["head.w"] = _uniform_init(rng, (cfg.output_dim, hidden), hidden)
    p["head.b"] = np.zeros(cfg.output_dim)
    return p


def _sub(params: dict, prefix: str) -> dict:
    plen = len(prefix)
    return {k[plen:]: v for k, v in params.items() if k.startswith(prefix)}


@dataclass
class XlstmModel:
    config: XlstmConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.params:
            self.params = init_params(self.config)

    def forward(self, batch: np.ndarray) -> np.ndarray:
        out, _ = self.forward_with_cache(batch)
        return out

    def forward_with_cache(self, batch: np.ndarray):
        cfg = self.config
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != cfg.input_dim:
            raise ValueError(f"expected [B x T x {cfg.input_dim}], got {x.shape}")
        p = self.params
        caches = []

        stream, emb_cache = ops.linear_fwd(x, p["embed.w"], p["embed.b"])
        for layer, block in enumerate(cfg.block_pattern):
            pre = f"layer{layer}"
            xn, ln_cache = ops.layernorm_fwd(stream, p[f"{pre}.ln.g"], p[f"{pre}.ln.b"])
            lc = {"ln": ln_cache, "block": block}
            if block == "s":
                conv, conv_cache = ops.causal_conv_fwd(
                    xn, p[f"{pre}.conv.w"], p[f"{pre}.conv.b"])
                act, silu_cache = ops.silu_fwd(conv)
                h, cell_cache = cells.slstm_seq_fwd(
                    act, _sub(p, f"{pre}.slstm."), cfg.num_heads)
                lc.update(conv=conv_cache, silu=silu_cache, cell=cell_cache)
            else:
                h, cell_cache = cells.mlstm_seq_fwd(
                    xn, _sub(p, f"{pre}.mlstm."), cfg.num_heads)
                lc.update(cell=cell_cache)
            g, gn_cache = ops.groupnorm_fwd(
                h, p[f"{pre}.gn.g"], p[f"{pre}.gn.b"], cfg.num_heads)
            up, up_cache = ops.linear_fwd(g, p[f"{pre}.up.w"], p[f"{pre}.up.b"])
            act2, gelu_cache = ops.gelu_fwd(up)
            down, down_cache = ops.linear_fwd(act2, p[f"{pre}.down.w"], p[f"{pre}.down.b"])
            lc.update(gn=gn_cache, up=up_cache, gelu=gelu_cache, down=down_cache)
            stream = stream + down
            caches.append(lc)

        fin, fin_cache = ops.layernorm_fwd(stream, p["final.ln.g"], p["final.ln.b"])
        out, head_cache = ops.linear_fwd(fin, p["head.w"], p["head.b"])
        return out, {"emb": emb_cache, "layers": caches,
                     "final": fin_cache, "head": head_cache}

    def backward(self, dout: np.ndarray, cache) -> dict[str, np.ndarray]:
        cfg = self.config
        grads: dict[str, np.ndarray] = {}

        dfin, grads["head.w"], grads["head.b"] = ops.linear_bwd(dout, cache["head"])
        dstream, grads["final.ln.g"], grads["final.ln.b"] = ops.layernorm_bwd(
            dfin, cache["final"])

        for layer in range(cfg.num_layers - 1, -1, -1):
            pre = f"layer{layer}"
            lc = cache["layers"][layer]
            ddown = dstream  # residual: gradient flows both through and around
            dact2, grads[f"{pre}.down.w"], grads[f"{pre}.down.b"] = ops.linear_bwd(
                ddown, lc["down"])
            dup = ops.gelu_bwd(dact2, lc["gelu"])
            dg, grads[f"{pre}.up.w"], grads[f"{pre}.up.b"] = ops.linear_bwd(dup, lc["up"])
            dh, grads[f"{pre}.gn.g"], grads[f"{pre}.gn.b"] = ops.groupnorm_bwd(
                dg, lc["gn"])
            if lc["block"] == "s":
                dact, cell_grads = cells.slstm_seq_bwd(dh, lc["cell"])
                for name, grad in cell_grads.items():
                    grads[f"{pre}.slstm.{name}"] = grad
                dconv = ops.silu_bwd(dact, lc["silu"])
                dxn, grads[f"{pre}.conv.w"], grads[f"{pre}.conv.b"] = ops.causal_conv_bwd(
                    dconv, lc["conv"])
            else:
                dxn, cell_grads = cells.mlstm_seq_bwd(dh, lc["cell"])
                for name, grad in cell_grads.items():
                    grads[f"{pre}.mlstm.{name}"] = grad
            dres, grads[f"{pre}.ln.g"], grads[f"{pre}.ln.b"] = ops.layernorm_bwd(
                dxn, lc["ln"])
            dstream = dstream + dres

        _dx, grads["embed.w"], grads["embed.b"] = ops.linear_bwd(dstream, cache["emb"])
        return grads
