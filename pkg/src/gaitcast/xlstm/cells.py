"""sLSTM and mLSTM recurrent cells with stabilized exponential gating.

The cell-level steps (`slstm_cell_step`, `mlstm_cell_step`) operate on
gate preactivations directly so tests can force gates; the sequence
functions add the input/recurrent projections and implement full
backpropagation through time.

Stabilizer: m_t = max(f_pre + m_prev, i_pre), with gates
i = exp(i_pre - m_t) and f = exp(f_pre + m_prev - m_t), which keeps every
state finite even for preactivations of magnitude several hundred.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ops import block_diag_bwd, block_diag_fwd, sigmoid


@dataclass
class SlstmState:
    """Scalar-memory state: cell, normalizer, hidden, stabilizer ([... x H])."""

    c: np.ndarray
    n: np.ndarray
    h: np.ndarray
    m: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "SlstmState":
        return cls(*(np.zeros(shape) for _ in range(4)))


@dataclass
class MlstmState:
    """Matrix-memory state per head: memory [... x heads x d x d],
    normalizer [... x heads x d], stabilizer [... x heads]."""

    c: np.ndarray
    n: np.ndarray
    m: np.ndarray

    @classmethod
    def zeros(cls, batch_shape, heads: int, head_dim: int) -> "MlstmState":
        batch_shape = tuple(batch_shape)
        return cls(
            np.zeros(batch_shape + (heads, head_dim, head_dim)),
            np.zeros(batch_shape + (heads, head_dim)),
            np.zeros(batch_shape + (heads,)),
        )


def _stabilized_gates(i_pre, f_pre, m_prev):
    m_new = np.maximum(f_pre + m_prev, i_pre)
    i = np.exp(i_pre - m_new)
    f = np.exp(f_pre + m_prev - m_new)
    return i, f, m_new


def slstm_cell_step(i_pre, f_pre, z_pre, o_pre, state: SlstmState
                    ) -> tuple[np.ndarray, SlstmState]:
    """One sLSTM step from gate preactivations."""
    i, f, m_new = _stabilized_gates(i_pre, f_pre, state.m)
    c_new = f * state.c + i * np.tanh(z_pre)
    n_new = f * state.n + i
    h_new = sigmoid(o_pre) * c_new / n_new
    return h_new, SlstmState(c=c_new, n=n_new, h=h_new, m=m_new)


def mlstm_cell_step(q, k, v, i_pre, f_pre, o_pre, state: MlstmState
                    ) -> tuple[np.ndarray, MlstmState]:
    """One mLSTM step from per-head projections and gate preactivations.

    q, k, v are [... x heads x d]; i_pre, f_pre are [... x heads];
    o_pre is [... x heads*d]. k is expected pre-scaled by 1/sqrt(d).
    """
    i, f, m_new = _stabilized_gates(i_pre, f_pre, state.m)
    c_new = f[..., None, None] * state.c + i[..., None, None] * (
        v[..., :, None] * k[..., None, :])
    n_new = f[..., None] * state.n + i[..., None] * k
    dot = np.sum(n_new * q, axis=-1)
    denom = np.maximum(np.abs(dot), 1.0)
    h_tilde = np.einsum("...xy,...y->...x", c_new, q) / denom[..., None]
    h_new = sigmoid(o_pre) * h_tilde.reshape(*h_tilde.shape[:-2], -1)
    return h_new, MlstmState(c=c_new, n=n_new, m=m_new)


def _gate_pre_grads(di, df, i, f, forget_wins):
    """Backprop through the stabilized exponential gate pair.

    forget_wins is the max-branch indicator (f_pre + m_prev >= i_pre).
    Returns (d_i_pre, d_f_pre, d_m_prev); f_pre and m_prev enter
    symmetrically so their gradients coincide.
    """
    a = forget_wins.astype(np.float64)
    d_i_pre = a * di * i - (1.0 - a) * df * f
    d_f_pre = -a * di * i + (1.0 - a) * df * f
    return d_i_pre, d_f_pre, d_f_pre.copy()


# ---------------------------------------------------------------------------
# sLSTM over a sequence: dense input projections + block-diagonal recurrence

SLSTM_GATES = ("i", "f", "z", "o")


def slstm_seq_fwd(x, params, heads):
    """x [B x T x Din] -> h [B x T x H].

    params: w_g [H x Din], r_g [heads x dh x dh], b_g [H] for g in i,f,z,o.
    """
    n_batch, n_time, _ = x.shape
    hidden = params["b_i"].shape[0]
    state = SlstmState.zeros((n_batch, hidden))
    h_out = np.empty((n_batch, n_time, hidden))
    steps = []
    for t in range(n_time):
        x_t = x[:, t, :]
        pre = {}
        rec_caches = {}
        for g in SLSTM_GATES:
            rec, rec_cache = block_diag_fwd(state.h, params[f"r_{g}"])
            pre[g] = x_t @ params[f"w_{g}"].T + rec + params[f"b_{g}"]
            rec_caches[g] = rec_cache
        i, f, m_new = _stabilized_gates(pre["i"], pre["f"], state.m)
        z = np.tanh(pre["z"])
        o = sigmoid(pre["o"])
        c_new = f * state.c + i * z
        n_new = f * state.n + i
        h_new = o * c_new / n_new
        steps.append({
            "x_t": x_t, "rec_caches": rec_caches,
            "i": i, "f": f, "z": z, "o": o,
            "c": c_new, "n": n_new,
            "c_prev": state.c, "n_prev": state.n, "h_prev": state.h,
            "forget_wins": pre["f"] + state.m >= pre["i"],
        })
        state = SlstmState(c=c_new, n=n_new, h=h_new, m=m_new)
        h_out[:, t, :] = h_new
    return h_out, (steps, params, x.shape)


def slstm_seq_bwd(dh_out, cache):
    steps, params, x_shape = cache
    grads = {key: np.zeros_like(val) for key, val in params.items()}
    dx = np.zeros(x_shape)
    shape = dh_out.shape[0], dh_out.shape[2]
    dh_next = np.zeros(shape)
    dc_next = np.zeros(shape)
    dn_next = np.zeros(shape)
    dm_next = np.zeros(shape)
    for t in range(len(steps) - 1, -1, -1):
        s = steps[t]
        dh = dh_out[:, t, :] + dh_next
        i, f, z, o, c, n = s["i"], s["f"], s["z"], s["o"], s["c"], s["n"]

        do = dh * c / n
        dc = dh * o / n + dc_next
        dn = -dh * o * c / (n * n) + dn_next

        dz = dc * i
        di = dc * z + dn
        df = dc * s["c_prev"] + dn * s["n_prev"]

        # m_new = max(f_pre + m_prev, i_pre) also feeds the next step (dm_next).
        a = s["forget_wins"].astype(np.float64)
        d_i_pre, d_f_pre, dm_prev = _gate_pre_grads(di, df, i, f, s["forget_wins"])
        d_i_pre += dm_next * (1.0 - a)
        d_f_pre += dm_next * a
        dm_prev += dm_next * a

        d_z_pre = dz * (1.0 - z * z)
        d_o_pre = do * o * (1.0 - o)

        dh_prev = np.zeros(shape)
        for g, dpre in zip(SLSTM_GATES, (d_i_pre, d_f_pre, d_z_pre, d_o_pre)):
            grads[f"w_{g}"] += dpre.T @ s["x_t"]
            grads[f"b_{g}"] += dpre.sum(axis=0)
            dx[:, t, :] += dpre @ params[f"w_{g}"]
            dh_rec, dr = block_diag_bwd(dpre, s["rec_caches"][g])
            grads[f"r_{g}"] += dr
            dh_prev += dh_rec

        dh_next = dh_prev
        dc_next = dc * f
        dn_next = dn * f
        dm_next = dm_prev
    return dx, grads


# ---------------------------------------------------------------------------
# mLSTM over a sequence: all projections from the current input


def mlstm_seq_fwd(x, params, heads):
    """x [B x T x Din] -> h [B x T x H].

    params: w_q/w_k/w_v/w_o [H x Din] + b_q/b_k/b_v/b_o [H];
    w_i/w_f [heads x Din] + b_i/b_f [heads].
    """
    n_batch, n_time, _ = x.shape
    hidden = params["b_q"].shape[0]
    head_dim = hidden // heads
    scale = 1.0 / np.sqrt(head_dim)
    state = MlstmState.zeros((n_batch,), heads, head_dim)
    h_out = np.empty((n_batch, n_time, hidden))
    steps = []
    for t in range(n_time):
        x_t = x[:, t, :]
        q = (x_t @ params["w_q"].T + params["b_q"]).reshape(n_batch, heads, head_dim)
        k = (x_t @ params["w_k"].T + params["b_k"]).reshape(n_batch, heads, head_dim) * scale
        v = (x_t @ params["w_v"].T + params["b_v"]).reshape(n_batch, heads, head_dim)
        i_pre = x_t @ params["w_i"].T + params["b_i"]
        f_pre = x_t @ params["w_f"].T + params["b_f"]
        o_pre = x_t @ params["w_o"].T + params["b_o"]

        i, f, m_new = _stabilized_gates(i_pre, f_pre, state.m)
        c_new = f[..., None, None] * state.c + i[..., None, None] * (
            v[..., :, None] * k[..., None, :])
        n_new = f[..., None] * state.n + i[..., None] * k
        dot = np.sum(n_new * q, axis=-1)
        denom = np.maximum(np.abs(dot), 1.0)
        cq = np.einsum("nhxy,nhy->nhx", c_new, q)
        h_tilde = cq / denom[..., None]
        o = sigmoid(o_pre)
        h_new = o * h_tilde.reshape(n_batch, hidden)

        steps.append({
            "x_t": x_t, "q": q, "k": k, "v": v, "i": i, "f": f, "o": o,
            "c": c_new, "n": n_new, "c_prev": state.c, "n_prev": state.n,
            "dot": dot, "denom": denom, "cq": cq, "h_tilde": h_tilde,
            "forget_wins": f_pre + state.m >= i_pre,
        })
        state = MlstmState(c=c_new, n=n_new, m=m_new)
        h_out[:, t, :] = h_new
    return h_out, (steps, params, x.shape, heads)


def mlstm_seq_bwd(dh_out, cache):
    steps, params, x_shape, heads = cache
    grads = {key: np.zeros_like(val) for key, val in params.items()}
    dx = np.zeros(x_shape)
    n_batch, _, _ = x_shape
    hidden = params["b_q"].shape[0]
    head_dim = hidden // heads
    scale = 1.0 / np.sqrt(head_dim)

    dc_next = np.zeros((n_batch, heads, head_dim, head_dim))
    dn_next = np.zeros((n_batch, heads, head_dim))
    dm_next = np.zeros((n_batch, heads))
    for t in range(len(steps) - 1, -1, -1):
        s = steps[t]
        dh = dh_out[:, t, :]
        q, k, v, i, f, o = s["q"], s["k"], s["v"], s["i"], s["f"], s["o"]

        do = dh * s["h_tilde"].reshape(n_batch, hidden)
        d_o_pre = do * o * (1.0 - o)
        dh_tilde = (dh * o).reshape(n_batch, heads, head_dim)

        dcq = dh_tilde / s["denom"][..., None]
        ddenom = -np.sum(dh_tilde * s["cq"], axis=-1) / (s["denom"] ** 2)
        ddot = ddenom * np.sign(s["dot"]) * (np.abs(s["dot"]) > 1.0)

        dc = dcq[..., :, None] * q[..., None, :] + dc_next
        dq = np.einsum("nhxy,nhx->nhy", s["c"], dcq) + ddot[..., None] * s["n"]
        dn = ddot[..., None] * q + dn_next

        di = (np.sum(dc * (v[..., :, None] * k[..., None, :]), axis=(-2, -1))
              + np.sum(dn * k, axis=-1))
        df = (np.sum(dc * s["c_prev"], axis=(-2, -1))
              + np.sum(dn * s["n_prev"], axis=-1))
        dv = i[..., None] * np.einsum("nhxy,nhy->nhx", dc, k)
        dk = i[..., None] * (np.einsum("nhxy,nhx->nhy", dc, v) + dn)

        a = s["forget_wins"].astype(np.float64)
        d_i_pre, d_f_pre, dm_prev = _gate_pre_grads(di, df, i, f, s["forget_wins"])
        d_i_pre += dm_next * (1.0 - a)
        d_f_pre += dm_next * a
        dm_prev += dm_next * a

        dq_flat = dq.reshape(n_batch, hidden)
        dk_flat = (dk * scale).reshape(n_batch, hidden)
        dv_flat = dv.reshape(n_batch, hidden)
        for name, grad in (("q", dq_flat), ("k", dk_flat), ("v", dv_flat),
                           ("i", d_i_pre), ("f", d_f_pre), ("o", d_o_pre)):
            grads[f"w_{name}"] += grad.T @ s["x_t"]
            grads[f"b_{name}"] += grad.sum(axis=0)
            dx[:, t, :] += grad @ params[f"w_{name}"]

        dc_next = dc * f[..., None, None]
        dn_next = dn * f[..., None]
        dm_next = dm_prev
    return dx, grads
