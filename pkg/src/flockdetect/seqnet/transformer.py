"""Pre-norm Transformer encoder with sinusoidal positions and mean-pool readout.

Each block is x = x + Attn(LN(x)); x = x + FFN(LN(x)) with GELU feed-forward.
"""

from __future__ import annotations

import numpy as np

from .ops import (
    dropout_mask,
    gelu,
    gelu_grad,
    layernorm_backward,
    layernorm_forward,
    position_encoding,
    softmax_backward,
    softmax_last,
    uniform_init,
)


def init_params(config, rng: np.random.Generator) -> dict[str, np.ndarray]:
    H = config.hidden_size
    F = config.ff_multiplier * H
    params: dict[str, np.ndarray] = {
        "W_in": uniform_init(rng, (config.input_dim, H), config.input_dim),
        "b_in": np.zeros(H),
    }
    for layer in range(config.num_layers):
        params[f"ln1_g{layer}"] = np.ones(H)
        params[f"ln1_b{layer}"] = np.zeros(H)
        for name in ("q", "k", "v", "o"):
            params[f"W_{name}{layer}"] = uniform_init(rng, (H, H), H)
            params[f"b_{name}{layer}"] = np.zeros(H)
        params[f"ln2_g{layer}"] = np.ones(H)
        params[f"ln2_b{layer}"] = np.zeros(H)
        params[f"W_f1{layer}"] = uniform_init(rng, (H, F), H)
        params[f"b_f1{layer}"] = np.zeros(F)
        params[f"W_f2{layer}"] = uniform_init(rng, (F, H), F)
        params[f"b_f2{layer}"] = np.zeros(H)
    params["w_out"] = uniform_init(rng, (H,), H)
    params["b_out"] = np.zeros(1)
    return params


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    B, L, H = x.shape
    return x.reshape(B, L, heads, H // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    B, nh, L, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, L, nh * dh)


def forward(params, config, x, train=False, rng=None):
    B, L, _ = x.shape
    H = config.hidden_size
    nh = config.heads
    scale = 1.0 / np.sqrt(H // nh)
    use_dropout = train and config.dropout > 0

    trace = []
    cur = x @ params["W_in"] + params["b_in"]
    if config.position_encoding:
        cur = cur + position_encoding(L, H)
    trace.append(("input_projection", cur))

    blocks = []
    for layer in range(config.num_layers):
        blk: dict = {"x_in": cur}
        a, blk["ln1"] = layernorm_forward(
            cur, params[f"ln1_g{layer}"], params[f"ln1_b{layer}"])
        blk["a"] = a
        qh = _split_heads(a @ params[f"W_q{layer}"] + params[f"b_q{layer}"], nh)
        kh = _split_heads(a @ params[f"W_k{layer}"] + params[f"b_k{layer}"], nh)
        vh = _split_heads(a @ params[f"W_v{layer}"] + params[f"b_v{layer}"], nh)
        probs = softmax_last(qh @ kh.transpose(0, 1, 3, 2) * scale)
        ctx = _merge_heads(probs @ vh)
        blk.update(qh=qh, kh=kh, vh=vh, probs=probs, ctx=ctx)
        attn = ctx @ params[f"W_o{layer}"] + params[f"b_o{layer}"]
        blk["attn_mask"] = dropout_mask(rng, attn.shape, config.dropout) if use_dropout else None
        if blk["attn_mask"] is not None:
            attn = attn * blk["attn_mask"]
        x1 = cur + attn
        blk["x1"] = x1
        trace.append((f"block{layer}.attention", x1))

        a2, blk["ln2"] = layernorm_forward(
            x1, params[f"ln2_g{layer}"], params[f"ln2_b{layer}"])
        blk["a2"] = a2
        u_pre = a2 @ params[f"W_f1{layer}"] + params[f"b_f1{layer}"]
        u = gelu(u_pre)
        blk["u"] = u
        blk["u_pre"] = u_pre
        ffn = u @ params[f"W_f2{layer}"] + params[f"b_f2{layer}"]
        blk["ffn_mask"] = dropout_mask(rng, ffn.shape, config.dropout) if use_dropout else None
        if blk["ffn_mask"] is not None:
            ffn = ffn * blk["ffn_mask"]
        cur = x1 + ffn
        trace.append((f"block{layer}.ffn", cur))
        blocks.append(blk)

    pooled = cur.mean(axis=1)
    logits = pooled @ params["w_out"] + params["b_out"][0]
    trace.append(("logits", logits))
    return logits, {"x": x, "blocks": blocks, "pooled": pooled, "L": L, "trace": trace}


def backward(params, config, cache, dlogits):
    B = dlogits.shape[0]
    L = cache["L"]
    nh = config.heads
    scale = 1.0 / np.sqrt(config.hidden_size // nh)
    grads = {}
    grads["w_out"] = cache["pooled"].T @ dlogits
    grads["b_out"] = np.array([dlogits.sum()])

    dcur = np.broadcast_to(
        np.outer(dlogits, params["w_out"])[:, None, :] / L,
        (B, L, params["w_out"].shape[0]),
    ).copy()

    for layer in reversed(range(config.num_layers)):
        blk = cache["blocks"][layer]
        # Feed-forward branch: cur = x1 + ffn(LN2(x1))
        dffn = dcur if blk["ffn_mask"] is None else dcur * blk["ffn_mask"]
        grads[f"W_f2{layer}"] = np.tensordot(blk["u"], dffn, axes=([0, 1], [0, 1]))
        grads[f"b_f2{layer}"] = dffn.sum(axis=(0, 1))
        du = (dffn @ params[f"W_f2{layer}"].T) * gelu_grad(blk["u_pre"])
        grads[f"W_f1{layer}"] = np.tensordot(blk["a2"], du, axes=([0, 1], [0, 1]))
        grads[f"b_f1{layer}"] = du.sum(axis=(0, 1))
        da2 = du @ params[f"W_f1{layer}"].T
        dx1_ln, grads[f"ln2_g{layer}"], grads[f"ln2_b{layer}"] = layernorm_backward(
            da2, blk["ln2"])
        dx1 = dcur + dx1_ln

        # Attention branch: x1 = x_in + attn(LN1(x_in))
        dattn = dx1 if blk["attn_mask"] is None else dx1 * blk["attn_mask"]
        grads[f"W_o{layer}"] = np.tensordot(blk["ctx"], dattn, axes=([0, 1], [0, 1]))
        grads[f"b_o{layer}"] = dattn.sum(axis=(0, 1))
        dctx = _split_heads(dattn @ params[f"W_o{layer}"].T, nh)
        dprobs = dctx @ blk["vh"].transpose(0, 1, 3, 2)
        dvh = blk["probs"].transpose(0, 1, 3, 2) @ dctx
        dscores = softmax_backward(blk["probs"], dprobs) * scale
        dqh = dscores @ blk["kh"]
        dkh = dscores.transpose(0, 1, 3, 2) @ blk["qh"]

        da = np.zeros_like(blk["a"])
        for name, dheads in (("q", dqh), ("k", dkh), ("v", dvh)):
            dmerged = _merge_heads(dheads)
            grads[f"W_{name}{layer}"] = np.tensordot(
                blk["a"], dmerged, axes=([0, 1], [0, 1]))
            grads[f"b_{name}{layer}"] = dmerged.sum(axis=(0, 1))
            da += dmerged @ params[f"W_{name}{layer}"].T
        dxin_ln, grads[f"ln1_g{layer}"], grads[f"ln1_b{layer}"] = layernorm_backward(
            da, blk["ln1"])
        dcur = dx1 + dxin_ln

    grads["W_in"] = np.tensordot(cache["x"], dcur, axes=([0, 1], [0, 1]))
    grads["b_in"] = dcur.sum(axis=(0, 1))
    return grads
