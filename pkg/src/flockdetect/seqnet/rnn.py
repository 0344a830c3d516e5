"""Elman RNN with tanh hidden state, last-step affine readout."""

from __future__ import annotations

import numpy as np

from .ops import dropout_mask, uniform_init


def init_params(config, rng: np.random.Generator) -> dict[str, np.ndarray]:
    H = config.hidden_size
    params: dict[str, np.ndarray] = {}
    fan_in = config.input_dim
    for layer in range(config.num_layers):
        params[f"W_x{layer}"] = uniform_init(rng, (fan_in, H), fan_in)
        params[f"W_h{layer}"] = uniform_init(rng, (H, H), H)
        params[f"b{layer}"] = np.zeros(H)
        fan_in = H
    params["w_out"] = uniform_init(rng, (H,), H)
    params["b_out"] = np.zeros(1)
    return params


def forward(params, config, x, train=False, rng=None):
    """x: (B, L, D) -> logits (B,). Returns (logits, cache)."""
    B, L, _ = x.shape
    H = config.hidden_size
    trace = []
    layers = []
    inp = x
    for layer in range(config.num_layers):
        W_x, W_h, b = params[f"W_x{layer}"], params[f"W_h{layer}"], params[f"b{layer}"]
        pre = inp @ W_x + b
        hs = np.empty((B, L, H))
        prev = np.zeros((B, H))
        for t in range(L):
            prev = np.tanh(pre[:, t] + prev @ W_h)
            hs[:, t] = prev
        entry = {"inp": inp, "h": hs, "mask": None}
        trace.append((f"layer{layer}.h", hs))
        out = hs
        if train and config.dropout > 0 and layer < config.num_layers - 1:
            entry["mask"] = dropout_mask(rng, hs.shape, config.dropout)
            out = hs * entry["mask"]
        layers.append(entry)
        inp = out
    h_last = inp[:, -1]
    logits = h_last @ params["w_out"] + params["b_out"][0]
    trace.append(("logits", logits))
    return logits, {"layers": layers, "h_last": h_last, "trace": trace}


def backward(params, config, cache, dlogits):
    B = dlogits.shape[0]
    grads = {name: np.zeros_like(p) for name, p in params.items()}
    grads["w_out"] = cache["h_last"].T @ dlogits
    grads["b_out"] = np.array([dlogits.sum()])

    L = cache["layers"][0]["h"].shape[1]
    H = config.hidden_size
    dout = np.zeros((B, L, H))
    dout[:, -1] = np.outer(dlogits, params["w_out"])

    for layer in reversed(range(config.num_layers)):
        entry = cache["layers"][layer]
        if entry["mask"] is not None:
            dout = dout * entry["mask"]
        W_x, W_h = params[f"W_x{layer}"], params[f"W_h{layer}"]
        hs, inp = entry["h"], entry["inp"]
        dW_x = np.zeros_like(W_x)
        dW_h = np.zeros_like(W_h)
        db = np.zeros(H)
        dinp = np.empty_like(inp)
        dcarry = np.zeros((B, H))
        for t in reversed(range(L)):
            h_t = hs[:, t]
            da = (dout[:, t] + dcarry) * (1.0 - h_t * h_t)
            prev = hs[:, t - 1] if t > 0 else np.zeros((B, H))
            dW_x += inp[:, t].T @ da
            dW_h += prev.T @ da
            db += da.sum(axis=0)
            dinp[:, t] = da @ W_x.T
            dcarry = da @ W_h.T
        grads[f"W_x{layer}"] = dW_x
        grads[f"W_h{layer}"] = dW_h
        grads[f"b{layer}"] = db
        dout = dinp
    return grads
