"""LSTM with forget/input/output gates, last-step affine readout.

Gate blocks are packed [i, f, g, o] along the last axis of the fused
weight matrices.
"""

from __future__ import annotations

import numpy as np

from .ops import dropout_mask, sigmoid, uniform_init


def init_params(config, rng: np.random.Generator) -> dict[str, np.ndarray]:
    H = config.hidden_size
    params: dict[str, np.ndarray] = {}
    fan_in = config.input_dim
    for layer in range(config.num_layers):
        params[f"W_x{layer}"] = uniform_init(rng, (fan_in, 4 * H), fan_in)
        params[f"W_h{layer}"] = uniform_init(rng, (H, 4 * H), H)
        params[f"b{layer}"] = np.zeros(4 * H)
        fan_in = H
    params["w_out"] = uniform_init(rng, (H,), H)
    params["b_out"] = np.zeros(1)
    return params


def forward(params, config, x, train=False, rng=None):
    B, L, _ = x.shape
    H = config.hidden_size
    trace = []
    layers = []
    inp = x
    for layer in range(config.num_layers):
        W_x, W_h, b = params[f"W_x{layer}"], params[f"W_h{layer}"], params[f"b{layer}"]
        pre = inp @ W_x + b
        gates_i = np.empty((B, L, H))
        gates_f = np.empty((B, L, H))
        gates_g = np.empty((B, L, H))
        gates_o = np.empty((B, L, H))
        cells = np.empty((B, L, H))
        tanh_c = np.empty((B, L, H))
        hs = np.empty((B, L, H))
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        for t in range(L):
            z = pre[:, t] + h @ W_h
            i = sigmoid(z[:, :H])
            f = sigmoid(z[:, H:2 * H])
            g = np.tanh(z[:, 2 * H:3 * H])
            o = sigmoid(z[:, 3 * H:])
            c = f * c + i * g
            tc = np.tanh(c)
            h = o * tc
            gates_i[:, t], gates_f[:, t], gates_g[:, t], gates_o[:, t] = i, f, g, o
            cells[:, t], tanh_c[:, t], hs[:, t] = c, tc, h
        entry = {
            "inp": inp, "i": gates_i, "f": gates_f, "g": gates_g, "o": gates_o,
            "c": cells, "tc": tanh_c, "h": hs, "mask": None,
        }
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
        inp = entry["inp"]
        dW_x = np.zeros_like(W_x)
        dW_h = np.zeros_like(W_h)
        db = np.zeros(4 * H)
        dinp = np.empty_like(inp)
        dh_carry = np.zeros((B, H))
        dc_carry = np.zeros((B, H))
        for t in reversed(range(L)):
            i, f = entry["i"][:, t], entry["f"][:, t]
            g, o = entry["g"][:, t], entry["o"][:, t]
            tc = entry["tc"][:, t]
            c_prev = entry["c"][:, t - 1] if t > 0 else np.zeros((B, H))
            h_prev = entry["h"][:, t - 1] if t > 0 else np.zeros((B, H))

            dh = dout[:, t] + dh_carry
            do = dh * tc
            dc = dc_carry + dh * o * (1.0 - tc * tc)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_carry = dc * f

            dz = np.concatenate([
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ], axis=1)
            dW_x += inp[:, t].T @ dz
            dW_h += h_prev.T @ dz
            db += dz.sum(axis=0)
            dinp[:, t] = dz @ W_x.T
            dh_carry = dz @ W_h.T
        grads[f"W_x{layer}"] = dW_x
        grads[f"W_h{layer}"] = dW_h
        grads[f"b{layer}"] = db
        dout = dinp
    return grads
