"""Standard LSTM cell and stacked BiLSTM, forward and backward, in numpy.

All math is float64.  Weight layout per direction: W (4H, d_in) applied to
the input, U (4H, H) applied to the previous hidden state, bias b (4H,).
Gate order within the 4H axis is (input, forget, candidate, output):

    a_t = W x_t + U h_{t-1} + b
    i = sigmoid(a_i)   f = sigmoid(a_f)   g = tanh(a_g)   o = sigmoid(a_o)
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t)

with h_{-1} = c_{-1} = 0.  No peepholes, no coupled gates.

The backward functions return exact gradients of any scalar loss given the
gradient of that loss with respect to every hidden output h_t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign to stay overflow-free.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LstmCache:
    """Per-sequence activations needed by the backward pass.

    ``gates`` holds (i, f, g, o) along the 4H axis; the named views index
    into it.  All arrays are (T, H) except x (T, d_in) and gates (T, 4H).
    """

    x: np.ndarray
    gates: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    h_prev: np.ndarray  # rows are h_{t-1}

    @property
    def i(self) -> np.ndarray:
        H = self.c.shape[1]
        return self.gates[:, :H]

    @property
    def f(self) -> np.ndarray:
        H = self.c.shape[1]
        return self.gates[:, H:2 * H]

    @property
    def g(self) -> np.ndarray:
        H = self.c.shape[1]
        return self.gates[:, 2 * H:3 * H]

    @property
    def o(self) -> np.ndarray:
        H = self.c.shape[1]
        return self.gates[:, 3 * H:]


def lstm_forward(W: np.ndarray, U: np.ndarray, b: np.ndarray, x: np.ndarray):
    """Run one direction over x (T, d_in); return (h_out (T, H), cache)."""
    T = x.shape[0]
    H = U.shape[1]
    pre = x @ W.T + b  # (T, 4H); the recurrent term is added per step
    gates = np.empty((T, 4 * H))
    c_s = np.empty((T, H)); tc_s = np.empty((T, H))
    hp_s = np.empty((T, H)); h_out = np.empty((T, H))

    h = np.zeros(H)
    c = np.zeros(H)
    for t in range(T):
        a = pre[t]
        a += U @ h
        row = gates[t]
        row[:] = sigmoid(a)  # the g quarter is overwritten next
        row[2 * H:3 * H] = np.tanh(a[2 * H:3 * H])
        hp_s[t] = h
        c = row[H:2 * H] * c + row[:H] * row[2 * H:3 * H]
        tc = np.tanh(c)
        h = row[3 * H:] * tc
        c_s[t] = c
        tc_s[t] = tc
        h_out[t] = h
    cache = LstmCache(x=x, gates=gates, c=c_s, tanh_c=tc_s, h_prev=hp_s)
    return h_out, cache


def lstm_backward(W: np.ndarray, U: np.ndarray, cache: LstmCache, d_h_out: np.ndarray):
    """Backpropagate through one direction.

    d_h_out (T, H) is the loss gradient w.r.t. every hidden output.
    Returns (d_x (T, d_in), dW, dU, db).
    """
    T, H = d_h_out.shape
    gates = cache.gates
    i_s = gates[:, :H]
    f_s = gates[:, H:2 * H]
    g_s = gates[:, 2 * H:3 * H]
    o_s = gates[:, 3 * H:]
    # Activation derivatives, vectorized over the whole sequence.
    deriv = gates * (1.0 - gates)  # valid for the sigmoid quarters
    deriv[:, 2 * H:3 * H] = 1.0 - g_s * g_s
    one_minus_tc2 = 1.0 - cache.tanh_c * cache.tanh_c

    dA = np.empty((T, 4 * H))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    Ut = U.T
    for t in range(T - 1, -1, -1):
        dh = d_h_out[t] + dh_next
        tc = cache.tanh_c[t]
        dc = dc_next + dh * o_s[t] * one_minus_tc2[t]
        c_prev = cache.c[t - 1] if t > 0 else 0.0
        row = dA[t]
        row[:H] = dc * g_s[t]
        row[H:2 * H] = dc * c_prev
        row[2 * H:3 * H] = dc * i_s[t]
        row[3 * H:] = dh * tc
        row *= deriv[t]
        dh_next = Ut @ row
        dc_next = dc * f_s[t]
    dW = dA.T @ cache.x
    dU = dA.T @ cache.h_prev
    db = dA.sum(axis=0)
    dx = dA @ W
    return dx, dW, dU, db


# ---------------------------------------------------------------------------
# Stacked bidirectional wrapper.  Parameters are read from a flat mapping
# with keys "<prefix>.l<layer>.<fw|bw>.<W|U|b>"; layer 0 consumes the raw
# input, higher layers consume the 2H-wide concatenated outputs below.


def bilstm_key(prefix: str, layer: int, direction: str, tensor: str) -> str:
    return f"{prefix}.l{layer}.{direction}.{tensor}"


def bilstm_forward(tensors: dict, prefix: str, layers: int, x: np.ndarray):
    """Return (top-layer output (T, 2H), caches for backward)."""
    caches = []
    inp = x
    for layer in range(layers):
        wf = tensors[bilstm_key(prefix, layer, "fw", "W")]
        uf = tensors[bilstm_key(prefix, layer, "fw", "U")]
        bf = tensors[bilstm_key(prefix, layer, "fw", "b")]
        wb = tensors[bilstm_key(prefix, layer, "bw", "W")]
        ub = tensors[bilstm_key(prefix, layer, "bw", "U")]
        bb = tensors[bilstm_key(prefix, layer, "bw", "b")]
        h_fwd, cache_f = lstm_forward(wf, uf, bf, inp)
        h_bwd_rev, cache_b = lstm_forward(wb, ub, bb, inp[::-1])
        out = np.concatenate([h_fwd, h_bwd_rev[::-1]], axis=1)
        caches.append((cache_f, cache_b))
        inp = out
    return inp, caches


def bilstm_backward(
    tensors: dict,
    prefix: str,
    layers: int,
    caches,
    d_out: np.ndarray,
    grads: dict,
) -> np.ndarray:
    """Backpropagate d_out (T, 2H) through the stack.

    Parameter gradients are accumulated (+=) into ``grads`` under the same
    keys; the return value is the gradient w.r.t. the stack's input.
    """
    d = d_out
    for layer in range(layers - 1, -1, -1):
        cache_f, cache_b = caches[layer]
        H = cache_f.c.shape[1]
        wf = tensors[bilstm_key(prefix, layer, "fw", "W")]
        uf = tensors[bilstm_key(prefix, layer, "fw", "U")]
        wb = tensors[bilstm_key(prefix, layer, "bw", "W")]
        ub = tensors[bilstm_key(prefix, layer, "bw", "U")]

        dx_f, dw_f, du_f, db_f = lstm_backward(wf, uf, cache_f, d[:, :H])
        dx_b_rev, dw_b, du_b, db_b = lstm_backward(wb, ub, cache_b, d[::-1, H:])

        for name, val in (("W", dw_f), ("U", du_f), ("b", db_f)):
            grads[bilstm_key(prefix, layer, "fw", name)] += val
        for name, val in (("W", dw_b), ("U", du_b), ("b", db_b)):
            grads[bilstm_key(prefix, layer, "bw", name)] += val
        d = dx_f + dx_b_rev[::-1]
    return d
