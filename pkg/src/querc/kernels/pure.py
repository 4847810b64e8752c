"""NumPy reference implementation of the training kernels.

Function-for-function twin of the compiled extension ``_fast``. Every
random quantity is drawn by the caller and passed in, so the two backends
follow step-identical trajectories.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, log_expit


def doc2vec_train_document(token_in, token_out, dvec, ids, negatives, alphas, window,
                           update_tokens):
    """One pass over all context windows of one document.

    ids: (T,) int64 token ids; negatives: (T, k) int64 pre-drawn noise ids
    (draws equal to the window's target are skipped); alphas: (T,) per-window
    learning rates. The hidden state is the mean of the context token vectors
    and the document vector, so each contributing vector receives e/(n+1) of
    the hidden-state gradient. Mutates ``dvec`` in place, and the token
    matrices too when ``update_tokens`` is true (inference freezes them).
    Returns the summed negative-sampling loss over the document's windows.
    """
    T = ids.shape[0]
    loss = 0.0
    for t in range(T):
        lo = t - window
        if lo < 0:
            lo = 0
        ctx = np.concatenate((ids[lo:t], ids[t + 1 : t + 1 + window]))
        n_in = ctx.shape[0] + 1
        h = (token_in[ctx].sum(axis=0) + dvec) / n_in
        target = ids[t]
        negs = negatives[t]
        wids = np.concatenate(([target], negs[negs != target]))
        u = token_out[wids] @ h
        loss -= log_expit(u[0]) + log_expit(-u[1:]).sum()
        g = expit(u)
        g[0] -= 1.0  # dL/du: sigma(u) - label
        g *= alphas[t]
        e = g @ token_out[wids]  # alpha * dL/dh
        if update_tokens:
            np.subtract.at(token_out, wids, g[:, None] * h[None, :])
            np.subtract.at(token_in, ctx, e / n_in)
        dvec -= e / n_in
    return float(loss)


def lstm_forward(apre, wh, h0, c0):
    """Run an LSTM over precomputed input pre-activations.

    apre: (T, 4h) rows are x_t @ Wx + b with gate blocks ordered (i, f, o, g);
    wh: (h, 4h) recurrent weights. Returns the caches needed for backprop:
    (hs, cs, gates, tanh_c), each (T, ...); hs[-1] is the final hidden state.
    """
    T, four_h = apre.shape
    H = four_h // 4
    hs = np.empty((T, H))
    cs = np.empty((T, H))
    gates = np.empty((T, four_h))
    tanh_c = np.empty((T, H))
    h = h0
    c = c0
    for t in range(T):
        a = apre[t] + h @ wh
        i = expit(a[:H])
        f = expit(a[H : 2 * H])
        o = expit(a[2 * H : 3 * H])
        g = np.tanh(a[3 * H :])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        gates[t, :H] = i
        gates[t, H : 2 * H] = f
        gates[t, 2 * H : 3 * H] = o
        gates[t, 3 * H :] = g
        cs[t] = c
        tanh_c[t] = tc
        hs[t] = h
    return hs, cs, gates, tanh_c


def lstm_backward(wh, gates, cs, tanh_c, c0, dh_out, dh_last, dc_last):
    """Backprop through time over one lstm_forward call.

    dh_out: (T, h) external gradient on each h_t; dh_last/dc_last flow into
    the final state from downstream (e.g. the decoder's initial state, for
    the encoder). Returns (da, dh0, dc0) where da is the (T, 4h) gradient on
    the pre-activations; the caller turns da into weight gradients with
    batched matmuls.
    """
    T, four_h = gates.shape
    H = four_h // 4
    da = np.empty((T, four_h))
    dh_next = np.array(dh_last, dtype=np.float64, copy=True)
    dc_next = np.array(dc_last, dtype=np.float64, copy=True)
    for t in range(T - 1, -1, -1):
        i = gates[t, :H]
        f = gates[t, H : 2 * H]
        o = gates[t, 2 * H : 3 * H]
        g = gates[t, 3 * H :]
        tc = tanh_c[t]
        dh = dh_out[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        c_prev = cs[t - 1] if t > 0 else c0
        da[t, :H] = (dc * g) * i * (1.0 - i)
        da[t, H : 2 * H] = (dc * c_prev) * f * (1.0 - f)
        da[t, 2 * H : 3 * H] = (dh * tc) * o * (1.0 - o)
        da[t, 3 * H :] = (dc * i) * (1.0 - g * g)
        dh_next = da[t] @ wh.T
        dc_next = dc * f
    return da, dh_next, dc_next
