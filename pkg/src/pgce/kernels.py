"""Hot loops shared by every module.

Each kernel exists twice: a vectorised numpy version and an ``@njit`` version.
The module-level names (``mlp_forward``, ``mlp_backward``, ...) point at the
numba versions when numba imports and ``PGCE_DISABLE_NUMBA`` is unset, else at
the numpy ones. Both variants stay importable for tests and benchmarks.

Array conventions
-----------------
values  : flat float64 parameters; per layer ``W`` (fan_out x fan_in, row-major)
          followed by ``b`` (fan_out).
layout  : int64 layer widths ``(input, hidden..., output)``.
acts    : ``(B, sum(layout))``; the input block, each hidden block after ReLU,
          then the raw output (logits) block.
offsets : int64 group boundaries ``0 = o_0 < o_1 < ... < o_G = B``. The backward
          kernel sums per-row gradients inside each group.
"""
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

_FLAG = os.environ.get("PGCE_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")
BACKEND = "numba" if USE_NUMBA else "numpy"


def _param_offsets(layout):
    offs = np.zeros(len(layout) - 1, dtype=np.int64)
    p = 0
    for l in range(len(layout) - 1):
        offs[l] = p
        p += layout[l] * layout[l + 1] + layout[l + 1]
    return offs


def _act_offsets(layout):
    offs = np.zeros(len(layout), dtype=np.int64)
    for l in range(1, len(layout)):
        offs[l] = offs[l - 1] + layout[l - 1]
    return offs


# --------------------------------------------------------------------------
# numpy implementations


def mlp_forward_numpy(values, layout, X):
    B = X.shape[0]
    n_layers = len(layout) - 1
    acts = np.empty((B, int(layout.sum())))
    acts[:, : layout[0]] = X
    a = X
    p = 0
    off = int(layout[0])
    for l in range(n_layers):
        fi, fo = int(layout[l]), int(layout[l + 1])
        W = values[p : p + fi * fo].reshape(fo, fi)
        p += fi * fo
        b = values[p : p + fo]
        p += fo
        z = a @ W.T + b
        if l < n_layers - 1:
            np.maximum(z, 0.0, out=z)
        acts[:, off : off + fo] = z
        a = z
        off += fo
    return acts


def mlp_backward_numpy(values, layout, acts, dout, offsets):
    B = acts.shape[0]
    G = len(offsets) - 1
    n_layers = len(layout) - 1
    poffs = _param_offsets(layout)
    aoffs = _act_offsets(layout)
    grads = np.zeros((G, values.shape[0]))
    starts = offsets[:-1]
    single = G == 1
    delta = dout
    for l in range(n_layers - 1, -1, -1):
        fi, fo = int(layout[l]), int(layout[l + 1])
        w0 = int(poffs[l])
        b0 = w0 + fi * fo
        a_in = acts[:, aoffs[l] : aoffs[l] + fi]
        if single:
            grads[0, w0:b0] = (delta.T @ a_in).ravel()
            grads[0, b0 : b0 + fo] = delta.sum(axis=0)
        else:
            gw = (delta[:, :, None] * a_in[:, None, :]).reshape(B, fo * fi)
            grads[:, w0:b0] = np.add.reduceat(gw, starts, axis=0)
            grads[:, b0 : b0 + fo] = np.add.reduceat(delta, starts, axis=0)
        if l > 0:
            W = values[w0:b0].reshape(fo, fi)
            delta = (delta @ W) * (a_in > 0.0)
    return grads


def segment_returns_numpy(rewards, offsets, gamma):
    out = np.empty_like(rewards)
    ends = offsets[1:]
    lengths = ends - offsets[:-1]
    acc = np.zeros(len(lengths))
    for j in range(int(lengths.max())):
        live = lengths > j
        idx = ends[live] - 1 - j
        acc[live] = rewards[idx] + gamma * acc[live]
        out[idx] = acc[live]
    return out


def held_positions_numpy(actions, nothing_means_flat):
    """Position held during each step for action codes 0=nothing, 1=buy, 2=sell.

    The position starts flat and an order fills one step after it is placed.
    """
    B, L = actions.shape
    held = np.zeros((B, L), dtype=np.int64)
    pos = np.zeros(B, dtype=np.int64)
    pend = np.zeros(B, dtype=np.int64)
    for t in range(L):
        held[:, t] = pos
        pos = pend
        a = actions[:, t]
        keep = 0 if nothing_means_flat else pend
        pend = np.where(a == 1, 1, np.where(a == 2, -1, keep))
    return held


# --------------------------------------------------------------------------
# numba implementations

if HAVE_NUMBA:

    @njit(cache=True)
    def _forward_nb(values, layout, X):
        B = X.shape[0]
        n_layers = layout.shape[0] - 1
        acts = np.empty((B, layout.sum()))
        for b in range(B):
            for i in range(layout[0]):
                acts[b, i] = X[b, i]
        p = 0
        a_off = 0
        for l in range(n_layers):
            fi = layout[l]
            fo = layout[l + 1]
            z_off = a_off + fi
            b0 = p + fi * fo
            relu = l < n_layers - 1
            for b in range(B):
                for o in range(fo):
                    s = values[b0 + o]
                    row = p + o * fi
                    for i in range(fi):
                        s += values[row + i] * acts[b, a_off + i]
                    if relu and s < 0.0:
                        s = 0.0
                    acts[b, z_off + o] = s
            p = b0 + fo
            a_off = z_off
        return acts

    @njit(cache=True)
    def _backward_nb(values, layout, acts, dout, offsets):
        G = offsets.shape[0] - 1
        n_layers = layout.shape[0] - 1
        poffs = np.zeros(n_layers, dtype=np.int64)
        aoffs = np.zeros(n_layers + 1, dtype=np.int64)
        p = 0
        for l in range(n_layers):
            poffs[l] = p
            p += layout[l] * layout[l + 1] + layout[l + 1]
            aoffs[l + 1] = aoffs[l] + layout[l]
        width = 0
        for l in range(n_layers + 1):
            if layout[l] > width:
                width = layout[l]
        grads = np.zeros((G, values.shape[0]))
        delta = np.empty(width)
        nxt = np.empty(width)
        for g in range(G):
            for b in range(offsets[g], offsets[g + 1]):
                K = layout[n_layers]
                for k in range(K):
                    delta[k] = dout[b, k]
                for l in range(n_layers - 1, -1, -1):
                    fi = layout[l]
                    fo = layout[l + 1]
                    w0 = poffs[l]
                    b0 = w0 + fi * fo
                    a0 = aoffs[l]
                    for o in range(fo):
                        d = delta[o]
                        grads[g, b0 + o] += d
                        row = w0 + o * fi
                        for i in range(fi):
                            grads[g, row + i] += d * acts[b, a0 + i]
                    if l > 0:
                        for i in range(fi):
                            if acts[b, a0 + i] > 0.0:
                                s = 0.0
                                for o in range(fo):
                                    s += values[w0 + o * fi + i] * delta[o]
                                nxt[i] = s
                            else:
                                nxt[i] = 0.0
                        for i in range(fi):
                            delta[i] = nxt[i]
        return grads

    @njit(cache=True)
    def _segment_returns_nb(rewards, offsets, gamma):
        out = np.empty_like(rewards)
        for g in range(offsets.shape[0] - 1):
            acc = 0.0
            for t in range(offsets[g + 1] - 1, offsets[g] - 1, -1):
                acc = rewards[t] + gamma * acc
                out[t] = acc
        return out

    @njit(cache=True)
    def _held_positions_nb(actions, nothing_means_flat):
        B, L = actions.shape
        held = np.zeros((B, L), dtype=np.int64)
        for b in range(B):
            pos = 0
            pend = 0
            for t in range(L):
                held[b, t] = pos
                pos = pend
                a = actions[b, t]
                if a == 1:
                    pend = 1
                elif a == 2:
                    pend = -1
                elif nothing_means_flat:
                    pend = 0
        return held

    def mlp_forward_numba(values, layout, X):
        return _forward_nb(values, layout, np.ascontiguousarray(X))

    def mlp_backward_numba(values, layout, acts, dout, offsets):
        return _backward_nb(values, layout, acts, np.ascontiguousarray(dout), offsets)

    def segment_returns_numba(rewards, offsets, gamma):
        return _segment_returns_nb(rewards, offsets, float(gamma))

    def held_positions_numba(actions, nothing_means_flat):
        return _held_positions_nb(np.ascontiguousarray(actions, dtype=np.int64), bool(nothing_means_flat))


IMPLEMENTATIONS = {"numpy": (mlp_forward_numpy, mlp_backward_numpy, segment_returns_numpy, held_positions_numpy)}
if HAVE_NUMBA:
    IMPLEMENTATIONS["numba"] = (mlp_forward_numba, mlp_backward_numba, segment_returns_numba, held_positions_numba)

mlp_forward, mlp_backward, segment_returns, held_positions = IMPLEMENTATIONS[BACKEND]
