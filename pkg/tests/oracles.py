"""Independent reference computations used to check the package.

Nothing here imports syncsgd: the closed-form timings use exact rationals,
the network math is plain loops, and the wire layout is rebuilt by hand.
"""

from fractions import Fraction as F

import numpy as np


# -- performance model, exact rationals ------------------------------------------

def ps_terms(n, b, w, W, B, t_proc, ps_time, ps=1):
    it = F(n, b) / w
    avail = F(B, w) * ps
    pull = F(W) / avail * it
    push = F(W) / w / avail * it
    cpu = it * (F(t_proc) + F(ps_time))
    return {"avail": avail, "pull": pull, "push": push, "cpu": cpu, "total": pull + push + cpu}


def p2p_terms(n, b, w, W, B, t_proc, update):
    it = F(n, b) / w
    avail = F(B, 2 * (w - 1))
    tcp = F(W) / w / avail * it
    cpu = it * (F(t_proc) + F(update))
    return {"avail": avail, "tcp": tcp, "cpu": cpu, "total": tcp + cpu}


def ra_tcp(w, W, B):
    return F(2 * (w - 1)) * F(W) / w / B


# -- neural net ----------------------------------------------------------------

def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def net_loss(weights, biases, x, y, output="softmax"):
    """Quadratic loss of an MLP with sigmoid hidden layers, batch-averaged."""
    a = x
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W.T + b
        last = i == len(weights) - 1
        a = softmax(z) if last and output == "softmax" else sigmoid(z)
    return float(np.sum((a - y) ** 2) / x.shape[0])


def finite_difference(weights, biases, x, y, h=1e-5, output="softmax"):
    """Central differences for every weight and bias, layer by layer."""
    gw, gb = [], []
    for group, out in ((weights, gw), (biases, gb)):
        for arr in group:
            g = np.zeros_like(arr)
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                old = arr[idx]
                arr[idx] = old + h
                up = net_loss(weights, biases, x, y, output)
                arr[idx] = old - h
                down = net_loss(weights, biases, x, y, output)
                arr[idx] = old
                g[idx] = (up - down) / (2 * h)
            out.append(g)
    return gw, gb


# -- collectives and wire ---------------------------------------------------------

def brute_mean(vectors):
    """Cross-rank mean, summed in float64 then rounded once."""
    acc = np.zeros(len(vectors[0]), dtype=np.float64)
    for v in vectors:
        acc += np.asarray(v, dtype=np.float64)
    return acc / len(vectors)


def frame_bytes(kind, epoch, iteration, src, dst, payload):
    """Hand-packed frame: u32 length, u8 kind, u32 epoch, u32 iteration,
    u16 src, u16 dst, payload; big-endian; length counts everything after it."""
    body = (bytes([kind]) + epoch.to_bytes(4, "big") + iteration.to_bytes(4, "big")
            + src.to_bytes(2, "big") + dst.to_bytes(2, "big") + payload)
    return len(body).to_bytes(4, "big") + body


def even_split(total, parts):
    """Sizes of ``parts`` contiguous pieces; the first ``total % parts`` get one more."""
    q, r = divmod(total, parts)
    return [q + (1 if i < r else 0) for i in range(parts)]
