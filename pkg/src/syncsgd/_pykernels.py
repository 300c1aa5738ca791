"""Numpy implementations of the elementwise kernels (fallback backend)."""

import numpy as np


def sigmoid(z, out):
    with np.errstate(over="ignore"):
        np.negative(z, out=out)
        np.exp(out, out=out)
        out += 1
        np.reciprocal(out, out=out)


def sigmoid_backward(grad, act, out):
    np.subtract(1, act, out=out)
    out *= act
    out *= grad


def softmax_rows(z, out):
    np.subtract(z, z.max(axis=1, keepdims=True), out=out)
    np.exp(out, out=out)
    out /= out.sum(axis=1, keepdims=True)


def add_into(dst, src):
    if src.shape[0] != dst.shape[0]:
        raise ValueError(f"length mismatch: {dst.shape[0]} vs {src.shape[0]}")
    dst += src


def sgd_step(params, grad, alpha, out):
    if grad.shape[0] != params.shape[0]:
        raise ValueError(f"length mismatch: {params.shape[0]} vs {grad.shape[0]}")
    np.multiply(grad, params.dtype.type(alpha), out=out)
    np.subtract(params, out, out=out)
