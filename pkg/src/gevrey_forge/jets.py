"""Truncated Taylor arithmetic on numpy arrays.

A jet of order K at points x0 is an array of shape ``(K+1, N)`` whose row k
holds ``f^{(k)}(x0)/k!``.  Used for smooth step profiles and test bumps, where
closed-form derivatives of every order are needed at arbitrary points.
"""

from __future__ import annotations

import math

import numpy as np


def variable(x0, order: int) -> np.ndarray:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    out = np.zeros((order + 1, x0.size))
    out[0] = x0
    if order >= 1:
        out[1] = 1.0
    return out


def constant(c, like: np.ndarray) -> np.ndarray:
    out = np.zeros_like(like)
    out[0] = c
    return out


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=np.result_type(a, b))
    for k in range(out.shape[0]):
        out[k] = sum(a[i] * b[k - i] for i in range(k + 1))
    return out


def recip(a: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a)
    out[0] = 1.0 / a[0]
    for k in range(1, a.shape[0]):
        out[k] = -out[0] * sum(a[i] * out[k - i] for i in range(1, k + 1))
    return out


def exp(a: np.ndarray) -> np.ndarray:
    out = np.zeros_like(a)
    out[0] = np.exp(a[0])
    for k in range(1, a.shape[0]):
        out[k] = sum(i * a[i] * out[k - i] for i in range(1, k + 1)) / k
    return out


def power_of_affine(x0, scale: float, kappa: float, order: int) -> np.ndarray:
    """Jet of ``(scale * x)^kappa`` at ``x0`` (``scale * x0 > 0``)."""
    base = scale * np.atleast_1d(np.asarray(x0, dtype=float))
    out = np.empty((order + 1, base.size))
    coeff = 1.0
    for k in range(order + 1):
        out[k] = coeff * base ** (kappa - k) * scale**k
        coeff *= (kappa - k) / (k + 1)
    return out


def derivatives(jet: np.ndarray) -> np.ndarray:
    """Convert normalized Taylor rows into plain derivatives."""
    fact = np.array([math.factorial(k) for k in range(jet.shape[0])], dtype=float)
    return jet * fact.reshape((-1,) + (1,) * (jet.ndim - 1))


def smoothstep(x, kappa: float, order: int) -> np.ndarray:
    """Derivatives ``0..order`` of the step ``psi(x)/(psi(x)+psi(1-x))`` with
    ``psi(x) = exp(-beta x^{-kappa})``; Gevrey of order ``1 + 1/kappa``.
    ``beta = 1/(kappa 2^kappa)`` gives slope 1 at the midpoint, like a linear ramp.

    Returns an array of shape ``(order+1, N)``; exactly 0 for ``x <= 0`` and
    exactly 1 (with vanishing derivatives) for ``x >= 1``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros((order + 1, x.size))
    out[0, x >= 1] = 1.0
    inside = (x > 0) & (x < 1)
    if not inside.any():
        return out
    xi = x[inside]
    beta = 1.0 / (kappa * 2.0**kappa)
    z = beta * power_of_affine(xi, 1.0, -kappa, order) - power_of_affine(1.0 - xi, 1.0, -kappa, order) \
        * np.array([(-1.0) ** k for k in range(order + 1)])[:, None] * beta
    res = np.zeros((order + 1, xi.size))
    pos = z[0] >= 0
    far = np.abs(z[0]) > 700
    if (pos & ~far).any():
        zz = z[:, pos & ~far]
        q = exp(-zz)
        res[:, pos & ~far] = mul(q, recip(constant(1.0, q) + q))
    if (~pos & ~far).any():
        zz = z[:, ~pos & ~far]
        p = exp(zz)
        res[:, ~pos & ~far] = constant(1.0, p) - mul(p, recip(constant(1.0, p) + p))
    res[0, ~pos & far] = 1.0
    out[:, inside] = derivatives(res)
    return out


def bump(x, order: int) -> np.ndarray:
    """Derivatives of ``exp(-1/(1-x^2))`` on ``(-1, 1)``, zero outside."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros((order + 1, x.size))
    inside = np.abs(x) < 1
    if not inside.any():
        return out
    xv = variable(x[inside], order)
    one_minus = constant(1.0, xv) - mul(xv, xv)
    h = -recip(one_minus)
    big = h[0] < -700
    jet = np.zeros_like(h)
    if (~big).any():
        jet[:, ~big] = exp(h[:, ~big])
    out[:, inside] = derivatives(jet)
    return out
