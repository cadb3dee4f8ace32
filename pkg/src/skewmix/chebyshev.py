"""Chebyshev-Lobatto nodes on [0, 1], barycentric interpolation and Clenshaw-Curtis weights.

Nodes and interpolation matrices can also be built from mpmath numbers (object
arrays) at the ambient ``mpmath.mp`` precision.
"""

import mpmath
import numpy as np

from .numerics import as_real, is_object


def lobatto_nodes(N: int) -> np.ndarray:
    """Increasing Chebyshev-Gauss-Lobatto points mapped affinely to [0, 1]."""
    if N < 2:
        raise ValueError("need at least two nodes")
    j = np.arange(N)
    x = 0.5 * (1.0 - np.cos(np.pi * j / (N - 1)))
    x[0], x[-1] = 0.0, 1.0
    return x


def lobatto_nodes_mp(N: int) -> np.ndarray:
    """:func:`lobatto_nodes` as an object array of mpmath numbers."""
    if N < 2:
        raise ValueError("need at least two nodes")
    x = np.array([(1 - mpmath.cos(mpmath.pi * j / (N - 1))) / 2 for j in range(N)], dtype=object)
    x[0], x[-1] = mpmath.mpf(0), mpmath.mpf(1)
    return x


def barycentric_weights(N: int) -> np.ndarray:
    w = (-1.0) ** np.arange(N)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def interpolation_matrix(nodes: np.ndarray, y: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """``B[..., l] = ell_l(y)``: Lagrange cardinal functions of ``nodes`` evaluated at ``y``.

    ``weights`` defaults to the Lobatto barycentric weights, so ``nodes`` must
    then come from :func:`lobatto_nodes`.
    """
    nodes = as_real(nodes)
    if weights is None:
        weights = barycentric_weights(len(nodes))
    y = as_real(y)
    diff = y[..., None] - nodes
    exact = diff == 0
    hit = np.any(exact, axis=-1)
    diff = np.where(exact, 1, diff)
    terms = weights / diff
    B = terms / np.sum(terms, axis=-1, keepdims=True)
    if np.any(hit):
        B = np.where(hit[..., None], exact.astype(B.dtype), B)
    if is_object(B):
        B = np.vectorize(mpmath.mpf, otypes=[object])(B)
    return B


def general_barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    nodes = np.asarray(nodes, dtype=float)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    # scaled by 4 per factor to avoid underflow on [0, 1]
    w = 1.0 / np.prod(4.0 * diff, axis=1)
    return w / np.max(np.abs(w))


def interpolate(nodes: np.ndarray, values: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Evaluate the Lobatto interpolant of ``values`` (nodes along axis 0) at ``y``."""
    B = interpolation_matrix(nodes, y)
    return np.tensordot(B, values, axes=([-1], [0]))


def clenshaw_curtis_weights(N: int) -> np.ndarray:
    """Weights for the Lobatto nodes integrating polynomials of degree < N exactly on [0, 1]."""
    n = N - 1
    theta = np.pi * np.arange(N) / n
    w = np.zeros(N)
    v = np.ones(N - 2)
    if n % 2 == 0:
        w[0] = w[-1] = 1.0 / (n * n - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * theta[1:-1]) / (4 * k * k - 1)
        v -= np.cos(n * theta[1:-1]) / (n * n - 1)
    else:
        w[0] = w[-1] = 1.0 / (n * n)
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[1:-1]) / (4 * k * k - 1)
    w[1:-1] = 2.0 * v / n
    return 0.5 * w
