"""Elementwise functions that work on float arrays and on mpmath object arrays, plus
extended-precision eigenvalues through python-flint."""

from __future__ import annotations

import mpmath
import numpy as np


def is_object(x) -> bool:
    return isinstance(x, np.ndarray) and x.dtype == object or isinstance(x, (mpmath.mpf, mpmath.mpc))


def _lift(fn_np, fn_mp):
    vec = np.vectorize(fn_mp, otypes=[object])

    def f(x):
        if is_object(x):
            return vec(x) if isinstance(x, np.ndarray) else fn_mp(x)
        return fn_np(x)

    return f


exp = _lift(np.exp, mpmath.exp)
log = _lift(np.log, mpmath.log)
sin = _lift(np.sin, mpmath.sin)
cos = _lift(np.cos, mpmath.cos)


def as_real(x):
    """``float`` array unless ``x`` already holds mpmath numbers."""
    if is_object(x):
        return np.asarray(x, dtype=object)
    return np.asarray(x, dtype=float)


def mp_array(values) -> np.ndarray:
    return np.vectorize(mpmath.mpf, otypes=[object])(np.asarray(values, dtype=object))


def eps_of(matrix) -> float:
    if is_object(matrix):
        return float(mpmath.mpf(2) ** (-mpmath.mp.prec))
    return float(np.finfo(float).eps)


def eigvals_extended(matrix: np.ndarray) -> np.ndarray:
    """Eigenvalues of an mpmath object matrix via python-flint at the current mpmath precision.

    Returned as complex128.  Rigorous enclosures usually fail for collocation
    matrices of transfer operators (eigenvector bases are very ill conditioned),
    so the approximate QR route is used and accuracy is judged by the caller.
    """
    import flint

    n = matrix.shape[0]
    flint.ctx.prec = mpmath.mp.prec + 32
    digits = mpmath.mp.dps + 10

    def to_acb(v):
        v = mpmath.mpmathify(v)
        if isinstance(v, mpmath.mpc):
            return flint.acb(mpmath.nstr(v.real, digits), mpmath.nstr(v.imag, digits))
        return flint.acb(mpmath.nstr(v, digits))

    A = flint.acb_mat([[to_acb(matrix[i, j]) for j in range(n)] for i in range(n)])
    ev = A.eig(algorithm="approx")
    return np.array([complex(float(e.real.mid()), float(e.imag.mid())) for e in ev])
