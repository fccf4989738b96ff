"""Dense linear algebra with explicit tolerances, derivative jets and erfc jets.

A :class:`Jet` stores the value of a signal and its first ``order`` time
derivatives at one expansion point.  Coefficients are raw derivatives, so
products carry binomial factors (Leibniz rule) instead of Taylor scaling.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, sqrt, pi

import numpy as np
from numpy.polynomial import hermite
from scipy import special

__all__ = [
    "chain_affine",
    "DEFAULT_RANK_TOL",
    "Jet",
    "NumericalError",
    "SingularJetError",
    "pinv",
    "rank_of",
    "nullspace_basis",
    "min_sym_eig",
    "jet_mul",
    "jet_recip",
    "jet_shift",
    "erfc_jet",
    "erf_jet",
    "exp_jet",
]

DEFAULT_RANK_TOL = 1e-9
MAX_SPECIAL_ORDER = 6


class NumericalError(ValueError):
    """Input rejected by a numerical routine (non-finite, wrong shape...)."""


class SingularJetError(NumericalError):
    """Reciprocal of a jet whose value is (numerically) zero."""


def _as_finite_matrix(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise NumericalError(f"expected a 2-D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericalError("matrix has non-finite entries")
    return M


def _check_tol(tol: float) -> None:
    if not 0.0 < tol < 1.0:
        raise NumericalError(f"relative tolerance must lie in (0, 1), got {tol}")


_TINY = np.finfo(float).tiny


def _svd_cut(s: np.ndarray, tol: float) -> float:
    # subnormal singular values would overflow on inversion
    return max(tol * s[0], _TINY) if s.size else 0.0


def pinv(M, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values ``<= tol * sigma_max`` are treated as zero.
    """
    M = _as_finite_matrix(M)
    _check_tol(tol)
    u, s, vt = np.linalg.svd(M, full_matrices=False)
    cut = _svd_cut(s, tol)
    keep = s > cut
    if not np.any(keep):
        return np.zeros((M.shape[1], M.shape[0]))
    return (vt[keep].T / s[keep]) @ u[:, keep].T


def rank_of(M, tol: float = DEFAULT_RANK_TOL) -> int:
    M = _as_finite_matrix(M)
    _check_tol(tol)
    s = np.linalg.svd(M, compute_uv=False)
    if not s.size or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > _svd_cut(s, tol)))


def nullspace_basis(M, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Orthonormal basis of ``ker M`` as the columns of the returned matrix.

    Each column is sign-normalised so that its largest-magnitude entry is
    positive, which makes the result reproducible across LAPACK builds.
    """
    M = _as_finite_matrix(M)
    _check_tol(tol)
    _, s, vt = np.linalg.svd(M, full_matrices=True)
    rank = int(np.count_nonzero(s > _svd_cut(s, tol))) if s.size and s[0] > 0 else 0
    V = vt[rank:].T.copy()
    for j in range(V.shape[1]):
        i = np.argmax(np.abs(V[:, j]))
        if V[i, j] < 0:
            V[:, j] = -V[:, j]
    return V


def min_sym_eig(M) -> float:
    """Smallest eigenvalue of ``M + M^T``."""
    M = _as_finite_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise NumericalError(f"min_sym_eig needs a square matrix, got {M.shape}")
    return float(np.linalg.eigvalsh(M + M.T)[0])


@dataclass(frozen=True)
class Jet:
    """Value and time derivatives of a scalar, vector or matrix signal.

    ``coeffs[j]`` is the j-th derivative; ``coeffs`` has shape
    ``(order + 1,) + value_shape``.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim == 0:
            c = c.reshape(1)
        if not np.all(np.isfinite(c)):
            raise NumericalError("jet has non-finite coefficients")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def constant(cls, value, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros((order + 1,) + value.shape)
        c[0] = value
        return cls(c)

    @property
    def order(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def value(self):
        return self.coeffs[0]

    @property
    def shape(self) -> tuple:
        return self.coeffs.shape[1:]

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise NumericalError(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.coeffs[: order + 1])

    def __add__(self, other):
        if isinstance(other, Jet):
            k = min(self.order, other.order)
            return Jet(self.coeffs[: k + 1] + other.coeffs[: k + 1])
        c = self.coeffs.copy()
        c[0] = c[0] + other
        return Jet(c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, factor) -> "Jet":
        return Jet(self.coeffs * factor)


def _coeff_product(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if x.ndim == 2 and y.ndim >= 1:
        if x.shape[1] != y.shape[0]:
            raise NumericalError(f"jet dimension mismatch: {x.shape} @ {y.shape}")
        return x @ y
    if x.ndim >= 1 and y.ndim >= 1 and x.shape != y.shape:
        raise NumericalError(f"jet dimension mismatch: {x.shape} * {y.shape}")
    return x * y


def jet_mul(a: Jet, b: Jet) -> Jet:
    """Leibniz product; matrix coefficients multiply as matrices."""
    k = min(a.order, b.order)
    out = [
        sum(comb(j, l) * _coeff_product(a.coeffs[l], b.coeffs[j - l]) for l in range(j + 1))
        for j in range(k + 1)
    ]
    return Jet(np.array(out))


def jet_recip(a: Jet, threshold: float = 1e-300) -> Jet:
    """Jet of ``1/a`` for a scalar jet ``a``."""
    if a.shape != ():
        raise NumericalError("jet_recip is defined for scalar jets only")
    c = a.coeffs
    if abs(c[0]) <= threshold:
        raise SingularJetError(f"reciprocal of a jet with value {c[0]!r}")
    b = np.zeros_like(c)
    b[0] = 1.0 / c[0]
    for j in range(1, c.shape[0]):
        s = sum(comb(j, l) * c[l] * b[j - l] for l in range(1, j + 1))
        b[j] = -s / c[0]
    return Jet(b)


def jet_shift(a: Jet) -> Jet:
    """Jet of the time derivative: drops the value coefficient."""
    if a.order < 1:
        raise NumericalError("cannot differentiate an order-0 jet")
    return Jet(a.coeffs[1:])


def _check_special_order(order: int) -> None:
    if not 0 <= order <= MAX_SPECIAL_ORDER:
        raise NumericalError(f"special-function jets support order 0..{MAX_SPECIAL_ORDER}")


def erfc_jet(t: float, order: int) -> Jet:
    """Jet of ``erfc`` at ``t``.

    Uses d^k/dt^k erfc(t) = -(2/sqrt(pi)) (-1)^(k-1) H_{k-1}(t) exp(-t^2)
    with physicists' Hermite polynomials H.
    """
    _check_special_order(order)
    c = np.empty(order + 1)
    c[0] = special.erfc(t)
    gauss = np.exp(-t * t)
    for k in range(1, order + 1):
        herm = hermite.hermval(t, [0.0] * (k - 1) + [1.0])
        c[k] = -(2.0 / sqrt(pi)) * (-1) ** (k - 1) * herm * gauss
    return Jet(c)


def erf_jet(t: float, order: int) -> Jet:
    j = erfc_jet(t, order)
    c = -j.coeffs
    c[0] = special.erf(t)
    return Jet(c)


def exp_jet(t: float, rate: float, order: int) -> Jet:
    """Jet of ``exp(rate * t)``."""
    v = np.exp(rate * t)
    return Jet(v * rate ** np.arange(order + 1, dtype=float))


def chain_affine(j: Jet, slope: float) -> Jet:
    """Given the jet of g at ``slope*(t - c)``, return the jet of t -> g(slope*(t - c))."""
    return Jet(j.coeffs * slope ** np.arange(j.order + 1, dtype=float))
