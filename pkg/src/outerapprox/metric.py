"""Inner-product norms and the adaptive metric built from cut normals.

The adaptive metric after ``k`` cuts is ``eps0 * I + Sigma_k`` where
``Sigma_k`` is the average of ``u u^T`` over the unit cut normals seen so far.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import NoNormalsYet, NotSpd, ZeroNormal

DEFAULT_EPS0 = 0.1
SYM_TOL = 1e-12
JACOBI_TOL = 1e-13
JACOBI_SWEEPS = 100


def jacobi_eigh(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.

    Returns ascending eigenvalues and the matching orthonormal eigenvectors as
    columns.  Sweeps stop once the off-diagonal Frobenius norm is at most
    ``JACOBI_TOL`` times the matrix norm.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = max(np.linalg.norm(a), 1e-300)
    for _ in range(JACOBI_SWEEPS):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= JACOBI_TOL * scale:
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apr = a[p, r]
                if apr == 0.0:
                    continue
                diff = a[r, r] - a[p, p]
                if abs(apr) < 1e-100 * abs(diff):
                    t = apr / diff
                else:
                    theta = diff / (2.0 * apr)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[r, r] = c
                rot[p, r] = s
                rot[r, p] = -s
                a = rot.T @ a @ rot
                a[p, r] = a[r, p] = 0.0
                v = v @ rot
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


class SpdMatrix:
    """Symmetric positive definite matrix with cached spectral data."""

    def __init__(self, entries, check: bool = True):
        m = np.array(entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise NotSpd("matrix must be square")
        if np.max(np.abs(m - m.T)) > SYM_TOL * max(1.0, np.max(np.abs(m))):
            raise NotSpd("matrix is not symmetric")
        m = 0.5 * (m + m.T)
        m.setflags(write=False)
        self.entries = m
        self._eig: Optional[tuple[np.ndarray, np.ndarray]] = None
        if check and not self.eigenvalues[0] > 0.0:
            raise NotSpd(f"smallest eigenvalue {self.eigenvalues[0]:.3e} is not positive")

    @classmethod
    def identity(cls, q: int) -> "SpdMatrix":
        return cls(np.eye(q))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def _decompose(self):
        if self._eig is None:
            self._eig = jacobi_eigh(self.entries)
        return self._eig

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._decompose()[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        return self._decompose()[1]

    @property
    def lambda_min(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def condition(self) -> float:
        return self.lambda_max / self.lambda_min

    def inverse(self) -> "SpdMatrix":
        w, v = self._decompose()
        return SpdMatrix((v / w) @ v.T)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __matmul__(self, other):
        return self.entries @ np.asarray(other)

    def __repr__(self):
        return f"SpdMatrix({self.entries.tolist()})"


def spectral(M: SpdMatrix) -> tuple[float, float, float]:
    """``(lambda_min, lambda_max, theta)`` with ``theta = sqrt(lambda_min / lambda_max)``."""
    lo, hi = M.lambda_min, M.lambda_max
    if not lo > 0.0:
        raise NotSpd("matrix is not positive definite")
    return lo, hi, math.sqrt(lo / hi)


def sqrt_factor(M: SpdMatrix) -> SpdMatrix:
    """The symmetric positive definite square root of ``M``."""
    w, v = M._decompose()
    if not w[0] > 0.0:
        raise NotSpd("matrix is not positive definite")
    return SpdMatrix((v * np.sqrt(w)) @ v.T)


def m_norm(M, y) -> float:
    y = np.asarray(y, dtype=float)
    return math.sqrt(max(float(y @ np.asarray(M) @ y), 0.0))


@dataclass(frozen=True)
class MetricState:
    """Running second-moment matrix of unit cut normals."""

    q: int
    eps0: float = DEFAULT_EPS0
    k: int = 0
    sum_outer: np.ndarray = field(default=None)
    prior: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.eps0 > 0:
            raise ValueError("eps0 must be positive")
        if self.sum_outer is None:
            object.__setattr__(self, "sum_outer", np.zeros((self.q, self.q)))
        if self.prior is None:
            object.__setattr__(self, "prior", np.eye(self.q) / self.q)

    @property
    def sigma(self) -> np.ndarray:
        """The averaged normal moment; the prior before any cut."""
        if self.k == 0:
            return self.prior
        return self.sum_outer / self.k


def push_normal(state: MetricState, w) -> MetricState:
    w = np.asarray(w, dtype=float)
    nrm = float(np.linalg.norm(w))
    if not nrm > 1e-12:
        raise ZeroNormal("cut normal has zero length")
    u = w / nrm
    return MetricState(
        q=state.q,
        eps0=state.eps0,
        k=state.k + 1,
        sum_outer=state.sum_outer + np.outer(u, u),
        prior=state.prior,
    )


def materialize(state: MetricState) -> SpdMatrix:
    return SpdMatrix(state.eps0 * np.eye(state.q) + state.sigma)


def sigma_stats(state: MetricState) -> tuple[float, float]:
    """Extreme eigenvalues of the averaged normal moment."""
    if state.k == 0:
        raise NoNormalsYet("no cut normals accumulated yet")
    w, _ = jacobi_eigh(state.sum_outer / state.k)
    return float(w[0]), float(w[-1])
