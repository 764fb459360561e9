"""Dirichlet-Laplacian eigenbasis on a 1-D interval.

Everything downstream works in the orthonormal sine basis of ``-u''`` with
homogeneous Dirichlet conditions on ``(0, length)``:

    lambda_k = (k*pi/length)**2,   e_k(x) = sqrt(2/length) * sin(k*pi*x/length)

Fields are stored as coefficient vectors against this basis, so fractional
powers of the operator act diagonally and all norms are weighted Euclidean
norms of the coefficients.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Hard ceiling on the truncation order accepted anywhere in the package.
MAX_TRUNCATION = 256


@dataclass(frozen=True)
class Domain1D:
    """Open interval ``(0, length)``; ``measure`` is its length."""

    length: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.length) or self.length <= 0.0:
            raise ValueError(f"domain length must be positive, got {self.length}")

    @property
    def measure(self) -> float:
        return self.length


@dataclass(frozen=True)
class QuadratureGrid:
    """Gauss-Legendre nodes/weights mapped onto the domain interior."""

    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss_legendre(cls, domain: Domain1D, n: int) -> "QuadratureGrid":
        """Build an ``n``-node Gauss-Legendre rule on ``(0, length)``.

        A single global panel: the integrands met here (products of sines,
        Gaussians and smooth bumps) are resolved to near machine precision
        once ``n`` exceeds roughly eight nodes per retained mode.
        """
        if n < 2:
            raise ValueError("quadrature needs at least 2 nodes")
        x, w = np.polynomial.legendre.leggauss(n)
        half = 0.5 * domain.length
        return cls(nodes=half * (x + 1.0), weights=half * w)

    @property
    def n(self) -> int:
        return self.nodes.size


def eigenvalue(k: int, domain: Domain1D) -> float:
    """k-th Dirichlet eigenvalue ``(k*pi/length)**2``; indices start at 1."""
    if k < 1:
        raise ValueError(f"eigenvalue index must be >= 1, got {k}")
    return (k * np.pi / domain.length) ** 2


def eigenvalues(m: int, domain: Domain1D) -> np.ndarray:
    """Vector of the first ``m`` eigenvalues."""
    if m < 1:
        raise ValueError(f"truncation order must be >= 1, got {m}")
    k = np.arange(1, m + 1, dtype=float)
    return (k * np.pi / domain.length) ** 2


def eigenfunction_eval(k: int, x: float, domain: Domain1D) -> float:
    """Evaluate the orthonormal eigenfunction ``e_k`` at an interior point."""
    if k < 1:
        raise ValueError(f"eigenfunction index must be >= 1, got {k}")
    if not 0.0 < x < domain.length:
        raise ValueError(f"x={x} outside the open interval (0, {domain.length})")
    return np.sqrt(2.0 / domain.length) * np.sin(k * np.pi * x / domain.length)


def basis_matrix(domain: Domain1D, grid: QuadratureGrid, m: int) -> np.ndarray:
    """Matrix ``E[k-1, q] = e_k(x_q)`` for the first ``m`` eigenfunctions."""
    _check_truncation(m)
    k = np.arange(1, m + 1, dtype=float)[:, None]
    return np.sqrt(2.0 / domain.length) * np.sin(k * np.pi * grid.nodes[None, :] / domain.length)


@dataclass(frozen=True)
class SpectralField:
    """A state snapshot: coefficients against the first ``m`` eigenfunctions.

    Treated as immutable; every operation returns a fresh instance.
    """

    coeffs: np.ndarray
    domain: Domain1D

    def __post_init__(self) -> None:
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=float))
        _check_truncation(self.m)

    @property
    def m(self) -> int:
        return self.coeffs.size

    @classmethod
    def zero(cls, m: int, domain: Domain1D) -> "SpectralField":
        return cls(np.zeros(m), domain)


def project(samples: np.ndarray, m: int, grid: QuadratureGrid, domain: Domain1D) -> SpectralField:
    """Quadrature projection of grid samples onto the first ``m`` modes."""
    _check_truncation(m)
    samples = np.asarray(samples, dtype=float)
    if samples.shape != grid.nodes.shape:
        raise ValueError("samples must be defined on every quadrature node")
    e = basis_matrix(domain, grid, m)
    return SpectralField(e @ (samples * grid.weights), domain)


def synthesize(field: SpectralField, grid: QuadratureGrid) -> np.ndarray:
    """Point values of the field on the quadrature nodes."""
    e = basis_matrix(field.domain, grid, field.m)
    return field.coeffs @ e


def frac_apply(s: float, field: SpectralField) -> SpectralField:
    """Apply the fractional operator power: coefficient k scales by lambda_k**s."""
    lam = eigenvalues(field.m, field.domain)
    return SpectralField(lam**s * field.coeffs, field.domain)


def frac_norm(s: float, field: SpectralField) -> float:
    """Norm ``(sum_k lambda_k**(2s) g_k**2)**0.5``; ``s=0`` is the L2 norm."""
    lam = eigenvalues(field.m, field.domain)
    return float(np.sqrt(np.sum(lam ** (2.0 * s) * field.coeffs**2)))


def _check_truncation(m: int) -> None:
    if m > MAX_TRUNCATION:
        raise ValueError(f"truncation order {m} exceeds the configured maximum {MAX_TRUNCATION}")
