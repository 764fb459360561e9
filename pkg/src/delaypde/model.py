"""Assembly of the delayed reaction term and its Lipschitz data.

The right-hand side applied at a history window ``u_t`` is

    reaction(u_t)(x) = birth( [K u(t - delay(u_t), .)](x) )

where ``K`` is a smoothing integral operator (Gaussian kernel masked by a
compactly supported bump so Dirichlet conditions are respected), ``birth`` is
a bounded scalar map applied pointwise, and ``delay`` maps the window to a
lag in ``[0, r]``. Each ingredient carries the constants the certification
layer needs: the operator's weak-to-L2 gain, the birth bound and Lipschitz
constant, and the delay functional's Lipschitz constant with respect to the
weak sup norm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .history import HistorySegment
from .spectral import (
    Domain1D,
    QuadratureGrid,
    SpectralField,
    basis_matrix,
    eigenvalues,
)


class ResolutionError(ValueError):
    """Quadrature grid too coarse to resolve the kernel or the requested modes."""


# -- kernel ------------------------------------------------------------------

@dataclass(frozen=True)
class KernelSpec:
    """Gaussian convolution kernel masked by a smooth bump window.

    ``kernel(s) = (4*pi*alpha)**-0.5 * exp(-s^2 / (4*alpha))``; the window is
    the standard bump supported on ``[delta*L, (1-delta)*L]``, identically zero
    outside with all derivatives vanishing at the support ends, and peak value 1.
    """

    alpha: float
    delta: float

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise ValueError("kernel width alpha must be positive")
        if not 0.0 < self.delta < 0.5:
            raise ValueError("window margin delta must lie in (0, 1/2)")

    def kernel_values(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.exp(-(s * s) / (4.0 * self.alpha)) / math.sqrt(4.0 * math.pi * self.alpha)

    def window_values(self, y: np.ndarray, domain: Domain1D) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        z = (2.0 * y / domain.length - 1.0) / (1.0 - 2.0 * self.delta)
        out = np.zeros_like(z)
        inside = np.abs(z) < 1.0
        zi = z[inside]
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - zi * zi))
        return out

    def min_nodes(self, m: int) -> int:
        return max(8 * m, int(np.ceil(16.0 / math.sqrt(self.alpha))))


@dataclass(frozen=True)
class KernelOperator:
    """Galerkin matrix of the smoothing operator plus its truncated weak gain.

    ``weak_gain`` is the smallest constant L with ``||K v|| <= L * ||A^{-1/2} v||``
    for every field in the truncation, i.e. the largest singular value of the
    matrix with columns scaled by ``lambda_k**0.5``.
    """

    matrix: np.ndarray
    weak_gain: float
    domain: Domain1D

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    def apply(self, field: SpectralField) -> SpectralField:
        if field.m != self.m:
            raise ValueError("field truncation does not match the operator")
        return SpectralField(self.matrix @ field.coeffs, field.domain)


def assemble_kernel_operator(
    kernel: KernelSpec, m: int, grid: QuadratureGrid, domain: Domain1D
) -> KernelOperator:
    """Tensor-quadrature assembly of ``<K e_k, e_j>`` for the first ``m`` modes."""
    if grid.n < kernel.min_nodes(m):
        raise ResolutionError(
            f"grid with {grid.n} nodes under-resolves the kernel; need >= {kernel.min_nodes(m)}"
        )
    x = grid.nodes
    kmat = kernel.kernel_values(x[:, None] - x[None, :]) * kernel.window_values(x, domain)[None, :]
    ew = basis_matrix(domain, grid, m) * grid.weights
    matrix = ew @ kmat @ ew.T
    gain = float(np.linalg.norm(matrix * np.sqrt(eigenvalues(m, domain)), ord=2))
    return KernelOperator(matrix=matrix, weak_gain=gain, domain=domain)


class WeakGainEstimate(NamedTuple):
    """Spectral-sum estimate of the continuum weak gain with its refinement data."""

    value: float        # evaluation with 2*modes terms
    coarse: float       # evaluation with modes terms
    rel_change: float   # (value - coarse) / value; truncation flag


def convolution_weak_gain(
    kernel: KernelSpec, modes: int, grid: QuadratureGrid, domain: Domain1D
) -> WeakGainEstimate:
    """Continuum weak-gain estimate ``(int_x ||A^{1/2} k(.-x) w(.)||^2 dx)^{1/2}``.

    For each quadrature node x the masked kernel slice is expanded spectrally;
    the sum ``sum_k lambda_k c_k^2`` is evaluated with ``modes`` and ``2*modes``
    terms and integrated over x. The spectral sum is monotone in the number of
    terms, so the pair certifies stabilization under refinement; the returned
    value is the finer evaluation. The grid must resolve ``2*modes``.
    """
    if grid.n < kernel.min_nodes(2 * modes):
        raise ResolutionError(
            f"grid with {grid.n} nodes cannot resolve {2 * modes} modes; "
            f"need >= {kernel.min_nodes(2 * modes)}"
        )
    x = grid.nodes
    slices = kernel.kernel_values(x[None, :] - x[:, None]) * kernel.window_values(x, domain)[None, :]
    coeffs = slices @ (basis_matrix(domain, grid, 2 * modes) * grid.weights).T
    lam = eigenvalues(2 * modes, domain)
    per_x_fine = coeffs**2 @ lam
    per_x_coarse = coeffs[:, :modes] ** 2 @ lam[:modes]
    fine = float(np.sqrt(grid.weights @ per_x_fine))
    coarse = float(np.sqrt(grid.weights @ per_x_coarse))
    if fine < coarse - 1e-12 * max(1.0, coarse):
        raise AssertionError("spectral sum decreased under refinement; inconsistent quadrature")
    rel = (fine - coarse) / fine if fine > 0 else 0.0
    return WeakGainEstimate(value=fine, coarse=coarse, rel_change=rel)


# -- birth functions ----------------------------------------------------------

@dataclass(frozen=True)
class NicholsonBirth:
    """Clamped blowflies birth rate ``p * w * exp(-w)`` on ``w = clip(v, 0, cap)``.

    The raw map is unbounded for negative arguments; clamping to ``[0, cap]``
    enforces global boundedness and Lipschitz continuity while leaving the
    biologically relevant range untouched.
    """

    p: float
    cap: float = 50.0

    def __post_init__(self) -> None:
        if self.p < 0 or self.cap <= 0:
            raise ValueError("need p >= 0 and a positive clamp")

    @property
    def bound(self) -> float:
        if self.cap >= 1.0:
            return self.p / math.e
        return self.p * self.cap * math.exp(-self.cap)

    @property
    def lipschitz(self) -> float:
        # sup |b'| over [0, cap] sits at w = 0 with value p
        return self.p

    def __call__(self, v: np.ndarray) -> np.ndarray:
        w = np.clip(v, 0.0, self.cap)
        return self.p * w * np.exp(-w)


@dataclass(frozen=True)
class ConstantBirth:
    value: float

    @property
    def bound(self) -> float:
        return abs(self.value)

    @property
    def lipschitz(self) -> float:
        return 0.0

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return np.full_like(np.asarray(v, dtype=float), self.value)


@dataclass(frozen=True)
class ZeroBirth:
    bound: float = 0.0
    lipschitz: float = 0.0

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(v, dtype=float))


BirthFunction = Union[NicholsonBirth, ConstantBirth, ZeroBirth]

#: sup over x >= 0 of |d/dx (1 + x^2)^{-1}| = 3*sqrt(3)/8, attained at x = 1/sqrt(3)
_SATURATION_SLOPE = 3.0 * math.sqrt(3.0) / 8.0


# -- delay functionals ---------------------------------------------------------

@dataclass(frozen=True)
class ConstantDelay:
    """State-independent lag; Lipschitz constant zero."""

    value: float
    window: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= self.window:
            raise ValueError("constant delay must lie in [0, window]")

    lipschitz = 0.0
    state_dependent = False

    def __call__(self, segment: HistorySegment) -> float:
        return self.value


@dataclass(frozen=True)
class PointStateDelay:
    """Lag driven by the weak norm of the current state.

    ``delay = minimum + (window - minimum) / (1 + c * ||A^{-1/2} u(t)||^2)``:
    large states shorten the lag toward ``minimum``, the rest state feels the
    full window. The Lipschitz constant w.r.t. the weak sup norm is
    ``(window - minimum) * (3*sqrt(3)/8) * sqrt(c)``.
    """

    minimum: float
    window: float
    sensitivity: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.minimum <= self.window:
            raise ValueError("need 0 <= minimum <= window")
        if self.sensitivity < 0:
            raise ValueError("sensitivity must be nonnegative")

    state_dependent = True

    @property
    def lipschitz(self) -> float:
        return (self.window - self.minimum) * _SATURATION_SLOPE * math.sqrt(self.sensitivity)

    def __call__(self, segment: HistorySegment) -> float:
        lam = eigenvalues(segment.m, segment.domain)
        x2 = float(segment.values[-1] ** 2 @ (1.0 / lam))
        return self.minimum + (self.window - self.minimum) / (1.0 + self.sensitivity * x2)


@dataclass(frozen=True)
class IntegralStateDelay:
    """Lag driven by the window average of the weak norm.

    Same saturation profile as :class:`PointStateDelay` but fed with the
    uniform average ``(1/r) * int ||A^{-1/2} u(theta)|| dtheta`` over the whole
    window (trapezoid on the knots), so the delay genuinely depends on the full
    segment. The averaging weight has unit mass, so the Lipschitz constant is
    the same expression as for the point variant.
    """

    minimum: float
    window: float
    sensitivity: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.minimum <= self.window:
            raise ValueError("need 0 <= minimum <= window")
        if self.sensitivity < 0:
            raise ValueError("sensitivity must be nonnegative")

    state_dependent = True

    @property
    def lipschitz(self) -> float:
        return (self.window - self.minimum) * _SATURATION_SLOPE * math.sqrt(self.sensitivity)

    def __call__(self, segment: HistorySegment) -> float:
        lam = eigenvalues(segment.m, segment.domain)
        norms = np.sqrt(segment.values**2 @ (1.0 / lam))
        weights = np.full(segment.n_knots, segment.h)
        weights[0] *= 0.5
        weights[-1] *= 0.5
        avg = float(weights @ norms) / segment.window
        return self.minimum + (self.window - self.minimum) / (1.0 + self.sensitivity * avg * avg)


DelayFunctional = Union[ConstantDelay, PointStateDelay, IntegralStateDelay]


# -- cutoff --------------------------------------------------------------------

def _bump_factor(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


@dataclass(frozen=True)
class SmoothCutoff:
    """C-infinity plateau function: 1 on [0,1], 0 on [2,inf), smooth in between.

    Realized as ``q(2-s) / (q(2-s) + q(s-1))`` with ``q(x) = exp(-1/x)`` for
    positive x; the quotient is symmetric, so the transition midpoint is
    ``chi(1.5) = 1/2`` exactly. ``radius`` is the reference scale dividing the
    norm fed to the cutoff.
    """

    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError("cutoff radius must be positive")

    def chi(self, s: float | np.ndarray) -> float | np.ndarray:
        arr = np.asarray(s, dtype=float)
        if np.any(arr < 0):
            raise ValueError("the cutoff argument must be nonnegative")
        up = _bump_factor(2.0 - arr)
        down = _bump_factor(arr - 1.0)
        out = up / (up + down)
        return float(out) if np.isscalar(s) or arr.ndim == 0 else out

    def scale(self, norm_value: float) -> float:
        """Cutoff factor for a window with the given cutoff norm."""
        return float(self.chi(norm_value / self.radius))


# -- assembled model -------------------------------------------------------------

@dataclass(frozen=True)
class DelayReactionModel:
    """Everything needed to evaluate the delayed reaction on history windows."""

    domain: Domain1D
    grid: QuadratureGrid
    m: int
    kernel_op: KernelOperator
    birth: BirthFunction
    delay: DelayFunctional
    cutoff: SmoothCutoff | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "_basis", basis_matrix(self.domain, self.grid, self.m))
        object.__setattr__(self, "_proj", self._basis * self.grid.weights)
        object.__setattr__(self, "_lam", eigenvalues(self.m, self.domain))

    @property
    def window(self) -> float:
        return self.delay.window

    @property
    def lambdas(self) -> np.ndarray:
        return self._lam

    @property
    def reaction_bound(self) -> float:
        """L2 bound on the reaction: birth bound times sqrt of the domain measure."""
        return self.birth.bound * math.sqrt(self.domain.measure)

    def delay_of(self, segment: HistorySegment) -> float:
        return self.delay(segment)

    def reaction_and_delay(self, segment: HistorySegment) -> tuple[np.ndarray, float]:
        """Reaction coefficients and the delay used; raw-array fast path."""
        tau = self.delay(segment)
        delayed = segment.eval(-tau)
        smoothed = self.kernel_op.matrix @ delayed.coeffs
        values = smoothed @ self._basis
        fed = self.birth(values)
        return self._proj @ fed, tau

    def reaction(self, segment: HistorySegment) -> SpectralField:
        coeffs, _ = self.reaction_and_delay(segment)
        return SpectralField(coeffs, self.domain)

    def reaction_modified(self, segment: HistorySegment, damping: float) -> SpectralField:
        """Reaction scaled by the cutoff of the window's cutoff norm.

        Identical to :meth:`reaction` (bit for bit) while the cutoff norm stays
        below the reference radius; identically zero beyond twice the radius.
        """
        if self.cutoff is None:
            raise ValueError("model was assembled without a cutoff")
        factor = self.cutoff.scale(segment.cutoff_norm(damping))
        raw = self.reaction(segment)
        if factor == 1.0:
            return raw
        return SpectralField(factor * raw.coeffs, self.domain)
