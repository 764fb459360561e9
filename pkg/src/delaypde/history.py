"""Dense-in-time solution storage and the function-space norms on history windows.

A trajectory is a uniform grid of knots carrying the state coefficients and
their time derivatives; between knots the solution is the piecewise cubic
Hermite interpolant of the coefficient vectors, which keeps the history C^1
across knot boundaries. A history segment is a zero-copy view of the window
``[t - r, t]`` evaluated in window coordinates ``theta in [-r, 0]``.

Suprema over a window are estimated on the knots plus ``SUBSAMPLES`` interior
points per interval. The interpolant is cubic between knots, so this grid
estimate is a lower bound on the continuum supremum that is accurate to
O(h) of the interval variation; it is reported as an estimate, not a
certified upper bound.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .spectral import Domain1D, SpectralField, eigenvalues

#: Snap tolerance, in knot-index units, for treating an evaluation point as a knot.
KNOT_SNAP = 1e-9
#: Interior samples per knot interval used by all supremum estimates.
SUBSAMPLES = 8


# -- cubic Hermite kernels ---------------------------------------------------

def _hermite_weights(s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    s2 = s * s
    s3 = s2 * s
    return 2 * s3 - 3 * s2 + 1, s3 - 2 * s2 + s, -2 * s3 + 3 * s2, s3 - s2


def _hermite_slope_weights(s: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    s2 = s * s
    return 6 * s2 - 6 * s, 3 * s2 - 4 * s + 1, -6 * s2 + 6 * s, 3 * s2 - 2 * s


def hermite_dense(
    values: np.ndarray,
    derivs: np.ndarray,
    h: float,
    sub: int = SUBSAMPLES,
    derivative: bool = False,
) -> np.ndarray:
    """Sample the Hermite interpolant on knots plus ``sub`` points per interval.

    Returns an array of shape ``((n-1)*(sub+1) + 1, m)``: for each interval its
    left knot followed by the interior samples, then the final knot.
    With ``derivative=True`` the interpolant's time derivative is sampled.
    """
    n, m = values.shape
    per = sub + 1
    out = np.empty(((n - 1) * per + 1, m))
    s = np.arange(per, dtype=float)[None, :, None] / per
    if derivative:
        w0, w1, w2, w3 = _hermite_slope_weights(s)
        scale_v, scale_d = 1.0 / h, 1.0
    else:
        w0, w1, w2, w3 = _hermite_weights(s)
        scale_v, scale_d = 1.0, h
    # chunked to bound the (intervals, per, m) temporary
    chunk = max(1, 2_000_000 // (per * m))
    for lo in range(0, n - 1, chunk):
        hi = min(lo + chunk, n - 1)
        y0 = values[lo:hi, None, :]
        y1 = values[lo + 1 : hi + 1, None, :]
        d0 = derivs[lo:hi, None, :]
        d1 = derivs[lo + 1 : hi + 1, None, :]
        block = scale_v * (w0 * y0 + w2 * y1) + scale_d * (w1 * d0 + w3 * d1)
        out[lo * per : hi * per] = block.reshape(-1, m)
    if derivative:
        out[-1] = derivs[-1]
    else:
        out[-1] = values[-1]
    return out


def weighted_norm_curve(
    values: np.ndarray,
    derivs: np.ndarray,
    h: float,
    weights: np.ndarray,
    sub: int = SUBSAMPLES,
    derivative: bool = False,
) -> np.ndarray:
    """Per-point norms ``sqrt(sum_k weights_k * v_k^2)`` of the dense samples."""
    dense = hermite_dense(values, derivs, h, sub=sub, derivative=derivative)
    return np.sqrt(dense * dense @ weights)


# -- trajectory --------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryKnot:
    """State and scheme derivative at a single knot time."""

    time: float
    state: SpectralField
    state_derivative: SpectralField


class Trajectory:
    """Preallocated uniform-grid knot storage for one run, history included.

    Rows ``0 .. history_len`` hold the initial history on ``[t0 - r, t0]``;
    later rows are appended by the integrator (single writer). ``delay_record``
    holds the delay evaluated at each knot time >= t0, NaN before that.
    """

    def __init__(self, domain: Domain1D, m: int, h: float, t0: float, history_len: int, n_steps: int):
        if h <= 0:
            raise ValueError("step must be positive")
        n_total = history_len + n_steps + 1
        self.domain = domain
        self.h = float(h)
        self.t0 = float(t0)
        self.history_len = int(history_len)
        self.values = np.zeros((n_total, m))
        self.derivs = np.zeros((n_total, m))
        self.delay_record = np.full(n_total, np.nan)
        self.frontier = -1  # index of the last written row

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def n_total(self) -> int:
        return self.values.shape[0]

    @property
    def t_start(self) -> float:
        return self.t0 - self.history_len * self.h

    @property
    def window_length(self) -> float:
        return self.history_len * self.h

    def times(self) -> np.ndarray:
        return self.t_start + np.arange(self.n_total) * self.h

    def time_of(self, i: int) -> float:
        return self.t_start + i * self.h

    def index_of(self, t: float) -> int:
        """Knot index of an on-grid time; off-grid times are rejected."""
        x = (t - self.t_start) / self.h
        i = int(round(x))
        if abs(x - i) > KNOT_SNAP * max(1.0, abs(x)) or not 0 <= i <= self.frontier:
            raise ValueError(f"time {t} is not a filled knot of this trajectory")
        return i

    def knot(self, i: int) -> TrajectoryKnot:
        return TrajectoryKnot(
            time=self.time_of(i),
            state=SpectralField(self.values[i].copy(), self.domain),
            state_derivative=SpectralField(self.derivs[i].copy(), self.domain),
        )

    def segment_ending_at(self, i: int) -> "HistorySegment":
        """Zero-copy view of the window of ``history_len`` intervals ending at row i."""
        if i < self.history_len:
            raise ValueError("window extends before the stored history")
        if i > self.frontier:
            raise ValueError("window extends beyond the write frontier")
        lo = i - self.history_len
        return HistorySegment(self.values[lo : i + 1], self.derivs[lo : i + 1], self.h, self.domain)

    def segment_at(self, t: float) -> "HistorySegment":
        return self.segment_ending_at(self.index_of(t))


# -- history segment ---------------------------------------------------------

@dataclass(frozen=True)
class HistorySegment:
    """The window ``theta in [-r, 0]`` of a solution, in Hermite knot form.

    ``values`` and ``derivs`` have one row per knot; ``r = (n-1)*h``. Segments
    are read-only views; all evaluations happen in window coordinates so that
    results are independent of where the window sits in absolute time.
    """

    values: np.ndarray
    derivs: np.ndarray
    h: float
    domain: Domain1D

    def __post_init__(self) -> None:
        if self.values.ndim != 2 or self.values.shape != self.derivs.shape:
            raise ValueError("values and derivs must be matching (knots, modes) arrays")
        if self.values.shape[0] < 2:
            raise ValueError("a history window needs at least two knots")

    @property
    def n_knots(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def window(self) -> float:
        return (self.n_knots - 1) * self.h

    def _locate(self, theta: float) -> tuple[int, float]:
        """Map theta to (interval index, local coordinate); knots snap exactly."""
        n = self.n_knots
        x = (theta + self.window) / self.h
        i_near = int(round(x))
        if abs(x - i_near) <= KNOT_SNAP and 0 <= i_near <= n - 1:
            return i_near, 0.0
        if x < 0.0 or x > n - 1:
            raise ValueError(f"theta={theta} outside the window [-{self.window}, 0]")
        i = min(int(np.floor(x)), n - 2)
        return i, x - i

    def eval(self, theta: float) -> SpectralField:
        """Cubic Hermite evaluation; exact (bit-for-bit) at knots."""
        i, s = self._locate(theta)
        if s == 0.0:
            return SpectralField(self.values[i].copy(), self.domain)
        w0, w1, w2, w3 = _hermite_weights(np.float64(s))
        coeffs = (
            w0 * self.values[i]
            + w2 * self.values[i + 1]
            + self.h * (w1 * self.derivs[i] + w3 * self.derivs[i + 1])
        )
        return SpectralField(coeffs, self.domain)

    def eval_derivative(self, theta: float) -> SpectralField:
        """Time derivative of the interpolant; returns the knot derivative at knots."""
        i, s = self._locate(theta)
        if s == 0.0:
            return SpectralField(self.derivs[i].copy(), self.domain)
        w0, w1, w2, w3 = _hermite_slope_weights(np.float64(s))
        coeffs = (w0 * self.values[i] + w2 * self.values[i + 1]) / self.h + (
            w1 * self.derivs[i] + w3 * self.derivs[i + 1]
        )
        return SpectralField(coeffs, self.domain)

    def end_state(self) -> SpectralField:
        return SpectralField(self.values[-1].copy(), self.domain)

    # norm estimates on the knots + SUBSAMPLES evaluation grid

    def _weights(self, power: float) -> np.ndarray:
        return eigenvalues(self.m, self.domain) ** power

    def sup_weak_norm(self, sub: int = SUBSAMPLES) -> float:
        """Estimate of ``max_theta`` of the weak norm ``||A^{-1/2} u(theta)||``."""
        curve = weighted_norm_curve(self.values, self.derivs, self.h, self._weights(-1.0), sub=sub)
        return float(curve.max())

    def lip_seminorm(self, sub: int = SUBSAMPLES) -> float:
        """Lipschitz seminorm estimate: sup of ``||A^{-1/2} u'(theta)||``.

        For C^1 curves this coincides with the sup of difference quotients;
        sampling the derivative costs O(grid) instead of O(grid^2).
        """
        curve = weighted_norm_curve(
            self.values, self.derivs, self.h, self._weights(-1.0), sub=sub, derivative=True
        )
        return float(curve.max())

    def strong_end_norm(self) -> float:
        """``||A^{1/2} u(0)||`` at the window end."""
        return float(np.sqrt(self.values[-1] ** 2 @ self._weights(1.0)))

    def history_norm(self) -> float:
        """Natural norm on admissible histories: weak sup + Lipschitz seminorm + strong end norm."""
        return self.sup_weak_norm() + self.lip_seminorm() + self.strong_end_norm()

    def cutoff_norm(self, d: float) -> float:
        """Strong end norm plus ``d`` times the weak sup; the cutoff's argument."""
        return self.strong_end_norm() + d * self.sup_weak_norm()


def segment_metric(a: HistorySegment, b: HistorySegment, sub: int = SUBSAMPLES) -> float:
    """State-space metric: weak sup of the difference plus strong norm of the end difference.

    Symmetric, zero exactly when the two windows agree on the evaluation grid.
    """
    if a.n_knots != b.n_knots or abs(a.h - b.h) > KNOT_SNAP * a.h:
        raise ValueError("segments live on mismatched windows")
    dv = a.values - b.values
    dd = a.derivs - b.derivs
    weak = weighted_norm_curve(dv, dd, a.h, a._weights(-1.0), sub=sub)
    strong_end = np.sqrt(dv[-1] ** 2 @ a._weights(1.0))
    return float(weak.max() + strong_end)


def linear_history(
    domain: Domain1D,
    m: int,
    h: float,
    n_intervals: int,
    terms: Iterable[Sequence[float]],
) -> HistorySegment:
    """Closed-form initial history with per-mode coefficients ``a_k * (1 + s_k * theta)``.

    ``terms`` is an iterable of ``(k, a_k, s_k)``. Linear-in-theta data is
    reproduced exactly by the Hermite format, so membership in the admissible
    class (finite Lipschitz seminorm, strong end state) holds by construction.
    """
    n = n_intervals + 1
    values = np.zeros((n, m))
    derivs = np.zeros((n, m))
    thetas = (np.arange(n) - n_intervals) * h
    for k, a, s in terms:
        k = int(k)
        if not 1 <= k <= m:
            raise ValueError(f"history mode {k} outside 1..{m}")
        values[:, k - 1] += a * (1.0 + s * thetas)
        derivs[:, k - 1] += a * s
    return HistorySegment(values, derivs, h, domain)
