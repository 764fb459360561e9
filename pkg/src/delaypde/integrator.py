"""Time integration of the truncated system with a state-dependent delayed argument.

Per mode the linear part ``-(lambda_k + d)`` is integrated exactly by its
exponential propagator, which keeps the discrete dynamics dissipative for any
step size; only the delayed reaction is approximated. Two schemes:

* ``ETD1``: exponential Euler, reaction frozen at the step start (first order);
* ``ETD2``: predictor-corrector with the standard second-order exponential
  weights, the corrector re-evaluating delay and reaction at the predicted
  endpoint window.

The delay is always evaluated explicitly from an already-computed window, so
no implicit solve is needed even when the delayed time falls inside the
current step; the O(h) error this introduces matches the ETD1 order, and the
ETD2 corrector recovers second order on smooth problems.

Each knot records the scheme derivative ``-(lambda_k + d) g_k + reaction_k``
evaluated at the finished frontier; this supplies the Hermite slopes of the
dense output. Knot derivatives are the scheme's representation of the motion,
not a statement about the continuum object.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .history import SUBSAMPLES, HistorySegment, Trajectory, TrajectoryKnot, hermite_dense
from .model import DelayReactionModel
from .spectral import SpectralField

#: Coefficient magnitude treated as blow-up; the continuum dynamics is
#: dissipative, so reaching this signals a configuration error.
OVERFLOW_LIMIT = 1e12


class BlowupError(RuntimeError):
    """A coefficient left the finite range the dissipative dynamics allows."""

    def __init__(self, time: float, worst: float):
        super().__init__(f"coefficient magnitude {worst:.3e} at t={time:.6g} exceeds {OVERFLOW_LIMIT:.0e}")
        self.time = time
        self.worst = worst


@dataclass(frozen=True)
class IntegratorConfig:
    """Scheme selection and the run grid; window/h and T/h must be integral."""

    h: float
    horizon: float
    damping: float = 0.0
    scheme: str = "ETD1"
    modified_nonlinearity: bool = False

    def __post_init__(self) -> None:
        if self.h <= 0 or self.horizon < 0:
            raise ValueError("need h > 0 and a nonnegative horizon")
        if self.damping < 0:
            raise ValueError("damping must be nonnegative")
        if self.scheme not in ("ETD1", "ETD2"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if abs(self.n_steps * self.h - self.horizon) > 1e-9 * max(1.0, self.horizon):
            raise ValueError(f"horizon {self.horizon} is not an integer multiple of h={self.h}")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.h))


@dataclass(frozen=True)
class SemigroupResult:
    """Output of one run: the final window, the dense trajectory, delay records."""

    final: HistorySegment
    trajectory: Trajectory
    delays: np.ndarray          # delay at each knot time >= 0
    delayed_times: np.ndarray   # t - delay at the same knots

    @property
    def horizon(self) -> float:
        return self.trajectory.time_of(self.trajectory.frontier)


def _phi1(z: np.ndarray) -> np.ndarray:
    """(1 - exp(-z)) / z with a series branch against cancellation for tiny z."""
    out = np.empty_like(z)
    small = z < 1e-4
    zs = z[small]
    out[small] = 1.0 - zs / 2.0 + zs * zs / 6.0 - zs * zs * zs / 24.0
    zl = z[~small]
    out[~small] = -np.expm1(-zl) / zl
    return out


def _phi2(z: np.ndarray) -> np.ndarray:
    """(z - 1 + exp(-z)) / z^2 with a series branch for tiny z."""
    out = np.empty_like(z)
    small = z < 1e-3
    zs = z[small]
    out[small] = 0.5 - zs / 6.0 + zs * zs / 24.0 - zs * zs * zs / 120.0
    zl = z[~small]
    out[~small] = (zl + np.expm1(-zl)) / (zl * zl)
    return out


class Integrator:
    """Single-writer advance of one trajectory; see module docstring for the schemes."""

    def __init__(self, model: DelayReactionModel, config: IntegratorConfig):
        if config.modified_nonlinearity and model.cutoff is None:
            raise ValueError("modified nonlinearity requested but the model has no cutoff")
        self.model = model
        self.config = config
        lam_d = model.lambdas + config.damping
        z = lam_d * config.h
        self._lam_d = lam_d
        self._decay = np.exp(-z)
        self._w1 = config.h * _phi1(z)
        self._w2 = config.h * _phi2(z)
        self._traj: Trajectory | None = None
        self._forcing: np.ndarray | None = None
        self._weak_weights = 1.0 / model.lambdas
        self._dense_weak: np.ndarray | None = None
        self._filled_intervals = 0  # intervals of the weak-norm curve densified so far

    # -- setup -----------------------------------------------------------------

    def start(self, phi: HistorySegment) -> Trajectory:
        """Install the initial window and fix the junction knot's scheme derivative."""
        cfg = self.config
        if abs(phi.h - cfg.h) > 1e-12 * cfg.h:
            raise ValueError("initial window knot spacing disagrees with the integrator step")
        if abs(phi.window - self.model.window) > 1e-9 * max(1.0, self.model.window):
            raise ValueError(
                f"initial window length {phi.window} does not match the delay window {self.model.window}"
            )
        n_hist = phi.n_knots - 1
        traj = Trajectory(self.model.domain, self.model.m, cfg.h, 0.0, n_hist, cfg.n_steps)
        traj.values[: n_hist + 1] = phi.values
        traj.derivs[: n_hist + 1] = phi.derivs
        traj.frontier = n_hist
        self._traj = traj
        if cfg.modified_nonlinearity:
            per = SUBSAMPLES + 1
            self._dense_weak = np.empty((traj.n_total - 1) * per + 1)
            self._filled_intervals = 0
        f0, tau0 = self._reaction_at(n_hist)
        # junction knot: the scheme derivative replaces the supplied closure slope,
        # so every knot with t >= 0 satisfies the discrete balance identically
        traj.derivs[n_hist] = -self._lam_d * traj.values[n_hist] + f0
        traj.delay_record[n_hist] = tau0
        self._forcing = f0
        return traj

    # -- cutoff plumbing ---------------------------------------------------------

    def _extend_dense(self, upto_interval: int) -> None:
        """Densify the weak-norm curve over intervals [filled, upto_interval)."""
        traj = self._traj
        per = SUBSAMPLES + 1
        for i in range(self._filled_intervals, upto_interval):
            block = hermite_dense(traj.values[i : i + 2], traj.derivs[i : i + 2], traj.h)
            self._dense_weak[i * per : (i + 1) * per + 1] = np.sqrt(block * block @ self._weak_weights)
        self._filled_intervals = max(self._filled_intervals, upto_interval)

    def _cutoff_scale(self, j: int) -> float:
        """Cutoff factor for the window ending at knot j.

        The weak sup combines the subsampled curve over intervals whose slopes
        are final (everything before knot j) with the frontier knot's own weak
        norm; the interior of the newest interval is excluded, an O(h^2)
        difference from the per-segment norm.
        """
        traj = self._traj
        per = SUBSAMPLES + 1
        self._extend_dense(j - 1)
        lo = per * (j - traj.history_len)
        hi = per * (j - 1) + 1
        window_max = float(self._dense_weak[lo:hi].max()) if hi > lo else 0.0
        g = traj.values[j]
        weak_now = float(np.sqrt(g * g @ self._weak_weights))
        strong_now = float(np.sqrt(g * g @ self.model.lambdas))
        norm = strong_now + self.config.damping * max(window_max, weak_now)
        return self.model.cutoff.scale(norm)

    def _reaction_at(self, j: int) -> tuple[np.ndarray, float]:
        segment = self._traj.segment_ending_at(j)
        coeffs, tau = self.model.reaction_and_delay(segment)
        if self.config.modified_nonlinearity:
            factor = self._cutoff_scale(j)
            if factor != 1.0:
                coeffs = factor * coeffs
        return coeffs, tau

    # -- stepping -----------------------------------------------------------------

    def advance(self) -> TrajectoryKnot:
        """One step of the configured scheme; returns the newly finished knot."""
        traj = self._traj
        if traj is None:
            raise RuntimeError("call start() before advancing")
        n = traj.frontier
        if n >= traj.n_total - 1:
            raise RuntimeError("horizon reached")
        f_n = self._forcing
        g_new = self._decay * traj.values[n] + self._w1 * f_n
        traj.values[n + 1] = g_new
        traj.derivs[n + 1] = -self._lam_d * g_new + f_n
        traj.frontier = n + 1
        if self.config.scheme == "ETD2":
            f_pred, _ = self._reaction_at(n + 1)
            g_new = g_new + self._w2 * (f_pred - f_n)
            traj.values[n + 1] = g_new
            traj.derivs[n + 1] = -self._lam_d * g_new + f_pred
        self._check_finite(n + 1)
        f_new, tau_new = self._reaction_at(n + 1)
        traj.derivs[n + 1] = -self._lam_d * g_new + f_new
        traj.delay_record[n + 1] = tau_new
        self._forcing = f_new
        return traj.knot(n + 1)

    def _check_finite(self, i: int) -> None:
        row = self._traj.values[i]
        worst = float(np.max(np.abs(row)))
        if not np.isfinite(worst) or worst > OVERFLOW_LIMIT:
            raise BlowupError(self._traj.time_of(i), worst)

    def run(self, phi: HistorySegment) -> SemigroupResult:
        traj = self.start(phi)
        for _ in range(self.config.n_steps):
            self.advance()
        i0 = traj.history_len
        delays = traj.delay_record[i0:].copy()
        times = traj.times()[i0:]
        return SemigroupResult(
            final=traj.segment_ending_at(traj.frontier),
            trajectory=traj,
            delays=delays,
            delayed_times=times - delays,
        )


def integrate(phi: HistorySegment, model: DelayReactionModel, config: IntegratorConfig) -> SemigroupResult:
    """Advance the window ``phi`` over the configured horizon; deterministic."""
    return Integrator(model, config).run(phi)


def semigroup_apply(
    phi: HistorySegment, t: float, model: DelayReactionModel, config: IntegratorConfig
) -> HistorySegment:
    """The evolution map: the window at time ``t`` of the run started from ``phi``.

    ``t`` must sit on the step grid; ``t = 0`` returns ``phi`` itself.
    """
    if t == 0.0:
        return phi
    steps = round(t / config.h)
    if steps < 1 or abs(steps * config.h - t) > 1e-9 * max(1.0, abs(t)):
        raise ValueError(f"time {t} is not a positive multiple of the step {config.h}")
    run_cfg = IntegratorConfig(
        h=config.h,
        horizon=steps * config.h,
        damping=config.damping,
        scheme=config.scheme,
        modified_nonlinearity=config.modified_nonlinearity,
    )
    return integrate(phi, model, run_cfg).final
