"""Certification of the dissipativity, energy, and continuous-dependence estimates.

Every check reduces a proved inequality to arrays over the knot grid and emits
:class:`BoundReport` records carrying the estimate id, the measured quantity,
the mathematical bound, and the margin. Tolerance policy: energy inequalities
get the discretization-aware slack ``1e-3 * (1 + t)`` (integration error
accumulates linearly); algebraic identities get a fixed ``1e-6``. A report
passes when ``margin >= -tolerance``.

Legend of estimate ids emitted here and by the run scenarios:

=============  ==================================================================
Eq13           per-step energy rate: d/dt (strong norm)^2 + dissipation <= ceiling
Eq14           integrated energy ledger with accumulated dissipation
Eq30           exponential decay of the strong norm to the dissipative ceiling
Eq23           strong norm plus weak rate against the decaying envelope
Eq19           Lipschitz chain for the delayed reaction on window pairs
Eq20a          continuous dependence in the state metric with the Gronwall gain
Eq21           continuous dependence of the weak sup norm alone
Eq24           entry and permanence in the energy-rate ball
Eq27           entry and permanence in the fractional-smoothing ball
Eq28/29        combined absorbing ball: entry time against the horizon
Eq32-empirical sampled invariance of the Lipschitz ball (evidence, not proof)
Eq7-residual   weak-form residual against separable test functions
=============  ==================================================================
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.ndimage import maximum_filter1d

from .history import SUBSAMPLES, HistorySegment, Trajectory, hermite_dense, weighted_norm_curve
from .integrator import IntegratorConfig, SemigroupResult, integrate
from .model import DelayReactionModel

ALGEBRAIC_TOL = 1e-6


def energy_tolerance(t):
    """Slack for energy inequalities; grows linearly like the integration error."""
    return 1e-3 * (1.0 + t)


@dataclass(frozen=True)
class BoundReport:
    """One certified inequality at one instant: pass iff margin >= -tolerance."""

    eq: str
    t: float
    measured: float
    bound: float
    margin: float
    passed: bool
    context: str = ""

    @classmethod
    def make(cls, eq: str, t: float, measured: float, bound: float, tol: float, context: str = "") -> "BoundReport":
        margin = bound - measured
        return cls(eq=eq, t=float(t), measured=float(measured), bound=float(bound),
                   margin=float(margin), passed=bool(margin >= -tol), context=context)

    def to_dict(self) -> dict:
        return {"eq": self.eq, "t": self.t, "measured": self.measured,
                "bound": self.bound, "margin": self.margin, "pass": self.passed,
                "context": self.context}


# -- constants ledger ----------------------------------------------------------

@dataclass(frozen=True)
class ConstantsLedger:
    """All constants entering the estimates, raw and derived.

    ``path_lipschitz`` is the Lipschitz constant of the comparison trajectory
    in the weak norm, measured a posteriori from its dense output: the sharpest
    value for which the dependence gain is valid along that run.
    """

    birth_lipschitz: float
    kernel_gain: float
    delay_lipschitz: float
    birth_bound: float
    lambda_min: float
    domain_measure: float
    damping: float
    window: float
    path_lipschitz: float
    horizon: float
    alpha: float
    eps: float
    eps0: float
    reaction_lipschitz: float = field(init=False)
    dependence_gain: float = field(init=False)
    energy_radius: float = field(init=False)
    smoothing_radius: float = field(init=False)
    absorbing_radius: float = field(init=False)
    invariance_radius: float = field(init=False)

    def __post_init__(self) -> None:
        if not 0.5 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (1/2, 1), got {self.alpha}")
        c = self.birth_lipschitz * self.kernel_gain * (1.0 + self.path_lipschitz * self.delay_lipschitz)
        object.__setattr__(self, "reaction_lipschitz", c)
        d_gain = math.sqrt(2.0 * self.horizon) * math.exp(-0.5) * c + float(
            gronwall_bracket(c, self.lambda_min, self.horizon)
        )
        object.__setattr__(self, "dependence_gain", d_gain)
        mass = self.birth_bound * math.sqrt(self.domain_measure)
        r0 = math.sqrt((1.0 + 3.0 / self.lambda_min) * mass * mass + self.eps0)
        object.__setattr__(self, "energy_radius", r0)
        a = self.alpha
        r_alpha = (a - 0.5) ** (a - 0.5) * (mass / math.sqrt(self.lambda_min) + self.eps) + (
            a**a / (1.0 - a)
        ) * mass
        object.__setattr__(self, "smoothing_radius", r_alpha)
        object.__setattr__(self, "absorbing_radius", r0 + r_alpha)
        object.__setattr__(self, "invariance_radius", 2.0 * (r0 + r_alpha) + mass)

    def to_dict(self) -> dict:
        keys = ("birth_lipschitz", "kernel_gain", "delay_lipschitz", "birth_bound",
                "lambda_min", "domain_measure", "damping", "window", "path_lipschitz",
                "horizon", "alpha", "eps", "eps0", "reaction_lipschitz", "dependence_gain",
                "energy_radius", "smoothing_radius", "absorbing_radius", "invariance_radius")
        return {k: getattr(self, k) for k in keys}


def gronwall_bracket(rate: float, lambda_min: float, t):
    """The Gronwall amplification ``1 + rate/(rate - lambda_min) * (e^{(rate-lambda_min) t} - 1)``.

    The singularity at ``rate == lambda_min`` is removable (limit ``1 + rate*t``);
    a series branch keeps the evaluation continuous through it. May overflow to
    inf for large exponents, which is a valid (useless) bound.
    """
    t = np.asarray(t, dtype=float)
    x = rate - lambda_min
    if abs(x) < 1e-8:
        out = 1.0 + rate * (t + x * t**2 / 2.0 + x * x * t**3 / 6.0)
    else:
        with np.errstate(over="ignore"):
            out = 1.0 + rate * np.expm1(x * t) / x
    return float(out) if out.ndim == 0 else out


def compute_constants(
    birth_lipschitz: float,
    kernel_gain: float,
    delay_lipschitz: float,
    birth_bound: float,
    lambda_min: float,
    domain_measure: float,
    damping: float,
    window: float,
    path_lipschitz: float,
    horizon: float,
    alpha: float = 0.75,
    eps: float = 0.01,
    eps0: float = 0.01,
) -> ConstantsLedger:
    """Assemble the full ledger from raw constants; pure arithmetic."""
    return ConstantsLedger(
        birth_lipschitz=birth_lipschitz, kernel_gain=kernel_gain,
        delay_lipschitz=delay_lipschitz, birth_bound=birth_bound,
        lambda_min=lambda_min, domain_measure=domain_measure, damping=damping,
        window=window, path_lipschitz=path_lipschitz, horizon=horizon,
        alpha=alpha, eps=eps, eps0=eps0,
    )


def constants_from_model(
    model: DelayReactionModel,
    damping: float,
    path_lipschitz: float,
    horizon: float,
    alpha: float = 0.75,
    eps: float = 0.01,
    eps0: float = 0.01,
) -> ConstantsLedger:
    """Ledger with the model's own constants; the kernel gain is the truncated one."""
    return compute_constants(
        birth_lipschitz=model.birth.lipschitz,
        kernel_gain=model.kernel_op.weak_gain,
        delay_lipschitz=model.delay.lipschitz,
        birth_bound=model.birth.bound,
        lambda_min=float(model.lambdas[0]),
        domain_measure=model.domain.measure,
        damping=damping,
        window=model.window,
        path_lipschitz=path_lipschitz,
        horizon=horizon,
        alpha=alpha, eps=eps, eps0=eps0,
    )


# -- energy ledger ---------------------------------------------------------------

def energy_curves(traj: Trajectory, model: DelayReactionModel) -> dict[str, np.ndarray]:
    """Knot arrays over ``t >= 0``: the norms entering the energy inequalities."""
    i0 = traj.history_len
    lam = model.lambdas
    vals = traj.values[i0 : traj.frontier + 1]
    ders = traj.derivs[i0 : traj.frontier + 1]
    t = np.arange(vals.shape[0]) * traj.h
    strong_sq = vals**2 @ lam
    dissipation_sq = vals**2 @ lam**2
    weak_rate_sq = ders**2 @ (1.0 / lam)
    cum = np.concatenate(([0.0], np.cumsum(0.5 * (dissipation_sq[1:] + dissipation_sq[:-1]) * traj.h)))
    return {"t": t, "strong_sq": strong_sq, "dissipation_sq": dissipation_sq,
            "weak_rate_sq": weak_rate_sq, "cum_dissipation": cum}


def energy_margins(traj: Trajectory, model: DelayReactionModel) -> dict[str, dict[str, np.ndarray]]:
    """Per-knot measured/bound/margin arrays for the three energy families."""
    c = energy_curves(traj, model)
    t = c["t"]
    lam1 = float(model.lambdas[0])
    ceiling = model.reaction_bound**2  # squared L2 bound on the reaction
    e0 = float(c["strong_sq"][0])
    h = traj.h
    rate_lhs = np.diff(c["strong_sq"]) / h + 0.5 * (c["dissipation_sq"][1:] + c["dissipation_sq"][:-1])
    families = {
        "Eq13": (t[1:], rate_lhs, np.full(t.size - 1, ceiling)),
        "Eq14": (t, c["strong_sq"] + c["cum_dissipation"], e0 + ceiling * t),
        "Eq30": (t, c["strong_sq"], e0 * np.exp(-lam1 * t) + ceiling / lam1),
        "Eq23": (t, c["strong_sq"] + c["weak_rate_sq"],
                 3.0 * e0 * np.exp(-lam1 * t) + (1.0 + 3.0 / lam1) * ceiling),
    }
    out = {}
    for eq, (tt, measured, bound) in families.items():
        margin = bound - measured
        out[eq] = {"t": tt, "measured": measured, "bound": bound, "margin": margin,
                   "passed": margin >= -energy_tolerance(tt)}
    return out


def energy_ledger(traj: Trajectory, model: DelayReactionModel, stride: int = 1) -> list[BoundReport]:
    """Reports for the energy families; always includes each family's worst knot.

    With ``stride > 1`` only every stride-th knot is emitted (plus the worst
    and the last), but pass/fail still reflects every knot through the
    worst-margin record.
    """
    reports = []
    for eq, arrs in energy_margins(traj, model).items():
        rel_margin = arrs["margin"] / energy_tolerance(arrs["t"])
        picks = sorted(set(range(0, arrs["t"].size, stride)) | {arrs["t"].size - 1, int(np.argmin(rel_margin))})
        for i in picks:
            reports.append(BoundReport.make(eq, arrs["t"][i], arrs["measured"][i],
                                            arrs["bound"][i], energy_tolerance(arrs["t"][i])))
    return reports


# -- sliding-window machinery ------------------------------------------------------

def trailing_window_max(curve: np.ndarray, window_pts: int) -> np.ndarray:
    """out[j] = max(curve[j-window_pts+1 .. j]); edges replicate the first value."""
    return maximum_filter1d(curve, size=window_pts, origin=window_pts // 2, mode="nearest")


def _dense_index(i: int) -> int:
    return i * (SUBSAMPLES + 1)


def sliding_weak_sup(values: np.ndarray, derivs: np.ndarray, h: float,
                     weak_weights: np.ndarray, history_len: int) -> np.ndarray:
    """For each knot ``i >= history_len``: sup of the weak norm over the window ending there."""
    curve = weighted_norm_curve(values, derivs, h, weak_weights)
    win = _dense_index(history_len) + 1
    trail = trailing_window_max(curve, win)
    idx = np.arange(history_len, values.shape[0])
    return trail[idx * (SUBSAMPLES + 1)]


def path_lipschitz_measured(traj: Trajectory, model: DelayReactionModel) -> float:
    """Sup over the whole run (history included) of the weak norm of the slope."""
    curve = weighted_norm_curve(traj.values[: traj.frontier + 1], traj.derivs[: traj.frontier + 1],
                                traj.h, 1.0 / model.lambdas, derivative=True)
    return float(curve.max())


# -- continuous dependence -----------------------------------------------------------

@dataclass(frozen=True)
class DependenceResult:
    """Both runs compared in the state metric against the Gronwall-type gains."""

    times: np.ndarray
    metric: np.ndarray          # rho(S_t phi, S_t psi) on the grid
    weak_sup: np.ndarray        # weak part of the metric per grid time
    metric0: float              # rho(phi, psi)
    weak_sup0: float
    strong0: float
    ledger: ConstantsLedger
    reports: list[BoundReport]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports)


def continuous_dependence(
    phi: HistorySegment,
    psi: HistorySegment,
    model: DelayReactionModel,
    config: IntegratorConfig,
    alpha: float = 0.75,
    eps: float = 0.01,
    eps0: float = 0.01,
) -> DependenceResult:
    """Run both windows and certify the dependence bounds at every grid time.

    The comparison path's Lipschitz constant is measured from the second run's
    dense output, which makes the certified gain the sharpest one this pair
    can claim.
    """
    ru = integrate(phi, model, config)
    rv = integrate(psi, model, config)
    ledger = constants_from_model(
        model, config.damping,
        path_lipschitz=path_lipschitz_measured(rv.trajectory, model),
        horizon=config.horizon, alpha=alpha, eps=eps, eps0=eps0,
    )
    tu, tv = ru.trajectory, rv.trajectory
    dv = tu.values[: tu.frontier + 1] - tv.values[: tv.frontier + 1]
    dd = tu.derivs[: tu.frontier + 1] - tv.derivs[: tv.frontier + 1]
    lam = model.lambdas
    i0 = tu.history_len
    weak_sup = sliding_weak_sup(dv, dd, tu.h, 1.0 / lam, i0)
    strong = np.sqrt(dv[i0:] ** 2 @ lam)
    t = np.arange(strong.size) * tu.h
    metric = strong + weak_sup
    lam1 = float(lam[0])
    weak0, strong0 = float(weak_sup[0]), float(strong[0])
    with np.errstate(over="ignore", invalid="ignore"):
        bound_20a = np.exp(-lam1 * t) * strong0 + ledger.dependence_gain * weak0
        bound_21 = gronwall_bracket(ledger.reaction_lipschitz, lam1, t) * weak0
    reports = [
        _worst_report("Eq20a", t, metric, bound_20a, ALGEBRAIC_TOL),
        _worst_report("Eq21", t, weak_sup, bound_21, ALGEBRAIC_TOL),
    ]
    return DependenceResult(times=t, metric=metric, weak_sup=weak_sup,
                            metric0=weak0 + strong0, weak_sup0=weak0, strong0=strong0,
                            ledger=ledger, reports=reports)


def _worst_report(eq: str, t: np.ndarray, measured: np.ndarray, bound: np.ndarray,
                  tol: float, context: str = "") -> BoundReport:
    """Single report at the worst finite-margin point; an infinite bound passes trivially."""
    margin = bound - measured
    ok = (margin >= -tol) | np.isinf(bound)
    finite = np.isfinite(margin)
    i = int(np.argmin(np.where(finite, margin, np.inf))) if finite.any() else 0
    return BoundReport(eq=eq, t=float(t[i]), measured=float(measured[i]), bound=float(bound[i]),
                       margin=float(margin[i]), passed=bool(ok.all()), context=context)


# -- invariance evidence ----------------------------------------------------------

@dataclass(frozen=True)
class InvarianceEvidence:
    report: BoundReport
    per_member_max: np.ndarray
    sample_times: np.ndarray


def invariance_evidence(
    members: Sequence[HistorySegment],
    model: DelayReactionModel,
    config: IntegratorConfig,
    radius: float,
    tol: float = 1e-3,
    results: Sequence[SemigroupResult] | None = None,
) -> InvarianceEvidence:
    """Sampled check that the Lipschitz seminorm stays inside the given ball.

    Every member must start inside; the seminorm of the evolved window is
    sampled at every multiple of the window length. Empirical evidence only.
    Precomputed runs of the same members can be passed to avoid re-integrating.
    """
    maxima = []
    sample_times = None
    for k, member in enumerate(members):
        lip0 = member.lip_seminorm()
        if lip0 > radius * (1.0 + 1e-12):
            raise ValueError(f"member {k} starts outside the ball: seminorm {lip0} > {radius}")
        res = results[k] if results is not None else integrate(member, model, config)
        traj = res.trajectory
        curve = weighted_norm_curve(traj.values[: traj.frontier + 1], traj.derivs[: traj.frontier + 1],
                                    traj.h, 1.0 / model.lambdas, derivative=True)
        win = _dense_index(traj.history_len) + 1
        trail = trailing_window_max(curve, win)
        i0 = traj.history_len
        sample_idx = np.arange(i0, traj.frontier + 1, i0)  # every multiple of the window
        maxima.append(trail[sample_idx * (SUBSAMPLES + 1)].max())
        if sample_times is None:
            sample_times = (sample_idx - i0) * traj.h
    measured = float(np.max(maxima))
    report = BoundReport.make("Eq32-empirical", config.horizon, measured, radius, tol,
                              context=f"{len(members)} members, sampled every window length")
    return InvarianceEvidence(report=report, per_member_max=np.asarray(maxima), sample_times=sample_times)


# -- absorbing sets ------------------------------------------------------------------

@dataclass(frozen=True)
class AbsorbingEntry:
    status: str                      # "ok" | "horizon_too_short" | "violated"
    entry_energy: float | None       # first time the energy-rate ball holds permanently
    entry_smoothing: float | None    # same for the fractional-smoothing ball
    required_horizon: float
    reports: list[BoundReport]


def _permanence_index(ok_flags: np.ndarray) -> int | None:
    """First index from which the flag stays True to the end; None if it never does."""
    if ok_flags.all():
        return 0
    last_bad = int(np.flatnonzero(~ok_flags)[-1])
    if last_bad == ok_flags.size - 1:
        return None
    return last_bad + 1


def absorbing_entry(traj: Trajectory, model: DelayReactionModel, ledger: ConstantsLedger) -> AbsorbingEntry:
    """Entry times into the energy-rate ball and the fractional-smoothing ball.

    The smoothing ball is checked from one window of smoothing time after the
    energy entry, matching the one-unit regularization step in its derivation.
    A missing entry is classified as ``horizon_too_short`` when the run is
    shorter than twice the decay time of the initial energy excess, and as a
    genuine violation otherwise.
    """
    c = energy_curves(traj, model)
    t = c["t"]
    lam1 = float(model.lambdas[0])
    v_sq = c["strong_sq"] + c["weak_rate_sq"]
    alpha_norm = np.sqrt(traj.values[traj.history_len : traj.frontier + 1] ** 2
                         @ model.lambdas ** (2.0 * ledger.alpha))
    required = 2.0 * math.log1p(float(c["strong_sq"][0]) / ledger.eps0) / lam1
    horizon = float(t[-1])

    r0_sq = ledger.energy_radius**2
    in_energy = v_sq <= r0_sq + ALGEBRAIC_TOL
    i_energy = _permanence_index(in_energy)
    reports: list[BoundReport] = []
    if i_energy is None:
        status = "horizon_too_short" if horizon < required else "violated"
        reports.append(BoundReport.make("Eq24", horizon, float(v_sq[-1]), r0_sq, ALGEBRAIC_TOL,
                                        context=f"no permanent entry; status={status}"))
        return AbsorbingEntry(status=status, entry_energy=None, entry_smoothing=None,
                              required_horizon=required, reports=reports)
    t_energy = float(t[i_energy])
    reports.append(BoundReport.make("Eq24", t_energy, float(v_sq[i_energy:].max()), r0_sq,
                                    ALGEBRAIC_TOL, context=f"entry at t={t_energy:.6g}, permanent to {horizon:.6g}"))

    i_start = min(int(round((t_energy + 1.0) / traj.h)), alpha_norm.size - 1)
    in_alpha = alpha_norm[i_start:] <= ledger.smoothing_radius + ALGEBRAIC_TOL
    i_alpha = _permanence_index(in_alpha)
    if i_alpha is None:
        status = "horizon_too_short" if horizon < max(required, t_energy + 2.0) else "violated"
        reports.append(BoundReport.make("Eq27", horizon, float(alpha_norm[-1]), ledger.smoothing_radius,
                                        ALGEBRAIC_TOL, context=f"no permanent entry; status={status}"))
        return AbsorbingEntry(status=status, entry_energy=t_energy, entry_smoothing=None,
                              required_horizon=required, reports=reports)
    t_alpha = float(t[i_start + i_alpha])
    reports.append(BoundReport.make("Eq27", t_alpha, float(alpha_norm[i_start + i_alpha:].max()),
                                    ledger.smoothing_radius, ALGEBRAIC_TOL,
                                    context=f"entry at t={t_alpha:.6g}, permanent to {horizon:.6g}"))
    t_both = max(t_energy, t_alpha)
    reports.append(BoundReport.make("Eq28/29", t_both, t_both, horizon, 0.0,
                                    context="combined absorbing-ball entry time vs horizon"))
    return AbsorbingEntry(status="ok", entry_energy=t_energy, entry_smoothing=t_alpha,
                          required_horizon=required, reports=reports)


def vball_sup(segment: HistorySegment, model: DelayReactionModel, alpha: float) -> tuple[float, float]:
    """Window suprema of ``sqrt(strong^2 + weak-rate^2)`` and of the alpha norm."""
    lam = model.lambdas
    strong = weighted_norm_curve(segment.values, segment.derivs, segment.h, lam)
    rate = weighted_norm_curve(segment.values, segment.derivs, segment.h, 1.0 / lam, derivative=True)
    alpha_curve = weighted_norm_curve(segment.values, segment.derivs, segment.h, lam ** (2.0 * alpha))
    return float(np.sqrt(strong**2 + rate**2).max()), float(alpha_curve.max())


# -- reaction checks -----------------------------------------------------------------

def reaction_bound_check(model: DelayReactionModel, segments: Sequence[HistorySegment],
                         tol: float = 1e-8) -> BoundReport:
    """L2 bound on the reaction over arbitrary windows; slack covers projection error."""
    worst = max(float(np.linalg.norm(model.reaction(seg).coeffs)) for seg in segments)
    return BoundReport.make("F-bound", 0.0, worst, model.reaction_bound, tol,
                            context=f"{len(segments)} windows")


def reaction_lipschitz_check(model: DelayReactionModel,
                             pairs: Sequence[tuple[HistorySegment, HistorySegment]],
                             tol: float = ALGEBRAIC_TOL) -> list[BoundReport]:
    """Lipschitz chain for the delayed reaction on window pairs.

    The second window of each pair supplies the measured path Lipschitz
    constant entering the chain's constant.
    """
    reports = []
    for u, v in pairs:
        lip = v.lip_seminorm()
        gain = model.birth.lipschitz * model.kernel_op.weak_gain * (1.0 + lip * model.delay.lipschitz)
        dv = u.values - v.values
        dd = u.derivs - v.derivs
        weak = float(weighted_norm_curve(dv, dd, u.h, 1.0 / model.lambdas).max())
        measured = float(np.linalg.norm(model.reaction(u).coeffs - model.reaction(v).coeffs))
        reports.append(BoundReport.make("Eq19", 0.0, measured, gain * weak, tol))
    return reports


# -- weak form -----------------------------------------------------------------------

@dataclass(frozen=True)
class TestProfile:
    """Scalar time profile of a separable test function; must vanish at the horizon."""

    value: Callable[[np.ndarray], np.ndarray]
    slope: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def linear_vanishing(cls, horizon: float) -> "TestProfile":
        return cls(value=lambda t: horizon - t, slope=lambda t: np.full_like(t, -1.0))


def reaction_along(traj: Trajectory, model: DelayReactionModel) -> np.ndarray:
    """Honest re-evaluation of the reaction at every knot with ``t >= 0``."""
    i0 = traj.history_len
    rows = [model.reaction_and_delay(traj.segment_ending_at(i))[0]
            for i in range(i0, traj.frontier + 1)]
    return np.asarray(rows)


def weak_form_residual(
    traj: Trajectory,
    model: DelayReactionModel,
    mode_index: int,
    profile: TestProfile,
    damping: float,
    forcing: np.ndarray | None = None,
) -> float:
    """Trapezoid mismatch of the weak formulation for ``v = profile(t) * e_j``.

    ``forcing`` may carry a precomputed :func:`reaction_along` table so several
    test modes can share one re-evaluation sweep.
    """
    i0 = traj.history_len
    n = traj.frontier + 1 - i0
    t = np.arange(n) * traj.h
    horizon = float(t[-1])
    theta = np.asarray(profile.value(t), dtype=float)
    if abs(theta[-1]) > 1e-12 * max(1.0, float(np.abs(theta).max())):
        raise ValueError("test profile must vanish at the final time")
    dtheta = np.asarray(profile.slope(t), dtype=float)
    g = traj.values[i0 : traj.frontier + 1, mode_index - 1]
    if forcing is None:
        forcing = reaction_along(traj, model)
    f = forcing[:, mode_index - 1]
    lam_j = float(model.lambdas[mode_index - 1])

    def trap(y):
        return float(np.sum(0.5 * (y[1:] + y[:-1])) * traj.h)

    lhs = -trap(g * dtheta) + lam_j * trap(g * theta)
    rhs = g[0] * theta[0] + trap((f - damping * g) * theta)
    return abs(lhs - rhs)


# -- self-convergence -----------------------------------------------------------------

def self_convergence_table(trajectories: dict[int, Trajectory]) -> list[dict]:
    """Sup-in-time L2 distance of each truncation to the finest one, with ratios.

    Rows are ordered by truncation; ``ratio`` is ``error(m) / error(next m)``
    (inf when the finer error is zero, nan when both vanish).
    """
    orders = sorted(trajectories)
    ref = trajectories[orders[-1]]
    ref_vals = ref.values[: ref.frontier + 1]
    errors = {}
    for m in orders[:-1]:
        tr = trajectories[m]
        vals = tr.values[: tr.frontier + 1]
        padded = np.zeros_like(ref_vals)
        padded[:, : vals.shape[1]] = vals
        errors[m] = float(np.sqrt(((padded - ref_vals) ** 2).sum(axis=1)).max())
    rows = []
    for i, m in enumerate(orders[:-1]):
        nxt = orders[i + 1]
        if nxt == orders[-1]:
            ratio = None
        else:
            e_next = errors[nxt]
            if errors[m] == 0.0 and e_next == 0.0:
                ratio = float("nan")
            elif e_next == 0.0:
                ratio = float("inf")
            else:
                ratio = errors[m] / e_next
        rows.append({"m": m, "sup_error": errors[m], "ratio": ratio})
    return rows


# -- ensemble statistics -----------------------------------------------------------------

def attractor_sample(
    results: Sequence[SemigroupResult],
    model: DelayReactionModel,
    ledger: ConstantsLedger,
    snapshot_times: Sequence[float],
) -> dict:
    """Ensemble geometry at snapshot times: metric diameter, norms, ball containment.

    Members must start inside the Lipschitz ball of the invariance radius.
    Evidence artifact: diameters are reported, not asserted monotone.
    """
    for k, res in enumerate(results):
        seg0 = res.trajectory.segment_ending_at(res.trajectory.history_len)
        lip = seg0.lip_seminorm()
        if lip > ledger.invariance_radius * (1.0 + 1e-12):
            raise ValueError(f"member {k} outside the admissible ball: seminorm {lip}")
    lam = model.lambdas
    weak_scale = lam**-0.5
    snapshots = []
    for t_snap in snapshot_times:
        segs = [res.trajectory.segment_at(t_snap) for res in results]
        dense = [hermite_dense(seg.values, seg.derivs, seg.h) * weak_scale for seg in segs]
        ends = np.stack([seg.values[-1] for seg in segs])
        diameter = 0.0
        for i in range(len(segs)):
            for j in range(i + 1, len(segs)):
                weak = float(np.sqrt(((dense[i] - dense[j]) ** 2).sum(axis=1)).max())
                strong = float(np.sqrt((ends[i] - ends[j]) ** 2 @ lam))
                diameter = max(diameter, weak + strong)
        norms = [seg.history_norm() for seg in segs]
        contained = []
        for seg in segs:
            v_sup, a_sup = vball_sup(seg, model, ledger.alpha)
            contained.append(bool(v_sup <= ledger.energy_radius + ALGEBRAIC_TOL
                                  and a_sup <= ledger.smoothing_radius + ALGEBRAIC_TOL))
        snapshots.append({"t": float(t_snap), "metric_diameter": diameter,
                          "history_norms": norms, "inside_absorbing_ball": contained})
    return {"snapshots": snapshots, "n_members": len(results)}
