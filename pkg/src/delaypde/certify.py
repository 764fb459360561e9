"""The full certification battery behind the `certify` scenario.

Thirteen criteria, each a self-contained check with its stated tolerance.
Time windows scale with the configured horizon (the dissipativity tail starts
at three quarters of it; the dependence window caps at five time units), so
the battery also runs meaningfully on trimmed configurations; tolerances are
never relaxed. Ensemble runs are shared across the criteria that need them.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace as dc_replace

import numpy as np

from .config import (
    RunConfig,
    build_initial_history,
    build_integrator_config,
    build_model,
    with_overrides,
)
from .diagnostics import (
    ALGEBRAIC_TOL,
    SUBSAMPLES,
    BoundReport,
    TestProfile,
    _dense_index,
    absorbing_entry,
    attractor_sample,
    compute_constants,
    constants_from_model,
    continuous_dependence,
    energy_margins,
    energy_tolerance,
    invariance_evidence,
    reaction_along,
    reaction_bound_check,
    reaction_lipschitz_check,
    self_convergence_table,
    sliding_weak_sup,
    trailing_window_max,
    weak_form_residual,
)
from .history import HistorySegment, Trajectory, weighted_norm_curve
from .integrator import IntegratorConfig, integrate, semigroup_apply
from .model import PointStateDelay
from .scenarios import ScenarioResult, _dissipativity_tail_report, _summary, generate_ensemble
from .spectral import eigenvalues


@dataclass
class CriterionResult:
    index: int
    name: str
    passed: bool
    reports: list[BoundReport]
    details: dict

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.index:2d}: {self.name}"


@dataclass
class CertificationResult:
    criteria: list[CriterionResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)

    @property
    def reports(self) -> list[BoundReport]:
        return [r for c in self.criteria for r in c.reports]

    def summary_lines(self) -> list[str]:
        return [c.line() for c in self.criteria]

    def to_scenario_result(self, config: RunConfig) -> ScenarioResult:
        summary = _summary(config, self.passed, None, {
            "criteria": [
                {"index": c.index, "name": c.name, "pass": c.passed} for c in self.criteria
            ],
        })
        doc = {"summary": summary, "reports": [r.to_dict() for r in self.reports]}
        return ScenarioResult(
            ok=self.passed,
            exit_code=0 if self.passed else 1,
            summary=summary,
            reports=self.reports,
            artifacts={"report.json": json.dumps(doc, indent=2)},
        )


def _grid_time(t: float, h: float) -> float:
    return max(1, round(t / h)) * h


def run_certification(config: RunConfig) -> CertificationResult:
    model = build_model(with_overrides(config, {"model.cutoff.enabled": False}))
    phi = build_initial_history(config, model.domain)
    icfg = dc_replace(build_integrator_config(config), modified_nonlinearity=False)
    canonical = integrate(phi, model, icfg)
    ledger = constants_from_model(
        model, config.damping, path_lipschitz=0.0, horizon=config.time.T,
        alpha=config.diagnostics.alpha, eps=config.diagnostics.eps, eps0=config.diagnostics.eps0,
    )
    members = generate_ensemble(config, model)
    runs = [integrate(m, model, icfg) for m in members]

    criteria = [
        _c1_dissipativity(config, model, runs),
        _c2_energy_ledger(config, model, canonical),
        _c3_dependence(config, model, icfg),
        _c4_gain_dichotomy(model, config),
        _c5_composition(config, model, icfg, phi),
        _c6_linear_decay(config),
        _c7_steady_state(config),
        _c8_weak_form(config, model, canonical),
        _c9_self_convergence(config),
        _c10_absorbing(config, model, runs, ledger),
        _c11_invariance(config, model, icfg, members, runs, ledger),
        _c12_cutoff(config, model, canonical, phi, ledger),
        _c13_reaction(config, model),
    ]
    return CertificationResult(criteria=criteria)


# -- 1: dissipativity tail ------------------------------------------------------

def _c1_dissipativity(config, model, runs) -> CriterionResult:
    tail_start = 0.75 * config.time.T
    reports = [_dissipativity_tail_report(run, model, tail_start) for run in runs]
    return CriterionResult(1, "dissipativity tail below the energy ceiling", all(r.passed for r in reports),
                           reports, {"tail_start": tail_start, "members": len(runs)})


# -- 2: energy ledger -------------------------------------------------------------

def _c2_energy_ledger(config, model, canonical) -> CriterionResult:
    margins = energy_margins(canonical.trajectory, model)
    reports = []
    ok = True
    for eq, arrs in margins.items():
        passed = bool(arrs["passed"].all())
        ok = ok and passed
        i = int(np.argmin(arrs["margin"] / energy_tolerance(arrs["t"])))
        reports.append(BoundReport.make(eq, arrs["t"][i], arrs["measured"][i], arrs["bound"][i],
                                        energy_tolerance(arrs["t"][i]),
                                        context=f"worst of {arrs['t'].size} knots; family pass={passed}"))
    # negative control: a trajectory scaled by 10 must violate the decay bound early
    traj = canonical.trajectory
    fake = Trajectory(traj.domain, traj.m, traj.h, traj.t0, traj.history_len,
                      traj.n_total - traj.history_len - 1)
    fake.values[:] = 10.0 * traj.values
    fake.derivs[:] = 10.0 * traj.derivs
    fake.frontier = traj.frontier
    fake_margins = energy_margins(fake, model)["Eq30"]
    control_failed = not bool(fake_margins["passed"].all())
    reports.append(BoundReport(eq="Eq30-negative-control", t=0.0,
                               measured=float(fake_margins["margin"].min()), bound=0.0,
                               margin=0.0, passed=control_failed,
                               context="x10-scaled trajectory must violate the decay bound"))
    ok = ok and control_failed
    return CriterionResult(2, "per-knot energy ledger with linear-in-t slack", ok, reports, {})


# -- 3: continuous dependence -------------------------------------------------------

def _c3_dependence(config, model, icfg) -> CriterionResult:
    h = config.time.h
    horizon = _grid_time(min(5.0, config.time.T), h)
    dep_cfg = IntegratorConfig(h=h, horizon=horizon, damping=icfg.damping, scheme=icfg.scheme)
    n_pairs = 20
    base = generate_ensemble(with_overrides(config, {"seed": config.seed + 101}), model, n=n_pairs)
    bumps = generate_ensemble(with_overrides(config, {"seed": config.seed + 202}), model, n=n_pairs)
    targets = np.logspace(-4, -1, n_pairs)
    reports = []
    ok = True
    for i, (u0, d0) in enumerate(zip(base, bumps)):
        lam = eigenvalues(d0.m, d0.domain)
        from .history import weighted_norm_curve

        rho_bump = float(weighted_norm_curve(d0.values, d0.derivs, d0.h, 1.0 / lam).max()
                         + np.sqrt(d0.values[-1] ** 2 @ lam))
        scale = targets[i] / rho_bump
        v0 = HistorySegment(u0.values + scale * d0.values, u0.derivs + scale * d0.derivs,
                            u0.h, u0.domain)
        dep = continuous_dependence(u0, v0, model, dep_cfg,
                                    alpha=config.diagnostics.alpha,
                                    eps=config.diagnostics.eps, eps0=config.diagnostics.eps0)
        gain = dep.ledger.dependence_gain
        excess = dep.metric - gain * dep.metric0
        worst = float(np.nanmax(excess)) if np.isfinite(excess).any() else float("-inf")
        pair_ok = bool((excess <= ALGEBRAIC_TOL).all()) and dep.passed
        ok = ok and pair_ok
        reports.append(BoundReport(eq="Eq20a", t=float(dep.times[int(np.argmax(excess))]),
                                   measured=worst, bound=0.0, margin=-worst, passed=pair_ok,
                                   context=f"pair {i}: metric vs gain*initial-metric, rho0={dep.metric0:.3e}"))
        reports.extend(dep.reports)
    return CriterionResult(3, "continuous dependence within the certified gain", ok, reports,
                           {"pairs": n_pairs, "horizon": horizon})


# -- 4: gain dichotomy ---------------------------------------------------------------

def _c4_gain_dichotomy(model, config) -> CriterionResult:
    probes = (1.0, 10.0, 100.0)

    def gain(delay_lip: float, lv: float) -> float:
        return compute_constants(
            birth_lipschitz=model.birth.lipschitz, kernel_gain=model.kernel_op.weak_gain,
            delay_lipschitz=delay_lip, birth_bound=model.birth.bound,
            lambda_min=float(model.lambdas[0]), domain_measure=model.domain.measure,
            damping=config.damping, window=model.window, path_lipschitz=lv,
            horizon=config.time.T, alpha=config.diagnostics.alpha,
        ).dependence_gain

    flat = [gain(0.0, lv) for lv in probes]
    rising = [gain(model.delay.lipschitz if model.delay.state_dependent else 0.5846, lv)
              for lv in probes]
    identical = flat[0] == flat[1] == flat[2]
    increasing = rising[0] < rising[1] < rising[2]
    reports = [
        BoundReport(eq="Remark4", t=0.0, measured=max(flat) - min(flat), bound=0.0,
                    margin=0.0, passed=identical, context="zero delay Lipschitz: gain flat in the path constant"),
        BoundReport(eq="Remark4", t=0.0, measured=rising[2] - rising[0], bound=float("inf"),
                    margin=float("inf"), passed=increasing,
                    context="positive delay Lipschitz: gain strictly increasing"),
    ]
    return CriterionResult(4, "dependence-gain dichotomy in the path constant",
                           identical and increasing, reports, {"flat": flat, "rising": rising})


# -- 5: semigroup composition ----------------------------------------------------------

def _c5_composition(config, model, icfg, phi) -> CriterionResult:
    h = config.time.h
    total = min(2.0, config.time.T)
    total = _grid_time(total, h)
    splits = [(0.5 * total, 0.5 * total), (0.25 * total, 0.75 * total)]
    reports = []
    ok = True
    direct = semigroup_apply(phi, total, model, icfg)
    for t1, t2 in splits:
        t1, t2 = _grid_time(t1, h), _grid_time(t2, h)
        mid = semigroup_apply(phi, t1, model, icfg)
        chained = semigroup_apply(mid, t2, model, icfg)
        same = bool(np.array_equal(direct.values, chained.values)
                    and np.array_equal(direct.derivs, chained.derivs))
        ok = ok and same
        diff = float(np.max(np.abs(direct.values - chained.values)))
        reports.append(BoundReport(eq="Eq22", t=total, measured=diff, bound=0.0,
                                   margin=-diff, passed=same,
                                   context=f"split ({t1:g}, {t2:g}) bit-exact"))
    return CriterionResult(5, "semigroup composition bit-exact on aligned grids", ok, reports,
                           {"total": total})


# -- 6: exact linear decay ----------------------------------------------------------------

def _c6_linear_decay(config) -> CriterionResult:
    m = min(8, config.spectral.m)
    horizon = _grid_time(min(2.0, config.time.T), config.time.h)
    cfg = with_overrides(config, {
        "spectral.m": m, "model.birth.variant": "zero", "time.T": horizon,
        "initial_history": [{"k": k, "a": 1.0, "s": 0.0} for k in range(1, m + 1)],
    })
    model = build_model(cfg)
    res = integrate(build_initial_history(cfg, model.domain), model, build_integrator_config(cfg))
    traj = res.trajectory
    i0 = traj.history_len
    t = traj.times()[i0:, None]
    ref = np.exp(-t * (model.lambdas + config.damping)[None, :])
    rel = np.abs(traj.values[i0:] - ref) / np.abs(ref)
    worst = float(rel.max())
    report = BoundReport.make("Eq12-linear", horizon, worst, 1e-12, 0.0,
                              context=f"max relative mode error over {m} modes")
    return CriterionResult(6, "zero-reaction run matches the exact exponential decay",
                           report.passed, [report], {"worst_rel": worst})


# -- 7: constant-birth steady state ----------------------------------------------------------

def _c7_steady_state(config) -> CriterionResult:
    horizon = _grid_time(30.0, config.time.h)
    cfg = with_overrides(config, {"model.birth.variant": "constant", "time.T": horizon})
    model = build_model(cfg)
    res = integrate(build_initial_history(cfg, model.domain), model, build_integrator_config(cfg))
    c = cfg.model.birth.c
    length = model.domain.length
    k = np.arange(1, cfg.spectral.m + 1)
    inner_one = np.sqrt(2.0 / length) * length * (1.0 - np.cos(k * np.pi)) / (k * np.pi)
    target = c * inner_one / (model.lambdas + config.damping)
    final = res.trajectory.values[res.trajectory.frontier]
    denom = float(np.linalg.norm(target)) or 1.0
    rel = float(np.linalg.norm(final - target)) / denom
    report = BoundReport.make("Eq12-steady", horizon, rel, 1e-6, 0.0,
                              context="relative L2 distance to the per-mode fixed point")
    return CriterionResult(7, "constant-birth run reaches the analytic steady state",
                           report.passed, [report], {"rel_error": rel})


# -- 8: weak-form residual ---------------------------------------------------------------------

def _c8_weak_form(config, model, canonical) -> CriterionResult:
    reports = []
    # homogeneous benchmark: zero reaction, single low mode
    m = min(8, config.spectral.m)
    horizon = _grid_time(min(2.0, config.time.T), config.time.h)
    cfg0 = with_overrides(config, {
        "spectral.m": m, "model.birth.variant": "zero", "time.T": horizon,
        "initial_history": [{"k": 1, "a": 1.0, "s": 0.0}],
    })
    model0 = build_model(cfg0)
    res0 = integrate(build_initial_history(cfg0, model0.domain), model0, build_integrator_config(cfg0))
    resid0 = weak_form_residual(res0.trajectory, model0, 1, TestProfile.linear_vanishing(horizon),
                                config.damping)
    reports.append(BoundReport.make("Eq7-residual", horizon, resid0, 1e-6, 0.0,
                                    context="homogeneous benchmark, first mode"))
    # halving h on the configured run must at least halve the residual
    cfg_half = with_overrides(config, {"time.h": config.time.h / 2.0})
    half = integrate(build_initial_history(cfg_half, model.domain), model,
                     build_integrator_config(cfg_half))
    profile = TestProfile.linear_vanishing(config.time.T)
    forcing_full = reaction_along(canonical.trajectory, model)
    forcing_half = reaction_along(half.trajectory, model)
    ratios = {}
    ok_ratio = True
    for j in (1, 2, 3):
        if j > config.spectral.m:
            continue
        r_full = weak_form_residual(canonical.trajectory, model, j, profile, config.damping,
                                    forcing=forcing_full)
        r_half = weak_form_residual(half.trajectory, model, j, profile, config.damping,
                                    forcing=forcing_half)
        ratio = r_full / r_half if r_half > 0 else float("inf")
        ratios[j] = ratio
        passed = ratio >= 1.9
        ok_ratio = ok_ratio and passed
        reports.append(BoundReport(eq="Eq7-residual", t=config.time.T, measured=ratio,
                                   bound=1.9, margin=ratio - 1.9, passed=passed,
                                   context=f"mode {j}: residual ratio under h-halving"))
    ok = reports[0].passed and ok_ratio
    return CriterionResult(8, "weak-form residual small and shrinking under refinement",
                           ok, reports, {"benchmark_residual": resid0, "ratios": ratios})


# -- 9: self-convergence ------------------------------------------------------------------------

def _c9_self_convergence(config) -> CriterionResult:
    m_mid = config.spectral.m
    max_mode = max((t.k for t in config.initial_history), default=1)
    m_low = max(m_mid // 2, max_mode)
    m_high = min(2 * m_mid, 256)
    quad = max(config.spectral.quad_nodes, 8 * m_high + 1)
    trajs = {}
    for m in sorted({m_low, m_mid, m_high}):
        cfg_m = with_overrides(config, {"spectral.m": m, "spectral.quad_nodes": quad})
        mdl = build_model(cfg_m)
        trajs[m] = integrate(build_initial_history(cfg_m, mdl.domain), mdl,
                             build_integrator_config(cfg_m)).trajectory
    table = self_convergence_table(trajs)
    ratio = table[0]["ratio"] if table and table[0]["ratio"] is not None else float("inf")
    ratio_ok = (ratio >= 4.0) or (ratio != ratio)  # nan: both errors identically zero
    reports = [BoundReport(eq="GalerkinConv", t=config.time.T, measured=float(table[0]["sup_error"]),
                           bound=float("inf"), margin=float("inf"), passed=ratio_ok,
                           context=f"error({m_low})/error({m_mid}) = {ratio:.3g} >= 4")]
    # invariant-subspace control: data on the first modes with zero reaction is
    # reproduced identically at every truncation
    m_small = min(8, m_mid)
    horizon = _grid_time(min(2.0, config.time.T), config.time.h)
    zero_trajs = {}
    for m in (m_small, m_high):
        cfg_m = with_overrides(config, {
            "spectral.m": m, "spectral.quad_nodes": quad, "model.birth.variant": "zero",
            "time.T": horizon,
            "initial_history": [{"k": k, "a": 1.0 / k, "s": 0.1} for k in range(1, min(4, m_small) + 1)],
        })
        mdl = build_model(cfg_m)
        zero_trajs[m] = integrate(build_initial_history(cfg_m, mdl.domain), mdl,
                                  build_integrator_config(cfg_m)).trajectory
    zero_err = self_convergence_table(zero_trajs)[0]["sup_error"]
    reports.append(BoundReport.make("GalerkinConv", horizon, zero_err, 0.0, 0.0,
                                    context="mode-limited zero-reaction data: exact invariant subspace"))
    ok = ratio_ok and zero_err == 0.0
    return CriterionResult(9, "spectral self-convergence against the finer truncation",
                           ok, reports, {"table": table, "zero_error": zero_err})


# -- 10: absorbing entries -----------------------------------------------------------------------

def _c10_absorbing(config, model, runs, ledger) -> CriterionResult:
    reports = []
    ok = True
    entries = []
    for i, run in enumerate(runs):
        entry = absorbing_entry(run.trajectory, model, ledger)
        ok = ok and entry.status == "ok" and all(r.passed for r in entry.reports)
        entries.append({"member": i, "status": entry.status,
                        "entry_energy": entry.entry_energy,
                        "entry_smoothing": entry.entry_smoothing})
        reports += entry.reports
    stats = attractor_sample(runs, model, ledger,
                             sorted({round(config.time.T * f, 10) for f in (0.25, 0.5, 1.0)}))
    contained = all(all(s["inside_absorbing_ball"]) for s in stats["snapshots"][-1:])
    ok = ok and contained
    reports.append(BoundReport(eq="Eq28/29", t=config.time.T, measured=0.0 if contained else 1.0,
                               bound=0.0, margin=0.0 if contained else -1.0, passed=contained,
                               context="all members inside the absorbing ball at the final snapshot"))
    return CriterionResult(10, "finite absorbing-set entry with permanence", ok, reports,
                           {"entries": entries, "attractor_sample": stats})


# -- 11: Lipschitz-ball invariance evidence ---------------------------------------------------------

def _c11_invariance(config, model, icfg, members, runs, ledger) -> CriterionResult:
    evidence = invariance_evidence(members, model, icfg, radius=ledger.invariance_radius,
                                   tol=1e-3, results=runs)
    measured = float(evidence.per_member_max.max())
    control_radius = max(measured / 2.0, 1e-6)
    control_fails = measured > control_radius + 1e-3
    reports = [
        evidence.report,
        BoundReport(eq="Eq32-negative-control", t=config.time.T, measured=measured,
                    bound=control_radius, margin=control_radius - measured, passed=control_fails,
                    context="halved radius must be violated"),
    ]
    ok = evidence.report.passed and control_fails
    return CriterionResult(11, "sampled invariance of the Lipschitz ball (empirical)", ok, reports,
                           {"measured_max": measured, "radius": ledger.invariance_radius})


# -- 12: cutoff coincidence and invariance -----------------------------------------------------------

def _c12_cutoff(config, model, canonical, phi, ledger) -> CriterionResult:
    cfg = with_overrides(config, {"model.cutoff.enabled": True, "model.cutoff.Rhat_mode": "auto"})
    model_cut = build_model(cfg)
    radius = model_cut.cutoff.radius
    mass = model.reaction_bound
    reports = []
    # the canonical window sits inside the invariant set of the modified flow
    start_norm = phi.cutoff_norm(config.damping)
    start_lip = phi.lip_seminorm()
    inside = start_norm <= 2 * radius and start_lip <= 2 * radius + mass
    reports.append(BoundReport.make("Thm3-cutoff", 0.0, start_norm, 2 * radius, 0.0,
                                    context="initial window inside the invariant set"))
    run_cut = integrate(phi, model_cut, build_integrator_config(cfg))
    ta, tb = canonical.trajectory, run_cut.trajectory
    lam = model.lambdas
    i0 = ta.history_len
    weak_sup = sliding_weak_sup(tb.values[: tb.frontier + 1], tb.derivs[: tb.frontier + 1],
                                tb.h, 1.0 / lam, i0)
    strong = np.sqrt(tb.values[i0 : tb.frontier + 1] ** 2 @ lam)
    cut_norm = strong + config.damping * weak_sup
    below = cut_norm <= radius
    n_match = (i0 + int(np.argmin(below)) + 1) if not below.all() else tb.frontier + 1
    same = bool(np.array_equal(ta.values[:n_match], tb.values[:n_match]))
    diff = float(np.max(np.abs(ta.values[:n_match] - tb.values[:n_match])))
    reports.append(BoundReport(eq="Thm3-cutoff", t=config.time.T, measured=diff, bound=0.0,
                               margin=-diff, passed=same,
                               context=f"bit-exact coincidence on {n_match} knots below the cutoff radius"))
    # invariance bounds of the modified flow's admissible set
    lip_curve = sliding_weak_sup(tb.values[: tb.frontier + 1], tb.derivs[: tb.frontier + 1],
                                 tb.h, 1.0 / lam, i0)
    from .history import weighted_norm_curve
    from .diagnostics import trailing_window_max, _dense_index, SUBSAMPLES

    slope_curve = weighted_norm_curve(tb.values[: tb.frontier + 1], tb.derivs[: tb.frontier + 1],
                                      tb.h, 1.0 / lam, derivative=True)
    trail = trailing_window_max(slope_curve, _dense_index(i0) + 1)
    lip_t = trail[np.arange(i0, tb.frontier + 1) * (SUBSAMPLES + 1)]
    reports.append(BoundReport.make("Thm3-cutoff", config.time.T, float(cut_norm.max()),
                                    2 * radius, ALGEBRAIC_TOL, context="cutoff norm stays in the invariant set"))
    reports.append(BoundReport.make("Thm3-cutoff", config.time.T, float(lip_t.max()),
                                    2 * radius + mass, ALGEBRAIC_TOL,
                                    context="Lipschitz seminorm stays in the invariant set"))
    ok = inside and all(r.passed for r in reports)
    return CriterionResult(12, "cutoff flow coincides inside the reference ball and stays invariant",
                           ok, reports, {"radius": radius, "matched_knots": n_match})


# -- 13: reaction bounds ---------------------------------------------------------------------------

def _c13_reaction(config, model) -> CriterionResult:
    segs = generate_ensemble(with_overrides(config, {"seed": config.seed + 303}), model, n=100)
    bound_report = reaction_bound_check(model, segs, tol=1e-8)
    pairs = [(segs[2 * i], segs[2 * i + 1]) for i in range(len(segs) // 2)]
    chain_reports = reaction_lipschitz_check(model, pairs, tol=ALGEBRAIC_TOL)
    worst = min(chain_reports, key=lambda r: r.margin)
    reports = [bound_report, worst] + [r for r in chain_reports if r is not worst][:3]
    ok = bound_report.passed and all(r.passed for r in chain_reports)
    return CriterionResult(13, "reaction bounded and Lipschitz with the measured constants",
                           ok, reports, {"n_segments": len(segs), "n_pairs": len(pairs)})
