"""Acceptance suite: one check per headline property, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -v -s` to see every verdict line;
each criterion is also an ordinary assertion, so a plain pytest run fails
loudly on any regression.
"""

from dataclasses import replace

import numpy as np
import pytest

from bichf import (
    ConcentrationConfig,
    FlowParams,
    FlowState,
    PicardWindow,
    SphereTarget,
    diagnostics,
    flow,
    make_grid,
)
from bichf.cli import InitSpec, generate_initial
from bichf.diagnostics import (
    concentration,
    energy_identity_residual,
    epu_growth_check,
    matrix_lemma_check,
    volume_identity_residual,
)
from bichf.fixedpoint import picard_iterate

from conftest import SUITE_SEEDS, run_trajectory


def check(name, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'} {name}"
    if detail:
        line += f"  [{detail}]"
    print(line)
    assert ok, line


def great_circle(grid, k=1):
    f = np.zeros(grid.shape + (grid.L,))
    f[..., 0] = np.cos(k * grid.coords[0])
    f[..., 1] = np.sin(k * grid.coords[0])
    return f


def test_stationarity_great_circle():
    g = make_grid(8, 3)
    target = SphereTarget(3)
    params = FlowParams(dt=flow.stability_dt(g, np.zeros(g.shape),
                                             FlowParams()), t_end=1.0)
    worst_ft, worst_de = 0.0, 0.0
    for k in (1, 2):
        f0 = great_circle(g, k)
        ft = flow.rhs_projection(g, target, f0, np.zeros(g.shape))
        worst_ft = max(worst_ft, float(np.abs(ft).max()))
        state = FlowState.initial(g, f0)
        state = replace(state, density_cache=flow.density(g, f0))
        e0 = flow.bienergy(g, f0)
        for _ in range(100):
            state = flow.advance(g, target, state, params)
        worst_de = max(worst_de, abs(flow.bienergy(g, state.f) - e0) / e0)
    check("stationarity of great circles",
          worst_ft <= 1e-9 and worst_de <= 1e-12,
          f"max|f_t|={worst_ft:.2e}, rel dE={worst_de:.2e}")


def test_rhs_cross_oracle():
    target = SphereTarget(3)
    diffs = {}
    for n in (16, 32):
        g = make_grid(n, 3)
        f = generate_initial(
            g, target, InitSpec("perturbed_constant", eps=0.3, mode_cap=3),
            seed=7)
        u = np.zeros(g.shape)
        ra = flow.rhs_projection(g, target, f, u)
        rb = flow.rhs_explicit_b(g, target, f, u)
        from bichf import lattice
        num = np.sqrt(lattice.integrate(g, np.sum((ra - rb) ** 2, axis=-1)))
        den = np.sqrt(lattice.integrate(g, np.sum(ra ** 2, axis=-1)))
        diffs[n] = num / den
    ratio = diffs[16] / diffs[32]
    check("right-hand-side cross-oracle",
          diffs[16] <= 1e-3 and ratio >= 4.0,
          f"n=16: {diffs[16]:.3e}, n=16/n=32 ratio {ratio:.3g}")


def test_conformal_closed_form(circle_imex_run):
    u = circle_imex_run.final_state.conformal.u
    want = 2.0 - np.exp(-2.0)
    rel = float(np.abs(np.exp(4 * u) / want - 1.0).max())

    # ODE route versus the quadrature closed form: O(dt^2) convergence.
    g = circle_imex_run.grid
    D = np.full(g.shape, 2.0)
    gaps = []
    for dt in (2e-3, 1e-3):
        params = FlowParams(dt=dt, t_end=1.0)
        cs = flow.ConformalState.initial(g)
        for _ in range(int(round(0.1 / dt))):
            cs = flow.conformal_update_ode(cs, D, dt, params)
        exact = np.exp(-0.4) * (1 + (np.exp(0.4) - 1) * 2 / 2.0)
        exact = 2.0 - np.exp(-0.4)
        gaps.append(abs(float(np.exp(4 * cs.u.flat[0])) - exact))
    ratio = gaps[0] / gaps[1]
    check("conformal factor closed form",
          rel <= 1e-4 and ratio >= 3.5,
          f"e^4u(0.5) rel err {rel:.2e}, route ratio {ratio:.3g}")


def test_energy_dissipation(suite_runs, suite_runs_half):
    monotone = True
    worst_ratio = np.inf
    for full, half in zip(suite_runs, suite_runs_half):
        e = full.step_energies
        tol = 1e-8 * (1.0 + e[0])
        monotone &= all(b <= a + tol for a, b in zip(e, e[1:]))
        rf = max(energy_identity_residual(a, b)
                 for a, b in zip(full.records, full.records[1:]))
        rh = max(energy_identity_residual(a, b)
                 for a, b in zip(half.records, half.records[1:]))
        worst_ratio = min(worst_ratio, rf / rh)
    check("energy dissipation",
          monotone and worst_ratio >= 1.8,
          f"monotone={monotone}, residual halving ratio >= "
          f"{worst_ratio:.3g}")


def test_volume_identity(suite_runs, b0_run):
    worst = max(volume_identity_residual(r.records, r.params)
                for r in suite_runs)
    v0 = b0_run.records[0].volume
    worst_b0 = max(abs(rec.volume / (np.exp(-4 * rec.t) * v0) - 1.0)
                   for rec in b0_run.records)
    check("volume identity",
          worst <= 1e-10 and worst_b0 <= 1e-12,
          f"quadrature residual {worst:.2e}, b=0 decay error "
          f"{worst_b0:.2e}")


def test_pointwise_conformal_bound(all_recorded_runs):
    violations = 0
    for run in all_recorded_runs:
        a = run.params.a
        for rec in run.records:
            if np.exp(-4 * rec.u_min) > np.exp(4 * a * rec.t):
                violations += 1
        u = run.final_state.conformal.u
        t = run.final_state.t
        violations += int(np.any(np.exp(-4 * u) > np.exp(4 * a * t)))
    check("pointwise bound exp(-4u) <= exp(4at)", violations == 0,
          f"{violations} violations")


def test_dissipation_bound(suite_runs):
    worst = 0.0
    ok = True
    for run in suite_runs:
        e0 = run.records[0].energy
        cap = 1.5 * 4 * run.params.a * e0
        for rec in run.records:
            worst = max(worst, rec.dissipation / cap)
            ok &= rec.dissipation <= cap
    check("dissipation bound", ok, f"max fraction of cap {worst:.3f}")


def test_constraint_preservation(suite_runs, suite_runs_half):
    ratios = [full.step_drifts[1] / half.step_drifts[1]
              for full, half in zip(suite_runs, suite_runs_half)]
    post = max(float(np.abs(np.linalg.norm(run.final_state.f, axis=-1)
                            - 1.0).max())
               for run in suite_runs)
    check("constraint preservation",
          min(ratios) >= 3.5 and post <= 1e-12,
          f"drift halving ratio >= {min(ratios):.3g}, "
          f"post-projection {post:.1e}")


def test_picard_explicit_consistency():
    g = make_grid(8, 3)
    target = SphereTarget(3)
    base = flow.stability_dt(g, np.zeros(g.shape), FlowParams())

    f0 = generate_initial(
        g, target, InitSpec("perturbed_constant", eps=0.5, mode_cap=2),
        seed=1)
    gaps = []
    for T in (base, base / 2):
        params = FlowParams(dt=T, t_end=T)
        w = PicardWindow(T=T, max_iter=8, tol=1e-12, inner_steps=8)
        pstate, _ = picard_iterate(g, target, f0, w, params)
        rstate = FlowState.initial(g, f0)
        rstate = replace(rstate, density_cache=flow.density(g, f0))
        rstate = flow.step(g, target, rstate, params)
        gaps.append(float(np.abs(pstate.f - rstate.f).max()))
    order_ratio = gaps[0] / gaps[1]

    decreasing = True
    for seed in SUITE_SEEDS:
        fs = generate_initial(
            g, target, InitSpec("perturbed_constant", eps=0.5, mode_cap=2),
            seed=seed)
        params = FlowParams(dt=base, t_end=base)
        w = PicardWindow(T=base, max_iter=6, tol=1e-14, inner_steps=8)
        _, dists = picard_iterate(g, target, fs, w, params)
        decreasing &= all(b < a for a, b in zip(dists[1:], dists[2:]))

    fgc = great_circle(g)
    params = FlowParams(dt=1e-3, t_end=1e-3)
    w = PicardWindow(T=1e-3, max_iter=3, tol=1e-12, inner_steps=8)
    state, dists = picard_iterate(g, target, fgc, w, params)
    gc_err = float(np.abs(state.f - fgc).max())

    check("fixed-point/explicit consistency",
          order_ratio >= 1.8 and decreasing
          and gc_err <= 1e-8 and len(dists) <= 3,
          f"order ratio {order_ratio:.3g}, distances decreasing "
          f"{decreasing}, great-circle err {gc_err:.1e} in "
          f"{len(dists)} iterations")


def test_epu_estimate(suite_runs):
    worst = -np.inf
    ok = True
    for run in suite_runs:
        report = epu_growth_check(run.records, run.params, slack=1.1)
        ok &= report[2]["holds"]
        worst = max(worst, report[2]["relative_excess"])
    check("exp(8u) growth estimate with constant 2b^2/a", ok,
          f"max relative excess {worst:.3e}")


def test_algebraic_lemma():
    rng = np.random.default_rng(0)
    violations = 0
    for _ in range(10 ** 5):
        H = rng.standard_normal((4, 4))
        v = rng.standard_normal(4)
        lhs, rhs = matrix_lemma_check(H, v)
        violations += int(lhs > rhs)
    check("algebraic matrix lemma (10^5 samples)", violations == 0,
          f"{violations} violations")


def test_flat_torus_identity(all_recorded_runs):
    worst = max(abs(rec.hess2 - rec.lap2) / (1.0 + rec.lap2)
                for run in all_recorded_runs for rec in run.records)
    check("flat-torus identity hess2 = lap2", worst <= 1e-9,
          f"max relative gap {worst:.2e}")


def test_concentration_localization():
    g = make_grid(16, 3)
    target = SphereTarget(3)
    center = (0.0, 0.0, 0.0, 0.0)
    f = generate_initial(g, target,
                         InitSpec("bubble", lam=0.25, center=center), seed=0)
    res = concentration(g, f, ConcentrationConfig())
    cell = (2 * np.pi / 16) * (16 // 4)
    offsets = [abs((c - w + np.pi) % (2 * np.pi) - np.pi)
               for c, w in zip(res.center, center)]
    check("concentration localization (bubble)",
          max(offsets) <= cell + 1e-12,
          f"argmax offset {max(offsets):.3g}, cell {cell:.3g}")


def test_reduction_mode():
    g = make_grid(8, 3)
    target = SphereTarget(3)
    f0 = generate_initial(
        g, target, InitSpec("perturbed_constant", eps=0.5, mode_cap=2),
        seed=1)
    params = FlowParams(dt=flow.stability_dt(g, np.zeros(g.shape),
                                             FlowParams()), t_end=1.0)
    run = run_trajectory(g, target, f0, params, 50, record_every=5,
                         couple_u=False)
    ok = (np.all(run.final_state.conformal.u == 0.0)
          and all(rec.u_min == 0.0 and rec.u_max == 0.0
                  for rec in run.records))
    check("biharmonic reduction keeps u = 0", ok)
