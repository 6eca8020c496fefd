"""Short-time construction as a time stepper: frozen-coefficient operators.

Per window [0, T] the pair update is
    S1: solve (d_t + e^{-4u} Delta^2) h = e^{-4u} B(f),  h(0) = f0
    S2: v(t) = (1/4) log( e^{-4at} (1 + 4b int_0^t e^{4as} D(f)) ),
both with (f, u) frozen at the previous iterate. Iterating from the free
bilaplacian semigroup applied to f0 contracts to the flow solution for T
small enough; non-contraction is detected and reported so the caller can
halve the window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import flow, lattice
from .flow import ConformalState, FlowParams, FlowState
from .lattice import Grid4
from .target import project_point


class NonContractionError(RuntimeError):
    """Successive-iterate distances stopped decreasing: window too large."""


@dataclass(frozen=True)
class PicardWindow:
    T: float
    max_iter: int = 8
    tol: float = 1e-10
    inner_steps: int = 8

    def __post_init__(self):
        if self.T < 0:
            raise ValueError("window length must be nonnegative")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 2:
            raise ValueError("max_iter must be >= 2")
        if self.inner_steps < 1:
            raise ValueError("inner_steps must be >= 1")

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.inner_steps + 1)


@dataclass(frozen=True)
class DiscreteNorms:
    """Grid-computable restrictions of the window solution norms."""

    p2_partial: float
    z2_partial: float


def _time_l2(values, dt):
    # values: per-sample spatial integrals of a squared quantity
    return float(np.sqrt(np.trapezoid(values, dx=dt)))


def p2_partial(grid: Grid4, traj, dt: float) -> float:
    """Space-time L2 of (f, Delta^2 f, d_t f) over the window samples."""
    m = len(traj) - 1
    sq = []
    for j, fj in enumerate(traj):
        bil = lattice.bilaplacian(grid, fj)
        s = lattice.integrate(grid, np.sum(fj * fj, axis=-1))
        s += lattice.integrate(grid, np.sum(bil * bil, axis=-1))
        if dt > 0:
            k = min(j, m - 1)
            ft = (traj[k + 1] - traj[k]) / dt
            s += lattice.integrate(grid, np.sum(ft * ft, axis=-1))
        sq.append(s)
    return _time_l2(sq, dt)


def z2_partial(grid: Grid4, traj, dt: float) -> float:
    """Space-time L2 of (u, Delta u, d_t u) over the window samples."""
    m = len(traj) - 1
    sq = []
    for j, uj in enumerate(traj):
        lap = lattice.laplacian(grid, uj)
        s = lattice.integrate(grid, uj * uj)
        s += lattice.integrate(grid, lap * lap)
        if dt > 0:
            k = min(j, m - 1)
            ut = (traj[k + 1] - traj[k]) / dt
            s += lattice.integrate(grid, ut * ut)
        sq.append(s)
    return _time_l2(sq, dt)


def _explicit_b(grid: Grid4, f):
    """The nonlinearity B(f) alone (no bilaplacian, no e^{-4u})."""
    fh = lattice.to_spectral(grid, f)
    ik = [1j * grid.kvec(i) for i in range(4)]
    df = [lattice.from_spectral(grid, fh * ik[i][..., None]) for i in range(4)]
    lap = lattice.from_spectral(grid, fh * (-grid.k2)[..., None])

    df2 = sum(np.sum(d * d, axis=-1) for d in df)
    term_a = lattice.laplacian(grid, -df2[..., None] * f)

    f_dot_lap = np.sum(f * lap, axis=-1)
    lap2 = np.sum(lap * lap, axis=-1)
    s_dot = sum(d * np.sum(d * lap, axis=-1)[..., None] for d in df)
    term_dp = -(f_dot_lap[..., None] * lap + 2.0 * s_dot + lap2[..., None] * f)

    w = np.stack([
        -(f_dot_lap[..., None] * df[i] + np.sum(df[i] * lap, axis=-1)[..., None] * f)
        for i in range(4)
    ])
    wh = lattice.to_spectral(grid, np.moveaxis(w, 0, -2))
    div_w = lattice.from_spectral(
        grid, sum(wh[..., i, :] * ik[i][..., None] for i in range(4))
    )
    return term_a - term_dp + 2.0 * div_w


def s1_solve(grid: Grid4, target, f_frozen, u_frozen, f0,
             window: PicardWindow):
    """Linear fourth-order solve with frozen coefficient and frozen source.

    One stabilized-implicit substep per sample interval:
        (1 + dt cbar Delta^2) h+ = h + dt ((cbar - e^{-4u}) Delta^2 h + g)
    with cbar = max e^{-4u}; exact implicit Euler when u is constant.
    Linear in (f0, source).
    """
    m = window.inner_steps
    dt = window.T / m if m else 0.0
    h = np.array(f0, dtype=float)
    out = [h]
    for j in range(m):
        e4u = np.exp(-4.0 * u_frozen[j])
        cbar = float(np.max(e4u))
        g = e4u[..., None] * _explicit_b(grid, f_frozen[j])
        bil_h = lattice.bilaplacian(grid, h)
        explicit = h + dt * ((cbar - e4u)[..., None] * bil_h + g)
        eh = lattice.to_spectral(grid, explicit)
        h = lattice.from_spectral(grid, eh / (1.0 + dt * cbar * grid.k4)[..., None])
        out.append(h)
    return np.stack(out)


def s2_solve(grid: Grid4, f_frozen, window: PicardWindow,
             params: FlowParams, accum0=None, t0: float = 0.0):
    """Exact conformal quadrature along the frozen map trajectory.

    With accum0/t0 given, the window continues a run whose global
    accumulator at time t0 is accum0; otherwise v(0) = 0.
    """
    m = window.inner_steps
    dt = window.T / m if m else 0.0
    times = window.times + t0
    a, b = params.a, params.b
    accum = np.zeros(grid.shape) if accum0 is None else np.array(accum0)
    out = [0.25 * (np.log1p(4.0 * b * accum) - 4.0 * a * t0)]
    d_prev = flow.density(grid, f_frozen[0])
    for j in range(m):
        d_next = flow.density(grid, f_frozen[j + 1])
        accum = accum + 0.5 * dt * (np.exp(4 * a * times[j]) * d_prev
                                    + np.exp(4 * a * times[j + 1]) * d_next)
        out.append(0.25 * (np.log1p(4.0 * b * accum) - 4.0 * a * times[j + 1]))
        d_prev = d_next
    return np.stack(out)


def _semigroup_trajectory(grid: Grid4, f0, window: PicardWindow):
    """Free bilaplacian semigroup e^{-t Delta^2} f0 at the window samples."""
    fh = lattice.to_spectral(grid, f0)
    return np.stack([
        lattice.from_spectral(grid, fh * np.exp(-t * grid.k4)[..., None])
        for t in window.times
    ])


def picard_window(grid: Grid4, target, state0: FlowState,
                  window: PicardWindow, params: FlowParams,
                  norm_weight: float = 1.0):
    """Iterate (f,u) <- (S1(f,u), S2(f,u)) to a fixed point over one window.

    Continues from an arbitrary flow state (the window's conformal factor
    folds into the running accumulator). Returns (FlowState at t0 + T,
    successive-iterate distances). Raises NonContractionError if the
    distances fail to decrease monotonically after the second iteration
    while still above tol.
    """
    if window.T == 0.0:
        return state0, []

    f0 = state0.f
    t0 = state0.t
    accum0 = state0.conformal.accum
    f_traj = _semigroup_trajectory(grid, f0, window)
    u_traj = np.broadcast_to(
        state0.conformal.u, (window.inner_steps + 1,) + grid.shape
    ).copy()
    dt = window.T / window.inner_steps

    distances = []
    for _ in range(window.max_iter):
        f_new = s1_solve(grid, target, f_traj, u_traj, f0, window)
        u_new = s2_solve(grid, f_traj, window, params, accum0=accum0, t0=t0)
        dist = (p2_partial(grid, f_new - f_traj, dt) / (2.0 * norm_weight)
                + z2_partial(grid, u_new - u_traj, dt))
        distances.append(dist)
        f_traj, u_traj = f_new, u_new
        if dist < window.tol:
            break
        stalled = len(distances) >= 3 and distances[-1] >= distances[-2]
        # A plateau at the rounding floor is convergence, not divergence.
        if stalled and dist > 1e-10 * distances[0]:
            raise NonContractionError(
                f"distance sequence stalled at {dist:.3e}; window too large"
            )
        if stalled:
            break

    norms = np.linalg.norm(f_traj[-1], axis=-1)
    drift = float(np.max(np.abs(norms - 1.0)))
    f_final = project_point(f_traj[-1])
    a = params.a
    times = window.times + t0
    d_samples = [flow.density(grid, fj) for fj in f_traj]
    accum = np.array(accum0)
    for j in range(window.inner_steps):
        accum += 0.5 * dt * (np.exp(4 * a * times[j]) * d_samples[j]
                             + np.exp(4 * a * times[j + 1]) * d_samples[j + 1])
    t1 = t0 + window.T
    u = 0.25 * (np.log1p(4.0 * params.b * accum) - 4.0 * a * t1)
    conf = ConformalState(u=u, accum=accum, t=t1)
    state = FlowState(f=f_final, conformal=conf, t=t1,
                      step_count=state0.step_count + 1, last_drift=drift)
    return state, distances


def picard_iterate(grid: Grid4, target, f0, window: PicardWindow,
                   params: FlowParams, norm_weight: float = 1.0):
    """Single window from fresh initial data (u(0) = 0)."""
    state0 = FlowState.initial(grid, np.array(f0, dtype=float))
    return picard_window(grid, target, state0, window, params, norm_weight)
