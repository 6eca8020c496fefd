"""Run orchestration: config parsing, initial data, modes, persistence.

Config files are line-oriented ``key = value`` text; ``[section]`` headers
are allowed for grouping and ignored, unknown keys are rejected with the
line number. The ``bichf`` entry point exposes ``run``, ``verify`` and
``resume`` subcommands. Exit codes: 0 success, 2 config error, 3 numerical
abort, 4 non-contraction retry cap.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import re
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import diagnostics, fixedpoint, flow, lattice
from .diagnostics import ConcentrationConfig, DiagRecord
from .fixedpoint import NonContractionError, PicardWindow
from .flow import FlowParams, FlowState
from .lattice import Grid4, make_grid
from .target import SphereDepartureError, SphereTarget, project_point

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_NONCONTRACTION = 4

MODES = ("bichf", "biharmonic", "picard")
INIT_KINDS = ("constant", "circle", "perturbed_constant",
              "random_bandlimited", "bubble")


class ConfigError(ValueError):
    """Malformed or invalid run configuration."""


@dataclass(frozen=True)
class InitSpec:
    kind: str
    k: int = 1                      # circle winding
    eps: float = 0.1                # perturbed_constant amplitude
    mode_cap: int = 2
    amplitude: float = 1.0
    lam: float = 0.25               # bubble scale
    center: tuple = (np.pi, np.pi, np.pi, np.pi)


@dataclass(frozen=True)
class RunConfig:
    n: int = 8
    L: int = 3
    params: FlowParams = field(default_factory=FlowParams)
    mode: str = "bichf"
    init: InitSpec = field(default_factory=lambda: InitSpec("constant"))
    record_every: int = 1
    snapshot_every: int = 0
    out_dir: str = "."
    seed: int = 0
    diag: ConcentrationConfig = field(default_factory=ConcentrationConfig)
    extended_diag: bool = False
    dt_auto: bool = True
    # Picard-mode knobs
    inner_steps: int = 4
    max_iter: int = 8
    picard_tol: float = 1e-10
    picard_retries: int = 3


_KNOWN_KEYS = {
    "mode", "init", "n", "L", "a", "b", "dt", "t_end", "scheme",
    "cfl_safety", "u_route", "record_every", "snapshot_every", "out_dir",
    "seed", "extended_diag", "epsilon1", "radii", "stride",
    "inner_steps", "max_iter", "tol", "picard_retries",
}

_SECTION_RE = re.compile(r"^\[[A-Za-z0-9_.-]+\]$")


def _parse_init(text: str, lineno: int) -> InitSpec:
    text = text.strip()
    m = re.match(r"^([a-z_]+)(?:\((.*)\))?$", text)
    if not m:
        raise ConfigError(f"line {lineno}: cannot parse init spec {text!r}")
    kind, args = m.group(1), m.group(2)
    if kind not in INIT_KINDS:
        raise ConfigError(f"line {lineno}: unknown init kind {kind!r}")
    try:
        if kind == "constant":
            return InitSpec("constant")
        if kind == "circle":
            return InitSpec("circle", k=int(args))
        if kind == "perturbed_constant":
            eps, cap = (s.strip() for s in args.split(","))
            return InitSpec("perturbed_constant", eps=float(eps),
                            mode_cap=int(cap))
        if kind == "random_bandlimited":
            cap, amp = (s.strip() for s in args.split(","))
            return InitSpec("random_bandlimited", mode_cap=int(cap),
                            amplitude=float(amp))
        # bubble(lambda, (c1,c2,c3,c4))
        mb = re.match(r"^\s*([^,]+),\s*\(([^)]*)\)\s*$", args)
        if not mb:
            raise ValueError("expected bubble(lambda,(c1,c2,c3,c4))")
        center = tuple(float(s) for s in mb.group(2).split(","))
        if len(center) != 4:
            raise ValueError("bubble center needs 4 coordinates")
        return InitSpec("bubble", lam=float(mb.group(1)), center=center)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"line {lineno}: bad init arguments: {exc}") from exc


def parse_config(text: str) -> RunConfig:
    """Parse and validate key = value configuration text."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if _SECTION_RE.match(line):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = (val, lineno)
    return build_config(values)


def _take(values, key, conv, default):
    if key not in values:
        return default
    val, lineno = values.pop(key)
    try:
        return conv(val)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from exc


def _to_bool(s):
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def build_config(values: dict) -> RunConfig:
    mode = _take(values, "mode", str, "bichf")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")

    if "init" in values:
        val, lineno = values.pop("init")
        init = _parse_init(val, lineno)
    else:
        init = InitSpec("constant")

    n = _take(values, "n", int, 8)
    L = _take(values, "L", int, 3)
    a = _take(values, "a", float, 1.0)
    b = _take(values, "b", float, 1.0)
    dt_raw = _take(values, "dt", str, "auto")
    t_end = _take(values, "t_end", float, 0.1)
    scheme = _take(values, "scheme", str, "explicit-rk4")
    cfl = _take(values, "cfl_safety", float, 0.5)
    u_route = _take(values, "u_route", str, "quadrature")

    if a <= 0:
        raise ConfigError("a must be positive")
    if b < 0:
        raise ConfigError("b must be nonnegative")
    if (init.kind in ("perturbed_constant", "random_bandlimited")
            and init.mode_cap >= n // 2):
        raise ConfigError(
            f"mode_cap {init.mode_cap} is not resolved on an n = {n} grid")
    dt_auto = dt_raw == "auto"
    if dt_auto:
        # Conservative fixed step: worst-case stiffness over the horizon.
        dt = cfl * flow.RK4_REAL_AXIS / (n ** 4 * math.exp(4 * a * t_end))
    else:
        dt = float(dt_raw)

    try:
        params = FlowParams(a=a, b=b, dt=dt, t_end=t_end, scheme=scheme,
                            cfl_safety=cfl, u_route=u_route)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    radii = _take(
        values, "radii",
        lambda s: tuple(float(x) for x in s.split(",") if x.strip()),
        diagnostics.DEFAULT_RADII,
    )
    stride = _take(values, "stride", int, None)
    epsilon1 = _take(values, "epsilon1", float, 0.1)
    try:
        diag = ConcentrationConfig(radii=radii, stride=stride,
                                   epsilon1=epsilon1)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    config = RunConfig(
        n=n, L=L, params=params, mode=mode, init=init,
        record_every=_take(values, "record_every", int, 1),
        snapshot_every=_take(values, "snapshot_every", int, 0),
        out_dir=_take(values, "out_dir", str, "."),
        seed=_take(values, "seed", int, 0),
        diag=diag,
        extended_diag=_take(values, "extended_diag", _to_bool, False),
        dt_auto=dt_auto,
        inner_steps=_take(values, "inner_steps", int, 4),
        max_iter=_take(values, "max_iter", int, 8),
        picard_tol=_take(values, "tol", float, 1e-10),
        picard_retries=_take(values, "picard_retries", int, 3),
    )
    try:
        make_grid(config.n, config.L)
    except Exception as exc:
        raise ConfigError(str(exc)) from exc
    if config.record_every < 1:
        raise ConfigError("record_every must be >= 1")
    return config


def _rng(seed: int):
    # Counter-based generator: any language can replay the stream policy.
    return np.random.Generator(np.random.Philox(seed))


def _bandlimited_field(grid: Grid4, mode_cap: int, ncomp: int, rng):
    """Random trigonometric polynomial, identical as a function for any n.

    Coefficients are drawn in a fixed mode order with a smooth 1/(1+|k|^2)^2
    falloff, so the same seed yields the same continuum field at every
    resolution that resolves mode_cap.
    """
    if mode_cap >= grid.n // 2:
        raise ConfigError(
            f"mode_cap {mode_cap} is not resolved on an n = {grid.n} grid"
        )
    n = grid.n
    spec = np.zeros((n, n, n, n, ncomp), dtype=complex)
    for k in itertools.product(range(-mode_cap, mode_cap + 1), repeat=4):
        coeffs = rng.standard_normal(2 * ncomp)
        # Half-space representative: first nonzero component positive.
        first = next((c for c in k if c != 0), 0)
        if first < 0:
            continue
        kk = sum(c * c for c in k)
        w = 1.0 / (1.0 + kk) ** 2
        idx = tuple(c % n for c in k)
        nidx = tuple((-c) % n for c in k)
        for alpha in range(ncomp):
            av, bv = coeffs[2 * alpha] * w, coeffs[2 * alpha + 1] * w
            if first == 0:
                spec[idx + (alpha,)] += av
            else:
                spec[idx + (alpha,)] += 0.5 * (av - 1j * bv)
                spec[nidx + (alpha,)] += 0.5 * (av + 1j * bv)
    return np.fft.ifftn(spec * n ** 4, axes=(0, 1, 2, 3)).real


def generate_initial(grid: Grid4, target: SphereTarget, spec: InitSpec,
                     seed: int):
    """Deterministic initial map on the sphere for a given seed."""
    x1 = grid.coords[0]
    L = grid.L
    if spec.kind == "constant":
        f = np.zeros(grid.shape + (L,))
        f[..., L - 1] = 1.0
        return f
    if spec.kind == "circle":
        f = np.zeros(grid.shape + (L,))
        f[..., 0] = np.cos(spec.k * x1)
        f[..., 1] = np.sin(spec.k * x1)
        return f
    if spec.kind == "perturbed_constant":
        g = _bandlimited_field(grid, spec.mode_cap, L, _rng(seed))
        # Normalize by the root-mean-square amplitude. For a band-limited
        # field the grid mean of |g|^2 is an exact quadrature, so the same
        # seed yields the same continuum field at every resolution.
        g *= 1.0 / np.sqrt(np.mean(np.sum(g * g, axis=-1)))
        base = np.zeros(grid.shape + (L,))
        base[..., L - 1] = 1.0
        return project_point(base + spec.eps * g)
    if spec.kind == "random_bandlimited":
        rng = _rng(seed)
        for _ in range(8):
            g = _bandlimited_field(grid, spec.mode_cap, L, rng)
            norms = np.linalg.norm(g, axis=-1)
            if norms.min() > 1e-6 * norms.max():
                g *= spec.amplitude / np.sqrt(np.mean(norms ** 2))
                return project_point(g)
        raise SphereDepartureError(
            "random field repeatedly passed through the origin"
        )
    if spec.kind == "bubble":
        d1 = np.mod(grid.coords[0] - spec.center[0] + np.pi, 2 * np.pi) - np.pi
        d2 = np.mod(grid.coords[1] - spec.center[1] + np.pi, 2 * np.pi) - np.pi
        w1 = np.sin(d1) / spec.lam
        w2 = np.sin(d2) / spec.lam
        w2sq = w1 ** 2 + w2 ** 2
        f = np.zeros(grid.shape + (L,))
        f[..., 0] = 2.0 * w1 / (w2sq + 1.0)
        f[..., 1] = 2.0 * w2 / (w2sq + 1.0)
        f[..., 2] = (w2sq - 1.0) / (w2sq + 1.0)
        return project_point(f)
    raise ConfigError(f"unknown init kind {spec.kind!r}")


def _snapshot_components(state: FlowState):
    conf = state.conformal
    accum = conf.accum * np.exp(conf.log_scale)
    return np.concatenate(
        [state.f, accum[..., None], conf.u[..., None]], axis=-1
    )


def save_state(path, grid: Grid4, state: FlowState):
    lattice.write_snapshot(path, grid, state.t, _snapshot_components(state))


def load_state(path, params: FlowParams):
    n, L, ncomp, t, values = lattice.read_snapshot(path)
    if ncomp != L + 2:
        raise ConfigError(
            f"snapshot has {ncomp} components, expected L + 2 = {L + 2}"
        )
    grid = make_grid(n, L)
    f = np.ascontiguousarray(values[..., :L])
    accum = np.ascontiguousarray(values[..., L])
    u = np.ascontiguousarray(values[..., L + 1])
    conf = flow.ConformalState(u=u, accum=accum, t=t)
    step_count = int(round(t / params.dt))
    return grid, FlowState(f=f, conformal=conf, t=t, step_count=step_count)


class RunDriver:
    """Owns one run: stepping, recording, snapshots, summary, abort."""

    def __init__(self, config: RunConfig, grid: Grid4, state: FlowState):
        self.config = config
        self.grid = grid
        self.target = SphereTarget(L=grid.L)
        self.state = state
        self.records: list[DiagRecord] = []
        self.out_dir = Path(config.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.start_time = time.monotonic()
        self.warnings: list[str] = []
        # A resumed run starts mid-trajectory; the drift of the step that
        # produced the snapshot is not part of the state, so the boundary
        # record is left to the original run.
        self.skip_initial_record = False

    def _record(self):
        cfg = self.config
        u = (np.zeros(self.grid.shape) if cfg.mode == "biharmonic"
             else self.state.conformal.u)
        f_t = flow.rhs_projection(self.grid, self.target, self.state.f, u)
        rec = diagnostics.record(self.grid, self.state, f_t, cfg.diag,
                                 cfg.params)
        if cfg.mode == "biharmonic":
            # u is identically zero in this mode; the conformal state is
            # never advanced, but re-assert the reduction in the record.
            rec = DiagRecord(**{**rec.__dict__, "u_min": 0.0, "u_max": 0.0,
                                "volume": (2 * np.pi) ** 4,
                                "e8u": (2 * np.pi) ** 4,
                                "e12u": (2 * np.pi) ** 4,
                                "e16u": (2 * np.pi) ** 4})
        if rec.concentration_flag:
            self.warnings.append(
                f"t={rec.t:.6g}: concentration above epsilon1 at the "
                f"smallest radius"
            )
        if not np.isfinite(rec.energy):
            raise FloatingPointError("non-finite energy in diagnostics")
        self.records.append(rec)

    def _abort_snapshot(self):
        try:
            save_state(self.out_dir / "abort.bin", self.grid, self.state)
        except Exception:
            pass
        diagnostics.write_csv(self.out_dir / "diag.csv", self.records)

    def run(self) -> int:
        cfg = self.config
        params = cfg.params
        try:
            if cfg.mode == "picard":
                code = self._run_picard()
            else:
                code = self._run_stepped()
        except NonContractionError as exc:
            print(f"abort: {exc}", file=sys.stderr)
            self._abort_snapshot()
            self._summary(aborted=True)
            return EXIT_NONCONTRACTION
        except (SphereDepartureError, FloatingPointError, ValueError) as exc:
            print(f"abort: {exc}", file=sys.stderr)
            self._abort_snapshot()
            self._summary(aborted=True)
            return EXIT_NUMERICAL
        diagnostics.write_csv(self.out_dir / "diag.csv", self.records)
        save_state(self.out_dir / "final.bin", self.grid, self.state)
        self._summary(aborted=False)
        return code

    def _check_step(self):
        if not np.isfinite(self.state.f).all():
            raise FloatingPointError("NaN in the map field")
        if not np.isfinite(self.state.conformal.u).all():
            raise FloatingPointError("NaN in the conformal factor")

    def _run_stepped(self) -> int:
        cfg = self.config
        params = cfg.params
        nsteps = max(1, int(round((params.t_end - self.state.t) / params.dt)))
        couple = cfg.mode == "bichf"
        if (self.state.step_count % cfg.record_every == 0
                and not self.skip_initial_record):
            self._record()
        for _ in range(nsteps):
            self.state = flow.advance(self.grid, self.target, self.state,
                                      params, couple_u=couple)
            self._check_step()
            sc = self.state.step_count
            if sc % cfg.record_every == 0:
                self._record()
            if cfg.snapshot_every and sc % cfg.snapshot_every == 0:
                save_state(self.out_dir / f"snapshot_{sc:08d}.bin",
                           self.grid, self.state)
        if self.state.step_count % cfg.record_every != 0:
            self._record()
        return EXIT_OK

    def _run_picard(self) -> int:
        cfg = self.config
        params = cfg.params
        self._record()
        while self.state.t < params.t_end - 1e-15:
            T = min(params.dt, params.t_end - self.state.t)
            retries = 0
            while True:
                window = PicardWindow(T=T, max_iter=cfg.max_iter,
                                      tol=cfg.picard_tol,
                                      inner_steps=cfg.inner_steps)
                try:
                    self.state, _ = fixedpoint.picard_window(
                        self.grid, self.target, self.state, window, params)
                    break
                except NonContractionError:
                    retries += 1
                    if retries > cfg.picard_retries:
                        raise
                    T *= 0.5
            self._check_step()
            self._record()
        return EXIT_OK

    def _summary(self, aborted: bool):
        recs = self.records
        summary = {
            "mode": self.config.mode,
            "n": self.grid.n,
            "L": self.grid.L,
            "a": self.config.params.a,
            "b": self.config.params.b,
            "dt": self.config.params.dt,
            "t_end": self.config.params.t_end,
            "scheme": self.config.params.scheme,
            "seed": self.config.seed,
            "steps": self.state.step_count,
            "records": len(recs),
            "max_concentration": max((r.concentration for r in recs),
                                     default=0.0),
            "min_energy": min((r.energy for r in recs), default=0.0),
            "wall_time_s": time.monotonic() - self.start_time,
            "aborted": aborted,
            "warnings": self.warnings,
        }
        with open(self.out_dir / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2)
            fh.write("\n")


def run(config: RunConfig) -> int:
    grid = make_grid(config.n, config.L)
    target = SphereTarget(L=config.L)
    f0 = generate_initial(grid, target, config.init, config.seed)
    state = FlowState.initial(grid, f0)
    state = replace(state, density_cache=flow.density(grid, f0))
    return RunDriver(config, grid, state).run()


def resume(snapshot_path, config: RunConfig) -> int:
    grid, state = load_state(snapshot_path, config.params)
    if (grid.n, grid.L) != (config.n, config.L):
        raise ConfigError("snapshot grid does not match the configuration")
    state = replace(state, density_cache=flow.density(grid, state.f))
    driver = RunDriver(config, grid, state)
    driver.skip_initial_record = True
    return driver.run()


# --- headless invariant verification -----------------------------------

def _verify_checks(config: RunConfig):
    grid = make_grid(config.n, config.L)
    target = SphereTarget(L=config.L)
    tests = []

    x1 = grid.coords[0]
    circle = np.zeros(grid.shape + (grid.L,))
    circle[..., 0] = np.cos(x1)
    circle[..., 1] = np.sin(x1)

    lap = lattice.laplacian(grid, circle)
    tests.append(("spectral eigenfunction",
                  float(np.max(np.abs(lap + circle))) < 1e-11))

    vol = lattice.integrate(grid, np.ones(grid.shape))
    tests.append(("torus volume", abs(vol - (2 * np.pi) ** 4) < 1e-9))

    phi = lattice.window(grid, (np.pi,) * 4, np.pi / 2)
    gphi = lattice.gradient(grid, phi)
    gnorm = float(np.max(np.sqrt(np.sum(gphi ** 2, axis=0))))
    tests.append(("window gradient bound", gnorm <= 4.0 / (np.pi / 2)))

    ft = flow.rhs_projection(grid, target, circle, np.zeros(grid.shape))
    tests.append(("great-circle stationarity",
                  float(np.max(np.abs(ft))) <= 1e-9))

    rng = _rng(config.seed)
    ok = True
    for _ in range(1000):
        lhs, rhs = diagnostics.matrix_lemma_check(
            rng.standard_normal((4, 4)), rng.standard_normal(4))
        ok &= lhs <= rhs * (1 + 1e-12)
    tests.append(("algebraic matrix lemma", ok))

    params = replace(config.params,
                     dt=flow.stability_dt(grid, 0.0, config.params),
                     t_end=config.params.dt * 10)
    f0 = generate_initial(grid, target, InitSpec("perturbed_constant",
                                                 eps=0.3, mode_cap=2),
                          config.seed)
    state = FlowState.initial(grid, f0)
    e_prev = flow.bienergy(grid, f0)
    mono = True
    bound_ok = True
    for _ in range(10):
        state = flow.step(grid, target, state, params)
        e_next = flow.bienergy(grid, state.f)
        mono &= e_next <= e_prev + 1e-8 * (1 + e_prev)
        bound_ok &= bool(np.all(np.exp(-4 * state.conformal.u)
                                <= np.exp(4 * params.a * state.t)))
        e_prev = e_next
    tests.append(("energy monotone", mono))
    tests.append(("pointwise conformal bound", bound_ok))
    tests.append(("post-step on sphere",
                  float(np.max(np.abs(np.linalg.norm(state.f, axis=-1) - 1)))
                  <= 1e-12))
    return tests


def verify(config: RunConfig) -> int:
    failed = False
    for name, ok in _verify_checks(config):
        print(f"{'PASS' if ok else 'FAIL'} {name}")
        failed |= not ok
    return EXIT_NUMERICAL if failed else EXIT_OK


# --- entry point --------------------------------------------------------

def _load_config(path, args) -> RunConfig:
    text = Path(path).read_text()
    config = parse_config(text)
    params = config.params
    if getattr(args, "t_end", None) is not None:
        params = replace(params, t_end=args.t_end)
    if getattr(args, "mode", None) is not None:
        if args.mode not in MODES:
            raise ConfigError(f"unknown mode {args.mode!r}")
        config = replace(config, mode=args.mode)
    if getattr(args, "seed", None) is not None:
        config = replace(config, seed=args.seed)
    if getattr(args, "out", None) is not None:
        config = replace(config, out_dir=args.out)
    return replace(config, params=params)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bichf",
        description="Conformally modulated biharmonic map flow on the 4-torus",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured run")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--t-end", dest="t_end", type=float, default=None)
    p_run.add_argument("--mode", default=None)

    p_verify = sub.add_parser("verify", help="run the invariant suite")
    p_verify.add_argument("config")

    p_resume = sub.add_parser("resume", help="continue from a snapshot")
    p_resume.add_argument("snapshot")
    p_resume.add_argument("config")
    p_resume.add_argument("--out", default=None)
    p_resume.add_argument("--t-end", dest="t_end", type=float, default=None)

    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config, args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "run":
            return run(config)
        if args.command == "verify":
            return verify(config)
        return resume(args.snapshot, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
