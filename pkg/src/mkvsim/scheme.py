"""Euler-Maruyama engines for interacting particle systems with common noise.

Time is organised in root cells of length ``root_step`` (by default the base
step ``delta``). Inside a cell every step covers one node of a dyadic tree,
so step lengths are ``root_step / 2**j``. Brownian increments come from a
bridge construction on that tree and jumps from a per-cell event list (see
:mod:`mkvsim.noise`), which makes runs with different step sizes exact
refinements of each other when they share a plan and a root step.

In ``tamed_adaptive`` mode the step is the largest dyadic length not above
``min(delta, min_i h(X^i, mu))`` that keeps the step aligned on the tree.
All particles share one clock.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .coefficients import CoefficientModel, ConfigError
from .measure import EmpiricalMeasure, MeasureView, w2_paired_bound
from .noise import BROWNIAN, COMMON, MAX_LEVEL, BrownianTree, CellJumps, NoisePlan

__all__ = [
    "SCHEMES",
    "SimConfig",
    "SystemState",
    "StepNoise",
    "Trajectory",
    "FrozenFlow",
    "PicardDiagnostics",
    "ExplosionError",
    "tame_sigma",
    "tame_sigma0",
    "tame_c",
    "adaptive_h",
    "step_size",
    "em_step",
    "simulate_interacting",
    "simulate_frozen",
    "picard_iterate",
    "coupled_runs",
]

SCHEMES = ("plain", "tamed_adaptive")
EXPLOSION_THRESHOLD = 1e12
STEP_RULE = "dt = dyadic floor of min(delta, min_i h(X_i, mu)), aligned to the noise tree"


class ExplosionError(RuntimeError):
    """A particle left the finite range during a step."""

    def __init__(self, particle: int, time: float):
        super().__init__(f"explosion detected: particle {particle} at t={time:.6g}")
        self.particle = particle
        self.time = time


def _is_dyadic_ratio(big: float, small: float) -> int | None:
    ratio = big / small
    level = int(round(math.log2(ratio))) if ratio >= 1 else -1
    if level < 0 or not math.isclose(ratio, 2.0**level, rel_tol=1e-9):
        return None
    return level


@dataclass(frozen=True)
class SimConfig:
    """Discretisation and recording settings for one simulation.

    ``record_stride`` counts root cells between recorded snapshots; the
    horizon must be a whole number of root cells.
    """

    n_particles: int
    horizon: float
    delta: float
    h0: float = 1.0
    scheme: str = "tamed_adaptive"
    record_stride: int = 1
    x0: tuple[float, ...] | None = None
    root_step: float | None = None

    def __post_init__(self):
        if int(self.n_particles) != self.n_particles or self.n_particles < 1:
            raise ConfigError("N", f"must be an integer >= 1, got {self.n_particles}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ConfigError("T", f"must be > 0, got {self.horizon}")
        if not 0 < self.delta < 1:
            raise ConfigError("delta", f"must lie in the open interval (0,1), got {self.delta}")
        if not self.h0 > 0:
            raise ConfigError("h0", f"must be > 0, got {self.h0}")
        if self.scheme not in SCHEMES:
            raise ConfigError("scheme", f"must be one of {SCHEMES}, got {self.scheme!r}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ConfigError("record_stride", "must be an integer >= 1")
        if self.x0 is not None:
            object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))
        root = self.root
        if _is_dyadic_ratio(root, self.delta) is None:
            raise ConfigError("delta", f"must equal root_step / 2**j (root_step={root})")
        cells = self.horizon / root
        if abs(cells - round(cells)) > 1e-9 * max(1.0, cells) or round(cells) < 1:
            raise ConfigError("T", f"must be a whole number of root steps ({root})")

    @property
    def root(self) -> float:
        return self.root_step if self.root_step is not None else self.delta

    @property
    def delta_level(self) -> int:
        return _is_dyadic_ratio(self.root, self.delta)

    @property
    def n_cells(self) -> int:
        return int(round(self.horizon / self.root))

    def record_cells(self) -> list[int]:
        """Root-cell counts at which snapshots are taken (0 included)."""
        cells = list(range(0, self.n_cells, self.record_stride))
        cells.append(self.n_cells)
        return cells

    def record_times(self) -> np.ndarray:
        return np.array([c * self.root for c in self.record_cells()])

    def initial_state(self, model: CoefficientModel) -> np.ndarray:
        x0 = model.default_x0() if self.x0 is None else np.asarray(self.x0, dtype=float)
        if x0.size == 1 and model.dim > 1:
            x0 = np.full(model.dim, float(x0[0]))
        if x0.shape != (model.dim,):
            raise ConfigError("x0", f"expected {model.dim} coordinates, got {x0.size}")
        return np.tile(x0, (self.n_particles, 1))


@dataclass
class SystemState:
    time: float
    positions: np.ndarray
    measure: MeasureView

    @classmethod
    def at(cls, time: float, positions) -> "SystemState":
        pos = np.asarray(positions, dtype=float)
        if pos.ndim == 1:
            pos = pos.reshape(-1, 1)
        return cls(float(time), pos, MeasureView(EmpiricalMeasure(pos)))


@dataclass(frozen=True)
class StepNoise:
    """Noise consumed by one Euler step.

    ``jumps`` holds each particle's sum of raw jump sizes in the step; the
    compensator ``-dt * int z nu(dz)`` is added in :func:`em_step`.
    """

    dW: np.ndarray
    dW0: np.ndarray
    jumps: np.ndarray | None = None
    mean_jump: np.ndarray | None = None


class FrozenFlow:
    """Piecewise-constant measure flow ``s -> mu_s`` (left value between grid points)."""

    def __init__(self, times, measures):
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or len(times) != len(measures) or len(times) == 0:
            raise ValueError("times and measures must be non-empty and of equal length")
        if np.any(np.diff(times) <= 0):
            raise ValueError("flow grid must be strictly increasing")
        self.times = times
        self.measures = list(measures)
        self._views: dict[int, MeasureView] = {}

    @classmethod
    def constant(cls, measure: EmpiricalMeasure, start: float = 0.0) -> "FrozenFlow":
        return cls([start], [measure])

    def index_at(self, t: float) -> int:
        return max(int(np.searchsorted(self.times, t, side="right")) - 1, 0)

    def view_at(self, t: float) -> MeasureView:
        i = self.index_at(t)
        view = self._views.get(i)
        if view is None:
            view = MeasureView(self.measures[i])
            self._views[i] = view
        return view

    def __len__(self) -> int:
        return len(self.times)


@dataclass
class Trajectory:
    """Recorded snapshots of one run plus the common-noise path it used."""

    times: np.ndarray
    positions: np.ndarray
    common_times: np.ndarray
    common_path: np.ndarray
    n_steps: int
    min_dt: float
    max_dt: float
    scheme: str
    step_rule: str
    flow: FrozenFlow | None = None

    def snapshot(self, k: int) -> SystemState:
        return SystemState.at(self.times[k], self.positions[k])

    def final(self) -> SystemState:
        return self.snapshot(len(self.times) - 1)


# ---------------------------------------------------------------------------
# taming and step control


def _matrix_norm(a: np.ndarray) -> np.ndarray:
    if a.ndim == 0:
        return np.abs(a)
    if a.ndim < 2:
        raise ValueError("coefficient must be a scalar or have two trailing matrix axes")
    return np.sqrt(np.sum(a * a, axis=(-2, -1)))


def _vector_norm(x: np.ndarray) -> np.ndarray:
    if x.ndim == 0:
        return np.abs(x)
    return np.sqrt(np.sum(x * x, axis=-1))


def _scale(a: np.ndarray, factor: np.ndarray) -> np.ndarray:
    if a.ndim == 0:
        return a * factor
    return a * factor[..., None, None]


def tame_sigma(sig, x, delta):
    """``sigma / (1 + sqrt(delta) |sigma| (1 + |x|))``.

    ``delta`` is a scalar or one value per batch entry.
    """
    sig = np.asarray(sig, dtype=float)
    x = np.asarray(x, dtype=float)
    factor = 1.0 / (1.0 + np.sqrt(delta) * _matrix_norm(sig) * (1.0 + _vector_norm(x)))
    return _scale(sig, factor)


def tame_sigma0(sig0, x, delta):
    """Common-noise counterpart of :func:`tame_sigma`."""
    return tame_sigma(sig0, x, delta)


def tame_c(cv, x, bval, delta):
    """``c / (1 + sqrt(delta) |c| (1 + |x| + |b|))`` with the untamed drift ``b``."""
    cv = np.asarray(cv, dtype=float)
    x = np.asarray(x, dtype=float)
    bval = np.asarray(bval, dtype=float)
    growth = 1.0 + _vector_norm(x) + _vector_norm(bval)
    factor = 1.0 / (1.0 + np.sqrt(delta) * _matrix_norm(cv) * growth)
    return _scale(cv, factor)


def adaptive_h(x, b, sig, cv, ell: float, p0: int, h0: float = 1.0) -> np.ndarray:
    """``h0 / ((1 + |b| + |sigma| + |x|^ell)^2 + |c|^p0)`` per particle.

    The common-noise coefficient does not enter.
    """
    x = np.asarray(x, dtype=float)
    group = 1.0 + _vector_norm(np.asarray(b, float)) + _matrix_norm(np.asarray(sig, float)) + _vector_norm(x) ** ell
    return h0 / (group**2 + _matrix_norm(np.asarray(cv, float)) ** p0)


def step_size(state: SystemState, model: CoefficientModel, cfg: SimConfig) -> float:
    """``min(delta, min_i h(X^i, mu))``, clipped at the next record time.

    The simulator then rounds this down onto the dyadic noise tree.
    """
    b, s, _, c = model.evaluate(state.positions, state.measure, state.time)
    h = adaptive_h(state.positions, b, s, c, model.constants.ell, model.constants.p0, cfg.h0)
    dt = min(cfg.delta, float(h.min()))
    times = cfg.record_times()
    later = times[times > state.time + 1e-15 * max(1.0, state.time)]
    if later.size:
        dt = min(dt, float(later[0] - state.time))
    return dt


def _matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    # Explicit column loop: fixed summation order for every row, so chunked
    # and unchunked evaluation agree bit for bit.
    out = m[:, :, 0] * v[:, 0:1]
    for j in range(1, v.shape[1]):
        out = out + m[:, :, j] * v[:, j : j + 1]
    return out


def _coefficients(model, x, mu, t, executor, n_chunks):
    if executor is None or n_chunks <= 1 or x.shape[0] < 2 * n_chunks:
        return model.evaluate(x, mu, t)
    bounds = np.linspace(0, x.shape[0], n_chunks + 1).astype(int)
    parts = list(
        executor.map(lambda ab: model.evaluate(x[ab[0] : ab[1]], mu, t), zip(bounds[:-1], bounds[1:]))
    )
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(4))


def _advance(x, coeffs, dt, noise: StepNoise, scheme, delta, t):
    b, s, s0, c = coeffs
    if scheme == "tamed_adaptive":
        s = tame_sigma(s, x, delta)
        s0 = tame_sigma0(s0, x, delta)
        c = tame_c(c, x, b, delta)
    n, d = x.shape
    dW0 = np.broadcast_to(np.asarray(noise.dW0, dtype=float).reshape(1, d), (n, d))
    new = x + b * dt + _matvec(s, noise.dW) + _matvec(s0, dW0)
    if noise.jumps is not None:
        comp = -dt * np.asarray(noise.mean_jump, dtype=float).reshape(1, d)
        new = new + _matvec(c, noise.jumps + comp)
    bad = ~np.isfinite(new) | (np.abs(new) > EXPLOSION_THRESHOLD)
    if bad.any():
        raise ExplosionError(int(np.argmax(bad.any(axis=1))), t + dt)
    return new


def em_step(
    state: SystemState,
    dt: float,
    model: CoefficientModel,
    noise: StepNoise,
    scheme: str = "plain",
    delta: float | None = None,
) -> SystemState:
    """One synchronous Euler step of all particles.

    Coefficients of every particle are evaluated at the pre-step positions and
    measure; ``noise.dW0`` is shared by all particles. ``delta`` is the taming
    parameter (defaults to ``dt``) and is ignored in plain mode.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    coeffs = model.evaluate(state.positions, state.measure, state.time)
    new = _advance(state.positions, coeffs, dt, noise, scheme, dt if delta is None else delta, state.time)
    return SystemState.at(state.time + dt, new)


# ---------------------------------------------------------------------------
# simulation loop


def _run(
    cfg: SimConfig,
    model: CoefficientModel,
    plan: NoisePlan,
    flow: FrozenFlow | None = None,
    workers: int = 1,
    keep_flow: bool = False,
) -> Trajectory:
    if plan.n_particles != cfg.n_particles:
        raise ConfigError("N", f"noise plan has {plan.n_particles} particles, config {cfg.n_particles}")
    if plan.dim != model.dim:
        raise ConfigError("dim", f"noise plan dimension {plan.dim} != model dimension {model.dim}")
    x = cfg.initial_state(model)
    d = model.dim
    root = cfg.root
    full = 1 << MAX_LEVEL
    base_level = cfg.delta_level
    tamed = cfg.scheme == "tamed_adaptive"
    consts = model.constants
    law = model.jump_law
    rows = plan.particle_index
    identity_rows = np.array_equal(rows, np.arange(plan.block_size))
    record_at = set(cfg.record_cells())

    rec_times, rec_pos = [0.0], [x.copy()]
    common_t, common_w = [0.0], [np.zeros(d)]
    flow_t, flow_m = [], []
    w0 = np.zeros(d)
    n_steps, min_dt, max_dt = 0, math.inf, 0.0

    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for cell in range(cfg.n_cells):
            wtree = BrownianTree(plan, BROWNIAN, cell, root, plan.block_size)
            ctree = BrownianTree(plan, COMMON, cell, root, 1)
            jumps = CellJumps(plan, cell, root, law, plan.block_size) if law.intensity > 0 else None
            pos = 0
            while pos < full:
                t = (cell + pos / full) * root
                if flow is None:
                    mu = MeasureView(EmpiricalMeasure(x))
                else:
                    mu = flow.view_at(t)
                if keep_flow:
                    flow_t.append(t)
                    flow_m.append(EmpiricalMeasure(x))
                coeffs = _coefficients(model, x, mu, t, executor, workers)
                level = base_level
                if tamed:
                    h = adaptive_h(x, coeffs[0], coeffs[1], coeffs[3], consts.ell, consts.p0, cfg.h0)
                    target = min(cfg.delta, float(h.min()))
                    while level < MAX_LEVEL and root / (1 << level) > target:
                        level += 1
                while pos & ((1 << (MAX_LEVEL - level)) - 1):
                    level += 1
                length = 1 << (MAX_LEVEL - level)
                node = (1 << level) + (pos >> (MAX_LEVEL - level))
                dt = root / (1 << level)

                dW = wtree.increment(node)
                if not identity_rows:
                    dW = dW[rows]
                dW0 = ctree.increment(node)[0]
                jump_sum = None
                if jumps is not None:
                    jump_sum = jumps.sums(pos / full, (pos + length) / full)
                    if not identity_rows:
                        jump_sum = jump_sum[rows]
                noise = StepNoise(dW, dW0, jump_sum, law.mean_jump)
                x = _advance(x, coeffs, dt, noise, cfg.scheme, cfg.delta, t)

                pos += length
                w0 = w0 + dW0
                common_t.append((cell + pos / full) * root)
                common_w.append(w0.copy())
                n_steps += 1
                min_dt = min(min_dt, dt)
                max_dt = max(max_dt, dt)
            if cell + 1 in record_at:
                rec_times.append((cell + 1) * root)
                rec_pos.append(x.copy())
    finally:
        if executor is not None:
            executor.shutdown()

    built_flow = None
    if keep_flow:
        flow_t.append(cfg.n_cells * root)
        flow_m.append(EmpiricalMeasure(x))
        built_flow = FrozenFlow(flow_t, flow_m)
    return Trajectory(
        times=np.array(rec_times),
        positions=np.stack(rec_pos),
        common_times=np.array(common_t),
        common_path=np.stack(common_w),
        n_steps=n_steps,
        min_dt=min_dt,
        max_dt=max_dt,
        scheme=cfg.scheme,
        step_rule=STEP_RULE if tamed else "dt = delta",
        flow=built_flow,
    )


def simulate_interacting(
    cfg: SimConfig,
    model: CoefficientModel,
    plan: NoisePlan,
    workers: int = 1,
    keep_flow: bool = False,
) -> Trajectory:
    """Simulate the N-particle system with the live empirical measure.

    Output depends only on ``(plan, cfg)``; ``workers`` splits coefficient
    evaluation across threads without changing a single bit of the result.
    With ``keep_flow`` the empirical measure at every step is returned as
    ``trajectory.flow``.
    """
    return _run(cfg, model, plan, None, workers, keep_flow)


def simulate_frozen(
    cfg: SimConfig,
    model: CoefficientModel,
    flow: FrozenFlow,
    plan: NoisePlan,
    workers: int = 1,
    keep_flow: bool = False,
) -> Trajectory:
    """Simulate particles driven by a given measure flow instead of their own.

    Particles are then conditionally independent given the common noise.
    """
    if flow.times[0] > 0:
        raise ValueError("flow must start at time 0")
    return _run(cfg, model, plan, flow, workers, keep_flow)


@dataclass
class PicardDiagnostics:
    distances: list[float]
    converged: bool
    iterations: int
    trajectory: Trajectory | None = None
    status: str = field(init=False)

    def __post_init__(self):
        self.status = "converged" if self.converged else "not converged"

    @property
    def ratios(self) -> list[float]:
        d = self.distances
        return [d[k + 1] / d[k] for k in range(len(d) - 1) if d[k] > 0]


def picard_iterate(
    cfg: SimConfig,
    model: CoefficientModel,
    plan: NoisePlan,
    max_iter: int = 20,
    tol: float = 1e-10,
    workers: int = 1,
) -> tuple[FrozenFlow, PicardDiagnostics]:
    """Fixed-point iteration ``flow -> law of the frozen-flow solution``.

    Starts from the flow constantly equal to the Dirac mass at ``x0`` and
    reruns :func:`simulate_frozen` under the same noise plan. The distance
    between iterates is the largest paired-coupling W2 bound over the record
    grid. Not converging within ``max_iter`` is reported, not raised.
    """
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    x = cfg.initial_state(model)
    flow = FrozenFlow.constant(EmpiricalMeasure.dirac(x[0]))
    n_rec = len(cfg.record_cells())
    prev = np.broadcast_to(x, (n_rec,) + x.shape)
    distances: list[float] = []
    traj = None
    converged = False
    for _ in range(max_iter):
        traj = simulate_frozen(cfg, model, flow, plan, workers=workers, keep_flow=True)
        dist = max(w2_paired_bound(prev[r], traj.positions[r]) for r in range(n_rec))
        distances.append(dist)
        flow = traj.flow
        prev = traj.positions
        if dist < tol:
            converged = True
            break
    return flow, PicardDiagnostics(distances, converged, len(distances), traj)


def coupled_runs(
    cfg: SimConfig,
    model: CoefficientModel,
    plan: NoisePlan,
    variants: list[dict],
    workers: int = 1,
) -> list[Trajectory]:
    """Run config variants on shared noise.

    All variants use one root step (``cfg.root_step`` or the largest variant
    ``delta``), so a coarse step's noise is exactly the sum of the finer
    steps' noise, and particle ``i`` reads substream ``i`` everywhere.
    """
    if not variants:
        raise ConfigError("variants", "need at least one variant")
    configs = []
    for v in variants:
        for key in ("n_particles", "x0", "horizon", "root_step", "record_stride"):
            if key in v and v[key] != getattr(cfg, key):
                raise ConfigError(key, "coupled variants must share N, x0, T and the record grid")
        configs.append(replace(cfg, **v))
    root = cfg.root_step if cfg.root_step is not None else max(c.delta for c in configs)
    configs = [replace(c, root_step=root) for c in configs]
    return [simulate_interacting(c, model, plan, workers=workers) for c in configs]
