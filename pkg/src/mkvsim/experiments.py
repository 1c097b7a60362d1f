"""Desk-scale experiments: moment curves, chaos rate, strong order, model1_lq oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .coefficients import CoefficientModel, ConfigError, _integral_schedule, builtin_model, levy_abs_moment
from .measure import EmpiricalMeasure, MeasureView
from .noise import NoisePlan
from .scheme import FrozenFlow, SimConfig, Trajectory, simulate_frozen, simulate_interacting

__all__ = [
    "RateFit",
    "OracleSeries",
    "MomentCurve",
    "phi",
    "fit_loglog",
    "model1_oracle",
    "oracle_flow",
    "moment_curve",
    "bound_shape",
    "chaos_experiment",
    "strong_order_experiment",
    "outer_seed",
]


def phi(N: int, d: int) -> float:
    """Empirical-measure convergence rate in dimension ``d``."""
    if N < 2 or d < 1:
        raise ValueError("phi needs N >= 2 and d >= 1")
    if d < 4:
        return N**-0.5
    if d == 4:
        return N**-0.5 * math.log(N)
    return N ** (-2.0 / d)


@dataclass
class RateFit:
    """Least-squares line through ``(log parameter, log error)``."""

    points: list[tuple[float, float]]
    slope: float
    intercept: float
    r_squared: float
    meta: dict = field(default_factory=dict)

    @property
    def degenerate(self) -> bool:
        return bool(self.meta.get("degenerate", False))


def fit_loglog(points) -> RateFit:
    pts = [(float(p), float(e)) for p, e in points]
    if len(pts) < 2:
        raise ValueError("need at least two points")
    arr = np.array(pts)
    if np.any(arr <= 0):
        raise ValueError("log of nonpositive value in fit points")
    lx, ly = np.log(arr[:, 0]), np.log(arr[:, 1])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(pts, float(slope), float(intercept), r2)


def _degenerate_fit(points, note) -> RateFit:
    return RateFit([(float(p), float(e)) for p, e in points], math.nan, math.nan, math.nan,
                   {"degenerate": True, "note": note})


# ---------------------------------------------------------------------------
# model1_lq oracle


@dataclass(frozen=True)
class OracleSeries:
    """Conditional mean and variance of model1_lq given one common-noise path."""

    times: np.ndarray
    m: np.ndarray
    v: np.ndarray
    common_path: np.ndarray

    def at(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Values at grid times (nearest grid point)."""
        idx = np.clip(np.searchsorted(self.times, np.asarray(t) - 1e-12), 0, len(self.times) - 1)
        return self.m[idx], self.v[idx]


def model1_oracle(params, times, common_path) -> OracleSeries:
    """Conditional law summaries of the linear common-noise model.

    Given ``W0`` on ``times``, the mean is ``x0 + int u + theta W0`` exactly and
    the variance solves ``v' = (sigma^2 + int gamma0^2 dnu) m^2``, integrated
    with the trapezoid rule on the same grid.
    """
    if isinstance(params, CoefficientModel):
        model = params
    else:
        model = builtin_model("model1_lq", params)
    p = model.params
    times = np.asarray(times, dtype=float)
    w0 = np.asarray(common_path, dtype=float).reshape(len(times), -1)[:, 0]
    u_int = _integral_schedule(p["u"])
    m = float(p["x0"]) + u_int(times) + float(p["theta"]) * w0
    jump_var = float(p["gamma0_scale"]) ** 2 * levy_abs_moment(model.jump_law, 2)
    rate = float(p["sigma"]) ** 2 + jump_var
    v = rate * cumulative_trapezoid(m**2, times, initial=0.0)
    return OracleSeries(times, m, v, w0.copy())


def oracle_flow(series: OracleSeries) -> FrozenFlow:
    """Two-atom flow ``m +- sqrt(v)`` matching the oracle mean and variance."""
    sd = np.sqrt(np.maximum(series.v, 0.0))
    atoms = [EmpiricalMeasure([[m - s], [m + s]]) for m, s in zip(series.m, sd)]
    return FrozenFlow(series.times, atoms)


# ---------------------------------------------------------------------------
# moments


def bound_shape(t, p: float, gamma: float, gamma2: float) -> np.ndarray:
    """Time profile of the moment bound: ``1 + exp(gamma p t)``, or polynomial when gamma = 0."""
    t = np.asarray(t, dtype=float)
    if gamma != 0:
        return 1.0 + np.exp(gamma * p * t)
    if p == 2 or gamma2 > 0:
        return (1.0 + t) ** (p / 2.0)
    return (1.0 + t) ** p


@dataclass
class MomentCurve:
    times: np.ndarray
    p: float
    estimates: np.ndarray
    bound_shape: np.ndarray
    c_p: float

    def rows(self):
        for t, e, s in zip(self.times, self.estimates, self.bound_shape):
            yield float(t), float(self.p), float(e), float(s)


def moment_curve(traj, p: float, model: CoefficientModel | None = None) -> MomentCurve:
    """Cross-particle ``|X_t|^p`` averages on the record grid.

    ``traj`` is one trajectory or a list of trajectories driven by independent
    common-noise paths on the same grid. A single path estimates the moment
    conditional on its ``W0``; averaging over paths estimates the
    unconditional one.

    With a model, the bound profile for its ``(gamma, gamma2)`` is attached
    along with the smallest constant ``C_p`` that makes the bound hold on
    the recorded series.
    """
    if p < 2:
        raise ValueError("moment order must be >= 2")
    if model is not None and p > model.constants.p0:
        raise ValueError(f"moment order {p} exceeds p0={model.constants.p0}")
    trajs = list(traj) if isinstance(traj, (list, tuple)) else [traj]
    if not trajs:
        raise ValueError("need at least one trajectory")
    traj = trajs[0]
    if any(not np.array_equal(tr.times, traj.times) for tr in trajs):
        raise ValueError("trajectories must share a record grid")
    per_path = []
    for tr in trajs:
        norms = np.sqrt(np.einsum("rnd,rnd->rn", tr.positions, tr.positions))
        per_path.append(np.mean(norms**p, axis=1))
    est = np.mean(per_path, axis=0)
    if model is None:
        shape = np.ones_like(est)
    else:
        shape = bound_shape(traj.times, p, model.constants.gamma, model.constants.gamma2)
    return MomentCurve(traj.times.copy(), float(p), est, shape, float(np.max(est / shape)))


# ---------------------------------------------------------------------------
# coupled error experiments


def outer_seed(master_seed: int, k: int) -> int:
    """Seed of the k-th outer common-noise path (k = 0 keeps the master seed)."""
    return (int(master_seed) + k * 0x9E3779B97F4A7C15) & ((1 << 64) - 1)


def _sup_mse(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Max over records of the particle-averaged squared gap, with its standard error."""
    sq = np.sum((a - b) ** 2, axis=2)
    per_t = sq.mean(axis=1)
    r = int(np.argmax(per_t))
    n = sq.shape[1]
    se = float(sq[r].std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(per_t[r]), se


def _aggregate(per_outer: list[list[tuple[float, float]]]):
    errs = np.array([[e for e, _ in row] for row in per_outer])
    mean = errs.mean(axis=0)
    if errs.shape[0] > 1:
        se = errs.std(axis=0, ddof=1) / math.sqrt(errs.shape[0])
    else:
        se = np.array([s for _, s in per_outer[0]])
    return mean, se


def chaos_experiment(
    model: CoefficientModel,
    N_list,
    N_ref: int,
    cfg: SimConfig,
    plan: NoisePlan,
    n_outer: int = 1,
    workers: int = 1,
    reference: str = "auto",
) -> RateFit:
    """Interacting vs frozen-reference particles, error against ``phi(N)``.

    Particle ``i`` uses substream ``i`` in both systems, and all share ``W0``.
    The reference flow is the analytic oracle for ``model1_lq`` (``reference``
    ``"auto"`` or ``"oracle"``), otherwise the empirical flow of an
    ``N_ref``-particle interacting run. The error for one ``N`` is the largest
    record-time average over particles of ``|X^{i,N} - X^i|^2``, averaged
    over ``n_outer`` independent seeds.
    """
    N_list = [int(n) for n in N_list]
    if len(N_list) < 2:
        raise ConfigError("N_list", "need at least two particle counts")
    if min(N_list) < 2:
        raise ConfigError("N_list", "particle counts must be >= 2")
    if N_ref < 10 * max(N_list):
        raise ConfigError("N_ref", f"must be >= 10 * max(N_list) = {10 * max(N_list)}, got {N_ref}")
    if reference not in ("auto", "oracle", "particles"):
        raise ConfigError("reference", "must be auto, oracle or particles")
    use_oracle = reference == "oracle" or (reference == "auto" and model.name == "model1_lq")
    if use_oracle and model.name != "model1_lq":
        raise ConfigError("reference", "the analytic oracle exists only for model1_lq")

    per_outer = []
    for k in range(n_outer):
        seed = outer_seed(plan.master_seed, k)
        flow = None
        if not use_oracle:
            ref_plan = NoisePlan(seed, N_ref, model.dim)
            ref = simulate_interacting(replace(cfg, n_particles=N_ref), model, ref_plan, workers, keep_flow=True)
            flow = ref.flow
        row = []
        for n in N_list:
            c = replace(cfg, n_particles=n)
            p = NoisePlan(seed, n, model.dim)
            inter = simulate_interacting(c, model, p, workers)
            f = flow
            if f is None:
                f = oracle_flow(model1_oracle(model, inter.common_times, inter.common_path))
            frozen = simulate_frozen(c, model, f, p, workers)
            row.append(_sup_mse(inter.positions, frozen.positions))
        per_outer.append(row)

    errors, stderrs = _aggregate(per_outer)
    xs = [phi(n, model.dim) for n in N_list]
    meta = {
        "N": N_list,
        "N_ref": int(N_ref),
        "reference": "oracle" if use_oracle else "particles",
        "stderr": stderrs.tolist(),
        "n_outer": n_outer,
    }
    if np.any(errors <= 0):
        fit = _degenerate_fit(zip(xs, errors), "nonpositive errors; fit skipped")
    else:
        fit = fit_loglog(zip(xs, errors))
    fit.meta.update(meta)
    return fit


def strong_order_experiment(
    model: CoefficientModel,
    deltas,
    cfg: SimConfig,
    plan: NoisePlan,
    ref_factor: int = 32,
    n_outer: int = 1,
    workers: int = 1,
) -> RateFit:
    """Mean-square error of each step size against a fine coupled reference.

    All runs share one root step (the largest ``delta``), so coarse noise
    increments are sums of the reference's. The error for one ``delta`` is
    the largest record-time mean of ``|X_delta - X_ref|^2``.
    """
    deltas = [float(x) for x in deltas]
    if len(deltas) < 2:
        raise ConfigError("delta_list", "need at least two step sizes")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise ConfigError("delta_list", "must be strictly decreasing")
    if ref_factor < 4 or ref_factor & (ref_factor - 1):
        raise ConfigError("ref_factor", "must be a power of two >= 4")
    root = deltas[0]
    fine = deltas[-1] / ref_factor
    base = replace(cfg, root_step=root, delta=root)

    per_outer = []
    for k in range(n_outer):
        p = plan.with_seed(outer_seed(plan.master_seed, k))
        ref = simulate_interacting(replace(base, delta=fine), model, p, workers)
        row = []
        for dl in deltas:
            traj = simulate_interacting(replace(base, delta=dl), model, p, workers)
            row.append(_sup_mse(traj.positions, ref.positions))
        per_outer.append(row)

    errors, stderrs = _aggregate(per_outer)
    meta = {"reference_delta": fine, "root_step": root, "stderr": stderrs.tolist(), "n_outer": n_outer}
    if model.name != "model1_lq" and _noise_free(model):
        meta["note"] = "noise-free model: classical Euler ODE error, slope >= 1 expected"
    if np.any(errors <= 0):
        fit = _degenerate_fit(zip(deltas, errors), "nonpositive errors; fit skipped")
    else:
        fit = fit_loglog(zip(deltas, errors))
    fit.meta.update(meta)
    return fit


def _noise_free(model: CoefficientModel) -> bool:
    x = np.zeros((1, model.dim))
    mu = MeasureView.of(x)
    _, s, s0, c = model.evaluate(x, mu, 0.0)
    no_jumps = model.jump_law.intensity == 0 or not np.any(c)
    return not np.any(s) and not np.any(s0) and no_jumps
