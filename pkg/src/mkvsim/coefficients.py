"""Coefficient models, jump laws and a sampling check of the model assumptions.

Coefficient maps are vectorised over particles: each is called as
``f(x, mu, t)`` with ``x`` of shape ``(n, d)``, a :class:`MeasureView` ``mu``
and the current time ``t``, and returns ``(n, d)`` for the drift and
``(n, d, d)`` for the three matrix coefficients. Autonomous models ignore
``t``. Matrix norms are Frobenius norms throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import gammaln

from .measure import EmpiricalMeasure, MeasureView

__all__ = [
    "ConfigError",
    "ModelConstants",
    "LevyMeasureSpec",
    "CoefficientModel",
    "Witness",
    "AssumptionStatus",
    "AssumptionReport",
    "levy_abs_moment",
    "jump_moment_integral",
    "validate_assumptions",
    "builtin_model",
    "default_params",
    "BUILTIN_MODELS",
]


class ConfigError(ValueError):
    """Invalid or incomplete configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class MomentUnavailable(ValueError):
    pass


@dataclass(frozen=True)
class ModelConstants:
    L: float
    L1: float
    L2: float
    L3: float
    Ltilde1: float
    Ltilde2: float
    gamma1: float
    gamma2: float
    eta: float
    ell: float
    p0: int

    def __post_init__(self):
        if not (self.L > 0 and self.L3 > 0):
            raise ValueError("L and L3 must be positive")
        for name in ("L2", "Ltilde2", "gamma2", "eta", "ell"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if int(self.p0) != self.p0 or self.p0 < 2 or int(self.p0) % 2:
            raise ValueError("p0 must be an even integer >= 2")
        object.__setattr__(self, "p0", int(self.p0))

    @property
    def gamma(self) -> float:
        return self.gamma1 + self.gamma2


@dataclass(frozen=True)
class LevyMeasureSpec:
    """Finite-activity Levy measure ``nu = intensity * Law(xi)``.

    ``sample(rng, n)`` must draw the n jump sizes sequentially from ``rng`` so
    that a draw of n sizes is a prefix of a draw of n' > n sizes.
    ``size_abs_moment(k)`` returns ``E|xi|^k`` in closed form, or ``None``
    when unknown (a Monte Carlo estimate is used instead).
    """

    intensity: float
    dim: int = 1
    sampler: Callable[[np.random.Generator, int], np.ndarray] | None = None
    size_abs_moment: Callable[[int], float | None] | None = None
    size_mean: tuple[float, ...] | None = None
    name: str = "custom"

    def __post_init__(self):
        if not (0 <= self.intensity < math.inf):
            raise ValueError("intensity must be finite and non-negative")
        if self.size_mean is None:
            object.__setattr__(self, "size_mean", (0.0,) * self.dim)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.sampler is None:
            raise ValueError("jump law has no sampler")
        return np.asarray(self.sampler(rng, n), dtype=float).reshape(n, self.dim)

    @property
    def mean_jump(self) -> np.ndarray:
        """``int z nu(dz)``."""
        return self.intensity * np.asarray(self.size_mean, dtype=float)

    def abs_moments(self, k: int) -> float:
        """``int |z|^k nu(dz)``."""
        return levy_abs_moment(self, k)

    @classmethod
    def none(cls, dim: int = 1) -> "LevyMeasureSpec":
        return cls(0.0, dim, lambda rng, n: np.zeros((n, dim)), lambda k: 0.0, name="none")

    @classmethod
    def gaussian(cls, intensity: float, scale: float = 1.0, dim: int = 1) -> "LevyMeasureSpec":
        """Jump sizes ``xi ~ N(0, scale^2 I_d)``."""

        def sampler(rng, n):
            return scale * rng.standard_normal((n, dim))

        def table(k):
            # E|xi|^k = scale^k 2^(k/2) Gamma((d+k)/2) / Gamma(d/2)
            return abs(scale) ** k * math.exp(
                0.5 * k * math.log(2.0) + gammaln((dim + k) / 2) - gammaln(dim / 2)
            )

        return cls(float(intensity), dim, sampler, table, name="gaussian")

    @classmethod
    def point_mass(cls, intensity: float, size) -> "LevyMeasureSpec":
        z = np.atleast_1d(np.asarray(size, dtype=float))
        dim = z.shape[0]
        norm = float(np.linalg.norm(z))

        def sampler(rng, n):
            return np.broadcast_to(z, (n, dim)).copy()

        return cls(float(intensity), dim, sampler, lambda k: norm**k, tuple(z.tolist()), name="point_mass")


def levy_abs_moment(
    law: LevyMeasureSpec,
    k: int,
    n_samples: int = 10**6,
    seed: int = 0,
    return_stderr: bool = False,
):
    """``int |z|^k nu(dz) = intensity * E|xi|^k``.

    Uses the closed-form table when available; otherwise a Monte Carlo
    estimate from ``n_samples`` draws. With ``return_stderr`` the result is a
    ``(value, stderr)`` pair (stderr is 0 for table values).
    """
    if k < 1:
        raise ValueError("moment order k must be >= 1")
    value = stderr = None
    if law.intensity == 0:
        value, stderr = 0.0, 0.0
    elif law.size_abs_moment is not None:
        table = law.size_abs_moment(k)
        if table is not None:
            value, stderr = law.intensity * float(table), 0.0
    if value is None:
        if law.sampler is None:
            raise MomentUnavailable(f"moment unavailable: k={k}")
        draws = law.sample(np.random.default_rng(seed), n_samples)
        vals = np.linalg.norm(draws, axis=1) ** k
        value = law.intensity * float(vals.mean())
        stderr = law.intensity * float(vals.std(ddof=1) / math.sqrt(n_samples))
    return (value, stderr) if return_stderr else value


def jump_moment_integral(law: LevyMeasureSpec, L3: float, p0: int) -> float:
    """``int |z| ((1 + L3 |z|)^(p0-1) - 1) nu(dz)``, expanded binomially."""
    total = 0.0
    for k in range(1, p0):
        total += math.comb(p0 - 1, k) * L3**k * levy_abs_moment(law, k + 1)
    return total


Map = Callable[[np.ndarray, MeasureView, float], np.ndarray]


@dataclass(frozen=True)
class CoefficientModel:
    dim: int
    b: Map
    sigma: Map
    sigma0: Map
    c: Map
    jump_law: LevyMeasureSpec
    constants: ModelConstants
    name: str = "custom"
    x0: tuple[float, ...] | None = None
    params: Mapping[str, object] = field(default_factory=dict)
    # True when the coefficients read nothing from the measure argument.
    measure_free: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.jump_law.dim != self.dim:
            raise ValueError("jump law dimension differs from model dimension")

    def evaluate(self, x: np.ndarray, mu: MeasureView, t: float = 0.0):
        """All four coefficients at the rows of ``x``, broadcast to full shape."""
        n, d = x.shape
        b = np.broadcast_to(np.asarray(self.b(x, mu, t), dtype=float), (n, d))
        s = np.broadcast_to(np.asarray(self.sigma(x, mu, t), dtype=float), (n, d, d))
        s0 = np.broadcast_to(np.asarray(self.sigma0(x, mu, t), dtype=float), (n, d, d))
        c = np.broadcast_to(np.asarray(self.c(x, mu, t), dtype=float), (n, d, d))
        return b, s, s0, c

    def default_x0(self) -> np.ndarray:
        if self.x0 is None:
            return np.zeros(self.dim)
        return np.asarray(self.x0, dtype=float).reshape(self.dim)


# ---------------------------------------------------------------------------
# assumption checking

ASSUMPTIONS = ("A1", "A2", "A3", "A4", "A5", "A6", "A7")


@dataclass(frozen=True)
class Witness:
    x: np.ndarray
    xbar: np.ndarray | None
    mu: np.ndarray | None
    mubar: np.ndarray | None
    lhs: float
    rhs: float
    t: float = 0.0
    note: str = ""

    def as_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "x": arr(self.x),
            "xbar": arr(self.xbar),
            "mu": arr(self.mu),
            "mubar": arr(self.mubar),
            "lhs": self.lhs,
            "rhs": self.rhs,
            "t": self.t,
            "note": self.note,
        }


@dataclass
class AssumptionStatus:
    name: str
    holds: bool = True
    witness: Witness | None = None
    n_checked: int = 0

    @property
    def status(self) -> str:
        return "holds-on-sample" if self.holds else "violated"


@dataclass
class AssumptionReport:
    entries: dict[str, AssumptionStatus]

    def __getitem__(self, name: str) -> AssumptionStatus:
        return self.entries[name]

    @property
    def all_hold(self) -> bool:
        return all(e.holds for e in self.entries.values())

    @property
    def violated(self) -> list[str]:
        return [k for k, e in self.entries.items() if not e.holds]

    def rows(self) -> list[dict]:
        out = []
        for name, e in self.entries.items():
            out.append(
                {
                    "assumption": name,
                    "status": e.status,
                    "n_checked": e.n_checked,
                    "lhs": e.witness.lhs if e.witness else None,
                    "rhs": e.witness.rhs if e.witness else None,
                    "witness": e.witness.as_dict() if e.witness else None,
                }
            )
        return out


def _fro2(m: np.ndarray) -> float:
    return float(np.sum(m * m))


def _ball(rng, radius, dim, size=None):
    shape = (dim,) if size is None else (size, dim)
    v = rng.standard_normal(shape)
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    norms[norms == 0] = 1.0
    r = radius * rng.random(() if size is None else (size, 1))
    return v / norms * r


def _w2_assignment(a: np.ndarray, b: np.ndarray) -> float:
    diff = a[:, None, :] - b[None, :, :]
    cost = np.einsum("ijk,ijk->ij", diff, diff)
    rows, cols = linear_sum_assignment(cost)
    return math.sqrt(float(cost[rows, cols].sum()) / a.shape[0])


def validate_assumptions(
    model: CoefficientModel,
    n_trials: int = 1000,
    radius: float = 10.0,
    tol: float = 1e-9,
    seed: int = 0,
    t_max: float = 10.0,
    max_atoms: int = 8,
) -> AssumptionReport:
    """Try to falsify (A1)-(A7) for ``model`` with its declared constants.

    Samples ``n_trials`` tuples ``(x, xbar, mu, mubar, t)`` with states in the
    ball of ``radius`` and discrete measures of at most ``max_atoms`` atoms
    inside it. An inequality counts as violated when
    ``lhs > rhs + tol * max(1, |lhs|, |rhs|)``; the worst sampled violation is
    kept as witness. (A6) is evaluated at ``p = p0``. A non-finite coefficient
    value is reported as a violation of the assumption being evaluated.

    Passing this check is evidence, never a proof.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if not radius > 0:
        raise ValueError("radius must be positive")
    k = model.constants
    law = model.jump_law
    d = model.dim
    entries = {name: AssumptionStatus(name) for name in ASSUMPTIONS}

    m1 = levy_abs_moment(law, 1)
    m2 = levy_abs_moment(law, 2)
    m2p0 = levy_abs_moment(law, 2 * k.p0)
    entries["A4"].n_checked = 1
    if not all(math.isfinite(v) for v in (m1, m2, m2p0)):
        entries["A4"].holds = False
        entries["A4"].witness = Witness(
            np.zeros(d), None, None, None, lhs=math.inf, rhs=0.0, note="infinite Levy moment"
        )
    jump_term = jump_moment_integral(law, k.L3, k.p0)

    worst = {name: -math.inf for name in ASSUMPTIONS}

    def record(name, lhs, rhs, x, xbar, mu, mubar, t):
        e = entries[name]
        e.n_checked += 1
        finite = math.isfinite(lhs) and math.isfinite(rhs)
        if finite and lhs <= rhs + tol * max(1.0, abs(lhs), abs(rhs)):
            return
        e.holds = False
        excess = lhs - rhs if finite else math.inf
        if excess > worst[name]:
            worst[name] = excess
            e.witness = Witness(
                np.array(x),
                None if xbar is None else np.array(xbar),
                np.array(mu),
                None if mubar is None else np.array(mubar),
                lhs=float(lhs) if finite else math.inf,
                rhs=float(rhs),
                t=t,
                note="" if finite else "coefficient non-finite",
            )

    rng = np.random.default_rng(seed)
    for _ in range(n_trials):
        x = _ball(rng, radius, d)
        xb = _ball(rng, radius, d)
        n_atoms = int(rng.integers(1, max_atoms + 1))
        mu_atoms = _ball(rng, radius, d, n_atoms)
        mub_atoms = _ball(rng, radius, d, n_atoms)
        t = float(rng.random() * t_max)
        mu = MeasureView(EmpiricalMeasure(mu_atoms))
        mub = MeasureView(EmpiricalMeasure(mub_atoms))

        with np.errstate(all="ignore"):
            b, s, s0, c = (a[0] for a in model.evaluate(x[None, :], mu, t))
            bb, sb, s0b, cb = (a[0] for a in model.evaluate(xb[None, :], mub, t))
        finite = all(np.all(np.isfinite(a)) for a in (b, s, s0, c, bb, sb, s0b, cb))
        if not finite:
            for name in ("A1", "A2", "A3", "A5", "A6", "A7"):
                record(name, math.nan, 0.0, x, xb, mu_atoms, mub_atoms, t)
            continue

        w_mu = mu.w2_to_dirac0
        w_mub = mub.w2_to_dirac0
        w_pair = _w2_assignment(mu_atoms, mub_atoms)
        dx = x - xb
        dx2 = float(dx @ dx)

        for xx, bv, sv, s0v, cv, w0, atoms in (
            (x, b, s, s0, c, w_mu, mu_atoms),
            (xb, bb, sb, s0b, cb, w_mub, mub_atoms),
        ):
            x2 = float(xx @ xx)
            lhs = 2 * float(xx @ bv) + _fro2(sv) + _fro2(s0v) + _fro2(cv) * m2
            record("A1", lhs, k.L * (1 + x2 + w0**2), xx, None, atoms, None, t)
            record("A5", math.sqrt(_fro2(cv)), k.L3 * (1 + math.sqrt(x2) + w0), xx, None, atoms, None, t)
            lhs6 = (
                float(xx @ bv)
                + 0.5 * (k.p0 - 1) * (_fro2(sv) + _fro2(s0v))
                + _fro2(cv) * jump_term / (2 * k.L3)
            )
            record("A6", lhs6, k.gamma1 * x2 + k.gamma2 * w0**2 + k.eta, xx, None, atoms, None, t)

        diff_noise = _fro2(s - sb) + _fro2(s0 - s0b) + _fro2(c - cb) * m2
        lhs2 = 2 * float(dx @ (b - bb)) + diff_noise
        record("A2", lhs2, k.L1 * dx2 + k.L2 * w_pair**2, x, xb, mu_atoms, mub_atoms, t)
        growth = 1 + float(np.linalg.norm(x)) ** k.ell + float(np.linalg.norm(xb)) ** k.ell
        lhs3 = float(np.linalg.norm(b - bb))
        record("A3", lhs3, k.L * growth * (math.sqrt(dx2) + w_pair), x, xb, mu_atoms, mub_atoms, t)
        record("A7", diff_noise, k.Ltilde1 * dx2 + k.Ltilde2 * w_pair**2, x, xb, mu_atoms, mub_atoms, t)

    return AssumptionReport(entries)


# ---------------------------------------------------------------------------
# builtin models

BUILTIN_MODELS = ("model1_lq", "ou_contractive", "cubic_superlinear")

_DEFAULTS = {
    "model1_lq": {
        "u": 0.0,
        "theta": 1.0,
        "sigma": 0.5,
        "gamma0_scale": 0.2,
        "jump_intensity": 1.0,
        "jump_scale": 1.0,
        "x0": 1.0,
        "p0": 2,
    },
    "ou_contractive": {
        "a": 1.0,
        "kappa": 0.25,
        "sigma": 0.5,
        "sigma0": 0.1,
        "jump_scale": 0.3,
        "jump_intensity": 1.0,
        "jump_size_scale": 1.0,
        "dim": 1,
        "x0": 1.0,
        "p0": 2,
    },
    "cubic_superlinear": {
        "sigma": 0.5,
        "sigma0": 0.2,
        "jump_scale": 0.2,
        "jump_intensity": 1.0,
        "jump_size_scale": 1.0,
        "dim": 1,
        "x0": 1.0,
        "p0": 2,
    },
}

_REQUIRED = {
    "model1_lq": ("u", "theta", "sigma", "gamma0_scale", "jump_intensity", "x0"),
    "ou_contractive": ("a", "kappa"),
    "cubic_superlinear": (),
}


def default_params(name: str) -> dict:
    """A complete parameter set for builtin model ``name``."""
    if name not in _DEFAULTS:
        raise ConfigError("model", f"unknown model {name!r}; choose from {BUILTIN_MODELS}")
    return dict(_DEFAULTS[name])


def _schedule(u) -> tuple[Callable[[float], float], float]:
    """Constant or piecewise-constant control ``u(t)`` and ``sup |u|``.

    A schedule is a list of ``[t_k, value_k]`` pairs; the value holds from
    ``t_k`` until the next breakpoint, and the first value also covers
    ``t < t_0``.
    """
    if isinstance(u, (int, float)):
        val = float(u)
        return (lambda t: val), abs(val)
    pts = sorted((float(a), float(b)) for a, b in u)
    if not pts:
        raise ConfigError("u", "empty schedule")
    starts = np.array([p[0] for p in pts])
    vals = np.array([p[1] for p in pts])

    def fn(t):
        i = int(np.searchsorted(starts, t, side="right")) - 1
        return float(vals[max(i, 0)])

    return fn, float(np.max(np.abs(vals)))


def _integral_schedule(u) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorised ``t -> int_0^t u(s) ds`` for a constant or piecewise-constant u."""
    if isinstance(u, (int, float)):
        val = float(u)
        return lambda t: val * np.asarray(t, dtype=float)
    pts = sorted((float(a), float(b)) for a, b in u)
    starts = np.array([p[0] for p in pts])
    vals = np.array([p[1] for p in pts])
    knots = np.concatenate(([0.0], starts[starts > 0]))
    knot_vals = [vals[max(int(np.searchsorted(starts, s, side="right")) - 1, 0)] for s in knots]
    cum = np.concatenate(([0.0], np.cumsum(np.diff(knots) * np.array(knot_vals[:-1]))))

    def fn(t):
        t = np.asarray(t, dtype=float)
        i = np.searchsorted(knots, t, side="right") - 1
        i = np.clip(i, 0, len(knots) - 1)
        return cum[i] + np.array(knot_vals)[i] * (t - knots[i])

    return fn


def _num(params, key, positive=False, nonneg=False):
    try:
        v = float(params[key])
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {params[key]!r}") from None
    if not math.isfinite(v):
        raise ConfigError(key, "must be finite")
    if positive and not v > 0:
        raise ConfigError(key, "must be > 0")
    if nonneg and v < 0:
        raise ConfigError(key, "must be >= 0")
    return v


def _check_keys(name, params):
    for key in _REQUIRED[name]:
        if key not in params:
            raise ConfigError(key, f"missing required parameter for {name}")
    for key in params:
        if key not in _DEFAULTS[name]:
            raise ConfigError(key, f"unknown parameter for {name}")
    merged = dict(_DEFAULTS[name])
    merged.update(params)
    return merged


def _p0(params):
    p0 = params["p0"]
    if int(p0) != p0 or p0 < 2 or int(p0) % 2:
        raise ConfigError("p0", "must be an even integer >= 2")
    return int(p0)


def _model1_lq(params) -> CoefficientModel:
    p = _check_keys("model1_lq", params)
    u_fn, u_max = _schedule(p["u"])
    theta = _num(p, "theta")
    sig = _num(p, "sigma")
    g0 = _num(p, "gamma0_scale")
    lam = _num(p, "jump_intensity", nonneg=True)
    js = _num(p, "jump_scale", nonneg=True)
    x0 = _num(p, "x0")
    p0 = _p0(p)
    law = LevyMeasureSpec.gaussian(lam, js, 1)

    def b(x, mu, t):
        return np.full(x.shape, u_fn(t))

    def sigma(x, mu, t):
        return np.full((x.shape[0], 1, 1), sig * mu.mean[0])

    def sigma0(x, mu, t):
        return np.full((x.shape[0], 1, 1), theta)

    def c(x, mu, t):
        return np.full((x.shape[0], 1, 1), g0 * mu.mean[0])

    m2 = levy_abs_moment(law, 2)
    idio = sig**2 + g0**2 * m2
    L3 = abs(g0) if g0 != 0 else 1.0
    J = jump_moment_integral(law, L3, p0)
    consts = ModelConstants(
        L=max(1.0, u_max**2 + theta**2, idio),
        L1=0.0,
        L2=idio,
        L3=L3,
        Ltilde1=0.0,
        Ltilde2=idio,
        gamma1=0.5 if u_max > 0 else 0.0,
        gamma2=0.5 * (p0 - 1) * sig**2 + g0**2 * J / (2 * L3),
        eta=0.5 * u_max**2 + 0.5 * (p0 - 1) * theta**2,
        ell=0.0,
        p0=p0,
    )
    return CoefficientModel(1, b, sigma, sigma0, c, law, consts, "model1_lq", (x0,), p)


def _constant_noise(dim, sig, sig0, js):
    eye = np.eye(dim)

    def const(v):
        m = v * eye

        def f(x, mu, t):
            return np.broadcast_to(m, (x.shape[0], dim, dim))

        return f

    return const(sig), const(sig0), const(js)


def _ou_contractive(params) -> CoefficientModel:
    p = _check_keys("ou_contractive", params)
    a = _num(p, "a")
    kappa = _num(p, "kappa", nonneg=True)
    if not a > kappa:
        raise ConfigError("a", f"ou_contractive needs a > kappa >= 0, got a={a}, kappa={kappa}")
    dim = int(p["dim"])
    if dim < 1:
        raise ConfigError("dim", "must be >= 1")
    sig, sig0 = _num(p, "sigma"), _num(p, "sigma0")
    js = _num(p, "jump_scale")
    law = LevyMeasureSpec.gaussian(_num(p, "jump_intensity", nonneg=True), _num(p, "jump_size_scale", nonneg=True), dim)
    p0 = _p0(p)
    x0 = _num(p, "x0")

    def b(x, mu, t):
        return -a * x + kappa * mu.mean

    sigma, sigma0, c = _constant_noise(dim, sig, sig0, js)
    m2 = levy_abs_moment(law, 2)
    noise = dim * (sig**2 + sig0**2 + js**2 * m2)
    L3 = math.sqrt(dim) * abs(js) if js != 0 else 1.0
    J = jump_moment_integral(law, L3, p0)
    consts = ModelConstants(
        L=max(noise, kappa, a / 3.0),
        L1=kappa - 2 * a,
        L2=kappa,
        L3=L3,
        Ltilde1=0.0,
        Ltilde2=0.0,
        gamma1=-a + 0.5 * kappa,
        gamma2=0.5 * kappa,
        eta=0.5 * (p0 - 1) * dim * (sig**2 + sig0**2) + dim * js**2 * J / (2 * L3),
        ell=0.0,
        p0=p0,
    )
    return CoefficientModel(dim, b, sigma, sigma0, c, law, consts, "ou_contractive", (x0,) * dim, p)


def _cubic_superlinear(params) -> CoefficientModel:
    p = _check_keys("cubic_superlinear", params)
    dim = int(p["dim"])
    if dim < 1:
        raise ConfigError("dim", "must be >= 1")
    sig, sig0 = _num(p, "sigma"), _num(p, "sigma0")
    js = _num(p, "jump_scale")
    law = LevyMeasureSpec.gaussian(_num(p, "jump_intensity", nonneg=True), _num(p, "jump_size_scale", nonneg=True), dim)
    p0 = _p0(p)
    x0 = _num(p, "x0")

    def b(x, mu, t):
        r2 = np.einsum("ij,ij->i", x, x)[:, None]
        return x - r2 * x

    sigma, sigma0, c = _constant_noise(dim, sig, sig0, js)
    m2 = levy_abs_moment(law, 2)
    noise = dim * (sig**2 + sig0**2 + js**2 * m2)
    L3 = math.sqrt(dim) * abs(js) if js != 0 else 1.0
    J = jump_moment_integral(law, L3, p0)
    consts = ModelConstants(
        L=max(0.5 + noise, 1.5),
        L1=2.0,
        L2=0.0,
        L3=L3,
        Ltilde1=0.0,
        Ltilde2=0.0,
        gamma1=-1.0,
        gamma2=0.0,
        eta=1.0 + 0.5 * (p0 - 1) * dim * (sig**2 + sig0**2) + dim * js**2 * J / (2 * L3),
        ell=2.0,
        p0=p0,
    )
    return CoefficientModel(
        dim, b, sigma, sigma0, c, law, consts, "cubic_superlinear", (x0,) * dim, p, measure_free=True
    )


_FACTORIES = {
    "model1_lq": _model1_lq,
    "ou_contractive": _ou_contractive,
    "cubic_superlinear": _cubic_superlinear,
}


def builtin_model(name: str, params: Mapping[str, object] | None = None) -> CoefficientModel:
    """Construct one of the shipped models with constants satisfying (A1)-(A7).

    ``model1_lq``
        d = 1, ``b = u(t)``, ``sigma = sigma * mean(mu)``, ``sigma0 = theta``,
        ``c = gamma0_scale * mean(mu)`` with Gaussian jump sizes of standard
        deviation ``jump_scale`` and rate ``jump_intensity``. ``u`` is a
        number or a piecewise-constant schedule ``[[t0, u0], [t1, u1], ...]``.
    ``ou_contractive``
        ``b = -a x + kappa mean(mu)`` with ``a > kappa >= 0`` and constant
        noise coefficients.
    ``cubic_superlinear``
        ``b = x - |x|^2 x`` with constant noise coefficients.
    """
    if name not in _FACTORIES:
        raise ConfigError("model", f"unknown model {name!r}; choose from {BUILTIN_MODELS}")
    return _FACTORIES[name](dict(params or {}))
