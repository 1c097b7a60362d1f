"""Reproducible random drivers for interacting particle systems.

Every random number is a pure function of ``(master_seed, kind, counter)``:
the key of a Philox generator is ``(master_seed, kind)`` and the counter
selects a disjoint region of its output. Nothing depends on the order in
which other streams were consumed.

Two access patterns share this keying:

* cursor streams (:func:`brownian_increment`), one per substream, where the
  k-th call returns the k-th draw;
* block draws used by the simulator, where the counter identifies a noise
  event (a node of a dyadic Brownian tree, or a root cell of the jump field)
  and element ``i`` of the block belongs to particle substream ``i + 1``.
  numpy draws block elements sequentially, so a block of size N is a prefix
  of a block of size N' > N; particle ``i`` therefore sees identical noise in
  systems of different sizes.

Substream 0 is the common Brownian motion W0; substreams 1..N are particles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from numpy.random import Generator, Philox

if TYPE_CHECKING:
    from .coefficients import LevyMeasureSpec

__all__ = [
    "NoisePlan",
    "JumpBatch",
    "BrownianTree",
    "CellJumps",
    "brownian_increment",
    "sample_jumps",
    "cell_jumps",
    "MAX_LEVEL",
]

COMMON = 0
BROWNIAN = 1
JUMP_COUNT = 2
JUMP_TIME = 3
JUMP_SIZE = 4

# Deepest dyadic refinement of a root cell. Node ids are heap indices
# (root = 1, children 2h and 2h + 1) and stay below 2**(MAX_LEVEL + 1).
MAX_LEVEL = 30

_MASK64 = (1 << 64) - 1


def _generator(seed: int, kind: int, *words: int) -> Generator:
    counter = [0, 0, 0, 0]
    for k, w in enumerate(words, start=1):
        counter[k] = int(w) & _MASK64
    return Generator(Philox(key=[int(seed) & _MASK64, kind], counter=counter))


@dataclass
class NoisePlan:
    """Seed and stream layout for one family of coupled simulations.

    ``substream_ids[i]`` is the particle substream used by particle ``i``;
    it defaults to ``i + 1``. Permuting it permutes which noise each
    particle receives and nothing else.
    """

    master_seed: int
    n_particles: int
    dim: int = 1
    substream_ids: np.ndarray | None = None
    _cursors: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.substream_ids is None:
            ids = np.arange(1, self.n_particles + 1, dtype=np.int64)
        else:
            ids = np.asarray(self.substream_ids, dtype=np.int64)
            if ids.shape != (self.n_particles,) or np.any(ids < 1):
                raise ValueError("substream_ids must be n_particles positive integers")
            if len(np.unique(ids)) != ids.size:
                raise ValueError("substream_ids must be distinct")
        ids.setflags(write=False)
        self.substream_ids = ids

    def with_particles(self, n_particles: int) -> "NoisePlan":
        """Same seed and dimension, first ``n_particles`` default substreams."""
        return NoisePlan(self.master_seed, n_particles, self.dim)

    def with_seed(self, master_seed: int) -> "NoisePlan":
        return NoisePlan(master_seed, self.n_particles, self.dim, self.substream_ids)

    @property
    def block_size(self) -> int:
        return int(self.substream_ids.max())

    @property
    def particle_index(self) -> np.ndarray:
        """Row of each particle in a block draw."""
        return self.substream_ids - 1

    def block(self, kind: int, counter: int) -> Generator:
        return _generator(self.master_seed, kind, counter, 0, 0)

    def stream(self, kind: int, substream: int) -> Generator:
        key = (kind, substream)
        gen = self._cursors.get(key)
        if gen is None:
            gen = _generator(self.master_seed, kind, 0, substream, 1)
            self._cursors[key] = gen
        return gen


def brownian_increment(plan: NoisePlan, substream: int, dt: float, size: int | None = None):
    """Draw the next Brownian increment(s) of ``substream`` over a step ``dt``.

    Returns a length-``dim`` vector, or ``(size, dim)`` consecutive increments
    when ``size`` is given. The substream cursor advances by the number of
    increments drawn.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if substream < 0:
        raise ValueError("substream ids are non-negative")
    gen = plan.stream(COMMON if substream == 0 else BROWNIAN, substream)
    shape = (plan.dim,) if size is None else (size, plan.dim)
    return math.sqrt(dt) * gen.standard_normal(shape)


class BrownianTree:
    """Brownian increments over dyadic sub-intervals of one root cell.

    The root node carries ``sqrt(root_step) * Z``; each node is split into two
    children with a Brownian bridge, so the two halves always add up to their
    parent. Coarse steps are therefore exact sums of fine ones whatever the
    refinement pattern.
    """

    def __init__(self, plan: NoisePlan, kind: int, cell: int, root_step: float, n_rows: int):
        self.plan = plan
        self.kind = kind
        self.cell = int(cell)
        self.root_step = float(root_step)
        self.n_rows = int(n_rows)
        self._cache: dict[int, np.ndarray] = {}

    def _normals(self, node: int) -> np.ndarray:
        counter = (self.cell << (MAX_LEVEL + 2)) | node
        return self.plan.block(self.kind, counter).standard_normal((self.n_rows, self.plan.dim))

    def increment(self, node: int) -> np.ndarray:
        """Increment over the interval of heap node ``node``, shape (n_rows, dim)."""
        cached = self._cache.get(node)
        if cached is not None:
            return cached
        if node == 1:
            value = math.sqrt(self.root_step) * self._normals(1)
        else:
            parent = node >> 1
            parent_inc = self.increment(parent)
            level = parent.bit_length() - 1
            parent_len = self.root_step / (1 << level)
            left = 0.5 * parent_inc + (0.5 * math.sqrt(parent_len)) * self._normals(parent << 1)
            self._cache[parent << 1] = left
            self._cache[(parent << 1) | 1] = parent_inc - left
            value = self._cache[node]
        self._cache[node] = value
        return value


@dataclass(frozen=True)
class JumpBatch:
    """Jump events of one substream inside ``(t, t + dt]``.

    ``compensator_drift`` is ``-dt * int z nu(dz)``, so the compensated jump
    integral over the interval is ``sizes.sum(axis=0) + compensator_drift``.
    """

    t: float
    dt: float
    times: np.ndarray
    sizes: np.ndarray
    compensator_drift: np.ndarray

    @property
    def n_events(self) -> int:
        return int(self.times.shape[0])

    def compensated_sum(self) -> np.ndarray:
        return self.sizes.sum(axis=0) + self.compensator_drift


class CellJumps:
    """All jump events of the first ``n_rows`` particle rows in one root cell.

    Counts are Poisson(intensity * root_step) per row; event positions are
    stored as offsets in (0, 1] of the cell, sorted increasingly.
    """

    def __init__(self, plan: NoisePlan, cell: int, root_step: float, jump_law: "LevyMeasureSpec", n_rows: int):
        self.cell = int(cell)
        self.root_step = float(root_step)
        self.n_rows = int(n_rows)
        dim = plan.dim
        lam = jump_law.intensity * root_step
        if lam > 0:
            counts = plan.block(JUMP_COUNT, cell).poisson(lam, size=n_rows)
        else:
            counts = np.zeros(n_rows, dtype=np.int64)
        total = int(counts.sum())
        if total:
            # 1 - U lies in (0, 1], matching the half-open step intervals (a, b].
            offsets = 1.0 - plan.block(JUMP_TIME, cell).random(total)
            sizes = np.asarray(jump_law.sample(plan.block(JUMP_SIZE, cell), total), dtype=float)
            sizes = sizes.reshape(total, dim)
            owners = np.repeat(np.arange(n_rows, dtype=np.int64), counts)
            order = np.argsort(offsets, kind="stable")
            self.offsets = offsets[order]
            self.sizes = sizes[order]
            self.owners = owners[order]
        else:
            self.offsets = np.zeros(0)
            self.sizes = np.zeros((0, dim))
            self.owners = np.zeros(0, dtype=np.int64)
        self.counts = counts
        self.dim = dim

    def window(self, lo: float, hi: float) -> slice:
        """Slice of events with offsets in (lo, hi]."""
        a = int(np.searchsorted(self.offsets, lo, side="right"))
        b = int(np.searchsorted(self.offsets, hi, side="right"))
        return slice(a, b)

    def sums(self, lo: float, hi: float) -> np.ndarray:
        """Per-row sum of jump sizes with offsets in (lo, hi], shape (n_rows, dim)."""
        out = np.zeros((self.n_rows, self.dim))
        sl = self.window(lo, hi)
        if sl.stop > sl.start:
            np.add.at(out, self.owners[sl], self.sizes[sl])
        return out


def cell_jumps(plan: NoisePlan, cell: int, root_step: float, jump_law: "LevyMeasureSpec", n_rows: int | None = None) -> CellJumps:
    """Jump field of root cell ``cell`` for rows ``0 .. n_rows - 1``."""
    return CellJumps(plan, cell, root_step, jump_law, plan.block_size if n_rows is None else n_rows)


def sample_jumps(
    plan: NoisePlan,
    substream: int,
    t: float,
    dt: float,
    law: "LevyMeasureSpec",
    root_step: float = 1.0,
) -> JumpBatch:
    """Jump events of particle ``substream`` in ``(t, t + dt]``.

    Reads the same cell-keyed jump field the simulator uses, with cells of
    length ``root_step``; the result depends only on the interval, not on
    any cursor.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if substream < 1:
        raise ValueError("jump streams belong to particle substreams 1..N")
    row = substream - 1
    first = int(math.floor(t / root_step))
    last = int(math.ceil((t + dt) / root_step)) - 1
    times, sizes = [], []
    for cell in range(first, last + 1):
        field_ = CellJumps(plan, cell, root_step, law, row + 1)
        mine = field_.owners == row
        abs_times = (cell + field_.offsets[mine]) * root_step
        keep = (abs_times > t) & (abs_times <= t + dt)
        times.append(abs_times[keep])
        sizes.append(field_.sizes[mine][keep])
    all_times = np.concatenate(times) if times else np.zeros(0)
    all_sizes = np.concatenate(sizes) if sizes else np.zeros((0, plan.dim))
    comp = -dt * np.asarray(law.mean_jump, dtype=float).reshape(plan.dim)
    return JumpBatch(t=t, dt=dt, times=all_times, sizes=all_sizes, compensator_drift=comp)
