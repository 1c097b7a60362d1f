"""Uniformly weighted empirical measures and 2-Wasserstein distances."""

from __future__ import annotations

import itertools
import math
from functools import cached_property, lru_cache

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "EmpiricalMeasure",
    "MeasureView",
    "ShapeError",
    "OracleSizeError",
    "w2_to_dirac0",
    "w2_1d_exact",
    "w2_paired_bound",
    "w2_small_exact",
    "moment",
]

# Enumerating permutations is cheap up to 8! = 40320; above that the exact
# assignment solver takes over.
_ENUMERATION_LIMIT = 8


class ShapeError(ValueError):
    """Raised when two point clouds cannot be compared."""


class OracleSizeError(ValueError):
    """Raised when the brute-force transport oracle is asked for too many atoms."""


def _as_atoms(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ShapeError(f"atoms must be a (N, d) array, got shape {arr.shape}")
    return arr


class EmpiricalMeasure:
    """Uniform atomic measure ``(1/N) sum_i delta_{x_i}`` on R^d.

    Parameters
    ----------
    atoms : array_like, shape (N, d) or (N,)
        Atom locations. A 1-D array is read as N atoms in dimension one.
    """

    __slots__ = ("atoms", "__dict__")

    def __init__(self, atoms):
        arr = np.array(_as_atoms(atoms), dtype=float, order="C", copy=True)
        if arr.shape[0] < 1:
            raise ValueError("an empirical measure needs at least one atom")
        if not np.all(np.isfinite(arr)):
            raise ValueError("atoms must be finite")
        arr.setflags(write=False)
        self.atoms = arr

    @classmethod
    def dirac(cls, point) -> "EmpiricalMeasure":
        return cls(np.atleast_1d(np.asarray(point, dtype=float)).reshape(1, -1))

    @property
    def n_atoms(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    @cached_property
    def squared_norms(self) -> np.ndarray:
        return np.einsum("ij,ij->i", self.atoms, self.atoms)

    def __len__(self) -> int:
        return self.n_atoms

    def __repr__(self) -> str:
        return f"EmpiricalMeasure(n_atoms={self.n_atoms}, dim={self.dim})"


def _mean(values: np.ndarray) -> float:
    # np.sum on a contiguous 1-D array is numpy's fixed pairwise tree, so the
    # result does not depend on how the array was produced.
    return float(np.sum(values) / values.shape[0])


def moment(mu: EmpiricalMeasure, p: float) -> float:
    """Return ``(1/N) sum_i |x_i|^p``."""
    if p < 1:
        raise ValueError("moment order must be >= 1")
    if p == 2:
        return _mean(mu.squared_norms)
    return _mean(np.sqrt(mu.squared_norms) ** p)


def w2_to_dirac0(mu: EmpiricalMeasure) -> float:
    """W2 distance between ``mu`` and the Dirac mass at the origin."""
    return math.sqrt(_mean(mu.squared_norms))


def w2_paired_bound(x, y) -> float:
    """Index-coupled bound ``sqrt((1/N) sum_i |x_i - y_i|^2)`` on W2(mu^x, mu^y)."""
    xa, ya = _as_atoms(x), _as_atoms(y)
    if xa.shape != ya.shape:
        raise ShapeError(f"paired clouds differ in shape: {xa.shape} vs {ya.shape}")
    diff = xa - ya
    return math.sqrt(_mean(np.einsum("ij,ij->i", diff, diff)))


def w2_1d_exact(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """Exact W2 between equal-size one-dimensional empirical measures.

    Uses the comonotone (sorted) coupling, which is optimal on the line.
    """
    if mu.dim != 1 or nu.dim != 1 or mu.n_atoms != nu.n_atoms:
        raise ShapeError(
            "unsupported shape: w2_1d_exact needs d=1 and equal atom counts, got "
            f"{mu.atoms.shape} and {nu.atoms.shape}"
        )
    xs = np.sort(mu.atoms[:, 0])
    ys = np.sort(nu.atoms[:, 0])
    return math.sqrt(_mean((xs - ys) ** 2))


@lru_cache(maxsize=None)
def _permutations(n: int) -> np.ndarray:
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    perms.setflags(write=False)
    return perms


def _cost_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def w2_small_exact(mu: EmpiricalMeasure, nu: EmpiricalMeasure, cap: int = 10) -> float:
    """Exact W2 by minimum-cost perfect matching.

    For uniform measures with the same number of atoms an optimal coupling is a
    permutation (Birkhoff), so the infimum over couplings is a minimum over
    the N! matchings. Up to 8 atoms every matching is enumerated; larger
    problems (still bounded by ``cap``) go to the Hungarian solver.
    """
    if mu.n_atoms != nu.n_atoms or mu.dim != nu.dim:
        raise ShapeError(
            f"oracle needs equal shapes, got {mu.atoms.shape} and {nu.atoms.shape}"
        )
    n = mu.n_atoms
    if n > cap:
        raise OracleSizeError(f"oracle size exceeded: N={n} > cap={cap}")
    cost = _cost_matrix(mu.atoms, nu.atoms)
    if n <= _ENUMERATION_LIMIT:
        perms = _permutations(n)
        totals = cost[np.arange(n), perms].sum(axis=1)
        best = float(totals.min())
    else:
        rows, cols = linear_sum_assignment(cost)
        best = float(cost[rows, cols].sum())
    return math.sqrt(best / n)


class MeasureView:
    """Read-only snapshot of an empirical measure with cached summaries.

    This is what coefficient maps receive as their measure argument. The
    builtin models only look at :attr:`mean` and :attr:`second_moment`;
    user models may inspect :attr:`atoms` directly.
    """

    __slots__ = ("measure", "mean", "second_moment", "w2_to_dirac0")

    def __init__(self, measure: EmpiricalMeasure):
        self.measure = measure
        atoms = measure.atoms
        n = atoms.shape[0]
        mean = np.array(
            [np.sum(np.ascontiguousarray(atoms[:, k])) for k in range(atoms.shape[1])]
        ) / n
        mean.setflags(write=False)
        self.mean = mean
        self.second_moment = moment(measure, 2)
        self.w2_to_dirac0 = math.sqrt(self.second_moment)

    @classmethod
    def of(cls, points) -> "MeasureView":
        return cls(EmpiricalMeasure(points))

    @property
    def atoms(self) -> np.ndarray:
        return self.measure.atoms

    @property
    def dim(self) -> int:
        return self.measure.dim

    def __repr__(self) -> str:
        return (
            f"MeasureView(n_atoms={self.measure.n_atoms}, mean={self.mean.tolist()}, "
            f"second_moment={self.second_moment:.6g})"
        )
