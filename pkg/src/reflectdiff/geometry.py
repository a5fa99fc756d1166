"""Domains, cell-centred tensor grids, subdomains and smooth cutoff fields.

Grid fields are flat float arrays of length ``grid.size`` laid out in C order
over ``grid.shape``; ``grid.as_array`` and ``grid.flat`` convert between the
two views.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, ResolutionError

#: max |S''| of the quintic smoothstep 6t^5 - 15t^4 + 10t^3 on [0, 1]
SMOOTHSTEP_CURVATURE = 10.0 / np.sqrt(3.0)


def _as_bounds(bounds) -> tuple[tuple[float, float], ...]:
    out = []
    for pair in bounds:
        lo, hi = (float(v) for v in pair)
        out.append((lo, hi))
    return tuple(out)


@dataclass(frozen=True)
class Domain:
    """An interval (d = 1) or an axis-aligned box (d >= 2)."""

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        bounds = _as_bounds(self.bounds)
        if not bounds:
            raise ConfigurationError("domain needs at least one dimension")
        for lo, hi in bounds:
            if not (np.isfinite(lo) and np.isfinite(hi)) or not lo < hi:
                raise ConfigurationError(f"invalid domain side ({lo}, {hi})")
        object.__setattr__(self, "bounds", bounds)

    @classmethod
    def interval(cls, low: float = 0.0, high: float = 1.0) -> "Domain":
        return cls(((low, high),))

    @classmethod
    def box(cls, *bounds) -> "Domain":
        return cls(tuple(bounds))

    @property
    def kind(self) -> str:
        return "interval" if self.dim == 1 else "box"

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def sides(self) -> np.ndarray:
        return np.array([hi - lo for lo, hi in self.bounds])

    @property
    def low(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.bounds])

    @property
    def high(self) -> np.ndarray:
        return np.array([hi for _, hi in self.bounds])

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))

    @property
    def diameter(self) -> float:
        return float(np.sqrt(np.sum(self.sides**2)))

    def contains(self, points, closed: bool = True) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[-1] != self.dim:
            pts = pts.reshape(-1, self.dim)
        if closed:
            inside = (pts >= self.low) & (pts <= self.high)
        else:
            inside = (pts > self.low) & (pts < self.high)
        return np.all(inside, axis=1)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "bounds": [list(b) for b in self.bounds]}


@dataclass(frozen=True)
class Grid:
    """Cell-centred tensor grid over a :class:`Domain`."""

    domain: Domain
    cells_per_dim: tuple[int, ...]
    spacing: np.ndarray = field(init=False, repr=False, compare=False)
    cell_volume: float = field(init=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "cells_per_dim", tuple(int(n) for n in self.cells_per_dim))
        object.__setattr__(self, "spacing", self.domain.sides / np.array(self.cells_per_dim))
        object.__setattr__(self, "cell_volume", float(np.prod(self.spacing)))

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells_per_dim

    @property
    def size(self) -> int:
        return int(np.prod(self.cells_per_dim))

    def axis_centers(self, k: int) -> np.ndarray:
        lo = self.domain.bounds[k][0]
        return lo + (np.arange(self.cells_per_dim[k]) + 0.5) * self.spacing[k]

    @cached_property
    def centers(self) -> np.ndarray:
        """Cell centres as an array of shape ``(size, dim)``."""
        axes = [self.axis_centers(k) for k in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def as_array(self, u) -> np.ndarray:
        return np.asarray(u).reshape(self.shape)

    def flat(self, u) -> np.ndarray:
        return np.asarray(u).reshape(self.size)

    def inner(self, u, v) -> float:
        """Discrete L2 inner product ``cell_volume * sum(u * v)``."""
        return float(self.cell_volume * np.dot(np.ravel(u), np.ravel(v)))

    def norm(self, u) -> float:
        return float(np.sqrt(self.inner(u, u)))

    def locate(self, points) -> np.ndarray:
        """Flat index of the cell containing each point.

        Points on the closed boundary are assigned to the adjacent cell.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        idx = np.floor((pts - self.domain.low) / self.spacing).astype(np.int64)
        idx = np.clip(idx, 0, np.array(self.cells_per_dim) - 1)
        return np.ravel_multi_index(tuple(idx.T), self.shape)

    def constant(self, value: float) -> np.ndarray:
        return np.full(self.size, float(value))

    def evaluate(self, func) -> np.ndarray:
        """Sample ``func(x)`` at cell centres; ``x`` has shape ``(size, dim)``."""
        return np.asarray(func(self.centers), dtype=float).reshape(self.size)

    def to_dict(self) -> dict:
        return {"domain": self.domain.to_dict(), "cells_per_dim": list(self.cells_per_dim)}


def build_grid(domain: Domain, cells_per_dim: Sequence[int] | int) -> Grid:
    """Build the cell-centred grid with ``cells_per_dim`` cells along each axis."""
    if np.isscalar(cells_per_dim):
        cells_per_dim = [int(cells_per_dim)] * domain.dim
    cells = [int(n) for n in cells_per_dim]
    if len(cells) != domain.dim:
        raise ConfigurationError(
            f"cells_per_dim has {len(cells)} entries for a {domain.dim}-d domain"
        )
    if any(n < 2 for n in cells):
        raise ConfigurationError(f"need at least 2 cells per dimension, got {cells}")
    return Grid(domain, tuple(cells))


@dataclass(frozen=True)
class SubdomainSpec:
    """Nested boxes ``inner`` (where the cutoff is 1) inside ``support``."""

    inner: tuple[tuple[float, float], ...]
    support: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "inner", _as_bounds(self.inner))
        object.__setattr__(self, "support", _as_bounds(self.support))

    @classmethod
    def centred(cls, domain: Domain, support_frac: float, inner_frac: float) -> "SubdomainSpec":
        """Boxes sharing the domain centre, with side fractions of the domain."""
        mid = 0.5 * (domain.low + domain.high)
        half = 0.5 * domain.sides
        support = [(m - support_frac * s, m + support_frac * s) for m, s in zip(mid, half)]
        inner = [(m - inner_frac * s, m + inner_frac * s) for m, s in zip(mid, half)]
        return cls(tuple(inner), tuple(support))

    def validate(self, domain: Domain) -> None:
        if len(self.inner) != domain.dim or len(self.support) != domain.dim:
            raise ConfigurationError("subdomain dimension does not match the domain")
        for (lo, hi), (slo, shi), (dlo, dhi) in zip(self.inner, self.support, domain.bounds):
            if not (dlo < slo < shi < dhi):
                raise ConfigurationError(
                    f"support box side ({slo}, {shi}) must lie strictly inside ({dlo}, {dhi})"
                )
            if not (slo < lo < hi < shi):
                raise ConfigurationError(
                    f"inner box side ({lo}, {hi}) must lie strictly inside ({slo}, {shi})"
                )

    def support_mask(self, grid: Grid) -> np.ndarray:
        """Cells whose centres lie in the closed support box."""
        x = grid.centers
        lo = np.array([b[0] for b in self.support])
        hi = np.array([b[1] for b in self.support])
        return np.all((x >= lo) & (x <= hi), axis=1)

    def to_dict(self) -> dict:
        return {"inner": [list(b) for b in self.inner], "support": [list(b) for b in self.support]}


def smoothstep(t):
    """Quintic smoothstep, clamped to [0, 1] outside the unit interval."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def _axis_profile(x, support, inner):
    (slo, shi), (lo, hi) = support, inner
    rise = smoothstep((x - slo) / (lo - slo))
    fall = smoothstep((shi - x) / (shi - hi))
    return np.minimum(rise, fall)


def build_cutoff(grid: Grid, spec: SubdomainSpec) -> np.ndarray:
    """Tensor-product quintic cutoff: 1 on ``spec.inner``, 0 off ``spec.support``.

    Along each axis the discrete second difference is bounded by
    ``SMOOTHSTEP_CURVATURE * (h / w)**2`` where ``w`` is the transition width.
    """
    spec.validate(grid.domain)
    zeta = np.ones(grid.size)
    for k in range(grid.dim):
        (slo, shi), (lo, hi) = spec.support[k], spec.inner[k]
        width = min(lo - slo, shi - hi)
        if width < 2 * grid.spacing[k]:
            raise ResolutionError(
                f"cutoff transition width {width:.4g} on axis {k} is under two cells "
                f"(h = {grid.spacing[k]:.4g})"
            )
        zeta *= _axis_profile(grid.centers[:, k], spec.support[k], spec.inner[k])
    return zeta


def smooth_bump(x, centre, radius) -> np.ndarray:
    """C-infinity bump ``exp(1 - 1/(1 - r^2))`` on the ball of given radius, peak 1."""
    x = np.atleast_2d(x)
    r2 = np.sum(((x - np.asarray(centre, dtype=float)) / np.asarray(radius, dtype=float)) ** 2, axis=1)
    out = np.zeros(len(x))
    inside = r2 < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
    return out
