"""Named synthetic ground truths for the diffusivity."""

from __future__ import annotations

import numpy as np

from .bayes import link
from .errors import ConfigurationError
from .geometry import Grid, smooth_bump
from .spectral import DiffusivityField


def bump_theta(grid: Grid, amplitude: float = 0.8, centre=None, radius=None) -> np.ndarray:
    """Compactly supported smooth bump, by default centred with radius 0.3 of each side."""
    dom = grid.domain
    centre = 0.5 * (dom.low + dom.high) if centre is None else np.asarray(centre, dtype=float)
    radius = 0.3 * dom.sides if radius is None else np.broadcast_to(np.asarray(radius, dtype=float), (dom.dim,))
    return amplitude * smooth_bump(grid.centers, centre, radius)


def make_truth(grid: Grid, spec: dict | None = None) -> DiffusivityField:
    """Build ``f0`` from a config entry.

    Kinds: ``constant`` (``value``), ``bump`` (``amplitude``, ``centre``,
    ``radius``) and ``multi_bump`` (list ``bumps`` of bump parameters). Bump
    truths are ``link(theta0)``, so they equal 1/2 near the boundary.
    """
    spec = dict(spec or {"kind": "bump"})
    kind = spec.get("kind", "bump")
    if kind == "constant":
        return DiffusivityField.constant(grid, float(spec.get("value", 0.5)))
    if kind == "bump":
        theta = bump_theta(grid, spec.get("amplitude", 0.8), spec.get("centre"), spec.get("radius"))
    elif kind == "multi_bump":
        bumps = spec.get("bumps") or []
        if not bumps:
            raise ConfigurationError("multi_bump truth needs a non-empty 'bumps' list")
        theta = sum(bump_theta(grid, b.get("amplitude", 0.8), b.get("centre"), b.get("radius"))
                    for b in bumps)
    else:
        raise ConfigurationError(f"unknown truth kind {kind!r}")
    return link(theta, grid)
