"""On-disk cache of eigendecompositions.

Each record lives in ``<root>/<key>/`` with a JSON ``header.json`` and two raw
little-endian float64 files, ``eigenvalues.f64`` and ``eigenvectors.f64``
(row-major, shape ``(cells, J)``). Records are written into a temporary
directory and renamed into place, so readers never observe partial records.
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np

from .errors import CacheError
from .io import dumps_json
from .spectral import (DiffusivityField, SpectralDecomposition, decompose, field_fingerprint,
                       find_clusters)

FORMAT_VERSION = 1


def cache_key(f: DiffusivityField, J: int, face_mean: str = "arithmetic") -> str:
    return field_fingerprint(f.grid, f.values, int(J), face_mean)


class EigenCache:
    def __init__(self, root, require: bool = False):
        self.root = Path(root)
        self.require = require
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, key: str) -> Path:
        return self.root / key

    def load(self, key: str, grid) -> SpectralDecomposition | None:
        rec = self.path(key)
        header_path = rec / "header.json"
        if not header_path.exists():
            return None
        header = json.loads(header_path.read_text())
        if header.get("key") != key or header.get("version") != FORMAT_VERSION:
            raise CacheError(f"cache record {rec} has a mismatched header")
        n, J = header["cells"], header["modes"]
        lam = np.fromfile(rec / "eigenvalues.f64", dtype="<f8")
        vec = np.fromfile(rec / "eigenvectors.f64", dtype="<f8")
        if lam.size != J or vec.size != n * J or grid.size != n:
            raise CacheError(f"cache record {rec} is truncated or belongs to another grid")
        return SpectralDecomposition(grid, lam, vec.reshape(n, J), header["source"],
                                     header["residuals"]["eigen"], find_clusters(lam))

    def store(self, key: str, S: SpectralDecomposition) -> Path:
        rec = self.path(key)
        if rec.exists():
            return rec
        tmp = Path(tempfile.mkdtemp(dir=self.root, prefix=f".{key[:12]}."))
        try:
            np.ascontiguousarray(S.eigenvalues, dtype="<f8").tofile(tmp / "eigenvalues.f64")
            np.ascontiguousarray(S.vectors, dtype="<f8").tofile(tmp / "eigenvectors.f64")
            header = {
                "version": FORMAT_VERSION,
                "key": key,
                "cells": S.grid.size,
                "modes": S.J,
                "grid": S.grid.to_dict(),
                "source": S.source,
                "residuals": {"eigen": S.residual, "orthonormality": S.orthonormality_residual()},
            }
            (tmp / "header.json").write_text(dumps_json(header))
            try:
                os.rename(tmp, rec)
            except OSError:
                # another writer won the race; its record is equivalent
                shutil.rmtree(tmp, ignore_errors=True)
        except BaseException:
            shutil.rmtree(tmp, ignore_errors=True)
            raise
        return rec

    def decompose(self, f: DiffusivityField, J: int, face_mean: str = "arithmetic") -> SpectralDecomposition:
        key = cache_key(f, J, face_mean)
        S = self.load(key, f.grid)
        if S is not None:
            return S
        if self.require:
            raise CacheError(f"no cached decomposition for key {key[:16]}")
        S = decompose(f, J, face_mean)
        self.store(key, S)
        return S
