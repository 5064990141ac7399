"""Versioned binary persistence for posterior fits.

Layout: magic "SIDOFIT1", an 8-byte little-endian header length, a JSON
header (config, dimensions, array name/shape table, identity), then the
declared float64 little-endian draw arrays back to back.
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from .diagnostics import compute_diagnostics
from .model import ModelConfig, PosteriorFit

MAGIC = b"SIDOFIT1"


class CorruptFitError(IOError):
    """Fit file is truncated, malformed, or from an unknown version."""


def _array_order(fit: PosteriorFit) -> list[tuple[str, np.ndarray]]:
    arrays = [
        ("intercept", fit.intercept),
        ("account_effects", fit.account_effects),
        ("champion_effects", fit.champion_effects),
        ("tau", fit.tau),
        ("phi", fit.phi),
        ("sigma", fit.sigma),
    ]
    if fit.covariate_coef is not None:
        arrays.insert(1, ("covariate_coef", fit.covariate_coef))
    return arrays


def save_fit(fit: PosteriorFit, path: str | os.PathLike) -> None:
    arrays = _array_order(fit)
    cfg = fit.config.__dict__.copy()
    header = {
        "version": 1,
        "config": cfg,
        "account_ids": fit.account_ids,
        "champion_ids": fit.champion_ids,
        "identity": fit.identity,
        "convergence_warning": fit.convergence_warning,
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_fit(path: str | os.PathLike) -> PosteriorFit:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CorruptFitError(f"bad magic in {path}")
        raw_len = fh.read(8)
        if len(raw_len) != 8:
            raise CorruptFitError(f"truncated header length in {path}")
        (hlen,) = struct.unpack("<Q", raw_len)
        blob = fh.read(hlen)
        if len(blob) != hlen:
            raise CorruptFitError(f"truncated header in {path}")
        try:
            header = json.loads(blob)
        except json.JSONDecodeError as exc:
            raise CorruptFitError(f"malformed header in {path}: {exc}") from exc
        if header.get("version") != 1:
            raise CorruptFitError(f"unsupported version {header.get('version')}")
        arrays: dict[str, np.ndarray] = {}
        for spec in header["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape))
            data = fh.read(count * 8)
            if len(data) != count * 8:
                raise CorruptFitError(f"truncated array {spec['name']} in {path}")
            arrays[spec["name"]] = np.frombuffer(data, dtype="<f8").reshape(shape).copy()
    cfg = header["config"]
    config = ModelConfig(**cfg)
    fit = PosteriorFit(
        config=config,
        account_ids=list(header["account_ids"]),
        champion_ids=list(header["champion_ids"]),
        intercept=arrays["intercept"],
        covariate_coef=arrays.get("covariate_coef"),
        account_effects=arrays["account_effects"],
        champion_effects=arrays["champion_effects"],
        tau=arrays["tau"],
        phi=arrays["phi"],
        sigma=arrays["sigma"],
        identity=dict(header["identity"]),
        convergence_warning=bool(header["convergence_warning"]),
    )
    gate = {k: v for k, v in fit.scalar_draws().items() if k not in config.pinned}
    fit.diagnostics = compute_diagnostics(gate)
    return fit


class FitStore:
    """Directory of fits keyed by (role, server, phase, stat, scope)."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, role, server, phase, stat, scope) -> Path:
        key = "_".join(str(getattr(v, "value", v)) for v in (role, server, phase, stat, scope))
        return self.root / f"{key}.sidofit"

    def save(self, fit: PosteriorFit, scope: str) -> Path:
        ident = fit.identity
        path = self._path(ident["role"], ident["server"], ident["phase"], ident["stat"], scope)
        save_fit(fit, path)
        return path

    def load(self, role, server, phase, stat, scope) -> PosteriorFit:
        path = self._path(role, server, phase, stat, scope)
        if not path.exists():
            raise FileNotFoundError(f"no stored fit at {path}")
        return load_fit(path)

    def exists(self, role, server, phase, stat, scope) -> bool:
        return self._path(role, server, phase, stat, scope).exists()
