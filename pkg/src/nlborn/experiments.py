"""Experiment pipeline: phantoms, forward runs, reconstructions, bound tables.

Every artifact is written atomically and embeds the hash of the experiment
configuration that produced it, so reruns of an identical configuration are
byte-identical and mismatched data/configuration pairs are refused.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field as PydField, field_validator, model_validator
from scipy.interpolate import griddata

from . import bounds as bounds_mod
from .discretization import (DiskGrid, SensorLayout, build_disk_grid,
                             grid_fingerprint, grid_to_json, make_sensor_layout)
from .errors import ConfigHashMismatchError
from .forward import (ForwardOperators, Nonlinearity, ScatteringData,
                      build_forward_operators, scattering_data)
from .helmholtz import Field
from .inverse import (LinearizedMap, Reconstruction, Regularizer, assemble_k1,
                      ibs_reconstruct, operator_norm, projection, pseudoinverse)

CONFIG_FORMAT = "exp-config/1"
DATA_FORMAT = "scatter-data/1"
RECON_FORMAT = "reconstruction/1"
BOUNDS_FORMAT = "bounds-report/1"
SWEEP_FORMAT = "bounds-sweep/1"

EXIT_OK = 0
EXIT_PARTIAL_FORWARD = 2
EXIT_DIVERGED_RECON = 3


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

class PhantomConfig(BaseModel):
    """Synthetic coefficient description; named kinds come from the catalog."""

    kind: Literal["three_gaussians", "disk", "disk_plus_gaussian", "custom"] = "three_gaussians"
    contrast: float | None = None
    background: float | None = None
    scale: float = 1.0
    features: list[dict] | None = None

    @field_validator("contrast")
    @classmethod
    def _contrast_positive(cls, v):
        if v is not None and v <= 1.0:
            raise ValueError("contrast must exceed 1")
        return v


class ExperimentConfig(BaseModel):
    """Complete description of one experiment; hashed into every artifact."""

    config_version: str = CONFIG_FORMAT
    name: str = "run"
    data_h: float = 0.022
    recon_h: float = 0.03
    n_src: int = 16
    n_det: int = 32
    wavenumbers: list[float] = PydField(default_factory=lambda: [1.0, 2.0])
    g0: float = 0.01
    sigma: float | None = 0.25
    degrees: list[int] = PydField(default_factory=lambda: [3])
    phantom: PhantomConfig = PydField(default_factory=PhantomConfig)
    rcond: float = 1e-4
    ibs_order: int = 4
    ibs_guard: float = 1e6
    solver: Literal["fixed_point", "born"] = "fixed_point"
    born_order: int = 8
    fp_tol: float = 1e-10
    fp_max_iter: int = 200
    q_mode: Literal["full", "present"] = "full"
    chord_angle: float = 0.0
    seed: int = 0

    @field_validator("rcond")
    @classmethod
    def _rcond_range(cls, v):
        if not (1e-8 <= v <= 1e-2):
            raise ValueError("rcond must lie in [1e-8, 1e-2]")
        return v

    @field_validator("ibs_order")
    @classmethod
    def _order_range(cls, v):
        if not (1 <= v <= 8):
            raise ValueError("ibs_order must lie in [1, 8]")
        return v

    @field_validator("degrees")
    @classmethod
    def _degrees_valid(cls, v):
        if not v or any(l < 2 for l in v) or len(set(v)) != len(v):
            raise ValueError("degrees must be distinct integers >= 2")
        return sorted(v)

    @field_validator("g0")
    @classmethod
    def _g0_nonneg(cls, v):
        if v < 0:
            raise ValueError("g0 must be >= 0")
        return v

    @model_validator(mode="after")
    def _grids_ordered(self):
        for h in (self.data_h, self.recon_h):
            if not (0.0 < h <= 0.5):
                raise ValueError("grid spacings must lie in (0, 0.5]")
        if self.data_h >= self.recon_h:
            raise ValueError("data grid must be strictly finer than the reconstruction grid")
        if not self.wavenumbers:
            raise ValueError("wavenumbers must be nonempty")
        return self


def config_hash(cfg: ExperimentConfig) -> str:
    payload = json.dumps(cfg.model_dump(), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def resolved_sigma(cfg: ExperimentConfig) -> float:
    """Mollifier width shared by both grids: 3x the coarser boundary spacing."""
    if cfg.sigma is not None:
        return cfg.sigma
    recon = _grid(cfg.recon_h)
    return 3.0 * recon.boundary_spacing


def build_layout(cfg: ExperimentConfig) -> SensorLayout:
    return make_sensor_layout(cfg.n_src, cfg.n_det, cfg.wavenumbers,
                              g0=cfg.g0, sigma=resolved_sigma(cfg))


# --------------------------------------------------------------------------
# phantoms
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Phantom:
    """Resolved phantom: background plus bump features, optionally contrast-pinned."""

    kind: str
    background: float
    contrast: float | None
    scale: float
    features: tuple[dict, ...]


def _catalog() -> dict:
    with resources.files("nlborn").joinpath("phantoms.json").open() as fh:
        return json.load(fh)


def resolve_phantom(cfg: PhantomConfig) -> Phantom:
    if cfg.kind == "custom":
        if cfg.features is None or cfg.background is None:
            raise ValueError("custom phantoms need explicit features and background")
        entry = {"background": cfg.background, "contrast": None, "features": cfg.features}
    else:
        entry = _catalog()[cfg.kind]
    background = cfg.background if cfg.background is not None else entry["background"]
    contrast = cfg.contrast if cfg.contrast is not None else entry.get("contrast")
    return Phantom(kind=cfg.kind, background=background, contrast=contrast,
                   scale=cfg.scale, features=tuple(entry["features"]))


def _feature_shape(feature: dict, nodes: np.ndarray) -> np.ndarray:
    center = np.asarray(feature["center"], dtype=float)
    kind = feature["type"]
    if kind == "gaussian":
        width = float(feature["width"])
        if np.linalg.norm(center) >= 1.0:
            raise ValueError(f"gaussian center {center.tolist()} outside the disk")
        d2 = np.sum((nodes - center) ** 2, axis=1)
        return float(feature.get("amplitude", 1.0)) * np.exp(-0.5 * d2 / width ** 2)
    if kind == "disk":
        radius = float(feature["radius"])
        if np.linalg.norm(center) + radius > 1.0:
            raise ValueError(f"disk inclusion at {center.tolist()} r={radius} leaves the domain")
        inside = np.sum((nodes - center) ** 2, axis=1) <= radius ** 2
        return float(feature.get("amplitude", 1.0)) * inside.astype(float)
    raise ValueError(f"unknown phantom feature type {kind!r}")


def build_phantom(phantom: Phantom | PhantomConfig, grid: DiskGrid,
                  degrees=(3,)) -> Nonlinearity:
    """Coefficient field on the grid; shared by every configured degree.

    For named kinds the bump part is rescaled so the nodal maximum equals
    background * contrast exactly, making the reported contrast grid
    independent.
    """
    if isinstance(phantom, PhantomConfig):
        phantom = resolve_phantom(phantom)
    bump = np.zeros(grid.n_nodes)
    for feature in phantom.features:
        bump += _feature_shape(feature, grid.nodes)
    if phantom.contrast is not None and np.max(bump) > 0:
        bump *= phantom.background * (phantom.contrast - 1.0) / np.max(bump)
    values = phantom.scale * (phantom.background + bump)
    field = Field(values, grid)
    return Nonlinearity(terms=tuple((int(l), field) for l in degrees))


def phantom_contrast(nl: Nonlinearity, phantom: Phantom) -> float | None:
    if phantom.background * phantom.scale == 0:
        return None
    return float(np.max(nl.terms[0][1].values) / (phantom.background * phantom.scale))


# --------------------------------------------------------------------------
# cached heavy assemblies (immutable values, safe to share)
# --------------------------------------------------------------------------

_GRIDS: dict[float, DiskGrid] = {}
_FW: dict[tuple, ForwardOperators] = {}
_K1: dict[tuple, tuple[LinearizedMap, dict[float, Regularizer]]] = {}
_CACHE_LIMIT = 8


def _grid(h: float) -> DiskGrid:
    key = round(h, 12)
    if key not in _GRIDS:
        if len(_GRIDS) >= _CACHE_LIMIT:
            _GRIDS.clear()
        _GRIDS[key] = build_disk_grid(h)
    return _GRIDS[key]


def _layout_key(cfg: ExperimentConfig) -> tuple:
    return (cfg.n_src, cfg.n_det, tuple(cfg.wavenumbers), cfg.g0, resolved_sigma(cfg))


def _forward_ops(cfg: ExperimentConfig, h: float,
                 dense_greens: bool = True) -> ForwardOperators:
    key = (round(h, 12), _layout_key(cfg), tuple(cfg.degrees), dense_greens)
    if key not in _FW:
        if len(_FW) >= _CACHE_LIMIT:
            _FW.clear()
        _FW[key] = build_forward_operators(_grid(h), build_layout(cfg),
                                           cfg.degrees, dense_greens=dense_greens)
    return _FW[key]


def _k1_and_reg(cfg: ExperimentConfig) -> tuple[LinearizedMap, Regularizer]:
    fw = _forward_ops(cfg, cfg.recon_h)
    key = (round(cfg.recon_h, 12), _layout_key(cfg), tuple(cfg.degrees))
    if key not in _K1:
        if len(_K1) >= _CACHE_LIMIT:
            _K1.clear()
        _K1[key] = (assemble_k1(fw), {})
    k1, regs = _K1[key]
    if cfg.rcond not in regs:
        regs[cfg.rcond] = pseudoinverse(k1, cfg.rcond)
    return k1, regs[cfg.rcond]


def clear_caches():
    _GRIDS.clear()
    _FW.clear()
    _K1.clear()


# --------------------------------------------------------------------------
# persistence helpers
# --------------------------------------------------------------------------

def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path: Path, doc: dict):
    _atomic_write(Path(path), json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_json(path: Path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_matrix_csv(path: Path, matrix: np.ndarray):
    lines = [",".join(f"{v:.17g}" for v in row) for row in np.atleast_2d(matrix)]
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def read_matrix_csv(path: Path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_field_csv(path: Path, grid: DiskGrid, columns: dict[str, np.ndarray]):
    header = "node,x,y," + ",".join(columns)
    lines = [header]
    for i in range(grid.n_nodes):
        vals = ",".join(f"{col[i]:.17g}" for col in columns.values())
        lines.append(f"{i},{grid.nodes[i, 0]:.17g},{grid.nodes[i, 1]:.17g},{vals}")
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def _nl_columns(nl: Nonlinearity, prefix: str) -> dict[str, np.ndarray]:
    return {f"{prefix}_degree_{l}": f.values for l, f in nl.terms}


def cross_section_samples(grid: DiskGrid, fields: dict[str, np.ndarray],
                          chord_angle: float = 0.0, n_samples: int = 201):
    """Sample nodal fields along a diameter chord through the origin."""
    rmax = 1.0 - 0.5 * grid.dr
    t = np.linspace(-rmax, rmax, n_samples)
    pts = np.column_stack([t * math.cos(chord_angle), t * math.sin(chord_angle)])
    out = {}
    for name, values in fields.items():
        lin = griddata(grid.nodes, values, pts, method="linear")
        near = griddata(grid.nodes, values, pts, method="nearest")
        out[name] = np.where(np.isfinite(lin), lin, near)
    return t, pts, out


def write_cross_section_csv(path: Path, t: np.ndarray, pts: np.ndarray,
                            fields: dict[str, np.ndarray]):
    header = "t,x,y," + ",".join(fields)
    lines = [header]
    for i in range(t.size):
        vals = ",".join(f"{col[i]:.17g}" for col in fields.values())
        lines.append(f"{t[i]:.17g},{pts[i, 0]:.17g},{pts[i, 1]:.17g},{vals}")
    _atomic_write(Path(path), "\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# pipeline stages
# --------------------------------------------------------------------------

@dataclass
class ForwardRunResult:
    run_dir: Path
    data_path: Path
    failures: tuple
    bounds: bounds_mod.BoundsReport
    status: int


def _bounds_for_config(cfg: ExperimentConfig, m_value: float | None = None
                       ) -> bounds_mod.BoundsReport:
    fw = _forward_ops(cfg, cfg.recon_h)
    _, reg = _k1_and_reg(cfg)
    return bounds_mod.build_bounds_report(
        mu_by_k=fw.mu_by_k, nu0=fw.nu0, degrees=cfg.degrees,
        k1pinv_norm=operator_norm(reg), m_value=m_value, q_mode=cfg.q_mode,
    )


def run_forward(cfg: ExperimentConfig, out_root: Path) -> ForwardRunResult:
    """Generate boundary data on the fine grid and the recon-grid bound table."""
    run_dir = Path(out_root) / cfg.name
    chash = config_hash(cfg)
    layout = build_layout(cfg)
    fine = _grid(cfg.data_h)
    nl_fine = build_phantom(resolve_phantom(cfg.phantom), fine, cfg.degrees)
    # fixed-point data synthesis only needs the factorization, so skip the
    # dense Green's matrix on fine grids
    dense = cfg.solver == "born" or fine.n_nodes <= 4000
    fw_fine = _forward_ops(cfg, cfg.data_h, dense_greens=dense)
    data = scattering_data(layout, fine, nl_fine, solver=cfg.solver,
                           born_order=cfg.born_order, tol=cfg.fp_tol,
                           max_iter=cfg.fp_max_iter, fw=fw_fine)

    nl_recon = build_phantom(resolve_phantom(cfg.phantom), _grid(cfg.recon_h), cfg.degrees)
    report = _bounds_for_config(cfg, m_value=nl_recon.sup_norm)

    write_json(run_dir / "config.json",
               {"format": CONFIG_FORMAT, "config_hash": chash, "config": cfg.model_dump()})
    write_matrix_csv(run_dir / "data.csv", data.matrix)
    write_json(run_dir / "data.json", {
        "format": DATA_FORMAT,
        "config_hash": chash,
        "grid_hash": data.grid_hash,
        "g0": cfg.g0,
        "sigma": resolved_sigma(cfg),
        "solver": cfg.solver,
        "n_sources": layout.n_sources,
        "n_detectors": layout.n_detectors,
        "source_wavenumbers": [s.k for s in layout.sources],
        "source_angles": [s.theta for s in layout.sources],
        "detector_angles": layout.detector_angles.tolist(),
        "failures": [[i, msg] for i, msg in data.failures],
    })
    write_json(run_dir / "bounds.json",
               {"format": BOUNDS_FORMAT, "config_hash": chash, "report": report.to_json()})
    status = EXIT_OK if not data.failures else EXIT_PARTIAL_FORWARD
    return ForwardRunResult(run_dir=run_dir, data_path=run_dir / "data.csv",
                            failures=data.failures, bounds=report, status=status)


def load_scattering_data(cfg: ExperimentConfig, run_dir: Path) -> ScatteringData:
    """Load persisted data, refusing hash or shape mismatches."""
    run_dir = Path(run_dir)
    sidecar = read_json(run_dir / "data.json")
    if sidecar.get("config_hash") != config_hash(cfg):
        raise ConfigHashMismatchError(
            f"data in {run_dir} was generated under config hash "
            f"{sidecar.get('config_hash')}, current config hashes to {config_hash(cfg)}"
        )
    if sidecar.get("failures"):
        raise ConfigHashMismatchError(
            f"data in {run_dir} carries forward-solver failures; refusing to invert"
        )
    matrix = read_matrix_csv(run_dir / "data.csv")
    return ScatteringData(matrix=matrix,
                          wavenumbers=np.asarray(sidecar["source_wavenumbers"]),
                          layout=build_layout(cfg),
                          grid_hash=sidecar["grid_hash"])


@dataclass
class ReconstructRunResult:
    run_dir: Path
    reconstruction: Reconstruction
    projection: Nonlinearity
    projection_distance: float
    bounds: bounds_mod.BoundsReport
    status: int


def run_reconstruct(cfg: ExperimentConfig, data_dir: Path,
                    out_root: Path | None = None) -> ReconstructRunResult:
    """Inverse series reconstruction of persisted data on the coarse grid."""
    data_dir = Path(data_dir)
    run_dir = data_dir if out_root is None else Path(out_root) / cfg.name
    chash = config_hash(cfg)
    data = load_scattering_data(cfg, data_dir)

    recon_grid = _grid(cfg.recon_h)
    fw = _forward_ops(cfg, cfg.recon_h)
    k1, reg = _k1_and_reg(cfg)
    recon = ibs_reconstruct(data, reg, fw, cfg.ibs_order, guard=cfg.ibs_guard)

    nl_true = build_phantom(resolve_phantom(cfg.phantom), recon_grid, cfg.degrees)
    proj = projection(reg, k1, nl_true)
    beta_m = recon.cumulative()
    proj_sup = proj.sup_norm
    distance = (math.inf if proj_sup == 0 else
                float(np.max(np.abs(beta_m.stack() - proj.stack())) / proj_sup))

    m_value = max(nl_true.sup_norm, beta_m.sup_norm)
    report = bounds_mod.build_bounds_report(
        mu_by_k=fw.mu_by_k, nu0=fw.nu0, degrees=cfg.degrees,
        k1pinv_norm=operator_norm(reg), m_value=m_value, q_mode=cfg.q_mode,
    )

    write_field_csv(run_dir / "truth.csv", recon_grid, _nl_columns(nl_true, "truth"))
    write_field_csv(run_dir / "projection.csv", recon_grid, _nl_columns(proj, "projection"))
    order_files, correction_files = [], []
    for m in range(1, recon.order + 1):
        path = run_dir / f"recon_order_{m}.csv"
        write_field_csv(path, recon_grid, _nl_columns(recon.cumulative(m), f"order_{m}"))
        order_files.append(path.name)
        cpath = run_dir / f"correction_{m}.csv"
        write_field_csv(cpath, recon_grid, _nl_columns(recon.corrections[m - 1], f"correction_{m}"))
        correction_files.append(cpath.name)

    section_fields = {}
    for nl, prefix in [(nl_true, "truth"), (proj, "projection")]:
        section_fields.update(_nl_columns(nl, prefix))
    for m in range(1, recon.order + 1):
        section_fields.update(_nl_columns(recon.cumulative(m), f"order_{m}"))
    t, pts, sampled = cross_section_samples(recon_grid, section_fields, cfg.chord_angle)
    write_cross_section_csv(run_dir / "cross_section.csv", t, pts, sampled)

    cumulative_norms = [recon.cumulative(m).sup_norm for m in range(1, recon.order + 1)]
    write_json(run_dir / "diagnostics.json", {
        "format": RECON_FORMAT,
        "config_hash": chash,
        "grid_hash_recon": grid_fingerprint(recon_grid),
        "grid_hash_data": data.grid_hash,
        "rcond": cfg.rcond,
        "rank": reg.rank,
        "k1_norm": operator_norm(reg),
        "ibs_order": cfg.ibs_order,
        "orders_computed": recon.order,
        "degrees": list(recon.degrees),
        "correction_norms": recon.correction_norms.tolist(),
        "cumulative_norms": cumulative_norms,
        "diverged_at": recon.diverged_at,
        "guard": recon.guard,
        "projection_distance": distance,
        "bounds": report.to_json(),
        "files": {
            "truth": "truth.csv",
            "projection": "projection.csv",
            "orders": order_files,
            "corrections": correction_files,
            "cross_section": "cross_section.csv",
            "data": "data.csv",
        },
    })
    status = EXIT_OK if recon.diverged_at is None else EXIT_DIVERGED_RECON
    return ReconstructRunResult(run_dir=run_dir, reconstruction=recon,
                                projection=proj, projection_distance=distance,
                                bounds=report, status=status)


def run_bounds(cfg: ExperimentConfig, out_root: Path,
               data_dir: Path | None = None) -> tuple[bounds_mod.BoundsReport, dict]:
    """Bound table for a configuration, optionally checked against persisted data."""
    run_dir = Path(out_root) / cfg.name
    report = _bounds_for_config(
        cfg, m_value=build_phantom(resolve_phantom(cfg.phantom),
                                   _grid(cfg.recon_h), cfg.degrees).sup_norm)
    doc = {"format": BOUNDS_FORMAT, "config_hash": config_hash(cfg),
           "report": report.to_json()}
    if data_dir is not None:
        data = load_scattering_data(cfg, Path(data_dir))
        _, reg = _k1_and_reg(cfg)
        k1phi = float(np.max(np.abs(reg.apply(data.flatten()))))
        doc["data_check"] = {
            "k1phi_norm": k1phi,
            "r": report.r,
            "hypothesis_ok": bool(report.r is not None and k1phi < report.r),
        }
    write_json(run_dir / "bounds.json", doc)
    return report, doc


def run_sweep(cfg: ExperimentConfig, g0_values, out_root: Path) -> list[dict]:
    """Bound table across source strengths, rebuilding the pseudoinverse per g0."""
    rows = []
    for g0 in g0_values:
        variant = cfg.model_copy(update={"g0": float(g0)})
        report = _bounds_for_config(variant)
        rows.append({
            "g0": float(g0),
            "nu0": report.nu0,
            "k1_norm": report.k1pinv_norm,
            "C": report.C,
            "r": report.r,
            "scale_invariant_product": (
                None if report.k1pinv_norm is None
                else 81.0 / 8.0 * report.mu_max * report.k1pinv_norm * report.nu0 ** 3),
        })
    run_dir = Path(out_root) / cfg.name
    write_json(run_dir / "sweep.json", {
        "format": SWEEP_FORMAT, "config_hash": config_hash(cfg), "rows": rows,
    })
    return rows


def run_grid_export(target_h: float, out_root: Path, name: str = "grid",
                    cfg: ExperimentConfig | None = None) -> Path:
    """Persist a grid (and layout, when a config is given) as versioned JSON."""
    grid = _grid(target_h)
    doc = grid_to_json(grid, build_layout(cfg) if cfg is not None else None)
    doc["grid_hash"] = grid_fingerprint(grid)
    path = Path(out_root) / f"{name}.json"
    write_json(path, doc)
    return path


def run_phantom_export(cfg: ExperimentConfig, out_root: Path) -> dict:
    """Persist the phantom on the reconstruction grid for inspection."""
    run_dir = Path(out_root) / cfg.name
    grid = _grid(cfg.recon_h)
    phantom = resolve_phantom(cfg.phantom)
    nl = build_phantom(phantom, grid, cfg.degrees)
    write_field_csv(run_dir / "phantom.csv", grid, _nl_columns(nl, "truth"))
    info = {
        "format": "phantom/1",
        "config_hash": config_hash(cfg),
        "kind": phantom.kind,
        "background": phantom.background * phantom.scale,
        "contrast": phantom_contrast(nl, phantom),
        "sup_norm": nl.sup_norm,
        "file": "phantom.csv",
    }
    write_json(run_dir / "phantom.json", info)
    return info
