"""Experiment configuration: YAML documents validated against a JSON schema.

The schema ships with the package as ``config_schema.json``; see the README
for an annotated example.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import jsonschema
import numpy as np
import yaml

from .errors import ConfigError, PCALocError
from .geometry import ArrayGeometry, SubarrayGeometry, circular_subarray, linear_subarray
from .scenario import ScenarioConfig, SignalModel, noise_variance_for_snr
from .search import SearchGrid

ESTIMATORS = ("rml", "rc", "music", "mvdr", "exact_ml_oracle")
SWEEP_AXES = ("noise_variance", "N", "location_perturbation_std", "snr_db")


def schema() -> dict:
    return json.loads(resources.files("pcaloc").joinpath("config_schema.json").read_text())


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    scenario: ScenarioConfig
    grid: SearchGrid
    estimators: tuple = ("rml", "rc", "music", "mvdr")
    sweep_axis: str = "noise_variance"
    sweep_values: tuple = ()
    trials: int = 1
    seed: int = 0
    output_dir: str = "results"
    snr_db: Optional[float] = None
    normalize_power: bool = True
    ap_tol: float = 1e-8
    ap_max_iter: int = 50
    move_tol_cells: float = 1.0
    peak_min_separation: Optional[float] = None
    rc_truncation: Optional[float] = 1e-12
    rc_form: str = "joint"
    mvdr_loading: float = 1e-6
    music_floor: float = 1e-30
    failure_radius_cells: float = 10.0
    raw: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ConfigError(f"unknown estimators: {sorted(unknown)}")
        if self.sweep_axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {self.sweep_axis!r}")
        if not self.sweep_values:
            object.__setattr__(self, "sweep_values", (self.current_sweep_value(),))
        d = np.diff(np.asarray(self.sweep_values, dtype=float))
        if d.size and not (np.all(d > 0) or np.all(d < 0)):
            raise ConfigError("sweep values must be strictly monotone")

    def current_sweep_value(self) -> float:
        sc = self.scenario
        return {
            "noise_variance": sc.noise_variance,
            "N": sc.n_snapshots,
            "location_perturbation_std": sc.location_perturbation_std,
            "snr_db": self.snr_db if self.snr_db is not None else np.inf,
        }[self.sweep_axis]

    @property
    def min_separation(self) -> float:
        if self.peak_min_separation is not None:
            return self.peak_min_separation
        return 2 * float(np.max(self.grid.resolution))

    @property
    def failure_radius(self) -> float:
        return self.failure_radius_cells * float(np.max(self.grid.resolution))

    def scenario_at(self, value: float) -> ScenarioConfig:
        """Scenario with the sweep axis set to ``value``."""
        sc = self.scenario
        axis = self.sweep_axis
        if axis == "N":
            return replace(sc, n_snapshots=int(value))
        if axis == "location_perturbation_std":
            return replace(sc, location_perturbation_std=float(value))
        if axis == "snr_db":
            return replace(sc, noise_variance=noise_variance_for_snr(value, sc.signal.power, _coef_power(sc)))
        return replace(sc, noise_variance=float(value))


def _coef_power(sc: ScenarioConfig) -> float:
    mag = np.atleast_1d(np.asarray(sc.coefficient_magnitude, dtype=float))
    if mag.size == 1:
        return float(mag[0] ** 2)
    lo, hi = mag
    return float((hi ** 3 - lo ** 3) / (3 * (hi - lo))) if hi > lo else float(lo ** 2)


def _subarray(spec: dict) -> SubarrayGeometry:
    if "sensors" in spec:
        return SubarrayGeometry(np.asarray(spec["sensors"], dtype=float), spec.get("reference"))
    if "linear" in spec:
        s = spec["linear"]
        d = s.get("direction", np.eye(len(s["center"]))[0])
        return linear_subarray(s["center"], s["n_sensors"], s["spacing"], d)
    s = spec["circular"]
    return circular_subarray(s["center"], s["n_sensors"], s["radius"], s.get("phase", 0.0))


def geometry_from_dict(d: dict) -> ArrayGeometry:
    omega = d.get("carrier_angular_frequency")
    if omega is None:
        omega = 2 * np.pi * d["carrier_frequency_hz"]
    return ArrayGeometry([_subarray(s) for s in d["subarrays"]], float(omega),
                         float(d.get("propagation_speed", 299_792_458.0)))


def geometry_to_dict(geom: ArrayGeometry) -> dict:
    return {
        "carrier_angular_frequency": float(geom.carrier_angular_frequency),
        "propagation_speed": float(geom.propagation_speed),
        "subarrays": [{"sensors": s.sensor_positions.tolist(), "reference": s.reference_position.tolist()}
                      for s in geom.subarrays],
    }


def scenario_from_dict(geom: ArrayGeometry, d: dict, seed: int = 0) -> tuple[ScenarioConfig, Optional[float]]:
    sources = np.asarray(d["sources"], dtype=float)
    sig = d.get("signal", {})
    corr = None
    if "correlation" in sig:
        corr = np.asarray(sig["correlation"], dtype=float) + 1j * np.asarray(
            sig.get("correlation_imag", np.zeros_like(sig["correlation"])), dtype=float)
    model = SignalModel(sig.get("kind", "noncoherent"), len(sources), corr, float(sig.get("power", 1.0)))
    mag = d.get("coefficient_magnitude", 1.0)
    sc = ScenarioConfig(
        geometry=geom,
        true_locations=sources,
        signal=model,
        noise_variance=float(d.get("noise_variance", 0.0)),
        n_snapshots=int(d.get("snapshots", 100)),
        location_perturbation_std=float(d.get("location_perturbation_std", 0.0)),
        phase_offsets=d.get("phase_offsets", "random"),
        rng_seed=seed,
        coefficient_magnitude=tuple(mag) if isinstance(mag, list) else float(mag),
        aligned_coefficients=bool(d.get("aligned_coefficients", False)),
    )
    snr = d.get("snr_db")
    if snr is not None:
        sc = replace(sc, noise_variance=noise_variance_for_snr(snr, model.power, _coef_power(sc)))
    return sc, snr


def scenario_to_dict(sc: ScenarioConfig) -> dict:
    sig = {"kind": sc.signal.kind.value, "power": float(sc.signal.power)}
    if sc.signal.correlation is not None:
        sig["correlation"] = sc.signal.correlation.real.tolist()
        sig["correlation_imag"] = sc.signal.correlation.imag.tolist()
    mag = sc.coefficient_magnitude
    return {
        "sources": sc.true_locations.tolist(),
        "signal": sig,
        "noise_variance": float(sc.noise_variance),
        "snapshots": int(sc.n_snapshots),
        "location_perturbation_std": float(sc.location_perturbation_std),
        "phase_offsets": sc.phase_offsets if isinstance(sc.phase_offsets, str) else [float(v) for v in sc.phase_offsets],
        "coefficient_magnitude": float(mag) if np.ndim(mag) == 0 else [float(v) for v in mag],
        "aligned_coefficients": bool(sc.aligned_coefficients),
    }


def experiment_from_dict(doc: dict) -> ExperimentConfig:
    try:
        jsonschema.validate(doc, schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from None
    try:
        geom = geometry_from_dict(doc["geometry"])
        seed = int(doc.get("seed", 0))
        sc, snr = scenario_from_dict(geom, doc["scenario"], seed)
        g = doc["grid"]
        grid = SearchGrid(g["bounds"], g["resolution"], int(g.get("budget", 1_000_000)))
        if grid.dim != geom.dim:
            raise ConfigError("grid dimension does not match geometry dimension")
        sweep = doc.get("sweep", {})
        search = doc.get("search", {})
        opts = doc.get("estimator_options", {})
        return ExperimentConfig(
            scenario=sc,
            grid=grid,
            estimators=tuple(doc.get("estimators", ("rml", "rc", "music", "mvdr"))),
            sweep_axis=sweep.get("axis", "snr_db" if snr is not None else "noise_variance"),
            sweep_values=tuple(float(v) for v in sweep.get("values", ())),
            trials=int(doc.get("trials", 1)),
            seed=seed,
            output_dir=str(doc.get("output_dir", "results")),
            snr_db=snr,
            normalize_power=bool(doc["scenario"].get("normalize_power", True)),
            ap_tol=float(search.get("tol", 1e-8)),
            ap_max_iter=int(search.get("max_iter", 50)),
            move_tol_cells=float(search.get("move_tol_cells", 1.0)),
            peak_min_separation=search.get("peak_min_separation"),
            rc_truncation=opts.get("rc_truncation", 1e-12),
            rc_form=opts.get("rc_form", "joint"),
            mvdr_loading=float(opts.get("mvdr_loading", 1e-6)),
            music_floor=float(opts.get("music_floor", 1e-30)),
            failure_radius_cells=float(doc.get("metrics", {}).get("failure_radius_cells", 10)),
            raw=doc,
        )
    except ConfigError:
        raise
    except (PCALocError, ValueError, TypeError, KeyError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(source: Union[str, Path, dict]) -> ExperimentConfig:
    """Load and validate an experiment from a YAML/JSON file or a dict."""
    if isinstance(source, dict):
        return experiment_from_dict(source)
    try:
        text = Path(source).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    return experiment_from_dict(doc)


def experiment_to_dict(cfg: ExperimentConfig) -> dict:
    """Serializable document that reloads to an equivalent experiment."""
    sc = scenario_to_dict(cfg.scenario)
    if cfg.snr_db is not None:
        sc["snr_db"] = float(cfg.snr_db)
    sc["normalize_power"] = cfg.normalize_power
    doc = {
        "seed": cfg.seed,
        "trials": cfg.trials,
        "output_dir": cfg.output_dir,
        "estimators": list(cfg.estimators),
        "geometry": geometry_to_dict(cfg.scenario.geometry),
        "scenario": sc,
        "grid": {"bounds": cfg.grid.bounds.tolist(), "resolution": cfg.grid.resolution.tolist(),
                 "budget": cfg.grid.budget},
        "sweep": {"axis": cfg.sweep_axis, "values": [float(v) for v in cfg.sweep_values]},
        "search": {"tol": cfg.ap_tol, "max_iter": cfg.ap_max_iter, "move_tol_cells": cfg.move_tol_cells},
        "estimator_options": {"rc_truncation": cfg.rc_truncation, "rc_form": cfg.rc_form,
                              "mvdr_loading": cfg.mvdr_loading, "music_floor": cfg.music_floor},
        "metrics": {"failure_radius_cells": cfg.failure_radius_cells},
    }
    if cfg.peak_min_separation is not None:
        doc["search"]["peak_min_separation"] = cfg.peak_min_separation
    return doc


def dump_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(experiment_to_dict(cfg), sort_keys=False))
