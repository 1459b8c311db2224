"""Scenario files: JSON configuration for reproducible experiments.

A scenario bundles the system configuration, target list, bin allocation,
estimator settings, and Monte Carlo controls for one experiment. Field names
carry explicit units (``_hz``, ``_m``, ``_mps``, ``_deg``) so files remain
self-describing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .allocation import BinAllocation, diagonal_allocation, make_allocation
from .config import SystemConfig, Target
from .exceptions import ConfigValidationError, OtfsIsacError
from .transforms import build_modified_sfft

EXPERIMENT_KINDS = (
    "coarse-angle-mse",
    "dd-correlation",
    "ssr-angle",
    "ssr-velocity",
    "comm-ber",
    "crlb",
    "demo-spectrum",
)

_SYSTEM_FIELDS = {
    "n_doppler": int,
    "m_delay": int,
    "subcarrier_spacing_hz": float,
    "carrier_freq_hz": float,
    "n_tx": int,
    "n_rx": int,
    "n_comm_rx": int,
    "tx_spacing_m": float,
    "rx_spacing_m": float,
}


@dataclass(frozen=True)
class EstimatorSettings:
    """Knobs of the coarse and sparse-recovery estimators."""

    dft_pad_factor: int = 16
    peaks_per_angle: int = 1
    n_angles: int | None = None          # default: number of targets
    n_solvers: int = 64
    ssr_sweeps: int = 3
    ssr_aggregate: str = "min_residual"
    angle_step_deg: float = 1.0
    angle_width_deg: float = 10.0
    doppler_step_bins: float = 0.1
    doppler_width_bins: float = 2.0
    delay_step_bins: float = 0.1
    delay_width_bins: float = 2.0


@dataclass(frozen=True)
class Scenario:
    """One fully specified, reproducible experiment."""

    name: str
    kind: str
    config: SystemConfig
    targets: tuple
    allocation: BinAllocation
    estimator: EstimatorSettings = field(default_factory=EstimatorSettings)
    trials: int = 100
    snr_db_values: tuple = (20.0,)
    seed: int = 0
    min_bits: int = 100_000              # comm-ber only

    def to_dict(self) -> dict:
        """JSON-serializable form (used in output manifests)."""
        return {
            "name": self.name,
            "experiment_kind": self.kind,
            "trials": self.trials,
            "seed": self.seed,
            "snr_db_values": list(self.snr_db_values),
            "min_bits": self.min_bits,
            "system": {
                "n_doppler": self.config.n_doppler,
                "m_delay": self.config.m_delay,
                "subcarrier_spacing_hz": self.config.subcarrier_spacing_hz,
                "carrier_freq_hz": self.config.carrier_freq_hz,
                "n_tx": self.config.n_tx,
                "n_rx": self.config.n_rx,
                "n_comm_rx": self.config.n_comm_rx,
                "tx_spacing_m": self.config.g_t,
                "rx_spacing_m": self.config.g_r,
            },
            "targets": [
                {
                    "angle_deg": float(np.rad2deg(t.angle_rad)),
                    "range_m": float(t.range_m),
                    "velocity_mps": float(t.velocity_mps(self.config.carrier_freq_hz)),
                }
                for t in self.targets
            ],
            "allocation": {
                "private_bins": sorted(
                    [ant, list(b)] for ant, b in self.allocation.private_bin_list()
                ),
            },
            "estimator": {k: getattr(self.estimator, k)
                          for k in EstimatorSettings.__dataclass_fields__},
        }


def _check(errors, condition, message):
    if not condition:
        errors.append(message)
    return condition


def scenario_from_dict(raw: dict, name: str = "scenario") -> Scenario:
    """Build and validate a Scenario; raises ConfigValidationError."""
    errors: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigValidationError(["top level: expected a JSON object"])

    kind = raw.get("experiment_kind")
    _check(errors, kind in EXPERIMENT_KINDS,
           f"experiment_kind: {kind!r} not one of {EXPERIMENT_KINDS}")

    system = raw.get("system", {})
    cfg_kwargs = {}
    if _check(errors, isinstance(system, dict), "system: expected an object"):
        for key, value in system.items():
            if key not in _SYSTEM_FIELDS:
                errors.append(f"system.{key}: unknown field")
                continue
            try:
                cfg_kwargs[key] = _SYSTEM_FIELDS[key](value)
            except (TypeError, ValueError):
                errors.append(f"system.{key}: expected {_SYSTEM_FIELDS[key].__name__}")
    try:
        cfg = SystemConfig(**cfg_kwargs)
    except (ValueError, TypeError) as exc:
        errors.append(f"system: {exc}")
        cfg = SystemConfig()

    targets = []
    for i, t in enumerate(raw.get("targets", [])):
        try:
            targets.append(Target.from_range_velocity(
                float(t["angle_deg"]), float(t["range_m"]), float(t["velocity_mps"]),
                cfg.carrier_freq_hz))
        except KeyError as exc:
            errors.append(f"targets[{i}]: missing field {exc}")
        except (TypeError, ValueError) as exc:
            errors.append(f"targets[{i}]: {exc}")

    alloc_raw = raw.get("allocation", {"diagonal_private_bins": cfg.n_tx})
    alloc = None
    try:
        if "private_bins" in alloc_raw:
            assignments = [(int(a), (int(b[0]), int(b[1])))
                           for a, b in alloc_raw["private_bins"]]
            alloc = make_allocation(cfg.n_tx, assignments)
        elif "diagonal_private_bins" in alloc_raw:
            count = int(alloc_raw["diagonal_private_bins"])
            if count == cfg.n_tx:
                alloc = diagonal_allocation(cfg.n_tx)
            else:
                alloc = make_allocation(
                    cfg.n_tx, [(i, (i, i)) for i in range(count)])
        else:
            errors.append("allocation: need private_bins or diagonal_private_bins")
    except (OtfsIsacError, ValueError, TypeError, IndexError) as exc:
        errors.append(f"allocation: {exc}")
    if alloc is None:
        alloc = diagonal_allocation(cfg.n_tx)

    est_raw = raw.get("estimator", {})
    est_kwargs = {}
    for key, value in est_raw.items():
        if key not in EstimatorSettings.__dataclass_fields__:
            errors.append(f"estimator.{key}: unknown field")
        else:
            est_kwargs[key] = value
    try:
        estimator = EstimatorSettings(**est_kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(f"estimator: {exc}")
        estimator = EstimatorSettings()
    if estimator.ssr_aggregate not in ("min_residual", "vote"):
        errors.append(f"estimator.ssr_aggregate: {estimator.ssr_aggregate!r} "
                      "not one of ('min_residual', 'vote')")

    trials = raw.get("trials", 100)
    _check(errors, isinstance(trials, int) and trials >= 1,
           "trials: expected a positive integer")
    seed = raw.get("seed", 0)
    _check(errors, isinstance(seed, int) and seed >= 0,
           "seed: expected a non-negative integer")
    snrs = raw.get("snr_db_values", [20.0])
    if _check(errors, isinstance(snrs, list) and len(snrs) > 0,
              "snr_db_values: expected a non-empty list"):
        try:
            snrs = tuple(float(s) for s in snrs)
        except (TypeError, ValueError):
            errors.append("snr_db_values: entries must be numbers")
            snrs = (20.0,)
    else:
        snrs = (20.0,)
    min_bits = raw.get("min_bits", 100_000)
    _check(errors, isinstance(min_bits, int) and min_bits >= 1,
           "min_bits: expected a positive integer")

    # bin indices inside the grid, and the reduced transform must be full rank
    if alloc is not None:
        for ant, (n, m) in alloc.private_bin_list():
            if not (0 <= n < cfg.n_doppler and 0 <= m < cfg.m_delay):
                errors.append(f"allocation: bin {(n, m)} outside "
                              f"{cfg.n_doppler}x{cfg.m_delay} grid")
        if not errors:
            try:
                for i in range(alloc.n_tx):
                    build_modified_sfft(cfg.n_doppler, cfg.m_delay,
                                        alloc.zero_bins[i], alloc.empty_dd_bins[i])
            except OtfsIsacError as exc:
                errors.append(f"allocation: reduced transform check failed: {exc}")

    if kind in ("dd-correlation", "ssr-angle", "comm-ber", "demo-spectrum"):
        _check(errors, len(targets) >= 1, f"targets: {kind} needs at least one target")
    if kind == "ssr-velocity":
        _check(errors, len(targets) <= 1,
               "targets: ssr-velocity uses a single randomized target; "
               "list at most one as the angle/range template")

    if errors:
        raise ConfigValidationError(errors)
    return Scenario(
        name=str(raw.get("name", name)),
        kind=kind,
        config=cfg,
        targets=tuple(targets),
        allocation=alloc,
        estimator=estimator,
        trials=trials,
        snr_db_values=snrs,
        seed=seed,
        min_bits=min_bits,
    )


def load_scenario(path) -> Scenario:
    """Read and validate a scenario JSON file."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigValidationError([f"invalid JSON: {exc}"])
    return scenario_from_dict(raw, name=str(path))
