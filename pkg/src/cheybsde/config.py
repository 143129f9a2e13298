"""Experiment configuration: YAML files validated against a bundled schema.

Unknown keys are rejected, cross-field constraints (tenor on grid, TNN
widths, schedule divisibility) are checked with field-level messages, and
configs can be referenced by bundled name or by path.
"""

from __future__ import annotations

import hashlib
import importlib.resources
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema
import yaml

from .bsde import SwaptionSpec, TrainConfig
from .cheyette import CheyetteParams
from .curve import DiscountCurve, bundled_curve
from .nn.layers import ArchSpec
from .oracles import LsConfig
from .simulate import OffGridError, TimeGrid

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "bundled_config_names"]

ENV_PREFIX = "CHEYBSDE_"


class ConfigError(ValueError):
    """Invalid experiment configuration, with the offending field in the message."""


def _schema() -> dict:
    resource = importlib.resources.files("cheybsde.schema").joinpath("experiment.json")
    return json.loads(resource.read_text())


def bundled_config_names() -> list[str]:
    """Names (without extension) of the experiment configs shipped with the package."""
    resource = importlib.resources.files("cheybsde.experiments")
    return sorted(p.name[:-5] for p in resource.iterdir() if p.name.endswith(".yaml"))


def _resolve_config_path(name_or_path: str) -> tuple[Path | None, str]:
    """Return (path, text) for a config given as a path or a bundled name."""
    path = Path(name_or_path)
    if path.suffix in (".yaml", ".yml") or path.exists():
        return path, path.read_text()
    resource = importlib.resources.files("cheybsde.experiments").joinpath(f"{name_or_path}.yaml")
    if resource.is_file():
        return None, resource.read_text()
    raise ConfigError(
        f"config {name_or_path!r} is neither a file nor a bundled name "
        f"(bundled: {', '.join(bundled_config_names())})"
    )


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description plus builders for the domain objects."""

    raw: dict
    name: str
    base_dir: Path | None = None

    def __post_init__(self) -> None:
        try:
            jsonschema.validate(self.raw, _schema())
        except jsonschema.ValidationError as exc:
            field = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"config field {field!r}: {exc.message}") from exc
        self._cross_validate()

    # -- validation -----------------------------------------------------------

    def _cross_validate(self) -> None:
        raw = self.raw
        method = raw["method"]
        if method.startswith("bsde"):
            if "arch" not in raw:
                raise ConfigError("config field 'arch': required for bsde methods")
            if "training" not in raw:
                raise ConfigError("config field 'training': required for bsde methods")
        if method == "mc" and "mc" not in raw:
            raise ConfigError("config field 'mc': required for method 'mc'")
        if method == "ls" and "ls" not in raw:
            raise ConfigError("config field 'ls': required for method 'ls'")

        grid = self.build_grid()
        tenor = raw["instrument"]["tenor"]
        for i, t in enumerate(tenor):
            try:
                grid.index_of(float(t))
            except OffGridError as exc:
                raise ConfigError(f"config field 'instrument/tenor/{i}': {exc}") from exc
        if any(b <= a for a, b in zip(tenor, tenor[1:])):
            raise ConfigError("config field 'instrument/tenor': dates must be strictly increasing")
        if tenor[-1] > grid.t_end:
            raise ConfigError("config field 'instrument/tenor': last date beyond grid end")
        curve = self.build_curve()
        if tenor[-1] > curve.last_maturity:
            raise ConfigError("config field 'instrument/tenor': last date beyond curve range")

        if method.startswith("bsde") and "arch" in raw:
            try:
                self.build_arch()
            except ValueError as exc:
                raise ConfigError(f"config field 'arch': {exc}") from exc
            try:
                self.build_train_config()
            except ValueError as exc:
                raise ConfigError(f"config field 'training': {exc}") from exc
        if method == "ls":
            try:
                self.build_ls_config()
            except ValueError as exc:
                raise ConfigError(f"config field 'ls': {exc}") from exc

    # -- builders ---------------------------------------------------------------

    def build_curve(self) -> DiscountCurve:
        curve_file = self.raw["model"].get("curve_file")
        if curve_file is None:
            return bundled_curve()
        path = Path(curve_file)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        return DiscountCurve.from_csv(path)

    def build_params(self) -> CheyetteParams:
        model = self.raw["model"]
        return CheyetteParams.constant(
            d=model["factors"], kappa=model["kappa"], eta=model["eta"], curve=self.build_curve()
        )

    def build_grid(self) -> TimeGrid:
        grid = self.raw["grid"]
        return TimeGrid(t_end=float(grid["t_end"]), n_steps=int(grid["n_steps"]))

    def build_spec(self) -> SwaptionSpec:
        instrument = self.raw["instrument"]
        return SwaptionSpec(
            tenor=tuple(float(t) for t in instrument["tenor"]),
            fixed_rate=float(instrument["fixed_rate"]),
            style=instrument["style"],
        )

    def build_arch(self) -> ArchSpec:
        arch = self.raw["arch"]
        kind = "tnn" if self.raw["method"] == "bsde-tnn" else "dense"
        return ArchSpec(
            kind=kind,
            hidden_layers=int(arch["layers"]),
            width=int(arch["width"]),
            chi=int(arch.get("chi", 2)),
            input_width=2 * int(self.raw["model"]["factors"]) + 1,
        )

    def build_train_config(self, seed: int | None = None) -> TrainConfig:
        training = self.raw["training"]
        return TrainConfig(
            epochs=int(training["epochs"]),
            batch_size=int(training.get("batch_size", 100)),
            seed=int(training["seed"] if seed is None else seed),
            fresh_paths=bool(training.get("fresh_paths", True)),
            epochs_per_net=training.get("epochs_per_net"),
        )

    def build_ls_config(self, degree: int | None = None) -> LsConfig:
        ls = self.raw["ls"]
        return LsConfig(
            degree=int(ls["degree"] if degree is None else degree),
            n_paths=int(ls["n_paths"]),
            itm_only=bool(ls.get("itm_only", True)),
        )

    # -- bookkeeping --------------------------------------------------------------

    @property
    def method(self) -> str:
        return self.raw["method"]

    def seed_for(self, method: str) -> int:
        if method.startswith("bsde"):
            return int(self.raw["training"]["seed"])
        return int(self.raw[method]["seed"])

    def runs(self) -> int:
        return int(self.raw.get("training", {}).get("runs", 1))

    def with_overrides(self, method: str | None = None) -> "ExperimentConfig":
        if method is None or method == self.raw["method"]:
            return self
        raw = dict(self.raw)
        raw["method"] = method
        return ExperimentConfig(raw=raw, name=self.name, base_dir=self.base_dir)

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def load_config(name_or_path: str) -> ExperimentConfig:
    """Load a config by bundled name or filesystem path."""
    path, text = _resolve_config_path(name_or_path)
    try:
        raw: Any = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {name_or_path!r}: invalid YAML ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {name_or_path!r}: top level must be a mapping")
    name = path.stem if path is not None else name_or_path
    base_dir = path.parent if path is not None else None
    return ExperimentConfig(raw=raw, name=name, base_dir=base_dir)
