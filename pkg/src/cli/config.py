from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError as PydanticValidationError, model_validator

from src.channel.dmc import Dmc, bec, bsc, identity, z_channel
from src.kaspi.chain import MAX_ROUNDS
from src.sepsim.quantizer import MODES
from src.source.source import DistortionMeasure, JointSource, dsbs, hamming, independent
from src.utils.config_loader import load_config, parse_config_text
from src.utils.errors import ConfigError, TwoWayError

KINDS = ("capacity", "rd", "converse-sweep", "kaspi-point", "kaspi-sweep", "separation", "transform-demo")
STOCHASTIC = ("converse-sweep", "kaspi-point", "kaspi-sweep", "separation", "transform-demo")
HASH_EXCLUDE = {"output", "workers", "progress"}


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _one_of(spec: BaseModel, what: str) -> str:
    given = [name for name, value in spec if value is not None]
    if len(given) != 1:
        raise ValueError(f"{what} needs exactly one of {list(type(spec).model_fields)}, got {given or 'none'}")
    return given[0]


# -------------------------------
# Sources, channels, distortions
# -------------------------------
class SourceSpec(_Spec):
    dsbs: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    independent: Optional[Tuple[List[float], List[float]]] = None
    joint: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        _one_of(self, "source")
        return self

    def build(self) -> JointSource:
        if self.dsbs is not None:
            return dsbs(self.dsbs)
        if self.independent is not None:
            return independent(*self.independent)
        return JointSource(np.asarray(self.joint, dtype=np.float64), name="joint")


class ChannelSpec(_Spec):
    bsc: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    bec: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    z: Optional[float] = Field(default=None, ge=0.0, le=1.0)
    identity: Optional[int] = Field(default=None, ge=1)
    matrix: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        _one_of(self, "channel")
        return self

    def build(self) -> Dmc:
        kind = _one_of(self, "channel")
        if kind == "bsc":
            return bsc(self.bsc)
        if kind == "bec":
            return bec(self.bec)
        if kind == "z":
            return z_channel(self.z)
        if kind == "identity":
            return identity(self.identity)
        return Dmc(np.asarray(self.matrix, dtype=np.float64), name="matrix")


class DistortionSpec(_Spec):
    hamming: Optional[int] = Field(default=None, ge=1)
    matrix: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _exactly_one(self):
        _one_of(self, "distortion")
        return self

    def build(self) -> DistortionMeasure:
        if self.hamming is not None:
            return hamming(self.hamming)
        return DistortionMeasure(np.asarray(self.matrix, dtype=np.float64), name="matrix")


# -------------------------------
# Experiment sections
# -------------------------------
class CapacitySpec(_Spec):
    channels: List[ChannelSpec] = Field(default_factory=list)


class RdSpec(_Spec):
    D: List[float] = Field(default_factory=lambda: [0.0, 0.1, 0.25, 0.5])
    marginal: Optional[List[float]] = None


class CodeGenSpec(_Spec):
    """
    Random code generator. Staggered codes draw n from `n`, q from `q` and each
    round length from `round_lengths`; general codes use `horizon` slots with at
    least `simultaneous` two-way slots.
    """

    count: int = Field(default=100, ge=1)
    n: List[int] = Field(default_factory=lambda: [1, 2])
    q: List[int] = Field(default_factory=lambda: [2, 4])
    round_lengths: List[int] = Field(default_factory=lambda: [1, 2])
    horizon: int = Field(default=3, ge=1)
    simultaneous: int = Field(default=1, ge=0)
    lifts: List[int] = Field(default_factory=lambda: [1, 4, 16])
    exact_lifts: List[int] = Field(default_factory=lambda: [1, 4])
    monte_carlo_codes: int = Field(default=0, ge=0)
    monte_carlo_trials: int = Field(default=100_000, ge=2)

    @model_validator(mode="after")
    def _shapes(self):
        if min(self.n) < 1 or min(self.round_lengths) < 1 or min(self.lifts) < 1:
            raise ValueError("block lengths, round lengths and lifts must be >= 1")
        if any(q < 2 or q % 2 or q > MAX_ROUNDS for q in self.q):
            raise ValueError(f"round counts must be even and in [2, {MAX_ROUNDS}], got {self.q}")
        if self.simultaneous > self.horizon:
            raise ValueError(f"simultaneous ({self.simultaneous}) exceeds horizon ({self.horizon})")
        if not set(self.exact_lifts) <= set(self.lifts):
            raise ValueError("exact_lifts must be a subset of lifts")
        return self


class KaspiSpec(_Spec):
    q: int = 2
    D1: float = Field(default=0.1, ge=0.0)
    D2: float = Field(default=0.1, ge=0.0)
    aux_sizes: Optional[List[int]] = None
    restarts: int = Field(default=4, ge=1)
    max_sweeps: int = Field(default=300, ge=1)
    grid: bool = False
    grid_aux_sizes: Tuple[int, int] = (2, 1)
    grid_resolution: int = Field(default=64, ge=1)
    sweep: List[Tuple[float, float]] = Field(default_factory=list)

    @model_validator(mode="after")
    def _rounds(self):
        if self.q < 2 or self.q % 2 or self.q > MAX_ROUNDS:
            raise ValueError(f"q must be even and in [2, {MAX_ROUNDS}], got {self.q}")
        if self.aux_sizes is not None and len(self.aux_sizes) != self.q:
            raise ValueError(f"aux_sizes needs {self.q} entries, got {len(self.aux_sizes)}")
        return self


class SeparationSpec(_Spec):
    n: int = Field(default=200, ge=1)
    margin: float = Field(default=0.2, ge=0.0)
    trials: int = Field(default=2000, ge=1)
    quantizer: str = "codebook"
    chunk_bits: int = Field(default=12, ge=1, le=16)
    sub_block: int = Field(default=8, ge=1)
    binning_slack: float = Field(default=0.1, ge=0.0)
    cover_slack: Optional[float] = Field(default=None, ge=0.0)
    distortion_tolerance: float = Field(default=0.02, ge=0.0)
    compare_margins: List[float] = Field(default_factory=list)
    compare_n: List[int] = Field(default_factory=list)

    @model_validator(mode="after")
    def _mode(self):
        if self.quantizer not in MODES:
            raise ValueError(f"quantizer must be one of {list(MODES)}, got {self.quantizer!r}")
        return self


class OutputSpec(_Spec):
    out_dir: str = "out"
    write_plot_data: bool = False


class ExperimentConfig(_Spec):
    experiment: Literal[
        "capacity", "rd", "converse-sweep", "kaspi-point", "kaspi-sweep", "separation", "transform-demo"
    ]
    seed: Optional[int] = Field(default=None, ge=0)
    tol: float = Field(default=1e-9, gt=0.0)
    workers: int = Field(default=1, ge=1)
    progress: bool = False
    source: SourceSpec = Field(default_factory=lambda: SourceSpec(dsbs=0.2))
    channel1: ChannelSpec = Field(default_factory=lambda: ChannelSpec(bsc=0.1))
    channel2: ChannelSpec = Field(default_factory=lambda: ChannelSpec(bsc=0.1))
    distortion1: Optional[DistortionSpec] = None
    distortion2: Optional[DistortionSpec] = None
    capacity: CapacitySpec = Field(default_factory=CapacitySpec)
    rd: RdSpec = Field(default_factory=RdSpec)
    codegen: CodeGenSpec = Field(default_factory=CodeGenSpec)
    kaspi: KaspiSpec = Field(default_factory=KaspiSpec)
    separation: SeparationSpec = Field(default_factory=SeparationSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)

    @model_validator(mode="after")
    def _consistent(self):
        if self.experiment in STOCHASTIC and self.seed is None:
            raise ValueError(f"experiment {self.experiment!r} is stochastic and needs a seed")
        return self

    # -------------------------------
    # Built objects
    # -------------------------------
    def build_source(self) -> JointSource:
        return self.source.build()

    def build_channels(self) -> Tuple[Dmc, Dmc]:
        return self.channel1.build(), self.channel2.build()

    def build_distortions(self) -> Tuple[DistortionMeasure, DistortionMeasure]:
        s = self.build_source()
        d1 = self.distortion1.build() if self.distortion1 is not None else hamming(s.alphabet1)
        d2 = self.distortion2.build() if self.distortion2 is not None else hamming(s.alphabet2)
        if d1.source_size != s.alphabet1 or d2.source_size != s.alphabet2:
            raise ConfigError("distortion", f"measures cover ({d1.source_size}, {d2.source_size}) symbols, "
                                            f"source has ({s.alphabet1}, {s.alphabet2})")
        return d1, d2

    def config_hash(self) -> str:
        """
        sha256 of the canonical JSON of the validated config. Output location
        and execution knobs are left out; they never change results.
        """
        canonical = json.dumps(self.model_dump(mode="json", exclude=HASH_EXCLUDE), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


# -------------------------------
# Loading
# -------------------------------
def _field_path(loc: Tuple[Any, ...]) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def _yaml_error(e: yaml.YAMLError) -> ConfigError:
    mark = getattr(e, "problem_mark", None)
    where = f"line {mark.line + 1}, column {mark.column + 1}" if mark is not None else "<document>"
    return ConfigError(where, str(getattr(e, "problem", None) or e))


def validate_config(raw: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Merge CLI overrides into the parsed document and validate. Pydantic errors
    and failures while building sources/channels come back as ConfigError.
    """
    data = dict(raw)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "out_dir":
            data["output"] = {**dict(data.get("output") or {}), "out_dir": str(value)}
        else:
            data[key] = value

    try:
        cfg = ExperimentConfig.model_validate(data)
    except PydanticValidationError as e:
        first = e.errors()[0]
        raise ConfigError(_field_path(tuple(first["loc"])), first["msg"]) from e

    for what, build in (("source", cfg.build_source), ("channel", cfg.build_channels), ("distortion", cfg.build_distortions)):
        try:
            build()
        except ConfigError:
            raise
        except TwoWayError as e:
            raise ConfigError(what, str(e)) from e
    return cfg


def load_experiment(path: Optional[str | Path] = None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    try:
        raw = load_config(path)
    except FileNotFoundError as e:
        raise ConfigError("--config", str(e)) from e
    except yaml.YAMLError as e:
        raise _yaml_error(e) from e
    except (ValueError, TypeError) as e:
        raise ConfigError("--config", f"not a valid YAML mapping: {e}") from e
    return validate_config(raw, overrides)


def experiment_from_text(text: str, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    try:
        raw = parse_config_text(text)
    except yaml.YAMLError as e:
        raise _yaml_error(e) from e
    except (ValueError, TypeError) as e:
        raise ConfigError("<document>", str(e)) from e
    return validate_config(raw, overrides)
