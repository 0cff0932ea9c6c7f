"""Experiment settings: named presets and the sectioned key = value config format.

A config file looks like

    # optional base preset, before the first section
    preset = rectangle-scaled

    [decomposition]
    variant = WXPINN
    subdomains = 2
    gamma = 5

Sections: domain, flow, network, training, decomposition, output. Keys not listed in a
section's settings class are rejected with their line number.
"""
import math
import typing
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from errors import ConfigParseError, ConfigurationError
from geometry import (
    RECTANGLE_FLOW,
    SEMICIRCLE_FLOW,
    CollocationCounts,
    Domain,
    FlowConfig,
    RectangleDomain,
    SemiCircularDomain,
)
from network import default_layer_sizes
from optimizers import AdamConfig, LineSearchConfig, TrainingSchedule
from residuals import LossWeights, ResidualForm, Variant
from utils import get_logger

logger = get_logger(__name__)

SECTIONS = ("domain", "flow", "network", "training", "decomposition", "output")
SWEEP_AXES = {
    "beta": "beta", "β": "beta",
    "gamma": "gamma", "γ": "gamma",
    "delta": "delta", "δ": "delta",
    "m": "subdomains", "subdomains": "subdomains",
}


@dataclass(frozen=True)
class DomainSettings:
    kind: str = "rectangle"
    length: float = 1.1
    height: float = 0.41
    cross_radius: float = 1.6
    curvature_radius: float = 2.9
    final_time: float = 0.5
    time_step: float = 0.01
    stenosis_amplitude: float = 0.0
    stenosis_width: float = 0.2
    stenosis_center: float = math.pi / 2
    n_total: int = 3321
    n_boundary: int = 244
    n_inout: int = 81
    n_initial: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("rectangle", "semicircle"):
            raise ConfigurationError(f"domain.kind must be 'rectangle' or 'semicircle', got '{self.kind}'")
        try:
            self.build()
            self.counts().resolved()
        except ConfigurationError as e:
            raise ConfigurationError(f"domain: {e}") from e

    def build(self) -> Domain:
        if self.kind == "rectangle":
            return RectangleDomain(self.length, self.height, self.final_time, self.time_step)
        return SemiCircularDomain(
            self.cross_radius, self.curvature_radius, self.final_time, self.time_step,
            self.stenosis_amplitude, self.stenosis_width, self.stenosis_center,
        )

    def counts(self) -> CollocationCounts:
        return CollocationCounts(self.n_total, self.n_boundary, self.n_inout, self.n_initial)


@dataclass(frozen=True)
class NetworkSettings:
    hidden_layers: int = 7
    hidden_width: int = 50

    def __post_init__(self):
        if self.hidden_layers < 1:
            raise ConfigurationError(f"network.hidden_layers must be >= 1, got {self.hidden_layers}")
        if self.hidden_width < 1:
            raise ConfigurationError(f"network.hidden_width must be >= 1, got {self.hidden_width}")

    @property
    def layer_sizes(self) -> List[int]:
        return default_layer_sizes(self.hidden_layers, self.hidden_width)


@dataclass(frozen=True)
class TrainingSettings:
    seed: int = 0
    adam_iters: int = 5000
    lbfgs_max_iters: int = 50000
    learning_rate: float = 1e-3
    batch_size: Optional[int] = None
    grad_tol: float = 1e-8
    rel_tol: float = 1e-9
    plateau_window: int = 10
    lbfgs_memory: int = 10
    line_search_iters: int = 50
    residual_form: str = "sigma"

    def __post_init__(self):
        if self.seed < 0:
            raise ConfigurationError(f"training.seed must be >= 0, got {self.seed}")
        try:
            ResidualForm.parse(self.residual_form)
            self.schedule()
        except ConfigurationError as e:
            raise ConfigurationError(f"training: {e}") from e

    def schedule(self) -> TrainingSchedule:
        return TrainingSchedule(
            adam_iters=self.adam_iters,
            lbfgs_max_iters=self.lbfgs_max_iters,
            grad_tol=self.grad_tol,
            rel_tol=self.rel_tol,
            plateau_window=self.plateau_window,
            batch_size=self.batch_size,
            lbfgs_memory=self.lbfgs_memory,
            adam=AdamConfig(learning_rate=self.learning_rate),
            line_search=LineSearchConfig(max_iterations=self.line_search_iters),
        )


@dataclass(frozen=True)
class DecompositionSettings:
    variant: str = "WPINN"
    subdomains: int = 1
    beta: float = 1.0
    gamma: float = 1.0
    delta: float = 1.0
    n_interface: int = 400
    parallel: bool = False

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant).value)
        if self.subdomains < 1:
            raise ConfigurationError(f"decomposition.subdomains must be >= 1, got {self.subdomains}")
        if self.n_interface < 1:
            raise ConfigurationError(f"decomposition.n_interface must be >= 1, got {self.n_interface}")
        try:
            self.weights()
        except ConfigurationError as e:
            raise ConfigurationError(f"decomposition: {e}") from e

    def weights(self) -> LossWeights:
        return LossWeights(self.beta, self.gamma, self.delta)


@dataclass(frozen=True)
class OutputSettings:
    predict_total: int = 64561
    predict_boundary: int = 1124
    predict_inout: int = 161
    snapshot_count: int = 6
    flux_points: int = 101

    def __post_init__(self):
        if self.snapshot_count < 1:
            raise ConfigurationError(f"output.snapshot_count must be >= 1, got {self.snapshot_count}")
        if self.flux_points < 2:
            raise ConfigurationError(f"output.flux_points must be >= 2, got {self.flux_points}")
        try:
            self.prediction_counts().resolved()
        except ConfigurationError as e:
            raise ConfigurationError(f"output: {e}") from e

    def prediction_counts(self) -> CollocationCounts:
        return CollocationCounts(self.predict_total, self.predict_boundary, self.predict_inout)


@dataclass
class ExperimentConfig:
    domain: DomainSettings = field(default_factory=DomainSettings)
    flow: FlowConfig = field(default_factory=lambda: RECTANGLE_FLOW)
    network: NetworkSettings = field(default_factory=NetworkSettings)
    training: TrainingSettings = field(default_factory=TrainingSettings)
    decomposition: DecompositionSettings = field(default_factory=DecompositionSettings)
    output: OutputSettings = field(default_factory=OutputSettings)
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        if self.variant is Variant.WPINN and self.decomposition.subdomains != 1:
            logger.warning(
                f"WPINN trains a single network; ignoring subdomains={self.decomposition.subdomains}"
            )
            self.decomposition = replace(self.decomposition, subdomains=1)

    @property
    def variant(self) -> Variant:
        return Variant.parse(self.decomposition.variant)

    @property
    def subdomains(self) -> int:
        return self.decomposition.subdomains

    @property
    def seed(self) -> int:
        return self.training.seed

    @property
    def layer_sizes(self) -> List[int]:
        return self.network.layer_sizes

    @property
    def residual_form(self) -> ResidualForm:
        return ResidualForm.parse(self.training.residual_form)

    def build_domain(self) -> Domain:
        return self.domain.build()

    def weights(self) -> LossWeights:
        return self.decomposition.weights()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, training=replace(self.training, seed=int(seed)))

    def with_axis_value(self, axis: str, value: float) -> "ExperimentConfig":
        """Copy with one sweep axis (beta, gamma, delta or M) set."""
        key = sweep_axis(axis)
        if key == "subdomains":
            if float(value) != int(value):
                raise ConfigurationError(f"subdomain count must be an integer, got {value}")
            value = int(value)
        else:
            value = float(value)
        return replace(self, decomposition=replace(self.decomposition, **{key: value}))


def sweep_axis(axis: str) -> str:
    key = SWEEP_AXES.get(str(axis).strip().lower(), SWEEP_AXES.get(str(axis).strip()))
    if key is None:
        raise ConfigurationError(f"unknown sweep axis '{axis}', expected one of beta, gamma, delta, M")
    return key


# --- presets -----------------------------------------------------------------

def _presets() -> Dict[str, ExperimentConfig]:
    rectangle_paper = ExperimentConfig(name="rectangle-paper")
    rectangle_scaled = ExperimentConfig(
        domain=DomainSettings(n_total=500, n_boundary=60, n_inout=20, n_initial=60),
        network=NetworkSettings(hidden_layers=2, hidden_width=20),
        training=TrainingSettings(adam_iters=2000, lbfgs_max_iters=500),
        decomposition=DecompositionSettings(n_interface=100),
        output=OutputSettings(predict_total=2000, predict_boundary=200, predict_inout=40),
        name="rectangle-scaled",
    )
    stenosed = dict(kind="semicircle", final_time=6.0, stenosis_amplitude=0.8)
    semicircle_paper = ExperimentConfig(
        domain=DomainSettings(n_total=29760, n_boundary=960, n_inout=160, **stenosed),
        flow=SEMICIRCLE_FLOW,
        training=TrainingSettings(adam_iters=1000, batch_size=20000),
        output=OutputSettings(predict_total=29760, predict_boundary=960, predict_inout=160),
        name="semicircle-paper",
    )
    semicircle_scaled = ExperimentConfig(
        domain=DomainSettings(n_total=800, n_boundary=100, n_inout=40, n_initial=100, **stenosed),
        flow=SEMICIRCLE_FLOW,
        network=NetworkSettings(hidden_layers=2, hidden_width=20),
        training=TrainingSettings(adam_iters=1000, lbfgs_max_iters=300, batch_size=500),
        decomposition=DecompositionSettings(n_interface=100),
        output=OutputSettings(predict_total=2000, predict_boundary=200, predict_inout=40),
        name="semicircle-scaled",
    )
    return {c.name: c for c in (rectangle_paper, rectangle_scaled, semicircle_paper, semicircle_scaled)}


PRESET_NAMES = ("rectangle-paper", "rectangle-scaled", "semicircle-paper", "semicircle-scaled")
PRESET_ALIASES = {"rectangle-full": "rectangle-paper", "semicircle-full": "semicircle-paper"}


def load_preset(name: str) -> ExperimentConfig:
    presets = _presets()
    name = PRESET_ALIASES.get(name, name)
    if name not in presets:
        raise ConfigurationError(f"unknown preset '{name}', available: {', '.join(PRESET_NAMES)}")
    return presets[name]


# --- text format -------------------------------------------------------------

def _coerce(text: str, hint) -> object:
    origin = typing.get_origin(hint)
    if origin is Union:
        if text.lower() in ("none", "auto", ""):
            return None
        hint = next(a for a in typing.get_args(hint) if a is not type(None))
    if hint is bool:
        lowered = text.lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got '{text}'")
    if hint is int:
        value = float(text)
        if value != int(value):
            raise ValueError(f"expected an integer, got '{text}'")
        return int(value)
    if hint is float:
        return float(text)
    return text


def _section_classes() -> Dict[str, type]:
    return {
        "domain": DomainSettings,
        "flow": FlowConfig,
        "network": NetworkSettings,
        "training": TrainingSettings,
        "decomposition": DecompositionSettings,
        "output": OutputSettings,
    }


def parse_config_text(text: str, base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    classes = _section_classes()
    hints = {name: typing.get_type_hints(cls) for name, cls in classes.items()}
    overrides: Dict[str, Dict[str, Tuple[object, int]]] = {name: {} for name in SECTIONS}
    section: Optional[str] = None
    preset: Optional[str] = None

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigParseError("unterminated section header", line=number)
            section = line[1:-1].strip().lower()
            if section not in classes:
                raise ConfigParseError(f"unknown section [{section}]", line=number)
            continue
        if "=" not in line:
            raise ConfigParseError("expected 'key = value'", line=number)
        key, value = (part.strip() for part in line.split("=", 1))
        if section is None:
            if key != "preset":
                raise ConfigParseError("only 'preset' may appear before the first section", line=number, key=key)
            preset = value
            continue
        if key not in hints[section] or key.startswith("_"):
            raise ConfigParseError(f"unknown key in [{section}]", line=number, key=key)
        if key in overrides[section]:
            raise ConfigParseError(f"duplicate key in [{section}]", line=number, key=key)
        try:
            overrides[section][key] = (_coerce(value, hints[section][key]), number)
        except (ValueError, StopIteration) as e:
            raise ConfigParseError(str(e), line=number, key=key) from e

    if preset is not None:
        try:
            config = load_preset(preset)
        except ConfigurationError as e:
            raise ConfigParseError(str(e), key="preset") from e
    else:
        config = base if base is not None else ExperimentConfig()

    updates = {}
    for name in SECTIONS:
        if not overrides[name]:
            continue
        values = {key: value for key, (value, _) in overrides[name].items()}
        try:
            updates[name] = replace(getattr(config, name), **values)
        except ConfigurationError as e:
            first_line = min(line for _, line in overrides[name].values())
            raise ConfigParseError(f"[{name}] {e}", line=first_line) from e
    result = replace(config, **updates)
    result.name = config.name if not updates else f"{config.name}+overrides"
    return result


def parse_config(path: Union[str, Path], base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), base)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(config: ExperimentConfig) -> str:
    """Full config text; parsing it gives back an equal ExperimentConfig."""
    lines = [f"# experiment: {config.name}"]
    for name in SECTIONS:
        lines.append("")
        lines.append(f"[{name}]")
        settings = getattr(config, name)
        for f in fields(settings):
            value = getattr(settings, f.name)
            lines.append(f"{f.name} = {'none' if value is None else _format_value(value)}")
    return "\n".join(lines) + "\n"
