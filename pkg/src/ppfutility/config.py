"""Run configuration: a human-editable key-value text file.

Format: one ``key = value`` per line; blank lines and ``#`` comments are
ignored.  Unknown keys, duplicate keys, and invalid values are rejected
with a line-and-field diagnostic.  ``parse_config(serialize_config(c))``
is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Optional, Tuple

from .calibration import DEFAULT_POSTERIOR_GRID, DEFAULT_PREDICTIVE_GRID, ThresholdGrid
from .designs import DesignConfig, DesignKind
from .engine import ScenarioRates, null_scenario


class ConfigError(ValueError):
    """Invalid run configuration; knows which line and field to blame."""

    def __init__(self, message: str, *, source: str = "<config>",
                 line: Optional[int] = None, field: Optional[str] = None):
        where = source if line is None else f"{source}:{line}"
        what = message if field is None else f"field '{field}': {message}"
        super().__init__(f"{where}: {what}")
        self.message = message
        self.source = source
        self.line = line
        self.field = field


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI run needs besides the thresholds under test."""

    design: DesignKind = DesignKind.POOLED
    seed: int = 0
    reps: int = 1000
    workers: int = 1
    out: str = "out"
    null_rate: float = 0.1
    control_rate: float = 0.1
    ic0_rate: float = 0.1
    ic1_rate: float = 0.2
    ic23_rate: float = 0.3
    posterior_grid: Tuple[float, ...] = DEFAULT_POSTERIOR_GRID
    predictive_grid: Tuple[float, ...] = DEFAULT_PREDICTIVE_GRID
    t1_min: float = 0.05
    t1_max: float = 0.1
    power_min: float = 0.8
    bound_reps: Optional[int] = None

    def __post_init__(self):
        if self.seed < 0:
            raise ConfigError("must be >= 0", field="seed")
        if self.reps < 1:
            raise ConfigError("must be >= 1", field="reps")
        if self.workers < 1:
            raise ConfigError("must be >= 1", field="workers")
        if self.bound_reps is not None and self.bound_reps < 1:
            raise ConfigError("must be >= 1 (or omitted)", field="bound_reps")
        for name in ("null_rate", "control_rate", "ic0_rate", "ic1_rate", "ic23_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError("rate must lie in [0, 1]", field=name)
        for name in ("posterior_grid", "predictive_grid"):
            vals = getattr(self, name)
            if not vals:
                raise ConfigError("must list at least one value", field=name)
            if any(not 0.0 < v < 1.0 for v in vals):
                raise ConfigError("thresholds must lie in (0, 1)", field=name)
        if not 0.0 <= self.t1_min <= self.t1_max <= 1.0:
            raise ConfigError("need 0 <= t1_min <= t1_max <= 1", field="t1_min")
        if not 0.0 <= self.power_min <= 1.0:
            raise ConfigError("must lie in [0, 1]", field="power_min")

    def grid(self) -> ThresholdGrid:
        return ThresholdGrid(self.posterior_grid, self.predictive_grid)

    def scenarios(self) -> Tuple[ScenarioRates, ScenarioRates]:
        return (
            null_scenario(self.null_rate),
            ScenarioRates(self.control_rate, (self.ic0_rate, self.ic1_rate, self.ic23_rate)),
        )

    def design_config(self, lower_bound: Optional[float] = None) -> DesignConfig:
        return DesignConfig(kind=self.design, lower_bound=lower_bound)


_FIELD_ORDER = [f.name for f in fields(RunConfig)]


def _parse_value(field: str, raw: str):
    if field == "design":
        try:
            return DesignKind(raw)
        except ValueError:
            choices = ", ".join(k.value for k in DesignKind)
            raise ConfigError(f"expected one of {choices}", field=field) from None
    if field in ("seed", "reps", "workers", "bound_reps"):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError("expected an integer", field=field) from None
    if field == "out":
        return raw
    if field in ("posterior_grid", "predictive_grid"):
        try:
            return tuple(float(tok) for tok in raw.split(",") if tok.strip())
        except ValueError:
            raise ConfigError("expected comma-separated reals", field=field) from None
    try:
        return float(raw)
    except ValueError:
        raise ConfigError("expected a real number", field=field) from None


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse key-value text into a validated RunConfig."""
    seen: dict = {}
    line_of: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", source=source, line=lineno)
        key, _, raw = stripped.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _FIELD_ORDER:
            raise ConfigError("unknown field", source=source, line=lineno, field=key)
        if key in seen:
            raise ConfigError("duplicate field", source=source, line=lineno, field=key)
        try:
            seen[key] = _parse_value(key, raw)
        except ConfigError as err:
            raise ConfigError(err.message, source=source, line=lineno, field=key) from None
        line_of[key] = lineno
    try:
        return RunConfig(**seen)
    except ConfigError as err:
        raise ConfigError(
            err.message, source=source, line=line_of.get(err.field), field=err.field
        ) from None


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), source=path)


def serialize_config(config: RunConfig) -> str:
    """Canonical text form; parsing it back reproduces ``config`` exactly."""
    lines = []
    for name in _FIELD_ORDER:
        value = getattr(config, name)
        if value is None:
            continue
        if isinstance(value, DesignKind):
            rendered = value.value
        elif isinstance(value, tuple):
            rendered = ", ".join(repr(v) for v in value)
        elif isinstance(value, float):
            rendered = repr(value)
        else:
            rendered = str(value)
        lines.append(f"{name} = {rendered}")
    return "\n".join(lines) + "\n"


def apply_overrides(config: RunConfig, **overrides) -> RunConfig:
    """Replace fields with CLI-provided values (None means 'not given')."""
    given = {k: v for k, v in overrides.items() if v is not None}
    if not given:
        return config
    try:
        return replace(config, **given)
    except ConfigError:
        raise
    except TypeError as err:
        raise ConfigError(str(err)) from None
