"""
Run configuration.

A run is described by a flat JSON object:

    {
      "config_version": 1,
      "problem": "toy_beam",
      "method": ["KKT", "SULM", "KKT-D", "SULM-D"],
      "p": 6,
      "n_V": [100, 200, 400],
      "n_BC": 40,
      "seed": 7,
      "repeats": 2
    }

"method" holds one label or a list; a "-D" suffix selects D-optimal
virtual points for that variant. n_V, n_BC and n_init accept a single
count or a list to sweep over. Keys left out take the problem's defaults.
"""

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from pc2.errors import Pc2Error
from pc2.problems import PROBLEMS, get_problem
from pc2.sampling import CandidateRows, SamplingStrategy
from pc2.solvers import AdaptivityConfig, SolverMethod

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1


class ConfigError(Pc2Error):
    """Raised when a run configuration is malformed."""
    pass


@dataclass(frozen=True)
class MethodVariant:
    """A solver paired with a virtual-point strategy, e.g. SULM-D."""
    label: str
    method: SolverMethod
    strategy: SamplingStrategy


@dataclass(frozen=True)
class RunConfig:
    problem: str
    method: tuple[str, ...] = ("KKT",)
    sampling: str = "random"
    problem_options: dict[str, Any] = field(default_factory=dict)
    p: int | None = None
    q: float | None = None
    n_V: tuple[int, ...] | None = None
    n_BC: tuple[int, ...] | None = None
    n_init: tuple[int, ...] | None = None
    n_train: int | None = None
    ic_mode: str = "soft"
    oversample_k: int = 3
    candidate_rows: str = "operator"
    seed: int = 0
    repeats: int = 1
    ridge: float | None = None
    rank_tol: float = 1e-12
    normalize_rows: bool = False
    adaptivity: dict[str, float] | None = None
    n_eval: int = 10_000
    n_eval_realizations: int = 8
    timing: str = "wall"
    output_dir: str = "pc2_output"
    config_version: int = CONFIG_VERSION

    @property
    def variants(self) -> list[MethodVariant]:
        return [parse_variant(label, self.sampling) for label in self.method]

    @property
    def adaptivity_config(self) -> AdaptivityConfig | None:
        return AdaptivityConfig(**self.adaptivity) if self.adaptivity else None

    @property
    def timing_enabled(self) -> bool:
        return self.timing == "wall"

    def resolve(self) -> "RunConfig":
        """Fill unset counts and orders from the problem defaults."""
        defaults = get_problem(self.problem, **self.problem_options).defaults
        return replace(
            self,
            p=defaults.p if self.p is None else self.p,
            q=defaults.q if self.q is None else self.q,
            n_V=(defaults.n_V,) if self.n_V is None else self.n_V,
            n_BC=(defaults.n_BC,) if self.n_BC is None else self.n_BC,
            n_init=(defaults.n_init,) if self.n_init is None else self.n_init,
            n_train=defaults.n_train if self.n_train is None else self.n_train,
        )

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        for key in ("method", "n_V", "n_BC", "n_init"):
            if data[key] is not None:
                data[key] = list(data[key])
        return data


def parse_variant(label: str, sampling: str = "random") -> MethodVariant:
    """Split a label like 'SULM-D' into solver and sampling strategy."""
    text = str(label).strip().upper()
    strategy = SamplingStrategy(sampling)
    if text.endswith("-D"):
        text, strategy = text[:-2], SamplingStrategy.DOPTIMAL
    try:
        method = SolverMethod(text)
    except ValueError:
        raise ConfigError(f"method: unknown solver {label!r}; known: OLS, KKT, SULM") from None
    suffix = "-D" if strategy is SamplingStrategy.DOPTIMAL else ""
    return MethodVariant(label=f"{method.value}{suffix}", method=method, strategy=strategy)


class ConfigParser:
    """Parser for JSON run configurations."""

    KNOWN_KEYS = {f.name for f in fields(RunConfig)}
    COUNT_KEYS = ("n_V", "n_BC", "n_init")
    CHOICES = {
        "sampling": {s.value for s in SamplingStrategy},
        "candidate_rows": {c.value for c in CandidateRows},
        "ic_mode": {"soft", "hard"},
        "timing": {"wall", "off"},
    }

    def parse_file(self, file_path: str | Path) -> RunConfig:
        path = Path(file_path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"Cannot read config {path}: {exc}") from exc
        return self.parse_string(text)

    def parse_string(self, text: str) -> RunConfig:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"Invalid JSON at line {exc.lineno}: {exc.msg}") from exc
        return self.parse_dict(data)

    def parse_dict(self, data: dict[str, Any]) -> RunConfig:
        if not isinstance(data, dict):
            raise ConfigError("Config must be a JSON object")
        unknown = sorted(set(data) - self.KNOWN_KEYS)
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")

        version = data.get("config_version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"config_version: unsupported version {version!r}")
        if "problem" not in data:
            raise ConfigError("problem: required key is missing")
        if data["problem"] not in PROBLEMS:
            raise ConfigError(f"problem: unknown problem {data['problem']!r}; known: {sorted(PROBLEMS)}")

        values = dict(data)
        methods = values.get("method", ["KKT"])
        values["method"] = tuple([methods] if isinstance(methods, str) else methods)
        if not values["method"]:
            raise ConfigError("method: at least one solver is required")

        for key, choices in self.CHOICES.items():
            if key in values and values[key] not in choices:
                raise ConfigError(f"{key}: expected one of {sorted(choices)}, got {values[key]!r}")

        for key in self.COUNT_KEYS:
            if values.get(key) is not None:
                values[key] = self._counts(key, values[key])

        self._check_int(values, "p", minimum=0)
        self._check_int(values, "seed", minimum=0)
        self._check_int(values, "repeats", minimum=1)
        self._check_int(values, "oversample_k", minimum=1)
        self._check_int(values, "n_eval", minimum=1)
        self._check_int(values, "n_eval_realizations", minimum=1)
        self._check_int(values, "n_train", minimum=0)
        if values.get("q") is not None and not 0 < values["q"] <= 1:
            raise ConfigError(f"q: must lie in (0, 1], got {values['q']!r}")
        if not isinstance(values.get("problem_options", {}), dict):
            raise ConfigError("problem_options: must be an object")

        config = RunConfig(**values)
        try:
            config.variants
            config.adaptivity_config
        except Pc2Error as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"adaptivity: {exc}") from exc
        except TypeError as exc:
            raise ConfigError(f"adaptivity: {exc}") from exc
        return config

    @staticmethod
    def _counts(key: str, value) -> tuple[int, ...]:
        items = value if isinstance(value, list) else [value]
        if not items or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in items):
            raise ConfigError(f"{key}: expected a count or list of counts, got {value!r}")
        return tuple(items)

    @staticmethod
    def _check_int(values: dict, key: str, minimum: int) -> None:
        value = values.get(key)
        if value is None:
            return
        if not isinstance(value, int) or isinstance(value, bool) or value < minimum:
            raise ConfigError(f"{key}: expected an integer >= {minimum}, got {value!r}")


def parse_config(file_path: str | Path) -> RunConfig:
    """Parse a JSON run configuration file."""
    return ConfigParser().parse_file(file_path)


def write_effective_config(config: RunConfig, out_dir: str | Path) -> Path:
    """Write the defaults-resolved configuration as sorted JSON."""
    path = Path(out_dir) / "effective_config.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    return path
