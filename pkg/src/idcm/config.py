"""Cascade and training configuration, plus the `key = value` config file.

Every field of :class:`CascadeConfig` and :class:`TrainConfig` is
addressable in the config file by its field name; CLI flags override file
values.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Mapping

from idcm.iohelpers import atomic_write

SELECTORS = ("ck", "ck_small", "static_first", "static_top_tf", "all")
LOSSES = ("ranknet", "kd_mse", "kd_ce", "kd_ndcg2")
EARLY_STOP_METRICS = ("ndcg@10", "mrr@10")
AGGREGATION_FILLS = ("repeat_last", "zero")

# One exact-match kernel followed by ten evenly spaced soft-match kernels,
# the standard bank for this model lineage.
DEFAULT_KERNEL_MUS = (1.0, 0.9, 0.7, 0.5, 0.3, 0.1, -0.1, -0.3, -0.5, -0.7, -0.9)
DEFAULT_KERNEL_SIGMAS = (1e-3,) + (0.1,) * 10


class ConfigError(ValueError):
    """Invalid configuration value or combination."""


@dataclass
class CascadeConfig:
    """Everything the scoring engine needs to know about one deployment.

    `w`/`o` shape the passage windows, `k` is the number of windows the
    selection stage keeps, `l` the number of expensive scores the final
    linear layer aggregates.
    """

    w: int = 50
    o: int = 7
    max_doc_tokens: int = 2000
    k: int = 4
    l: int = 3
    selector: str = "ck"
    w_ps: tuple[float, ...] = ()
    w_ps_bias: float = 0.0
    freeze_w_ps_bias: bool = False
    aggregation_fill: str = "repeat_last"
    # selection model dimensions; `d_proj = 0` disables the projection
    # (full variant), the reduced variant projects before the convolution.
    d_emb: int = 768
    d_proj: int = 0
    d_out: int = 768
    kernel_mus: tuple[float, ...] = DEFAULT_KERNEL_MUS
    kernel_sigmas: tuple[float, ...] = DEFAULT_KERNEL_SIGMAS
    candidate_depth: int = 100
    query_max_tokens: int = 30
    min_count: int = 1

    def __post_init__(self) -> None:
        self.w_ps = tuple(float(x) for x in self.w_ps)
        if not self.w_ps:
            self.w_ps = tuple([1.0 / self.l] * self.l)
        self.kernel_mus = tuple(float(x) for x in self.kernel_mus)
        self.kernel_sigmas = tuple(float(x) for x in self.kernel_sigmas)

    def validate(self) -> "CascadeConfig":
        if self.w < 1:
            raise ConfigError(f"window size w must be >= 1, got {self.w}")
        if not 0 <= self.o < self.w:
            raise ConfigError(f"overlap o must satisfy 0 <= o < w, got o={self.o}, w={self.w}")
        if self.max_doc_tokens < self.w:
            raise ConfigError(
                f"max_doc_tokens must be >= w, got {self.max_doc_tokens} < {self.w}"
            )
        if self.selector not in SELECTORS:
            raise ConfigError(f"unknown selector {self.selector!r}, expected one of {SELECTORS}")
        if self.l < 1:
            raise ConfigError(f"l must be >= 1, got {self.l}")
        if self.selector != "all":
            if self.k < 1:
                raise ConfigError(f"k must be >= 1 when selector != all, got {self.k}")
            if self.l > self.k:
                raise ConfigError(
                    f"aggregation count l must not exceed selection count k "
                    f"(l={self.l}, k={self.k}): aggregation only sees selected windows"
                )
        if len(self.w_ps) != self.l:
            raise ConfigError(f"w_ps must have l={self.l} entries, got {len(self.w_ps)}")
        if self.aggregation_fill not in AGGREGATION_FILLS:
            raise ConfigError(f"unknown aggregation_fill {self.aggregation_fill!r}")
        if len(self.kernel_mus) != len(self.kernel_sigmas):
            raise ConfigError("kernel_mus and kernel_sigmas must have equal length")
        if any(s <= 0 for s in self.kernel_sigmas):
            raise ConfigError("kernel sigmas must be positive")
        if any(not -1.0 <= m <= 1.0 for m in self.kernel_mus):
            raise ConfigError("kernel mus must lie in [-1, 1]")
        for a, b in zip(self.kernel_mus, self.kernel_mus[1:]):
            if not a > b:
                raise ConfigError("kernel mus must be strictly descending")
        if min(self.d_emb, self.d_out) < 1 or self.d_proj < 0:
            raise ConfigError("model dimensions must be positive (d_proj may be 0)")
        if self.candidate_depth < 1:
            raise ConfigError("candidate_depth must be >= 1")
        if self.query_max_tokens < 1:
            raise ConfigError("query_max_tokens must be >= 1")
        return self

    @property
    def conv_in_dim(self) -> int:
        return self.d_proj if self.d_proj else self.d_emb

    @property
    def variant(self) -> str:
        return "ck_small" if self.d_proj else "ck"

    def snapshot(self) -> dict:
        """JSON-serializable view, used in checkpoints and manifests."""
        out = dataclasses.asdict(self)
        out["w_ps"] = list(self.w_ps)
        out["kernel_mus"] = list(self.kernel_mus)
        out["kernel_sigmas"] = list(self.kernel_sigmas)
        return out


@dataclass
class TrainConfig:
    """Optimization settings shared by the three training stages."""

    loss: str = "kd_ndcg2"
    lr_ck: float = 1e-5
    lr_wps: float = 1e-4
    batch_size: int = 32
    early_stop_metric: str = "ndcg@10"
    patience: int = 5
    max_steps: int = 10000
    seed: int = 42
    kd_top_k: int = 0  # 0 means: use the cascade selection count k
    validation_interval: int = 100

    def validate(self) -> "TrainConfig":
        if self.loss not in LOSSES:
            raise ConfigError(f"unknown loss {self.loss!r}, expected one of {LOSSES}")
        if self.lr_ck <= 0 or self.lr_wps <= 0:
            raise ConfigError("learning rates must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.early_stop_metric not in EARLY_STOP_METRICS:
            raise ConfigError(f"unknown early_stop_metric {self.early_stop_metric!r}")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.max_steps < 0:
            raise ConfigError("max_steps must be >= 0")
        if self.kd_top_k < 0:
            raise ConfigError("kd_top_k must be >= 0 (0 selects the cascade k)")
        if self.validation_interval < 1:
            raise ConfigError("validation_interval must be >= 1")
        return self

    def resolved_kd_top_k(self, cascade: CascadeConfig) -> int:
        return self.kd_top_k if self.kd_top_k else cascade.k

    def snapshot(self) -> dict:
        return dataclasses.asdict(self)


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"cannot parse boolean from {raw!r}")


def _coerce(raw: str, annotation) -> object:
    if annotation is int:
        return int(raw)
    if annotation is float:
        return float(raw)
    if annotation is bool:
        return _parse_bool(raw)
    if annotation is str:
        return raw.strip()
    # remaining fields are tuples of floats, written comma-separated
    parts = [p for p in raw.replace(" ", "").split(",") if p]
    return tuple(float(p) for p in parts)


def read_config_file(path: str) -> dict[str, str]:
    """Parse a plain-text ``key = value`` file into a raw string mapping."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {stripped!r}")
            key, _, value = stripped.partition("=")
            values[key.strip()] = value.strip()
    return values


_CASCADE_FIELDS = {f.name: f.type for f in dataclasses.fields(CascadeConfig)}
_TRAIN_FIELDS = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
_TYPE_BY_NAME = {"int": int, "float": float, "bool": bool, "str": str}


def _field_type(annotation) -> object:
    # dataclass field types arrive as strings under `from __future__ import annotations`
    if isinstance(annotation, str):
        return _TYPE_BY_NAME.get(annotation, tuple)
    return annotation


def build_configs(
    file_values: Mapping[str, str] | None = None,
    overrides: Mapping[str, object] | None = None,
) -> tuple[CascadeConfig, TrainConfig]:
    """Merge defaults, config-file values and explicit overrides.

    Overrides take precedence over the file; `None` overrides are ignored.
    Unknown keys raise :class:`ConfigError`.
    """
    cascade_kwargs: dict[str, object] = {}
    train_kwargs: dict[str, object] = {}
    for key, raw in (file_values or {}).items():
        if key in _CASCADE_FIELDS:
            cascade_kwargs[key] = _coerce(raw, _field_type(_CASCADE_FIELDS[key]))
        elif key in _TRAIN_FIELDS:
            train_kwargs[key] = _coerce(raw, _field_type(_TRAIN_FIELDS[key]))
        else:
            raise ConfigError(f"unknown config key {key!r}")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in _CASCADE_FIELDS:
            cascade_kwargs[key] = value
        elif key in _TRAIN_FIELDS:
            train_kwargs[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    cascade = CascadeConfig(**cascade_kwargs).validate()
    train = TrainConfig(**train_kwargs).validate()
    return cascade, train


def write_config_file(path: str, values: Mapping[str, object]) -> None:
    """Write a ``key = value`` file (tuples/lists become comma-joined)."""
    with atomic_write(path) as handle:
        for key, value in values.items():
            if isinstance(value, (tuple, list)):
                rendered = ",".join(repr(float(v)) for v in value)
            elif isinstance(value, bool):
                rendered = "true" if value else "false"
            elif isinstance(value, float):
                rendered = repr(value)
            else:
                rendered = str(value)
            handle.write(f"{key} = {rendered}\n")
