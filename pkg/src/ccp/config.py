"""Run configuration: flat ``key = value`` files, overridable by CLI flags."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ValidationError
from .partition import PartitionConfig
from .projection import KernelParams
from .tsne import TsneConfig


@dataclass(frozen=True)
class RunConfig:
    input: str | None = None
    labels: str | None = None
    format: str = "dense-csv"
    orientation: str = "genes-as-rows"
    min_cells: int = 15
    log: bool = True
    n_supergenes: int | None = None
    vc: float = 0.8
    tau: float = 6.0
    kappa: float = 2.0
    cell_distance: str = "euclidean"
    cluster_method: str = "kmedoids"
    metric: str = "correlation"
    perplexity: float = 30.0
    tsne_iters: int = 1000
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    learning_rate: float = 200.0
    init: str = "pca"
    reduction_seeds: int = 10
    clustering_seeds: int = 30
    n_neighbors: int = 15
    seed: int = 0
    out: str | None = None
    run_id: str = "run"

    def partition_config(self, n_supergenes=None, vc=None) -> PartitionConfig:
        n = n_supergenes if n_supergenes is not None else self.n_supergenes
        if n is None:
            raise ValidationError("n_supergenes is required")
        return PartitionConfig(int(n), float(self.vc if vc is None else vc), self.cluster_method, self.metric, self.seed)

    def kernel(self) -> KernelParams:
        return KernelParams(self.tau, self.kappa, self.cell_distance)

    def tsne_config(self) -> TsneConfig:
        iters = self.tsne_iters
        return TsneConfig(
            perplexity=self.perplexity,
            n_iter=iters,
            early_exaggeration=self.early_exaggeration,
            exaggeration_iters=min(self.exaggeration_iters, iters),
            learning_rate=self.learning_rate,
            init=self.init,
            seed=self.seed,
        )

    def to_dict(self) -> dict:
        return asdict(self)


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name, raw):
    kind = _FIELDS[name].type
    if isinstance(raw, str):
        text = raw.strip()
        if text.lower() in ("none", "null", ""):
            return None
    else:
        text = raw
    if raw is None:
        return None
    try:
        if kind.startswith("bool"):
            if isinstance(text, bool):
                return text
            if str(text).lower() in ("1", "true", "yes", "on"):
                return True
            if str(text).lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ValidationError(f"bad value {raw!r} for config key {name!r}") from None
    return str(text)


def normalise_key(key: str) -> str:
    return key.strip().lstrip("-").replace("-", "_")


def from_mapping(values: dict, base: RunConfig | None = None) -> RunConfig:
    """Overlay ``values`` on ``base``; unknown keys are an error."""
    current = asdict(base or RunConfig())
    for key, raw in values.items():
        name = normalise_key(key)
        if name not in _FIELDS:
            raise ValidationError(f"unknown config key {key!r}")
        current[name] = _coerce(name, raw)
    return RunConfig(**current)


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"config line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path) -> RunConfig:
    """Read a ``key = value`` file, or the ``run_config`` block of a JSON sidecar."""
    text = Path(path).read_text(encoding="utf-8")
    if str(path).endswith(".json"):
        data = json.loads(text)
        return from_mapping(data.get("run_config", data))
    return from_mapping(parse_config_text(text))


def dump_config(config: RunConfig) -> str:
    lines = []
    for name, value in asdict(config).items():
        lines.append(f"{name.replace('_', '-')} = {'none' if value is None else value}")
    return "\n".join(lines) + "\n"
