"""Flat ``section.key=value`` run configuration.

Example::

    data.cache = cora.bin
    model.hidden_dim = 8
    reg.kind = entropy_min
    reg.sweep = 0, 0.01, 0.1, 0.5, 1.0
    noise.case = edges_fixed_500
    run.n_seeds = 5

Lines starting with ``#`` are comments. Unknown keys are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .gat_model import GatConfig
from .perturbation import FeatureModel, GridCase, NoiseSpec, noise_grid
from .robust_reg import RegKind, RegSpec


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.replace(",", " ").split())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.replace(",", " ").split())


_GAT = GatConfig()

# key -> (parser, default)
SCHEMA = {
    "data.content": (str, ""),
    "data.cites": (str, ""),
    "data.cache": (str, ""),
    "data.synthetic": (str, "none"),
    "data.synthetic_seed": (int, 0),
    "data.tag": (str, "table1"),
    "data.normalize": (_bool, True),
    "split.per_class_train": (int, 20),
    "split.n_val": (int, 500),
    "split.n_test": (int, 1000),
    "split.seed": (int, 0),
    "model.hidden_dim": (int, _GAT.hidden_dim),
    "model.heads_l1": (int, _GAT.heads_l1),
    "model.heads_l2": (int, _GAT.heads_l2),
    "model.dropout_p": (float, _GAT.dropout_p),
    "model.attn_dropout_p": (float, _GAT.attn_dropout_p),
    "model.leaky_slope": (float, _GAT.leaky_slope),
    "model.lr": (float, _GAT.lr),
    "model.weight_decay": (float, _GAT.weight_decay),
    "model.max_epochs": (int, _GAT.max_epochs),
    "model.patience": (int, _GAT.patience),
    "reg.kind": (str, "entropy_min"),
    "reg.lambda": (float, 0.5),
    "reg.apply_layers": (_ints, (1, 2)),
    "reg.sweep": (_floats, ()),
    "noise.case": (str, "single"),
    "noise.n_rogue": (int, 0),
    "noise.edges_per_rogue": (int, 500),
    "noise.feature_model": (str, FeatureModel.DENSE_BERNOULLI_HALF.value),
    "noise.include_control": (_bool, False),
    "run.n_seeds": (int, 5),
    "run.base_seed": (int, 0),
    "run.output_dir": (str, "out"),
    "run.record_wall_time": (_bool, False),
}

SYNTHETIC = ("none", "two_cluster", "planted")


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})

    def __getitem__(self, key):
        return self.values[key]

    def set(self, key: str, raw) -> None:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        parse = SCHEMA[key][0]
        try:
            self.values[key] = parse(raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from None

    def validate(self) -> "RunConfig":
        if self["run.n_seeds"] < 1:
            raise ConfigError("run.n_seeds must be >= 1")
        if self["data.synthetic"] not in SYNTHETIC:
            raise ConfigError(f"data.synthetic must be one of {SYNTHETIC}")
        if self["noise.case"] not in ("single", *(c.value for c in GridCase)):
            raise ConfigError(f"unknown noise.case {self['noise.case']!r}")
        try:
            self.reg_spec()
            self.gat_config()
            FeatureModel(self["noise.feature_model"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def gat_config(self, seed: int | None = None, reg: RegSpec | None = None) -> GatConfig:
        kw = {k.split(".", 1)[1]: v for k, v in self.values.items() if k.startswith("model.")}
        return GatConfig(
            seed=self["run.base_seed"] if seed is None else seed,
            regularizer=reg if reg is not None else RegSpec(),
            **kw,
        )

    def reg_spec(self, lam: float | None = None) -> RegSpec:
        kind = RegKind(self["reg.kind"])
        lam = self["reg.lambda"] if lam is None else lam
        if kind is RegKind.NONE:
            lam = 0.0
        return RegSpec(kind, lam, self["reg.apply_layers"])

    def grid(self) -> list[tuple[str, NoiseSpec]]:
        """(case name, spec) pairs; spec seeds are placeholders set per cell."""
        fm = FeatureModel(self["noise.feature_model"])
        case = self["noise.case"]
        if case == "single":
            pts = [NoiseSpec(self["noise.n_rogue"], self["noise.edges_per_rogue"], fm)]
        else:
            pts = noise_grid(case, self["data.tag"], feature_model=fm)
        if self["noise.include_control"]:
            pts = [NoiseSpec(0, pts[0].edges_per_rogue, fm)] + pts
        return [(case, p) for p in pts]

    def dump(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.values.items())


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(str(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    rc = RunConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            rc.set(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return rc.validate()


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read(), str(path))
