"""Sectioned key-value run configuration.

Example::

    mode = testing

    [dataset]
    query = data/query
    database = data/database

    [channels]
    enabled = gist.color, ldb.color, bow.infrared
    lambda.gist.color = 1.579

    [matching]
    n_q = 10
    g = 15

Keys before the first section belong to the run itself (``mode``). Relative
paths are resolved against the configuration file's directory. Unknown
sections or keys are errors.
"""
from __future__ import annotations

import configparser
import enum
from dataclasses import dataclass
from pathlib import Path

from .descriptors import ExtractionParams
from .descriptors.types import VALID_CHANNELS, Channel, DescriptorKind, channel_name, parse_channel
from .errors import MissingRequired, ParseError, UnknownKey
from .evaluation import DEFAULT_TOLERANCE
from .matching import OPTIMAL_WEIGHTS, FusionWeights, MatchParams
from .tuning import SWEEP_PARAMETERS, GAConfig

_ROOT = "run"


class Mode(enum.Enum):
    TESTING = "testing"
    TUNING = "tuning"
    SWEEP = "sweep"


@dataclass(frozen=True)
class RunConfig:
    mode: Mode = Mode.TESTING
    # dataset
    query: Path | None = None
    database: Path | None = None
    ground_truth: Path | None = None
    cnn_dir: Path | None = None
    cnn_dim: int | None = None
    vocabulary: Path | None = None
    vocabulary_train: Path | None = None
    vocab_k: int = 10
    vocab_depth: int = 5
    vocab_seed: int = 0
    extraction: ExtractionParams = ExtractionParams()
    # channels
    channels: tuple[Channel, ...] = tuple(c for c in VALID_CHANNELS if c[0] is not DescriptorKind.CNN)
    weights: FusionWeights = OPTIMAL_WEIGHTS
    # matching / evaluation
    match: MatchParams = MatchParams()
    tolerance: int = DEFAULT_TOLERANCE
    # tuning
    ga: GAConfig = GAConfig()
    tuning_threshold: float = 0.0
    sweeps: tuple[tuple[str, tuple], ...] = ()
    # output
    output_dir: Path = Path("mpr_out")
    error_accepted_only: bool = False
    plots: bool = True
    dump_scores: bool = False

    @property
    def fusion_weights(self) -> FusionWeights:
        return self.weights.restrict(self.channels)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text: str) -> int:
    return int(text.strip())


def _float(text: str) -> float:
    return float(text.strip())


def _sweeps(text: str) -> tuple:
    out = []
    for chunk in filter(None, (c.strip() for c in text.split(";"))):
        name, _, values = chunk.partition(":")
        name = name.strip()
        if name not in SWEEP_PARAMETERS:
            raise ValueError(f"unknown sweep parameter {name!r}")
        conv = _int if name == "n_q" else _float
        out.append((name, tuple(conv(v) for v in values.split(",") if v.strip())))
    return tuple(out)


# section -> key -> (RunConfig/nested attribute, converter)
_SCHEMA = {
    _ROOT: {"mode": ("mode", lambda s: Mode(s.strip().lower()))},
    "dataset": {
        "query": ("query", Path),
        "database": ("database", Path),
        "ground_truth": ("ground_truth", Path),
        "cnn_dir": ("cnn_dir", Path),
        "cnn_dim": ("cnn_dim", _int),
        "vocabulary": ("vocabulary", Path),
        "vocabulary_train": ("vocabulary_train", Path),
        "vocab_k": ("vocab_k", _int),
        "vocab_L": ("vocab_depth", _int),
        "vocab_seed": ("vocab_seed", _int),
        "alpha": ("extraction.alpha", _float),
        "max_keypoints": ("extraction.max_keypoints", _int),
        "ldb_levels": ("extraction.ldb_levels", lambda s: tuple(_int(v) for v in s.split(","))),
    },
    "channels": {"enabled": ("channels", None)},  # lambda.<kind>.<modality> handled separately
    "matching": {
        "n_q": ("match.n_q", _int),
        "v_min": ("match.v_min", _float),
        "v_max": ("match.v_max", _float),
        "g": ("match.gate_m", _float),
        "t": ("match.threshold_t", _float),
        "strict_eq4": ("match.strict_eq4", _bool),
        "cone_rounding": ("match.cone_rounding", lambda s: s.strip().lower()),
        "tolerance": ("tolerance", _int),
    },
    "tuning": {
        "population": ("ga.population", _int),
        "generations": ("ga.generations", _int),
        "runs": ("ga.runs", _int),
        "mutation_rate": ("ga.mutation_rate", _float),
        "crossover_rate": ("ga.crossover_rate", _float),
        "mutation_sigma": ("ga.mutation_sigma", _float),
        "seed": ("ga.seed", _int),
        "t": ("tuning_threshold", _float),
        "sweep": ("sweeps", _sweeps),
    },
    "output": {
        "dir": ("output_dir", Path),
        "error_accepted_only": ("error_accepted_only", _bool),
        "plots": ("plots", _bool),
        "dump_scores": ("dump_scores", _bool),
    },
}

_PATH_FIELDS = ("query", "database", "ground_truth", "cnn_dir", "vocabulary", "vocabulary_train", "output_dir")


def _parse_channels(text: str) -> tuple[Channel, ...]:
    text = text.strip()
    if text.lower() == "all":
        return VALID_CHANNELS
    if text.lower() in ("", "none"):
        return ()
    chans = {parse_channel(c) for c in text.split(",") if c.strip()}
    bad = [c for c in chans if c not in VALID_CHANNELS]
    if bad:
        raise ValueError(f"invalid channel(s): {', '.join(channel_name(c) for c in bad)}")
    return tuple(c for c in VALID_CHANNELS if c in chans)


def parse_config_text(text: str, base_dir=".") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True, delimiters=("=",),
                                       comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(f"[{_ROOT}]\n" + text)
    except configparser.Error as exc:
        raise ParseError(f"malformed configuration: {exc}") from None

    flat: dict[str, object] = {}
    weights = dict(OPTIMAL_WEIGHTS.weights)
    for section in parser.sections():
        if section not in _SCHEMA:
            raise UnknownKey(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            where = f"[{section}] {key}"
            if section == "channels" and key.startswith("lambda."):
                try:
                    ch = parse_channel(key[len("lambda."):])
                    if ch not in VALID_CHANNELS:
                        raise ValueError("not a valid channel")
                    weights[ch] = _float(raw)
                except ValueError as exc:
                    raise UnknownKey(f"{where}: {exc}") from None
                continue
            if key not in _SCHEMA[section]:
                raise UnknownKey(f"unknown key {where}")
            attr, conv = _SCHEMA[section][key]
            try:
                flat[attr] = _parse_channels(raw) if attr == "channels" else conv(raw)
            except ValueError as exc:
                raise ParseError(f"{where}: {exc}") from None

    base = Path(base_dir)
    flat.setdefault("output_dir", Path("mpr_out"))
    for name in _PATH_FIELDS:
        if name in flat:
            flat[name] = (base / flat[name]).resolve()
    return _build(flat, weights)


def _build(flat: dict, weights: dict) -> RunConfig:
    nested = {"extraction": {}, "match": {}, "ga": {}}
    top = {}
    for attr, value in flat.items():
        head, _, tail = attr.partition(".")
        if tail:
            nested[head][tail] = value
        else:
            top[attr] = value
    try:
        top["extraction"] = ExtractionParams(**nested["extraction"])
        top["match"] = MatchParams(**nested["match"])
        top["ga"] = GAConfig(**nested["ga"])
        top["weights"] = FusionWeights(weights)
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    if "channels" not in top:
        default = RunConfig.channels
        top["channels"] = VALID_CHANNELS if top.get("cnn_dir") else default
    if "ground_truth" not in top and top.get("query") is not None:
        candidate = top["query"] / "gt.csv"
        if candidate.is_file():
            top["ground_truth"] = candidate
    cfg = RunConfig(**top)
    _check_required(cfg)
    return cfg


def _check_required(cfg: RunConfig) -> None:
    if cfg.query is None or cfg.database is None:
        raise MissingRequired("[dataset] query and database are required")
    if cfg.mode in (Mode.TUNING, Mode.SWEEP) and cfg.ground_truth is None:
        raise MissingRequired(f"{cfg.mode.value} mode requires [dataset] ground_truth")
    if any(k is DescriptorKind.CNN for k, _ in cfg.channels) and cfg.cnn_dir is None:
        raise MissingRequired("CNN channel enabled but [dataset] cnn_dir not set")
    if cfg.tolerance < 0:
        raise ParseError("tolerance must be >= 0")


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read configuration {path}: {exc}") from None
    return parse_config_text(text, path.parent)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    return str(value)


def _get(cfg: RunConfig, attr: str):
    obj = cfg
    for part in attr.split("."):
        obj = getattr(obj, part)
    return obj


def dump_config(cfg: RunConfig) -> str:
    """Serialise to the text format; ``parse_config_text(dump_config(c)) == c``."""
    lines = [f"mode = {cfg.mode.value}"]
    for section, keys in _SCHEMA.items():
        if section == _ROOT:
            continue
        lines += ["", f"[{section}]"]
        for key, (attr, _) in keys.items():
            value = _get(cfg, attr)
            if value is None:
                continue
            if attr == "channels":
                text = ", ".join(channel_name(c) for c in value) if value else "none"
            elif attr == "sweeps":
                if not value:
                    continue
                text = "; ".join(f"{n}:{_fmt(v)}" for n, v in value)
            elif attr in _PATH_FIELDS:
                text = str(Path(value).resolve())
            else:
                text = _fmt(value)
            lines.append(f"{key} = {text}")
        if section == "channels":
            for ch in VALID_CHANNELS:
                if ch in cfg.weights.weights:
                    lines.append(f"lambda.{channel_name(ch)} = {cfg.weights.weights[ch]!r}")
    return "\n".join(lines) + "\n"


__all__ = ["Mode", "RunConfig", "dump_config", "parse_config", "parse_config_text"]
