"""Line-delimited trace records, shaped-output records and config files.

One JSON object per line, one rollout group per object. Hidden states,
image states, pooling weights and attention splits are 32-bit floats on the
wire and are written with the shortest decimal that parses back to the same
32-bit value; rewards and log-probabilities stay 64-bit. Reading is a
generator, so a file is never held in memory beyond the group currently
being parsed, and writing streams the same way.

Config files are TOML whose keys mirror the command-line flag names
(`eps-low`, `std-mode`, `no-intra`, ...). Absent keys keep their documented
defaults; unknown keys are an error rather than a silent no-op.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Union

import numpy as np

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import (
    ConfigError,
    ParseError,
    SchemaVersionUnsupported,
    UnknownKey,
)
from .grpo import ClipConfig
from .model import (
    RolloutGroup,
    ShapedAdvantages,
    ShapingConfig,
    Trajectory,
    VisualContext,
    validate_group,
)
from .synthlab import SynthConfig

SCHEMA_VERSION = 1

Source = Union[str, Path, IO[str]]


# ---------------------------------------------------------------------------
# float rendering

def _fmt32(x) -> str:
    v = np.float32(x)
    if not np.isfinite(v):
        if np.isnan(v):
            return "NaN"
        return "Infinity" if v > 0 else "-Infinity"
    # numpy renders float32 scalars with the shortest digits that uniquely
    # identify the 32-bit value, which is exactly the wire contract
    return str(v)


def _fmt64(x) -> str:
    v = float(x)
    if not math.isfinite(v):
        if math.isnan(v):
            return "NaN"
        return "Infinity" if v > 0 else "-Infinity"
    return repr(v)


def _vec32(arr) -> str:
    return "[" + ",".join(_fmt32(v) for v in np.asarray(arr).ravel()) + "]"


def _rows32(arr) -> str:
    a = np.asarray(arr)
    return "[" + ",".join(_vec32(row) for row in a) + "]"


def _vec64(arr) -> str:
    return "[" + ",".join(_fmt64(v) for v in np.asarray(arr).ravel()) + "]"


# ---------------------------------------------------------------------------
# writing

def trace_line(group: RolloutGroup) -> str:
    """Serialize one group to its wire line (no trailing newline)."""
    ctx = group.context
    parts = [
        '{"schema_version":',
        str(SCHEMA_VERSION),
        ',"group_id":',
        json.dumps(group.group_id),
        ',"hidden_dim":',
        str(ctx.hidden_dim()),
    ]
    if ctx.image_states is not None:
        parts += [',"image_states":', _rows32(ctx.image_states)]
        if ctx.pooling_weights is not None:
            parts += [',"pooling_weights":', _vec32(ctx.pooling_weights)]
    else:
        parts += [',"prototype":', _vec32(ctx.prototype)]
    parts.append(',"trajectories":[')
    for i, traj in enumerate(group.trajectories):
        if i:
            parts.append(",")
        parts += [
            '{"reward":',
            _fmt64(traj.reward),
            ',"hidden_states":',
            _rows32(traj.hidden_states),
        ]
        if traj.logp_old is not None:
            parts += [',"logp_old":', _vec64(traj.logp_old)]
        if traj.logp_new is not None:
            parts += [',"logp_new":', _vec64(traj.logp_new)]
        if traj.attn_split is not None:
            parts += [',"attn_split":', _rows32(traj.attn_split)]
        parts.append("}")
    parts.append("]}")
    return "".join(parts)


def write_trace(groups: Iterable[RolloutGroup], out: Source) -> int:
    """Stream groups to a trace file or file-like object.

    Returns the number of bytes written (every line is pure ASCII, so the
    byte count equals the character count). Input order is preserved.
    """
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8") as fh:
            return write_trace(groups, fh)
    written = 0
    for group in groups:
        line = trace_line(group)
        out.write(line)
        out.write("\n")
        written += len(line) + 1
    return written


def shaped_line(group_id: str, shaped: ShapedAdvantages) -> str:
    """Serialize one group's shaping output (64-bit values throughout)."""
    trajs = []
    for i in range(len(shaped)):
        trajs.append(
            {
                "base_adv": float(shaped.base_adv[i]),
                "phi": float(shaped.phi[i]),
                "traj_score": float(shaped.traj_score[i]),
                "rho": [float(v) for v in shaped.rho[i]],
                "weight": [float(v) for v in shaped.weight[i]],
                "gate": [int(v) for v in shaped.gate[i]],
                "psi": [float(v) for v in shaped.psi[i]],
                "shaped_adv": [float(v) for v in shaped.shaped_adv[i]],
            }
        )
    record = {
        "schema_version": SCHEMA_VERSION,
        "group_id": group_id,
        "degenerate_group": shaped.degenerate_group,
        "trajectories": trajs,
    }
    return json.dumps(record, separators=(",", ":"))


def write_report(report: dict, out: Source) -> None:
    """Write a structured report as indented JSON."""
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8") as fh:
            write_report(report, fh)
            return
    json.dump(report, out, indent=2)
    out.write("\n")


# ---------------------------------------------------------------------------
# reading

_TOP_KEYS = {
    "schema_version",
    "group_id",
    "hidden_dim",
    "image_states",
    "prototype",
    "pooling_weights",
    "trajectories",
}
_TRAJ_KEYS = {"reward", "hidden_states", "logp_old", "logp_new", "attn_split"}


def _fail(line_no: int, detail: str) -> ParseError:
    return ParseError(f"line {line_no}: {detail}")


def _as_f32_array(value, field: str, line_no: int, ndim: int) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise _fail(line_no, f"{field}: expected a rectangular numeric array")
    if arr.ndim != ndim:
        raise _fail(line_no, f"{field}: expected {ndim} axes, got {arr.ndim}")
    # quantize to the wire precision so a read-write cycle is the identity
    return arr.astype(np.float32).astype(np.float64)


def _as_f64_vector(value, field: str, line_no: int) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise _fail(line_no, f"{field}: expected a numeric vector")
    if arr.ndim != 1:
        raise _fail(line_no, f"{field}: expected 1 axis, got {arr.ndim}")
    return arr


def _parse_group(obj, line_no: int) -> RolloutGroup:
    if not isinstance(obj, dict):
        raise _fail(line_no, "record is not a JSON object")
    unknown = set(obj) - _TOP_KEYS
    if unknown:
        raise _fail(line_no, f"unknown keys {sorted(unknown)}")
    version = obj.get("schema_version")
    if version is None:
        raise _fail(line_no, "missing schema_version")
    if version != SCHEMA_VERSION or isinstance(version, bool):
        raise SchemaVersionUnsupported(
            f"line {line_no}: schema_version {version!r} unsupported "
            f"(this reader speaks {SCHEMA_VERSION})"
        )
    group_id = obj.get("group_id")
    if not isinstance(group_id, str):
        raise _fail(line_no, "group_id must be a string")
    dim = obj.get("hidden_dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 1:
        raise _fail(line_no, "hidden_dim must be a positive integer")

    has_states = "image_states" in obj
    has_proto = "prototype" in obj
    if has_states == has_proto:
        raise _fail(
            line_no, "exactly one of image_states / prototype must be present"
        )
    if "pooling_weights" in obj and not has_states:
        raise _fail(line_no, "pooling_weights requires image_states")

    if has_states:
        states = _as_f32_array(obj["image_states"], "image_states", line_no, 2)
        if states.shape[1] != dim:
            raise _fail(
                line_no,
                f"image_states width {states.shape[1]} does not match "
                f"hidden_dim {dim}",
            )
        weights = None
        if "pooling_weights" in obj:
            weights = _as_f32_array(
                np.asarray(obj["pooling_weights"]).reshape(1, -1),
                "pooling_weights",
                line_no,
                2,
            )[0]
        ctx = VisualContext(image_states=states, pooling_weights=weights)
    else:
        proto = _as_f32_array(
            np.asarray(obj["prototype"]).reshape(1, -1), "prototype", line_no, 2
        )[0]
        if proto.shape[0] != dim:
            raise _fail(
                line_no,
                f"prototype width {proto.shape[0]} does not match "
                f"hidden_dim {dim}",
            )
        ctx = VisualContext(prototype=proto)

    raw_trajs = obj.get("trajectories")
    if not isinstance(raw_trajs, list):
        raise _fail(line_no, "trajectories must be a list")
    trajs = []
    for i, raw in enumerate(raw_trajs):
        if not isinstance(raw, dict):
            raise _fail(line_no, f"trajectories[{i}] is not an object")
        unknown = set(raw) - _TRAJ_KEYS
        if unknown:
            raise _fail(
                line_no, f"trajectories[{i}]: unknown keys {sorted(unknown)}"
            )
        if "reward" not in raw or "hidden_states" not in raw:
            raise _fail(
                line_no, f"trajectories[{i}]: reward and hidden_states required"
            )
        reward = raw["reward"]
        if isinstance(reward, bool) or not isinstance(reward, (int, float)):
            raise _fail(line_no, f"trajectories[{i}].reward must be a number")
        hidden = _as_f32_array(
            raw["hidden_states"], f"trajectories[{i}].hidden_states", line_no, 2
        )
        kwargs = {}
        for name in ("logp_old", "logp_new"):
            if name in raw:
                kwargs[name] = _as_f64_vector(
                    raw[name], f"trajectories[{i}].{name}", line_no
                )
        if "attn_split" in raw:
            kwargs["attn_split"] = _as_f32_array(
                raw["attn_split"], f"trajectories[{i}].attn_split", line_no, 2
            )
        trajs.append(Trajectory(hidden_states=hidden, reward=reward, **kwargs))

    group = RolloutGroup(group_id=group_id, context=ctx, trajectories=trajs)
    # Weights ride the wire as f32: rounding each entry can shift a unit sum
    # by up to half an ulp per entry, so grant that much slack on top of the
    # in-memory budget instead of rejecting records the writer produced from
    # perfectly valid groups.
    tol = 1e-9
    if ctx.pooling_weights is not None:
        tol += ctx.pooling_weights.shape[0] * 2.0**-24
    bad = validate_group(group, weight_sum_tol=tol)
    if bad is not None:
        raise _fail(line_no, str(bad))
    return group


def read_trace(source: Source) -> Iterator[RolloutGroup]:
    """Iterate groups from a trace, one line at a time.

    Accepts a path or any iterable of lines. Whitespace-only lines are
    skipped. Raises ParseError (with the 1-based line number) on the first
    malformed record; an empty input simply yields nothing.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from read_trace(fh)
        return
    for line_no, line in enumerate(source, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise _fail(line_no, f"not valid JSON ({exc.msg})") from exc
        yield _parse_group(obj, line_no)


# ---------------------------------------------------------------------------
# config files

@dataclass(frozen=True)
class ConfigBundle:
    """The three config records a run is built from."""

    shaping: ShapingConfig
    clip: ClipConfig
    synth: SynthConfig


_SCHEDULE_ALIASES = {
    "linear": "linear",
    "exp": "exponential",
    "exponential": "exponential",
    "step": "step",
}
_AGG_ALIASES = {
    "traj": "trajectory-mean",
    "trajectory-mean": "trajectory-mean",
    "token": "token-mean",
    "token-mean": "token-mean",
}

# key -> (section, field, kind). kind "float" accepts ints, "int" does not
# accept floats or bools, "bool" accepts only bools.
_CONFIG_KEYS = {
    "beta": ("shaping", "beta", "float"),
    "gamma": ("shaping", "gamma", "float"),
    "kappa": ("shaping", "kappa", "float"),
    "schedule": ("shaping", "schedule", "schedule"),
    "power": ("shaping", "power", "int"),
    "span": ("shaping", "span", "str"),
    "eps-low": ("shaping", "clip_low", "float"),
    "eps-high": ("shaping", "clip_high", "float"),
    "std-mode": ("shaping", "std_mode", "str"),
    "no-intra": ("shaping", "enable_intra", "negated-bool"),
    "no-inter": ("shaping", "enable_inter", "negated-bool"),
    "loss-agg": ("clip", "loss_agg", "agg"),
    "seed": ("synth", "seed", "int"),
    "d": ("synth", "d", "int"),
    "vocab": ("synth", "vocab", "int"),
    "seq-len": ("synth", "seq_len", "int"),
    "group-size": ("synth", "group_size", "int"),
    "groups": ("synth", "groups_per_batch", "int"),
    "n-image-tokens": ("synth", "n_image_tokens", "int"),
    "evidence-gain": ("synth", "evidence_gain", "float"),
    "rho-decay": ("synth", "rho_decay", "float"),
}


def _coerce(key: str, value, kind: str):
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"key {key!r}: expected a number, got {value!r}")
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"key {key!r}: expected an integer, got {value!r}")
        return value
    if kind == "negated-bool":
        if not isinstance(value, bool):
            raise ConfigError(f"key {key!r}: expected a boolean, got {value!r}")
        return not value
    if kind == "schedule":
        if not isinstance(value, str) or value not in _SCHEDULE_ALIASES:
            raise ConfigError(
                f"key {key!r}: expected one of {sorted(_SCHEDULE_ALIASES)}, "
                f"got {value!r}"
            )
        return _SCHEDULE_ALIASES[value]
    if kind == "agg":
        if not isinstance(value, str) or value not in _AGG_ALIASES:
            raise ConfigError(
                f"key {key!r}: expected one of {sorted(_AGG_ALIASES)}, "
                f"got {value!r}"
            )
        return _AGG_ALIASES[value]
    if not isinstance(value, str):
        raise ConfigError(f"key {key!r}: expected a string, got {value!r}")
    return value


def default_bundle() -> ConfigBundle:
    return ConfigBundle(
        shaping=ShapingConfig(), clip=ClipConfig(), synth=SynthConfig()
    )


def read_config(path: Union[str, Path]) -> ConfigBundle:
    """Parse a TOML config file into the three config records.

    Keys mirror the command-line flag names. An empty file yields all
    defaults. Unknown keys raise UnknownKey; out-of-range values raise
    ConfigError from the record constructors.
    """
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    overrides = {"shaping": {}, "clip": {}, "synth": {}}
    for key, value in raw.items():
        spec = _CONFIG_KEYS.get(key)
        if spec is None:
            raise UnknownKey(f"unknown config key {key!r}")
        section, field_name, kind = spec
        overrides[section][field_name] = _coerce(key, value, kind)
    # the clip offsets live in both the shaping record and the clip record;
    # a single file key feeds both so they cannot drift apart
    for shared in ("clip_low", "clip_high"):
        if shared in overrides["shaping"]:
            overrides["clip"][shared] = overrides["shaping"][shared]
    return ConfigBundle(
        shaping=ShapingConfig(**overrides["shaping"]),
        clip=ClipConfig(**overrides["clip"]),
        synth=SynthConfig(**overrides["synth"]),
    )
