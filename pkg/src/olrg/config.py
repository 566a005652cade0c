"""TOML experiment configuration (``schema = 1``).

Every key is optional except ``schema``; unknown keys are rejected by name.
"""

from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError
from .hem import Pulses
from .model import ModelSpec
from .omm import OMM, IdentityMap
from .train import TrainConfig
from .dynamics import SolverConfig

SCHEMA_VERSION = 1

# section -> key -> (type, default)
SCHEMA = {
    "model": {"h": (float, 1.0), "start_n": (int, 4), "target_N": (int, 6), "grow_l": (int, 1)},
    "loss": {
        "order": (int, 2), "tobc_batch": (int, 32), "checkpoints": (int, 20), "T": (float, 2.0),
        "times": (list, None), "epochs_per_point": (list, None),
    },
    "map": {
        "mode": (str, "omm"), "identity": (bool, False), "depth": (int, 8), "width": (int, 0),
        "noise_dim": (int, 8), "ensemble_size": (int, 10), "pulse_depth": (int, 2),
        "pulse_width": (int, 16), "substeps": (int, 8), "pulse_samples": (int, 101),
    },
    "train": {
        "epochs": (int, 300), "lr": (float, 1e-3), "seed": (int, 0), "window": (int, 10),
        "grad": (str, "adjoint"), "fd_eps": (float, 1e-5), "snapshot_every": (int, 0),
    },
    "output": {"directory": (str, "olrg-run")},
}


@dataclass(frozen=True)
class ExperimentConfig:
    train: TrainConfig
    model: ModelSpec
    layout: object
    output: Path
    times: tuple
    epochs_per_point: tuple
    pulse_samples: int
    raw: dict


def _coerce(section, key, value, kind):
    name = f"{section}.{key}"
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is list:
        if not isinstance(value, list):
            raise ConfigError(f"{name} must be an array")
        return value
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise ConfigError(f"{name} must be of type {kind.__name__}, got {value!r}")
    return value


def parse_config(doc: dict, base_dir=None) -> ExperimentConfig:
    if "schema" not in doc:
        raise ConfigError("missing top-level key 'schema'")
    if doc["schema"] != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema {doc['schema']!r}; expected {SCHEMA_VERSION}")
    values = {}
    for key, section in doc.items():
        if key == "schema":
            continue
        if key not in SCHEMA:
            raise ConfigError(f"unknown section or key {key!r}")
        if not isinstance(section, dict):
            raise ConfigError(f"{key} must be a table")
        for k, v in section.items():
            if k not in SCHEMA[key]:
                raise ConfigError(f"unknown key {key}.{k}")
            values[key, k] = _coerce(key, k, v, SCHEMA[key][k][0])

    def get(section, key):
        return values.get((section, key), SCHEMA[section][key][1])

    mode = get("map", "mode")
    if mode not in ("omm", "hem"):
        raise ConfigError(f"map.mode must be 'omm' or 'hem', got {mode!r}")
    times = get("loss", "times")
    epochs_pp = get("loss", "epochs_per_point")
    if (times is None) != (epochs_pp is None):
        raise ConfigError("loss.times and loss.epochs_per_point must be given together")
    if times is not None:
        if not times or len(times) != len(epochs_pp):
            raise ConfigError("loss.times and loss.epochs_per_point must be non-empty and of equal length")
        times = tuple(float(t) for t in times)
        epochs_pp = tuple(int(e) for e in epochs_pp)
    else:
        times = (get("loss", "T"),)
        epochs_pp = (get("train", "epochs"),)

    try:
        model = ModelSpec(h=get("model", "h"))
        train = TrainConfig(
            order_cutoff=get("loss", "order"),
            tobc_batch=get("loss", "tobc_batch"),
            checkpoints=get("loss", "checkpoints"),
            grow_l=get("model", "grow_l"),
            start_n=get("model", "start_n"),
            target_N=get("model", "target_N"),
            epochs=get("train", "epochs"),
            learning_rate=get("train", "lr"),
            seed=get("train", "seed"),
            window=get("train", "window"),
            mode=mode,
            T=times[0],
            transfer_times=times if len(times) > 1 else (),
            transfer_epochs=epochs_pp if len(times) > 1 else (),
            grad_method=get("train", "grad"),
            fd_eps=get("train", "fd_eps"),
            snapshot_every=get("train", "snapshot_every"),
            solver=SolverConfig(method="expm", substeps=get("map", "substeps")),
        )
        if mode == "hem":
            layout = Pulses(depth=get("map", "pulse_depth"), width=get("map", "pulse_width"))
        elif get("map", "identity"):
            layout = IdentityMap()
        else:
            d = 2 ** train.start_n
            layout = OMM(
                d_big=d, d_small=d // 2**train.grow_l, noise_dim=get("map", "noise_dim"),
                depth=get("map", "depth"), width=get("map", "width"), ensemble_size=get("map", "ensemble_size"),
            )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(get("output", "directory"))
    if base_dir is not None and not out.is_absolute():
        out = Path(base_dir) / out
    return ExperimentConfig(train, model, layout, out, times, epochs_pp, get("map", "pulse_samples"), doc)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(doc)
