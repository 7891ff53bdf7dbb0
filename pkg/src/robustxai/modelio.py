"""Text persistence for networks and flat ``key = value`` training configs."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import fmt, write_atomic
from .network import Activation, Network
from .training import TrainConfig

__all__ = ["FORMAT_VERSION", "ConfigError", "ModelFormatError", "dump_model", "save_model", "load_model",
           "ArchConfig", "CONFIG_KEYS", "parse_config", "load_config"]

FORMAT_VERSION = 1
MAGIC = "robustxai-model"


class ModelFormatError(ValueError):
    pass


class ConfigError(ValueError):
    pass


def dump_model(net: Network) -> str:
    act = net.activation
    lines = [
        f"{MAGIC} {FORMAT_VERSION}",
        f"activation {act.kind}" + (f" {fmt(act.beta)}" if act.smooth else ""),
        f"output_activation {int(net.output_activation)}",
        f"input_domain {fmt(net.input_domain[0])} {fmt(net.input_domain[1])}",
        "sizes " + " ".join(str(s) for s in net.sizes),
    ]
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        lines.append(f"layer {l}")
        lines.extend(" ".join(fmt(v) for v in row) for row in w)
        lines.append(" ".join(fmt(v) for v in b))
    return "\n".join(lines) + "\n"


def save_model(net: Network, path) -> None:
    write_atomic(path, dump_model(net))


def load_model(path) -> Network:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    try:
        magic, version = lines[0].split()
        if magic != MAGIC:
            raise ModelFormatError(f"{path}: not a model file")
        if int(version) != FORMAT_VERSION:
            raise ModelFormatError(f"{path}: unsupported format version {version}")
        head = {ln.split()[0]: ln.split()[1:] for ln in lines[1:5]}
        kind = head["activation"][0]
        act = Activation.relu() if kind == "relu" else Activation.softplus(float(head["activation"][1]))
        sizes = [int(s) for s in head["sizes"]]
        ws, bs = [], []
        pos = 5
        for l, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            if lines[pos] != f"layer {l}":
                raise ModelFormatError(f"{path}: expected 'layer {l}', found {lines[pos]!r}")
            w = np.array([[float(v) for v in lines[pos + 1 + r].split()] for r in range(n_out)])
            b = np.array([float(v) for v in lines[pos + 1 + n_out].split()])
            if w.shape != (n_out, n_in) or b.shape != (n_out,):
                raise ModelFormatError(f"{path}: layer {l} has the wrong shape")
            ws.append(w)
            bs.append(b)
            pos += n_out + 2
    except (IndexError, KeyError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"{path}: malformed model file ({exc})") from exc
    return Network(tuple(ws), tuple(bs), act, input_domain=tuple(float(v) for v in head["input_domain"]),
                   output_activation=bool(int(head["output_activation"][0])))


@dataclass(frozen=True)
class ArchConfig:
    activation: str = "softplus"
    beta: float = 10.0
    hidden: tuple = (32, 32)

    def make_activation(self) -> Activation:
        return Activation.relu() if self.activation == "relu" else Activation.softplus(self.beta)


# config key -> (section, field, parser)
CONFIG_KEYS = {
    "lr": ("train", "learning_rate", float),
    "momentum": ("train", "momentum", float),
    "weight_decay": ("train", "weight_decay", float),
    "curvature_weight": ("train", "curvature_weight", float),
    "epochs": ("train", "epochs", int),
    "batch_size": ("train", "batch_size", int),
    "seed": ("train", "seed", int),
    "lr_decay": ("train", "lr_decay", float),
    "activation": ("arch", "activation", str),
    "beta": ("arch", "beta", float),
    "hidden": ("arch", "hidden", lambda s: tuple(int(v) for v in s.split(",") if v.strip())),
}


def parse_config(text: str, source: str = "<config>"):
    """Parse ``key = value`` lines into ``(TrainConfig, ArchConfig)``.

    Missing keys keep their defaults; unknown keys and bad values raise
    :class:`ConfigError` naming the key.
    """
    values = {"train": {}, "arch": {}}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep:
            raise ConfigError(f"{source}:{n}: expected 'key = value'")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        section, name, parse = CONFIG_KEYS[key]
        try:
            values[section][name] = parse(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{n}: bad value for {key!r}: {value!r}") from exc
    arch = ArchConfig(**values["arch"])
    if arch.activation not in ("relu", "softplus"):
        raise ConfigError(f"{source}: key 'activation' must be relu or softplus")
    try:
        cfg = TrainConfig(**values["train"])
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    if cfg.curvature_weight > 0 and arch.activation == "relu":
        raise ConfigError(f"{source}: key 'curvature_weight' > 0 needs activation = softplus "
                          "(the Hessian of a ReLU network is not defined at its kinks)")
    return cfg, arch


def load_config(path):
    return parse_config(Path(path).read_text(), str(path))

