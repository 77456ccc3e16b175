"""Layered run configuration: defaults, then config file, then CLI flags.

The file format is INI (flat key = value lines under section headers).
Every resolved value remembers where it came from, and the resolved
configuration serializes back to a canonical INI so an output directory
always carries enough to reproduce the run exactly.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from typing import Any

from .errors import ConfigError

# (section, key) -> (type, default, help)
SCHEMA: dict[tuple[str, str], tuple[type, Any, str]] = {
    ("model", "max_vocab"): (int, 512, "vocabulary size cap for the corpus tokenizer"),
    ("model", "dim"): (int, 64, "hidden dimension (even, divisible by n_heads)"),
    ("model", "n_layers"): (int, 2, "decoder blocks"),
    ("model", "n_heads"): (int, 4, "attention heads"),
    ("model", "max_seq_len"): (int, 128, "maximum token sequence length"),
    ("model", "adapter_rank"): (int, 0, "low-rank adapter rank; 0 trains all weights"),
    ("model", "seed"): (int, 0, "parameter initialization seed"),
    ("encoding", "alpha"): (float, 1.0, "spiral base radius"),
    ("encoding", "beta"): (float, 0.5, "spiral radial growth per sixty-year cycle"),
    ("encoding", "wavelength_base"): (float, 10000.0, "sine/cosine wavelength ladder base"),
    ("training", "delta"): (float, 0.5, "intra/inter cosine loss mix"),
    ("training", "sigma"): (float, 1.0, "temporal objective weight"),
    ("training", "ewc_lambda"): (float, 100.0, "Fisher penalty weight"),
    ("training", "learning_rate"): (float, 1e-4, "SGD learning rate"),
    ("training", "batch_size"): (int, 8, "sequences per micro-batch"),
    ("training", "grad_accum_steps"): (int, 2, "micro-batches per optimizer step"),
    ("training", "epochs"): (int, 10, "training epochs"),
    ("training", "seed"): (int, 0, "data-order shuffle seed"),
    ("training", "injection"): (bool, True, "stamp input embeddings with temporal encodings"),
    ("fisher", "samples"): (int, 32, "sequences used for the Fisher estimate"),
    ("run", "threads"): (int, 1, "torch CPU threads (1 = fully deterministic)"),
}

_SECTION_ORDER = ("model", "encoding", "training", "fisher", "run")


def _parse(raw: str, typ: type, where: str) -> Any:
    raw = raw.strip()
    try:
        if typ is bool:
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {typ.__name__}") from exc


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    """Resolved values plus the provenance (default | file | flag) of each."""

    values: dict[tuple[str, str], Any]
    provenance: dict[tuple[str, str], str]

    def get(self, section: str, key: str) -> Any:
        return self.values[(section, key)]

    def section(self, section: str) -> dict[str, Any]:
        return {k: v for (s, k), v in self.values.items() if s == section}

    def write(self, path) -> None:
        """Canonical INI with every resolved value (schema order)."""
        lines = []
        for sec in _SECTION_ORDER:
            lines.append(f"[{sec}]")
            for (s, k), (typ, default, _) in SCHEMA.items():
                if s == sec:
                    lines.append(f"{k} = {_format(self.values[(s, k)])}")
            lines.append("")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines))

    def describe(self) -> list[str]:
        return [
            f"{s}.{k} = {_format(v)}  ({self.provenance[(s, k)]})"
            for (s, k), v in self.values.items()
        ]


def resolve(config_path=None, flag_overrides: dict[tuple[str, str], Any] | None = None) -> RunConfig:
    """Merge defaults, an optional INI file, and explicit flag values."""
    values = {sk: default for sk, (_, default, _) in SCHEMA.items()}
    provenance = {sk: "default" for sk in SCHEMA}
    if config_path is not None:
        parser = configparser.ConfigParser()
        try:
            with open(config_path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{config_path}: {exc}") from exc
        for sec in parser.sections():
            for key, raw in parser.items(sec):
                sk = (sec, key)
                if sk not in SCHEMA:
                    raise ConfigError(f"{config_path}: unknown option {sec}.{key}")
                values[sk] = _parse(raw, SCHEMA[sk][0], f"{config_path} [{sec}] {key}")
                provenance[sk] = "file"
    for sk, value in (flag_overrides or {}).items():
        if sk not in SCHEMA:
            raise ConfigError(f"unknown option {sk[0]}.{sk[1]}")
        values[sk] = value
        provenance[sk] = "flag"
    return RunConfig(values=values, provenance=provenance)


def schema_help() -> str:
    """One line per config key, for --help epilogs."""
    out = []
    for (sec, key), (typ, default, text) in SCHEMA.items():
        out.append(f"  {sec}.{key} ({typ.__name__}, default {_format(default)}): {text}")
    return "\n".join(out)
