"""Loading system presets from key-value (INI) files.

See ``data/presets.ini`` for the schema; values are plain decimals.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .models import CenterVectorField, SkewProductSystem


class PresetError(KeyError):
    pass


@dataclass(frozen=True)
class Preset:
    name: str
    system: SkewProductSystem
    field_unstable: float = 0.0
    field_stable: float = 0.0
    description: str = ""

    def field(self) -> CenterVectorField:
        if self.field_unstable == 0.0 and self.field_stable == 0.0:
            return CenterVectorField(self.system)
        return CenterVectorField.tilted(self.system, self.field_unstable, self.field_stable)


def _parse_phi(text: str):
    terms = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split()
        if len(parts) != 3:
            raise ValueError(f"bad phi term {chunk!r}; expected 'm1 m2 amp'")
        terms.append(((int(parts[0]), int(parts[1])), float(parts[2])))
    return terms


def parse_section(name: str, section) -> Preset:
    entries = [int(x) for x in section.get("matrix", "").split()]
    if len(entries) != 4:
        raise ValueError(f"preset {name!r}: matrix needs 4 integers")
    system = SkewProductSystem.create(
        [entries[:2], entries[2:]],
        _parse_phi(section.get("phi", "")),
        float(section.get("nonlinearity", "0")),
        name=name,
    )
    return Preset(
        name,
        system,
        float(section.get("field_unstable", "0")),
        float(section.get("field_stable", "0")),
        section.get("description", ""),
    )


def load_presets(path: str | Path | None = None) -> dict[str, Preset]:
    parser = configparser.ConfigParser()
    if path is None:
        text = resources.files("chainclose").joinpath("data/presets.ini").read_text()
        parser.read_string(text)
    else:
        with open(path) as fh:
            parser.read_file(fh)
    return {name: parse_section(name, parser[name]) for name in parser.sections()}


def get_preset(name: str, path: str | Path | None = None) -> Preset:
    presets = load_presets(path)
    try:
        return presets[name]
    except KeyError:
        raise PresetError(f"unknown preset {name!r}; available: {', '.join(sorted(presets))}") from None
