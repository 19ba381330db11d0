from __future__ import annotations

import csv
import json
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def _default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Fraction):
        return str(o)
    if isinstance(o, Path):
        return str(o)
    if isinstance(o, (set, tuple)):
        return list(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, default=_default, sort_keys=False)


def write_json(path: Path, payload: dict, config: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps({"config": config, **payload}) + "\n")
    return path


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence], config: dict) -> Path:
    """CSV with the resolved config as leading '# config:' comment lines."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        for line in json.dumps(config, default=_default, sort_keys=True).splitlines():
            fh.write(f"# config: {line}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def read_csv(path: Path) -> tuple[dict, list[str], list[list[str]]]:
    config_lines, body = [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("# config: "):
            config_lines.append(line[len("# config: "):])
        else:
            body.append(line)
    rows = list(csv.reader(body))
    return json.loads("\n".join(config_lines)) if config_lines else {}, rows[0], rows[1:]
