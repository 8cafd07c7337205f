"""Model configuration files and CSV output.

A model file is JSON (``.json``) or TOML (``.toml``) with keys

* ``states``: list of labels (optional when ``rates`` is dense)
* ``rates``: row-major dense matrix, or
* ``triplets``: list of ``[i, j, rate]`` off-diagonal entries (zero-based);
  the diagonal is filled so rows sum to zero
* ``utility``: list of ``U(x^i)``

Dense ``rates`` with ``fill_diagonal = true`` also get their diagonal filled.
"""

from __future__ import annotations

import csv
import json
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigParse
from .markov import GeneratorMatrix, validate_generator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

FLOAT_FMT = "%.17g"
DATA_DIR = Path(__file__).parent / "data"
EXAMPLES = {
    "two-state": DATA_DIR / "two_state.json",
    "one-way-cycle": DATA_DIR / "one_way_cycle.toml",
    "asymmetric-two-state": DATA_DIR / "asymmetric_two_state.json",
}


@dataclass(frozen=True)
class Model:
    generator: GeneratorMatrix
    util: np.ndarray
    source: str = ""


def _parse_text(text: str, fmt: str) -> dict:
    if fmt == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigParse(exc.lineno, exc.msg) from None
    else:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            line = getattr(exc, "lineno", None)
            if line is None:
                m = re.search(r"line (\d+)", str(exc))
                line = int(m.group(1)) if m else None
            raise ConfigParse(line, str(exc)) from None
    if not isinstance(data, dict):
        raise ConfigParse(None, "top level must be a table/object")
    return data


def model_from_dict(data: dict, source: str = "") -> Model:
    states = data.get("states")
    util = data.get("utility")
    if util is None:
        raise ConfigParse(None, "missing 'utility'")
    try:
        util = np.asarray(util, dtype=float)
    except (TypeError, ValueError):
        raise ConfigParse(None, "'utility' must be a list of numbers") from None
    d = util.size
    if states is not None and len(states) != d:
        raise ConfigParse(None, f"{len(states)} states but {d} utility values")

    if "triplets" in data:
        R = np.zeros((d, d))
        for k, entry in enumerate(data["triplets"]):
            try:
                i, j, rate = int(entry[0]), int(entry[1]), float(entry[2])
            except (TypeError, ValueError, IndexError):
                raise ConfigParse(None, f"triplet {k} is not [i, j, rate]") from None
            if not (0 <= i < d and 0 <= j < d) or i == j:
                raise ConfigParse(None, f"triplet {k} has bad indices ({i}, {j})")
            R[i, j] += rate
        np.fill_diagonal(R, -R.sum(axis=1))
    elif "rates" in data:
        try:
            R = np.asarray(data["rates"], dtype=float)
        except (TypeError, ValueError):
            raise ConfigParse(None, "'rates' must be a numeric matrix") from None
        if R.shape != (d, d):
            raise ConfigParse(None, f"'rates' has shape {R.shape}, expected {(d, d)}")
        if data.get("fill_diagonal", False):
            np.fill_diagonal(R, 0.0)
            np.fill_diagonal(R, -R.sum(axis=1))
    else:
        raise ConfigParse(None, "need 'rates' or 'triplets'")

    labels = [str(s) for s in states] if states is not None else None
    return Model(validate_generator(R, labels), util, source)


def load_model(path) -> Model:
    path = Path(path)
    if not path.exists():
        raise ConfigParse(None, f"no such file: {path}")
    fmt = "toml" if path.suffix.lower() == ".toml" else "json"
    return model_from_dict(_parse_text(path.read_text(), fmt), str(path))


def load_example(name: str) -> Model:
    if name not in EXAMPLES:
        raise ConfigParse(None, f"unknown example {name!r}; choose from {sorted(EXAMPLES)}")
    return load_model(EXAMPLES[name])


def _fmt(x) -> str:
    if isinstance(x, (str, bytes)):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(x).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FLOAT_FMT % float(x)


def write_csv(path, header, rows) -> None:
    """Write rows with a one-line header; floats use 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def read_numeric_csv(path) -> tuple[list[str], np.ndarray]:
    header, rows = read_csv(path)
    return header, np.array([[float(x) for x in r] for r in rows]).reshape(len(rows), len(header))
