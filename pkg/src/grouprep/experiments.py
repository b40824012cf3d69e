"""Experiment drivers: length generalization, relational error, representation export.

Also the flat ``key = value`` config file reader used by the CLI.
"""

from __future__ import annotations

import csv
import typing
from dataclasses import fields
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from grouprep.data import gen_braid_dataset
from grouprep.matrixnet import (
    MatrixNetModel,
    _Model,
    block_diagonal,
    non_relational_difference,
    relational_error,
    represent_word,
)
from grouprep.train import TrainConfig, evaluate
from grouprep.words import Braid, parse_word
from grouprep.zigzag import BraidOracle

# -- config files -------------------------------------------------------------------

# dataset paths live next to the training fields in the same file
DATA_KEYS = ("train", "val", "test")


def _coerce(name: str, text: str, hint) -> object:
    args = typing.get_args(hint)
    if type(None) in args:
        if text.lower() in ("none", "null", ""):
            return None
        hint = next(a for a in args if a is not type(None))
    if typing.get_origin(hint) is tuple:
        return tuple(int(x) for x in text.replace(",", " ").split())
    if hint is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {text!r}")
    if hint is int:
        return int(text)
    if hint is float:
        return float(text)
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment.  Values are typed per TrainConfig."""
    hints = typing.get_type_hints(TrainConfig)
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.replace("-", "_")
        if key in DATA_KEYS:
            out[key] = value
        elif key in hints:
            try:
                out[key] = _coerce(key, value, hints[key])
            except ValueError as exc:
                raise ValueError(f"{source}:{lineno}: {exc}") from None
        else:
            raise ValueError(f"{source}:{lineno}: unknown key {key!r}")
    return out


def load_config_file(path: str | Path) -> dict:
    return parse_config_text(Path(path).read_text(), str(path))


def config_fields() -> list[str]:
    return [f.name for f in fields(TrainConfig)]


# -- length generalization --------------------------------------------------------

LENGTH_COLUMNS = ("length", "count", "loss", "accuracy", "avg_entry_accuracy")


def _length_sweep(model: _Model, lengths: Sequence[int], count: int, seed: int,
                  start_vertex: int, raw: bool) -> list[dict]:
    if not isinstance(model.family, Braid):
        raise ValueError(f"length experiments need a braid model, got {model.family.name}")
    oracle = BraidOracle(model.family.n, start_vertex)
    rows = []
    for k, L in enumerate(lengths):
        data = gen_braid_dataset("sample", L, model.family, count, start_vertex, seed + k, raw,
                                 oracle=oracle)
        m = evaluate(model, data, f"len{L}")
        rows.append({"length": L, "count": len(data), "loss": m.loss, "accuracy": m.accuracy,
                     "avg_entry_accuracy": m.avg_entry_accuracy})
    return rows


def write_rows(rows: Sequence[dict], path: str | Path, columns: Sequence[str]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns))
        w.writeheader()
        for r in rows:
            w.writerow({c: r.get(c) for c in columns})


def run_extrapolation(model: _Model, lengths: Sequence[int] = (8, 9, 10), count: int = 10_000,
                      seed: int = 0, start_vertex: int = 1, raw: bool = False,
                      csv_path: str | Path | None = None) -> list[dict]:
    """Metrics on sampled words of each length, one row per length."""
    rows = _length_sweep(model, lengths, count, seed, start_vertex, raw)
    if csv_path:
        write_rows(rows, csv_path, LENGTH_COLUMNS)
    return rows


def run_interpolation(model: _Model, length: int = 5, count: int = 10_000, seed: int = 0,
                      start_vertex: int = 1, raw: bool = False,
                      csv_path: str | Path | None = None) -> dict:
    """Same pipeline as extrapolation, on one length inside the training range."""
    return run_extrapolation(model, (length,), count, seed, start_vertex, raw, csv_path)[0]


def format_table(rows: Sequence[dict], columns: Sequence[str]) -> str:
    def cell(v):
        if v is None:
            return "-"
        return f"{v:.6g}" if isinstance(v, float) else str(v)

    body = [[cell(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(b, widths)) for b in body]
    return "\n".join(lines)


# -- relational error ---------------------------------------------------------------


def run_rel_error(model: MatrixNetModel) -> dict:
    rel = relational_error(model)
    non = non_relational_difference(model)
    return {
        "relational_error": rel,
        "non_relational_difference": non,
        "ratio": rel / non if non else float("inf"),
        "relational_error_per_channel": [float(x) for x in relational_error(model, per_channel=True)],
        "non_relational_difference_per_channel": [
            float(x) for x in non_relational_difference(model, per_channel=True)
        ],
    }


# -- representation export ------------------------------------------------------------

DEFAULT_PAIRS = (("s1 s2 s1", "s2 s1 s2"), ("s1 s2 s1 s1", "s2 s1 s2 s1"))


def _slug(text: str) -> str:
    return "_".join(text.replace("'", "i").split()) or "e"


def _heatmap(mats: Sequence[np.ndarray], scale: int, gap: int) -> Image.Image:
    """Grayscale tiles side by side, sharing one linear scale (min black, max white)."""
    lo = min(float(m.min()) for m in mats)
    hi = max(float(m.max()) for m in mats)
    span = hi - lo if hi > lo else 1.0
    tiles = []
    for m in mats:
        img = np.round((m - lo) / span * 255.0).astype(np.uint8)
        tiles.append(np.kron(img, np.ones((scale, scale), dtype=np.uint8)))
    h = max(t.shape[0] for t in tiles)
    sep = np.full((h, gap), 255, dtype=np.uint8)
    row = tiles[0]
    for t in tiles[1:]:
        row = np.hstack([row, sep, t])
    return Image.fromarray(row)


def export_representations(model: MatrixNetModel, out_dir: str | Path,
                           pairs: Sequence[tuple[str, str]] = DEFAULT_PAIRS,
                           words: Sequence[str] = (), scale: int = 16) -> list[dict]:
    """CSV matrix and grayscale PNG per word; each pair also gets a side-by-side PNG.

    Multi-channel models are exported as their block-diagonal assembly.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []

    def matrix(text: str) -> np.ndarray:
        mats = represent_word(model, parse_word(text, model.family))
        return mats[0] if mats.shape[0] == 1 else block_diagonal(mats)

    def single(text: str) -> np.ndarray:
        m = matrix(text)
        stem = _slug(text)
        np.savetxt(out / f"{stem}.csv", m, delimiter=",", fmt="%.17g")
        _heatmap([m], scale, 0).save(out / f"{stem}.png")
        records.append({"word": text, "csv": str(out / f"{stem}.csv"), "png": str(out / f"{stem}.png")})
        return m

    for a, b in pairs:
        ma, mb = single(a), single(b)
        name = f"pair_{_slug(a)}__{_slug(b)}.png"
        _heatmap([ma, mb], scale, scale).save(out / name)
        diff = float(np.linalg.norm(ma - mb))
        records.append({"pair": [a, b], "png": str(out / name), "frobenius_difference": diff,
                        "relative_difference": diff / float(np.linalg.norm(ma))})
    for w in words:
        single(w)
    return records


def read_matrix_csv(path: str | Path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))
