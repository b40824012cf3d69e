"""Dataset generation, splitting and JSONL serialisation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from itertools import product
from pathlib import Path
from typing import Iterable, Iterator, Sequence, Union

import numpy as np

from grouprep.perm import order_class_set, word_order
from grouprep.words import (
    Braid,
    Family,
    SignedGen,
    Word,
    alphabet,
    parse_family,
    sample_word,
)
from grouprep.zigzag import BraidOracle

Label = Union[int, tuple[int, ...]]


@dataclass(frozen=True)
class Sample:
    word: Word
    label: Label

    @property
    def task(self) -> str:
        return "classification" if isinstance(self.label, int) else "regression"


@dataclass
class DatasetManifest:
    family: str
    task: str
    params: dict
    count: int
    content_hash: str = ""
    split_fractions: list[float] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DatasetManifest":
        return cls(**json.loads(text))


# -- order task ------------------------------------------------------------------


def gen_order_dataset(family: Family | str, count: int, max_len: int, seed: int,
                      include_identity: bool = True) -> list[Sample]:
    """``count`` words of length ``max_len`` drawn uniformly over generators (plus identity).

    Labels are indices into ``order_class_set(family)``.  Duplicates are kept.
    """
    family = parse_family(family) if isinstance(family, str) else family
    classes = order_class_set(family)
    lookup = {o: k for k, o in enumerate(classes)}
    rng = np.random.default_rng(seed)
    allow_inv = not family.self_inverse
    out = []
    for _ in range(count):
        w = sample_word(family, max_len, include_identity, allow_inv, rng)
        out.append(Sample(w, lookup[word_order(w)]))
    return out


# -- braid task -------------------------------------------------------------------


def reduced_words(family: Family, length: int) -> Iterator[Word]:
    """Every freely reduced word of exactly ``length`` over generators and inverses."""
    syms = alphabet(family, include_identity=False, allow_inverses=True)

    def rec(prefix: list[SignedGen]):
        if len(prefix) == length:
            yield Word(family, tuple(prefix))
            return
        for s in syms:
            if prefix and prefix[-1] == s.inverse():
                continue
            prefix.append(s)
            yield from rec(prefix)
            prefix.pop()

    yield from rec([])


def raw_words(family: Family, length: int) -> Iterator[Word]:
    syms = alphabet(family, include_identity=False, allow_inverses=True)
    for combo in product(syms, repeat=length):
        yield Word(family, combo)


def sample_reduced_word(family: Family, length: int, rng: np.random.Generator) -> Word:
    syms = alphabet(family, include_identity=False, allow_inverses=True)
    out: list[SignedGen] = []
    while len(out) < length:
        s = syms[rng.integers(len(syms))]
        if out and out[-1] == s.inverse():
            continue
        out.append(s)
    return Word(family, tuple(out))


def gen_braid_dataset(
    mode: str,
    length: int,
    family: Family | str = "B3",
    count: int = 0,
    start_vertex: int = 1,
    seed: int = 0,
    raw: bool = False,
    rightmost_first: bool = True,
    oracle: BraidOracle | None = None,
) -> list[Sample]:
    """Jordan-Hoelder labels for braid words.

    ``mode="enumerate"`` lists every word of length ``0..length`` (freely
    reduced unless ``raw``), shortest first.  ``mode="sample"`` draws ``count``
    words of exactly ``length`` with replacement.
    """
    family = parse_family(family) if isinstance(family, str) else family
    if not isinstance(family, Braid):
        raise ValueError(f"{family.name} is not a braid family")
    oracle = oracle or BraidOracle(family.n, start_vertex, rightmost_first)
    if mode == "enumerate":
        gen = raw_words if raw else reduced_words
        words: Iterable[Word] = (w for L in range(length + 1) for w in gen(family, L))
    elif mode == "sample":
        rng = np.random.default_rng(seed)
        if raw:
            words = [sample_word(family, length, False, True, rng) for _ in range(count)]
        else:
            words = [sample_reduced_word(family, length, rng) for _ in range(count)]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return [Sample(w, oracle.label(w.to_ints())) for w in words]


# -- splits -----------------------------------------------------------------------


def split_dataset(samples: Sequence[Sample], fractions: Sequence[float], seed: int) -> tuple[list[Sample], ...]:
    """Seeded shuffle then contiguous split into ``len(fractions)`` parts."""
    fr = [float(f) for f in fractions]
    if not fr or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ValueError(f"split fractions {fractions} must be non-negative and sum to 1")
    order = np.random.default_rng(seed).permutation(len(samples))
    n = len(samples)
    bounds = [0]
    acc = 0.0
    for f in fr[:-1]:
        acc += f
        bounds.append(int(round(acc * n)))
    bounds.append(n)
    return tuple([samples[i] for i in order[a:b]] for a, b in zip(bounds[:-1], bounds[1:]))


# -- serialisation ----------------------------------------------------------------


class DatasetParseError(ValueError):
    pass


def _record(s: Sample) -> str:
    label = s.label if isinstance(s.label, int) else list(s.label)
    return json.dumps({"word": s.word.to_ints(), "label": label}, separators=(",", ":"))


def dumps_jsonl(samples: Iterable[Sample]) -> str:
    return "".join(_record(s) + "\n" for s in samples)


def write_jsonl(samples: Iterable[Sample], path: str | Path) -> str:
    """Write samples; returns the sha256 of the written bytes."""
    text = dumps_jsonl(samples)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)
    return hashlib.sha256(text.encode()).hexdigest()


def read_jsonl(path: str | Path, family: Family | str) -> list[Sample]:
    family = parse_family(family) if isinstance(family, str) else family
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                word = Word.from_ints(family, rec["word"])
                label = rec["label"]
                if isinstance(label, list):
                    label = tuple(int(x) for x in label)
                elif isinstance(label, int):
                    pass
                else:
                    raise TypeError(f"bad label {label!r}")
            except (ValueError, KeyError, TypeError) as exc:
                raise DatasetParseError(f"{path}:{lineno}: {exc}") from None
            out.append(Sample(word, label))
    return out


def manifest_path(path: str | Path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".manifest.json")


def write_dataset(samples: Sequence[Sample], path: str | Path, manifest: DatasetManifest) -> DatasetManifest:
    manifest.count = len(samples)
    manifest.content_hash = write_jsonl(samples, path)
    manifest_path(path).write_text(manifest.to_json())
    return manifest


def generate_from_manifest(m: DatasetManifest) -> list[Sample]:
    p = dict(m.params)
    if m.task == "classification":
        return gen_order_dataset(m.family, p["count"], p["max_len"], p["seed"],
                                 p.get("include_identity", True))
    return gen_braid_dataset(
        p["mode"], p["length"], m.family, p.get("count", 0), p.get("start_vertex", 1),
        p.get("seed", 0), p.get("raw", False), p.get("rightmost_first", True),
    )


def verify_manifest(m: DatasetManifest) -> bool:
    text = dumps_jsonl(generate_from_manifest(m))
    return hashlib.sha256(text.encode()).hexdigest() == m.content_hash
