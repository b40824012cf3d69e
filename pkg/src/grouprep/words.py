"""Group presentations, words over signed generators, and encodings.

A word is a sequence of ``SignedGen(index, sign)`` symbols.  Index 0 is the
identity generator; indices ``1..n`` are the presentation's generators.  The
compact integer form used on disk and in model batches maps ``SignedGen(i, s)``
to ``s * i`` (so ``0`` is the identity and ``-2`` is the inverse of the
second generator).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np


class InvalidWordError(ValueError):
    """A word refers to a generator its presentation does not have."""


class SignedGen(NamedTuple):
    index: int
    sign: int = 1

    @classmethod
    def from_int(cls, k: int) -> "SignedGen":
        k = int(k)
        return cls(abs(k), -1 if k < 0 else 1)

    def to_int(self) -> int:
        return self.sign * self.index

    def inverse(self) -> "SignedGen":
        if self.index == 0:
            return self
        return SignedGen(self.index, -self.sign)


IDENTITY = SignedGen(0, 1)


# -- families ---------------------------------------------------------------


@dataclass(frozen=True)
class Symmetric:
    n: int

    @property
    def num_generators(self) -> int:
        return self.n - 1

    @property
    def self_inverse(self) -> bool:
        return True

    @property
    def name(self) -> str:
        return f"S{self.n}"


@dataclass(frozen=True)
class Braid:
    n: int

    @property
    def num_generators(self) -> int:
        return self.n - 1

    @property
    def self_inverse(self) -> bool:
        return False

    @property
    def name(self) -> str:
        return f"B{self.n}"


@dataclass(frozen=True)
class CyclicProduct:
    orders: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "orders", tuple(int(m) for m in self.orders))
        if not self.orders or any(m < 1 for m in self.orders):
            raise ValueError(f"bad cyclic orders {self.orders}")

    @property
    def num_generators(self) -> int:
        return len(self.orders)

    @property
    def self_inverse(self) -> bool:
        return all(m <= 2 for m in self.orders)

    @property
    def name(self) -> str:
        return "C" + "x".join(str(m) for m in self.orders)


@dataclass(frozen=True)
class DirectPower:
    base: "Family"
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("direct power exponent must be positive")
        if isinstance(self.base, DirectPower):
            raise ValueError("nested direct powers are not supported")

    @property
    def num_generators(self) -> int:
        return self.base.num_generators * self.k

    @property
    def self_inverse(self) -> bool:
        return self.base.self_inverse

    @property
    def name(self) -> str:
        return f"{self.base.name}^{self.k}"

    def factor_of(self, index: int) -> tuple[int, int]:
        """Map a global generator index to (factor, local index)."""
        m = self.base.num_generators
        return (index - 1) // m, (index - 1) % m + 1


Family = Union[Symmetric, Braid, CyclicProduct, DirectPower]

_FAMILY_RE = re.compile(r"^(?:S(\d+)\^(\d+)|S(\d+)|B(\d+)|C(\d+(?:x\d+)*))$")


def parse_family(text: str) -> Family:
    """Parse ``S10``, ``B3``, ``C11x12x13``, or ``S5^4``."""
    m = _FAMILY_RE.match(text.strip())
    if m is None:
        raise ValueError(f"unrecognised family {text!r}")
    if m.group(1):
        return DirectPower(Symmetric(int(m.group(1))), int(m.group(2)))
    if m.group(3):
        n = int(m.group(3))
        if n < 2:
            raise ValueError("symmetric family needs n >= 2")
        return Symmetric(n)
    if m.group(4):
        n = int(m.group(4))
        if n < 2:
            raise ValueError("braid family needs n >= 2")
        return Braid(n)
    return CyclicProduct(tuple(int(x) for x in m.group(5).split("x")))


# -- words ------------------------------------------------------------------


@dataclass(frozen=True)
class Word:
    """An element of the free group on a family's generators."""

    family: Family
    symbols: tuple[SignedGen, ...] = ()

    def __post_init__(self):
        syms = tuple(s if isinstance(s, SignedGen) else SignedGen(*s) for s in self.symbols)
        n = self.family.num_generators
        for s in syms:
            if s.sign not in (1, -1):
                raise InvalidWordError(f"bad sign in {s}")
            if not 0 <= s.index <= n:
                raise InvalidWordError(
                    f"generator index {s.index} out of range for {self.family.name}"
                )
            if s.index == 0 and s.sign != 1:
                raise InvalidWordError("the identity generator carries no sign")
        object.__setattr__(self, "symbols", syms)

    @classmethod
    def from_ints(cls, family: Family, ints: Iterable[int]) -> "Word":
        return cls(family, tuple(SignedGen.from_int(k) for k in ints))

    def to_ints(self) -> list[int]:
        return [s.to_int() for s in self.symbols]

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self):
        return iter(self.symbols)

    def __mul__(self, other: "Word") -> "Word":
        if other.family != self.family:
            raise ValueError("cannot multiply words over different presentations")
        return Word(self.family, self.symbols + other.symbols)

    def inverse(self) -> "Word":
        return Word(self.family, tuple(s.inverse() for s in reversed(self.symbols)))

    def __str__(self) -> str:
        return format_word(self)


def parse_word(text: str, family: Family) -> Word:
    """Parse ``"s1 s2' e s1"``; an empty string is the identity word."""
    syms = []
    for tok in text.split():
        if tok == "e":
            syms.append(IDENTITY)
            continue
        m = re.fullmatch(r"s(\d+)('?)", tok)
        if m is None:
            raise InvalidWordError(f"cannot parse token {tok!r}")
        syms.append(SignedGen(int(m.group(1)), -1 if m.group(2) else 1))
    return Word(family, tuple(syms))


def format_word(w: Word) -> str:
    out = []
    for s in w.symbols:
        if s.index == 0:
            out.append("e")
        else:
            out.append(f"s{s.index}" + ("'" if s.sign < 0 else ""))
    return " ".join(out)


def signed_one_hot(w: Word) -> np.ndarray:
    """Encode ``w`` as an (len(w), n) matrix with rows ``sign * e_index``.

    The identity generator is the zero row.  Families whose generators are
    their own inverses always encode with sign +1.
    """
    n = w.family.num_generators
    out = np.zeros((len(w), n))
    self_inv = w.family.self_inverse
    for row, s in enumerate(w.symbols):
        if s.index:
            out[row, s.index - 1] = 1.0 if self_inv else float(s.sign)
    return out


def free_reduce(w: Word) -> Word:
    stack: list[SignedGen] = []
    for s in w.symbols:
        if s.index == 0:
            continue
        if stack and stack[-1].index == s.index and stack[-1].sign == -s.sign:
            stack.pop()
        else:
            stack.append(s)
    return Word(w.family, tuple(stack))


def _w(family: Family, *ints: int) -> Word:
    return Word.from_ints(family, ints)


def _base_relations(family: Family, offset: int = 0) -> list[list[int]]:
    """Relations as signed-int lists, with generator indices shifted by offset."""
    rels: list[list[int]] = []
    if isinstance(family, (Braid, Symmetric)):
        m = family.num_generators
        sym = isinstance(family, Symmetric)
        if sym:
            for i in range(1, m + 1):
                rels.append([i, i])
        for i in range(1, m):
            j = i + 1
            if sym:
                rels.append([i, j, i, j, i, j])
            else:
                rels.append([i, j, i, -j, -i, -j])
        for i, j in combinations(range(1, m + 1), 2):
            if j - i >= 2:
                rels.append([i, j, i, j] if sym else [i, j, -i, -j])
    elif isinstance(family, CyclicProduct):
        for i, order in enumerate(family.orders, start=1):
            rels.append([i] * order)
        for i, j in combinations(range(1, len(family.orders) + 1), 2):
            rels.append([i, j, -i, -j])
    else:
        raise NotImplementedError(f"no relations for {family!r}")
    return [[(abs(k) + offset) * (1 if k > 0 else -1) for k in r] for r in rels]


def standard_relations(family: Family) -> list[Word]:
    """Defining relations, each written as a single word equal to the identity."""
    if isinstance(family, DirectPower):
        m = family.base.num_generators
        rels = []
        for f in range(family.k):
            rels.extend(_base_relations(family.base, offset=f * m))
        # generators of different factors commute
        for f, g in combinations(range(family.k), 2):
            for a in range(1, m + 1):
                for b in range(1, m + 1):
                    x, y = f * m + a, g * m + b
                    if family.self_inverse:
                        rels.append([x, y, x, y])
                    else:
                        rels.append([x, y, -x, -y])
        return [Word.from_ints(family, r) for r in rels]
    return [Word.from_ints(family, r) for r in _base_relations(family)]


def mirror(w: Word) -> Word:
    """Flip every generator's sign (the word's image under g -> g^-1)."""
    return Word(w.family, tuple(s.inverse() for s in w.symbols))


def alphabet(family: Family, include_identity: bool, allow_inverses: bool) -> list[SignedGen]:
    syms = [IDENTITY] if include_identity else []
    syms += [SignedGen(i, 1) for i in range(1, family.num_generators + 1)]
    if allow_inverses and not family.self_inverse:
        syms += [SignedGen(i, -1) for i in range(1, family.num_generators + 1)]
    return syms


def sample_word(
    family: Family | int,
    length: int,
    include_identity: bool = False,
    allow_inverses: bool = True,
    rng_seed: int | np.random.Generator | None = None,
) -> Word:
    """Draw ``length`` symbols i.i.d. uniformly from the permitted alphabet.

    ``family`` may be an int ``n``, meaning the free group on n generators
    (represented as the braid family on n+1 strands).
    """
    if length < 0:
        raise ValueError("length must be non-negative")
    if isinstance(family, int):
        family = Braid(family + 1)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    syms = alphabet(family, include_identity, allow_inverses)
    picks = rng.integers(0, len(syms), size=length)
    return Word(family, tuple(syms[k] for k in picks))


@dataclass(frozen=True)
class GroupPresentation:
    name: str
    num_generators: int
    relations: tuple[Word, ...]
    family: Family
    self_inverse_generators: bool = field(default=False)

    @classmethod
    def from_family(cls, family: Family | str) -> "GroupPresentation":
        if isinstance(family, str):
            family = parse_family(family)
        return cls(
            name=family.name,
            num_generators=family.num_generators,
            relations=tuple(standard_relations(family)),
            family=family,
            self_inverse_generators=family.self_inverse,
        )

    def word(self, ints: Sequence[int]) -> Word:
        return Word.from_ints(self.family, ints)
