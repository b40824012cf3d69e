"""Exact element orders for symmetric groups, cyclic products and direct powers."""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from itertools import product
from math import gcd, lcm
from typing import Union

from grouprep.words import (
    CyclicProduct,
    DirectPower,
    Family,
    InvalidWordError,
    Symmetric,
    Word,
)


@dataclass(frozen=True)
class Permutation:
    """``images[i]`` is the image of point ``i``."""

    images: tuple[int, ...]

    def __post_init__(self):
        imgs = tuple(int(x) for x in self.images)
        if sorted(imgs) != list(range(len(imgs))):
            raise ValueError(f"{imgs} is not a permutation")
        object.__setattr__(self, "images", imgs)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @property
    def n(self) -> int:
        return len(self.images)

    def then(self, other: "Permutation") -> "Permutation":
        """Apply ``self`` first, then ``other``."""
        return Permutation(tuple(other.images[x] for x in self.images))

    def is_identity(self) -> bool:
        return all(i == x for i, x in enumerate(self.images))

    def matrix(self):
        import numpy as np

        m = np.zeros((self.n, self.n))
        m[list(self.images), list(range(self.n))] = 1.0
        return m


@dataclass(frozen=True)
class ProductElement:
    """One component per factor: a Permutation or a residue mod the factor's order."""

    components: tuple[Union[Permutation, int], ...]
    moduli: tuple[int | None, ...]

    def __post_init__(self):
        if len(self.components) != len(self.moduli):
            raise ValueError("component/modulus count mismatch")
        for c, m in zip(self.components, self.moduli):
            if m is None and not isinstance(c, Permutation):
                raise ValueError("symmetric factor needs a Permutation component")
            if m is not None and not (isinstance(c, int) and 0 <= c < m):
                raise ValueError(f"residue {c!r} not reduced mod {m}")


def _transposition_word(w: Word, n: int, offset: int = 0, span: int | None = None) -> Permutation:
    """Product of the adjacent transpositions of ``w`` as maps, ``t1 o t2 o ...``.

    Only generators ``offset+1 .. offset+span`` are read; the rest are ignored,
    which is how direct-power factors are split out.
    """
    span = n - 1 if span is None else span
    pts = list(range(n))
    for s in w.symbols:
        if s.index == 0 or not offset < s.index <= offset + span:
            continue
        i = s.index - offset
        if i >= n:
            raise InvalidWordError(f"generator s{s.index} does not act on {n} points")
        # right-multiplying by (i-1 i) swaps those two positions
        pts[i - 1], pts[i] = pts[i], pts[i - 1]
    return Permutation(tuple(pts))


def word_to_perm(w: Word, n: int) -> Permutation:
    """Permutation of ``{0..n-1}`` denoted by a word of adjacent transpositions.

    ``s_i`` swaps points ``i-1`` and ``i``.  The word multiplies out like the
    permutation matrices do, so ``(s1, s2)`` is ``s1 o s2`` and sends
    0 -> 1 -> 2 -> 0.
    """
    for s in w.symbols:
        if s.index >= n:
            raise InvalidWordError(f"generator s{s.index} does not act on {n} points")
    return _transposition_word(w, n)


def cycle_type(p: Permutation) -> list[int]:
    """Cycle lengths in decreasing order, fixed points included."""
    seen = [False] * p.n
    lengths = []
    for start in range(p.n):
        if seen[start]:
            continue
        k, x = 0, start
        while not seen[x]:
            seen[x] = True
            x = p.images[x]
            k += 1
        lengths.append(k)
    return sorted(lengths, reverse=True)


def element_order(e: Union[Permutation, ProductElement]) -> int:
    if isinstance(e, Permutation):
        return reduce(lcm, cycle_type(e), 1)
    orders = []
    for c, m in zip(e.components, e.moduli):
        orders.append(element_order(c) if m is None else m // gcd(c, m))
    return reduce(lcm, orders, 1)


def word_to_element(w: Word) -> Union[Permutation, ProductElement]:
    """Evaluate a word in its finite group."""
    fam = w.family
    if isinstance(fam, Symmetric):
        return word_to_perm(w, fam.n)
    if isinstance(fam, CyclicProduct):
        res = [0] * len(fam.orders)
        for s in w.symbols:
            if s.index:
                res[s.index - 1] += s.sign
        return ProductElement(
            tuple(r % m for r, m in zip(res, fam.orders)), tuple(fam.orders)
        )
    if isinstance(fam, DirectPower) and isinstance(fam.base, Symmetric):
        m = fam.base.num_generators
        comps = tuple(
            _transposition_word(w, fam.base.n, offset=f * m, span=m) for f in range(fam.k)
        )
        return ProductElement(comps, (None,) * fam.k)
    if isinstance(fam, DirectPower) and isinstance(fam.base, CyclicProduct):
        m = fam.base.num_generators
        comps, mods = [], []
        for f in range(fam.k):
            res = [0] * m
            for s in w.symbols:
                if s.index and f * m < s.index <= (f + 1) * m:
                    res[s.index - f * m - 1] += s.sign
            comps += [r % o for r, o in zip(res, fam.base.orders)]
            mods += list(fam.base.orders)
        return ProductElement(tuple(comps), tuple(mods))
    raise NotImplementedError(f"no order oracle for {fam.name}")


def word_order(w: Word) -> int:
    return element_order(word_to_element(w))


def partitions(n: int, largest: int | None = None):
    """Integer partitions of ``n`` as non-increasing tuples."""
    largest = n if largest is None else largest
    if n == 0:
        yield ()
        return
    for k in range(min(n, largest), 0, -1):
        for rest in partitions(n - k, k):
            yield (k,) + rest


def _order_set(family: Family) -> set[int]:
    if isinstance(family, Symmetric):
        return {reduce(lcm, p, 1) for p in partitions(family.n)}
    if isinstance(family, CyclicProduct):
        per_factor = [[m // gcd(a, m) for a in range(m)] for m in family.orders]
        return {reduce(lcm, combo, 1) for combo in product(*(set(f) for f in per_factor))}
    if isinstance(family, DirectPower):
        base = sorted(_order_set(family.base))
        return {reduce(lcm, combo, 1) for combo in product(base, repeat=family.k)}
    raise NotImplementedError(f"no order classes for {family.name}")


def order_class_set(family: Family) -> list[int]:
    """Sorted list of every element order the group attains."""
    return sorted(_order_set(family))


def order_class(w: Word, classes: list[int] | None = None) -> int:
    """Index of ``w``'s order in ``order_class_set``."""
    classes = order_class_set(w.family) if classes is None else classes
    return classes.index(word_order(w))


def group_order(family: Family) -> int:
    from math import factorial, prod

    if isinstance(family, Symmetric):
        return factorial(family.n)
    if isinstance(family, CyclicProduct):
        return prod(family.orders)
    if isinstance(family, DirectPower):
        return group_order(family.base) ** family.k
    raise NotImplementedError(family.name)
