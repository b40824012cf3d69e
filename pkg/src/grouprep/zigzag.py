"""Complexes of projectives over the zig-zag algebra and the braid action on them.

Conventions (fixed once; the property tests are what pin them down):

* A morphism ``P_a -> P_b`` is labelled by a path ``b -> a`` in the doubled
  quiver, so ``hom_basis(1, 2)`` is the single arrow ``2 -> 1``.  Composing
  morphisms ``g o f`` therefore composes their paths in the opposite order.
* A summand ``ProjSummand(i, k)`` sitting at homological position ``t`` is the
  graded module ``P_i<k>``.  A differential entry ``P_j<k> -> P_i<k'>`` from
  position ``t`` to ``t+1`` is a path of length ``k' - k``.  An entry is
  invertible exactly when it is a nonzero multiple of an idempotent, which
  needs equal vertex and equal internal shift.
* Collapsing the two gradings, ``P_i<k>`` at position ``t`` is ``P_i[k - t]``.
  With this choice the loop has total degree 2, ``sigma_i(P_i) = P_i[-1]``
  and ``sigma_i^{-1}(P_i) = P_i[1]``.
* ``twist(i, +1, X)`` is the cone of evaluation ``Hom(P_i, X) (x) P_i -> X``;
  ``twist(i, -1, X)`` is the cone of coevaluation ``X -> Hom(X, P_i)^* (x) P_i``
  shifted by ``[-1]``.
* A braid word acts rightmost symbol first.

All coefficients are ``fractions.Fraction``.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from grouprep.words import Braid, Word


class ComplexError(ValueError):
    """A complex violates d o d = 0 or a grading constraint."""


@dataclass(frozen=True, order=True)
class BasisPath:
    kind: str  # "idem", "arrow" or "loop"
    source: int
    target: int

    def __post_init__(self):
        if self.kind in ("idem", "loop"):
            ok = self.source == self.target
        elif self.kind == "arrow":
            ok = abs(self.source - self.target) == 1
        else:
            ok = False
        if not ok:
            raise ValueError(f"invalid path {self.kind} {self.source}->{self.target}")

    @property
    def degree(self) -> int:
        return {"idem": 0, "arrow": 1, "loop": 2}[self.kind]

    def __repr__(self):
        if self.kind == "arrow":
            return f"({self.target}|{self.source})"
        return f"{self.kind}({self.source})"


def Idem(i: int) -> BasisPath:
    return BasisPath("idem", i, i)


def Loop(i: int) -> BasisPath:
    return BasisPath("loop", i, i)


def Arrow(source: int, target: int) -> BasisPath:
    return BasisPath("arrow", source, target)


def hom_basis(i: int, j: int) -> list[tuple[BasisPath, int]]:
    """Basis of graded morphisms ``P_i -> P_j`` with their degrees."""
    if i == j:
        return [(Idem(i), 0), (Loop(i), 2)]
    if abs(i - j) == 1:
        return [(Arrow(j, i), 1)]
    return []


def compose_paths(p: BasisPath, q: BasisPath) -> dict[BasisPath, Fraction]:
    """Path ``p o q``: follow ``q`` then ``p``, reduced in the zig-zag algebra."""
    if q.target != p.source:
        return {}
    if p.kind == "idem":
        return {q: Fraction(1)}
    if q.kind == "idem":
        return {p: Fraction(1)}
    if p.kind == "arrow" and q.kind == "arrow" and p.target == q.source:
        # back-and-forth; all such loops at a vertex agree
        return {Loop(q.source): Fraction(1)}
    return {}


def compose_morphisms(g: BasisPath, f: BasisPath) -> dict[BasisPath, Fraction]:
    """Label of the morphism ``g o f`` (``f`` first)."""
    return compose_paths(f, g)


@dataclass(frozen=True, order=True)
class ProjSummand:
    vertex: int
    shift: int  # internal grading <shift>


@dataclass(frozen=True)
class MorEntry:
    coefficient: Fraction
    path: BasisPath


@dataclass(frozen=True)
class Complex:
    """Bounded complex of graded projective Z_n modules.

    ``diffs[t]`` maps ``(row, col)`` to the entry from ``terms[t][col]`` to
    ``terms[t + 1][row]``; missing keys are zero.
    """

    n: int
    terms: Mapping[int, tuple[ProjSummand, ...]]
    diffs: Mapping[int, Mapping[tuple[int, int], MorEntry]] = field(default_factory=dict)

    def __post_init__(self):
        terms = {t: tuple(v) for t, v in sorted(self.terms.items()) if v}
        diffs = {}
        for t, entries in self.diffs.items():
            kept = {rc: e for rc, e in entries.items() if e.coefficient != 0}
            if kept:
                diffs[t] = kept
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "diffs", diffs)
        self.validate()

    def validate(self) -> None:
        for t, summands in self.terms.items():
            for s in summands:
                if not 1 <= s.vertex <= self.n:
                    raise ComplexError(f"vertex {s.vertex} outside 1..{self.n}")
        for t, entries in self.diffs.items():
            src, tgt = self.terms.get(t, ()), self.terms.get(t + 1, ())
            for (r, c), e in entries.items():
                if r >= len(tgt) or c >= len(src):
                    raise ComplexError(f"entry {(r, c)} at position {t} out of range")
                a, b = src[c], tgt[r]
                # morphism P_a -> P_b is a path b -> a
                if (e.path.source, e.path.target) != (b.vertex, a.vertex):
                    raise ComplexError(f"entry {e} does not map {a} to {b}")
                if e.path.degree != b.shift - a.shift:
                    raise ComplexError(f"entry {e} has wrong degree for {a} -> {b}")
        if not d_squared_zero(self):
            raise ComplexError("d o d != 0")

    @property
    def support(self) -> tuple[int, int] | None:
        if not self.terms:
            return None
        return min(self.terms), max(self.terms)

    def summands(self) -> list[tuple[int, ProjSummand]]:
        return [(t, s) for t, ss in self.terms.items() for s in ss]

    def size(self) -> int:
        return sum(len(v) for v in self.terms.values())

    def shifted(self, k: int) -> "Complex":
        """``X[k]``: positions move down by ``k``, differentials change sign for odd k."""
        sign = -1 if k % 2 else 1
        return Complex(
            self.n,
            {t - k: v for t, v in self.terms.items()},
            {
                t - k: {rc: MorEntry(sign * e.coefficient, e.path) for rc, e in es.items()}
                for t, es in self.diffs.items()
            },
        )


def d_squared_zero(X: Complex) -> bool:
    for t, first in X.diffs.items():
        second = X.diffs.get(t + 1)
        if not second:
            continue
        acc: dict[tuple[int, int, BasisPath], Fraction] = {}
        by_mid: dict[int, list[tuple[int, MorEntry]]] = {}
        for (m, c), e in first.items():
            by_mid.setdefault(m, []).append((c, e))
        for (r, m), e2 in second.items():
            for c, e1 in by_mid.get(m, ()):
                for path, coef in compose_morphisms(e2.path, e1.path).items():
                    key = (r, c, path)
                    acc[key] = acc.get(key, Fraction(0)) + coef * e1.coefficient * e2.coefficient
        if any(v != 0 for v in acc.values()):
            return False
    return True


def projective_object(i: int, n: int) -> Complex:
    if not 1 <= i <= n:
        raise ValueError(f"vertex {i} outside 1..{n}")
    return Complex(n, {0: (ProjSummand(i, 0),)})


class _Builder:
    """Mutable summand/entry store used while assembling a complex."""

    def __init__(self, n: int):
        self.n = n
        self.terms: dict[int, list[ProjSummand]] = {}
        self.diffs: dict[int, dict[tuple[int, int], MorEntry]] = {}

    def add(self, t: int, s: ProjSummand) -> int:
        lst = self.terms.setdefault(t, [])
        lst.append(s)
        return len(lst) - 1

    def set(self, t: int, row: int, col: int, coef: Fraction, path: BasisPath) -> None:
        if coef == 0:
            return
        entries = self.diffs.setdefault(t, {})
        old = entries.get((row, col))
        if old is not None:
            if old.path != path:
                raise ComplexError("two paths in a one-dimensional hom space")
            coef = coef + old.coefficient
        entries[(row, col)] = MorEntry(coef, path)

    def build(self) -> Complex:
        return Complex(self.n, self.terms, self.diffs)


def _index_entries(X: Complex):
    """Entries grouped by source column: t -> col -> [(row, entry)]."""
    out: dict[int, dict[int, list[tuple[int, MorEntry]]]] = {}
    for t, es in X.diffs.items():
        for (r, c), e in es.items():
            out.setdefault(t, {}).setdefault(c, []).append((r, e))
    return out


def twist(i: int, sign: int, X: Complex) -> Complex:
    """Spherical twist in ``P_i`` (``sign=+1``) or its inverse (``sign=-1``)."""
    if not 1 <= i <= X.n:
        raise ValueError(f"vertex {i} outside 1..{X.n}")
    X.validate()
    if sign == 1:
        return _twist_ev(i, X)
    if sign == -1:
        return _twist_coev(i, X)
    raise ValueError("sign must be +1 or -1")


def _twist_ev(i: int, X: Complex) -> Complex:
    # A = Hom(P_i, X) (x) P_i; cone position t holds A_{t+1} then X_t
    b = _Builder(X.n)
    a_idx: dict[tuple[int, int, BasisPath], int] = {}
    x_idx: dict[tuple[int, int], int] = {}
    for t in sorted(X.terms):
        for c, s in enumerate(X.terms[t]):
            for p, deg in hom_basis(i, s.vertex):
                a_idx[(t, c, p)] = b.add(t - 1, ProjSummand(i, s.shift - deg))
    for t in sorted(X.terms):
        for c, s in enumerate(X.terms[t]):
            x_idx[(t, c)] = b.add(t, s)
    by_col = _index_entries(X)
    for (t, c, p), ai in a_idx.items():
        # ev: A-summand (t, c, p) -> X_t[c] via p, landing at cone position t
        b.set(t - 1, x_idx[(t, c)], ai, Fraction(1), p)
        # -d_A: post-compose with d_X
        for r, e in by_col.get(t, {}).get(c, ()):
            for q, coef in compose_morphisms(e.path, p).items():
                target = a_idx[(t + 1, r, q)]
                b.set(t - 1, target, ai, -coef * e.coefficient, Idem(i))
    for t, es in X.diffs.items():
        for (r, c), e in es.items():
            b.set(t, x_idx[(t + 1, r)], x_idx[(t, c)], e.coefficient, e.path)
    return b.build()


def _twist_coev(i: int, X: Complex) -> Complex:
    # B = Hom(X, P_i)^* (x) P_i; position t holds X_t then B_{t-1}
    b = _Builder(X.n)
    x_idx: dict[tuple[int, int], int] = {}
    b_idx: dict[tuple[int, int, BasisPath], int] = {}
    for t in sorted(X.terms):
        for c, s in enumerate(X.terms[t]):
            x_idx[(t, c)] = b.add(t, s)
    for t in sorted(X.terms):
        for c, s in enumerate(X.terms[t]):
            for q, deg in hom_basis(s.vertex, i):
                b_idx[(t, c, q)] = b.add(t + 1, ProjSummand(i, s.shift + deg))
    for t, es in X.diffs.items():
        for (r, c), e in es.items():
            b.set(t, x_idx[(t + 1, r)], x_idx[(t, c)], e.coefficient, e.path)
    for (t, c, q), bi in b_idx.items():
        b.set(t, bi, x_idx[(t, c)], Fraction(1), q)
    # -d_B is dual to pre-composition: q' o d = sum_q coef * q
    for t, es in X.diffs.items():
        for (r, c), e in es.items():
            for qp, _ in hom_basis(X.terms[t + 1][r].vertex, i):
                for q, coef in compose_morphisms(qp, e.path).items():
                    b.set(
                        t + 1,
                        b_idx[(t + 1, r, qp)],
                        b_idx[(t, c, q)],
                        -coef * e.coefficient,
                        Idem(i),
                    )
    return b.build()


def _is_pivot(e: MorEntry) -> bool:
    return e.path.kind == "idem" and e.coefficient != 0


def minimize(X: Complex) -> Complex:
    """Gaussian elimination of every invertible differential entry.

    Pivots are taken greedily in position order.  Eliminating ``phi: b -> c``
    removes both summands and replaces ``D`` by ``D - gamma phi^-1 delta``.
    """
    # summand ids -> (position, summand); sparse out/in adjacency keyed by ids
    info: dict[int, tuple[int, ProjSummand]] = {}
    ids_at: dict[int, list[int]] = {}
    nid = 0
    pos_id: dict[tuple[int, int], int] = {}
    for t in sorted(X.terms):
        for c, s in enumerate(X.terms[t]):
            info[nid] = (t, s)
            ids_at.setdefault(t, []).append(nid)
            pos_id[(t, c)] = nid
            nid += 1
    out: dict[int, dict[int, MorEntry]] = {k: {} for k in info}
    inn: dict[int, dict[int, MorEntry]] = {k: {} for k in info}
    for t, es in X.diffs.items():
        for (r, c), e in es.items():
            src, tgt = pos_id[(t, c)], pos_id[(t + 1, r)]
            out[src][tgt] = e
            inn[tgt][src] = e

    def find_pivot():
        for t in sorted(ids_at):
            for src in ids_at[t]:
                for tgt, e in sorted(out[src].items()):
                    if _is_pivot(e):
                        return src, tgt, e
        return None

    while True:
        piv = find_pivot()
        if piv is None:
            break
        bsrc, ctgt, phi = piv
        inv = 1 / phi.coefficient
        deltas = [(x, e) for x, e in inn[ctgt].items() if x != bsrc]
        gammas = [(y, e) for y, e in out[bsrc].items() if y != ctgt]
        for x, delta in deltas:
            for y, gamma in gammas:
                for path, coef in compose_morphisms(gamma.path, delta.path).items():
                    upd = -coef * gamma.coefficient * inv * delta.coefficient
                    old = out[x].get(y)
                    if old is not None:
                        if old.path != path:
                            raise ComplexError("two paths in a one-dimensional hom space")
                        upd += old.coefficient
                    if upd == 0:
                        out[x].pop(y, None)
                        inn[y].pop(x, None)
                    else:
                        e = MorEntry(upd, path)
                        out[x][y] = e
                        inn[y][x] = e
        for k in (bsrc, ctgt):
            for y in out[k]:
                inn[y].pop(k, None)
            for x in inn[k]:
                out[x].pop(k, None)
            t, _ = info.pop(k)
            ids_at[t].remove(k)
            del out[k], inn[k]

    b = _Builder(X.n)
    new_index: dict[int, tuple[int, int]] = {}
    for t in sorted(ids_at):
        for k in ids_at[t]:
            new_index[k] = (t, b.add(t, info[k][1]))
    for src, targets in out.items():
        t, c = new_index[src]
        for tgt, e in targets.items():
            _, r = new_index[tgt]
            b.set(t, r, c, e.coefficient, e.path)
    return b.build()


def is_minimal(X: Complex) -> bool:
    return not any(_is_pivot(e) for es in X.diffs.values() for e in es.values())


def jh_multiplicities(X: Complex) -> tuple[int, ...]:
    """Number of summands of each ``P_i`` in the minimal complex."""
    if not is_minimal(X):
        X = minimize(X)
    counts = [0] * X.n
    for _, s in X.summands():
        counts[s.vertex - 1] += 1
    return tuple(counts)


def graded_multiplicities(X: Complex) -> list[dict[int, int]]:
    """Per vertex, a Laurent polynomial ``{d: multiplicity of P_i[d]}``."""
    if not is_minimal(X):
        X = minimize(X)
    polys: list[Counter] = [Counter() for _ in range(X.n)]
    for t, s in X.summands():
        polys[s.vertex - 1][s.shift - t] += 1
    return [dict(sorted(p.items())) for p in polys]


def summand_multiset(X: Complex) -> list[tuple[int, int, int]]:
    """Sorted ``(position, vertex, shift)`` triples; an isomorphism invariant of minimal complexes."""
    return sorted((t, s.vertex, s.shift) for t, s in X.summands())


def braid_strands(w: Word) -> int:
    if not isinstance(w.family, Braid):
        raise ValueError(f"{w.family.name} is not a braid family")
    return w.family.n


def act(w: Word | Sequence[int], X: Complex, rightmost_first: bool = True) -> Complex:
    """Apply a braid word to ``X``, minimizing after every twist."""
    syms = w.to_ints() if isinstance(w, Word) else list(w)
    order = reversed(syms) if rightmost_first else iter(syms)
    for k in order:
        if k == 0:
            continue
        X = minimize(twist(abs(k), 1 if k > 0 else -1, X))
    return X


def apply_braid_word(w: Word, start_vertex: int = 1, rightmost_first: bool = True) -> tuple[int, ...]:
    n = braid_strands(w)
    X = act(w, projective_object(start_vertex, n), rightmost_first)
    return jh_multiplicities(X)


class BraidOracle:
    """Memoised labels for many words with shared suffixes.

    Twists are applied rightmost first, so words sharing a suffix share every
    intermediate complex; the cache is keyed by that suffix.
    """

    def __init__(self, n: int, start_vertex: int = 1, rightmost_first: bool = True, max_cache: int = 200_000):
        self.n = n
        self.start_vertex = start_vertex
        self.rightmost_first = rightmost_first
        self.max_cache = max_cache
        self._cache: dict[tuple[int, ...], Complex] = {(): projective_object(start_vertex, n)}

    def complex(self, ints: Iterable[int]) -> Complex:
        syms = tuple(k for k in ints if k != 0)
        if not self.rightmost_first:
            syms = tuple(reversed(syms))
        # key is the sequence of twists in application order
        key = tuple(reversed(syms))
        depth = len(key)
        while key[:depth] not in self._cache:
            depth -= 1
        X = self._cache[key[:depth]]
        for d in range(depth, len(key)):
            k = key[d]
            X = minimize(twist(abs(k), 1 if k > 0 else -1, X))
            if len(self._cache) < self.max_cache:
                self._cache[key[: d + 1]] = X
        return X

    def label(self, w: Word | Iterable[int]) -> tuple[int, ...]:
        ints = w.to_ints() if isinstance(w, Word) else w
        return jh_multiplicities(self.complex(ints))

    def graded(self, w: Word | Iterable[int]) -> list[dict[int, int]]:
        ints = w.to_ints() if isinstance(w, Word) else w
        return graded_multiplicities(self.complex(ints))
