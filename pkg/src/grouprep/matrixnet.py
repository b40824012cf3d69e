"""MatrixNet and the two in-scope baselines.

Every model maps a batch of words to a ``(batch, out_dim)`` output through
``encode`` (words -> numpy batch) and ``forward_encoded`` (batch -> DiffMatrix).

MatrixNet builds one matrix per alphabet symbol (identity, generators,
inverses), multiplies the symbols of each word in order, flattens the
product and feeds it to an MLP head.  The symbol matrices are
``exp(reshape(a(v)))`` where ``v`` is the signed one-hot vector and ``a`` is
linear (Base, LN, MC) or linear-odd-linear (NL), so the identity maps to
``I`` and ``g^-1`` maps to ``exp(-A_g)``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from grouprep import autodiff as ad
from grouprep.autodiff import DiffMatrix
from grouprep.perm import word_to_element, Permutation
from grouprep.words import (
    Braid,
    DirectPower,
    Family,
    SignedGen,
    Symmetric,
    Word,
    mirror,
    parse_family,
    parse_word,
    standard_relations,
)

VARIANTS = ("base", "LN", "NL", "MC")
ODD_ACTIVATIONS = ("tanh", "linear")


@dataclass
class MatrixBlockConfig:
    variant: str = "NL"
    matrix_dim: int = 10
    channels: int = 1
    hidden_dim: int = 128
    activation: str = "tanh"

    def validate(self, family: Family) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.matrix_dim < 1 or self.channels < 1 or self.hidden_dim < 1:
            raise ValueError("dimensions must be positive")
        if self.variant == "MC" and self.channels < 2:
            raise ValueError("MC needs at least two channels")
        if self.variant != "MC" and self.channels != 1:
            raise ValueError(f"{self.variant} is single-channel")
        if self.variant == "NL" and not family.self_inverse and self.activation not in ODD_ACTIVATIONS:
            raise ValueError(
                f"{self.activation} is not odd; {family.name} has distinct inverses"
            )


def default_block_config(family: Family, variant: str) -> MatrixBlockConfig:
    """Block hyperparameters used in the experiments for each family."""
    if isinstance(family, Braid):
        return {
            "base": MatrixBlockConfig("base", 14),
            "LN": MatrixBlockConfig("LN", 10, hidden_dim=128, activation="linear"),
            "MC": MatrixBlockConfig("MC", 8, channels=3),
            "NL": MatrixBlockConfig("NL", 10, hidden_dim=128, activation="tanh"),
        }[variant]
    if isinstance(family, Symmetric):
        rep = family.n
    elif isinstance(family, DirectPower) and isinstance(family.base, Symmetric):
        rep = family.base.n * family.k
    else:
        rep = 10
    act = "silu" if family.self_inverse else "tanh"
    return {
        "base": MatrixBlockConfig("base", rep),
        "LN": MatrixBlockConfig("LN", rep, hidden_dim=256, activation="linear"),
        "MC": MatrixBlockConfig("MC", 2, channels=5),
        "NL": MatrixBlockConfig("NL", rep, hidden_dim=256, activation=act),
    }[variant]


def default_head(family: Family) -> tuple[tuple[int, ...], str]:
    if isinstance(family, Braid):
        return (128, 128), "relu"
    return (256, 256), "silu"


# -- small MLP helper --------------------------------------------------------


def _init_mlp(rng, sizes: Sequence[int], prefix: str) -> dict[str, DiffMatrix]:
    params = {}
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        params[f"{prefix}{k}.W"] = ad.parameter(ad.glorot_uniform(rng, b, a))
        params[f"{prefix}{k}.b"] = ad.parameter(np.zeros(b))
    return params


def _mlp(params, x: DiffMatrix, prefix: str, depth: int, act: str) -> DiffMatrix:
    for k in range(depth):
        x = ad.add(ad.matmul(x, ad.transpose(params[f"{prefix}{k}.W"])), params[f"{prefix}{k}.b"])
        if k < depth - 1:
            x = ad.activation(x, act)
    return x


class _Model:
    kind: str
    family: Family
    task: str
    out_dim: int
    params: dict[str, DiffMatrix]

    def num_parameters(self) -> int:
        return int(sum(p.value.size for p in self.params.values()))

    def forward_words(self, words: Sequence[Word]) -> np.ndarray:
        return self.forward_encoded(self.encode(words)).value

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        if set(values) != set(self.params):
            raise ValueError(f"parameter names differ: {sorted(set(values) ^ set(self.params))}")
        for k, v in values.items():
            if v.shape != self.params[k].shape:
                raise ValueError(f"{k}: shape {v.shape} != {self.params[k].shape}")
            self.params[k].value = np.array(v, dtype=np.float64)


# -- MatrixNet ---------------------------------------------------------------


class MatrixNetModel(_Model):
    kind = "matrixnet"

    def __init__(
        self,
        family: Family | str,
        block: MatrixBlockConfig | None = None,
        task: str = "regression",
        out_dim: int = 3,
        head_hidden: Sequence[int] | None = None,
        head_activation: str | None = None,
        seed: int = 0,
    ):
        self.family = parse_family(family) if isinstance(family, str) else family
        self.block = block or default_block_config(self.family, "NL")
        self.block.validate(self.family)
        if task not in ("classification", "regression"):
            raise ValueError(f"unknown task {task!r}")
        self.task, self.out_dim = task, out_dim
        hh, ha = default_head(self.family)
        self.head_hidden = tuple(head_hidden) if head_hidden is not None else hh
        self.head_activation = head_activation or ha
        self.seed = seed
        rng = np.random.default_rng(seed)
        b, g = self.block, self.family.num_generators
        rep = b.channels * b.matrix_dim**2
        self.params: dict[str, DiffMatrix] = {}
        if b.variant in ("base", "MC"):
            self.params["W"] = ad.parameter(ad.glorot_uniform(rng, rep, g))
        else:
            self.params["W1"] = ad.parameter(ad.glorot_uniform(rng, b.hidden_dim, g))
            self.params["W2"] = ad.parameter(ad.glorot_uniform(rng, rep, b.hidden_dim))
        self.params.update(_init_mlp(rng, (rep, *self.head_hidden, out_dim), "head"))

    # symbols: 0 = identity, 1..g generators, g+1..2g inverses
    @property
    def num_symbols(self) -> int:
        g = self.family.num_generators
        return 1 + (g if self.family.self_inverse else 2 * g)

    def symbol_table(self) -> np.ndarray:
        """Signed one-hot rows for every symbol index."""
        g = self.family.num_generators
        rows = np.zeros((self.num_symbols, g))
        rows[1 : g + 1] = np.eye(g)
        if not self.family.self_inverse:
            rows[g + 1 :] = -np.eye(g)
        return rows

    def symbol_index(self, s: SignedGen) -> int:
        if s.index == 0:
            return 0
        if s.sign > 0 or self.family.self_inverse:
            return s.index
        return self.family.num_generators + s.index

    def encode(self, words: Sequence[Word], length: int | None = None) -> np.ndarray:
        """Symbol indices, right-padded with the identity to a common length."""
        L = max((len(w) for w in words), default=0) if length is None else length
        out = np.zeros((len(words), max(L, 1)), dtype=np.intp)
        for r, w in enumerate(words):
            if w.family != self.family:
                raise ValueError(f"word over {w.family.name}, model over {self.family.name}")
            if len(w) > L:
                raise ValueError(f"word of length {len(w)} exceeds {L}")
            out[r, : len(w)] = [self.symbol_index(s) for s in w.symbols]
        return out

    def pre_exponential(self, v: DiffMatrix) -> DiffMatrix:
        """Rows of ``v`` (signed one-hot vectors) -> stacked ``(rows, C, n, n)`` matrices A."""
        b, p = self.block, self.params
        if b.variant in ("base", "MC"):
            a = ad.matmul(v, ad.transpose(p["W"]))
        else:
            h = ad.matmul(v, ad.transpose(p["W1"]))
            if b.variant == "NL":
                h = ad.activation(h, b.activation)
            a = ad.matmul(h, ad.transpose(p["W2"]))
        return ad.reshape(a, (v.shape[0], b.channels, b.matrix_dim, b.matrix_dim))

    def symbol_matrices(self) -> DiffMatrix:
        return ad.matrix_exp(self.pre_exponential(ad.constant(self.symbol_table())))

    def represent_encoded(self, idx: np.ndarray, mats: DiffMatrix | None = None) -> DiffMatrix:
        """Products ``M_w`` for a batch of encoded words: ``(batch, C, n, n)``."""
        mats = self.symbol_matrices() if mats is None else mats
        idx = np.asarray(idx, dtype=np.intp)
        out = ad.take(mats, idx[:, 0])
        for k in range(1, idx.shape[1]):
            col = idx[:, k]
            if not col.any():
                # an all-identity column multiplies every word by I
                continue
            out = ad.matmul(out, ad.take(mats, col))
        return out

    def head(self, reps: DiffMatrix) -> DiffMatrix:
        b = self.block
        flat = ad.reshape(reps, (reps.shape[0], b.channels * b.matrix_dim**2))
        return _mlp(self.params, flat, "head", len(self.head_hidden) + 1, self.head_activation)

    def forward_encoded(self, idx: np.ndarray) -> DiffMatrix:
        return self.head(self.represent_encoded(idx))

    def word_matrices(self, words: Sequence[Word]) -> np.ndarray:
        return self.represent_encoded(self.encode(words)).value

    def config(self) -> dict:
        return {
            "kind": self.kind,
            "family": self.family.name,
            "task": self.task,
            "out_dim": self.out_dim,
            "block": asdict(self.block),
            "head_hidden": list(self.head_hidden),
            "head_activation": self.head_activation,
            "seed": self.seed,
        }


def generator_matrix(model: MatrixNetModel, g: SignedGen) -> np.ndarray:
    """Per-channel ``(C, n, n)`` matrices for a single generator symbol."""
    v = np.zeros((1, model.family.num_generators))
    if g.index:
        v[0, g.index - 1] = 1.0 if model.family.self_inverse else float(g.sign)
    return ad.matrix_exp(model.pre_exponential(ad.constant(v))).value[0]


def represent_word(model: MatrixNetModel, w: Word) -> np.ndarray:
    if len(w) == 0:
        b = model.block
        return np.broadcast_to(np.eye(b.matrix_dim), (b.channels, b.matrix_dim, b.matrix_dim)).copy()
    return model.word_matrices([w])[0]


def forward(model: _Model, w: Word) -> np.ndarray:
    return model.forward_words([w])[0]


def block_diagonal(mats: np.ndarray) -> np.ndarray:
    """Assemble per-channel ``(C, n, n)`` matrices into one block-diagonal matrix."""
    return ad.block_diag([ad.constant(m) for m in mats]).value


# -- relations -----------------------------------------------------------------


@dataclass
class RelationLossConfig:
    relations: list[Word] = field(default_factory=list)
    apply_every: int = 10
    weight: float = 1.0

    def __post_init__(self):
        if self.apply_every < 1:
            raise ValueError("apply_every must be >= 1")

    @classmethod
    def for_family(cls, family: Family, **kw) -> "RelationLossConfig":
        return cls(relations=default_relation_words(family), **kw)


def default_relation_words(family: Family) -> list[Word]:
    """Defining relations; braid families also get the all-inverse mirror of each."""
    rels = standard_relations(family)
    if isinstance(family, Braid):
        rels = rels + [mirror(r) for r in rels]
    return rels


def relation_loss(model: MatrixNetModel, cfg: RelationLossConfig,
                  mats: DiffMatrix | None = None) -> DiffMatrix:
    """Sum over relation words and channels of ``||M_r - I||_F``."""
    if not cfg.relations:
        return ad.constant(0.0)
    reps = model.represent_encoded(model.encode(cfg.relations), mats)
    eye = np.eye(model.block.matrix_dim)
    return ad.sum_all(ad.frobenius_norm(ad.sub(reps, eye), per_matrix=True))


def _braid3_words(model: MatrixNetModel, *texts: str) -> list[Word]:
    if not isinstance(model.family, Braid) or model.family.n < 3:
        raise ValueError(f"relational error needs a braid family with >= 3 strands, got {model.family.name}")
    return [parse_word(t, model.family) for t in texts]


def _pair_distance(model: MatrixNetModel, a: str, b: str, per_channel: bool) -> np.ndarray | float:
    m = model.word_matrices(_braid3_words(model, a, b))
    d = m[0] - m[1]
    per = np.sqrt((d * d).sum(axis=(-2, -1)))
    return per if per_channel else float(np.sqrt((per * per).sum()))


def relational_error(model: MatrixNetModel, per_channel: bool = False):
    """``||M(s1 s2 s1) - M(s2 s1 s2)||_F``."""
    return _pair_distance(model, "s1 s2 s1", "s2 s1 s2", per_channel)


def non_relational_difference(model: MatrixNetModel, per_channel: bool = False):
    """Same distance for the inequivalent pair ``s1 s1 s2`` / ``s2 s2 s1``."""
    return _pair_distance(model, "s1 s1 s2", "s2 s2 s1", per_channel)


# -- baselines -------------------------------------------------------------------


class MLPBaseline(_Model):
    """Concatenated signed one-hot rows, zero-padded to ``max_len``, through an MLP.

    Layout: input -> hidden, ``hidden_layers`` hidden -> hidden layers, then a
    linear output layer.
    """

    kind = "mlp"

    def __init__(self, family: Family | str, max_len: int, task: str = "regression",
                 out_dim: int = 3, hidden: int = 128, hidden_layers: int = 3,
                 activation: str = "relu", seed: int = 0):
        self.family = parse_family(family) if isinstance(family, str) else family
        self.max_len, self.task, self.out_dim = max_len, task, out_dim
        self.hidden, self.hidden_layers, self.activation = hidden, hidden_layers, activation
        self.seed = seed
        rng = np.random.default_rng(seed)
        g = self.family.num_generators
        sizes = (max_len * g,) + (hidden,) * (hidden_layers + 1) + (out_dim,)
        self.params = _init_mlp(rng, sizes, "mlp")
        self._depth = len(sizes) - 1

    def encode(self, words: Sequence[Word]) -> np.ndarray:
        g = self.family.num_generators
        out = np.zeros((len(words), self.max_len, g))
        for r, w in enumerate(words):
            if len(w) > self.max_len:
                raise ValueError(f"word of length {len(w)} exceeds max_len {self.max_len}")
            for k, s in enumerate(w.symbols):
                if s.index:
                    out[r, k, s.index - 1] = 1.0 if self.family.self_inverse else s.sign
        return out.reshape(len(words), self.max_len * g)

    def forward_encoded(self, x: np.ndarray) -> DiffMatrix:
        return _mlp(self.params, ad.constant(x), "mlp", self._depth, self.activation)

    def config(self) -> dict:
        return {
            "kind": self.kind, "family": self.family.name, "task": self.task,
            "out_dim": self.out_dim, "max_len": self.max_len, "hidden": self.hidden,
            "hidden_layers": self.hidden_layers, "activation": self.activation,
            "seed": self.seed,
        }


class FixedRepBaseline(_Model):
    """Flattened permutation matrix of the word through a two-hidden-layer MLP."""

    kind = "fixed_rep"

    def __init__(self, family: Family | str, task: str = "classification", out_dim: int = 2,
                 hidden: int = 256, activation: str = "silu", seed: int = 0):
        self.family = parse_family(family) if isinstance(family, str) else family
        if isinstance(self.family, Symmetric):
            self.points = self.family.n
        elif isinstance(self.family, DirectPower) and isinstance(self.family.base, Symmetric):
            self.points = self.family.base.n * self.family.k
        else:
            raise ValueError(f"no permutation representation for {self.family.name}")
        self.task, self.out_dim, self.hidden, self.activation = task, out_dim, hidden, activation
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.params = _init_mlp(rng, (self.points**2, hidden, hidden, out_dim), "mlp")

    def permutation_matrix(self, w: Word) -> np.ndarray:
        e = word_to_element(w)
        if isinstance(e, Permutation):
            return e.matrix()
        blocks = [c.matrix() for c in e.components]
        return block_diagonal(np.stack(blocks))

    def encode(self, words: Sequence[Word]) -> np.ndarray:
        return np.stack([self.permutation_matrix(w).reshape(-1) for w in words]) if words \
            else np.zeros((0, self.points**2))

    def forward_encoded(self, x: np.ndarray) -> DiffMatrix:
        return _mlp(self.params, ad.constant(x), "mlp", 3, self.activation)

    def config(self) -> dict:
        return {
            "kind": self.kind, "family": self.family.name, "task": self.task,
            "out_dim": self.out_dim, "hidden": self.hidden, "activation": self.activation,
            "seed": self.seed,
        }


def mlp_baseline_forward(model: MLPBaseline, w: Word, max_len: int | None = None) -> np.ndarray:
    if max_len is not None and max_len != model.max_len:
        raise ValueError(f"model was built for max_len {model.max_len}")
    return model.forward_words([w])[0]


def fixed_rep_forward(model: FixedRepBaseline, w: Word) -> np.ndarray:
    return model.forward_words([w])[0]


def model_from_config(cfg: dict) -> _Model:
    kind = cfg["kind"]
    fam = parse_family(cfg["family"])
    if kind == "matrixnet":
        return MatrixNetModel(
            fam, MatrixBlockConfig(**cfg["block"]), cfg["task"], cfg["out_dim"],
            cfg["head_hidden"], cfg["head_activation"], cfg.get("seed", 0),
        )
    if kind == "mlp":
        return MLPBaseline(fam, cfg["max_len"], cfg["task"], cfg["out_dim"], cfg["hidden"],
                           cfg["hidden_layers"], cfg["activation"], cfg.get("seed", 0))
    if kind == "fixed_rep":
        return FixedRepBaseline(fam, cfg["task"], cfg["out_dim"], cfg["hidden"],
                                cfg["activation"], cfg.get("seed", 0))
    raise ValueError(f"unknown model kind {kind!r}")
