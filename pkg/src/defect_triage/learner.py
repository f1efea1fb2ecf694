"""Horn-clause induction by sequential covering with a mode-directed beam search.

One clause at a time: take the first uncovered positive example as a seed,
build its bottom clause (the most specific mode-conforming body derivable
from the seed's facts plus background), then search general-to-specific over
subsets of those literals, scoring candidates by covered positives minus
covered negatives. Everything is deterministic: no randomness, fixed
iteration orders, ties broken by body length then serialized form.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, TheorySyntaxError
from .facts import (
    Atom,
    DEFECTIVE,
    OK,
    SymbolicExample,
    UNLABELED,
    atom,
    is_variable,
)

TARGET_PREDICATE = "defective"

ENTITY_SORTS = ("image", "hp")
# wildcard sort for num_leq: matches any interval sort
ANY_INTERVAL = "interval"


@dataclass(frozen=True)
class HornClause:
    """defective(Var) :- body. The body is an ordered conjunction of atoms."""

    head: Atom
    body: tuple[Atom, ...] = ()

    def __post_init__(self):
        if self.head.predicate != TARGET_PREDICATE or len(self.head.args) != 1:
            raise ValueError(f"clause head must be {TARGET_PREDICATE}/1, got {self.head}")
        if not is_variable(self.head.args[0]):
            raise ValueError("clause head argument must be a variable")
        linked = {self.head.args[0]}
        for a in self.body:
            avars = a.variables()
            if avars and not (set(avars) & linked):
                raise ValueError(f"unlinked atom {a} in clause body")
            linked.update(avars)

    @property
    def head_var(self) -> str:
        return self.head.args[0]

    def variables(self) -> list[str]:
        """All variables in first-occurrence order, head variable first."""
        seen = [self.head_var]
        for a in self.body:
            for v in a.variables():
                if v not in seen:
                    seen.append(v)
        return seen


@dataclass(frozen=True)
class TrainStats:
    positives_covered: int
    negatives_covered: int
    accuracy: float
    total_examples: int


@dataclass(frozen=True)
class Theory:
    clauses: tuple[HornClause, ...] = ()
    train_stats: TrainStats | None = None


@dataclass(frozen=True)
class LearnerConfig:
    noise: int = 10
    max_body_atoms: int = 4
    search_depth: int = 50
    beam_width: int = 5
    min_pos: int = 2

    def __post_init__(self):
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")
        for name in ("max_body_atoms", "search_depth", "beam_width", "min_pos"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")


def load_learner_config(path: str | Path) -> LearnerConfig:
    try:
        raw = json.loads(Path(path).read_text())
        return LearnerConfig(**raw)
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise ConfigError(f"cannot read learner config {path}: {exc}") from exc


@dataclass(frozen=True)
class ModeArg:
    kind: str  # "+" input variable, "-" output variable, "#" constant
    sort: str

    def __post_init__(self):
        if self.kind not in ("+", "-", "#"):
            raise ConfigError(f"mode arg kind must be one of + - #, got {self.kind!r}")


@dataclass(frozen=True)
class ModeDeclaration:
    predicate: str
    args: tuple[ModeArg, ...]


def default_modes() -> list[ModeDeclaration]:
    """Mode language for the built-in predicate vocabulary.

    num_leq gets both argument orders so that upper bounds (num_leq(V,c)) and
    lower bounds (num_leq(c,V)) are both expressible.
    """
    m = ModeArg
    return [
        ModeDeclaration("has_hp", (m("+", "image"), m("-", "hp"))),
        ModeDeclaration("has_size", (m("+", "hp"), m("#", "size"))),
        ModeDeclaration("distance_from_center", (m("+", "hp"), m("#", "distance"))),
        ModeDeclaration("eccentricity", (m("+", "hp"), m("#", "eccentricity"))),
        ModeDeclaration("num_hps", (m("+", "image"), m("-", "count"))),
        ModeDeclaration("total_volume", (m("+", "image"), m("-", "total_volume"))),
        ModeDeclaration("num_leq", (m("+", ANY_INTERVAL), m("#", ANY_INTERVAL))),
        ModeDeclaration("num_leq", (m("#", ANY_INTERVAL), m("+", ANY_INTERVAL))),
    ]


# -- clause text format --------------------------------------------------------


def _canonical_names(count: int) -> list[str]:
    names = [chr(ord("A") + i) for i in range(min(count, 26))]
    for i in range(26, count):
        names.append(f"V{i - 25}")
    return names


def canonical_clause(clause: HornClause) -> HornClause:
    """Rename variables to A, B, C, ... in first-occurrence order."""
    old = clause.variables()
    rename = dict(zip(old, _canonical_names(len(old))))
    return HornClause(
        clause.head.substitute(rename),
        tuple(a.substitute(rename) for a in clause.body),
    )


def clause_to_text(clause: HornClause) -> str:
    """Serialize with canonical variable names A, B, C, ... in first-occurrence order."""
    c = canonical_clause(clause)
    if not c.body:
        return f"{c.head}."
    return f"{c.head} :- {', '.join(str(a) for a in c.body)}."


def theory_to_text(theory: Theory) -> str:
    lines = [clause_to_text(c) for c in theory.clauses]
    return "\n".join(lines) + "\n" if lines else ""


_ATOM_RE = re.compile(r"\s*([a-z][a-zA-Z0-9_]*)\s*\(\s*([^()]*?)\s*\)\s*")


def _parse_atom_text(text: str, lineno: int) -> tuple[Atom, str]:
    m = _ATOM_RE.match(text)
    if not m:
        raise TheorySyntaxError(f"expected an atom at {text[:30]!r}", lineno)
    args = tuple(a.strip() for a in m.group(2).split(","))
    if any(not a for a in args):
        raise TheorySyntaxError(f"empty argument in {m.group(0)!r}", lineno)
    for a in args:
        if not re.match(r"^[A-Za-z][A-Za-z0-9_]*$", a):
            raise TheorySyntaxError(f"bad term {a!r}", lineno)
    return Atom(m.group(1), args), text[m.end():]


def parse_clause(line: str, lineno: int = 1) -> HornClause:
    text = line.strip()
    if not text.endswith("."):
        raise TheorySyntaxError("clause must end with '.'", lineno)
    text = text[:-1]
    head, rest = _parse_atom_text(text, lineno)
    rest = rest.strip()
    body: list[Atom] = []
    if rest:
        if not rest.startswith(":-"):
            raise TheorySyntaxError(f"expected ':-' after head, got {rest[:10]!r}", lineno)
        rest = rest[2:]
        while True:
            a, rest = _parse_atom_text(rest, lineno)
            body.append(a)
            rest = rest.strip()
            if not rest:
                break
            if not rest.startswith(","):
                raise TheorySyntaxError(f"expected ',' between atoms, got {rest[:10]!r}", lineno)
            rest = rest[1:]
    try:
        return HornClause(head, tuple(body))
    except ValueError as exc:
        raise TheorySyntaxError(str(exc), lineno) from exc


def parse_theory(text: str) -> Theory:
    clauses = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        clauses.append(parse_clause(line, lineno))
    return Theory(tuple(clauses))


# -- coverage ------------------------------------------------------------------


class FactStore:
    """Ground atoms indexed by predicate, preserving order (facts then background)."""

    def __init__(self, atoms: Iterable[Atom]):
        self.by_pred: dict[str, list[Atom]] = {}
        self.all: list[Atom] = []
        for a in atoms:
            self.by_pred.setdefault(a.predicate, []).append(a)
            self.all.append(a)
        self.atom_set = frozenset(self.all)

    @classmethod
    def for_example(cls, example: SymbolicExample, background: Sequence[Atom]) -> "FactStore":
        return cls(list(example.facts) + list(background))


def _solve(body: Sequence[Atom], store: FactStore, binding: dict[str, str], i: int = 0):
    """Yield total bindings satisfying body[i:], trying facts in store order."""
    if i == len(body):
        yield dict(binding)
        return
    goal = body[i]
    for fact in store.by_pred.get(goal.predicate, ()):
        if len(fact.args) != len(goal.args):
            continue
        bound: list[str] = []
        ok = True
        for g, f in zip(goal.args, fact.args):
            if is_variable(g):
                cur = binding.get(g)
                if cur is None:
                    binding[g] = f
                    bound.append(g)
                elif cur != f:
                    ok = False
                    break
            elif g != f:
                ok = False
                break
        if ok:
            yield from _solve(body, store, binding, i + 1)
        for v in bound:
            del binding[v]


def covers_store(clause: HornClause, store: FactStore, image_const: str) -> dict[str, str] | None:
    """First satisfying binding with the head variable bound to image_const, or None."""
    binding = {clause.head_var: image_const}
    for b in _solve(clause.body, store, binding):
        return b
    return None


def clause_covers(
    clause: HornClause, example: SymbolicExample, background: Sequence[Atom]
) -> dict[str, str] | None:
    """Whether the clause body is satisfiable in the example's facts plus background.

    Returns the first satisfying binding in deterministic enumeration order
    (example facts first, background after), or None.
    """
    store = FactStore.for_example(example, background)
    return covers_store(clause, store, example.image_constant)


# -- bottom clause -------------------------------------------------------------


@dataclass
class _BottomClause:
    head_var: str
    image_const: str
    literals: list[Atom]
    var_sorts: dict[str, str]


def _build_bottom_clause(
    seed: SymbolicExample,
    background: Sequence[Atom],
    modes: Sequence[ModeDeclaration],
    depth: int,
) -> _BottomClause:
    """Most specific mode-conforming body for the seed, chaining up to `depth` layers."""
    value_sorts = {m.sort for d in modes for m in d.args if m.sort not in ENTITY_SORTS}
    const_to_var: dict[str, str] = {seed.image_constant: "A"}
    var_sorts: dict[str, str] = {"A": "image"}
    names = iter(_canonical_names(200)[1:])  # B, C, ...
    facts = list(seed.facts) + list(background)
    literals: list[Atom] = []
    seen: set[Atom] = set()

    def sort_matches(var: str, want: str) -> bool:
        have = var_sorts[var]
        if want == ANY_INTERVAL:
            return have not in ENTITY_SORTS
        return have == want

    for _ in range(depth):
        new_vars = False
        for mode in modes:
            for fact in facts:
                if fact.predicate != mode.predicate or len(fact.args) != len(mode.args):
                    continue
                usable = True
                for marg, const in zip(mode.args, fact.args):
                    if marg.kind == "+":
                        var = const_to_var.get(const)
                        if var is None or not sort_matches(var, marg.sort):
                            usable = False
                            break
                if not usable:
                    continue
                args: list[str] = []
                for marg, const in zip(mode.args, fact.args):
                    if marg.kind == "#":
                        args.append(const)
                        continue
                    var = const_to_var.get(const)
                    if var is None:  # "-" output introducing a fresh variable
                        var = next(names)
                        const_to_var[const] = var
                        var_sorts[var] = marg.sort
                        new_vars = True
                    args.append(var)
                lit = Atom(fact.predicate, tuple(args))
                if lit not in seen:
                    seen.add(lit)
                    literals.append(lit)
        if not new_vars:
            break
    return _BottomClause("A", seed.image_constant, literals, var_sorts)


# -- beam search ---------------------------------------------------------------


@dataclass
class _Candidate:
    indices: tuple[int, ...]
    body: tuple[Atom, ...]
    pos: int
    neg: int

    @property
    def score(self) -> int:
        return self.pos - self.neg

    def rank_key(self):
        return (-self.score, len(self.body), tuple(str(a) for a in self.body))


def _coverage(
    body: tuple[Atom, ...],
    head_var: str,
    stores: Sequence[tuple[FactStore, str]],
) -> int:
    clause_body = body
    n = 0
    for store, image_const in stores:
        binding = {head_var: image_const}
        for _ in _solve(clause_body, store, binding):
            n += 1
            break
    return n


def _search_clause(
    bottom: _BottomClause,
    pos_stores: Sequence[tuple[FactStore, str]],
    neg_stores: Sequence[tuple[FactStore, str]],
    config: LearnerConfig,
) -> HornClause | None:
    head = atom(TARGET_PREDICATE, bottom.head_var)
    lits = bottom.literals
    scored: dict[frozenset[int], _Candidate] = {}

    def score(indices: tuple[int, ...]) -> _Candidate:
        key = frozenset(indices)
        cand = scored.get(key)
        if cand is None:
            body = tuple(lits[i] for i in indices)
            cand = _Candidate(
                indices,
                body,
                _coverage(body, bottom.head_var, pos_stores),
                _coverage(body, bottom.head_var, neg_stores),
            )
            scored[key] = cand
        return cand

    def acceptable(c: _Candidate) -> bool:
        return c.neg <= config.noise and c.pos >= config.min_pos

    root = score(())
    best: _Candidate | None = root if acceptable(root) else None

    frontier = [root]
    expanded = 0
    while frontier and expanded < config.search_depth:
        children: list[_Candidate] = []
        for node in frontier:
            if expanded >= config.search_depth:
                break
            expanded += 1
            if len(node.body) >= config.max_body_atoms:
                continue
            node_vars = {bottom.head_var}
            for a in node.body:
                node_vars.update(a.variables())
            for i, lit in enumerate(lits):
                if i in node.indices:
                    continue
                lvars = lit.variables()
                if lvars and not (set(lvars) & node_vars):
                    continue  # would break linkage
                if frozenset(node.indices + (i,)) in scored:
                    continue  # reached earlier via another insertion order
                child = score(node.indices + (i,))
                if acceptable(child) and (best is None or child.rank_key() < best.rank_key()):
                    best = child
                children.append(child)
        best_score = best.score if best is not None else None
        viable = [
            c
            for c in children
            if c.pos >= config.min_pos and (best_score is None or c.pos > best_score)
        ]
        viable.sort(key=_Candidate.rank_key)
        frontier = viable[: config.beam_width]

    if best is None:
        return None
    return canonical_clause(HornClause(head, best.body))


def learn_theory(
    positives: Sequence[SymbolicExample],
    negatives: Sequence[SymbolicExample],
    background: Sequence[Atom],
    modes: Sequence[ModeDeclaration] | None = None,
    config: LearnerConfig | None = None,
) -> Theory:
    """Sequential covering over the positives; see module docstring.

    Accepted clauses cover at least min_pos positives and at most noise
    negatives of the full input; induction stops when every positive is
    covered or no acceptable clause is found for the current seed.
    """
    if modes is None:
        modes = default_modes()
    if not modes:
        raise ConfigError("no mode declarations given")
    config = config or LearnerConfig()

    pos_stores = [(FactStore.for_example(e, background), e.image_constant) for e in positives]
    neg_stores = [(FactStore.for_example(e, background), e.image_constant) for e in negatives]

    clauses: list[HornClause] = []
    covered = [False] * len(positives)
    while True:
        seed_idx = next((i for i, c in enumerate(covered) if not c), None)
        if seed_idx is None:
            break
        bottom = _build_bottom_clause(
            positives[seed_idx], background, modes, config.max_body_atoms
        )
        clause = _search_clause(bottom, pos_stores, neg_stores, config)
        if clause is None:
            break
        clauses.append(clause)
        for i, (store, img) in enumerate(pos_stores):
            if not covered[i] and covers_store(clause, store, img) is not None:
                covered[i] = True

    theory = Theory(tuple(clauses))
    pos_cov = sum(
        1 for store, img in pos_stores
        if any(covers_store(c, store, img) is not None for c in clauses)
    )
    neg_cov = sum(
        1 for store, img in neg_stores
        if any(covers_store(c, store, img) is not None for c in clauses)
    )
    total = len(positives) + len(negatives)
    accuracy = (pos_cov + (len(negatives) - neg_cov)) / total if total else 1.0
    return Theory(tuple(clauses), TrainStats(pos_cov, neg_cov, accuracy, total))


def theory_accuracy(
    theory: Theory, examples: Sequence[SymbolicExample], background: Sequence[Atom]
) -> float:
    """Fraction of examples whose label matches the theory's classification."""
    if not examples:
        raise ValueError("no examples given")
    correct = 0
    for e in examples:
        if e.label == UNLABELED:
            raise ValueError(f"example {e.image_id} is unlabeled")
        store = FactStore.for_example(e, background)
        predicted = DEFECTIVE if any(
            covers_store(c, store, e.image_constant) is not None for c in theory.clauses
        ) else OK
        correct += predicted == e.label
    return correct / len(examples)
