"""Theory evaluation with per-atom truth tracking.

Classifying an example also records, per clause, which body atoms held under
which variable binding. Satisfied clauses report their first satisfying
binding; unsatisfied clauses report the nearest miss, i.e. the binding with
the most true atoms, so the user sees how close the rule came to firing.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

from .facts import Atom, DEFECTIVE, OK, SymbolicExample
from .learner import FactStore, HornClause, Theory, _solve, covers_store


@dataclass(frozen=True)
class AtomEvaluation:
    atom: Atom  # as written in the clause
    bound_atom: Atom  # after substitution
    truth: bool


@dataclass(frozen=True)
class Justification:
    """One clause's evaluation trace on one example."""

    clause_index: int
    binding: dict[str, str]
    atom_evals: tuple[AtomEvaluation, ...]
    satisfied: bool

    def __post_init__(self):
        if self.satisfied != all(e.truth for e in self.atom_evals):
            raise ValueError("satisfied flag contradicts atom truths")


@dataclass(frozen=True)
class Classification:
    image_id: str
    label: str
    justifications: tuple[Justification, ...]


def _constants_in_order(store: FactStore) -> list[str]:
    seen: dict[str, None] = {}
    for a in store.all:
        for arg in a.args:
            seen.setdefault(arg, None)
    return list(seen)


def _justify(clause: HornClause, binding: dict[str, str], store: FactStore, index: int) -> Justification:
    evals = []
    for a in clause.body:
        bound = a.substitute(binding)
        evals.append(AtomEvaluation(a, bound, bound in store.atom_set))
    return Justification(
        clause_index=index,
        binding=dict(binding),
        atom_evals=tuple(evals),
        satisfied=all(e.truth for e in evals),
    )


def _nearest_miss(
    clause: HornClause, store: FactStore, image_const: str, index: int
) -> Justification:
    """Binding maximizing the number of true atoms (ties: earliest enumerated)."""
    free = [v for v in clause.variables() if v != clause.head_var]
    domain = _constants_in_order(store) or [image_const]
    best_binding = None
    best_count = -1
    for combo in itertools.product(domain, repeat=len(free)):
        binding = {clause.head_var: image_const, **dict(zip(free, combo))}
        count = sum(1 for a in clause.body if a.substitute(binding) in store.atom_set)
        if count > best_count:
            best_count = count
            best_binding = binding
    return _justify(clause, best_binding, store, index)


def evaluate(
    theory: Theory,
    example: SymbolicExample,
    background: Sequence[Atom],
    all_bindings: bool = False,
) -> Classification:
    """Classify and trace. One justification per clause (every satisfying
    binding instead, for satisfied clauses, when all_bindings is set)."""
    store = FactStore.for_example(example, background)
    justifications: list[Justification] = []
    any_satisfied = False
    for index, clause in enumerate(theory.clauses):
        found = []
        seen_bindings = set()
        start = {clause.head_var: example.image_constant}
        for b in _solve(clause.body, store, start):
            key = tuple(sorted(b.items()))
            if key in seen_bindings:
                continue
            seen_bindings.add(key)
            found.append(_justify(clause, b, store, index))
            if not all_bindings:
                break
        if found:
            any_satisfied = True
            justifications.extend(found)
        else:
            justifications.append(_nearest_miss(clause, store, example.image_constant, index))
    return Classification(
        image_id=example.image_id,
        label=DEFECTIVE if any_satisfied else OK,
        justifications=tuple(justifications),
    )


def entails(theory: Theory, example: SymbolicExample, background: Sequence[Atom]) -> bool:
    """Fast boolean classification without trace construction."""
    store = FactStore.for_example(example, background)
    return any(
        covers_store(clause, store, example.image_constant) is not None
        for clause in theory.clauses
    )
