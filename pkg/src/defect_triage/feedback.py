"""Knowledge base, user-feedback integration and retraining.

Three feedback cases: (1) everything accepted - the example is stored with
the shown label, no retrain; (2) classification rejected - stored with the
opposite label and retrained; (3) classification accepted but a shown
justification rejected - for defective verdicts each rejected satisfied
justification spawns a dummy counterexample (a fresh "ok" example whose
facts instantiate exactly the rejected clause's body) before retraining,
for ok verdicts a coverage gap is recorded instead.

All state changes go through an append-only event log, so a knowledge base
can be serialized and replayed byte-for-byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from .errors import (
    DummyConstructionError,
    LogCorruptedError,
    StaleVerdictError,
    UnknownImageError,
)
from .evaluate import Classification
from .facts import (
    Atom,
    DEFECTIVE,
    OK,
    UNLABELED,
    IntervalScheme,
    SymbolicExample,
    VALUE_SORT_OF_PREDICATE,
    atom,
    default_schemes,
    emit_atoms,
    is_variable,
    opposite_label,
    parse_facts,
    sort_of_constant,
)
from .learner import (
    FactStore,
    HornClause,
    LearnerConfig,
    ModeDeclaration,
    Theory,
    TrainStats,
    default_modes,
    learn_theory,
    parse_theory,
    theory_to_text,
)

LOG_VERSION = 1


@dataclass(frozen=True)
class Verdict:
    """User acceptance of a shown classification and its justifications.

    justification_accepted aligns index-for-index with the shown
    justification list; rejecting the classification overrides all of them.
    """

    image_id: str
    classification_accepted: bool
    justification_accepted: tuple[bool, ...] = ()


class KnowledgeBase:
    """Single-writer store of examples, background facts and the current theory."""

    def __init__(
        self,
        background: Sequence[Atom] | None = None,
        schemes: dict[str, IntervalScheme] | None = None,
        modes: Sequence[ModeDeclaration] | None = None,
        learner_config: LearnerConfig | None = None,
        retrain_on_accept: bool = False,
    ):
        from .facts import background_facts

        self.schemes = schemes if schemes is not None else default_schemes()
        self.background: list[Atom] = (
            list(background) if background is not None else background_facts(self.schemes)
        )
        self.modes = list(modes) if modes is not None else default_modes()
        self.learner_config = learner_config or LearnerConfig()
        self.retrain_on_accept = retrain_on_accept
        self.examples: list[SymbolicExample] = []
        self.coverage_gaps: list[tuple[str, int]] = []
        self.current_theory = Theory(())
        self.revision = 0
        self._index: dict[str, int] = {}
        self._events: list[dict] = [
            {
                "revision": 0,
                "kind": "init",
                "version": LOG_VERSION,
                "background": emit_atoms(self.background),
            }
        ]

    # -- mutations (each appends exactly one event and bumps the revision) ----

    def _append(self, kind: str, payload: dict) -> None:
        self.revision += 1
        self._events.append({"revision": self.revision, "kind": kind, **payload})

    def add_example(self, example: SymbolicExample) -> None:
        """Insert or replace (by image id) one example."""
        self._apply_example(example)
        self._append(
            "example_added",
            {
                "image_id": example.image_id,
                "label": example.label,
                "provenance": example.provenance,
                "facts": emit_atoms(example.facts),
            },
        )

    def _apply_example(self, example: SymbolicExample) -> None:
        i = self._index.get(example.image_id)
        if i is None:
            self._index[example.image_id] = len(self.examples)
            self.examples.append(example)
        else:
            self.examples[i] = example

    def record_gap(self, image_id: str, clause_index: int) -> None:
        self.coverage_gaps.append((image_id, clause_index))
        self._append("gap_recorded", {"image_id": image_id, "clause_index": clause_index})

    def _replace_theory(self, theory: Theory) -> None:
        self.current_theory = theory
        stats = theory.train_stats
        self._append(
            "theory_replaced",
            {
                "theory": theory_to_text(theory),
                "stats": None
                if stats is None
                else {
                    "positives_covered": stats.positives_covered,
                    "negatives_covered": stats.negatives_covered,
                    "accuracy": stats.accuracy,
                    "total_examples": stats.total_examples,
                },
            },
        )

    # -- queries ----------------------------------------------------------------

    def labeled_examples(self) -> list[SymbolicExample]:
        return [e for e in self.examples if e.label != UNLABELED]

    def unlabeled_examples(self) -> list[SymbolicExample]:
        return [e for e in self.examples if e.label == UNLABELED]

    def get_example(self, image_id: str) -> SymbolicExample:
        i = self._index.get(image_id)
        if i is None:
            raise UnknownImageError(f"unknown image id {image_id!r}")
        return self.examples[i]

    # -- feedback ----------------------------------------------------------------

    def submit_feedback(
        self, verdict: Verdict, shown: Classification, seen_revision: int
    ) -> bool:
        """Integrate one verdict; returns whether retraining ran.

        `shown` must be the classification the user actually saw, produced at
        `seen_revision`; a mismatch with the current revision is rejected
        without mutating anything.
        """
        if seen_revision != self.revision:
            raise StaleVerdictError(seen_revision, self.revision)
        if verdict.image_id != shown.image_id:
            raise ValueError(
                f"verdict is for {verdict.image_id!r} but shown classification "
                f"is for {shown.image_id!r}"
            )
        example = self.get_example(verdict.image_id)
        flags = list(verdict.justification_accepted)
        if len(flags) != len(shown.justifications):
            raise ValueError(
                f"expected {len(shown.justifications)} justification flags, got {len(flags)}"
            )
        if not verdict.classification_accepted:
            flags = [False] * len(flags)  # rejecting the classification rejects them all

        if not verdict.classification_accepted:
            # case 2: opposite label, retrain
            self.add_example(
                example.with_label(opposite_label(shown.label), "user_feedback")
            )
            self.retrain()
            return True

        if all(flags):
            # case 1: store with the inferred label
            self.add_example(example.with_label(shown.label, "user_feedback"))
            if self.retrain_on_accept:
                self.retrain()
                return True
            return False

        # case 3: right for the wrong reasons
        if shown.label == DEFECTIVE:
            rejected = [
                j
                for j, accepted in zip(shown.justifications, flags)
                if not accepted and j.satisfied
            ]
            if not rejected:
                # only nearest-miss explanations were rejected; nothing to penalize
                self.add_example(example.with_label(shown.label, "user_feedback"))
                return False
            for j in rejected:
                clause = self.current_theory.clauses[j.clause_index]
                self.add_example(make_dummy_example(clause, self))
            self.add_example(example.with_label(DEFECTIVE, "user_feedback"))
            self.retrain()
            return True

        # ok verdict with inadequate explanation: the theory is incomplete here
        for j, accepted in zip(shown.justifications, flags):
            if not accepted:
                self.record_gap(verdict.image_id, j.clause_index)
        self.add_example(example.with_label(OK, "user_feedback"))
        return False

    def retrain(self, config: LearnerConfig | None = None) -> Theory:
        """Full-batch relearn over all labeled examples (dummies count as ok)."""
        labeled = self.labeled_examples()
        if not labeled:
            raise ValueError("cannot retrain: no labeled examples")
        positives = [e for e in labeled if e.label == DEFECTIVE]
        negatives = [e for e in labeled if e.label == OK]
        theory = learn_theory(
            positives, negatives, self.background, self.modes, config or self.learner_config
        )
        self._replace_theory(theory)
        return theory

    def __eq__(self, other) -> bool:
        if not isinstance(other, KnowledgeBase):
            return NotImplemented
        return (
            self.examples == other.examples
            and self.background == other.background
            and self.current_theory == other.current_theory
            and self.coverage_gaps == other.coverage_gaps
            and self.revision == other.revision
        )


def make_dummy_example(clause: HornClause, kb: KnowledgeBase) -> SymbolicExample:
    """Fresh 'ok' example whose facts instantiate exactly the clause body.

    Entity variables get dummy constants; a value variable constrained by
    num_leq atoms is bound to the constraint's boundary constant (the weakest
    instantiation still satisfying the clause). No other facts are added.
    """
    rev = kb.revision
    img = f"dummy_{rev}"
    while img in kb._index:
        rev += 1
        img = f"dummy_{rev}"

    background = FactStore(kb.background)

    def leq(a: str, b: str) -> bool:
        return atom("num_leq", a, b) in background.atom_set

    binding: dict[str, str] = {clause.head_var: img}
    hp_count = 0
    lower: dict[str, list[str]] = {}
    upper: dict[str, list[str]] = {}
    value_var_sort: dict[str, str] = {}

    for a in clause.body:
        if a.predicate == "has_hp" and len(a.args) == 2 and is_variable(a.args[1]):
            if a.args[1] not in binding:
                hp_count += 1
                binding[a.args[1]] = f"{img}_hp{hp_count}"
        elif a.predicate in ("total_volume", "num_hps") and len(a.args) == 2:
            if is_variable(a.args[1]):
                value_var_sort.setdefault(a.args[1], VALUE_SORT_OF_PREDICATE[a.predicate])
        elif a.predicate == "num_leq" and len(a.args) == 2:
            left, right = a.args
            if is_variable(left) and not is_variable(right):
                upper.setdefault(left, []).append(right)
                s = sort_of_constant(right, kb.schemes)
                if s:
                    value_var_sort.setdefault(left, s)
            elif is_variable(right) and not is_variable(left):
                lower.setdefault(right, []).append(left)
                s = sort_of_constant(left, kb.schemes)
                if s:
                    value_var_sort.setdefault(right, s)
            elif is_variable(left) and is_variable(right):
                raise DummyConstructionError(
                    f"cannot instantiate {a}: both arguments are variables"
                )

    # bind remaining value variables to their boundary constants
    for var in list(lower) + list(upper) + list(value_var_sort):
        if var in binding:
            continue
        lows = lower.get(var, [])
        highs = upper.get(var, [])
        choice: str | None = None
        if lows:
            choice = lows[0]
            for c in lows[1:]:
                if leq(choice, c):
                    choice = c
                elif not leq(c, choice):
                    raise DummyConstructionError(
                        f"incomparable lower bounds {choice!r} and {c!r} on {var}"
                    )
        elif highs:
            choice = highs[0]
            for c in highs[1:]:
                if leq(c, choice):
                    choice = c
                elif not leq(choice, c):
                    raise DummyConstructionError(
                        f"incomparable upper bounds {choice!r} and {c!r} on {var}"
                    )
        else:
            sort = value_var_sort.get(var)
            if sort is None or sort not in kb.schemes:
                raise DummyConstructionError(f"variable {var} has no resolvable sort")
            choice = kb.schemes[sort].constants[0]
        for c in highs:
            if not leq(choice, c):
                raise DummyConstructionError(
                    f"constraints on {var} are unsatisfiable: "
                    f"{choice!r} must be at most {c!r}"
                )
        binding[var] = choice

    # any variable still unbound came from a non-standard predicate; treat as entity
    for a in clause.body:
        for v in a.variables():
            if v not in binding:
                hp_count += 1
                binding[v] = f"{img}_hp{hp_count}"

    facts: list[Atom] = []
    for a in clause.body:
        ground = a.substitute(binding)
        if a.predicate == "num_leq":
            if ground not in background.atom_set:
                raise DummyConstructionError(
                    f"instantiated constraint {ground} does not hold in the background"
                )
            continue  # background-satisfied, not an example fact
        if ground not in facts:
            facts.append(ground)

    return SymbolicExample(img, tuple(facts), label=OK, provenance="dummy")


# -- event-log serialization -----------------------------------------------------


def save_kb(kb: KnowledgeBase) -> bytes:
    """The append-only event log, one JSON record per line."""
    lines = [json.dumps(e, sort_keys=True, separators=(",", ":")) for e in kb._events]
    return ("\n".join(lines) + "\n").encode("utf-8")


def load_kb(
    data: bytes,
    modes: Sequence[ModeDeclaration] | None = None,
    learner_config: LearnerConfig | None = None,
    schemes: dict[str, IntervalScheme] | None = None,
    retrain_on_accept: bool = False,
) -> KnowledgeBase:
    """Replay an event log; every record must parse and revisions must be contiguous."""
    text = data.decode("utf-8")
    lines = [l for l in text.split("\n") if l]
    if not lines:
        raise LogCorruptedError("empty log", 0, -1)

    def parse_record(i: int, line: str) -> dict:
        try:
            rec = json.loads(line)
            if not isinstance(rec, dict) or "kind" not in rec or "revision" not in rec:
                raise ValueError("missing kind/revision")
            return rec
        except (json.JSONDecodeError, ValueError) as exc:
            raise LogCorruptedError(str(exc), i, i - 1) from exc

    first = parse_record(0, lines[0])
    if first["kind"] != "init" or first["revision"] != 0:
        raise LogCorruptedError("log must start with an init record", 0, -1)
    try:
        background = parse_facts(first["background"])
    except Exception as exc:
        raise LogCorruptedError(f"bad init background: {exc}", 0, -1) from exc

    kb = KnowledgeBase(
        background=background,
        schemes=schemes,
        modes=modes,
        learner_config=learner_config,
        retrain_on_accept=retrain_on_accept,
    )
    kb._events = [first]

    for i, line in enumerate(lines[1:], start=1):
        rec = parse_record(i, line)
        if rec["revision"] != kb.revision + 1:
            raise LogCorruptedError(
                f"revision {rec['revision']} does not follow {kb.revision}", i, i - 1
            )
        try:
            kind = rec["kind"]
            if kind == "example_added":
                kb._apply_example(
                    SymbolicExample(
                        rec["image_id"],
                        tuple(parse_facts(rec["facts"])),
                        rec["label"],
                        rec["provenance"],
                    )
                )
            elif kind == "gap_recorded":
                kb.coverage_gaps.append((rec["image_id"], rec["clause_index"]))
            elif kind == "theory_replaced":
                theory = parse_theory(rec["theory"])
                stats = rec.get("stats")
                if stats is not None:
                    theory = Theory(theory.clauses, TrainStats(**stats))
                kb.current_theory = theory
            else:
                raise ValueError(f"unknown event kind {kind!r}")
        except LogCorruptedError:
            raise
        except Exception as exc:
            raise LogCorruptedError(str(exc), i, i - 1) from exc
        kb.revision = rec["revision"]
        kb._events.append(rec)
    return kb
