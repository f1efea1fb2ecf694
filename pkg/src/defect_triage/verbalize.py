"""Deterministic template-based rendering of clauses, traces and defect lists.

Functional predicates are fused with the atoms consuming their output
variable: total_volume(A,B), num_leq(B,tvol_small) reads as one statement
about "the total defective volume of the part", and has_hp introduces an
entity ("there is a defect which ...") whose later property atoms attach as
conjoined phrases. Raw interval constants never appear in the output; only
lexicon phrases do.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import ConfigError, VerbalizeError
from .facts import IntervalScheme, SymbolicExample, default_schemes, natural_key
from .learner import HornClause, Theory

CLAUSE_PREFIX = "The part is classified as defective if "
ALWAYS_DEFECTIVE = "The part is always classified as defective."
SATISFIED_SUFFIX = ", so the part is classified as defective."
NO_DEFECTS = "No defects detected."
NO_RULES = "No rules learned yet."


@dataclass
class Template:
    """Surface forms for one predicate.

    pattern carries the positive phrase; {1} is the second argument's lexicon
    phrase. Functional templates use pattern as the subject phrase of the
    fused statement and pattern_bare when no consuming atom constrains it.
    """

    predicate: str
    functional: bool
    pattern: str
    pattern_negated: str = ""
    pattern_bare: str = ""
    value_lexicon: dict[str, str] = field(default_factory=dict)

    def phrase(self, constant: str) -> str:
        try:
            return self.value_lexicon[constant]
        except KeyError:
            raise VerbalizeError(
                f"no lexicon entry for constant {constant!r} under predicate {self.predicate!r}"
            ) from None


def default_templates() -> dict[str, Template]:
    size_lex = {"vol_small": "small", "vol_medium": "medium", "vol_large": "large"}
    tvol_lex = {"tvol_small": "small", "tvol_medium": "medium", "tvol_large": "large"}
    dist_lex = {
        "center": "at the center",
        "inner_rim": "at the inner rim",
        "outer_rim": "at the outer rim",
    }
    ecc_lex = {"round": "round", "elongated": "elongated", "very_elongated": "very elongated"}
    count_lex = {"cnt_0": "zero", "cnt_1": "one", "cnt_2": "two", "cnt_many": "many"}
    templates = [
        Template(
            "has_hp",
            functional=True,
            pattern="there is a defect",
            pattern_bare="there is a defect",
        ),
        Template("has_size", False, "is {1}", "is not {1}", value_lexicon=size_lex),
        Template(
            "distance_from_center",
            False,
            "lies {1}",
            "does not lie {1}",
            value_lexicon=dist_lex,
        ),
        Template("eccentricity", False, "is {1}", "is not {1}", value_lexicon=ecc_lex),
        Template(
            "num_hps",
            functional=True,
            pattern="the number of defects of the part",
            pattern_bare="the part has a defect count",
            value_lexicon=count_lex,
        ),
        Template(
            "total_volume",
            functional=True,
            pattern="the total defective volume of the part",
            pattern_bare="the part has a total defective volume",
            value_lexicon=tvol_lex,
        ),
        Template(
            "num_leq",
            functional=False,
            pattern="",
            value_lexicon={**size_lex, **tvol_lex, **dist_lex, **ecc_lex, **count_lex},
        ),
    ]
    return {t.predicate: t for t in templates}


def load_templates(path: str | Path) -> dict[str, Template]:
    """Load the template registry from JSON: {predicate: {functional, pattern, ...}}."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read template file {path}: {exc}") from exc
    templates = {}
    for pred, entry in raw.items():
        templates[pred] = Template(
            predicate=pred,
            functional=bool(entry.get("functional", False)),
            pattern=entry.get("pattern", ""),
            pattern_negated=entry.get("pattern_negated", ""),
            pattern_bare=entry.get("pattern_bare", ""),
            value_lexicon=dict(entry.get("lexicon", {})),
        )
    return templates


def validate_templates(
    templates: dict[str, Template], schemes: dict[str, IntervalScheme] | None = None
) -> None:
    """Check lexicon totality: every scheme constant must be renderable."""
    schemes = schemes if schemes is not None else default_schemes()
    sort_to_pred = {
        "size": "has_size",
        "distance": "distance_from_center",
        "eccentricity": "eccentricity",
        "count": "num_hps",
        "total_volume": "total_volume",
    }
    for sort, scheme in schemes.items():
        pred = sort_to_pred.get(sort)
        for c in scheme.constants:
            if pred is not None:
                if pred not in templates:
                    raise ConfigError(f"no template for predicate {pred!r}")
                templates[pred].phrase(c)
            if "num_leq" in templates:
                templates["num_leq"].phrase(c)


def _template(templates: dict[str, Template], predicate: str) -> Template:
    t = templates.get(predicate)
    if t is None:
        raise VerbalizeError(f"no template for predicate {predicate!r}")
    return t


@dataclass
class _Group:
    """A fused run of atoms: an introducing atom plus the atoms consuming its variable."""

    kind: str  # "entity" | "functional" | "bare"
    var: str | None
    intro_index: int | None  # body position of the introducing atom, None for bare num_leq
    subject: str = ""
    bare: str = ""
    parts: list[tuple[int, str, str]] = field(default_factory=list)  # (body idx, pos, neg)


def _build_groups(clause: HornClause, templates: dict[str, Template]) -> list[_Group]:
    groups: list[_Group] = []
    by_var: dict[str, _Group] = {}
    for i, a in enumerate(clause.body):
        t = _template(templates, a.predicate)
        if a.predicate == "num_leq":
            if len(a.args) != 2:
                raise VerbalizeError(f"cannot render {a}")
            left, right = a.args
            if left in by_var:  # num_leq(V, c): at most c
                g = by_var[left]
                p = t.phrase(right)
                g.parts.append((i, f"is at most {p}", f"is not at most {p}"))
            elif right in by_var:  # num_leq(c, V): at least c
                g = by_var[right]
                p = t.phrase(left)
                g.parts.append((i, f"is at least {p}", f"is not at least {p}"))
            else:  # ground comparison; render standalone
                g = _Group("bare", None, i)
                g.bare = f"{t.phrase(left)} is at most {t.phrase(right)}"
                groups.append(g)
            continue
        if t.functional:
            if len(a.args) != 2:
                raise VerbalizeError(f"cannot render {a}")
            kind = "entity" if a.predicate == "has_hp" else "functional"
            g = _Group(kind, a.args[1], i, subject=t.pattern, bare=t.pattern_bare)
            groups.append(g)
            by_var[a.args[1]] = g
        else:
            if len(a.args) != 2:
                raise VerbalizeError(f"cannot render {a}")
            var, const = a.args
            phrase = t.phrase(const)
            pos = t.pattern.format("", phrase).strip()
            neg = (t.pattern_negated or f"not {t.pattern}").format("", phrase).strip()
            g = by_var.get(var)
            if g is None:
                # property of a variable never introduced: give it its own entity
                g = _Group("entity", var, i, subject="there is a defect",
                          bare="there is a defect")
                groups.append(g)
                by_var[var] = g
                g.parts.append((i, pos, neg))
            else:
                g.parts.append((i, pos, neg))
    return groups


def _render_group_positive(g: _Group) -> str:
    if g.kind == "bare":
        return g.bare
    if not g.parts:
        return g.bare
    phrases = [p for _, p, _ in g.parts]
    if g.kind == "entity":
        return f"{g.subject} which " + " and ".join(phrases)
    return f"{g.subject} " + " and ".join(phrases)


def _sentence(text: str) -> str:
    return text[:1].upper() + text[1:]


def verbalize_clause(clause: HornClause, templates: dict[str, Template] | None = None) -> str:
    """One sentence: 'The part is classified as defective if ...'."""
    templates = templates if templates is not None else default_templates()
    if not clause.body:
        return ALWAYS_DEFECTIVE
    groups = _build_groups(clause, templates)
    return CLAUSE_PREFIX + " and ".join(_render_group_positive(g) for g in groups) + "."


def verbalize_theory(theory: Theory, templates: dict[str, Template] | None = None) -> str:
    if not theory.clauses:
        return NO_RULES
    return "\n".join(verbalize_clause(c, templates) for c in theory.clauses)


def _defect_ordinal(constant: str, superpixel_ids: Sequence[str] | None, fallback: list[str]) -> int:
    ids = list(superpixel_ids) if superpixel_ids is not None else fallback
    ordered = sorted(set(ids), key=natural_key)
    if constant in ordered:
        return ordered.index(constant) + 1
    ordered = sorted(set(ordered + [constant]), key=natural_key)
    return ordered.index(constant) + 1


def verbalize_justification(
    justification,
    clause: HornClause,
    templates: dict[str, Template] | None = None,
    superpixel_ids: Sequence[str] | None = None,
) -> str:
    """Render a trace; failed property groups get 'but ... not' phrasing.

    superpixel_ids fixes the defect ordinals; when omitted they are derived
    from the bound entity constants alone.
    """
    templates = templates if templates is not None else default_templates()
    if len(justification.atom_evals) != len(clause.body):
        raise VerbalizeError(
            f"justification has {len(justification.atom_evals)} atom evaluations "
            f"for a clause body of {len(clause.body)} atoms"
        )
    if not clause.body:
        return ALWAYS_DEFECTIVE
    truths = [e.truth for e in justification.atom_evals]
    groups = _build_groups(clause, templates)
    binding = justification.binding
    bound_entities = [
        binding[g.var] for g in groups if g.kind == "entity" and g.var in binding
    ]

    rendered = []
    for g in groups:
        if g.kind == "bare":
            ok = truths[g.intro_index]
            rendered.append(g.bare if ok else f"it is not the case that {g.bare}")
            continue
        intro_true = truths[g.intro_index]
        true_parts = [p for (i, p, _) in g.parts if truths[i]]
        false_parts = [n for (i, _, n) in g.parts if not truths[i]]
        if g.kind == "entity":
            const = binding.get(g.var, "")
            if not intro_true:
                positive = [p for (_, p, _) in g.parts]
                text = "there is no defect"
                if positive:
                    text += " which " + " and ".join(positive)
                rendered.append(text)
                continue
            ordinal = _defect_ordinal(const, superpixel_ids, bound_entities)
            subject = f"Defect {ordinal}"
            if true_parts and false_parts:
                text = f"{subject} " + " and ".join(true_parts)
                text += ", but it " + " and ".join(false_parts)
            elif true_parts:
                text = f"{subject} " + " and ".join(true_parts)
            elif false_parts:
                text = f"{subject} " + " and ".join(false_parts)
            else:
                text = f"{subject} is present"
            rendered.append(text)
        else:  # functional
            if not g.parts:
                rendered.append(g.bare if intro_true else f"the part has no {g.subject.removeprefix('the ')}")
                continue
            all_true = intro_true and not false_parts
            if all_true:
                rendered.append(f"{g.subject} " + " and ".join(true_parts))
            else:
                negated = [n for (_, _, n) in g.parts]
                rendered.append(f"{g.subject} " + " and ".join(negated))

    body_text = " and ".join(rendered)
    if justification.satisfied:
        return _sentence(body_text) + SATISFIED_SUFFIX
    return _sentence(body_text) + "."


def verbalize_defects(
    record,
    example: SymbolicExample,
    templates: dict[str, Template] | None = None,
) -> str:
    """One line per superpixel: 'Defect k: <size>, <shape>, <location>.'"""
    templates = templates if templates is not None else default_templates()
    if record.image_id != example.image_id:
        raise ValueError(
            f"record is for {record.image_id!r} but example is for {example.image_id!r}"
        )
    if not record.superpixels:
        return NO_DEFECTS
    values: dict[str, dict[str, str]] = {}
    for f in example.facts:
        if f.predicate in ("has_size", "distance_from_center", "eccentricity"):
            values.setdefault(f.args[0], {})[f.predicate] = f.args[1]
    lines = []
    ordered = sorted(record.superpixels, key=lambda s: natural_key(s.superpixel_id))
    for k, sp in enumerate(ordered, start=1):
        v = values.get(sp.superpixel_id)
        if v is None:
            raise VerbalizeError(f"example has no facts for superpixel {sp.superpixel_id!r}")
        size = _template(templates, "has_size").phrase(v["has_size"])
        shape = _template(templates, "eccentricity").phrase(v["eccentricity"])
        where = _template(templates, "distance_from_center").phrase(v["distance_from_center"])
        lines.append(f"Defect {k}: {size}, {shape}, {where}.")
    return "\n".join(lines)
