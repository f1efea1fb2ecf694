"""Symbolic fact layer: atoms, interval discretization and the Prolog-style fact format.

Numeric features are mapped onto a small vocabulary of interval constants
(per-sort schemes with fixed thresholds), and every image becomes a flat
list of ground atoms such as ``has_size(hp_6858_2,vol_large)``.
"""

from __future__ import annotations

import json
import re
from bisect import bisect_right
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, FactSyntaxError

OK = "ok"
DEFECTIVE = "defective"
UNLABELED = "unlabeled"
LABELS = (OK, DEFECTIVE, UNLABELED)

PROVENANCES = ("annotated", "inferred", "user_feedback", "dummy")

CONSTANT_RE = re.compile(r"^[a-z][a-zA-Z0-9_]*$")
VARIABLE_RE = re.compile(r"^[A-Z][a-zA-Z0-9_]*$")

# Value sort produced by each feature predicate's second argument.
VALUE_SORT_OF_PREDICATE = {
    "has_size": "size",
    "distance_from_center": "distance",
    "eccentricity": "eccentricity",
    "num_hps": "count",
    "total_volume": "total_volume",
}


def is_variable(name: str) -> bool:
    return name[:1].isupper()


@dataclass(frozen=True)
class Atom:
    """A predicate applied to terms. Terms are names: uppercase-initial = variable."""

    predicate: str
    args: tuple[str, ...]

    def __str__(self) -> str:
        return f"{self.predicate}({','.join(self.args)})"

    @property
    def is_ground(self) -> bool:
        return not any(is_variable(a) for a in self.args)

    def variables(self) -> list[str]:
        return [a for a in self.args if is_variable(a)]

    def substitute(self, binding: dict[str, str]) -> "Atom":
        return Atom(self.predicate, tuple(binding.get(a, a) for a in self.args))


def atom(predicate: str, *args: str) -> Atom:
    return Atom(predicate, tuple(args))


@dataclass(frozen=True)
class IntervalScheme:
    """Ordered interval constants for one sort, with the thresholds between them."""

    sort_name: str
    constants: tuple[str, ...]
    thresholds: tuple[float, ...]

    def __post_init__(self):
        if not self.constants:
            raise ConfigError(f"sort {self.sort_name!r} has no constants")
        if len(self.thresholds) != len(self.constants) - 1:
            raise ConfigError(
                f"sort {self.sort_name!r}: expected {len(self.constants) - 1} thresholds, "
                f"got {len(self.thresholds)}"
            )
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ConfigError(f"sort {self.sort_name!r}: thresholds must be strictly ascending")
        if len(set(self.constants)) != len(self.constants):
            raise ConfigError(f"sort {self.sort_name!r}: duplicate constants")
        for c in self.constants:
            if not CONSTANT_RE.match(c):
                raise ConfigError(f"sort {self.sort_name!r}: invalid constant name {c!r}")

    def constant_for(self, x: float) -> str:
        # boundary values fall into the upper interval
        return self.constants[bisect_right(self.thresholds, x)]


def default_schemes() -> dict[str, IntervalScheme]:
    """The built-in discretization schemes. Thresholds are configuration, not code."""
    schemes = [
        IntervalScheme("size", ("vol_small", "vol_medium", "vol_large"), (200.0, 900.0)),
        IntervalScheme(
            "total_volume", ("tvol_small", "tvol_medium", "tvol_large"), (300.0, 1800.0)
        ),
        IntervalScheme("distance", ("center", "inner_rim", "outer_rim"), (0.35, 0.75)),
        IntervalScheme("eccentricity", ("round", "elongated", "very_elongated"), (0.6, 0.9)),
        IntervalScheme("count", ("cnt_0", "cnt_1", "cnt_2", "cnt_many"), (1.0, 2.0, 3.0)),
    ]
    return {s.sort_name: s for s in schemes}


KNOWN_SORTS = ("size", "total_volume", "distance", "eccentricity", "count")


def validate_schemes(schemes: dict[str, IntervalScheme]) -> None:
    """Sorts must be the known five and constants unique across sorts."""
    seen: dict[str, str] = {}
    for sort, scheme in schemes.items():
        if sort not in KNOWN_SORTS:
            raise ConfigError(f"unknown sort {sort!r} (expected one of {KNOWN_SORTS})")
        if sort != scheme.sort_name:
            raise ConfigError(f"scheme registered under {sort!r} is named {scheme.sort_name!r}")
        for c in scheme.constants:
            if c in seen:
                raise ConfigError(f"constant {c!r} appears in both {seen[c]!r} and {sort!r}")
            seen[c] = sort


def load_schemes(path: str | Path) -> dict[str, IntervalScheme]:
    """Load interval schemes from a JSON file: {sort: {constants: [...], thresholds: [...]}}."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read scheme file {path}: {exc}") from exc
    schemes: dict[str, IntervalScheme] = {}
    for sort, entry in raw.items():
        try:
            schemes[sort] = IntervalScheme(
                sort, tuple(entry["constants"]), tuple(float(t) for t in entry["thresholds"])
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"scheme {sort!r}: {exc}") from exc
    validate_schemes(schemes)
    return schemes


def discretize(sort: str, x: float, schemes: dict[str, IntervalScheme] | None = None) -> str:
    """Map a non-negative value to its interval constant for the given sort."""
    schemes = schemes if schemes is not None else default_schemes()
    if sort not in schemes:
        raise ConfigError(f"no interval scheme registered for sort {sort!r}")
    if x < 0:
        raise ValueError(f"discretize expects x >= 0, got {x}")
    return schemes[sort].constant_for(x)


def sort_of_constant(name: str, schemes: dict[str, IntervalScheme]) -> str | None:
    for scheme in schemes.values():
        if name in scheme.constants:
            return scheme.sort_name
    return None


def natural_key(name: str):
    """Sort key treating digit runs numerically, so hp_x_2 < hp_x_10."""
    return tuple(
        (0, int(tok)) if tok.isdigit() else (1, tok)
        for tok in re.split(r"(\d+)", name)
        if tok
    )


def image_constant(image_id: str) -> str:
    """Entity constant for an image: cast_<id> unless the id already carries a prefix."""
    const = image_id if re.match(r"^[a-z][a-zA-Z0-9]*_", image_id) else f"cast_{image_id}"
    if not CONSTANT_RE.match(const):
        raise ValueError(f"image id {image_id!r} does not yield a valid constant")
    return const


@dataclass(frozen=True)
class SymbolicExample:
    """One image's ground facts plus an optional class label."""

    image_id: str
    facts: tuple[Atom, ...]
    label: str = UNLABELED
    provenance: str = "inferred"

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown label {self.label!r}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        for f in self.facts:
            if not f.is_ground:
                raise ValueError(f"example facts must be ground, got {f}")

    @property
    def image_constant(self) -> str:
        for f in self.facts:
            if f.predicate in ("total_volume", "num_hps", "has_hp") and f.args:
                return f.args[0]
        return image_constant(self.image_id)

    def superpixel_constants(self) -> list[str]:
        """Superpixel entity constants, in natural id order."""
        seen = []
        for f in self.facts:
            if f.predicate == "has_hp" and len(f.args) == 2 and f.args[1] not in seen:
                seen.append(f.args[1])
        return sorted(seen, key=natural_key)

    def with_label(self, label: str, provenance: str) -> "SymbolicExample":
        return replace(self, label=label, provenance=provenance)


def opposite_label(label: str) -> str:
    if label == OK:
        return DEFECTIVE
    if label == DEFECTIVE:
        return OK
    raise ValueError(f"label {label!r} has no opposite")


def compile_example(
    record,
    label: str = UNLABELED,
    schemes: dict[str, IntervalScheme] | None = None,
    provenance: str = "inferred",
) -> SymbolicExample:
    """Turn a FeatureRecord into ground facts.

    Emission order: total_volume, num_hps, then per superpixel (natural id
    order) has_hp, has_size, distance_from_center, eccentricity.
    """
    schemes = schemes if schemes is not None else default_schemes()
    img = image_constant(record.image_id)
    facts = [
        atom("total_volume", img, discretize("total_volume", record.total_volume, schemes)),
        atom("num_hps", img, discretize("count", record.num_hps, schemes)),
    ]
    for sp in sorted(record.superpixels, key=lambda s: natural_key(s.superpixel_id)):
        sp_const = sp.superpixel_id
        if not CONSTANT_RE.match(sp_const):
            raise ValueError(f"superpixel id {sp_const!r} is not a valid constant")
        facts.append(atom("has_hp", img, sp_const))
        facts.append(atom("has_size", sp_const, discretize("size", sp.mass, schemes)))
        facts.append(
            atom(
                "distance_from_center",
                sp_const,
                discretize("distance", sp.center_distance, schemes),
            )
        )
        facts.append(
            atom("eccentricity", sp_const, discretize("eccentricity", sp.eccentricity, schemes))
        )
    return SymbolicExample(record.image_id, tuple(facts), label, provenance)


def emit_atoms(atoms: Iterable[Atom]) -> str:
    """One fact per line, no spaces, period-terminated; trailing newline if non-empty."""
    lines = [f"{a}." for a in atoms]
    return "\n".join(lines) + "\n" if lines else ""


def emit_facts(example: SymbolicExample) -> str:
    return emit_atoms(example.facts)


_IDENT_RE = re.compile(r"[A-Za-z][A-Za-z0-9_]*")


def _parse_fact_line(line: str, lineno: int) -> Atom:
    pos = 0
    n = len(line)

    def skip_ws():
        nonlocal pos
        while pos < n and line[pos] in " \t":
            pos += 1

    def fail(msg: str):
        raise FactSyntaxError(msg, lineno, pos + 1)

    def ident() -> str:
        skip_ws()
        m = _IDENT_RE.match(line, pos)
        if not m:
            fail("expected a name")
        return m.group(0)

    skip_ws()
    pred = ident()
    if is_variable(pred):
        fail(f"predicate {pred!r} must start lowercase")
    pos += len(pred)
    skip_ws()
    if pos >= n or line[pos] != "(":
        fail("expected '('")
    pos += 1
    args: list[str] = []
    while True:
        name = ident()
        if is_variable(name):
            fail(f"facts must be ground: {name!r} is a variable")
        args.append(name)
        pos += len(name)
        skip_ws()
        if pos < n and line[pos] == ",":
            pos += 1
            continue
        if pos < n and line[pos] == ")":
            pos += 1
            break
        fail("expected ',' or ')'")
    skip_ws()
    if pos >= n or line[pos] != ".":
        fail("expected '.'")
    pos += 1
    skip_ws()
    if pos != n:
        fail("trailing characters after '.'")
    return Atom(pred, tuple(args))


def parse_facts(text: str) -> list[Atom]:
    """Parse the fact format back in. Blank lines and %-comments are skipped."""
    atoms: list[Atom] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        stripped = line.strip()
        if not stripped or stripped.startswith("%"):
            continue
        atoms.append(_parse_fact_line(line, lineno))
    return atoms


def example_from_facts(
    facts: Sequence[Atom], image_id: str | None = None, label: str = UNLABELED,
    provenance: str = "inferred",
) -> SymbolicExample:
    """Wrap parsed facts as an example, inferring the image id from the facts."""
    if image_id is None:
        img = None
        for f in facts:
            if f.predicate in ("total_volume", "num_hps", "has_hp") and f.args:
                img = f.args[0]
                break
        if img is None and facts:
            img = facts[0].args[0] if facts[0].args else None
        image_id = img if img is not None else "unknown"
    return SymbolicExample(image_id, tuple(facts), label, provenance)


def background_facts(schemes: dict[str, IntervalScheme] | Iterable[IntervalScheme]) -> list[Atom]:
    """num_leq(ci,cj) for all i <= j within each sort; sorts never mix."""
    if isinstance(schemes, dict):
        schemes = schemes.values()
    out: list[Atom] = []
    for scheme in schemes:
        cs = scheme.constants
        for i in range(len(cs)):
            for j in range(i, len(cs)):
                out.append(atom("num_leq", cs[i], cs[j]))
    return out
