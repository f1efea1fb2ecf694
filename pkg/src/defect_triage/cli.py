"""Batch command-line entry points for the pipeline.

Exit codes: 0 success, 1 usage, 2 data error, 3 learner/configuration error.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .errors import (
    ConfigError,
    DummyConstructionError,
    FactSyntaxError,
    LogCorruptedError,
    MaskFormatError,
    TheorySyntaxError,
    TriageError,
    UnknownImageError,
    VerbalizeError,
)
from .evaluate import evaluate
from .facts import (
    DEFECTIVE,
    OK,
    background_facts,
    compile_example,
    default_schemes,
    emit_facts,
    example_from_facts,
    load_schemes,
    natural_key,
    parse_facts,
)
from .learner import (
    LearnerConfig,
    Theory,
    clause_to_text,
    learn_theory,
    load_learner_config,
    parse_theory,
)
from .masks import DEFAULT_CUTOFF, build_feature_record, load_mask
from .verbalize import (
    default_templates,
    load_templates,
    verbalize_clause,
    verbalize_defects,
    verbalize_justification,
)

_DATA_ERRORS = (
    MaskFormatError,
    FactSyntaxError,
    TheorySyntaxError,
    LogCorruptedError,
    UnknownImageError,
    DummyConstructionError,
)
_CONFIG_ERRORS = (ConfigError, VerbalizeError)


def _schemes_from(path: str | None):
    return load_schemes(path) if path else default_schemes()


def _templates_from(path: str | None):
    return load_templates(path) if path else default_templates()


@click.group()
def cli():
    """Defect triage pipeline: masks to facts to rules to explanations."""


@cli.command()
@click.argument("masks", nargs=-1, required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--cutoff", default=DEFAULT_CUTOFF, show_default=True, help="Certainty cutoff.")
@click.option("--mass-scale", default=1.0, show_default=True, help="Pixel value calibration.")
@click.option("--schemes", "schemes_path", type=click.Path(exists=True), default=None)
@click.option("--out-dir", type=click.Path(path_type=Path), default=None,
              help="Write <id>.pl per mask instead of printing.")
def extract(masks, cutoff, mass_scale, schemes_path, out_dir):
    """Print (or write) the fact representation of mask files."""
    schemes = _schemes_from(schemes_path)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    for path in masks:
        mask = load_mask(path.read_bytes(), path.stem, mass_scale)
        record = build_feature_record(mask, cutoff)
        text = emit_facts(compile_example(record, schemes=schemes))
        if out_dir is not None:
            (out_dir / f"{path.stem}.pl").write_text(text)
        else:
            click.echo(text, nl=False)


def _read_labels_file(path: Path) -> dict[str, str]:
    labels = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) < 2 or parts[1] not in (OK, DEFECTIVE):
            raise FactSyntaxError(f"bad label line {line!r}", lineno, 1)
        labels[parts[0]] = parts[1]
    return labels


@cli.command()
@click.argument("facts_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.argument("labels_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Learner config JSON.")
@click.option("--noise", type=int, default=None, help="Max negatives a clause may cover.")
@click.option("--search-depth", type=int, default=None)
@click.option("--beam-width", type=int, default=None)
@click.option("--min-pos", type=int, default=None)
@click.option("--max-body-atoms", type=int, default=None)
@click.option("--schemes", "schemes_path", type=click.Path(exists=True), default=None)
@click.option("--templates", "templates_path", type=click.Path(exists=True), default=None)
@click.option("--theory-out", type=click.Path(path_type=Path), default=None,
              help="Also write the serialized theory to this file.")
def train(facts_dir, labels_file, config_path, noise, search_depth, beam_width, min_pos,
          max_body_atoms, schemes_path, templates_path, theory_out):
    """Learn a theory from <facts-dir>/*.pl and a labels file (image_id<TAB>ok|defective)."""
    schemes = _schemes_from(schemes_path)
    templates = _templates_from(templates_path)
    config = load_learner_config(config_path) if config_path else LearnerConfig()
    overrides = {
        "noise": noise,
        "search_depth": search_depth,
        "beam_width": beam_width,
        "min_pos": min_pos,
        "max_body_atoms": max_body_atoms,
    }
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        import dataclasses

        config = dataclasses.replace(config, **overrides)

    labels = _read_labels_file(labels_file)
    examples = []
    for image_id in sorted(labels, key=natural_key):
        path = facts_dir / f"{image_id}.pl"
        if not path.exists():
            raise FactSyntaxError(f"no facts file for labeled image {image_id!r}", 0, 0)
        atoms = parse_facts(path.read_text())
        examples.append(example_from_facts(atoms, image_id, labels[image_id], "annotated"))

    background = background_facts(schemes)
    positives = [e for e in examples if e.label == DEFECTIVE]
    negatives = [e for e in examples if e.label == OK]
    theory = learn_theory(positives, negatives, background, config=config)

    serialized = "".join(clause_to_text(c) + "\n" for c in theory.clauses)
    click.echo(serialized, nl=False)
    for c in theory.clauses:
        click.echo(f"% {verbalize_clause(c, templates)}")
    stats = theory.train_stats
    click.echo(
        f"% accuracy: {stats.accuracy:.4f} "
        f"(positives covered {stats.positives_covered}, "
        f"negatives covered {stats.negatives_covered}, "
        f"examples {stats.total_examples})"
    )
    if theory_out is not None:
        theory_out.write_text(serialized)


@cli.command("eval")
@click.argument("theory_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("facts_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--schemes", "schemes_path", type=click.Path(exists=True), default=None)
@click.option("--templates", "templates_path", type=click.Path(exists=True), default=None)
def eval_cmd(theory_file, facts_file, schemes_path, templates_path):
    """Classify one image's facts and print the verbalized justifications."""
    schemes = _schemes_from(schemes_path)
    templates = _templates_from(templates_path)
    theory = parse_theory(theory_file.read_text())
    atoms = parse_facts(facts_file.read_text())
    example = example_from_facts(atoms, image_id=None if atoms else facts_file.stem)
    background = background_facts(schemes)
    classification = evaluate(theory, example, background)
    click.echo(f"{example.image_id}: {classification.label}")
    sp_ids = example.superpixel_constants()
    for j in classification.justifications:
        marker = "satisfied" if j.satisfied else "miss"
        text = verbalize_justification(
            j, theory.clauses[j.clause_index], templates, superpixel_ids=sp_ids
        )
        click.echo(f"  [{marker}] {text}")


@cli.command()
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("out_dir", type=click.Path(path_type=Path))
@click.option("--schemes", "schemes_path", type=click.Path(exists=True), default=None)
def synth(config_file, out_dir, schemes_path):
    """Materialize a synthetic dataset (masks, facts, labels, manifest)."""
    from .synth import load_synth_config, materialize_dataset

    config = load_synth_config(config_file)
    data = materialize_dataset(config, out_dir, _schemes_from(schemes_path))
    n_def = sum(1 for _, ex in data if ex.label == DEFECTIVE)
    click.echo(f"wrote {len(data)} masks to {out_dir} ({n_def} defective)")


@cli.command()
@click.argument("masks_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("-o", "--out-dir", type=click.Path(path_type=Path), required=True)
@click.option("--theory", "theory_path", type=click.Path(exists=True), default=None,
              help="Serialized theory; defaults to an empty one.")
@click.option("--cutoff", default=DEFAULT_CUTOFF, show_default=True)
@click.option("--mass-scale", default=1.0, show_default=True)
@click.option("--schemes", "schemes_path", type=click.Path(exists=True), default=None)
def report(masks_dir, out_dir, theory_path, cutoff, mass_scale, schemes_path):
    """Render overlay figures and a TSV summary for a directory of masks."""
    from .report import write_report

    schemes = _schemes_from(schemes_path)
    theory = parse_theory(Path(theory_path).read_text()) if theory_path else Theory(())
    background = background_facts(schemes)
    items = []
    for path in sorted(masks_dir.glob("*.pgm"), key=lambda p: natural_key(p.stem)):
        mask = load_mask(path.read_bytes(), path.stem, mass_scale)
        record = build_feature_record(mask, cutoff)
        example = compile_example(record, schemes=schemes)
        items.append((mask, record, example, evaluate(theory, example, background)))
    rows = write_report(items, out_dir)
    click.echo(f"wrote report.tsv and {len(rows)} figures to {out_dir}")


@cli.command()
@click.argument("kb_dir", type=click.Path(exists=True, file_okay=False, path_type=Path),
                envvar="DEFECT_TRIAGE_DATA")
@click.option("--host", default="127.0.0.1", show_default=True, envvar="DEFECT_TRIAGE_HOST")
@click.option("--port", default=8008, show_default=True, envvar="DEFECT_TRIAGE_PORT")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              envvar="DEFECT_TRIAGE_LEARNER_CONFIG")
@click.option("--templates", "templates_path", type=click.Path(exists=True), default=None,
              envvar="DEFECT_TRIAGE_TEMPLATES")
@click.option("--cutoff", default=DEFAULT_CUTOFF, show_default=True)
@click.option("--mass-scale", default=1.0, show_default=True)
@click.option("--frontend", type=click.Path(exists=True, file_okay=False), default=None,
              envvar="DEFECT_TRIAGE_FRONTEND", help="Static UI bundle to serve at /.")
def serve(kb_dir, host, port, config_path, templates_path, cutoff, mass_scale, frontend):
    """Run the review service over a data directory of masks."""
    import uvicorn

    from .service import create_app

    app = create_app(
        kb_dir,
        learner_config=load_learner_config(config_path) if config_path else None,
        templates=_templates_from(templates_path),
        cutoff=cutoff,
        mass_scale=mass_scale,
        frontend_dir=frontend,
    )
    uvicorn.run(app, host=host, port=port)


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        return 1
    except click.UsageError as exc:
        exc.show()
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except _DATA_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except FileNotFoundError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except ValueError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except _CONFIG_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
