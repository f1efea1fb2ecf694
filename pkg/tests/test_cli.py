import json

import pytest
from click.testing import CliRunner

from defect_triage.cli import cli, main
from defect_triage.facts import compile_example, emit_facts
from defect_triage.masks import build_feature_record, encode_pgm, load_mask
from defect_triage.synth import SynthConfig, materialize_dataset

SYNTH_CONFIG = {
    "seed": 13,
    "count": 20,
    "ground_truth_theory": [
        "defective(A) :- has_hp(A,B), has_size(B,vol_large), distance_from_center(B,outer_rim)."
    ],
    "image_size": [128, 128],
    "blob_radius_range": [3.0, 16.0],
    "label_noise": 0.0,
}


@pytest.fixture(scope="module")
def dataset_dir(ground_truth_theory, tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_data")
    config = SynthConfig(seed=7, count=30, ground_truth_theory=ground_truth_theory)
    materialize_dataset(config, root)
    return root


@pytest.fixture()
def runner():
    return CliRunner()


class TestExtract:
    def test_matches_library_output(self, dataset_dir, runner):
        mask_path = dataset_dir / "masks" / "0000.pgm"
        result = runner.invoke(cli, ["extract", str(mask_path)])
        assert result.exit_code == 0
        mask = load_mask(mask_path.read_bytes(), "0000")
        expected = emit_facts(compile_example(build_feature_record(mask, 0.3)))
        assert result.output == expected

    def test_out_dir(self, dataset_dir, runner, tmp_path):
        mask_path = dataset_dir / "masks" / "0001.pgm"
        result = runner.invoke(cli, ["extract", str(mask_path), "--out-dir", str(tmp_path)])
        assert result.exit_code == 0
        assert (tmp_path / "0001.pl").read_text() == (dataset_dir / "facts" / "0001.pl").read_text()

    def test_bad_mask_is_data_error(self, tmp_path):
        bad = tmp_path / "bad.pgm"
        bad.write_bytes(b"P2\n2 2\n255\n0 0 0\n")
        assert main(["extract", str(bad)]) == 2


class TestTrainEval:
    def test_train_then_eval(self, dataset_dir, runner, tmp_path):
        theory_file = tmp_path / "theory.pl"
        result = runner.invoke(
            cli,
            [
                "train",
                str(dataset_dir / "facts"),
                str(dataset_dir / "labels.tsv"),
                "--noise",
                "0",
                "--theory-out",
                str(theory_file),
            ],
        )
        assert result.exit_code == 0, result.output
        assert "defective(A) :-" in result.output
        assert "% The part is classified as defective if" in result.output
        assert "% accuracy:" in result.output
        # stdout's clause lines parse back to the written theory
        from defect_triage.learner import parse_theory, theory_to_text

        assert theory_to_text(parse_theory(result.output)) == theory_file.read_text()

        eval_result = runner.invoke(
            cli, ["eval", str(theory_file), str(dataset_dir / "facts" / "0000.pl")]
        )
        assert eval_result.exit_code == 0
        # byte-identical to the corresponding library calls
        from defect_triage.evaluate import evaluate
        from defect_triage.facts import (
            background_facts,
            default_schemes,
            example_from_facts,
            parse_facts,
        )
        from defect_triage.learner import parse_theory
        from defect_triage.verbalize import verbalize_justification

        theory = parse_theory(theory_file.read_text())
        example = example_from_facts(
            parse_facts((dataset_dir / "facts" / "0000.pl").read_text())
        )
        classification = evaluate(theory, example, background_facts(default_schemes()))
        expected = [f"{example.image_id}: {classification.label}"]
        for j in classification.justifications:
            marker = "satisfied" if j.satisfied else "miss"
            text = verbalize_justification(
                j, theory.clauses[j.clause_index],
                superpixel_ids=example.superpixel_constants(),
            )
            expected.append(f"  [{marker}] {text}")
        assert eval_result.output == "\n".join(expected) + "\n"

    def test_eval_empty_theory(self, dataset_dir, runner, tmp_path):
        theory_file = tmp_path / "empty.pl"
        theory_file.write_text("")
        result = runner.invoke(
            cli, ["eval", str(theory_file), str(dataset_dir / "facts" / "0000.pl")]
        )
        assert result.exit_code == 0
        assert result.output == "cast_0000: ok\n"

    def test_missing_labels_file_is_usage_error(self, dataset_dir):
        assert main(["train", str(dataset_dir / "facts"), str(dataset_dir / "nope.tsv")]) == 1

    def test_bad_learner_config_is_learner_error(self, dataset_dir, tmp_path):
        config = tmp_path / "learner.json"
        config.write_text(json.dumps({"noise": -3}))
        code = main(
            [
                "train",
                str(dataset_dir / "facts"),
                str(dataset_dir / "labels.tsv"),
                "--config",
                str(config),
            ]
        )
        assert code == 3


class TestSynthCommand:
    def test_materializes(self, runner, tmp_path):
        config_file = tmp_path / "synth.json"
        config_file.write_text(json.dumps(SYNTH_CONFIG))
        out = tmp_path / "out"
        result = runner.invoke(cli, ["synth", str(config_file), str(out)])
        assert result.exit_code == 0, result.output
        assert len(list((out / "masks").glob("*.pgm"))) == 20
        assert (out / "labels.tsv").exists()
        assert (out / "manifest.tsv").exists()

    def test_bad_config_is_learner_error(self, tmp_path):
        config_file = tmp_path / "synth.json"
        config_file.write_text(json.dumps({"seed": 1}))
        assert main(["synth", str(config_file), str(tmp_path / "out")]) == 3


class TestReportCommand:
    def test_writes_figures_and_tsv(self, dataset_dir, runner, tmp_path):
        theory_file = tmp_path / "theory.pl"
        theory_file.write_text(
            "defective(A) :- has_hp(A,B), has_size(B,vol_large), "
            "distance_from_center(B,outer_rim).\n"
        )
        out = tmp_path / "report"
        result = runner.invoke(
            cli,
            [
                "report",
                str(dataset_dir / "masks"),
                "-o",
                str(out),
                "--theory",
                str(theory_file),
            ],
        )
        assert result.exit_code == 0, result.output
        lines = (out / "report.tsv").read_text().splitlines()
        assert lines[0].split("\t") == [
            "image_id", "classification", "num_defects", "total_volume",
            "satisfied_rules", "figure",
        ]
        assert len(lines) == 31
        figures = list((out / "figures").glob("*.png"))
        assert len(figures) == 30
        # classifications in the table agree with the labels file
        labels = dict(
            line.split("\t")
            for line in (dataset_dir / "labels.tsv").read_text().splitlines()
        )
        for line in lines[1:]:
            image_id, classification = line.split("\t")[:2]
            assert classification == labels[image_id]


class TestConfigFiles:
    def test_custom_schemes_change_discretization(self, dataset_dir, runner, tmp_path):
        schemes = {
            "size": {"constants": ["vol_small", "vol_medium", "vol_large"], "thresholds": [5, 10]},
            "total_volume": {
                "constants": ["tvol_small", "tvol_medium", "tvol_large"],
                "thresholds": [10, 20],
            },
            "distance": {"constants": ["center", "inner_rim", "outer_rim"], "thresholds": [0.35, 0.75]},
            "eccentricity": {
                "constants": ["round", "elongated", "very_elongated"],
                "thresholds": [0.6, 0.9],
            },
            "count": {"constants": ["cnt_0", "cnt_1", "cnt_2", "cnt_many"], "thresholds": [1, 2, 3]},
        }
        path = tmp_path / "schemes.json"
        path.write_text(json.dumps(schemes))
        mask_path = dataset_dir / "masks" / "0000.pgm"
        default = runner.invoke(cli, ["extract", str(mask_path)]).output
        custom = runner.invoke(cli, ["extract", str(mask_path), "--schemes", str(path)]).output
        assert "tvol_large" in custom  # tiny thresholds push everything up
        assert default != custom

    def test_bad_scheme_file_is_config_error(self, dataset_dir, tmp_path):
        path = tmp_path / "schemes.json"
        path.write_text(json.dumps({"weight": {"constants": ["w1"], "thresholds": []}}))
        mask_path = dataset_dir / "masks" / "0000.pgm"
        assert main(["extract", str(mask_path), "--schemes", str(path)]) == 3

    def test_custom_templates_reword_output(self, dataset_dir, runner, tmp_path):
        from defect_triage.verbalize import default_templates

        registry = {}
        for pred, t in default_templates().items():
            registry[pred] = {
                "functional": t.functional,
                "pattern": t.pattern,
                "pattern_negated": t.pattern_negated,
                "pattern_bare": t.pattern_bare,
                "lexicon": dict(t.value_lexicon),
            }
        registry["has_size"]["lexicon"]["vol_large"] = "huge"
        path = tmp_path / "templates.json"
        path.write_text(json.dumps(registry))
        theory_file = tmp_path / "theory.pl"
        theory_file.write_text("defective(A) :- has_hp(A,B), has_size(B,vol_large).\n")
        facts = dataset_dir / "facts" / "0000.pl"
        out = runner.invoke(
            cli, ["eval", str(theory_file), str(facts), "--templates", str(path)]
        ).output
        default_out = runner.invoke(cli, ["eval", str(theory_file), str(facts)]).output
        if "large" in default_out:
            assert "huge" in out


class TestUsage:
    def test_no_args_usage(self):
        assert main([]) in (0, 1)  # click prints help; no crash

    def test_unknown_command(self):
        assert main(["frobnicate"]) == 1
