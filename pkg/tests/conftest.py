import pytest

from defect_triage.facts import background_facts, default_schemes
from defect_triage.learner import LearnerConfig, parse_theory
from defect_triage.masks import FeatureRecord, Superpixel
from defect_triage.synth import SynthConfig, generate_dataset

GROUND_TRUTH = (
    "defective(A) :- has_hp(A,B), has_size(B,vol_large), distance_from_center(B,outer_rim).\n"
)


@pytest.fixture(scope="session")
def schemes():
    return default_schemes()


@pytest.fixture(scope="session")
def background(schemes):
    return background_facts(schemes)


@pytest.fixture(scope="session")
def ground_truth_theory():
    return parse_theory(GROUND_TRUTH)


@pytest.fixture(scope="session")
def listing_record():
    """Single large, very elongated superpixel at the outer rim of image 6858."""
    sp = Superpixel(
        superpixel_id="hp_6858_2",
        pixels=frozenset({(1, 1)}),
        mass=2000.0,
        centroid=(1.0, 1.0),
        center_distance=0.8,
        eccentricity=0.95,
    )
    return FeatureRecord("6858", (sp,), 1, 2000.0)


@pytest.fixture(scope="session")
def synth86(ground_truth_theory):
    """86 clean examples from the known rule (the learner-recovery workload)."""
    config = SynthConfig(seed=7, count=86, ground_truth_theory=ground_truth_theory)
    return generate_dataset(config)


@pytest.fixture(scope="session")
def noise_free_config():
    return LearnerConfig(noise=0, max_body_atoms=4, search_depth=50, beam_width=5, min_pos=2)
