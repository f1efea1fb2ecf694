"""Interactive defect triage: masks to facts to Horn rules to verbalized review."""

from .errors import (
    ConfigError,
    DummyConstructionError,
    FactSyntaxError,
    LogCorruptedError,
    MaskFormatError,
    StaleVerdictError,
    TheorySyntaxError,
    TriageError,
    UnknownImageError,
    VerbalizeError,
)
from .facts import (
    Atom,
    DEFECTIVE,
    OK,
    UNLABELED,
    IntervalScheme,
    SymbolicExample,
    atom,
    background_facts,
    compile_example,
    default_schemes,
    discretize,
    emit_facts,
    load_schemes,
    parse_facts,
)
from .masks import (
    CertaintyMask,
    FeatureRecord,
    Superpixel,
    build_feature_record,
    compute_center_distance,
    compute_eccentricity,
    encode_pgm,
    extract_superpixels,
    load_mask,
)
from .learner import (
    HornClause,
    LearnerConfig,
    ModeDeclaration,
    Theory,
    TrainStats,
    clause_covers,
    clause_to_text,
    default_modes,
    learn_theory,
    parse_clause,
    parse_theory,
    theory_accuracy,
    theory_to_text,
)
from .evaluate import AtomEvaluation, Classification, Justification, entails, evaluate
from .verbalize import (
    Template,
    default_templates,
    load_templates,
    validate_templates,
    verbalize_clause,
    verbalize_defects,
    verbalize_justification,
    verbalize_theory,
)
from .feedback import KnowledgeBase, Verdict, load_kb, make_dummy_example, save_kb
from .synth import SynthConfig, generate_dataset, materialize_dataset

__version__ = "0.1.0"
