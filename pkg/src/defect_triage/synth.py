"""Seed-deterministic synthetic masks with ground-truth labels.

Blobs are soft Gaussian bumps (optionally elongated into streaks) placed at
random positions; the grid is quantized to 8-bit before feature extraction
so the in-memory mask and its PGM file agree exactly. Labels come from a
known theory, which makes learner recovery verifiable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .evaluate import entails
from .facts import (
    DEFECTIVE,
    OK,
    IntervalScheme,
    SymbolicExample,
    background_facts,
    default_schemes,
    emit_facts,
    opposite_label,
)
from .learner import Theory, parse_theory
from .masks import DEFAULT_CUTOFF, CertaintyMask, build_feature_record, encode_pgm
from . import facts as _facts


@dataclass
class SynthConfig:
    seed: int
    count: int
    ground_truth_theory: Theory
    image_size: tuple[int, int] = (256, 256)  # (width, height)
    defect_count_range: tuple[int, int] = (0, 3)
    blob_radius_range: tuple[float, float] = (5.0, 24.0)
    elongation_probability: float = 0.35
    label_noise: float = 0.0

    def __post_init__(self):
        if self.count < 0:
            raise ConfigError("count must be >= 0")
        w, h = self.image_size
        if w < 4 or h < 4:
            raise ConfigError("image_size is too small")
        lo, hi = self.defect_count_range
        if lo < 0 or hi < lo:
            raise ConfigError("defect_count_range must be 0 <= min <= max")
        rlo, rhi = self.blob_radius_range
        if rlo <= 0 or rhi < rlo:
            raise ConfigError("blob_radius_range must be 0 < min <= max")
        if not 0.0 <= self.elongation_probability <= 1.0:
            raise ConfigError("elongation_probability must lie in [0, 1]")
        if not 0.0 <= self.label_noise <= 1.0:
            raise ConfigError("label_noise must lie in [0, 1]")
        if not self.ground_truth_theory.clauses:
            raise ConfigError("ground_truth_theory must have at least one clause")


def load_synth_config(path: str | Path) -> SynthConfig:
    """Read a SynthConfig from JSON; ground_truth_theory is a list of clause lines."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read synth config {path}: {exc}") from exc
    try:
        theory = parse_theory("\n".join(raw.pop("ground_truth_theory")))
        known = {
            "seed",
            "count",
            "image_size",
            "defect_count_range",
            "blob_radius_range",
            "elongation_probability",
            "label_noise",
        }
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in raw.items() if k in known}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
        return SynthConfig(ground_truth_theory=theory, **kwargs)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad synth config: {exc}") from exc


def _render_blob(
    grid: np.ndarray,
    center: tuple[float, float],
    sigma_minor: float,
    sigma_major: float,
    theta: float,
) -> None:
    h, w = grid.shape
    rows = np.arange(h)[:, None] - center[0]
    cols = np.arange(w)[None, :] - center[1]
    ct, st = math.cos(theta), math.sin(theta)
    major = ct * cols + st * rows
    minor = -st * cols + ct * rows
    bump = np.exp(-0.5 * ((major / sigma_major) ** 2 + (minor / sigma_minor) ** 2))
    np.maximum(grid, bump, out=grid)


def generate_dataset(
    config: SynthConfig,
    schemes: dict[str, IntervalScheme] | None = None,
    cutoff: float = DEFAULT_CUTOFF,
) -> list[tuple[CertaintyMask, SymbolicExample]]:
    """Masks plus compiled, labeled examples. Same seed, same bytes."""
    schemes = schemes if schemes is not None else default_schemes()
    background = background_facts(schemes)
    rng = np.random.default_rng(config.seed)
    w, h = config.image_size
    out: list[tuple[CertaintyMask, SymbolicExample]] = []
    for i in range(config.count):
        image_id = f"{i:04d}"
        grid = np.zeros((h, w), dtype=float)
        lo, hi = config.defect_count_range
        n_defects = int(rng.integers(lo, hi + 1))
        for _ in range(n_defects):
            sigma = float(rng.uniform(*config.blob_radius_range))
            elongated = bool(rng.random() < config.elongation_probability)
            theta = float(rng.uniform(0.0, 2.0 * math.pi))
            ratio = float(rng.uniform(3.0, 6.0)) if elongated else 1.0
            sigma_major = sigma * math.sqrt(ratio)
            sigma_minor = sigma / math.sqrt(ratio)
            # controlled radial placement: a fraction of defects aims at the
            # outer corner annulus (the only region reaching the outer band),
            # the rest spreads over the disc; the margin scales with the blob
            # so edge clipping stays bounded
            center_r, center_c = (h - 1) / 2.0, (w - 1) / 2.0
            half_diag = math.hypot(center_r, center_c)
            if rng.random() < 0.4:
                u = float(rng.uniform(0.76, 0.92))
                corner = int(rng.integers(0, 4))
                phi = math.pi / 4.0 + corner * math.pi / 2.0 + float(rng.uniform(-0.25, 0.25))
            else:
                u = float(rng.uniform(0.0, 1.0)) ** (1.0 / 3.0)
                phi = float(rng.uniform(0.0, 2.0 * math.pi))
            margin = min(max(2.0, sigma), (min(w, h) - 1) / 3.0)
            r0 = min(max(center_r + u * half_diag * math.sin(phi), margin), h - 1 - margin)
            c0 = min(max(center_c + u * half_diag * math.cos(phi), margin), w - 1 - margin)
            _render_blob(grid, (r0, c0), sigma_minor, sigma_major, theta)
        # quantize exactly like the PGM file so features match on reload
        grid = np.rint(np.clip(grid, 0.0, 1.0) * 255.0) / 255.0
        mask = CertaintyMask(image_id, w, h, grid)
        record = build_feature_record(mask, cutoff)
        example = _facts.compile_example(record, schemes=schemes, provenance="annotated")
        label = DEFECTIVE if entails(config.ground_truth_theory, example, background) else OK
        if config.label_noise > 0.0 and rng.random() < config.label_noise:
            label = opposite_label(label)
        out.append((mask, example.with_label(label, "annotated")))
    return out


def materialize_dataset(
    config: SynthConfig,
    out_dir: str | Path,
    schemes: dict[str, IntervalScheme] | None = None,
    cutoff: float = DEFAULT_CUTOFF,
    write_facts: bool = True,
) -> list[tuple[CertaintyMask, SymbolicExample]]:
    """Write masks/<id>.pgm, facts/<id>.pl, labels.tsv and manifest.tsv."""
    out_dir = Path(out_dir)
    masks_dir = out_dir / "masks"
    masks_dir.mkdir(parents=True, exist_ok=True)
    data = generate_dataset(config, schemes, cutoff)
    manifest_lines = []
    label_lines = []
    for mask, example in data:
        (masks_dir / f"{mask.image_id}.pgm").write_bytes(encode_pgm(mask))
        manifest_lines.append(f"{mask.image_id}\t{example.label}\t{example.provenance}")
        label_lines.append(f"{mask.image_id}\t{example.label}")
    if write_facts:
        facts_dir = out_dir / "facts"
        facts_dir.mkdir(parents=True, exist_ok=True)
        for _, example in data:
            (facts_dir / f"{example.image_id}.pl").write_text(emit_facts(example))
    (out_dir / "manifest.tsv").write_text("\n".join(manifest_lines) + "\n" if manifest_lines else "")
    (out_dir / "labels.tsv").write_text("\n".join(label_lines) + "\n" if label_lines else "")
    return data
