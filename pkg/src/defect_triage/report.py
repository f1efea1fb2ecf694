"""Batch reporting: per-image overlay figures plus a delimited summary table.

For each mask the report shows the certainty heatmap with numbered defect
bounding boxes and the classification in the title; report.tsv carries one
row per image for downstream tooling.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib import patches

from .evaluate import Classification
from .facts import SymbolicExample, natural_key
from .masks import CertaintyMask, FeatureRecord

TSV_HEADER = "image_id\tclassification\tnum_defects\ttotal_volume\tsatisfied_rules\tfigure"


@dataclass
class ReportRow:
    image_id: str
    classification: str
    num_defects: int
    total_volume: float
    satisfied_rules: tuple[int, ...]
    figure: str

    def tsv(self) -> str:
        rules = ";".join(str(i) for i in self.satisfied_rules)
        return (
            f"{self.image_id}\t{self.classification}\t{self.num_defects}"
            f"\t{self.total_volume:.3f}\t{rules}\t{self.figure}"
        )


def render_mask_figure(
    mask: CertaintyMask,
    record: FeatureRecord,
    classification: Classification,
    path: Path,
) -> None:
    """Heatmap of the mask with numbered defect boxes; title carries the verdict."""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(mask.values, cmap="magma", vmin=0.0, vmax=1.0, interpolation="nearest")
    ordered = sorted(record.superpixels, key=lambda s: natural_key(s.superpixel_id))
    for k, sp in enumerate(ordered, start=1):
        r0, c0, r1, c1 = sp.bounding_box()
        ax.add_patch(
            patches.Rectangle(
                (c0 - 0.5, r0 - 0.5),
                c1 - c0 + 1,
                r1 - r0 + 1,
                fill=False,
                edgecolor="cyan",
                linewidth=1.2,
            )
        )
        ax.annotate(
            str(k),
            (c0 - 0.5, r0 - 0.5),
            color="cyan",
            fontsize=9,
            ha="right",
            va="bottom",
        )
    ax.set_title(f"{mask.image_id}: {classification.label}")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_report(
    items: Sequence[tuple[CertaintyMask, FeatureRecord, SymbolicExample, Classification]],
    out_dir: str | Path,
) -> list[ReportRow]:
    """Render figures/<id>.png per item and write report.tsv alongside."""
    out_dir = Path(out_dir)
    figures = out_dir / "figures"
    figures.mkdir(parents=True, exist_ok=True)
    rows = []
    for mask, record, example, classification in items:
        figure_rel = f"figures/{mask.image_id}.png"
        render_mask_figure(mask, record, classification, figures / f"{mask.image_id}.png")
        rows.append(
            ReportRow(
                image_id=mask.image_id,
                classification=classification.label,
                num_defects=record.num_hps,
                total_volume=record.total_volume,
                satisfied_rules=tuple(
                    j.clause_index for j in classification.justifications if j.satisfied
                ),
                figure=figure_rel,
            )
        )
    lines = [TSV_HEADER] + [r.tsv() for r in rows]
    (out_dir / "report.tsv").write_text("\n".join(lines) + "\n")
    return rows
