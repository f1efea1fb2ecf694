"""HTTP boundary for the review loop.

Single-tenant queue semantics: GET /api/items/next serves the oldest
unreviewed image evaluated against the current theory, POST /api/feedback
funnels verdicts through the knowledge base's single-writer contract, and a
stale revision in the request is rejected with a 409 carrying the current
one. GETs never mutate state.
"""

from __future__ import annotations

import base64
import io
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel
from PIL import Image

from .errors import StaleVerdictError, UnknownImageError
from .evaluate import Classification, evaluate
from .facts import SymbolicExample, compile_example, natural_key
from .feedback import KnowledgeBase, Verdict, load_kb, save_kb
from .learner import LearnerConfig, clause_to_text
from .masks import DEFAULT_CUTOFF, CertaintyMask, FeatureRecord, build_feature_record, load_mask
from .verbalize import (
    NO_RULES,
    default_templates,
    validate_templates,
    verbalize_defects,
    verbalize_justification,
    verbalize_theory,
)

KB_FILENAME = "kb.log"


class FeedbackRequest(BaseModel):
    image_id: str
    revision: int
    classification_accepted: bool
    justification_accepted: list[bool] = []


def _png_b64(values: np.ndarray) -> str:
    img = Image.fromarray(np.rint(values * 255.0).astype(np.uint8), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


class ReviewService:
    """In-process state behind the API: the KB plus per-image masks and features."""

    def __init__(
        self,
        data_dir: str | Path,
        learner_config: LearnerConfig | None = None,
        templates: dict | None = None,
        cutoff: float = DEFAULT_CUTOFF,
        mass_scale: float = 1.0,
        train_on_start: bool = True,
    ):
        self.data_dir = Path(data_dir)
        self.templates = templates if templates is not None else default_templates()
        validate_templates(self.templates)
        self.cutoff = cutoff
        self.mass_scale = mass_scale
        self.lock = threading.Lock()
        self.history: list[dict] = []

        kb_path = self.data_dir / KB_FILENAME
        if kb_path.exists():
            self.kb = load_kb(kb_path.read_bytes(), learner_config=learner_config)
        else:
            self.kb = KnowledgeBase(learner_config=learner_config)

        self.masks: dict[str, CertaintyMask] = {}
        self.records: dict[str, FeatureRecord] = {}
        self._ingest_masks()
        if train_on_start and not self.kb.current_theory.clauses and self.kb.labeled_examples():
            self.kb.retrain()
        self._persist()

    def _ingest_masks(self) -> None:
        masks_dir = self.data_dir / "masks"
        if not masks_dir.is_dir():
            masks_dir = self.data_dir
        labels = self._read_labels()
        for path in sorted(masks_dir.glob("*.pgm"), key=lambda p: natural_key(p.stem)):
            image_id = path.stem
            mask = load_mask(path.read_bytes(), image_id, self.mass_scale)
            self.masks[image_id] = mask
            self.records[image_id] = build_feature_record(mask, self.cutoff)
            if image_id not in self.kb._index:
                label = labels.get(image_id, "unlabeled")
                provenance = "annotated" if image_id in labels else "inferred"
                example = compile_example(
                    self.records[image_id], label=label,
                    schemes=self.kb.schemes, provenance=provenance,
                )
                self.kb.add_example(example)

    def _read_labels(self) -> dict[str, str]:
        labels: dict[str, str] = {}
        path = self.data_dir / "labels.tsv"
        if path.exists():
            for line in path.read_text().splitlines():
                if line.strip():
                    image_id, label = line.split("\t")[:2]
                    labels[image_id] = label
        return labels

    def _persist(self) -> None:
        tmp = self.data_dir / (KB_FILENAME + ".tmp")
        tmp.write_bytes(save_kb(self.kb))
        tmp.replace(self.data_dir / KB_FILENAME)

    # -- item assembly --------------------------------------------------------

    def _classify(self, example: SymbolicExample) -> Classification:
        return evaluate(self.kb.current_theory, example, self.kb.background)

    def review_item(self, example: SymbolicExample) -> dict:
        image_id = example.image_id
        mask = self.masks.get(image_id)
        record = self.records.get(image_id)
        classification = self._classify(example)
        sp_ids = example.superpixel_constants()
        justification_texts = [
            {
                "text": verbalize_justification(
                    j, self.kb.current_theory.clauses[j.clause_index],
                    self.templates, superpixel_ids=sp_ids,
                ),
                "satisfied": j.satisfied,
            }
            for j in classification.justifications
        ]
        overlay = []
        if record is not None:
            ordered = sorted(record.superpixels, key=lambda s: natural_key(s.superpixel_id))
            for k, sp in enumerate(ordered, start=1):
                r0, c0, r1, c1 = sp.bounding_box()
                overlay.append(
                    {
                        "superpixel_id": sp.superpixel_id,
                        "ordinal": k,
                        "bbox": {"row_min": r0, "col_min": c0, "row_max": r1, "col_max": c1},
                    }
                )
        mask_b64 = _png_b64(mask.values) if mask is not None else ""
        original = self._original_image_b64(image_id) or mask_b64
        defect_text = (
            verbalize_defects(record, example, self.templates) if record is not None else ""
        )
        return {
            "image_id": image_id,
            "revision": self.kb.revision,
            "encoding": "png-base64",
            "image": original,
            "mask": mask_b64,
            "overlay_regions": overlay,
            "defect_text": defect_text,
            "classification": classification.label,
            "justification_texts": justification_texts,
            "theory_text": verbalize_theory(self.kb.current_theory, self.templates),
        }

    def _original_image_b64(self, image_id: str) -> str | None:
        images_dir = self.data_dir / "images"
        for suffix in (".png", ".pgm"):
            path = images_dir / f"{image_id}{suffix}"
            if path.exists():
                if suffix == ".png":
                    return base64.b64encode(path.read_bytes()).decode("ascii")
                mask = load_mask(path.read_bytes(), image_id)
                return _png_b64(mask.values)
        return None

    def next_unreviewed(self) -> SymbolicExample | None:
        queue = self.kb.unlabeled_examples()
        return queue[0] if queue else None

    def submit(self, req: FeedbackRequest) -> dict:
        with self.lock:
            if req.revision != self.kb.revision:
                raise StaleVerdictError(req.revision, self.kb.revision)
            example = self.kb.get_example(req.image_id)
            shown = self._classify(example)
            flags = list(req.justification_accepted)
            if len(flags) != len(shown.justifications):
                raise ValueError(
                    f"expected {len(shown.justifications)} justification flags, "
                    f"got {len(flags)}"
                )
            verdict = Verdict(req.image_id, req.classification_accepted, tuple(flags))
            retrained = self.kb.submit_feedback(verdict, shown, req.revision)
            self._persist()
            self.history.append(
                {
                    "image_id": req.image_id,
                    "revision": req.revision,
                    "classification_accepted": req.classification_accepted,
                    "justification_accepted": flags,
                    "retrained": retrained,
                    "new_revision": self.kb.revision,
                }
            )
            return {"retrained": retrained, "new_revision": self.kb.revision}


def create_app(
    data_dir: str | Path,
    learner_config: LearnerConfig | None = None,
    templates: dict | None = None,
    cutoff: float = DEFAULT_CUTOFF,
    mass_scale: float = 1.0,
    frontend_dir: str | Path | None = None,
    train_on_start: bool = True,
) -> FastAPI:
    service = ReviewService(
        data_dir,
        learner_config=learner_config,
        templates=templates,
        cutoff=cutoff,
        mass_scale=mass_scale,
        train_on_start=train_on_start,
    )
    app = FastAPI(title="defect-triage")
    app.state.service = service
    app.state.kb = service.kb

    @app.get("/api/items/next")
    def items_next():
        example = service.next_unreviewed()
        if example is None:
            return Response(status_code=204)
        return service.review_item(example)

    @app.get("/api/items/{image_id}")
    def items_get(image_id: str):
        try:
            example = service.kb.get_example(image_id)
        except UnknownImageError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return service.review_item(example)

    @app.get("/api/theory")
    def theory():
        t = service.kb.current_theory
        stats = t.train_stats
        return {
            "clauses": [clause_to_text(c) for c in t.clauses],
            "verbalization": verbalize_theory(t, service.templates) if t.clauses else NO_RULES,
            "stats": None
            if stats is None
            else {
                "positives_covered": stats.positives_covered,
                "negatives_covered": stats.negatives_covered,
                "accuracy": stats.accuracy,
                "total_examples": stats.total_examples,
            },
            "revision": service.kb.revision,
        }

    @app.get("/api/history")
    def history():
        return {"verdicts": service.history}

    @app.post("/api/feedback")
    def feedback(req: FeedbackRequest):
        try:
            return service.submit(req)
        except StaleVerdictError as exc:
            raise HTTPException(
                status_code=409,
                detail={
                    "error": "stale revision",
                    "current_revision": exc.current_revision,
                },
            ) from exc
        except UnknownImageError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app
