"""Inference over datasets: ML predictions, sampled hypotheses, reports and prediction files."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import torch

from .decoder import SceneHypothesis, decode_boxes, postprocess, propose_hypotheses
from .geom import ScoredBox, box_from_record, box_to_record
from .metrics import EvalReport, average_precision, group_hypotheses_by_object, mmd, tmd
from .model import SceneFromPoseNet
from .synthgen.dataset import Dataset, DatasetError
from .training import batch_frames

__all__ = [
    "SequencePrediction",
    "predict",
    "evaluate_ml",
    "evaluate",
    "sample",
    "write_predictions",
    "read_predictions",
    "PREDICTION_FORMAT_VERSION",
]

PREDICTION_FORMAT_VERSION = 1


@dataclass
class SequencePrediction:
    sequence_id: int
    ml: list[ScoredBox]
    hypotheses: list[SceneHypothesis]


@torch.no_grad()
def _forward(model: SceneFromPoseNet, dataset: Dataset, ids: Sequence[int], batch_size: int):
    """Yield (sequence_id, cluster centers, cluster features, ML boxes) in eval mode."""
    was_training = model.training
    model.eval()
    lookup = dataset.by_id()
    try:
        for start in range(0, len(ids), batch_size):
            chunk = list(ids[start:start + batch_size])
            missing = [i for i in chunk if i not in lookup]
            if missing:
                raise DatasetError(f"unknown sequence ids {missing}")
            frames = batch_frames([lookup[i].trajectory for i in chunk], model.config.num_frames)
            out = model(frames, decode="ml")
            obj = torch.softmax(out["objectness_logits"], -1)[..., 1]
            cls = torch.softmax(out["class_logits"], -1)
            for b, sid in enumerate(chunk):
                y = {t: v[b].numpy() for t, v in out["y"].items()}
                boxes = decode_boxes(out["cluster_centers"][b].numpy(), y, obj[b].numpy(), cls[b].numpy())
                yield sid, out["cluster_centers"][b], out["cluster_features"][b], postprocess(boxes)
    finally:
        model.train(was_training)


def predict(
    model: SceneFromPoseNet,
    dataset: Dataset,
    ids: Sequence[int],
    num_hypotheses: int = 10,
    seed: int = 0,
    batch_size: int = 16,
) -> list[SequencePrediction]:
    """ML boxes plus ``num_hypotheses`` sampled scenes for each sequence."""
    preds = []
    for sid, centers, feats, ml in _forward(model, dataset, ids, batch_size):
        hyps = []
        if num_hypotheses > 0:
            # the generator keeps the model in eval mode while suspended
            hyps = propose_hypotheses(model.decoder, centers, feats, num_hypotheses, seed=seed * 1_000_003 + sid)
        preds.append(SequencePrediction(sid, ml, hyps))
    return preds


def evaluate_ml(model: SceneFromPoseNet, dataset: Dataset, ids: Sequence[int], batch_size: int = 16):
    """mAP@0.5 of the maximum-likelihood prediction only (cheap, used for validation)."""
    lookup = dataset.by_id()
    ml = [boxes for _, _, _, boxes in _forward(model, dataset, list(ids), batch_size)]
    return average_precision(ml, [lookup[i].scene for i in ids])


def report_from_predictions(preds: Sequence[SequencePrediction], dataset: Dataset) -> EvalReport:
    lookup = dataset.by_id()
    gts = [lookup[p.sequence_id].scene for p in preds]
    ap = average_precision([p.ml for p in preds], gts)
    names = dataset.class_names
    n_h = len(preds[0].hypotheses) if preds else 0
    if n_h:
        m = mmd([p.hypotheses for p in preds], gts)
        groups = []
        for p, gt in zip(preds, gts):
            groups.extend(group_hypotheses_by_object(gt, p.hypotheses, p.ml))
        mmd_value, mmd_seq, tmd_value = m.value, m.per_sequence, tmd(groups)
    else:
        mmd_value = mmd_seq = tmd_value = float("nan")
    return EvalReport(
        per_class_ap={names[c]: v for c, v in ap.per_class_ap.items()},
        map50=ap.map,
        mmd=mmd_value,
        mmd_per_sequence=mmd_seq,
        tmd=tmd_value,
        counts={names[c]: n for c, n in ap.counts.items()},
        num_sequences=len(preds),
        num_hypotheses=n_h,
    )


def evaluate(
    model: SceneFromPoseNet,
    dataset: Dataset,
    ids: Sequence[int],
    num_hypotheses: int = 10,
    seed: int = 0,
    out_dir: str | Path | None = None,
) -> tuple[EvalReport, list[SequencePrediction]]:
    """decode_ml for mAP, sampled hypotheses for MMD / TMD; optionally writes files to ``out_dir``."""
    preds = predict(model, dataset, list(ids), num_hypotheses, seed)
    report = report_from_predictions(preds, dataset)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_predictions(out / "predictions.json", preds, dataset.class_names)
        (out / "report.json").write_text(json.dumps(report.to_dict(), indent=1))
        (out / "report.txt").write_text(report.table() + "\n")
    return report, preds


def sample(model: SceneFromPoseNet, dataset: Dataset, sequence_id: int, num_hypotheses: int = 10, seed: int = 0):
    return predict(model, dataset, [sequence_id], num_hypotheses, seed)[0]


def _boxes_to_json(boxes: Sequence[ScoredBox]) -> list[dict]:
    return [box_to_record(b.box, b.class_id, b.objectness) for b in boxes]


def _boxes_from_json(items: list[dict]) -> list[ScoredBox]:
    out = []
    for item in items:
        box, cls, objectness = box_from_record(item)
        out.append(ScoredBox(box, cls, objectness))
    return out


def write_predictions(path, preds: Sequence[SequencePrediction], class_names: Sequence[str]) -> Path:
    doc = {
        "version": PREDICTION_FORMAT_VERSION,
        "class_names": list(class_names),
        "sequences": [
            {
                "sequence_id": p.sequence_id,
                "ml": _boxes_to_json(p.ml),
                "hypotheses": [
                    {"hypothesis_id": h.hypothesis_id, "num_samples": h.num_samples, "boxes": _boxes_to_json(h.boxes)}
                    for h in p.hypotheses
                ],
            }
            for p in preds
        ],
    }
    path = Path(path)
    path.write_text(json.dumps(doc, indent=1))
    return path


def read_predictions(path) -> tuple[list[SequencePrediction], list[str]]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}") from exc
    if doc.get("version") != PREDICTION_FORMAT_VERSION:
        raise DatasetError(f"{path}: unsupported prediction format version {doc.get('version')!r}")
    preds = []
    for s in doc["sequences"]:
        hyps = [
            SceneHypothesis(_boxes_from_json(h["boxes"]), h["hypothesis_id"], h.get("num_samples", 1))
            for h in s["hypotheses"]
        ]
        preds.append(SequencePrediction(int(s["sequence_id"]), _boxes_from_json(s["ml"]), hyps))
    return preds, list(doc["class_names"])
