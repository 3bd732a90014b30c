import itertools
import math

import numpy as np
import pytest

from pose2scene.decoder import SceneHypothesis
from pose2scene.geom import OrientedBox3D, ScoredBox, box_corners, oriented_iou
from pose2scene.metrics import (
    EvalReport,
    average_precision,
    box_distance,
    group_hypotheses_by_object,
    interpolated_ap,
    mmd,
    tmd,
    tmd_object,
)
from pose2scene.synthgen.scene import SceneAnnotation


def box(x, y, w=1.0, d=1.0, h=1.0, yaw=0.0):
    return OrientedBox3D([x, y, h / 2], [w, d, h], yaw)


def scene(*objs):
    return SceneAnnotation(list(objs), room_id=0)


def as_preds(sc, conf=1.0):
    return [ScoredBox(b, c, conf) for c, b in sc.objects]


def random_scene(rng, n_classes=3):
    n = int(rng.integers(1, 6))
    objs = []
    for i in range(n):
        objs.append((int(rng.integers(n_classes)), box(3.0 * i, 0.0, *rng.uniform(0.5, 1.5, 3), rng.uniform(-3, 3))))
    return scene(*objs)


def jitter(rng, sc, n_classes=3):
    """Perturbed and partially wrong predictions for a scene."""
    out = []
    for c, b in sc.objects:
        if rng.uniform() < 0.2:
            continue
        shifted = OrientedBox3D(b.center + rng.normal(0, 0.25, 3), b.size, b.yaw)
        cls = c if rng.uniform() < 0.85 else int(rng.integers(n_classes))
        out.append(ScoredBox(shifted, cls, float(rng.uniform(0.5, 1.0))))
    if rng.uniform() < 0.5:
        out.append(ScoredBox(box(*rng.uniform(-2, 10, 2)), int(rng.integers(n_classes)), float(rng.uniform(0.5, 1.0))))
    return out


def ap_oracle(preds, gts, thr=0.5):
    """Textbook per-class AP: explicit PR points, envelope by max over higher recall."""
    classes = sorted({c for g in gts for c in g.class_ids})
    aps = {}
    for cls in classes:
        n_gt = sum(g.class_ids.count(cls) for g in gts)
        dets = [(p.objectness, s, p.box) for s, ps in enumerate(preds) for p in ps if p.class_id == cls]
        dets.sort(key=lambda t: -t[0])
        taken = set()
        flags = []
        for _, s, b in dets:
            cands = [(oriented_iou(b, gb), g) for g, (gc, gb) in enumerate(gts[s].objects)
                     if gc == cls and (s, g) not in taken]
            cands = [c for c in cands if c[0] >= thr]
            if cands:
                best = max(cands, key=lambda t: (t[0], -t[1]))
                taken.add((s, best[1]))
                flags.append(True)
            else:
                flags.append(False)
        tp = 0
        points = []
        for i, f in enumerate(flags):
            tp += f
            points.append((tp / n_gt, tp / (i + 1)))
        area, prev_r = 0.0, 0.0
        for r, _ in points:
            if r > prev_r:
                area += (r - prev_r) * max(p for rr, p in points if rr >= r)
                prev_r = r
        aps[cls] = area
    return aps


def test_perfect_predictions_give_unit_ap():
    gt = scene((0, box(0, 0)), (1, box(3, 0)), (1, box(6, 0, yaw=0.7)))
    res = average_precision([as_preds(gt)], [gt])
    assert res.per_class_ap == {0: 1.0, 1: 1.0}
    assert res.map == 1.0


def test_no_predictions_give_zero_ap():
    gt = scene((0, box(0, 0)))
    assert average_precision([[]], [gt]).map == 0.0


def test_duplicate_detection_caps_recall():
    gt = scene((0, box(0, 0)), (0, box(5, 0)))
    preds = [ScoredBox(box(0, 0), 0, 0.9), ScoredBox(box(0, 0), 0, 0.8)]
    res = average_precision([preds], [gt])
    # PR points (0.5, 1.0), (0.5, 0.5): area = 0.5 * 1.0
    assert res.per_class_ap[0] == pytest.approx(0.5, abs=1e-12)
    np.testing.assert_allclose(res.curves[0][0], [0.5, 0.5])


def test_class_without_gt_excluded_from_mean():
    gt = scene((0, box(0, 0)))
    preds = [ScoredBox(box(0, 0), 0, 0.9), ScoredBox(box(4, 0), 2, 0.9)]
    res = average_precision([preds], [gt])
    assert set(res.per_class_ap) == {0}
    assert res.map == 1.0


def test_wrong_class_is_false_positive():
    gt = scene((0, box(0, 0)))
    res = average_precision([[ScoredBox(box(0, 0), 1, 0.9)]], [gt])
    assert res.map == 0.0


def test_interpolated_ap_hand_example():
    # precision envelope: 1.0 up to recall 0.5, then 2/3 up to recall 1.0
    rec = np.array([0.25, 0.5, 0.5, 0.75, 1.0])
    prec = np.array([1.0, 1.0, 2 / 3, 0.6, 2 / 3])
    assert interpolated_ap(rec, prec) == pytest.approx(0.5 + 0.5 * 2 / 3)


@pytest.mark.parametrize("seed", range(8))
def test_ap_matches_textbook_oracle(seed):
    rng = np.random.default_rng(seed)
    gts = [random_scene(rng) for _ in range(4)]
    preds = [jitter(rng, g) for g in gts]
    res = average_precision(preds, gts)
    oracle = ap_oracle(preds, gts)
    assert set(res.per_class_ap) == set(oracle)
    for cls, v in oracle.items():
        assert res.per_class_ap[cls] == pytest.approx(v, abs=1e-12)


def test_ap_invariant_to_confidence_rescaling():
    rng = np.random.default_rng(3)
    gts = [random_scene(rng) for _ in range(4)]
    preds = [jitter(rng, g) for g in gts]
    scaled = [[ScoredBox(p.box, p.class_id, 0.3 * p.objectness) for p in ps] for ps in preds]
    assert average_precision(scaled, gts).map == pytest.approx(average_precision(preds, gts).map, abs=1e-15)


def test_ap_invariant_to_joint_rigid_transform():
    rng = np.random.default_rng(4)
    gts = [random_scene(rng) for _ in range(3)]
    preds = [jitter(rng, g) for g in gts]
    th, t = 0.9, np.array([1.5, -2.0, 0.0])
    rot = np.array([[math.cos(th), -math.sin(th), 0], [math.sin(th), math.cos(th), 0], [0, 0, 1]])

    def move(b):
        return OrientedBox3D(rot @ b.center + t, b.size, b.yaw + th)

    gts2 = [scene(*[(c, move(b)) for c, b in g.objects]) for g in gts]
    preds2 = [[ScoredBox(move(p.box), p.class_id, p.objectness) for p in ps] for ps in preds]
    assert average_precision(preds2, gts2).map == pytest.approx(average_precision(preds, gts).map, abs=1e-9)


def test_mmd_identical_hypotheses():
    gt = scene((0, box(0, 0)), (1, box(4, 0)))
    hyps = [[SceneHypothesis(as_preds(gt), h) for h in range(10)]]
    assert mmd(hyps, [gt]).value == 1.0


def test_mmd_takes_max_over_hypotheses():
    gt = scene((0, box(0, 0)), (1, box(4, 0)))
    hyps = [[SceneHypothesis([], h) for h in range(10)]]
    hyps[0][6] = SceneHypothesis(as_preds(gt), 6)
    res = mmd(hyps, [gt])
    assert res.value == 1.0
    assert res.best_index == 6


def test_mmd_matches_bruteforce():
    rng = np.random.default_rng(11)
    gts = [random_scene(rng) for _ in range(3)]
    hyps = [[jitter(rng, g) for _ in range(4)] for g in gts]
    res = mmd(hyps, gts)
    brute = max(average_precision([hyps[s][h] for s in range(3)], gts).map for h in range(4))
    assert res.value == pytest.approx(brute, abs=1e-15)
    # per-sequence choice can only do at least as well per sequence
    for s in range(3):
        own = average_precision([hyps[s][res.per_sequence_choice[s]]], [gts[s]]).map
        assert own == max(average_precision([hyps[s][h]], [gts[s]]).map for h in range(4))


def test_mmd_rejects_mismatched_counts():
    gt = scene((0, box(0, 0)))
    with pytest.raises(ValueError):
        mmd([[[]] * 10, [[]] * 9], [gt, gt])


def test_tmd_identical_hypotheses_is_one():
    b = box(1, 2, 1.2, 0.7, 0.9, 0.4)
    assert tmd_object([2] * 10, [b] * 10) == 1.0


def test_tmd_two_class_split():
    b = box(0, 0)
    assert tmd_object([0] * 5 + [1] * 5, [b] * 10) == pytest.approx(1 + math.log(2), abs=1e-9)


def test_tmd_translated_boxes_closed_form():
    # corners move rigidly, so corner distance equals the translation length
    offsets = [0.1 * i for i in range(10)]
    boxes = [box(o, 0) for o in offsets]
    div = sum(abs(a - b) for a, b in itertools.product(offsets, offsets)) / 10
    assert tmd_object([0] * 10, boxes) == pytest.approx(1 + div, abs=1e-12)


def test_box_distance_rotation():
    a = box(0, 0, 2, 1, 1, 0)
    b = box(0, 0, 2, 1, 1, math.pi)
    expect = np.mean(np.linalg.norm(box_corners(a) - box_corners(b), axis=1))
    assert box_distance(a, b) == pytest.approx(expect)
    assert box_distance(a, a) == 0.0


def test_tmd_at_least_one():
    rng = np.random.default_rng(0)
    objs = [[(int(rng.integers(3)), box(*rng.normal(0, 1, 2))) for _ in range(10)] for _ in range(5)]
    assert tmd(objs) >= 1.0


def test_grouping_pads_with_ml_box():
    gt = scene((0, box(0, 0)), (1, box(5, 0)))
    near = ScoredBox(box(0.2, 0), 0, 0.9)
    ml = [ScoredBox(box(0.1, 0), 0, 0.9)]
    hyps = [SceneHypothesis([near]) if h % 2 else SceneHypothesis([]) for h in range(10)]
    groups = group_hypotheses_by_object(gt, hyps, ml)
    # the far object is matched by nothing and is left out
    assert len(groups) == 1
    boxes = [b for _, b in groups[0]]
    assert sum(b == ml[0].box for b in boxes) == 5
    assert sum(b == near.box for b in boxes) == 5


def test_report_table_lists_classes():
    rep = EvalReport({"chair": 0.5, "bed": 1.0}, 0.75, 0.8, 0.9, 1.2, {"chair": 2, "bed": 1})
    text = rep.table()
    assert "chair" in text and "75.00" in text
    assert rep.to_dict()["notes"]["entropy"] == "natural log"
