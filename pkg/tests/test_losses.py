import math

import numpy as np
import pytest
import torch

from pose2scene.geom import OrientedBox3D
from pose2scene.losses import (
    IGNORE,
    NEGATIVE,
    POSITIVE,
    LossWeights,
    assign_targets,
    huber,
    total_loss,
)
from pose2scene.synthgen.scene import SceneAnnotation


def scene_at(*centers, classes=None, yaw=0.3):
    classes = classes or [0] * len(centers)
    objs = [(c, OrientedBox3D(xyz, [1.0, 0.8, 0.6], yaw)) for c, xyz in zip(classes, centers)]
    return SceneAnnotation(objs, room_id=0)


def test_cluster_on_gt_is_positive_with_zero_offset():
    sc = scene_at([1.0, 2.0, 0.3])
    a = assign_targets(torch.zeros(1, 2, 3), torch.tensor([[[1.0, 2.0, 0.3]]]), [sc])
    assert a.objectness_label.item() == POSITIVE
    np.testing.assert_allclose(a.center_target[0, 0] - torch.tensor([1.0, 2.0, 0.3]), 0.0)


def test_band_gap_is_ignored():
    sc = scene_at([0.0, 0.0, 0.3])
    clusters = torch.tensor([[[0.45, 0, 0.3], [0.29, 0, 0.3], [0.61, 0, 0.3]]])
    a = assign_targets(torch.zeros(1, 1, 3), clusters, [sc])
    assert a.objectness_label[0].tolist() == [IGNORE, POSITIVE, NEGATIVE]


def test_seed_distance_is_horizontal():
    sc = scene_at([0.0, 0.0, 0.3])
    # 0.9 m away horizontally but 2 m below: still within d_p
    seeds = torch.tensor([[[0.9, 0.0, -2.0], [1.1, 0.0, 0.3]]])
    a = assign_targets(seeds, torch.zeros(1, 1, 3), [sc])
    assert a.vote_mask[0].tolist() == [True, False]


@pytest.mark.parametrize("seed", range(5))
def test_assignment_matches_bruteforce(seed):
    rng = np.random.default_rng(seed)
    scenes, m, v = [], 9, 7
    for _ in range(2):
        n = int(rng.integers(1, 5))
        scenes.append(scene_at(*rng.uniform(-2, 2, (n, 3)), classes=list(rng.integers(0, 4, n)), yaw=rng.uniform(-3, 3)))
    seeds = torch.as_tensor(rng.uniform(-3, 3, (2, m, 3)))
    clusters = torch.as_tensor(rng.uniform(-3, 3, (2, v, 3)))
    a = assign_targets(seeds, clusters, scenes)
    for b, sc in enumerate(scenes):
        for i in range(m):
            d = [math.hypot(*(seeds[b, i, :2].numpy() - bx.center[:2])) for bx in sc.boxes]
            j = int(np.argmin(d))
            assert a.vote_mask[b, i].item() == (d[j] <= 1.0)
            np.testing.assert_allclose(a.vote_target[b, i].numpy(), sc.boxes[j].center)
        for i in range(v):
            d = [float(np.linalg.norm(clusters[b, i].numpy() - bx.center)) for bx in sc.boxes]
            j = int(np.argmin(d))
            expect = POSITIVE if d[j] <= 0.3 else NEGATIVE if d[j] >= 0.6 else IGNORE
            assert a.objectness_label[b, i].item() == expect
            box = sc.boxes[j]
            assert a.class_target[b, i].item() == sc.class_ids[j]
            np.testing.assert_allclose(a.size_target[b, i].numpy(), np.log(box.size))
            np.testing.assert_allclose(a.orientation_target[b, i].numpy(), [math.sin(box.yaw), math.cos(box.yaw)])


def test_empty_scene_rejected():
    empty = SceneAnnotation.__new__(SceneAnnotation)
    object.__setattr__(empty, "objects", [])
    with pytest.raises(ValueError):
        assign_targets(torch.zeros(1, 1, 3), torch.zeros(1, 1, 3), [empty])


def test_huber_values():
    assert huber(torch.tensor([0.0])).item() == 0.0
    assert huber(torch.tensor([1.0])).item() == pytest.approx(0.5)
    assert huber(torch.tensor([2.0])).item() == pytest.approx(1.5)
    assert huber(torch.tensor([[-2.0, 0.5]])).item() == pytest.approx(1.5 + 0.125)
    assert huber(torch.tensor([3.0]), delta=2.0).item() == pytest.approx(2.0)


def make_batch(rng, b=2, m=6, v=5, c=4, dtype=torch.float64):
    scenes = [scene_at(*rng.uniform(-1, 1, (2, 3)), classes=[int(x) for x in rng.integers(0, c, 2)]) for _ in range(b)]
    seeds = torch.as_tensor(rng.uniform(-1.5, 1.5, (b, m, 3)), dtype=dtype)
    clusters = torch.cat([torch.as_tensor(np.stack([s.boxes[0].center for s in scenes]))[:, None],
                          torch.as_tensor(rng.uniform(-1.5, 1.5, (b, v - 1, 3)))], 1).to(dtype)
    outputs = {
        "objectness_logits": torch.as_tensor(rng.normal(size=(b, v, 2)), dtype=dtype),
        "class_logits": torch.as_tensor(rng.normal(size=(b, v, c)), dtype=dtype),
        "votes": seeds + torch.as_tensor(rng.normal(size=(b, m, 3)), dtype=dtype),
        "box_centers": clusters + torch.as_tensor(rng.normal(0, 0.5, (b, v, 3)), dtype=dtype),
        "y": {
            "size": torch.as_tensor(rng.normal(size=(b, v, 3)), dtype=dtype),
            "orientation": torch.as_tensor(rng.normal(size=(b, v, 2)), dtype=dtype),
        },
    }
    return outputs, assign_targets(seeds, clusters, scenes)


def loss_oracle(out, a, w=LossWeights(), delta=1.0):
    def hub(r):
        return sum(0.5 * x * x / delta if abs(x) <= delta else abs(x) - 0.5 * delta for x in r)

    def ce(logits, k):
        z = np.asarray(logits)
        return float(np.log(np.exp(z).sum()) - z[k])

    b, v = a.objectness_label.shape
    sums = dict.fromkeys(["objectness", "class", "vote", "center", "size", "orientation"], 0.0)
    counts = dict.fromkeys(sums, 0)
    for i in range(b):
        for j in range(a.vote_mask.shape[1]):
            if a.vote_mask[i, j]:
                sums["vote"] += hub((out["votes"][i, j] - a.vote_target[i, j]).tolist())
                counts["vote"] += 1
        for j in range(v):
            lab = int(a.objectness_label[i, j])
            if lab == IGNORE:
                continue
            sums["objectness"] += ce(out["objectness_logits"][i, j].tolist(), lab)
            counts["objectness"] += 1
            if lab == POSITIVE:
                sums["class"] += ce(out["class_logits"][i, j].tolist(), int(a.class_target[i, j]))
                sums["center"] += hub((out["box_centers"][i, j] - a.center_target[i, j]).tolist())
                sums["size"] += hub((out["y"]["size"][i, j] - a.size_target[i, j]).tolist())
                sums["orientation"] += hub((out["y"]["orientation"][i, j] - a.orientation_target[i, j]).tolist())
                for k in ("class", "center", "size", "orientation"):
                    counts[k] += 1
    terms = {k: sums[k] / counts[k] if counts[k] else 0.0 for k in sums}
    lam = w.as_terms()
    return sum(lam[k] * terms[k] for k in terms), terms


@pytest.mark.parametrize("seed", range(6))
def test_total_loss_matches_loop_oracle(seed):
    out, a = make_batch(np.random.default_rng(seed))
    total, terms = total_loss(out, a)
    exp_total, exp_terms = loss_oracle(out, a)
    assert total.item() == pytest.approx(exp_total, abs=1e-6)
    for k, val in exp_terms.items():
        assert terms[k].item() == pytest.approx(val, abs=1e-6)


def test_perfect_fit_is_zero():
    out, a = make_batch(np.random.default_rng(0))
    big = 50.0
    out["objectness_logits"] = torch.nn.functional.one_hot(a.objectness_label.clamp(min=0), 2).double() * big
    out["class_logits"] = torch.nn.functional.one_hot(a.class_target, 4).double() * big
    out["votes"] = a.vote_target.clone()
    out["box_centers"] = a.center_target.clone()
    out["y"] = {"size": a.size_target.clone(), "orientation": a.orientation_target.clone()}
    total, terms = total_loss(out, a)
    assert total.item() == pytest.approx(0.0, abs=1e-18)


def test_uniform_class_probs_give_log_c():
    out, a = make_batch(np.random.default_rng(1), c=5)
    out["class_logits"] = torch.zeros_like(out["class_logits"])
    assert (a.objectness_label == POSITIVE).any()
    _, terms = total_loss(out, a)
    assert terms["class"].item() == pytest.approx(math.log(5))


def test_masked_seeds_get_no_vote_gradient():
    out, a = make_batch(np.random.default_rng(2))
    assert (~a.vote_mask).any()
    out["votes"].requires_grad_(True)
    total, _ = total_loss(out, a)
    total.backward()
    grad = out["votes"].grad
    assert torch.all(grad[~a.vote_mask] == 0)
    assert torch.any(grad[a.vote_mask] != 0)


def test_weight_scaling_scales_gradient():
    out, a = make_batch(np.random.default_rng(3))
    x = out["y"]["size"].requires_grad_(True)
    g1 = torch.autograd.grad(total_loss(out, a, LossWeights())[0], x)[0]
    g3 = torch.autograd.grad(total_loss(out, a, LossWeights(size=30.0))[0], x)[0]
    np.testing.assert_allclose(g3.numpy(), 3 * g1.numpy(), rtol=1e-12)


def test_loss_nonnegative_and_weights_validated():
    for s in range(5):
        out, a = make_batch(np.random.default_rng(10 + s))
        assert total_loss(out, a)[0].item() >= 0
    with pytest.raises(ValueError):
        LossWeights(vote=-1)
