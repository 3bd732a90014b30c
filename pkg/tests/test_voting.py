import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pose2scene.voting import (
    ClusterModule,
    Grouping,
    VotingModule,
    farthest_point_sample,
    group_votes,
    sample_seeds,
)


def fps_oracle(points, count):
    chosen = [0]
    while len(chosen) < min(count, len(points)):
        best, best_d = None, -1.0
        for i, p in enumerate(points):
            d = min(float(np.sum((p - points[c]) ** 2)) for c in chosen)
            if d > best_d:
                best, best_d = i, d
        chosen.append(best)
    return chosen


def test_seeds_evenly_spaced():
    root = torch.arange(30.0).reshape(1, 10, 3)
    pst = torch.arange(20.0).reshape(1, 10, 2)
    idx, r, p = sample_seeds(root, pst, 4)
    assert idx.tolist() == [0, 3, 6, 9]
    np.testing.assert_array_equal(r[0].numpy(), root[0, idx].numpy())
    np.testing.assert_array_equal(p[0].numpy(), pst[0, idx].numpy())


def test_votes_are_seed_plus_offset():
    torch.manual_seed(0)
    vm = VotingModule(8).eval()
    seeds, feats = torch.randn(2, 5, 3), torch.randn(2, 5, 8)
    votes, vfeat = vm(seeds, feats)
    with torch.no_grad():
        h = vm.trunk(feats)
        np.testing.assert_allclose((votes - seeds).numpy(), vm.offset_head(h).numpy(), atol=1e-6)
        np.testing.assert_allclose((vfeat - feats).numpy(), vm.feature_head(h).numpy(), atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 25), st.just(3)), elements=st.floats(-5, 5)), st.integers(1, 30))
def test_fps_matches_greedy_oracle(points, count):
    assert farthest_point_sample(points, count).tolist() == fps_oracle(points, count)


def test_grouping_is_radius_membership():
    rng = np.random.default_rng(0)
    votes = torch.as_tensor(rng.uniform(-2, 2, (2, 40, 3)))
    g = group_votes(votes, 0.6, 8)
    assert g.center_idx.shape == (2, 8)
    for b in range(2):
        for v, c in enumerate(g.center_idx[b]):
            d = torch.linalg.norm(votes[b] - votes[b, c], dim=-1)
            np.testing.assert_array_equal(g.members[b, v].numpy(), (d <= 0.6).numpy())
            assert g.members[b, v, c]
    assert (g.member_counts >= 1).all()


def test_group_votes_rejects_bad_radius():
    with pytest.raises(ValueError):
        group_votes(torch.zeros(1, 3, 3), 0.0, 2)


def test_cluster_pool_matches_loop_oracle():
    torch.manual_seed(1)
    cm = ClusterModule(6, 0.6).eval()
    votes = torch.randn(2, 12, 3)
    feats = torch.randn(2, 12, 6)
    g = group_votes(votes, 0.6, 4)
    centers, pooled = cm(votes, feats, g)
    with torch.no_grad():
        for b in range(2):
            for v in range(4):
                c = votes[b, g.center_idx[b, v]]
                np.testing.assert_allclose(centers[b, v].numpy(), c.numpy())
                members = torch.nonzero(g.members[b, v]).flatten()
                rows = [cm.mlp(torch.cat([(votes[b, m] - c) / 0.6, feats[b, m]])[None])[0] for m in members]
                expect = torch.stack(rows).max(0).values
                np.testing.assert_allclose(pooled[b, v].numpy(), expect.numpy(), atol=1e-5)


def test_cluster_features_translation_invariant():
    torch.manual_seed(2)
    cm = ClusterModule(4, 0.6).eval().double()
    votes = torch.randn(1, 15, 3, dtype=torch.float64)
    feats = torch.randn(1, 15, 4, dtype=torch.float64)
    g = group_votes(votes, 0.6, 5)
    shift = torch.tensor([7.0, -3.0, 0.5], dtype=torch.float64)
    c1, p1 = cm(votes, feats, g)
    c2, p2 = cm(votes + shift, feats, g)
    np.testing.assert_allclose((c2 - shift).detach().numpy(), c1.detach().numpy(), atol=1e-12)
    np.testing.assert_allclose(p2.detach().numpy(), p1.detach().numpy(), atol=1e-12)


def test_fixed_grouping_reused():
    cm = ClusterModule(4, 0.6).eval()
    votes = torch.zeros(1, 3, 3)
    g = Grouping(torch.tensor([[0, 2]]), torch.tensor([[[True, True, False], [False, False, True]]]))
    centers, pooled = cm(votes, torch.randn(1, 3, 4), g)
    assert pooled.shape == (1, 2, 4)
    assert torch.isfinite(pooled).all()
