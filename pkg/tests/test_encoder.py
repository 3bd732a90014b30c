import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from pose2scene.encoder import (
    EncoderConfig,
    GraphConv,
    RelativePositionEncoder,
    STBlock,
    STPoseEncoder,
    normalized_adjacency,
    root_joints,
    temporal_neighbors,
)
from pose2scene.layers import MLP, ConfigurationError
from pose2scene.synthgen.skeleton import default_skeleton, paper_skeleton

torch.set_default_dtype(torch.float32)


def window_oracle(n, k):
    rows = []
    for i in range(n):
        cand = list(range(i - k // 2, i)) + list(range(i + 1, i + 1 + k - k // 2))
        rows.append([j for j in cand if 0 <= j < n])
    return rows


@given(st.integers(1, 40), st.integers(1, 25))
def test_temporal_neighbors_match_window_oracle(n, k):
    idx, w = temporal_neighbors(n, k)
    assert idx.shape == (n, k)
    np.testing.assert_allclose(w.sum(1).numpy(), 1.0)
    for i, expected in enumerate(window_oracle(n, k)):
        got = sorted(int(j) for j, wt in zip(idx[i], w[i]) if wt > 0)
        if expected:
            assert got == expected
            np.testing.assert_allclose(w[i][w[i] > 0].numpy(), 1.0 / len(expected))
        else:
            # a lone frame attends to itself, i.e. a zero offset
            assert set(idx[i].tolist()) == {i}


def test_root_is_hip_centroid():
    sk = default_skeleton()
    frames = np.random.default_rng(0).normal(size=(5, sk.joint_count, 3))
    expect = 0.5 * (frames[:, sk.hip_joint_ids[0]] + frames[:, sk.hip_joint_ids[1]])
    np.testing.assert_allclose(root_joints(frames, sk), expect)


def test_relative_position_encoder_matches_loop_oracle():
    torch.manual_seed(0)
    cfg = EncoderConfig(d1=8, d2=16, k=4, blocks=1)
    enc = RelativePositionEncoder(cfg).eval()
    sk = default_skeleton()
    frames = torch.randn(2, 7, sk.joint_count, 3)
    root = root_joints(frames, sk)
    out = enc(frames, root)
    windows = window_oracle(7, cfg.k)
    with torch.no_grad():
        for b in range(2):
            for i in range(7):
                nbrs = windows[i] or [i]
                q = torch.stack([enc.f1(root[b, j] - root[b, i]) for j in nbrs]).mean(0)
                for j in range(sk.joint_count):
                    p = enc.f2(frames[b, i, j] - root[b, i])
                    np.testing.assert_allclose(out[b, i, j].numpy(), (p + q).numpy(), atol=1e-5)


def test_normalized_adjacency_matches_definition():
    sk = default_skeleton()
    a = sk.adjacency() + np.eye(sk.joint_count)
    deg = a.sum(1)
    expect = np.array([[a[i, j] / np.sqrt(deg[i] * deg[j]) for j in range(len(a))] for i in range(len(a))])
    got = normalized_adjacency(sk).numpy()
    np.testing.assert_allclose(got, expect, rtol=1e-6)
    np.testing.assert_allclose(got, got.T)
    assert np.max(np.abs(np.linalg.eigvalsh(got.astype(np.float64)))) <= 1 + 1e-6


def test_graph_conv_matches_einsum():
    torch.manual_seed(1)
    sk = default_skeleton()
    adj = normalized_adjacency(sk)
    gc = GraphConv(adj, 6).eval()
    x = torch.randn(2, 6, 5, sk.joint_count)
    w = gc.linear.weight[:, :, 0, 0]
    mixed = torch.einsum("bcnj,jk->bcnk", x, adj)
    lin = torch.einsum("oc,bcnk->bonk", w, mixed) + gc.linear.bias[None, :, None, None]
    bn = gc.norm
    norm = (lin - bn.running_mean[None, :, None, None]) / torch.sqrt(bn.running_var[None, :, None, None] + bn.eps)
    expect = torch.relu(norm * bn.weight[None, :, None, None] + bn.bias[None, :, None, None])
    np.testing.assert_allclose(gc(x).detach().numpy(), expect.detach().numpy(), atol=1e-5)


def test_st_block_temporal_conv_loop():
    torch.manual_seed(2)
    sk = default_skeleton()
    block = STBlock(normalized_adjacency(sk), 4, 3).eval()
    x = torch.randn(1, 4, 6, sk.joint_count)
    with torch.no_grad():
        g = block.graph(x)
        w, bias = block.temporal.weight, block.temporal.bias
        expect = x.clone()
        for n in range(6):
            acc = bias[:, None].repeat(1, sk.joint_count)
            for t in range(3):
                m = n + t - 1
                if 0 <= m < 6:
                    acc = acc + torch.einsum("oc,cj->oj", w[:, :, t, 0], g[0, :, m])
            expect[0, :, n] += acc
        np.testing.assert_allclose(block(x).numpy(), expect.numpy(), atol=1e-5)


def test_pose_encoder_shapes_and_joint_mismatch():
    cfg = EncoderConfig(d1=8, d2=12, k=4, blocks=2)
    sk = default_skeleton()
    enc = STPoseEncoder(sk, cfg)
    out = enc(torch.randn(3, 10, sk.joint_count, 8))
    assert out.shape == (3, 10, 12)
    with pytest.raises(ConfigurationError):
        enc(torch.randn(3, 10, sk.joint_count + 1, 8))
    with pytest.raises(ConfigurationError):
        enc(torch.randn(3, 10, sk.joint_count, 9))


def test_paper_skeleton_runs():
    cfg = EncoderConfig(d1=4, d2=8, k=4, blocks=1)
    sk = paper_skeleton()
    assert sk.joint_count == 53
    out = STPoseEncoder(sk, cfg)(torch.randn(1, 6, 53, 4))
    assert out.shape == (1, 6, 8)


@pytest.mark.parametrize("kw", [dict(d1=0), dict(k=0), dict(temporal_kernel=2), dict(blocks=-1)])
def test_encoder_config_validation(kw):
    with pytest.raises(ConfigurationError):
        EncoderConfig(**kw)


@settings(max_examples=10, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-5, 5))
def test_pose_features_translation_invariant(dx, dy, dz):
    torch.manual_seed(3)
    cfg = EncoderConfig(d1=8, d2=16, k=6, blocks=2)
    sk = default_skeleton()
    rpe, enc = RelativePositionEncoder(cfg).eval(), STPoseEncoder(sk, cfg).eval()
    frames = torch.randn(1, 12, sk.joint_count, 3, dtype=torch.float64)
    rpe.double(), enc.double()
    shifted = frames + torch.tensor([dx, dy, dz], dtype=torch.float64)
    with torch.no_grad():
        a = enc(rpe(frames, root_joints(frames, sk)))
        b = enc(rpe(shifted, root_joints(shifted, sk)))
    np.testing.assert_allclose(a.numpy(), b.numpy(), atol=1e-9)


def test_mlp_layout():
    m = MLP(3, [5, 7])
    kinds = [type(layer).__name__ for layer in m.layers]
    assert kinds == ["Linear", "BatchNorm1d", "ReLU", "Linear"]
    m2 = MLP(3, [5], activate_last=True)
    assert [type(layer).__name__ for layer in m2.layers] == ["Linear", "BatchNorm1d", "ReLU"]
    assert m(torch.zeros(0, 3)).shape == (0, 7)
