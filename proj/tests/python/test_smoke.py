import json

import numpy as np
import pytest

import stylevec as sv


@pytest.fixture
def pair():
    base = sv.gen_base(n_blocks=4, seed=1)
    ft, ledger = sv.gen_styled_variant(base, classes=["early_block"], magnitude=0.5, seed=2)
    return base, ft, ledger


def test_tensor_numpy_round_trip():
    values = np.arange(6, dtype=np.float32).reshape(2, 3) / 4
    for dtype in ("F32", "F16", "BF16"):
        t = sv.Tensor(values, dtype)
        assert t.dtype == dtype
        assert t.shape == [2, 3]
        np.testing.assert_array_equal(t.numpy(), values)
    assert len(sv.Tensor(values, "F16").tobytes()) == 12


def test_checkpoint_io(tmp_path, pair):
    base, _, _ = pair
    path = tmp_path / "base.safetensors"
    sv.write_checkpoint(base, path)
    back = sv.read_checkpoint(path)
    assert back.bit_equal(base)
    assert back.to_bytes() == path.read_bytes()
    assert sv.Checkpoint.from_bytes(path.read_bytes()).bit_equal(base)
    assert len(back) == 29 and "text_embed.weight" in back


def test_task_vector_algebra(pair):
    base, ft, ledger = pair
    tau = sv.build_task_vector(ft, base)
    for key, delta in ledger.items():
        np.testing.assert_array_equal(tau.delta[key].numpy(), delta.numpy())
    rebuilt = sv.apply(base, sv.scale(tau, 1.0))
    for k in ft.keys():
        # one ulp at the scale of the largest operand
        scale = np.maximum.reduce([abs(base[k].numpy()), abs(tau.delta[k].numpy()), abs(ft[k].numpy())])
        assert np.all(abs(rebuilt[k].numpy() - ft[k].numpy()) <= np.spacing(scale))
    enhanced = sv.apply(base, sv.scale(tau, 3.0))
    key = next(iter(ledger))
    got = enhanced[key].numpy().astype(np.float64) - base[key].numpy()
    np.testing.assert_allclose(got, 3.0 * tau.delta[key].numpy(), rtol=0, atol=1e-6)
    assert "3" in [v for k, v in enhanced.metadata.items() if k.endswith(".coefficient")]


def test_coefficient_validation(pair):
    base, ft, _ = pair
    tau = sv.build_task_vector(ft, base)
    with pytest.raises(sv.StylevecError) as info:
        sv.scale(tau, 3.5, emotion=True)
    assert info.value.code == "CoefficientOutOfRange"
    assert sv.scale(tau, 3.5, emotion=True, beta_max=4.0).coefficient == 3.5


def test_lora_extract_and_apply(pair):
    base, ft, _ = pair
    tau = sv.build_task_vector(ft, base)
    key = "transformer_blocks.0.attn.to_q.weight"
    adapter = sv.extract_lora(tau, 16, [key])
    np.testing.assert_allclose(adapter.entries[key].materialize().numpy(), tau.delta[key].numpy(), atol=1e-5)
    out = sv.apply_lora(base, adapter, 1.12)
    got = out[key].numpy().astype(np.float64) - base[key].numpy()
    np.testing.assert_allclose(got, 1.2544 * tau.delta[key].numpy(), atol=1e-5)
    ranking = sv.rank_targets_by_variation(tau, base)
    assert len(ranking) == 29 and ranking[0][1] >= ranking[-1][1]


def test_merges(pair):
    base, ft, _ = pair
    dialect = sv.build_task_vector(ft, base)
    late, _ = sv.gen_styled_variant(base, classes=["late_block"], magnitude=0.5, seed=3)
    emotion = sv.build_task_vector(late, base)
    merged, dropped = sv.merge_hierarchical(base, dialect, 1.0, emotion, 2.0, n_blocks=4)
    assert len(dropped) == 29
    assert sv.classify_layer("transformer_blocks.1.norm.weight", 4) == "early_block"
    full = sv.merge_full(base, [(dialect, 1.0), (emotion, 2.0)])
    for k in base.keys():
        np.testing.assert_array_equal(merged[k].numpy(), full[k].numpy())


def test_analysis(pair):
    base, ft, _ = pair
    tau = sv.build_task_vector(ft, base)
    cos = sv.direction_consistency([tau, tau])
    assert cos[0][1] == pytest.approx(1.0, abs=1e-6)
    keys = [k for k in base.keys() if k.startswith("transformer_blocks.2.")]
    noisy = sv.perturb(base, keys, 1e-3, seed=4)
    assert sv.perturb(base, keys, 1e-3, seed=4).bit_equal(noisy)
    assert noisy["text_embed.weight"].bit_equal(base["text_embed.weight"])
    steps = sv.linearity_probe(base, [ft, ft, ft])
    assert all(s["residual"] < 1e-5 for s in steps)
    stats = sv.per_layer_stats(tau, base)
    assert stats["transformer_blocks.0.norm.weight"][0] == pytest.approx(0.5, rel=1e-5)


def test_cli_in_process(tmp_path):
    code, out, err = sv.run_cli(["--json", "gen-fixture", "--out", str(tmp_path / "b.st")])
    assert code == 0, err
    assert json.loads(out)["schema_version"]
    code, _, err = sv.run_cli(["inspect", "--file", str(tmp_path / "missing.st")])
    assert code == 3 and err
