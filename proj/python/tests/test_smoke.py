import json

import numpy as np
import pytest

import csdetect as cs


def test_sensing_matrix_shape_and_determinism():
    a = cs.make_sensing_matrix(112, 368, 7)
    b = cs.make_sensing_matrix(112, 368, 7)
    assert a.matrix.shape == (112, 368)
    assert np.array_equal(a.matrix, b.matrix)
    assert cs.minimum_rows(10, 4096) == 333
    with pytest.raises(ValueError):
        cs.make_sensing_matrix(10, 10, 1)


def test_scheme1_round_trip():
    phi = cs.make_sensing_matrix(40, 16 * 16, 3)
    cells = np.array([[2.0, 3.0], [10.0, 12.0]])
    y = cs.encode_scheme1(cells, 16, 16, phi)
    f = cs.omp_recover(y, phi)
    idx = sorted(np.flatnonzero(np.abs(f) > 0.5) + 1)
    assert idx == [2 + 16 * 2, 10 + 16 * 11]
    assert np.allclose(cs.bp_recover(y, phi), f, atol=1e-6)


def test_scheme2_clean_decode():
    layout = cs.build_axis_layout(260, 260, 27)
    assert layout.size == 27 and layout.bin_count == 368
    phi = cs.make_sensing_matrix(112, layout.bin_count, 7)
    cells = np.array([[40.0, 50.0], [120.5, 200.25], [230.0, 80.0]])
    y = cs.encode_scheme2(cells, layout, phi)
    assert y.shape == (112 * 27,)
    det = cs.decode_scheme2(y, layout, phi)
    assert det.shape == (3, 3)
    report = cs.match_detections(det[:, :2], cells, 6.0)
    assert report["tp"] == 3 and report["f1"] == 1.0


def test_oracle_noise_level():
    y = np.linspace(-1.0, 1.0, 224)
    assert np.array_equal(cs.oracle_predict(y, 112, 0.0, 1), y)
    noisy = cs.oracle_predict(y, 112, 0.05, 1)
    rel = np.linalg.norm(noisy - y) / np.linalg.norm(y)
    assert 0.02 < rel < 0.08


def test_metrics_and_merge():
    p, r, f1 = cs.prf1(872, 128, 211)
    assert abs(p - 0.872) < 5e-4 and abs(r - 0.805) < 5e-4 and abs(f1 - 0.837) < 5e-4
    sets = [np.array([[100.0 + 0.1 * i, 100.0, 1.0]]) for i in range(10)]
    merged = cs.merge_ensemble(sets, 9.0, 6)
    assert merged.shape == (1, 3)
    assert abs(merged[0, 0] - 100.45) < 1e-9
    assert cs.merge_ensemble(sets[:5], 9.0, 6).shape == (0, 3)


def test_generate_image():
    pixels, cells = cs.generate_image(120, 100, 3, 3, 20.0, seed=4)
    assert pixels.shape == (100, 120)
    assert cells.shape == (3, 2)
    assert pixels.min() >= 0.0 and pixels.max() <= 1.0


def test_config_and_subcommands(tmp_path):
    config = json.loads(cs.default_config())
    config["synth"].update(width=120, height=120, count_min=2, count_max=4, min_separation=14.0,
                           blob_radius_min=3.0, blob_radius_max=4.0, train_images=1, test_images=2)
    config["run"].update(patch_size=60, offsets=[0, 10])
    config["sensing"]["rows"] = 30
    config["encoder"]["axes"] = 7
    config["predictor"].update(sigma_rel=0.0, input_side=8, hidden_units=8, epochs=1)
    config["decoder"]["merge_min_count"] = 2
    text = cs.check_config(json.dumps(config))

    assert cs.synth(text, tmp_path / "data") == 0
    manifest = tmp_path / "data" / "manifest.json"
    assert cs.run(text, manifest, tmp_path / "run") == 0
    rows = (tmp_path / "run" / "evaluation.csv").read_text().strip().splitlines()
    assert rows[0] == "image_id,tp,fp,fn,precision,recall,f1"
    assert rows[-1].startswith("ALL,")
    assert cs.train(text, manifest, tmp_path / "model") == 0
    assert cs.ensemble(text, manifest, tmp_path / "ens", mode="trained",
                       model=tmp_path / "model" / "model.bin") == 0

    with pytest.raises(cs.ConfigError):
        cs.check_config('{"sensing": {"bogus": 1}}')
