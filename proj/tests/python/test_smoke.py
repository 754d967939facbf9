import math
import os

import numpy as np
import pytest

import svae

DATA_DIR = os.environ.get("SVAE_DATA_DIR", os.path.join(os.path.dirname(__file__), "..", "..", "data", "mnist-5k"))


def test_head_widths():
    widths = {v: svae.param_count(v, 3, 64, 81) for v in svae.variants()}
    assert widths == {"original": 162, "naive": 1152, "mvn": 960, "lowrank-mvn": 768}


def test_kron_diag_matches_numpy():
    rng = np.random.default_rng(0)
    a, b = rng.uniform(0.1, 2.0, 4), rng.uniform(0.1, 2.0, 4)
    expected = np.diag(np.kron(np.diag(a), np.diag(b)))
    np.testing.assert_allclose(svae.kron_diag(a, b), expected, rtol=1e-14)
    with pytest.raises(ValueError):
        svae.kron_diag(a, b[:3])


def test_kl_closed_form():
    mean = np.array([0.5, -1.0, 0.0])
    log_var = np.array([0.0, 0.3, -0.7])
    expected = 0.5 * np.sum(mean**2 + np.exp(log_var) - 1.0 - log_var)
    assert svae.kl_to_standard_normal(mean, log_var) == pytest.approx(expected, rel=1e-12)
    assert svae.kl_to_standard_normal(np.zeros(5), np.zeros(5)) == 0.0


def test_parzen_matches_direct_sum():
    rng = np.random.default_rng(1)
    samples = rng.normal(size=(50, 4))
    x = rng.normal(size=4)
    sigma = 0.7
    sq = np.sum((samples - x) ** 2, axis=1)
    terms = -sq / (2 * sigma**2) - 2 * math.log(2 * math.pi * sigma**2)
    expected = np.log(np.mean(np.exp(terms)))
    assert svae.parzen_log_density(x, samples, sigma) == pytest.approx(expected, abs=1e-10)
    with pytest.raises(ValueError):
        svae.parzen_log_density(x, samples, 0.0)


def test_log_spaced_grid():
    grid = svae.log_spaced_grid(0.01, 1.0, 3)
    np.testing.assert_allclose(grid, [0.01, 0.1, 1.0], rtol=1e-12)


def test_generate_shape_range_and_determinism():
    model = svae.Model("lowrank-mvn", "mnist", d=3, n_maps=8, latent_dim=16, seed=3)
    assert model.head_width == 4 * 3 * 8
    assert model.image_shape == (1, 28, 28)
    a = model.generate(5, seed=11)
    b = model.generate(5, seed=11)
    assert a.shape == (5, 1, 28, 28)
    assert np.all((a >= 0) & (a <= 1))
    np.testing.assert_array_equal(a, b)
    assert model.encode_calls == 0


def test_unknown_variant_rejected():
    with pytest.raises(Exception):
        svae.Model("bogus")


def test_train_save_load_round_trip(tmp_path):
    images, labels = svae.load_mnist(DATA_DIR, "train")
    assert images.shape == (4000, 1, 28, 28)
    assert len(labels) == 4000
    subset = images[:64]
    model = svae.Model("mvn", "mnist", d=3, n_maps=8, latent_dim=16, seed=5)
    reports = svae.train(model, subset, epochs=2, batch_size=32, learning_rate=1e-3, seed=5)
    assert [r["epoch"] for r in reports] == [1, 2]
    for r in reports:
        assert r["mean_elbo"] == pytest.approx(r["mean_recon"] - r["mean_kl"], rel=1e-9, abs=1e-9)
    path = tmp_path / "model.ckpt"
    model.save(path)
    loaded = svae.Model.load(path)
    assert loaded.variant == "mvn"
    np.testing.assert_array_equal(model.generate(3, seed=2), loaded.generate(3, seed=2))
    assert model.reconstruction_mse(subset, seed=1) == loaded.reconstruction_mse(subset, seed=1)


def test_corrupt_checkpoint_raises(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        svae.Model.load(path)


def test_png_grid(tmp_path):
    out = tmp_path / "grid.png"
    svae.save_png_grid(np.full((4, 1, 5, 5), 0.5), 2, out)
    assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    with pytest.raises(ValueError):
        svae.save_png_grid(np.full((1, 1, 2, 2), 2.0), 1, tmp_path / "x.png")
