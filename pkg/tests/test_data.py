import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gih import data
from gih.data import Dataset, DegenerateLabelingError

A7 = np.array([[1.0, 1.0, 0.0], [1.0, 2.0, 1.0], [0.0, 1.0, 1.0]])


def _basis(dim, r, seed=0):
    return data.random_directions(dim, r, seed)


# Dataset ------------------------------------------------------------------------


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 3)), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan]]), np.array([1.0]))
    with pytest.raises(ValueError):
        Dataset(np.zeros((0, 3)), np.zeros(0))


def test_save_load_roundtrip(tmp_path):
    ds = data.gen_circles(8, *_basis(8, 2), 1.0, 2.0, 20, 0.1, seed=0)
    data.save_dataset(ds, tmp_path)
    back = data.load_dataset(tmp_path)
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.y, ds.y)
    assert back.meta["r_plus"] == 1.0


def test_train_test_split():
    ds = data.gen_circles(4, *_basis(4, 2), 1.0, 2.0, 10, 0.1, seed=0)
    tr, te = data.train_test_split(ds, 3)
    assert (tr.m, te.m) == (7, 3)
    np.testing.assert_array_equal(te.X, ds.X[7:])
    with pytest.raises(ValueError):
        data.train_test_split(ds, 10)


def test_random_directions_orthonormal():
    d = data.random_directions(10, 4, 3)
    np.testing.assert_allclose(d @ d.T, np.eye(4), atol=1e-10)
    with pytest.raises(ValueError):
        data.random_directions(3, 4, 0)


# circles --------------------------------------------------------------------------


def test_circles_exact_radius_without_noise():
    u1, u2 = _basis(6, 2)
    ds = data.gen_circles(6, u1, u2, 1.0, 2.0, 200, 0.0, seed=1)
    r = np.hypot(ds.X @ u1, ds.X @ u2)
    np.testing.assert_allclose(r[ds.y > 0], 1.0)
    np.testing.assert_allclose(r[ds.y < 0], 2.0)


def test_circles_complement_variance():
    dim, sigma = 6, 0.3
    u = _basis(dim, 2)
    ds = data.gen_circles(dim, u[0], u[1], 1.0, 2.0, 10_000, sigma, seed=2)
    comp = data.random_directions(dim, dim, 5)
    # directions of the complement: project a full basis out of span(u)
    rest = comp - (comp @ u.T) @ u
    q, _ = np.linalg.qr(rest.T)
    q = q[:, : dim - 2]
    var = (ds.X @ q).var(axis=0)
    assert np.all(np.abs(var / sigma**2 - 1) < 0.05)


def test_circles_balanced_and_rejects_bad_directions():
    u = _basis(5, 2)
    ds = data.gen_circles(5, u[0], u[1], 1.0, 2.0, 11, 0.1, seed=0)
    assert abs(np.sum(ds.y > 0) - np.sum(ds.y < 0)) <= 1
    with pytest.raises(ValueError):
        data.gen_circles(5, u[0], u[0], 1.0, 2.0, 10, 0.1, seed=0)


# direction-labeled -----------------------------------------------------------------


def test_label_function_examples():
    X = np.array([[3.0, -1.0], [-2.0, 5.0]])
    ds = data.gen_direction_labeled(X, [1.0, 0.0], label_noise_ratio=0.0)
    np.testing.assert_array_equal(ds.y, [1.0, -1.0])
    X = np.array([[2.0, 0.0], [0.5, 0.0]])
    ds = data.gen_direction_labeled(X, [1.0, 0.0], b=-1.0, kind="quadratic", label_noise_ratio=0.0)
    np.testing.assert_array_equal(ds.y, [1.0, -1.0])


def test_direction_labeled_degenerate():
    with pytest.raises(DegenerateLabelingError):
        data.gen_direction_labeled(np.ones((4, 2)), [1.0, 0.0], label_noise_ratio=0.0)


def test_direction_labeled_flip_rate_matches_resampling():
    dim, m, ratio = 4, 200_000, 0.2
    X = data.gaussian_base(np.eye(dim), m, seed=0)
    u = np.eye(dim)[0]
    clean = np.sign(X @ u)
    noisy = data.gen_direction_labeled(X, u, label_noise_ratio=ratio, seed=1)
    rate = np.mean(noisy.y != clean)
    # independent brute-force resampling of the same process
    gen = np.random.default_rng(123)
    p = gen.standard_normal(m)
    eta = gen.standard_normal(m) * np.sqrt(ratio)
    oracle = np.mean(np.sign(p) != np.sign(p + eta))
    assert abs(rate - oracle) < 0.01


def test_sinusoidal_uses_supplied_stats():
    X = data.gaussian_base(np.eye(6), 400, seed=3) * 5.0 + 2.0
    u = np.eye(6)[1]
    stats = data.channel_stats(X, 3)
    a = data.gen_direction_labeled(X, u, kind="sinusoidal", seed=4, channels=3)
    b = data.gen_direction_labeled(X, u, kind="sinusoidal", seed=4, channels=3, stats=stats)
    np.testing.assert_array_equal(a.y, b.y)
    c = data.gen_direction_labeled(X, u, kind="sinusoidal", seed=4, channels=3, stats=np.array([[0, 1]] * 3))
    assert not np.array_equal(a.y, c.y)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), kind=st.sampled_from(data.LABEL_KINDS), ratio=st.floats(0.0, 1.0))
def test_direction_labeled_keeps_inputs_property(seed, kind, ratio):
    X = data.gaussian_base(np.eye(5), 60, seed=seed)
    u = data.random_directions(5, 1, seed)[0]
    try:
        ds = data.gen_direction_labeled(X, u, kind=kind, label_noise_ratio=ratio, seed=seed)
    except DegenerateLabelingError:
        return
    assert ds.X.tobytes() == X.tobytes()
    assert np.all(np.abs(ds.y) == 1)
    again = data.gen_direction_labeled(X, u, kind=kind, label_noise_ratio=ratio, seed=seed)
    np.testing.assert_array_equal(ds.y, again.y)


# isotropic margin -----------------------------------------------------------------


def test_isotropic_margin_covariance():
    dim, eps, sigma = 5, 3.0, 0.5
    u = _basis(dim, 1)
    ds = data.gen_isotropic_margin(dim, u[0], eps, sigma, m=10_000, seed=0)
    cov = ds.X.T @ ds.X / ds.m
    ref = eps**2 * np.outer(u[0], u[0]) + sigma**2 * (np.eye(dim) - np.outer(u[0], u[0]))
    assert np.linalg.norm(cov - ref) / np.linalg.norm(ref) < 0.05


def test_isotropic_margin_isotropic_when_eps_equals_sigma():
    ds = data.gen_isotropic_margin(4, np.eye(4)[2], 1.0, 1.0, m=10_000, seed=1)
    cov = ds.X.T @ ds.X / ds.m
    assert np.max(np.abs(cov - np.eye(4))) < 0.05


def test_isotropic_margin_linear_labels_follow_projection():
    u = _basis(6, 1)[0]
    ds = data.gen_isotropic_margin(6, u, 2.0, 1.0, m=500, seed=2)
    assert np.all((ds.X @ u)[ds.y > 0] >= 0)
    assert np.all((ds.X @ u)[ds.y < 0] < 0)


# sbh ----------------------------------------------------------------------------------


def test_sbh_structure_without_noise():
    dim = 8
    u = _basis(dim, 3)
    ds = data.gen_sbh(dim, *u, epsilon=2.0, r_plus=1.0, r_minus=3.0, sigma_omega=0.0, m=400, seed=0)
    z = ds.X - 2.0 * ds.y[:, None] * u[0]
    r = np.linalg.norm(z @ u[1:].T, axis=1)
    np.testing.assert_allclose(r, np.where(ds.y > 0, 1.0, 3.0))
    # linear probe on u1 and radial probe both separate perfectly
    assert np.all(np.sign(ds.X @ u[0]) == ds.y)
    radial = np.linalg.norm(ds.X @ u[1:].T, axis=1)
    assert np.all(np.where(radial < 2.0, 1.0, -1.0) == ds.y)


@settings(max_examples=50, deadline=None, derandomize=True)
@given(seed=st.integers(0, 2**31))
def test_sbh_complement_independent_property(seed):
    dim = 6
    u = data.random_directions(dim, 3, seed)
    ds = data.gen_sbh(dim, *u, epsilon=1.0, r_plus=1.0, r_minus=2.0, sigma_omega=0.5, m=2000, seed=seed)
    q, _ = np.linalg.qr(np.hstack([u.T, np.eye(dim)]))
    comp_basis = q[:, 3:dim]
    sig = ds.X @ u.T
    comp = ds.X @ comp_basis
    sig, comp = sig - sig.mean(0), comp - comp.mean(0)
    cross = sig.T @ comp / ds.m
    z = cross / (sig.std(0)[:, None] * comp.std(0)[None, :] / np.sqrt(ds.m))
    # sum of squared z-scores is chi-square with 9 dof under independence;
    # 27.09 is its upper quantile at the one-sided 3-sigma level
    assert np.sum(z**2) <= 27.09


# covariance Gaussian -----------------------------------------------------------------


def test_covariance_gaussian_contract():
    cov = np.diag([4.0, 1.0, 0.5])
    ds = data.gen_covariance_gaussian(cov, 10_000, seed=0)
    emp = ds.X.T @ ds.X / ds.m
    ref = cov / 4.0
    assert np.linalg.norm(emp - ref) / np.linalg.norm(ref) < 0.05
    pos = np.sum(ds.y > 0)
    assert abs(pos - 5000) < 3 * np.sqrt(2500)


def test_covariance_gaussian_null_direction():
    ds = data.gen_covariance_gaussian(A7, 5000, seed=1)
    null = np.array([1.0, -1.0, 1.0]) / np.sqrt(3.0)
    assert np.max(np.abs(ds.X @ null)) < 1e-6


def test_generators_deterministic():
    u = _basis(6, 3)
    a = data.gen_sbh(6, *u, 1.0, 1.0, 2.0, 0.3, 50, seed=9)
    b = data.gen_sbh(6, *u, 1.0, 1.0, 2.0, 0.3, 50, seed=9)
    assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()


# CIFAR -------------------------------------------------------------------------------


def _fake_cifar(directory, n_files, record_count=data.CIFAR_RECORDS_PER_FILE):
    gen = np.random.default_rng(0)
    for name in n_files:
        rec = gen.integers(0, 256, (record_count, data.CIFAR_RECORD), dtype=np.uint8)
        rec[:, 0] = np.arange(record_count) % 10
        (directory / name).write_bytes(rec.tobytes())


def test_cifar_label_mapping():
    np.testing.assert_array_equal(data.cifar2_label([3, 9, 2, 0]), [1.0, -1.0, 1.0, -1.0])


def test_cifar_malformed_file(tmp_path):
    (tmp_path / "data_batch_1.bin").write_bytes(b"\x00" * 100)
    with pytest.raises(data.CifarFormatError):
        data.read_cifar_file(tmp_path / "data_batch_1.bin")


def test_cifar_missing_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        data.load_cifar2(tmp_path, 5)
    assert not data.cifar_available(tmp_path)


def test_cifar_load_downsampled(tmp_path):
    _fake_cifar(tmp_path, data.CIFAR_TRAIN_FILES + data.CIFAR_TEST_FILES)
    assert data.cifar_available(tmp_path)
    ds = data.load_cifar2(tmp_path, 20, downsample=16)
    assert ds.X.shape == (40, 768)
    assert np.sum(ds.y > 0) == 20
    assert 0.0 <= ds.X.min() and ds.X.max() <= 1.0


def test_downsample_area_block_mean():
    px = np.arange(3 * 4 * 4, dtype=float)[None]
    out = data.downsample_area(px, 2, src=4)
    img = px.reshape(3, 4, 4)
    np.testing.assert_allclose(out.reshape(3, 2, 2)[1, 0, 1], img[1, 0:2, 2:4].mean())
