import math

import numpy as np
import pytest

from volsynth.metrics import (
    IdentityEmbedder,
    MetricReport,
    SsimParams,
    difference_map,
    effective_scale_count,
    evaluate_sets,
    fid,
    frechet_distance,
    mae,
    ms_ssim,
    psnr,
    ssim,
    ssim_parts,
)
from volsynth.volume import Volume

from .oracles import (
    gaussian_frechet_1d,
    ms_ssim_bruteforce,
    ssim_bruteforce,
    ssim_fields_bruteforce,
)


def _pair(seed, shape=(16, 16, 16), corr=0.7):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=shape)
    y = corr * x + (1 - corr) * rng.normal(size=shape)
    return x, y


class TestMae:
    def test_identity(self, random_volume):
        v = random_volume()
        assert mae(v, v) == 0.0

    def test_constant_difference(self):
        r = np.full((4, 4, 4), 10.0)
        s = np.full((4, 4, 4), 7.0)
        assert mae(r, s) == pytest.approx(3.0)

    def test_direct_arithmetic(self):
        r = np.array([1.0, 2.0, 3.0]).reshape(1, 1, 3)
        s = np.array([2.0, 2.0, 5.0]).reshape(1, 1, 3)
        assert mae(r, s) == pytest.approx(1.0)

    def test_symmetry(self):
        x, y = _pair(0)
        assert mae(x, y) == pytest.approx(mae(y, x), abs=0.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mae(np.zeros((4, 4, 4)), np.zeros((4, 4, 5)))


class TestPsnr:
    def test_zero_db(self):
        # MSE 400 with peak 20 -> 10 log10(400/400) = 0 dB
        r = np.zeros((4, 4, 4))
        s = np.full((4, 4, 4), 20.0)
        assert psnr(r, s, peak=20.0) == pytest.approx(0.0, abs=1e-12)

    def test_twenty_db(self):
        r = np.zeros((4, 4, 4))
        s = np.full((4, 4, 4), 2.0)  # MSE 4
        assert psnr(r, s, peak=20.0) == pytest.approx(20.0)

    def test_identical_gives_inf_sentinel(self, random_volume):
        v = random_volume()
        assert psnr(v, v) == math.inf


class TestSsim:
    def test_identity(self, random_volume):
        v = random_volume()
        assert ssim(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_anticorrelated_negative(self):
        # Zero-mean alternating pattern against its negation: cs < 0 and the
        # pooled value goes negative.
        base = np.indices((16, 16, 16)).sum(axis=0) % 2
        x = (base * 2.0 - 1.0).astype(np.float64)
        y = -x
        l, cs = ssim_parts(x, y, SsimParams())
        assert cs.min() < 0
        assert ssim(x, y) < 0

    def test_matches_bruteforce_oracle(self):
        params = SsimParams(window=11, sigma=1.5, data_range=2.0)
        for seed in range(5):
            x, y = _pair(seed)
            ours = ssim(x, y, params)
            ref = ssim_bruteforce(x, y, 11, 1.5, params.c1_value, params.c2_value)
            assert ours == pytest.approx(ref, rel=1e-6, abs=1e-9)

    def test_fields_match_oracle_pointwise(self):
        params = SsimParams(window=5, sigma=1.0)
        x, y = _pair(3, shape=(10, 10, 10))
        l, cs = ssim_parts(x, y, params)
        l_ref, cs_ref = ssim_fields_bruteforce(x, y, 5, 1.0, params.c1_value, params.c2_value)
        np.testing.assert_allclose(l, l_ref, atol=1e-9)
        np.testing.assert_allclose(cs, cs_ref, atol=1e-9)

    def test_window_too_large(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((8, 8, 8)), np.ones((8, 8, 8)), SsimParams(window=11))


class TestMsSsim:
    def test_identity(self, random_volume):
        v = random_volume(shape=(32, 32, 32))
        assert ms_ssim(v, v) == pytest.approx(1.0, abs=1e-12)

    def test_single_scale_reduces_to_ssim(self):
        x, y = _pair(1)
        params = SsimParams(scales=1)
        assert ms_ssim(x, y, params) == pytest.approx(ssim(x, y, params), abs=0.0)

    def test_single_scale_keeps_sign(self):
        base = np.indices((16, 16, 16)).sum(axis=0) % 2
        x = (base * 2.0 - 1.0).astype(np.float64)
        assert ms_ssim(x, -x, SsimParams(scales=1)) < 0

    def test_matches_bruteforce_oracle_multiscale(self):
        params = SsimParams(window=5, sigma=1.0, scales=2)
        for seed in range(3):
            x, y = _pair(seed, shape=(16, 16, 16))
            ours = ms_ssim(x, y, params)
            ref = ms_ssim_bruteforce(x, y, 5, 1.0, params.c1_value, params.c2_value, 2)
            assert ours == pytest.approx(ref, rel=1e-6, abs=1e-9)

    def test_auto_scale_reduction_matches_oracle(self):
        # 32^3 with window 11 only fits 2 scales; a request for 3 reduces.
        params = SsimParams(window=11, sigma=1.5, scales=3)
        assert effective_scale_count((32, 32, 32), params) == 2
        x, y = _pair(9, shape=(32, 32, 32))
        ours = ms_ssim(x, y, params)
        ref = ms_ssim_bruteforce(x, y, 11, 1.5, params.c1_value, params.c2_value, 2)
        assert ours == pytest.approx(ref, rel=1e-5)

    def test_symmetry(self):
        x, y = _pair(4, shape=(32, 32, 32))
        params = SsimParams(window=5, scales=3)
        assert ms_ssim(x, y, params) == pytest.approx(ms_ssim(y, x, params), abs=1e-7)

    def test_too_small_volume(self):
        with pytest.raises(ValueError):
            ms_ssim(np.zeros((4, 4, 4)), np.ones((4, 4, 4)), SsimParams(window=11))

    def test_monotone_degradation(self):
        params = SsimParams(window=5, scales=2)
        for seed in range(5):
            rng = np.random.default_rng(seed)
            clean = rng.normal(size=(16, 16, 16))
            maes, psnrs, msssims = [], [], []
            for amp in (0.05, 0.15, 0.4, 1.0):
                noisy = clean + amp * np.random.default_rng(seed + 1).normal(size=clean.shape)
                maes.append(mae(clean, noisy))
                psnrs.append(psnr(clean, noisy, peak=clean.max() - clean.min()))
                msssims.append(ms_ssim(clean, noisy, params))
            assert all(a < b for a, b in zip(maes, maes[1:]))
            assert all(a > b for a, b in zip(psnrs, psnrs[1:]))
            assert all(a > b for a, b in zip(msssims, msssims[1:]))


class TestFrechet:
    def test_identical_moments_zero(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(6, 6))
        cov = a @ a.T + np.eye(6)
        mu = rng.normal(size=6)
        assert frechet_distance(mu, cov, mu, cov) == pytest.approx(0.0, abs=1e-8)

    def test_one_dimensional_closed_form(self):
        # mean 0 var 1 vs mean 1 var 1 -> (0-1)^2 + 1 + 1 - 2 = 1
        assert frechet_distance(0.0, 1.0, 1.0, 1.0) == pytest.approx(1.0, abs=1e-12)
        assert frechet_distance(0.0, 1.0, 1.0, 1.0) == pytest.approx(
            gaussian_frechet_1d(0.0, 1.0, 1.0, 1.0)
        )

    def test_isotropic_closed_form(self):
        # N(0, I) vs N(0, 4I) in 2-D: Tr(I + 4I - 2*2I) = 2
        assert frechet_distance(
            np.zeros(2), np.eye(2), np.zeros(2), 4.0 * np.eye(2)
        ) == pytest.approx(2.0, abs=1e-12)

    def test_random_diagonal_matches_sum_of_1d(self):
        rng = np.random.default_rng(5)
        mu_r, mu_g = rng.normal(size=4), rng.normal(size=4)
        var_r, var_g = rng.uniform(0.5, 2.0, 4), rng.uniform(0.5, 2.0, 4)
        expected = sum(
            gaussian_frechet_1d(mu_r[i], var_r[i], mu_g[i], var_g[i]) for i in range(4)
        )
        got = frechet_distance(mu_r, np.diag(var_r), mu_g, np.diag(var_g))
        assert got == pytest.approx(expected, rel=1e-10)


class TestFid:
    def test_identical_sets(self, random_volume):
        vols = [random_volume(seed=i) for i in range(5)]
        assert fid(vols, list(vols), IdentityEmbedder()) == pytest.approx(0.0, abs=1e-4)

    def test_symmetry(self, random_volume):
        a = [random_volume(seed=i) for i in range(6)]
        b = [random_volume(seed=100 + i) for i in range(6)]
        emb = IdentityEmbedder(max_features=8)
        assert fid(a, b, emb) == pytest.approx(fid(b, a, emb), abs=1e-5)

    def test_requires_two_samples(self, random_volume):
        with pytest.raises(ValueError):
            fid([random_volume()], [random_volume(), random_volume()], IdentityEmbedder())

    def test_separated_sets_positive(self, random_volume):
        a = [random_volume(seed=i) for i in range(5)]
        b = [Volume(v.data + 0.5) for v in a]
        assert fid(a, b, IdentityEmbedder()) > 0.01


class TestDifferenceMap:
    def test_identity(self, random_volume):
        v = random_volume()
        d = difference_map(v, v)
        assert float(d.data.max()) == 0.0

    def test_constant(self):
        r = Volume(np.full((4, 4, 4), 1.0, dtype=np.float32))
        s = Volume(np.full((4, 4, 4), -1.0, dtype=np.float32))
        np.testing.assert_allclose(difference_map(r, s).data, 2.0)

    def test_nonnegative(self, random_volume):
        d = difference_map(random_volume(seed=1), random_volume(seed=2))
        assert float(d.data.min()) >= 0.0


class TestEvaluateSets:
    def test_report_structure(self, random_volume):
        reals = [random_volume(shape=(16, 16, 16), seed=i) for i in range(3)]
        fakes = [random_volume(shape=(16, 16, 16), seed=10 + i) for i in range(3)]
        report = evaluate_sets(reals, fakes, SsimParams(window=5, scales=2), IdentityEmbedder())
        assert isinstance(report, MetricReport)
        assert len(report.per_sample) == 3
        assert set(report.summary) == {"mae", "psnr", "psnr_range", "ssim", "ms_ssim", "fid"}
        assert report.config["scales_used"] == 2

    def test_identity_mode_optima(self, random_volume):
        reals = [random_volume(shape=(16, 16, 16), seed=i) for i in range(3)]
        report = evaluate_sets(reals, list(reals), SsimParams(window=5, scales=2), IdentityEmbedder())
        assert report.mae == 0.0
        assert report.ms_ssim == pytest.approx(1.0, abs=1e-9)
        assert report.fid == pytest.approx(0.0, abs=1e-4)
        assert report.psnr == math.inf

    def test_parity_scale_mode(self, random_volume):
        reals = [random_volume(shape=(16, 16, 16), seed=i) for i in range(2)]
        fakes = [random_volume(shape=(16, 16, 16), seed=9 + i) for i in range(2)]
        params = SsimParams(window=5, scales=1)
        norm = evaluate_sets(reals, fakes, params, IdentityEmbedder(), scale_mode="normalized")
        parity = evaluate_sets(reals, fakes, params, IdentityEmbedder(), scale_mode="parity")
        # The x10 affine rescale multiplies MAE by 10; with the fixed peak of
        # 20, MSE grows x100, so parity PSNR sits exactly 20 dB lower.
        assert parity.mae == pytest.approx(10.0 * norm.mae, rel=1e-9)
        assert parity.psnr == pytest.approx(norm.psnr - 20.0, abs=1e-9)
        assert parity.config["data_range"] == pytest.approx(20.0)
