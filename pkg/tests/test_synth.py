import numpy as np
import pytest

from bitmark import INFINITY_2B, ScaleSchedule, kernels
from bitmark.detect import count_green
from bitmark.embed import ConstantLogitSource, EmbedConfig, embed_stream
from bitmark.errors import CalibrationError, ConfigError, DomainError
from bitmark.synth import (REFERENCE_ENTROPY_PROFILE, REFERENCE_PROFILE, EntropyProfile, SynthLogitSource,
                           SynthSourceConfig, binary_entropy_of_logit, calibrate_sigma,
                           generate_clean, load_profile, mean_entropy, save_profile)


def test_entropy_of_logit_closed_form():
    x = np.array([0.0, 1.0, -3.0, 40.0])
    p = 1 / (1 + np.exp(-x))
    with np.errstate(divide="ignore", invalid="ignore"):
        ref = -(p * np.log2(p) + (1 - p) * np.log2(1 - p))
    ref = np.nan_to_num(ref)
    np.testing.assert_allclose(binary_entropy_of_logit(x), ref, atol=1e-12)


def test_target_one_gives_zero_sigma():
    assert calibrate_sigma(1.0) == 0.0


def test_calibration_independent_check():
    sigma = calibrate_sigma(0.2)
    normals = np.random.default_rng(99).standard_normal(400_000)
    assert 0.19 <= mean_entropy(sigma, normals) <= 0.21


def test_calibration_monotone():
    assert calibrate_sigma(0.05) > calibrate_sigma(0.2) > calibrate_sigma(0.6)


def test_calibration_errors():
    with pytest.raises(CalibrationError):
        calibrate_sigma(0.0)
    with pytest.raises(CalibrationError):
        calibrate_sigma(0.001)
    with pytest.raises(CalibrationError):
        calibrate_sigma(0.5, samples=10)


def test_reference_profile_residuals(ref_config):
    normals = np.random.default_rng(4321).standard_normal(200_000)
    for sigma, target in zip(ref_config.sigma_per_scale, REFERENCE_ENTROPY_PROFILE):
        assert abs(mean_entropy(sigma, normals) - target) <= 0.01


def test_realized_entropy_matches_profile(make_ref_source):
    src = make_ref_source(8)
    for i in (0, 6, 12):
        r = INFINITY_2B.tokens_per_scale[i]
        _, g = src.scale_logits(i, max(r, 512), 32)
        assert abs(binary_entropy_of_logit(g).mean() - REFERENCE_ENTROPY_PROFILE[i]) < 0.03


def test_zero_sigma_is_uniform():
    cfg = SynthSourceConfig(EntropyProfile((1.0,)), (0.0,), 3)
    s = generate_clean(SynthLogitSource(cfg), ScaleSchedule((20_000,), 4), 1)
    assert abs(s.scales[0].mean() - 0.5) < 3 * np.sqrt(0.25 / 80_000)


def test_source_is_prefix_stable(ref_config):
    src = SynthLogitSource(SynthSourceConfig(ref_config.profile, ref_config.sigma_per_scale, 5))
    short = src.scale_logits(3, 2, 32)[1]
    fresh = SynthLogitSource(src.config)
    long = fresh.scale_logits(3, 40, 32)[1]
    np.testing.assert_array_equal(short, long[:64])
    assert fresh.next_logits(3, 0, 5, [0] * 5) == (0.0, long[5])


def test_generate_clean_reproducible(make_ref_source):
    a = generate_clean(make_ref_source(1), INFINITY_2B, 5)
    assert a == generate_clean(make_ref_source(1), INFINITY_2B, 5)
    assert a != generate_clean(make_ref_source(1), INFINITY_2B, 6)


def test_sign_symmetry(parity):
    # negated gaps with mirrored draws give the complement stream
    rng = np.random.default_rng(0)
    r, m = 500, 32
    g = rng.normal(0, 8, r * m)
    u = rng.random(r * m)
    z = np.zeros(r * m)
    nb = np.zeros(1)
    a = np.asarray(kernels.sample_scale(z, g, u, nb, nb, r, m, 1))
    b = np.asarray(kernels.sample_scale(z, -g, 1.0 - u, nb, nb, r, m, 1))
    np.testing.assert_array_equal(a, 1 - b)
    mask = parity.green_mask
    assert kernels.count_scale(a, r, m, 2, mask) == kernels.count_scale(b, r, m, 2, mask)


def test_memoryless_consecutive_bits():
    stats = pytest.importorskip("scipy.stats")
    cfg = SynthSourceConfig(EntropyProfile((0.3,)), (calibrate_sigma(0.3),), 17)
    s = generate_clean(SynthLogitSource(cfg), ScaleSchedule((31_250,), 32), 2)
    bits = s.scales[0]
    x, y = bits[:-1], bits[1:]
    table = np.array([[np.sum((x == i) & (y == j)) for j in (0, 1)] for i in (0, 1)])
    assert table.sum() >= 999_999
    _, p, _, _ = stats.chi2_contingency(table, correction=False)
    assert p > 0.01


def test_stickiness_adds_dependence():
    cfg = SynthSourceConfig(EntropyProfile((1.0,)), (0.0,), 1, stickiness=3.0)
    s = embed_stream(SynthLogitSource(cfg), ScaleSchedule((50,), 32),
                     EmbedConfig(0.0, __import__("bitmark").build_partition(1, {1}), 0))
    bits = s.scales[0]
    assert np.mean(bits[1:] == bits[:-1]) > 0.9


def test_clean_green_fraction_uniform_source(parity):
    fr = [count_green(generate_clean(ConstantLogitSource(), INFINITY_2B, s), parity)
          for s in range(50)]
    assert abs(np.mean([c / t for c, t, _ in fr]) - 0.5) < 0.002


def test_profile_files(tmp_path):
    path = tmp_path / "p.txt"
    save_profile(REFERENCE_PROFILE, path)
    assert load_profile(path) == REFERENCE_PROFILE
    path.write_text("# header\n0.1\n\n0.2  # comment\n")
    assert load_profile(path).targets == (0.1, 0.2)
    path.write_text("0.1\nabc\n")
    with pytest.raises(ConfigError):
        load_profile(path)
    path.write_text("1.5\n")
    with pytest.raises(ConfigError):
        load_profile(path)


def test_config_validation():
    with pytest.raises(ConfigError):
        SynthSourceConfig(EntropyProfile((0.1, 0.2)), (1.0,))
    with pytest.raises(DomainError):
        SynthSourceConfig(EntropyProfile((0.1,)), (-1.0,))
    with pytest.raises(DomainError):
        EntropyProfile(())
