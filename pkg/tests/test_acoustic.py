import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import dsp_oracle as oracle
from cabin_slu.acoustic import (
    AudioClip,
    LldConfig,
    apply_functionals,
    extract_directory,
    extract_lld,
    extract_utterance,
    fft_size,
    frame_count,
    functional_names,
    load_precomputed,
    log_mel_spectrum,
    mel_filterbank,
    read_wav,
    write_wav,
)
from cabin_slu.errors import ConfigError, EmptyInputError, FormatError, TooShortError
from cabin_slu.sidecar import write_vectors

SR = 16000


def test_frame_count_one_second():
    assert frame_count(16000, 400, 160) == 98
    L, S = LldConfig().frame_samples(SR)
    assert (L, S) == (400, 160)
    assert extract_lld(AudioClip(np.zeros(SR), SR)).shape[0] == 98


@given(st.integers(1, 5000), st.integers(1, 500), st.integers(0, 3000))
def test_frame_count_formula(L, S, extra):
    N = L + extra
    assert frame_count(N, L, S) == oracle.n_frames(N, L, S) == (N - L) // S + 1


def test_too_short():
    with pytest.raises(TooShortError):
        extract_lld(AudioClip(np.zeros(399), SR))


def test_all_zero_clip():
    lld = extract_lld(AudioClip(np.zeros(8000), SR))
    names = LldConfig().lld_names()
    assert np.all(lld[:, names.index("log_energy")] == math.log(1e-10))
    assert np.all(lld[:, names.index("zcr")] == 0.0)


def test_sine_440_peak_filter():
    t = np.arange(SR // 2) / SR
    clip = AudioClip(np.sin(2 * np.pi * 440 * t), SR)
    energies = np.exp(log_mel_spectrum(clip, LldConfig())).mean(axis=0)
    W, corners = oracle.filter_weights(26, 512, SR)
    at_440 = [oracle.triangle(440.0, corners[m], corners[m + 1], corners[m + 2]) for m in range(26)]
    assert int(np.argmax(energies)) == int(np.argmax(at_440))


def test_filterbank_matches_direct_weights():
    W, _ = oracle.filter_weights(26, 512, SR)
    assert np.allclose(mel_filterbank(26, 512, SR), W, rtol=1e-12, atol=1e-12)
    assert fft_size(400) == 512 and fft_size(512) == 512 and fft_size(1) == 1


@pytest.mark.parametrize("name", list(oracle.clips()))
def test_pipeline_matches_oracle(name):
    x, sr = oracle.clips()[name]
    ours = extract_lld(AudioClip(x, sr))
    ref = oracle.lld(x, sr)
    assert oracle.rel_err(ours, ref) <= 1e-6
    assert oracle.rel_err(apply_functionals(ours), oracle.functionals(ref)) <= 1e-6


def test_functionals_constant_column():
    out = apply_functionals(np.full((5, 1), 3.5))
    mean, sd, lo, hi, rng_, med, sk, ku = out
    assert (mean, sd, rng_, med) == (3.5, 0.0, 0.0, 3.5)
    assert (sk, ku) == (0.0, 0.0)


def test_functionals_one_two_three():
    mean, sd, lo, hi, rng_, med, sk, ku = apply_functionals(np.array([[1.0], [2.0], [3.0]]))
    assert (mean, lo, hi, rng_, med) == (2.0, 1.0, 3.0, 2.0, 2.0)
    assert sd == pytest.approx(math.sqrt(2 / 3), abs=1e-15)
    assert sk == pytest.approx(0.0, abs=1e-15)


def test_functionals_single_frame():
    out = apply_functionals(np.array([[4.0, -1.0]]))
    assert list(out[:8]) == [4.0, 0.0, 4.0, 4.0, 0.0, 4.0, 0.0, 0.0]


def test_functionals_dims_and_names():
    assert apply_functionals(np.random.default_rng(0).normal(size=(7, 30))).size == 240
    names = functional_names(LldConfig().lld_names())
    assert len(names) == 240 and names[0] == "mfcc0_mean" and names[-1] == "delta_zcr_kurtosis"


def test_functionals_empty():
    with pytest.raises(EmptyInputError):
        apply_functionals(np.zeros((0, 3)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 6), st.integers(0, 10 ** 6))
def test_functionals_match_scipy(T, C, seed):
    m = np.random.default_rng(seed).normal(size=(T, C))
    assert np.allclose(apply_functionals(m), oracle.functionals(m), rtol=1e-9, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 10), st.integers(2, 6), st.integers(0, 10 ** 6))
def test_functionals_permutation_equivariant(T, C, seed):
    r = np.random.default_rng(seed)
    m = r.normal(size=(T, C))
    perm = r.permutation(C)
    a = apply_functionals(m).reshape(C, 8)
    b = apply_functionals(m[:, perm]).reshape(C, 8)
    assert np.array_equal(b, a[perm])


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 30), st.integers(0, 10 ** 6))
def test_time_reversal_invariance(k, seed):
    # holds exactly when pre-emphasis is off and the frames tile the clip
    cfg = LldConfig(preemphasis=0.0, include_deltas=False)
    N = 400 + 160 * k
    x = np.random.default_rng(seed).uniform(-1, 1, size=N)
    a = apply_functionals(extract_lld(AudioClip(x, SR), cfg)).reshape(-1, 8)
    b = apply_functionals(extract_lld(AudioClip(x[::-1].copy(), SR), cfg)).reshape(-1, 8)
    for j in (0, 2, 3, 4, 5):  # mean, min, max, range, median
        assert np.allclose(a[:, j], b[:, j], rtol=1e-9, atol=1e-9)


def test_extract_utterance_default_dim_and_determinism():
    x = np.random.default_rng(5).uniform(-1, 1, size=4000)
    u1 = extract_utterance(AudioClip(x, SR))
    u2 = extract_utterance(AudioClip(x.copy(), SR))
    assert u1.dim == 240 and u1.source == "builtin"
    assert np.array_equal(u1.vector, u2.vector)


def test_scaling_shifts_energy_not_zcr():
    x = np.random.default_rng(6).uniform(-1, 1, size=4000)
    names = functional_names(LldConfig().lld_names())
    a = extract_utterance(AudioClip(x, SR)).vector
    b = extract_utterance(AudioClip(0.5 * x, SR)).vector
    i_mean = names.index("log_energy_mean")
    i_sd = names.index("log_energy_stddev")
    assert b[i_mean] - a[i_mean] == pytest.approx(2 * math.log(0.5), abs=1e-9)
    assert b[i_sd] == pytest.approx(a[i_sd], abs=1e-9)
    zcr = [i for i, n in enumerate(names) if n.startswith("zcr_")]
    assert np.array_equal(a[zcr], b[zcr])
    ref = oracle.functionals(oracle.lld(0.5 * x, SR))
    assert oracle.rel_err(b, ref) <= 1e-6


def test_config_validation():
    with pytest.raises(ConfigError):
        LldConfig(hop=0.03)
    with pytest.raises(ConfigError):
        LldConfig(n_mfcc=30)
    with pytest.raises(EmptyInputError):
        AudioClip(np.zeros(0), SR)
    with pytest.raises(ConfigError):
        AudioClip(np.zeros(5), 0)


def test_config_dims_without_extras():
    cfg = LldConfig(include_log_energy=False, include_zcr=False, include_deltas=False)
    assert cfg.n_lld == 13
    assert extract_lld(AudioClip(np.ones(800), SR), cfg).shape == (3, 13)


# --- precomputed sidecars ---------------------------------------------------

def test_load_precomputed_is10(tmp_path, rng):
    vecs = {f"u{i}": rng.normal(size=1582) for i in range(3)}
    write_vectors(tmp_path / "is10.tsv", vecs)
    got = load_precomputed(tmp_path / "is10.tsv", expected_dim=1582)
    assert list(got) == ["u0", "u1", "u2"]
    assert all(v.dim == 1582 and v.source == "precomputed" for v in got.values())
    assert np.array_equal(got["u1"].vector, vecs["u1"])


def test_load_precomputed_ragged(tmp_path):
    (tmp_path / "r.tsv").write_text("a\t1,2,3\nb\t1,2\n")
    with pytest.raises(FormatError, match=r"r.tsv:2"):
        load_precomputed(tmp_path / "r.tsv")


def test_load_precomputed_duplicate(tmp_path):
    (tmp_path / "d.tsv").write_text("a\t1\na\t2\n")
    with pytest.raises(FormatError, match="duplicate"):
        load_precomputed(tmp_path / "d.tsv")


def test_load_precomputed_empty(tmp_path):
    (tmp_path / "e.tsv").write_text("")
    assert load_precomputed(tmp_path / "e.tsv") == {}


def test_load_precomputed_expected_dim(tmp_path):
    (tmp_path / "s.tsv").write_text("a\t1,2\n")
    with pytest.raises(FormatError):
        load_precomputed(tmp_path / "s.tsv", expected_dim=1582)


# --- WAV round trip ---------------------------------------------------------

def test_wav_roundtrip_and_directory(tmp_path):
    x = np.sin(2 * np.pi * 300 * np.arange(3200) / SR) * 0.5
    write_wav(tmp_path / "b.wav", AudioClip(x, SR))
    write_wav(tmp_path / "a.wav", AudioClip(-x, SR))
    clip = read_wav(tmp_path / "b.wav")
    assert clip.sample_rate == SR
    assert np.max(np.abs(clip.samples - x)) < 1 / 32767
    out = extract_directory([tmp_path / "b.wav", tmp_path / "a.wav"])
    assert list(out) == ["a", "b"] and out["a"].size == 240
