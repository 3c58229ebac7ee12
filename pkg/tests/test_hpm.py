import numpy as np
import pytest

from cuesync.core import Interval, Segmentation, Tier, speech_end
from cuesync.hpm import (
    ZERO_MODEL,
    DegenerateFitError,
    HpmModel,
    ShiftReport,
    T0Search,
    delta_cv_stats,
    fit_hpm,
    hpm_segmentation,
    predict_delta,
    shift_intervals,
    theoretical_delta_c,
)
from cuesync.synth import HpmParams, SynthConfig, config_for_vowel_count, generate_corpus, measure_empirical_hpt


def test_constant_observations():
    obs = [(u, 140.0) for u in np.linspace(100, 3000, 40)]
    m = fit_hpm(obs)
    assert m.mean_ms == pytest.approx(140)
    assert m.a == pytest.approx(0, abs=1e-12)
    assert m.b == pytest.approx(140)


def test_noiseless_piecewise_data_recovers_breakpoint():
    u = np.arange(40, 3000, 25.0)
    d = np.where(u > 880, 140.0, 0.159 * u)
    m = fit_hpm(list(zip(u, d)))
    assert m.t0_ms == 880
    assert m.mean_ms == pytest.approx(140)
    assert m.a == pytest.approx(0.159) and m.b == pytest.approx(0, abs=1e-9)
    assert m.sse_constant == pytest.approx(0, abs=1e-9) and m.sse_linear == pytest.approx(0, abs=1e-9)


def test_recovery_on_synth_corpus():
    c = generate_corpus(config_for_vowel_count(1000, seed=21, hpt_noise_std_ms=10))
    m = fit_hpm(measure_empirical_hpt(c)[0])
    assert abs(m.mean_ms - 140) <= 5
    assert abs(m.t0_ms - 880) <= 60


def test_fit_needs_ten_observations():
    with pytest.raises(DegenerateFitError):
        fit_hpm([(100.0 * k, 140.0) for k in range(9)])


def test_fit_degenerate_when_no_candidate_has_a_decay_region():
    obs = [(5000.0 + k, 140.0) for k in range(20)]
    with pytest.raises(DegenerateFitError):
        fit_hpm(obs)


def test_zero_spread_decay_region_falls_back_to_flat_slope():
    obs = [(200.0, 30.0)] * 5 + [(2000.0 + 10 * k, 140.0) for k in range(20)]
    with pytest.warns(RuntimeWarning):
        m = fit_hpm(obs, T0Search(300, 1500, 20))
    assert m.slope_fallback and m.a == 0 and m.b == pytest.approx(30)


def test_fit_is_shift_consistent(rng):
    u = rng.uniform(0, 3000, 300)
    d = np.where(u > 900, 140, 0.15 * u) + rng.normal(0, 10, 300)
    m1 = fit_hpm(list(zip(u, d)))
    m2 = fit_hpm(list(zip(u, d + 25.0)))
    assert m2.t0_ms == m1.t0_ms
    assert m2.mean_ms == pytest.approx(m1.mean_ms + 25)
    assert m2.b == pytest.approx(m1.b + 25)
    assert m2.a == pytest.approx(m1.a)


def test_predict_examples():
    m = HpmModel(mean_ms=140, t0_ms=880, a=0.1, b=20)
    assert predict_delta(m, 881) == 140
    assert predict_delta(m, 400) == pytest.approx(60)
    assert predict_delta(m, 0) == pytest.approx(20)
    with pytest.raises(ValueError):
        predict_delta(m, -1)


def test_predict_is_piecewise_exact():
    m = HpmModel(mean_ms=133, t0_ms=700, a=0.2, b=-5)
    tail = predict_delta(m, np.array([0.0, 350.0, 700.0]))
    assert tail[1] - tail[0] == pytest.approx(tail[2] - tail[1])
    assert np.all(predict_delta(m, np.array([701.0, 1000.0, 5000.0])) == 133)


def test_model_json_round_trip(tmp_path):
    m = HpmModel(140.5, 880, 0.159, 1.0, 12, 3.0, 4.0, False)
    m.save(tmp_path / "h.json")
    assert HpmModel.load(tmp_path / "h.json") == m


def _seg():
    return Segmentation(Tier.AUDIO, ((0, 300, "sil"), (300, 400, "C0"), (400, 560, "V0"),
                                     (560, 660, "C1"), (660, 820, "V1"), (820, 1100, "sil")))


def test_zero_model_is_identity():
    seg = _seg()
    out = hpm_segmentation(seg, ZERO_MODEL, 820, consonant_lag_ms=0)
    assert out.intervals == seg.intervals


def test_constant_branch_moves_vowel_earlier():
    m = HpmModel(mean_ms=140, t0_ms=100, a=0, b=0)
    out = hpm_segmentation(_seg(), m, 820, consonant_lag_ms=60)
    by_label = {iv.label: iv for iv in out}
    assert by_label["V0"] == Interval(260, 420, "V0")
    # C0 moves 60 ms and is truncated where the earlier-moving V0 begins
    assert by_label["C0"] == Interval(240, 260, "C0")
    assert by_label["C1"] == Interval(500, 600, "C1")
    assert by_label["V1"] == Interval(660, 820, "V1")  # u = 80 <= t0: decay branch, lag 0
    assert out.intervals[0] == Interval(0, 240, "sil")  # truncated by C0


def test_overlap_truncates_earlier_interval_and_reports_drops():
    rep = ShiftReport()
    out = shift_intervals([Interval(0, 100, "a"), Interval(100, 200, "b"), Interval(200, 210, "c")],
                          [0, 50, 0], Tier.AUDIO, rep)
    assert out.intervals[0] == Interval(0, 50, "a")
    assert out.intervals[1] == Interval(50, 150, "b")
    assert rep.truncated >= 1
    rep2 = ShiftReport()
    out2 = shift_intervals([Interval(10, 20, "a"), Interval(30, 40, "b")], [100, 0], Tier.AUDIO, rep2)
    assert [iv.label for iv in out2] == ["b"] and len(rep2.dropped) == 1


def test_noise_free_hpm_segmentation_matches_truth():
    cfg = SynthConfig(seed=9, n_sentences=60, hpt_noise_std_ms=0)
    c = generate_corpus(cfg)
    m = fit_hpm(measure_empirical_hpt(c)[0])
    for s in c:
        pred = hpm_segmentation(s.audio_seg, m, speech_end(s.audio_seg, c.alphabet), c.alphabet,
                                consonant_lag_ms=60)
        vowels = [iv for iv in pred if iv.label.startswith("V")]
        truth = s.truth.hand_pos_seg.intervals
        assert [iv.label for iv in vowels] == [iv.label for iv in truth]
        for p, t in zip(vowels, truth):
            assert abs(p.midpoint - t.midpoint) <= cfg.period_ms


def test_delta_cv_fixed_spacing():
    cfg = SynthConfig(seed=1, n_sentences=5, consonant_dur_ms=(100, 100), vowel_dur_ms=(100, 100))
    st = delta_cv_stats(generate_corpus(cfg))
    assert st["mean_ms"] == 100 and st["std_ms"] == 0 and st["n"] > 0


def test_delta_cv_arithmetic(small_corpus):
    seg = Segmentation(Tier.AUDIO, ((0, 300, "sil"), (340, 440, "C0"), (440, 560, "V0"), (560, 800, "sil")))
    s = small_corpus.sentences[0]
    one = small_corpus.subset([s.replace(audio_seg=seg)])
    assert delta_cv_stats(one)["mean_ms"] == 110  # t_v = 500, t_c = 390


def test_theoretical_delta_c():
    assert theoretical_delta_c(140, 110, 60) == 60
    assert theoretical_delta_c(140, 140, 0) == 0
    assert theoretical_delta_c(100, 60, 40) == 60
    with pytest.warns(RuntimeWarning):
        assert theoretical_delta_c(50, 110, 20) == -50
    with pytest.raises(ValueError):
        theoretical_delta_c(-1, 0, 0)


def test_synth_hpm_params_delta():
    p = HpmParams()
    assert p.delta(2000) == 140
    assert p.delta(440) == pytest.approx(0.159 * 440)
