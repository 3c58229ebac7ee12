"""A short tour: generate a lagged corpus, measure the lags, and show what resync buys.

Run: python3 demos/walkthrough.py
"""
import time
import warnings

from cuesync.experiments import RecognitionConfig, compare_segmentations, paired_gap, run_ablation, sweep_delta_c
from cuesync.hpm import fit_hpm
from cuesync.mshmm import TrainSchedule
from cuesync.synth import SynthConfig, count_vowels, generate_corpus, measure_empirical_hpt

warnings.simplefilter("ignore", RuntimeWarning)


def main():
    cfg = SynthConfig(seed=1, n_sentences=80, syllables_per_sentence=(8, 12))
    corpus = generate_corpus(cfg)
    print(f"corpus: {len(corpus)} sentences, {count_vowels(corpus)} vowels")

    vowels, consonants = measure_empirical_hpt(corpus)
    model = fit_hpm(vowels)
    print(f"hand position leads the lips by {model.mean_ms:.0f} ms "
          f"until {model.t0_ms:.0f} ms before the end of speech, then the lead shrinks")
    print(f"hand shape leads by {sum(consonants) / len(consonants):.0f} ms on average")

    sweep = sweep_delta_c(corpus, lags=range(0, 161, 20), repeats=3)
    curve = "  ".join(f"{lag:.0f}:{100 * acc:.0f}%" for lag, acc in zip(sweep.lags, sweep.mean))
    print(f"hand shape accuracy by assumed lag  {curve}")
    print(f"best lag {sweep.argmax:.0f} ms")

    seg = compare_segmentations(corpus, repeats=3)
    print("hand position accuracy by segmentation: "
          + ", ".join(f"{k} {100 * r.mean:.1f}%" for k, r in seg.items()))

    start = time.perf_counter()
    small = generate_corpus(SynthConfig(seed=2, n_sentences=60, syllables_per_sentence=(8, 10), hand_motion="glide"))
    cfg = RecognitionConfig(schedule=TrainSchedule(mixtures=(1, 2), max_iters=5), min_occupancy=5)
    reports = run_ablation(small, repeats=2, config=cfg)
    for r in reports:
        print(f"  {r.name:15s} {100 * r.mean:.2f}%")
    gap, _ = paired_gap(reports[0], reports[1])
    print(f"resync gains {100 * gap:.2f} points for monophones ({time.perf_counter() - start:.0f} s)")


if __name__ == "__main__":
    main()
