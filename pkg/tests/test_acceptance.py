"""End-to-end acceptance checks; each prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also repeated in the terminal summary.
"""
import itertools
import json
import math
import time

import numpy as np

from cuesync.classify import init_mlp, mlp_loss_and_grad
from cuesync.cli import main as cli_main
from cuesync.core import STREAM_ORDER, Alphabet, Phoneme, PhonemeKind
from cuesync.experiments import RecognitionConfig, compare_segmentations, paired_gap, run_ablation, sweep_delta_c
from cuesync.gmm import fit_full_gmm, log_gauss_diag
from cuesync.hpm import fit_hpm
from cuesync.metrics import align
from cuesync.mshmm import MsHmmModel, TrainSchedule, emission_logprob, init_model, paper_weights, train_embedded
from cuesync.mshmm.dp import chain_forward, chain_viterbi, loop_viterbi
from cuesync.synth import HpmParams, SynthConfig, config_for_vowel_count, count_vowels, generate_corpus, measure_empirical_hpt


def verdict(log, number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({detail})"
    log.append(line)
    print(line)
    assert ok, line


# corpus shared by criteria 4 and 5: 200 short sentences with gliding hands
ABLATION_CORPUS = dict(n_sentences=200, syllables_per_sentence=(14, 18), hand_motion="glide")
ABLATION_RECOGNITION = RecognitionConfig(schedule=TrainSchedule(mixtures=(1, 2), max_iters=6))


# ---------------------------------------------------------------- 1

def test_criterion_1_hpm_recovery(acceptance_log):
    hits, worst, times, sizes = 0, 0.0, [], []
    for seed in range(10):
        start = time.perf_counter()
        corpus = generate_corpus(config_for_vowel_count(900, seed=seed, hpt_noise_std_ms=20.0))
        model = fit_hpm(measure_empirical_hpt(corpus)[0])
        times.append(time.perf_counter() - start)
        sizes.append(count_vowels(corpus))
        ok = abs(model.mean_ms - 140) <= 10 and abs(model.t0_ms - 880) <= 60
        hits += ok
        worst = max(worst, abs(model.t0_ms - 880))
    ok = hits >= 9 and min(sizes) >= 800 and max(times) < 5
    verdict(acceptance_log, 1, "HPM recovery", ok,
            f"{hits}/10 seeds within tolerance, min vowels {min(sizes)}, worst |t0 error| {worst:.0f} ms, "
            f"max runtime {max(times):.2f} s")


# ---------------------------------------------------------------- 2

def test_criterion_2_segmentation_ordering(acceptance_log):
    corpus = generate_corpus(SynthConfig(seed=21, n_sentences=100, syllables_per_sentence=(8, 12)))
    start = time.perf_counter()
    r = compare_segmentations(corpus, repeats=10)
    elapsed = time.perf_counter() - start
    truth, hpm, audio = r["truth"].mean, r["hpm"].mean, r["audio"].mean
    ok = truth >= hpm > audio and truth - audio >= 0.15 and hpm - audio >= 0.10 and elapsed < 30
    verdict(acceptance_log, 2, "segmentation ordering", ok,
            f"truth {100 * truth:.2f} / hpm {100 * hpm:.2f} / audio {100 * audio:.2f}, {elapsed:.1f} s")


# ---------------------------------------------------------------- 3

def test_criterion_3_delta_c_sweep(acceptance_log):
    corpus = generate_corpus(SynthConfig(seed=21, n_sentences=100, syllables_per_sentence=(8, 12)))
    start = time.perf_counter()
    res = sweep_delta_c(corpus, lags=range(0, 161, 10), repeats=10)
    elapsed = time.perf_counter() - start
    peak = float(res.mean.max())
    drops = (peak - res.mean[0], peak - res.mean[-1])
    ok = abs(res.argmax - 60) <= 10 and min(drops) >= 0.03 and elapsed < 120
    verdict(acceptance_log, 3, "consonant lag sweep", ok,
            f"argmax {res.argmax:.0f} ms, endpoint drops {100 * drops[0]:.1f}/{100 * drops[1]:.1f} points, "
            f"{elapsed:.1f} s")


# ---------------------------------------------------------------- 4 and 5

def _ablation(**overrides):
    corpus = generate_corpus(SynthConfig(seed=3, **ABLATION_CORPUS, **overrides))
    start = time.perf_counter()
    reports = run_ablation(corpus, repeats=10, config=ABLATION_RECOGNITION)
    return reports, time.perf_counter() - start


def test_criterion_4_ablation_structure(acceptance_log):
    reports, elapsed = _ablation()
    gaps = [paired_gap(reports[0], reports[1]), paired_gap(reports[2], reports[3])]
    stds = [r.std for r in reports]
    ok = all(g > 2 * s for g, s in gaps) and max(stds) < 0.005 and elapsed < 900
    cells = ", ".join(f"{r.name} {100 * r.mean:.2f}±{100 * r.std:.2f}" for r in reports)
    verdict(acceptance_log, 4, "resync x context ablation", ok,
            f"{cells}; gaps mono {100 * gaps[0][0]:.2f} (2 sd {200 * gaps[0][1]:.2f}), "
            f"tri {100 * gaps[1][0]:.2f} (2 sd {200 * gaps[1][1]:.2f}); {elapsed:.0f} s")


def test_criterion_5_zero_lag_control(acceptance_log):
    reports, elapsed = _ablation(hpm_true=HpmParams(mean_ms=0.0, t0_ms=880.0, a=0.0, b=0.0), delta_c_true_ms=0.0)
    gaps = [paired_gap(reports[0], reports[1]), paired_gap(reports[2], reports[3])]
    ok = all(abs(g) <= s for g, s in gaps)
    verdict(acceptance_log, 5, "zero-lag control", ok,
            f"gaps mono {100 * gaps[0][0]:.2f} (sd {100 * gaps[0][1]:.2f}), "
            f"tri {100 * gaps[1][0]:.2f} (sd {100 * gaps[1][1]:.2f}); {elapsed:.0f} s")


# ---------------------------------------------------------------- 6

def _enumerate_chain(E, stay, adv):
    T, N = E.shape
    scores = []
    for steps in itertools.product((0, 1), repeat=T - 1):
        if sum(steps) != N - 1:
            continue
        path = np.concatenate([[0], np.cumsum(steps)])
        s = E[0, 0] + adv[N - 1]
        for t in range(1, T):
            s += (stay if path[t] == path[t - 1] else adv)[path[t - 1]] + E[t, path[t]]
        scores.append(s)
    return max(scores), np.logaddexp.reduce(scores)


def _enumerate_loop(E, stay, adv, entry):
    T, S = E.shape
    best = -np.inf
    for path in itertools.product(range(S), repeat=T):
        if path[0] % 3 or path[-1] % 3 != 2:
            continue
        s = entry + E[0, path[0]]
        for t in range(1, T):
            a, b = path[t - 1], path[t]
            if b == a:
                s += stay[a]
            elif b == a + 1 and b % 3:
                s += adv[a]
            elif a % 3 == 2 and b % 3 == 0:
                s += adv[a] + entry
            else:
                s = -np.inf
                break
            s += E[t, b]
        best = max(best, s + adv[path[-1]])
    return best


def _enumerate_alignment(ref, hyp):
    rank = {"match": 0, "sub": 1, "del": 2, "ins": 3}
    best = None

    def walk(i, j, cost, ops):
        nonlocal best
        if i == 0 and j == 0:
            key = (cost, tuple(rank[o] for o in ops))
            if best is None or key < best[0]:
                best = (key, ops)
            return
        if i and j:
            same = ref[i - 1] == hyp[j - 1]
            walk(i - 1, j - 1, cost + (not same), ops + ("match" if same else "sub",))
        if i:
            walk(i - 1, j, cost + 1, ops + ("del",))
        if j:
            walk(i, j - 1, cost + 1, ops + ("ins",))

    walk(len(ref), len(hyp), 0, ())
    ops = best[1]
    return len(ref), ops.count("del"), ops.count("sub")


def test_criterion_6_exact_oracles(acceptance_log):
    rng = np.random.default_rng(6)
    worst = 0.0
    for T, N in [(3, 1), (4, 2), (5, 3), (6, 3)]:
        for _ in range(20):
            E = rng.normal(size=(T, N)) * 2
            p = rng.uniform(0.1, 0.9, size=N)
            stay, adv = np.log(p), np.log1p(-p)
            vit, tot = _enumerate_chain(E, stay, adv)
            worst = max(worst, abs(chain_forward(E, stay, adv)[1] - tot) / abs(tot),
                        abs(chain_viterbi(E, stay, adv)[1] - vit) / abs(vit))
    none = np.full(2, -1, dtype=np.int64)
    for T in (3, 4, 5, 6):
        for _ in range(5):
            E = rng.normal(size=(T, 6)) * 2
            p = rng.uniform(0.1, 0.9, size=6)
            stay, adv = np.log(p), np.log1p(-p)
            best = _enumerate_loop(E, stay, adv, -math.log(2))
            got = loop_viterbi(E, stay, adv, np.arange(2, dtype=np.int64), none, none, 2, -math.log(2))[1]
            worst = max(worst, abs(got - best) / abs(best))
    dp_ok = worst <= 1e-8

    mismatches = 0
    for _ in range(200):
        ref = list(rng.choice(list("abc"), size=rng.integers(1, 8)))
        hyp = list(rng.choice(list("abcd"), size=rng.integers(0, 8)))
        r = align(ref, hyp)
        mismatches += (r.N, r.D, r.S) != _enumerate_alignment(ref, hyp)

    alphabet = Alphabet([Phoneme("sil", PhonemeKind.SILENCE), Phoneme("a", PhonemeKind.VOWEL)])
    dims = (2, 1, 3)
    P = 6
    model = MsHmmModel(alphabet, STREAM_ORDER, ["sil", "a"], [rng.dirichlet(np.ones(3), size=P) for _ in dims],
                       [rng.normal(size=(P, 3, d)) for d in dims], [rng.uniform(0.3, 2, size=(P, 3, d)) for d in dims],
                       np.full(P, 0.5), [np.full(d, 1e-6) for d in dims], paper_weights())
    emis_err = 0.0
    for s in range(3):
        lam = np.eye(3)[s]
        for _ in range(50):
            frame = [rng.normal(size=d) for d in dims]
            for state in model.unit("a").states:
                g = state[s]
                ref = np.log(np.sum(g.weights * np.exp(log_gauss_diag(frame[s][None], g.means, g.variances)[0])))
                emis_err = max(emis_err, abs(emission_logprob(state, frame, lam) - ref) / abs(ref))
    ok = dp_ok and mismatches == 0 and emis_err <= 1e-10
    verdict(acceptance_log, 6, "exact oracles", ok,
            f"dp rel err {worst:.1e}, alignment mismatches {mismatches}/200, one-hot emission rel err {emis_err:.1e}")


# ---------------------------------------------------------------- 7

def test_criterion_7_numerical_hygiene(acceptance_log):
    corpus = generate_corpus(SynthConfig(seed=7, n_sentences=40, syllables_per_sentence=(5, 8), n_vowels=4,
                                         n_consonants=3, n_positions=2, n_shapes=3, hand_motion="glide"))
    model = train_embedded(init_model(corpus), corpus, TrainSchedule(mixtures=(1, 2), max_iters=10))
    drops = [b - a for trace in model.meta["loglik_trace"] for a, b in zip(trace, trace[1:])]
    em_ok = min(drops) >= -1e-6
    floor_ok = all(np.all(model.variances[s][model.mix[s] > 0] >= model.floors[s]) for s in range(3))

    rng = np.random.default_rng(7)
    X = rng.normal(size=(16, 3))
    Y = np.eye(4)[rng.integers(0, 4, 16)]
    W, b = init_mlp([3, 4, 4, 4], rng)
    _, gW, gb = mlp_loss_and_grad(W, b, X, Y)
    h = 1e-6
    grad_err = 0.0
    for params, grads in ((W, gW), (b, gb)):
        for p, g in zip(params, grads):
            num = np.zeros_like(p)
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                up = mlp_loss_and_grad(W, b, X, Y)[0]
                p[idx] = old - h
                down = mlp_loss_and_grad(W, b, X, Y)[0]
                p[idx] = old
                num[idx] = (up - down) / (2 * h)
            grad_err = max(grad_err, np.linalg.norm(num - g) / max(np.linalg.norm(g), 1e-12))

    Xg = np.vstack([rng.normal(-2, 0.5, size=(200, 2)), rng.normal(2, 1e-4, size=(50, 2))])
    floor = np.array([1e-3, 1e-3])
    g = fit_full_gmm(Xg, 3, floor)
    gmm_floor_ok = all(np.linalg.eigvalsh(c - np.diag(floor)).min() >= -1e-12 for c in g.covs)
    gmm_em_ok = min(np.diff(g.loglik_trace)) >= -1e-6
    ok = em_ok and floor_ok and grad_err < 1e-4 and gmm_floor_ok and gmm_em_ok
    verdict(acceptance_log, 7, "numerical hygiene", ok,
            f"worst EM step {min(drops):.2e}, HMM floors {'held' if floor_ok else 'violated'}, "
            f"MLP gradient rel err {grad_err:.1e}, GMM floors {'held' if gmm_floor_ok else 'violated'}")


# ---------------------------------------------------------------- 8

def test_criterion_8_determinism(acceptance_log, tmp_path):
    synth = tmp_path / "synth.json"
    synth.write_text(json.dumps({"n_sentences": 24, "syllables_per_sentence": [5, 7], "n_vowels": 4,
                                 "n_consonants": 3, "n_positions": 2, "n_shapes": 3, "hand_motion": "glide"}))
    fast = tmp_path / "fast.json"
    fast.write_text(json.dumps({"repeats": 2, "max_iters": 2, "mixtures": [1], "triphone_iters": 1}))
    train = tmp_path / "train.json"
    train.write_text(json.dumps({"mixtures": [1, 2], "max_iters": 3}))
    sweep = tmp_path / "sweep.json"
    sweep.write_text(json.dumps({"repeats": 2, "lag_step": 40}))
    t2 = tmp_path / "t2.json"
    t2.write_text(json.dumps({"repeats": 2}))
    mlp = tmp_path / "mlp.json"
    mlp.write_text(json.dumps({"kind": "mlp", "mlp": {"max_epochs": 5}}))
    assert cli_main(["synth", "--out", str(tmp_path / "corpus"), "--seed", "9", "--config", str(synth)]) == 0
    corpus = str(tmp_path / "corpus" / "manifest.json")

    def runs(out):
        o = tmp_path / out
        return [
            ["synth", "--out", str(o / "synth"), "--seed", "9", "--config", str(synth)],
            ["fit-hpm", "--corpus", corpus, "--out", str(o / "hpm")],
            ["resync", "--corpus", corpus, "--out", str(o / "resync")],
            ["train-classifier", "--corpus", corpus, "--out", str(o / "mg")],
            ["eval-classifier", "--corpus", corpus, "--model", str(tmp_path / "a" / "mg" / "classifier.json"),
             "--out", str(o / "mg_eval")],
            ["train-classifier", "--corpus", corpus, "--out", str(o / "mlp"), "--config", str(mlp), "--seed", "2"],
            ["train", "--corpus", corpus, "--out", str(o / "model"), "--config", str(train), "--seed", "1"],
            ["decode", "--corpus", corpus, "--model", str(tmp_path / "a" / "model" / "model.json"),
             "--out", str(o / "decoded")],
            ["score", "--corpus", corpus, "--hyp", str(tmp_path / "a" / "decoded" / "decoded.json"),
             "--out", str(o / "score")],
            ["sweep", "--corpus", corpus, "--out", str(o / "sweep"), "--config", str(sweep)],
            ["table2", "--corpus", corpus, "--out", str(o / "table2"), "--config", str(t2)],
            ["ablate", "--corpus", corpus, "--out", str(o / "ablate"), "--config", str(fast)],
            ["table34", "--corpus", corpus, "--out", str(o / "table34"), "--config", str(fast)],
        ]

    codes = [cli_main(argv) for out in ("a", "b") for argv in runs(out)]
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    differing = [str(f) for f in files_a if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]
    n_commands = len({argv[0] for argv in runs("a")})
    ok = all(c == 0 for c in codes) and files_a == files_b and not differing
    verdict(acceptance_log, 8, "determinism", ok,
            f"{n_commands} subcommands, {len(files_a)} files compared, {len(differing)} differ")
