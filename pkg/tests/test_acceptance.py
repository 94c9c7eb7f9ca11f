"""Release gate: ten end-to-end checks, one printed verdict line each.

Each test prints `[acceptance NN] name: PASS/FAIL (detail)` on the live
terminal and then asserts, so a full `pytest tests/test_acceptance.py -v`
run shows every verdict even when all of them pass. Numbers 06 and 07
run desk-scale digit workloads and carry the `slow` marker; everything
else finishes in seconds.
"""
import time
from types import SimpleNamespace

import numpy as np
import pytest

from entryprune.data import ToySpec, make_toy
from entryprune.evaluate import (
    FeatureSet,
    gradient_probe,
    knn_accuracy,
    network_accuracy,
    random_baseline,
    stability,
)
from entryprune.flex import (
    FlexState,
    c_ratio_floor,
    candidate_count,
    flex_update,
    min_candidates,
)
from entryprune.cli import main
from entryprune.mlp import OptimizerConfig, loss_and_grads
from entryprune.rng import SeededRng
from entryprune.selector import (
    RunObserver,
    SelectionConfig,
    _top_by_entry,
    run_entryprune,
)
from entryprune.stopping import StopKind, StoppingConfig

from test_mlp import finite_diff_grads, random_problem
from test_selector import drive_against_sim

INTERACTION = list(range(6, 12))
NOISE = list(range(12, 20))
INFORMATIVE = set(range(12))

# Free knobs for the toy runs; the K/c_ratio/n_mb/n settings the checks
# pin are spelled out at each call site.
TOY_OPT = OptimizerConfig(learning_rate=0.01, batch_size=128)
NEVER = 10**6


@pytest.fixture
def report(capsys):
    def _report(num, name, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {num:02d}] {name}: {'PASS' if ok else 'FAIL'} ({detail})")
        assert ok, f"{name}: {detail}"

    return _report


def finite_group_mean(entry, idx):
    vals = entry[idx]
    finite = vals[np.isfinite(vals)]
    return float(finite.mean()) if finite.size else float("-inf")


def pooled_sd(a, b):
    return float(np.sqrt((a**2 + b**2) / 2.0))


def test_01_gradients_match_finite_differences(report):
    t0 = time.perf_counter()
    gen = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        state, batch, labels = random_problem(gen)
        _, grads = loss_and_grads(state, batch, labels)
        fd_w, fd_b = finite_diff_grads(state, batch, labels, step=1e-4)
        for got, want in list(zip(grads.weights, fd_w)) + list(zip(grads.biases, fd_b)):
            scale = np.maximum(np.abs(want), 1e-8)
            worst = max(worst, float((np.abs(got - want) / scale).max()))
    dt = time.perf_counter() - t0
    report(1, "backprop vs central differences", worst <= 1e-5 and dt < 10.0,
           f"20 configs, worst rel err {worst:.1e}, {dt:.1f}s of 10s")


def test_02_rotation_bookkeeping_matches_reference(report):
    t0 = time.perf_counter()
    mismatch = ""
    try:
        drive_against_sim(n=30, k=5, c_ratio=0.5, seed=3, rotations=200, score_seed=9)
    except AssertionError as exc:
        mismatch = str(exc).splitlines()[0]
    dt = time.perf_counter() - t0
    report(2, "bookkeeping vs brute-force mirror", not mismatch and dt < 5.0,
           f"200 rotations with tied scores{mismatch and ', ' + mismatch}, {dt:.1f}s of 5s")


def test_03_top_set_containment_and_threshold(report):
    t0 = time.perf_counter()
    data = make_toy(ToySpec(n_samples=2000, seed=0))
    cfg = SelectionConfig(k=12, c_ratio=0.5, n_mb=20, seed=0,
                          optimizer=TOY_OPT, max_rotations=600)
    violations = []

    def on_rotation(sel, mlp):
        tops = set(_top_by_entry(sel.entry_scores, sel.input_features, sel.k).tolist())
        if not tops <= set(sel.input_features.tolist()):
            violations.append(sel.rotation_count)

    result = run_entryprune(
        data, cfg, StoppingConfig(kind=StopKind.IDENT, ident_patience=40),
        SeededRng(0), observer=RunObserver(on_rotation=on_rotation),
    )
    by_phase = {}
    for rec in result.history:
        by_phase.setdefault(rec.phase, []).append(rec.min_top_entry)
    for phase, series in by_phase.items():
        for earlier, later in zip(series, series[1:]):
            if later < earlier:
                violations.append((phase, earlier, later))
    dt = time.perf_counter() - t0
    report(3, "kept-set containment and rising threshold", not violations,
           f"{len(result.history)} rotations, {len(violations)} violations, {dt:.1f}s")


def test_04_toy_recovery(report):
    t0 = time.perf_counter()
    hits, ordering = [], []
    for seed in range(5):
        data = make_toy(ToySpec(n_samples=2000, seed=seed))
        cfg = SelectionConfig(k=12, c_ratio=0.5, n_mb=20, seed=seed,
                              optimizer=TOY_OPT, max_rotations=600)
        result = run_entryprune(
            data, cfg, StoppingConfig(kind=StopKind.IDENT, ident_patience=40), SeededRng(seed)
        )
        hits.append(len(INFORMATIVE & set(result.selected)))
        inter = finite_group_mean(result.entry_scores, INTERACTION)
        noise = finite_group_mean(result.entry_scores, NOISE)
        ordering.append(inter > noise)
    dt = time.perf_counter() - t0
    good_seeds = sum(h >= 10 for h in hits)
    ok = good_seeds >= 4 and all(ordering) and dt < 120.0
    report(4, "toy recovery", ok,
           f"hits {hits} (>=10 in {good_seeds}/5), interaction>noise {sum(ordering)}/5, "
           f"{dt:.0f}s of 120s")


def test_05_gradient_regrowth_probe(report):
    t0 = time.perf_counter()
    details = []
    ok = True
    for seed in range(3):
        data = make_toy(ToySpec(n_samples=2000, seed=seed))
        cfg = SelectionConfig(k=12, c_ratio=0.5, n_mb=20, seed=seed, max_rotations=40)
        rep = gradient_probe(data, cfg, StoppingConfig(kind=StopKind.IDENT, ident_patience=NEVER))
        lin, inter, noi = (rep.groups[g] for g in ("linear", "interaction", "noise"))
        sep_lin = (lin.gradient_mean - noi.gradient_mean) / pooled_sd(lin.gradient_sd, noi.gradient_sd)
        sep_inter = abs(inter.gradient_mean - noi.gradient_mean) / pooled_sd(inter.gradient_sd, noi.gradient_sd)
        ok = ok and sep_lin > 1.0 and sep_inter <= 1.0
        details.append(f"seed{seed}: lin {sep_lin:.1f}, inter {sep_inter:.2f}")
    dt = time.perf_counter() - t0
    ok = ok and dt < 120.0
    report(5, "post-reset gradient separation", ok,
           "; ".join(details) + f"; {dt:.0f}s of 120s")


@pytest.mark.slow
def test_06_digit_selection_quality(report, digits_split):
    t0 = time.perf_counter()
    std, split = digits_split
    train = (std.X[split.train], std.y[split.train])
    test = (std.X[split.test], std.y[split.test])
    stopping = StoppingConfig(kind=StopKind.IDENT, ident_patience=NEVER)

    ep_accs = []
    for seed in range(5):
        cfg = SelectionConfig(k=50, c_ratio=0.2, n_mb=100, seed=seed, max_rotations=60)
        result = run_entryprune(std, cfg, stopping, SeededRng(seed), split=split)
        ep_accs.append(knn_accuracy(train, test, FeatureSet(tuple(result.selected)), k=3).runs[0])
    rand_accs = [knn_accuracy(train, test, fs, k=3).runs[0]
                 for fs in random_baseline(std.n_features, 50, seed=1234, runs=5)]
    all_acc = knn_accuracy(train, test, FeatureSet(tuple(range(std.n_features))), k=3).runs[0]
    ep, rand = float(np.mean(ep_accs)), float(np.mean(rand_accs))
    dt = time.perf_counter() - t0
    ok = ep >= rand + 0.10 and ep >= all_acc - 0.05 and dt < 1800.0
    report(6, "digit selection quality", ok,
           f"mean knn(3): selected-50 {ep:.4f}, random-50 {rand:.4f}, "
           f"all-{std.n_features} {all_acc:.4f}, {dt:.0f}s of 1800s")


@pytest.mark.slow
def test_07_stability_grows_with_candidate_ratio(report, digits_split):
    t0 = time.perf_counter()
    std, split = digits_split
    test_X, test_y = std.X[split.test], std.y[split.test]
    stopping = StoppingConfig(kind=StopKind.IDENT, ident_patience=NEVER)
    ji, acc = {}, {}
    for ratio in (0.2, 0.8):
        sets, net_accs = [], []
        for seed in range(10):
            cfg = SelectionConfig(k=50, c_ratio=ratio, n_mb=100, seed=seed, max_rotations=20)
            result = run_entryprune(std, cfg, stopping, SeededRng(seed), split=split)
            sets.append(FeatureSet(tuple(result.selected)))
            net_accs.append(network_accuracy(result, test_X, test_y))
        ji[ratio] = stability(sets)
        acc[ratio] = float(np.mean(net_accs))
    dt = time.perf_counter() - t0
    ok = ji[0.8] >= ji[0.2] + 0.03 and acc[0.2] >= acc[0.8] and dt < 7200.0
    report(7, "stability trend over candidate ratio", ok,
           f"jaccard 0.8:{ji[0.8]:.3f} vs 0.2:{ji[0.2]:.3f}, "
           f"net acc 0.2:{acc[0.2]:.3f} vs 0.8:{acc[0.8]:.3f}, {dt:.0f}s of 7200s")


def test_08_flex_bounds_fuzz(report):
    configs = [(23, 7), (40, 9), (12, 8), (100, 17), (9, 7)]
    gen = np.random.default_rng(42)
    total, resizes, problems = 0, 0, []

    t0 = time.perf_counter()
    for n, k in configs:
        flex = FlexState()
        floor = c_ratio_floor(n, k)
        sel = SimpleNamespace(n_features=n, k=k, c_ratio=1.0)
        best = 10.0
        for _ in range(200):
            total += 1
            roll = gen.random()
            if roll < 0.60:
                loss = best  # stall
            elif roll < 0.65:
                loss = best - 10.0 * gen.random()  # clear improvement
                best = loss
            else:
                loss = best + 10.0 * gen.random()  # regression, still a stall
            old = sel.c_ratio
            new = flex_update(flex, loss, sel)
            if new is not None:
                resizes += 1
                shrunk = new == max(old / 2.0, floor)
                grown = new == min(old * 2.0, 1.0)
                if not (shrunk or grown):
                    problems.append((n, k, old, new))
                sel.c_ratio = new
            size = k + candidate_count(n, k, sel.c_ratio, min_candidates(k))
            if not (int(np.ceil(6 * k / 5)) <= size <= n):
                problems.append((n, k, sel.c_ratio, size))
    dt = time.perf_counter() - t0
    ok = not problems and total == 1000 and resizes > 20 and dt < 1.0
    report(8, "flex sizing bounds", ok,
           f"{total} rotations, {resizes} resizes, {len(problems)} violations, {dt:.2f}s of 1s")


def test_09_selection_is_deterministic(report, tmp_path, digits_files):
    t0 = time.perf_counter()
    toy_args = ["select", "--format", "toy", "--data", "n=600,seed=2",
                "--k", "6", "--c-ratio", "0.5", "--n-mb", "5",
                "--stopping", "ident", "--patience", "30", "--max-rotations", "12"]
    digit_args = ["select", "--format", "idx",
                  "--data", str(digits_files["images"]), "--labels", str(digits_files["labels"]),
                  "--k", "20", "--profile", "wide", "--hidden", "32",
                  "--stopping", "ident", "--patience", "100", "--max-rotations", "8"]
    outcomes = []
    clean_exits = True
    for tag, args in (("toy", toy_args), ("digits", digit_args)):
        picks = []
        for attempt in ("a", "b"):
            out = tmp_path / f"{tag}-{attempt}"
            clean_exits = clean_exits and main(args + ["--out", str(out)]) == 0
            selected = out / "selected.txt"
            picks.append(selected.read_bytes() if selected.exists() else b"")
        outcomes.append(bool(picks[0]) and picks[0] == picks[1])
    dt = time.perf_counter() - t0
    ok = all(outcomes) and clean_exits and dt < 300.0
    report(9, "repeat runs byte-identical", ok,
           f"toy match {outcomes[0]}, digits match {outcomes[1]}, {dt:.0f}s of 300s")


def test_10_metric_ablation_ordering(report, tmp_path, capsys):
    t0 = time.perf_counter()
    out = tmp_path / "grid.txt"
    rc = main(["ablate", "--format", "toy", "--data", "n=800,noise_sd=0.8,noise=28,seed=0",
               "--k", "4", "--c-ratio", "0.5", "--n-mb", "20",
               "--lr", "0.01", "--batch-size", "128",
               "--stopping", "ident", "--patience", "40", "--max-rotations", "600",
               "--runs", "5", "--out", str(out)])
    capsys.readouterr()
    means = {}
    if rc == 0 and out.exists():
        for line in out.read_text(encoding="utf-8").splitlines():
            parts = line.split()
            known = {"gradient_sum", "weight_change", "magnitude", "molchanov"}
            if len(parts) >= 4 and parts[0] in known:
                means[(parts[0], parts[1])] = float(parts[2])
    dt = time.perf_counter() - t0
    gs = means.get(("gradient_sum", "entry_score"), float("nan"))
    mag = means.get(("magnitude", "entry_score"), float("nan"))
    ok = rc == 0 and len(means) == 7 and gs >= mag - 0.01 and dt < 600.0
    report(10, "metric ablation ordering", ok,
           f"gradient_sum/entry {gs:.4f} vs magnitude/entry {mag:.4f} over 5 runs, "
           f"{len(means)} grid cells, {dt:.0f}s of 600s")
