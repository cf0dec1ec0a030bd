"""Acceptance suite: every gate criterion at its stated tolerance, one
printed PASS/FAIL line each (run with -s to see them on success).

Heavy end-to-end criteria (funnel replay, A/B drift, crash safety, size
study) live here; module test files cover the fine-grained behavior.
"""

from __future__ import annotations

import random
import signal
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from cmdsift import classifier as clf
from cmdsift import core, evalharness
from cmdsift.calibrate import CalibrationInput, calibrate, max_f1
from cmdsift.classifier import ClassifierConfig
from cmdsift.core import Decision, Label, LabeledSample, Origin
from cmdsift.evalharness import StreamSpec, ab_experiment, dataset_size_study, make_stream
from cmdsift.fixtures import pair_events, reverse_shell_rule_path
from cmdsift.rules import evaluate, load_rules
from cmdsift.service import ScenarioEngine, ServiceConfig, replay_events
from cmdsift.store import ScenarioStore
from cmdsift.synthgen import MockBackend, generate_dataset
from cmdsift.trainer import DecayPolicy, assemble, decay_weight
from cmdsift.vectorize import VectorizerConfig, ngrams, substitute_placeholders, tokenize, vectorize

from test_calibrate import brute_force, random_instance
from test_rules import random_rule_and_oracle, random_text

DAY = core.MS_PER_DAY


def report(name: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"ACCEPTANCE {name}: {status}{suffix}", flush=True)
    assert ok, f"{name}{suffix}"


@pytest.fixture(scope="module")
def big_synthetic(rs_plan, rs_taxonomies):
    """The shipped-scale synthetic set: 10k positive + 10k negative."""
    samples, _, _ = generate_dataset(
        rs_plan, rs_taxonomies, {Label.POSITIVE: 10_000, Label.NEGATIVE: 10_000},
        MockBackend(seed=17), seed=18, now_ms=1_748_000_000_000,
    )
    return samples


@pytest.fixture(scope="module")
def heldout_eval(rs_plan, rs_taxonomies):
    samples, _, _ = generate_dataset(
        rs_plan, rs_taxonomies, {Label.POSITIVE: 500, Label.NEGATIVE: 500},
        MockBackend(seed=31), seed=32, now_ms=1_748_100_000_000,
    )
    return samples


def test_01_rule_grammar_and_table_pairs():
    start = time.monotonic()
    rules = load_rules(str(reverse_shell_rule_path()))
    matched = sum(
        1 for event, _ in pair_events() if evaluate(rules[0], event.command_line).matched
    )
    elapsed = time.monotonic() - start
    report(
        "01 rule grammar: hard TP/FP pairs all match",
        matched == 12 and elapsed < 1.0,
        f"{matched}/12 matched in {elapsed:.3f}s",
    )


def test_02_matcher_oracle_equivalence():
    from cmdsift.rules import compile_rule, parse_rule

    rng = random.Random(20240401)
    agree = 0
    for _ in range(1000):
        source, oracle = random_rule_and_oracle(rng)
        rule = compile_rule(parse_rule(source))
        text = random_text(rng)
        if evaluate(rule, text).matched == oracle(text):
            agree += 1
    report("02 matcher oracle equivalence", agree == 1000, f"{agree}/1000 agree")


def test_03_vectorizer_determinism_and_collapse(big_synthetic, tmp_path):
    config = VectorizerConfig()  # library defaults
    collapse = vectorize(config, "nc 10.1.1.1 80") == vectorize(config, "nc 192.168.0.9 443")

    corpus_path = tmp_path / "corpus.txt"
    commands = [s.command_line for s in big_synthetic[:10_000]]
    corpus_path.write_text(
        "\n".join(c.replace("\n", " ") for c in commands), encoding="utf-8"
    )
    script = (
        "import sys, hashlib\n"
        "from cmdsift.vectorize import VectorizerConfig, vectorize\n"
        "config = VectorizerConfig()\n"
        "h = hashlib.sha256()\n"
        "for line in open(sys.argv[1], encoding='utf-8'):\n"
        "    fv = vectorize(config, line.rstrip('\\n'))\n"
        "    for i, v in fv.nonzero():\n"
        "        h.update(f'{i}:{v!r};'.encode())\n"
        "    h.update(b'|')\n"
        "print(h.hexdigest())\n"
    )
    digests = []
    for _ in range(2):
        out = subprocess.run(
            [sys.executable, "-c", script, str(corpus_path)],
            capture_output=True, text=True, check=True,
        )
        digests.append(out.stdout.strip())
    report(
        "03 vectorizer determinism + placeholder collapse",
        collapse and digests[0] == digests[1],
        f"collapse={collapse}, digests equal={digests[0] == digests[1]}",
    )


def test_04_gradient_check():
    from test_classifier import random_problem

    rng = np.random.default_rng(2024)
    worst = 0.0
    for trial in range(10):
        model, X, y, w = random_problem(rng, n=12, d=25, hidden=4 if trial % 2 else 0)
        l2 = 1e-3 if trial % 3 == 0 else 0.0
        _, grads = clf.loss_and_grad(model, X, y, w, l2)
        shapes, flat = model.flatten()
        grad_flat = np.concatenate([np.concatenate([gw.ravel(), gb.ravel()]) for gw, gb in grads])
        numeric = np.zeros_like(flat)
        eps = 1e-6
        for i in range(flat.size):
            up, down = flat.copy(), flat.copy()
            up[i] += eps
            down[i] -= eps
            fu = clf.loss_and_grad(clf.model_from_flat(shapes, up, model.config), X, y, w, l2)[0]
            fd = clf.loss_and_grad(clf.model_from_flat(shapes, down, model.config), X, y, w, l2)[0]
            numeric[i] = (fu - fd) / (2 * eps)
        rel = np.abs(grad_flat - numeric) / np.maximum(np.abs(numeric), 1e-8)
        worst = max(worst, float(rel.max()))
    report("04 gradient vs central differences", worst < 1e-4, f"max rel err {worst:.2e}")


def test_05_toy_separability():
    from cmdsift.calibrate import f1_at
    from cmdsift.vectorize import to_csr

    start = time.monotonic()
    vec = VectorizerConfig(dimensions=2**10)
    config = ClassifierConfig(
        hidden_units=0, dropout_rate=0.0, learning_rate=2.0, epochs=10, batch_size=4, rng_seed=7
    )
    data = []
    for _ in range(8):
        data.append((vectorize(vec, "aaa"), 1.0, 1.0))
        data.append((vectorize(vec, "bbb"), 0.0, 1.0))
    model = clf.train(config, data)
    X = to_csr([fv for fv, _, _ in data])
    labeled = [(float(s), lbl > 0.5) for s, (_, lbl, _) in zip(clf.score_matrix(model, X), data)]
    best = max(f1_at(labeled, t) for t, _ in labeled)
    elapsed = time.monotonic() - start
    report(
        "05 toy separability within 10 epochs",
        best == 1.0 and elapsed < 5.0,
        f"F1 {best} in {elapsed:.2f}s",
    )


def test_06_calibrator_oracle():
    rng = random.Random(20240601)
    exact = 0
    budget_ok = True
    for _ in range(200):
        inp = random_instance(rng)
        got = calibrate(inp)
        want = brute_force(inp)
        exact += got == want
        if not got.budget_unmet and got.projected_daily_tickets > inp.budget_n:
            budget_ok = False
    report("06 calibrator oracle equivalence", exact == 200 and budget_ok, f"{exact}/200 exact")


def test_07_weighting_invariants(rs_synthetic):
    policy = DecayPolicy(horizon_days=180.0, ratio=1.0)
    decay_exact = decay_weight(policy, 1.0, 180.0) == 0.0
    now = 1_750_000_000_000

    balanced = True
    rng = random.Random(6)
    for trial in range(30):
        n_fb = rng.randint(0, 25)
        feedback = [
            LabeledSample(
                f"fb {trial} {i}",
                Label.POSITIVE if rng.random() < 0.5 else Label.NEGATIVE,
                Origin.FEEDBACK,
                now - int(rng.uniform(0, 179) * DAY),
                source_ticket=f"t{i}",
            )
            for i in range(n_fb)
        ]
        assembly = assemble(rs_synthetic, feedback, policy, now)
        if abs(assembly.positive_mass - assembly.negative_mass) > 1e-9:
            balanced = False

    fresh = [
        LabeledSample(f"fresh {i}", Label.POSITIVE if i % 2 else Label.NEGATIVE,
                      Origin.FEEDBACK, now, source_ticket=f"t{i}")
        for i in range(10)
    ]
    assembly = assemble(rs_synthetic, fresh, policy, now)
    ratio_realized = abs(assembly.feedback_mass - len(rs_synthetic)) < 1e-9
    report(
        "07 weighting invariants (balance, decay-to-zero, 1:1 ratio)",
        decay_exact and balanced and ratio_realized,
        f"fb mass {assembly.feedback_mass} vs syn {len(rs_synthetic)}",
    )


def test_08_synthgen_determinism_and_qa_gate(rs_plan, rs_taxonomies, tmp_path):
    blobs = []
    for run in range(2):
        samples, _, _ = generate_dataset(
            rs_plan, rs_taxonomies, {Label.POSITIVE: 25, Label.NEGATIVE: 25},
            MockBackend(seed=13), seed=14, now_ms=1_748_200_000_000,
        )
        p = tmp_path / f"r{run}.tsv"
        core.write_samples(str(p), samples)
        blobs.append(p.read_bytes())
    byte_stable = blobs[0] == blobs[1]

    inner = MockBackend(seed=13)

    class YesToEverything:
        def complete(self, prompt):
            return inner.complete(prompt)

        def judge(self, question):
            return True, "yes to both forms"

    from cmdsift.synthgen import GenerationError

    accepted = None
    try:
        samples, _, _ = generate_dataset(
            rs_plan, rs_taxonomies, {Label.POSITIVE: 5, Label.NEGATIVE: 5},
            YesToEverything(), seed=15, now_ms=0,
        )
        accepted = len(samples)
    except GenerationError:
        accepted = 0  # acceptance floor tripped with zero accepted
    report(
        "08 synthgen determinism + dual-critic gate",
        byte_stable and accepted == 0,
        f"byte_stable={byte_stable}, adversarial accepted={accepted}",
    )


def test_09_end_to_end_funnel(rs_scenario, rs_rules, rs_synthetic, desk_vec, desk_clf, tmp_path):
    start = time.monotonic()
    spec = StreamSpec(days=30, events_per_day=3334, malicious_rate=0.001)  # 100,020 events
    stream = make_stream(spec, seed=97)
    store = ScenarioStore(str(tmp_path), rs_scenario.scenario_id)
    engine = ScenarioEngine(
        rs_scenario, store, rs_rules, desk_vec, desk_clf, rs_synthetic,
        ServiceConfig(retrain_daily=True),
    )
    engine.bootstrap(stream[0][0].timestamp_ms - 1)
    stats = replay_events(engine, (e for e, _ in stream))
    elapsed = time.monotonic() - start

    reportobj = evalharness.funnel_report(store.counters, spec.days, rs_scenario.scenario_id)
    stages = [
        reportobj.raw_per_day,
        reportobj.filter_per_day,
        reportobj.inference_per_day,
        reportobj.tickets_per_day,
    ]
    decreasing = all(a > b for a, b in zip(stages, stages[1:]))
    within_budget = reportobj.tickets_per_day <= rs_scenario.budget_n * 1.2
    print(reportobj.format_table())
    report(
        "09 end-to-end funnel shape + ticket budget",
        decreasing and within_budget and stats["events"] == 100_020 and elapsed < 120,
        f"stages/day {[round(s, 2) for s in stages]}, {elapsed:.0f}s",
    )


def test_10_ab_drift_experiment(rs_scenario, rs_rules, rs_synthetic, desk_vec, desk_clf):
    start = time.monotonic()
    seeds = [1, 2, 3, 4, 5]
    wins = 0
    recoveries = []
    for seed in seeds:
        stream = make_stream(StreamSpec(days=30, events_per_day=150, drift_day=10), seed)
        out = ab_experiment(
            rs_synthetic, stream, rs_rules, rs_scenario, desk_vec, desk_clf, bootstrap_days=10
        )
        wins += out.active_f1_post >= out.fixed_f1_post
        series = [p for _, p in out.active_precision_series]
        if len(series) >= 6:
            third = max(1, len(series) // 3)
            recoveries.append(
                sum(series[-third:]) / third - sum(series[:third]) / third
            )
        print(
            f"  seed {seed}: fixed F1 {out.fixed_f1_post:.3f} "
            f"active F1 {out.active_f1_post:.3f}"
        )

    identical = True
    for seed in seeds:
        stream = make_stream(StreamSpec(days=12, events_per_day=150, drift_day=None), seed)
        out = ab_experiment(
            rs_synthetic, stream, rs_rules, rs_scenario, desk_vec, desk_clf, bootstrap_days=4
        )
        r = out.result
        if (r.tp_only_active, r.tp_only_fixed, r.fp_only_active, r.fp_only_fixed) != (0, 0, 0, 0):
            identical = False
    elapsed = time.monotonic() - start
    report(
        "10 A/B drift: active wins >= 4/5 seeds, drift-free arms identical",
        wins >= 4 and identical and elapsed < 600,
        f"wins {wins}/5, identical={identical}, {elapsed:.0f}s",
    )


def test_11_crash_safety(rs_scenario, rs_rules, rs_synthetic, desk_vec, desk_clf, tmp_path):
    events_path = tmp_path / "events.tsv"
    stream = make_stream(StreamSpec(days=2, events_per_day=2500, malicious_rate=0.01), 53)
    core.write_events(str(events_path), [e for e, _ in stream])

    def prepare(state_dir: Path) -> ScenarioEngine:
        store = ScenarioStore(str(state_dir), "reverse_shell")
        engine = ScenarioEngine(
            rs_scenario, store, rs_rules, desk_vec, desk_clf, rs_synthetic,
            ServiceConfig(retrain_daily=False),
        )
        engine.bootstrap(stream[0][0].timestamp_ms - 1)
        return engine

    # Baseline: identical replay with no kills fixes the expected ticket set.
    baseline = prepare(tmp_path / "baseline")
    replay_events(baseline, core.EventReader(str(events_path)))
    expected_tickets = set(baseline.store.tickets)

    state = tmp_path / "crash"
    prepare(state)
    harness = str(Path(__file__).parent / "crash_harness.py")
    args = [sys.executable, harness, str(state), str(events_path),
            str(reverse_shell_rule_path())]
    acked: set[str] = set()
    rng = random.Random(99)
    kills = 0
    for _ in range(20):
        proc = subprocess.Popen(args, stdout=subprocess.PIPE, text=True)
        time.sleep(rng.uniform(0.3, 1.4))
        proc.send_signal(signal.SIGKILL)
        out, _ = proc.communicate()
        kills += 1
        for line in out.splitlines():
            if line.startswith("V "):
                acked.add(line.split()[1])
    # Final uninterrupted pass.
    out = subprocess.run(args, capture_output=True, text=True, check=True).stdout
    for line in out.splitlines():
        if line.startswith("V "):
            acked.add(line.split()[1])
    assert "DONE" in out

    final = ScenarioStore(str(state), "reverse_shell")
    lost = acked - set(final.verdicts)
    dup_free = len(set(final.tickets)) == len(final.tickets)
    same_tickets = set(final.tickets) == expected_tickets
    feedback_tickets = [s.source_ticket for s in final.feedback_samples()]
    feedback_matches = sorted(feedback_tickets) == sorted(final.verdicts)
    report(
        "11 crash safety: no verdict lost, no ticket duplicated",
        not lost and dup_free and same_tickets and feedback_matches and kills == 20,
        f"{kills} kills, {len(acked)} acked verdicts, lost={len(lost)}, "
        f"tickets {len(final.tickets)}/{len(expected_tickets)}",
    )


def test_12_dataset_size_study(big_synthetic, heldout_eval, desk_vec, desk_clf):
    sizes = [100, 1000, len(big_synthetic)]
    good_seeds = 0
    rows_by_seed = {}
    for seed in [1, 2, 3, 4, 5]:
        rows = dataset_size_study(big_synthetic, sizes, heldout_eval, desk_vec, desk_clf, seed=seed)
        f1s = [f1 for _, f1 in rows]
        rows_by_seed[seed] = f1s
        if all(a <= b + 1e-12 for a, b in zip(f1s, f1s[1:])):
            good_seeds += 1
        print(f"  seed {seed}: " + ", ".join(f"{n}->{f1:.4f}" for (n, f1) in rows))
    full_f1 = np.median([rows_by_seed[s][-1] for s in rows_by_seed])
    print(f"  max-F1 at full size (median) {full_f1:.4f}; reference aspiration 0.95")
    report(
        "12 dataset-size study non-decreasing in >= 4/5 seeds",
        good_seeds >= 4,
        f"{good_seeds}/5 non-decreasing",
    )


def test_13_trigram_collision_bound(big_synthetic):
    # Reported invariant: distinct trigram collision fraction at 2^18 < 5%.
    config = VectorizerConfig()
    mask = config.dimensions - 1
    from cmdsift.vectorize import _hash_ngram

    trigrams = set()
    for s in big_synthetic:
        tokens = substitute_placeholders(tokenize(s.command_line))
        trigrams.update(ngrams(tokens, 3, 3))
    buckets: dict[int, int] = {}
    for gram in trigrams:
        buckets[_hash_ngram(gram, config.hash_seed) & mask] = (
            buckets.get(_hash_ngram(gram, config.hash_seed) & mask, 0) + 1
        )
    colliding = sum(c for c in buckets.values() if c > 1)
    fraction = colliding / max(1, len(trigrams))
    print(f"  {len(trigrams)} distinct trigrams, colliding fraction {fraction:.4f}")
    report("13 trigram collision bound at default width", fraction < 0.05, f"{fraction:.4f}")
