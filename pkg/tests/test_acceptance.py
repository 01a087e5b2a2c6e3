"""Acceptance gate: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`. Criteria 5 and 6 train
real models and dominate the runtime (several minutes each).
"""

import time

import numpy as np
import pytest

from attrseq.cli import main as cli_main
from attrseq.data import (
    AttributedSequence,
    DatasetMeta,
    encode,
    encode_labeled,
    encode_triplets,
    generate_synthetic,
    sample_triplets,
    split_by_class,
)
from attrseq.data import decode
from attrseq.encoder import ModelConfig, init_params, omega_forward
from attrseq.episodes import evaluate
from attrseq.gradients import (
    backward_pair,
    contrastive_loss,
    distance,
    dloss_ddistance,
    gradcheck_suite,
)
from attrseq.kernel import Rng
from attrseq.training import TrainConfig, train


def _ok(n, text):
    print(f"\nPASS criterion {n}: {text}")


# --------------------------------------------------------------------------
# criterion 1: analytic gradients match central finite differences
# --------------------------------------------------------------------------

def test_criterion_1_gradient_oracle_equivalence():
    started = time.perf_counter()
    suite = gradcheck_suite(trials=20, seed=0, step=1e-5, tolerance=1e-4)
    elapsed = time.perf_counter() - started
    kinds = {t["kind"] for t in suite["trials"]}
    ells = {t["ell"] for t in suite["trials"]}
    assert kinds == {"euclidean", "manhattan"}
    assert ells == {0, 1}
    assert suite["max_rel_err"] < 1e-4, suite["worst"]
    assert elapsed < 30.0
    _ok(1, f"20 trials, max_rel_err={suite['max_rel_err']:.3e} < 1e-4 ({elapsed:.1f}s)")


# --------------------------------------------------------------------------
# criterion 2: encoding and padding invariants, 1000 randomized cases
# --------------------------------------------------------------------------

def test_criterion_2_encoding_padding_invariants():
    started = time.perf_counter()
    gen = np.random.default_rng(202)
    cfg = ModelConfig(m=2, n_m=4, n_l=4, n=4)
    meta_ref = DatasetMeta(u=3, r=6, t_max=8, class_ids=frozenset())
    params = init_params(cfg, meta_ref, Rng(7))
    violations = 0
    for case in range(1000):
        t_max = int(gen.integers(2, 9))
        meta = DatasetMeta(u=3, r=6, t_max=t_max, class_ids=frozenset())
        items = [int(gen.integers(6)) for _ in range(int(gen.integers(1, t_max + 1)))]
        rec = AttributedSequence(gen.uniform(-1, 1, 3), items, None)
        inst = encode(rec, meta)
        # one-hot validity of every data row, all-zero padding rows
        rows = inst.seq[: inst.true_len]
        if not (np.all(rows.sum(axis=1) == 1.0) and np.all((rows == 0) | (rows == 1))):
            violations += 1
        if inst.seq[inst.true_len:].any():
            violations += 1
        if decode(inst) != items:
            violations += 1
        # embedding is invariant to extra padding rows
        wider = DatasetMeta(u=3, r=6, t_max=t_max + int(gen.integers(1, 5)),
                            class_ids=frozenset())
        emb_a, _ = omega_forward(params, cfg, inst)
        emb_b, _ = omega_forward(params, cfg, encode(rec, wider))
        if not np.array_equal(emb_a, emb_b):
            violations += 1
    elapsed = time.perf_counter() - started
    assert violations == 0
    assert elapsed < 5.0
    _ok(2, f"1000 randomized cases, zero violations ({elapsed:.1f}s)")


# --------------------------------------------------------------------------
# criterion 3: loss algebra unit values and clipped-hinge gradients
# --------------------------------------------------------------------------

def test_criterion_3_loss_algebra():
    assert abs(contrastive_loss(0.0, 0, 1.0) - 0.0) < 1e-12
    assert abs(contrastive_loss(1.0, 1, 1.0) - 0.0) < 1e-12
    assert abs(contrastive_loss(0.0, 1, 1.0) - 0.5) < 1e-12
    assert abs(dloss_ddistance(0.4, 1, 1.0) - (-0.6)) < 1e-12
    assert abs(dloss_ddistance(0.4, 0, 1.0) - 0.4) < 1e-12
    assert abs(dloss_ddistance(1.7, 1, 1.0) - 0.0) < 1e-12

    # clipped hinge produces exactly-zero gradients
    meta = DatasetMeta(u=3, r=4, t_max=4, class_ids=frozenset())
    cfg = ModelConfig(m=2, n_m=4, n_l=4, n=4)
    params = init_params(cfg, meta, Rng(3))
    gen = np.random.default_rng(4)
    for t in params.tensors().values():
        t[...] = gen.uniform(-0.7, 0.7, t.shape)
    mk = lambda seed: encode(
        AttributedSequence(
            np.random.default_rng(seed).uniform(-1, 1, 3),
            [int(x) for x in np.random.default_rng(seed).integers(0, 4, 3)],
            None,
        ),
        meta,
    )
    inst_i, inst_j = mk(1), mk(2)
    _, trace_i = omega_forward(params, cfg, inst_i)
    _, trace_j = omega_forward(params, cfg, inst_j)
    d = distance("euclidean", trace_i.embedding, trace_j.embedding)
    assert d > 0
    loss, grads = backward_pair(params, cfg, trace_i, trace_j, 1, d * 0.9, "euclidean")
    assert loss == 0.0
    assert all(not g.any() for g in grads.values())
    _ok(3, "unit values exact to 1e-12, clipped hinge yields exactly-zero gradients")


# --------------------------------------------------------------------------
# criterion 4: untrained model sits at the 1/G chance floor
# --------------------------------------------------------------------------

def test_criterion_4_chance_floor():
    """Mean accuracy of an untrained model is 1/G on label-free data.

    The floor only exists when labels carry no information: a random-init
    encoder preserves attribute proximity, so class-structured data scores
    far above chance even untrained (verified: separable synthetic data
    gives median 1.0). Labels are therefore shuffled away from content,
    which makes nearest-support exactly exchangeable. The +-0.05 band was
    pinned by a 50-seed Monte Carlo at this exact scale (observed means
    0.239..0.258, sd about 0.004).
    """
    started = time.perf_counter()
    records = generate_synthetic(classes=4, per_class=510, u=10, r=12, t_max=15,
                                 attr_noise=0.05, seq_noise=0.05, seed=0)
    labels = [rec.label for rec in records]
    Rng(42).gen.shuffle(labels)
    for rec, lab in zip(records, labels):
        rec.label = lab
    meta = DatasetMeta(u=10, r=12, t_max=15, class_ids=frozenset(range(4)))
    pool = encode_labeled(records, meta)
    cfg = ModelConfig()
    params = init_params(cfg, meta, Rng(5000))
    report = evaluate(params, cfg, "euclidean", pool, g=4, n_queries=2000,
                      n_runs=10, seed=0)
    mean_acc = float(np.mean(report.per_run))
    elapsed = time.perf_counter() - started
    assert abs(mean_acc - 0.25) <= 0.05
    assert abs(report.median - 0.25) <= 0.05
    assert elapsed < 60.0
    _ok(4, f"untrained mean accuracy {mean_acc:.4f} within 0.25 +- 0.05 ({elapsed:.1f}s)")


# --------------------------------------------------------------------------
# criteria 5 and 6: learnability sweep at both distances
# --------------------------------------------------------------------------

SWEEP_COUNTS = (200, 400, 800, 1600)


@pytest.fixture(scope="module")
def learnability_setup():
    records = generate_synthetic(classes=10, per_class=120, u=10, r=12, t_max=15,
                                 attr_noise=0.05, seq_noise=0.05, seed=101)
    meta = DatasetMeta(u=10, r=12, t_max=15, class_ids=frozenset(range(10)))
    rng = Rng(7)
    train_records, oneshot_records = split_by_class(records, 0.6, rng.child("split"))
    assert len({r.label for r in train_records}) == 6
    assert len({r.label for r in oneshot_records}) == 4
    pool = encode_labeled(oneshot_records, meta)
    return meta, rng, train_records, pool


def _run_sweep(kind, setup):
    meta, rng, train_records, pool = setup
    cfg = ModelConfig()
    reports = []
    for count in SWEEP_COUNTS:
        triplets = encode_triplets(
            sample_triplets(train_records, count, rng.child(f"{kind}_trip{count}")), meta
        )
        params = init_params(cfg, meta, rng.child(f"{kind}_init{count}"))
        tcfg = TrainConfig(distance=kind, max_epochs=40,
                           seed=rng.child(f"{kind}_train{count}").seed)
        trained, _ = train(params, cfg, triplets, tcfg)
        reports.append(evaluate(trained, cfg, kind, pool, g=4, n_queries=400,
                                n_runs=10, seed=rng.child(f"{kind}_eval{count}").seed))
    return reports


def _assert_monotone_within_iqr(reports):
    """Consecutive medians may dip at most one interquartile range.

    Accuracy lives on a 1/n_queries grid, so the allowance never falls
    below one query of resolution.
    """
    for prev, nxt in zip(reports, reports[1:]):
        allowance = max(prev.p75 - prev.p25, 1.0 / prev.n_queries)
        assert nxt.median >= prev.median - allowance, (
            f"median fell from {prev.median} to {nxt.median} "
            f"(allowance {allowance})"
        )


def test_criterion_5_learnability_euclidean(learnability_setup):
    started = time.perf_counter()
    reports = _run_sweep("euclidean", learnability_setup)
    elapsed = time.perf_counter() - started
    finals = {c: r.median for c, r in zip(SWEEP_COUNTS, reports)}
    assert reports[-1].median >= 0.90, finals
    _assert_monotone_within_iqr(reports)
    assert elapsed < 600.0
    _ok(5, f"euclidean sweep medians {finals}, final >= 0.90 ({elapsed:.0f}s)")


def test_criterion_6_distance_parity_manhattan(learnability_setup):
    started = time.perf_counter()
    reports = _run_sweep("manhattan", learnability_setup)
    elapsed = time.perf_counter() - started
    finals = {c: r.median for c, r in zip(SWEEP_COUNTS, reports)}
    assert reports[-1].median >= 0.85, finals
    _assert_monotone_within_iqr(reports)
    _ok(6, f"manhattan sweep medians {finals}, final >= 0.85 ({elapsed:.0f}s)")


# --------------------------------------------------------------------------
# criterion 7: byte-identical end-to-end reruns
# --------------------------------------------------------------------------

def test_criterion_7_determinism(tmp_path):
    def pipeline(root):
        root.mkdir()
        data = root / "data.jsonl"
        args = [
            "gen", "--classes", "6", "--per-class", "12", "--u", "4", "--r", "5",
            "--t-max", "6", "--seed", "17", "--out", str(data),
        ]
        assert cli_main(args) == 0
        assert cli_main([
            "train", "--data", str(data), "--triplets", "40", "--seed", "23",
            "--fc-depth", "2", "--fc-width", "6", "--lstm-width", "6",
            "--embed-dim", "6", "--epochs", "4",
            "--checkpoint", str(root / "ckpt.json"),
            "--metrics", str(root / "metrics.csv"),
            "--manifest", str(root / "manifest.json"),
        ]) == 0
        assert cli_main([
            "eval", "--checkpoint", str(root / "ckpt.json"), "--data", str(data),
            "--manifest", str(root / "manifest.json"), "--g", "2", "--queries", "15",
            "--runs", "4", "--seed", "29",
            "--out-json", str(root / "eval.json"), "--out-csv", str(root / "eval.csv"),
        ]) == 0
        return ["data.jsonl", "data.meta.json", "ckpt.json", "metrics.csv",
                "manifest.json", "eval.json", "eval.csv"]

    files = pipeline(tmp_path / "run1")
    pipeline(tmp_path / "run2")
    for name in files:
        a = (tmp_path / "run1" / name).read_bytes()
        b = (tmp_path / "run2" / name).read_bytes()
        assert a == b, f"{name} differs between identical runs"
    _ok(7, f"gen/train/eval reruns byte-identical across {len(files)} artifacts")


# --------------------------------------------------------------------------
# criterion 8: split manifests reproduce the tabled class counts
# --------------------------------------------------------------------------

def test_criterion_8_protocol_fidelity(tmp_path):
    import json

    layouts = ((10, 6, 4), (60, 36, 24))
    for n_classes, want_train, want_oneshot in layouts:
        root = tmp_path / f"c{n_classes}"
        root.mkdir()
        data = root / "data.jsonl"
        assert cli_main([
            "gen", "--classes", str(n_classes), "--per-class", "4", "--u", "3",
            "--r", "4", "--t-max", "5", "--seed", "31", "--out", str(data),
        ]) == 0
        assert cli_main([
            "train", "--data", str(data), "--triplets", "12", "--seed", "37",
            "--fc-depth", "1", "--fc-width", "4", "--lstm-width", "4",
            "--embed-dim", "4", "--epochs", "1",
            "--checkpoint", str(root / "ckpt.json"),
            "--metrics", str(root / "metrics.csv"),
            "--manifest", str(root / "manifest.json"),
        ]) == 0
        manifest = json.loads((root / "manifest.json").read_text())
        assert len(manifest["train_classes"]) == want_train
        assert len(manifest["oneshot_classes"]) == want_oneshot
        assert set(manifest["train_classes"]).isdisjoint(manifest["oneshot_classes"])
    _ok(8, f"split manifests match tabled layouts {layouts}")
