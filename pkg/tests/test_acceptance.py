"""Acceptance gate: one test per release criterion, run on the pinned `standard`
benchmark (seed 7). Each check prints a PASS/FAIL line (visible with -s).

Frozen numeric constants are regression pins recorded from the first verified
run on this seed and RNG (numpy PCG64); the inequality bounds are the actual
criteria.

Known red: test_threshold_ablation_accuracy (see the assertion message and the
repository notes) — the accuracy half of the threshold-ablation comparison is
not attainable in this simulator family and is asserted faithfully anyway.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from protorefine import bind_dataset, cli, data
from protorefine.data import AnchorSet, EmbeddingMatrix, LabelSet
from protorefine.head import LinearHead, TrainConfig, loss_and_gradients, train_head
from protorefine.noise import inject_asymmetric, inject_pmd, inject_uniform
from protorefine.relabel import RelabelConfig, build_prototypes, relabel, sweep
from protorefine.simulate import SimSpec, generate_benchmark

SEED = 7

CALIBRATION_SPEC = SimSpec(
    num_classes=10,
    dim=8,
    samples_per_class=5000,
    anchors_per_class=1,
    class_separation=12.0,
    intra_std=1.0,
    anchor_shift=0.0,
    seed=101,
)


def check(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}", flush=True)
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def standard_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance") / "standard"
    t0 = time.monotonic()
    rc = cli.main(["pipeline", "--preset", "standard", "--seed", str(SEED), "--out", str(out)])
    runtime = time.monotonic() - t0
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    sweep_cells = json.loads((out / "sweep.json").read_text())["cells"]
    return {"out": out, "summary": summary, "sweep": sweep_cells, "runtime": runtime}


class TestRefinementImprovesLabels:
    def test_label_accuracy_gain(self, standard_run):
        lm = standard_run["summary"]["label_metrics"]
        delta = lm["label_accuracy_after"] - lm["label_accuracy_before"]
        check(
            "label-accuracy gain >= 0.20",
            delta >= 0.20,
            f"before {lm['label_accuracy_before']:.4f} after {lm['label_accuracy_after']:.4f} "
            f"delta {delta:+.4f}",
        )
        # frozen regression values (seed 7, PCG64)
        assert (lm["changed"], lm["corrected"], lm["corrupted"]) == (1962, 1904, 58)
        assert lm["label_accuracy_before"] == pytest.approx(0.3146, abs=1e-12)
        assert lm["label_accuracy_after"] == pytest.approx(0.6838, abs=1e-12)

    def test_downstream_gain(self, standard_run):
        ds = standard_run["summary"]["downstream"]
        delta = ds["refined_finetuned"] - ds["noisy"]
        check(
            "downstream gain >= 5 points (warm fine-tune)",
            delta >= 0.05,
            f"noisy {ds['noisy']:.4f} refined {ds['refined_finetuned']:.4f} delta {delta:+.4f}",
        )
        assert ds["refined_fresh"] - ds["noisy"] >= 0.05  # fresh retrain agrees
        assert ds["noisy"] == pytest.approx(0.7510, abs=1e-12)
        assert ds["refined_finetuned"] == pytest.approx(0.8225, abs=1e-12)
        assert ds["refined_fresh"] == pytest.approx(0.8610, abs=1e-12)

    def test_runtime_single_threaded(self, standard_run):
        check(
            "pipeline runtime < 60 s single-threaded",
            standard_run["runtime"] < 60.0,
            f"{standard_run['runtime']:.2f} s",
        )


class TestThresholdAblation:
    @staticmethod
    def cells(standard_run):
        by_key = {(c["alpha"], c["theta"]): c for c in standard_run["sweep"]}
        return by_key[(0.5, 0.6)], by_key[(1.0, 0.0)]

    def test_corrupts_fewer_clean_labels(self, standard_run):
        ours, relabel_all = self.cells(standard_run)
        check(
            "(a=0.5, t=0.6) corrupts fewer clean labels than (a=1, t=0)",
            ours["corrupted"] < relabel_all["corrupted"],
            f"{ours['corrupted']} vs {relabel_all['corrupted']}",
        )
        assert (ours["corrupted"], relabel_all["corrupted"]) == (58, 87)  # frozen

    def test_threshold_ablation_accuracy(self, standard_run):
        # Expected-red check, asserted faithfully: with informative anchors,
        # relabel-everything-by-similarity is near the mixture's optimum, while
        # the thresholded blend keeps ~40% of labels untouched at their 31%
        # noisy accuracy. No geometry in this simulator family makes this
        # inequality hold together with the label/downstream gains above.
        ours, relabel_all = self.cells(standard_run)
        check(
            "(a=0.5, t=0.6) accuracy strictly above (a=1, t=0)",
            ours["accuracy_after"] > relabel_all["accuracy_after"],
            f"{ours['accuracy_after']:.4f} vs {relabel_all['accuracy_after']:.4f}",
        )


class TestBlendAblation:
    def test_blend_at_least_both_endpoints(self):
        spec = SimSpec(
            num_classes=10,
            dim=8,
            samples_per_class=500,
            anchors_per_class=100,
            class_separation=9.0,
            intra_std=1.0,
            anchor_shift=3.0,  # strong anchor domain gap
            seed=SEED,
        )
        bench = generate_benchmark(spec)
        truth = bench.dataset.labels
        noisy = inject_pmd(truth, bench.posteriors, 0.35, seed=SEED + 1)
        ds = bench.dataset.with_labels(noisy.labels, "noisy")
        head = train_head(ds, TrainConfig(seed=SEED + 2))
        table = sweep(ds, build_prototypes(bench.anchors), head, [0.0, 0.5, 1.0], [0.6], truth=truth)
        acc = {c.alpha: c.accuracy_after for c in table.cells}
        check(
            "blended cell >= max(similarity-only, confidence-only) - 0.01",
            acc[0.5] >= max(acc[0.0], acc[1.0]) - 0.01,
            f"a=0: {acc[0.0]:.4f}, a=0.5: {acc[0.5]:.4f}, a=1: {acc[1.0]:.4f}",
        )
        assert acc[0.5] == pytest.approx(0.9124, abs=1e-12)  # frozen
        assert acc[0.0] == pytest.approx(0.8740, abs=1e-12)
        assert acc[1.0] == pytest.approx(0.8682, abs=1e-12)


# ---------------------------------------------------------------------------
# brute-force reference implementation (pure Python, naive arithmetic)
# ---------------------------------------------------------------------------


def reference_refine(rows, noisy, anchor_vectors, anchor_classes, w, b, alpha, theta):
    num_classes = len(w)
    dim = len(w[0])
    protos = []
    for c in range(num_classes):
        members = [v for v, k in zip(anchor_vectors, anchor_classes) if k == c]
        protos.append([sum(v[j] for v in members) / len(members) for j in range(dim)])
    out = []
    for x, orig in zip(rows, noisy):
        nx = math.sqrt(sum(t * t for t in x))
        sims = []
        for p in protos:
            pn = math.sqrt(sum(t * t for t in p))
            s = sum(xi * pi for xi, pi in zip(x, p)) / (nx * pn)
            sims.append(max(-1.0, min(1.0, s)))
        logits = [sum(wi * xi for wi, xi in zip(w[c], x)) + b[c] for c in range(num_classes)]
        top = max(logits)
        exps = [math.exp(z - top) for z in logits]
        total = sum(exps)
        conf = [e / total for e in exps]
        scores = [alpha * s + (1.0 - alpha) * q for s, q in zip(sims, conf)]
        best_score, best_class = scores[0], 0
        for c in range(1, num_classes):
            if scores[c] > best_score:
                best_score, best_class = scores[c], c
        out.append(best_class if best_score >= theta else orig)
    return out


class TestEngineMatchesBruteForce:
    def test_thousand_random_small_instances(self):
        rng = np.random.Generator(np.random.PCG64(2024))
        alphas = [0.0, 0.25, 0.5, 0.75, 1.0]
        thetas = [0.0, 0.3, 0.55, 0.6, 0.8, 1.2]
        mismatches = 0
        for _ in range(1000):
            c = int(rng.integers(2, 6))
            d = int(rng.integers(1, 9))
            m = int(rng.integers(1, 51))
            per = int(rng.integers(1, 7))
            x = rng.standard_normal((m, d)).astype(np.float32)
            av = rng.standard_normal((c * per, d)).astype(np.float32)
            ac = np.repeat(np.arange(c), per)
            noisy = rng.integers(0, c, m)
            w = rng.standard_normal((c, d))
            bias = rng.standard_normal(c)
            alpha = alphas[int(rng.integers(len(alphas)))]
            theta = thetas[int(rng.integers(len(thetas)))]

            ds = bind_dataset(EmbeddingMatrix(x, np.arange(m)), LabelSet(noisy, c))
            protos = build_prototypes(AnchorSet(av, ac, c))
            head = LinearHead(w, bias)
            refined, _ = relabel(ds, protos, head, RelabelConfig(alpha, theta))

            expected = reference_refine(
                [[float(v) for v in row] for row in x],
                [int(v) for v in noisy],
                [[float(v) for v in row] for row in av],
                [int(v) for v in ac],
                [[float(v) for v in row] for row in w],
                [float(v) for v in bias],
                alpha,
                theta,
            )
            if list(refined.labels) != expected:
                mismatches += 1
        check(
            "engine matches brute-force reference on 1000 instances",
            mismatches == 0,
            f"{mismatches} mismatching instances",
        )


class TestGradientCheck:
    @staticmethod
    def finite_difference(weights, biases, x, labels, l2, h=1e-4):
        def loss_at(w, b):
            return loss_and_gradients(w, b, x, labels, l2)[0]

        gw = np.zeros_like(weights)
        for i in range(weights.shape[0]):
            for j in range(weights.shape[1]):
                up, down = weights.copy(), weights.copy()
                up[i, j] += h
                down[i, j] -= h
                gw[i, j] = (loss_at(up, biases) - loss_at(down, biases)) / (2 * h)
        gb = np.zeros_like(biases)
        for i in range(biases.shape[0]):
            up, down = biases.copy(), biases.copy()
            up[i] += h
            down[i] -= h
            gb[i] = (loss_at(weights, up) - loss_at(weights, down)) / (2 * h)
        return gw, gb

    def test_hundred_random_instances(self):
        rng = np.random.Generator(np.random.PCG64(99))
        worst = 0.0
        for _ in range(100):
            m = int(rng.integers(2, 13))
            d = int(rng.integers(1, 7))
            c = int(rng.integers(2, 6))
            x = rng.standard_normal((m, d))
            labels = rng.integers(0, c, m)
            w = rng.standard_normal((c, d))
            b = rng.standard_normal(c)
            l2 = float(rng.choice([0.0, 1e-4, 1e-2]))
            _, gw, gb = loss_and_gradients(w, b, x, labels, l2)
            fw, fb = self.finite_difference(w, b, x, labels, l2)
            scale_w = max(np.abs(gw).max(), np.abs(fw).max(), 1e-12)
            scale_b = max(np.abs(gb).max(), np.abs(fb).max(), 1e-12)
            worst = max(
                worst,
                float(np.abs(gw - fw).max() / scale_w),
                float(np.abs(gb - fb).max() / scale_b),
            )
        check(
            "analytic vs finite-difference gradients on 100 instances",
            worst <= 1e-4,
            f"worst relative error {worst:.2e}",
        )


class TestNoiseCalibration:
    def test_realized_rates_within_tolerance(self):
        truth = LabelSet(np.repeat(np.arange(10), 5000), 10, "truth")
        bench = generate_benchmark(CALIBRATION_SPEC)
        results = {}
        out = inject_uniform(truth, 0.3, seed=11)
        results["uniform(0.30)"] = (int(np.sum(out.labels != truth.labels)), 0.30, 15104)
        out = inject_asymmetric(truth, 0.6, None, seed=12)
        results["asymmetric(0.60)"] = (int(np.sum(out.labels != truth.labels)), 0.60, 29964)
        bt = bench.dataset.labels
        out = inject_pmd(bt, bench.posteriors, 0.35, seed=13)
        results["feature(0.35)"] = (int(np.sum(out.labels != bt.labels)), 0.35, 17189)
        out = inject_pmd(bt, bench.posteriors, 0.70, seed=14)
        results["feature(0.70)"] = (int(np.sum(out.labels != bt.labels)), 0.70, 34765)
        for name, (count, target, frozen) in results.items():
            realized = count / 50000
            check(
                f"noise calibration {name}",
                abs(realized - target) <= 0.02,
                f"realized {realized:.4f} (count {count})",
            )
            assert count == frozen  # frozen regression value


@pytest.fixture(scope="module")
def setup():
    rng = np.random.Generator(np.random.PCG64(31))
    m, d, c = 200, 6, 4
    emb = EmbeddingMatrix(rng.standard_normal((m, d)).astype(np.float32), np.arange(m))
    ds = bind_dataset(emb, LabelSet(rng.integers(0, c, m), c))
    anchors = AnchorSet(
        (rng.standard_normal((c * 8, d)) + 1.5).astype(np.float32),
        np.repeat(np.arange(c), 8),
        c,
    )
    head = LinearHead(rng.standard_normal((c, d)), rng.standard_normal(c))
    return ds, anchors, head


class TestInvariantSuite:

    def test_cosine_scale_invariance_of_decisions(self, setup):
        ds, anchors, head = setup
        cfg = RelabelConfig(alpha=1.0, threshold=0.5)
        r1, _ = relabel(ds, build_prototypes(anchors), head, cfg)
        scaled = AnchorSet(
            (anchors.vectors.astype(np.float64) * 37.5).astype(np.float32),
            anchors.classes,
            anchors.num_classes,
        )
        r2, _ = relabel(ds, build_prototypes(scaled), head, cfg)
        check(
            "decisions invariant to positive anchor rescale",
            bool(np.array_equal(r1.labels, r2.labels)),
            "identical refined labels",
        )

    def test_threshold_monotonicity(self, setup):
        ds, anchors, head = setup
        protos = build_prototypes(anchors)
        relabeled_sets = []
        for theta in (0.1, 0.4, 0.7):
            _, samples = relabel(ds, protos, head, RelabelConfig(0.5, theta))
            relabeled_sets.append({s.sample_id for s in samples if s.decision == "relabeled"})
        ok = relabeled_sets[2] <= relabeled_sets[1] <= relabeled_sets[0]
        check("relabeled set shrinks as threshold rises", ok, "nested sets")

    def test_threshold_above_one_is_identity(self, setup):
        ds, anchors, head = setup
        refined, _ = relabel(ds, build_prototypes(anchors), head, RelabelConfig(0.5, 1.01))
        check(
            "threshold above 1 changes nothing",
            bool(np.array_equal(refined.labels, ds.labels.labels)),
            "refined == noisy",
        )

    def test_alpha_endpoint_isolation(self, setup):
        ds, anchors, head = setup
        rng = np.random.Generator(np.random.PCG64(77))
        other_head = LinearHead(rng.standard_normal((4, 6)), rng.standard_normal(4))
        other_anchors = AnchorSet(
            (rng.standard_normal((4 * 3, 6)) - 1.0).astype(np.float32),
            np.repeat(np.arange(4), 3),
            4,
        )
        protos = build_prototypes(anchors)
        r1, _ = relabel(ds, protos, head, RelabelConfig(1.0, 0.5))
        r2, _ = relabel(ds, protos, other_head, RelabelConfig(1.0, 0.5))
        sim_only_isolated = np.array_equal(r1.labels, r2.labels)
        r3, _ = relabel(ds, protos, head, RelabelConfig(0.0, 0.5))
        r4, _ = relabel(ds, build_prototypes(other_anchors), head, RelabelConfig(0.0, 0.5))
        conf_only_isolated = np.array_equal(r3.labels, r4.labels)
        check(
            "alpha endpoints isolate their channel",
            bool(sim_only_isolated and conf_only_isolated),
            "head ignored at alpha=1; anchors ignored at alpha=0",
        )

    def test_tie_break_and_parallel_determinism(self, setup):
        ds, anchors, head = setup
        protos = build_prototypes(anchors)
        r1, s1 = relabel(ds, protos, head, RelabelConfig(), threads=1)
        r4, s4 = relabel(ds, protos, head, RelabelConfig(), threads=4)
        parallel_ok = np.array_equal(r1.labels, r4.labels) and all(
            a.best_score == b.best_score for a, b in zip(s1, s4)
        )
        # exact tie between duplicated prototype rows resolves to the lower class
        emb = EmbeddingMatrix(np.array([[2.0, 1.0]], dtype=np.float32), [0])
        tie_ds = bind_dataset(emb, LabelSet(np.array([2]), 3))
        from protorefine.relabel import Prototypes

        tie_protos = Prototypes(np.array([[1.0, 1.0], [1.0, 1.0], [1.0, -1.0]]), np.ones(3, int))
        tie_head = LinearHead(np.zeros((3, 2)), np.zeros(3))
        _, samples = relabel(tie_ds, tie_protos, tie_head, RelabelConfig(1.0, 0.0))
        check(
            "tie-break and parallel determinism",
            bool(parallel_ok and samples[0].best_class == 0),
            "threads=4 identical; tie resolves to class 0",
        )

    def test_file_formats_round_trip_bit_exact(self, setup, tmp_path):
        ds, anchors, head = setup
        data.write_embeddings(ds.embeddings, tmp_path / "e.emb1")
        e2 = data.read_embeddings(tmp_path / "e.emb1")
        data.write_embeddings(e2, tmp_path / "e2.emb1")
        emb_ok = (tmp_path / "e.emb1").read_bytes() == (tmp_path / "e2.emb1").read_bytes()

        from protorefine.head import confidences

        conf = confidences(head, ds.embeddings)
        cm = data.ConfidenceMatrix(conf.rows.astype(np.float32))
        data.write_confidences(cm, tmp_path / "c.cnf1")
        c2, _ = data.read_confidences(tmp_path / "c.cnf1")
        data.write_confidences(c2, tmp_path / "c2.cnf1")
        cnf_ok = (tmp_path / "c.cnf1").read_bytes() == (tmp_path / "c2.cnf1").read_bytes()

        data.write_labels(ds.labels, tmp_path / "l.csv")
        l2 = data.read_labels(tmp_path / "l.csv", 4)
        data.write_labels(l2, tmp_path / "l2.csv")
        lab_ok = (tmp_path / "l.csv").read_bytes() == (tmp_path / "l2.csv").read_bytes()
        check(
            "all three file formats round-trip bit-exactly",
            bool(emb_ok and cnf_ok and lab_ok),
            "embeddings, confidences, labels",
        )
