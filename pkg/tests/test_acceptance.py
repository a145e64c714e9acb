"""End-to-end acceptance checks. Each test prints one PASS/FAIL line."""

import json
import time
from fractions import Fraction

import numpy as np
import pytest

import dsp_oracle
import metric_oracle
from baseline_ref import text_only_forward
from gradcases import CASES
from cabin_slu.acoustic import AudioClip, apply_functionals, extract_lld, frame_count, load_precomputed
from cabin_slu.cli import EXIT_OK, main
from cabin_slu.data import (
    TABLE1_COUNTS,
    GeneratorConfig,
    Schema,
    attach_features,
    generate_synthetic,
    load_corpus,
    save_corpus,
)
from cabin_slu.data.split import holdout_indices
from cabin_slu.data.synth import synthetic_embeddings
from cabin_slu.embeddings import EmbeddingTable, concat_spaces, load_table
from cabin_slu.evaluation import intent_metrics, slot_metrics
from cabin_slu.model import (
    FusionConfig,
    HyperParams,
    build_model,
    fuse,
    intent_accuracy,
    level1_tag,
    level2_joint,
    predict,
    train,
)
from cabin_slu.numerics import grad_check
from cabin_slu.sidecar import write_vectors
from cabin_slu.visual import load_view_vectors


@pytest.fixture
def report(request):
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        else:
            print(line)
        return ok

    return emit


def _embedder(vocab, dim=50, seed=1):
    words, mat = synthetic_embeddings(vocab, dim, seed=seed)
    return concat_spaces([EmbeddingTable.from_tokens("word", words, mat)])


def test_c1_gradient_checks(report):
    t0 = time.perf_counter()
    worst = {}
    for name, (make, tol) in CASES.items():
        worst[name] = max(grad_check(*make(seed)) for seed in range(20))
    elapsed = time.perf_counter() - t0
    ok = all(worst[n] <= CASES[n][1] for n in CASES) and elapsed < 60
    detail = ", ".join(f"{n} {e:.1e}" for n, e in worst.items())
    assert report(1, ok, f"max rel err {detail}; {elapsed:.1f}s"), worst


@pytest.mark.slow
def test_c2_overfit_capacity(report):
    t0 = time.perf_counter()
    corpus = generate_synthetic(GeneratorConfig(n_utterances=200, seed=0)).corpus
    assert len(corpus.intent_counts()) == 9
    emb = _embedder(corpus.vocab())
    model, hist = train(corpus, emb, FusionConfig(("word",)),
                        HyperParams(hidden_dim=64, epochs=300, patience=10), seed=0)
    f1 = intent_accuracy(model, corpus, embedder=emb)
    reached = next((h.epoch for h in hist if h.dev_micro_f1 >= 0.99), None)
    elapsed = time.perf_counter() - t0
    ok = f1 >= 0.99 and reached is not None and reached <= 300 and elapsed < 300
    assert report(2, ok, f"train micro-F1 {f1:.4f}, >=0.99 at epoch {reached}; {elapsed:.0f}s")


@pytest.mark.slow
def test_c3_multimodal_gain(report):
    t0 = time.perf_counter()
    seed = 0
    data = generate_synthetic(GeneratorConfig(n_utterances=1000, ambiguous_fraction=0.3, signal_shift=2.0,
                                              noise_std=1.0, seed=seed))
    corpus = data.corpus
    tr, te = holdout_indices(corpus, 0.2, seed)
    train_c, test_c = corpus.subset(tr), corpus.subset(te)
    a, b = holdout_indices(train_c, 0.1, seed + 1)
    train_c, dev_c = train_c.subset(a), train_c.subset(b)
    emb = _embedder(corpus.vocab())
    feats = attach_features(corpus, acoustic=data.acoustic)
    hyper = HyperParams(hidden_dim=64, epochs=100, patience=10)
    scores = {}
    for label, fusion in (("text", FusionConfig(("word",))),
                          ("text+acoustic", FusionConfig(("word",), ("acoustic",), 16))):
        model, _ = train(train_c, emb, fusion, hyper, seed=seed, features=feats, dev=dev_c)
        scores[label] = intent_accuracy(model, test_c, feats, emb)
    gain = scores["text+acoustic"] - scores["text"]
    elapsed = time.perf_counter() - t0
    ok = gain >= 0.10 and scores["text"] <= 0.90 and elapsed < 900
    assert report(3, ok, f"text {scores['text']:.4f}, text+acoustic {scores['text+acoustic']:.4f}, "
                         f"gain {gain:.4f}; {elapsed:.0f}s")


def test_c4_dsp_oracle(report):
    worst = 0.0
    clips = dsp_oracle.clips()
    for x, sr in clips.values():
        assert len(x) <= sr // 2
        ours = extract_lld(AudioClip(x, sr))
        ref = dsp_oracle.lld(x, sr)
        worst = max(worst, dsp_oracle.rel_err(ours, ref),
                    dsp_oracle.rel_err(apply_functionals(ours), dsp_oracle.functionals(ref)))
    rng = np.random.default_rng(2024)
    counts_ok = 0
    for _ in range(50):
        L = int(rng.integers(1, 1000))
        S = int(rng.integers(1, 400))
        N = L + int(rng.integers(0, 20000))
        counts_ok += frame_count(N, L, S) == dsp_oracle.n_frames(N, L, S)
    ok = worst <= 1e-6 and counts_ok == 50 and {"sine440", "zeros"} <= set(clips)
    assert report(4, ok, f"{len(clips)} clips max rel err {worst:.1e}; frame counts {counts_ok}/50 exact")


def test_c5_metric_oracle(report):
    rng = np.random.default_rng(77)
    agree = 0
    for i in range(1000):
        if i % 2 == 0:
            gold, pred = metric_oracle.fuzz_case(rng, "intent")
            agree += metric_oracle.matches(intent_metrics(gold, pred)[0], metric_oracle.intent_scores(gold, pred))
        else:
            gold, pred = metric_oracle.fuzz_case(rng, "slot")
            mode = "token" if i % 4 == 1 else "span"
            agree += metric_oracle.matches(slot_metrics(gold, pred, mode),
                                           metric_oracle.slot_scores(gold, pred, mode))
    m, _ = intent_metrics(["A", "A", "B"], ["A", "B", "B"])
    exact = m.micro_f1 == float(Fraction(2, 3)) and m.macro_f1 == float(Fraction(2, 3))
    ok = agree == 1000 and exact
    assert report(5, ok, f"{agree}/1000 fuzzed cases exact; hand example micro {m.micro_f1!r} macro {m.macro_f1!r}")


def test_c6_determinism(report, tmp_path):
    assert main(["gen-synth", "--out", str(tmp_path / "d"), "--n", "120", "--seed", "5",
                 "--ambiguous", "0.2", "--embedding-dim", "16"]) == EXIT_OK
    for name in ("a", "b"):
        cfg = {
            "seed": 11,
            "corpus": "d/corpus.jsonl",
            "embeddings": [{"name": "word", "path": "d/word.txt"}, {"name": "speech", "path": "d/speech.txt"}],
            "acoustic": "d/acoustic.tsv",
            "output_dir": f"run_{name}",
            "fusion": {"utterance_feats": ["acoustic"], "projection_dim": 8},
            "hyper": {"hidden_dim": 16, "epochs": 4, "patience": 10},
        }
        (tmp_path / f"{name}.json").write_text(json.dumps(cfg))
        assert main(["train", str(tmp_path / f"{name}.json")]) == EXIT_OK
    same = {f: (tmp_path / "run_a" / f).read_bytes() == (tmp_path / "run_b" / f).read_bytes()
            for f in ("history.tsv", "model.ckpt")}
    assert report(6, all(same.values()), f"byte-identical {same}")


def test_c7_baseline_equivalence(report):
    data = generate_synthetic(GeneratorConfig(n_utterances=100, seed=9))
    emb = _embedder(data.corpus.vocab(), dim=20)
    model = build_model(emb, data.corpus.vocab(), FusionConfig(("word",)), 12, None, Schema(), seed=4)
    rng = np.random.default_rng(4)
    params = {k: v + rng.normal(size=v.shape) * 0.5 for k, v in model.params.items()}
    model = model.with_params(params)
    identical = 0
    for utt in data.corpus:
        toks = list(utt.tokens)
        X, _ = model.embed(toks)
        p1, keep, intent, p2 = text_only_forward(params, X, 12)
        pred = predict(model, toks)
        got_intent, got_tags = level2_joint(model, [toks[i] for i in keep])
        identical += (np.array_equal(level1_tag(model, toks), p1) and list(pred.kept) == keep
                      and np.array_equal(pred.intent_probs, intent) and np.array_equal(got_intent, intent)
                      and np.array_equal(got_tags, p2))
    assert report(7, identical == 100, f"{identical}/100 utterances bit-identical")


def test_c8_schema_fidelity(report, tmp_path):
    assert main(["gen-synth", "--out", str(tmp_path), "--n", "1331",
                 "--distribution", "table1-proportional", "--seed", "0"]) == EXIT_OK
    corpus = load_corpus(tmp_path / "corpus.jsonl")
    counts = corpus.intent_counts()
    off = {k: counts.get(k, 0) - n for k, n in TABLE1_COUNTS.items() if abs(counts.get(k, 0) - n) > 1}
    data = generate_synthetic(GeneratorConfig(n_utterances=1331, intent_distribution="table1-proportional",
                                              n_non_command=10, ambiguous_fraction=0.05))
    save_corpus(tmp_path / "rt.jsonl", data.corpus)
    roundtrip = load_corpus(tmp_path / "rt.jsonl") == data.corpus
    ok = not off and sum(counts.values()) == 1331 and roundtrip
    assert report(8, ok, f"counts {dict(counts)}; out of tolerance {off}; round trip {roundtrip}")


def test_c9_artifact_ingestion(report, tmp_path):
    (tmp_path / "glove.txt").write_text("stop 0.1 0.2 0.3\ncar -1 0 1\nthe 0 0 0\n")
    (tmp_path / "w2v.txt").write_text("2 4\nstop 1 2 3 4\npark 4 3 2 1\n")
    glove, w2v = load_table(tmp_path / "glove.txt"), load_table(tmp_path / "w2v.txt")
    tables_ok = (len(glove), glove.dim, len(w2v), w2v.dim) == (3, 3, 2, 4)

    rng = np.random.default_rng(0)
    write_vectors(tmp_path / "acoustic.tsv", {"u1": rng.normal(size=1582), "u2": rng.normal(size=1582)})
    write_vectors(tmp_path / "cabin.tsv", {"u1": rng.normal(size=4096), "u2": rng.normal(size=4096)})
    acoustic = load_precomputed(tmp_path / "acoustic.tsv", expected_dim=1582)
    cabin = load_view_vectors(tmp_path / "cabin.tsv", "cabin")
    emb = concat_spaces([glove, w2v])
    vocab = ["stop", "car", "the", "park"]
    dims = {"acoustic": 1582, "visual_cabin": 4096}
    m1 = build_model(emb, vocab, FusionConfig(("glove", "w2v"), ("acoustic",), 128), 64, dims)
    m2 = build_model(emb, vocab, FusionConfig(("glove", "w2v"), ("acoustic", "visual_cabin"), 0), 64, dims)
    rep = np.zeros(128)
    a = fuse(m1, rep, {"acoustic": acoustic["u1"].vector}).size
    b = fuse(m2, rep, {"acoustic": acoustic["u1"].vector, "visual_cabin": cabin["u1"]}).size
    pred = predict(m2, ["stop", "car"], {"acoustic": acoustic["u2"].vector, "visual_cabin": cabin["u2"]})
    ok = tables_ok and (a, b) == (256, 5806) and pred.intent_probs.shape == (9,)
    assert report(9, ok, f"GloVe {len(glove)}x{glove.dim}, Word2Vec {len(w2v)}x{w2v.dim}; fused dims {a}, {b}")
