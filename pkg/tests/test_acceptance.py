"""Acceptance gate: one test per shipped guarantee, each with a budgeted check.

Every test prints a single PASS/FAIL line (visible with -s or -rA) and
enforces its own runtime budget where one applies.
"""

from __future__ import annotations

import functools
import json
import random
import time
from contextlib import contextmanager

import pytest

from conftest import DOC_BODIES, make_corpus
from personasum.cli import cli_dispatch
from personasum.corpus import Document, count_words
from personasum.critic import UnparseableScores, critique, parse_scores
from personasum.filtering import run_filter
from personasum.gateway import ChatPrompt
from personasum.generation import PersonaSummary
from personasum.metrics import (
    bertscore,
    bleu,
    lcs_length,
    meteor,
    rouge_1,
    rouge_2,
    rouge_l,
    tokenize,
)
from personasum.records import iter_records, write_records


@contextmanager
def check(name, budget_s=None):
    start = time.monotonic()
    try:
        yield
        elapsed = time.monotonic() - start
        if budget_s is not None and elapsed >= budget_s:
            raise AssertionError(
                f"{name} took {elapsed:.2f}s, budget {budget_s:.0f}s")
    except BaseException:
        print(f"FAIL: {name}")
        raise
    print(f"PASS: {name} ({elapsed:.2f}s)")


# -- 1: metric oracles -------------------------------------------------------


class OneHotEmbedder:
    """Identity-token embeddings: cosine is 1 for equal tokens, 0 otherwise."""

    def embed(self, text):
        tokens = tokenize(text)
        vocab = {t: i for i, t in enumerate(dict.fromkeys(tokens))}
        vecs = []
        for token in tokens:
            vec = [0.0] * (max(vocab.values()) + 1)
            vec[vocab[token]] = 1.0
            vecs.append(vec)
        return tokens, vecs


def brute_lcs(a: tuple[str, ...], b: tuple[str, ...]) -> int:
    @functools.lru_cache(maxsize=None)
    def go(i: int, j: int) -> int:
        if i == len(a) or j == len(b):
            return 0
        if a[i] == b[j]:
            return 1 + go(i + 1, j + 1)
        return max(go(i + 1, j), go(i, j + 1))
    return go(0, 0)


def test_metric_oracles():
    with check("metric oracles", budget_s=5.0):
        got = rouge_1("the cat", "the cat sat")
        assert abs(got.precision - 1.0) < 1e-9
        assert abs(got.recall - 2 / 3) < 1e-9
        assert abs(got.f1 - 0.8) < 1e-9

        rng = random.Random(20240811)
        vocab = ["a", "b", "c", "d", "e"]
        for _ in range(200):
            a = tuple(rng.choices(vocab, k=rng.randint(0, 8)))
            b = tuple(rng.choices(vocab, k=rng.randint(0, 8)))
            assert lcs_length(a, b) == brute_lcs(a, b)

        for text in ("a steady recovery", "one two three four five",
                     "the dose was reduced twice then held"):
            m = len(tokenize(text))
            for fn in (rouge_1, rouge_2, rouge_l):
                assert abs(fn(text, text).f1 - 1.0) < 1e-9
            assert abs(bleu(text, text) - 1.0) < 1e-9
            assert abs(meteor(text, text) - (1.0 - 0.5 / m ** 3)) < 1e-9

        embedder = OneHotEmbedder()
        for _ in range(1000):
            cand = " ".join(rng.choices(vocab, k=rng.randint(1, 12)))
            ref = " ".join(rng.choices(vocab, k=rng.randint(1, 12)))
            values = []
            for fn in (rouge_1, rouge_2, rouge_l):
                prf = fn(cand, ref)
                values += [prf.precision, prf.recall, prf.f1]
            values.append(bleu(cand, ref))
            values.append(meteor(cand, ref))
            bert = bertscore(cand, ref, embedder)
            values += [bert.precision, bert.recall, bert.f1]
            assert all(0.0 <= v <= 1.0 for v in values), (cand, ref, values)


# -- 2: filter on planted defects --------------------------------------------


PERSONA_WORDS = {
    "doctor": "alpha beta gamma",
    "patient": "delta epsilon zeta",
    "normal person": "eta theta iota",
}


def _doc(doc_id: str, body: str) -> Document:
    return Document(doc_id=doc_id, source_url=f"synthetic://{doc_id}",
                    title=doc_id, body=body, word_count=count_words(body),
                    split="train")


def planted_corpus():
    """96 clean records plus one defect per filtering step: 100 in total."""
    docs, summaries = [], []
    for i in range(31):
        doc_id = f"clean{i:03d}"
        docs.append(_doc(doc_id, (
            f"Record {i} notes alpha beta gamma delta epsilon zeta eta theta "
            f"iota with stable readings of {i} units across the period.")))
        for persona, words in PERSONA_WORDS.items():
            text = f"{persona.split()[0].capitalize()} note {i} covers {words}."
            summaries.append(PersonaSummary.build(doc_id, persona, text, "teacher"))
    for doc_id, persona in (("extra00", "doctor"), ("extra01", "patient")):
        docs.append(_doc(doc_id, (
            f"Isolated case {doc_id} documents a single view with steady "
            f"numbers 12 and 34 recorded at review.")))
        summaries.append(PersonaSummary.build(
            doc_id, persona, "A single view covers numbers 12 and 34.", "teacher"))

    docs.append(_doc("plant-conflict", (
        "Trial section results showed strong benefit for participants in "
        "group 9 and careful monitoring continued throughout.")))
    keep = "Trial results showed strong benefit for participants in group 9."
    summaries.append(PersonaSummary.build("plant-conflict", "doctor", keep, "teacher"))
    summaries.append(PersonaSummary.build(
        "plant-conflict", "patient", keep[:-1] + " overall.", "teacher"))

    docs.append(_doc("plant-markup", (
        "Imaging report 14 describes mild changes with no acute findings "
        "and recommends routine follow up imaging.")))
    summaries.append(PersonaSummary.build(
        "plant-markup", "doctor", "Imaging report 14 shows <b>mild</b> changes only.",
        "teacher"))

    docs.append(_doc("plant-unfinished", (
        "Therapy session 21 reviewed progress toward goals and set new "
        "targets for the coming month of sessions.")))
    summaries.append(PersonaSummary.build(
        "plant-unfinished", "doctor",
        "Therapy session 21 reviewed progress toward goals", "teacher"))

    docs.append(_doc("plant-number", (
        "Medication dose of 40 mg was continued with no reported side "
        "effects at the scheduled review visit.")))
    summaries.append(PersonaSummary.build(
        "plant-number", "doctor",
        "Medication dose of 999 mg was continued without issues.", "teacher"))
    return docs, summaries


def test_filter_planted_defects():
    with check("filter removes exactly the planted defects", budget_s=5.0):
        docs, summaries = planted_corpus()
        assert len(summaries) == 100
        kept, report = run_filter(summaries, docs, {"aspirin", "metformin"})

        assert report.pre_count == 100
        assert report.kept_count == 96
        assert len(kept) == 96
        assert report.overall_removed_pct == 4.0
        assert [s.name for s in report.steps] == [
            "special_chars", "incomplete", "conflict", "hallucination"]
        assert [s.removed_count for s in report.steps] == [1, 1, 1, 1]
        assert [s.removed_pct for s in report.steps] == [1.0, 1.0, 1.0, 1.0]
        assert [s.removed_keys for s in report.steps] == [
            ["plant-markup:doctor"],
            ["plant-unfinished:doctor"],
            ["plant-conflict:patient"],
            ["plant-number:doctor"],
        ]
        # Zero false positives: every clean record survives unflagged.
        assert all(not s.filter_flags for s in kept)
        kept_keys = {s.key() for s in kept}
        assert "plant-conflict:doctor" in kept_keys
        assert kept_keys == {s.key() for s in summaries} - {
            "plant-markup:doctor", "plant-unfinished:doctor",
            "plant-conflict:patient", "plant-number:doctor"}


# -- 3: agreement statistics --------------------------------------------------


def test_agreement_statistics():
    from personasum.agreement import cohen_kappa, persona_id_accuracy

    with check("agreement statistics", budget_s=30.0):
        rater_a = ["a"] * 20 + ["a"] * 5 + ["b"] * 10 + ["b"] * 15
        rater_b = ["a"] * 20 + ["b"] * 5 + ["a"] * 10 + ["b"] * 15
        assert cohen_kappa(rater_a, rater_b) == 0.4

        same = ["x", "y", "z", "x", "y"] * 8
        assert cohen_kappa(same, list(same)) == 1.0

        rng = random.Random(7)
        categories = ["p", "q", "r"]
        total = 0.0
        trials = 10_000
        for _ in range(trials):
            a = rng.choices(categories, k=200)
            b = rng.choices(categories, k=200)
            total += cohen_kappa(a, b)
        assert abs(total / trials) < 0.02

        personas = ["doctor", "patient", "normal person"]
        truth = {"doc": {str(i): p for i, p in enumerate(personas)}}
        for _ in range(1000):
            guess = personas[:]
            rng.shuffle(guess)
            triples = [("ann", "doc", {str(i): p for i, p in enumerate(guess)})]
            correct = round(persona_id_accuracy(triples, truth).pooled * 3)
            assert correct in (0, 1, 3)


# -- 4: critic robustness ------------------------------------------------------


LABEL_STYLES = ("{i}: {v}", "{i}. {v}", "{i} = {v}", "Criterion {i}: {v}")
CRITERION_NAMES = ("relevance", "coverage", "impurity", "quality")


def fuzz_case(rng: random.Random):
    scores = [round(rng.uniform(0.0, 1.0), 3) for _ in range(4)]
    form = rng.choice(("labeled", "json", "bare"))
    if form == "labeled":
        style = rng.choice(LABEL_STYLES)
        lines = [style.format(i=i + 1, v=scores[i]) for i in range(4)]
        if rng.random() < 0.3:
            lines.insert(0, "Here are the scores you asked for:")
        if rng.random() < 0.2:
            lines.append("Happy to explain any of these further.")
        sep = rng.choice(("\n", "\n\n"))
        return sep.join(lines), scores
    if form == "json":
        blob = {name: scores[i] for i, name in enumerate(CRITERION_NAMES)}
        text = json.dumps(blob, indent=rng.choice((None, 2)))
        if rng.random() < 0.5:
            text = text.replace('"', "'")
        if rng.random() < 0.3:
            text = "Scores:\n" + text
        return text, scores
    sep = rng.choice((" ", ", ", "\n"))
    return sep.join(str(v) for v in scores), scores


def corrupt(text: str, fraction: float, rng: random.Random) -> str:
    words = text.split()
    k = max(1, round(len(words) * fraction))
    for slot, i in enumerate(rng.sample(range(len(words)), k)):
        words[i] = f"zzz{slot}"
    return " ".join(words)


def test_critic_robustness(mock_llm, gateway, config):
    with check("critic parses judges and ranks corruption below gold"):
        rng = random.Random(4242)
        parsed = 0
        cases = 500
        for _ in range(cases):
            text, scores = fuzz_case(rng)
            try:
                got = parse_scores(text)
            except UnparseableScores:
                continue
            assert [round(v, 3) for v in got] == scores, text
            parsed += 1
        assert parsed >= 0.99 * cases

        for bad in ("", "no numbers at all", "0.5 0.5 0.5", "150 0.2 0.3 0.4"):
            with pytest.raises(UnparseableScores):
                parse_scores(bad)

        judge_config = config(role="judge")
        for doc in make_corpus(20):
            words = doc.body.split()
            label = " ".join(words[:12]) + "."
            gold = critique(doc, label, label, "doctor", gateway, judge_config)
            mangled = corrupt(label, 0.3, rng)
            worse = critique(doc, label, mangled, "doctor", gateway, judge_config)
            assert gold.rel > worse.rel, doc.doc_id
            assert gold.cov > worse.cov, doc.doc_id
            assert gold.qlt > worse.qlt, doc.doc_id


# -- 5: offline pipeline, twice, byte-identical --------------------------------


CHAIN_FILES = (
    "corpus.jsonl", "splits.jsonl", "teacher.jsonl", "kept.jsonl",
    "filter_report.json", "train.jsonl", "student.jsonl", "metrics.json",
    "per_pair.jsonl", "pairs.jsonl", "critiques.jsonl",
    "filter_table.txt", "metrics_table.txt", "length_report.json",
    "critique_table.txt",
)


def run_chain(root, raw, lexicon, cache, endpoint, embed_url):
    root.mkdir()
    out = {name: str(root / name) for name in CHAIN_FILES}
    flags = ["--endpoint", endpoint, "--model", "mock-model",
             "--cache-dir", str(cache)]
    assert cli_dispatch(["ingest", "--input", str(raw),
                         "--out", out["corpus.jsonl"]]) == 0
    assert cli_dispatch(["split", "--corpus", out["corpus.jsonl"], "--train", "6",
                         "--validation", "2", "--test", "2", "--seed", "0",
                         "--out", out["splits.jsonl"]]) == 0
    assert cli_dispatch(["generate", "--corpus", out["splits.jsonl"],
                         "--out", out["teacher.jsonl"]] + flags) == 0
    assert cli_dispatch(["filter", "--in", out["teacher.jsonl"],
                         "--corpus", out["splits.jsonl"],
                         "--lexicon", str(lexicon),
                         "--report", out["filter_report.json"],
                         "--out", out["kept.jsonl"]]) == 0
    assert cli_dispatch(["export-train", "--summaries", out["kept.jsonl"],
                         "--corpus", out["splits.jsonl"], "--split", "train",
                         "--out", out["train.jsonl"]]) == 0
    assert cli_dispatch(["infer", "--corpus", out["splits.jsonl"],
                         "--out", out["student.jsonl"]] + flags) == 0
    assert cli_dispatch(["eval", "--candidates", out["student.jsonl"],
                         "--references", out["teacher.jsonl"],
                         "--embedder", embed_url, "--out", out["metrics.json"],
                         "--per-pair", out["per_pair.jsonl"]]) == 0
    refs = {(r["doc_id"], r["persona"]): r["text"]
            for r in iter_records(out["teacher.jsonl"])}
    write_records(out["pairs.jsonl"], [
        {"doc_id": r["doc_id"], "persona": r["persona"],
         "reference": refs[(r["doc_id"], r["persona"])], "candidate": r["text"]}
        for r in iter_records(out["student.jsonl"])])
    assert cli_dispatch(["critique", "--pairs", out["pairs.jsonl"],
                         "--corpus", out["splits.jsonl"],
                         "--out", out["critiques.jsonl"]] + flags) == 0
    assert cli_dispatch(["report", "--filter-report", out["filter_report.json"],
                         "--out", out["filter_table.txt"]]) == 0
    assert cli_dispatch(["report", "--metrics", out["metrics.json"],
                         "--label", "student",
                         "--out", out["metrics_table.txt"]]) == 0
    assert cli_dispatch(["report", "--length-ratios", out["teacher.jsonl"],
                         "--corpus", out["splits.jsonl"],
                         "--out", out["length_report.json"]]) == 0
    assert cli_dispatch(["report", "--critiques", out["critiques.jsonl"],
                         "--out", out["critique_table.txt"]]) == 0
    return root


def test_offline_pipeline_deterministic(tmp_path, mock_llm, capsys):
    with check("offline pipeline is reproducible end to end", budget_s=60.0):
        raw = tmp_path / "raw"
        raw.mkdir()
        for i, body in enumerate(DOC_BODIES):
            (raw / f"note{i}.txt").write_text(body)
        lexicon = tmp_path / "lexicon.txt"
        lexicon.write_text("aspirin\nmetformin\ntroponin\nheart attack\n")
        cache = tmp_path / "cache"

        first = run_chain(tmp_path / "run1", raw, lexicon, cache,
                          mock_llm.completions_url, mock_llm.embed_url)
        second = run_chain(tmp_path / "run2", raw, lexicon, cache,
                           mock_llm.completions_url, mock_llm.embed_url)
        capsys.readouterr()

        for name in CHAIN_FILES:
            a = (first / name).read_bytes()
            b = (second / name).read_bytes()
            assert a == b, f"{name} differs between runs"

        assert len(list(iter_records(first / "teacher.jsonl"))) == 30
        assert len(list(iter_records(first / "kept.jsonl"))) == 30
        assert len(list(iter_records(first / "train.jsonl"))) == 18
        assert len(list(iter_records(first / "student.jsonl"))) == 30
        assert len(list(iter_records(first / "critiques.jsonl"))) == 30

        filter_table = (first / "filter_table.txt").read_text()
        for label in ("step 1: markup / special characters",
                      "step 2: incomplete summaries",
                      "step 3: cross-persona near-duplicates",
                      "step 4: ungrounded numbers or terms", "overall"):
            assert label in filter_table
        metrics_table = (first / "metrics_table.txt").read_text()
        for header in ("Rouge1", "Rouge2", "RougeL", "Meteor", "Bleu",
                       "BERT-Prec", "BERT-Rec", "BERT-F1", "by persona:"):
            assert header in metrics_table
        assert "average" in metrics_table
        length_report = json.loads((first / "length_report.json").read_text())
        assert set(length_report) >= {"mean_ratio", "median_ratio", "per_persona"}
        critique_table = (first / "critique_table.txt").read_text()
        for header in ("Rel", "Cov", "Imp", "Qlt", "Gds"):
            assert header in critique_table
        for row in ("doctor", "patient", "normal person", "average"):
            assert row in critique_table


# -- 6: gateway contract -------------------------------------------------------


def test_gateway_contract(mock_llm, gateway, config):
    with check("gateway caches, preserves order, and reports retries"):
        cfg = config()
        prompt = ChatPrompt(system="You are terse.", user="ECHO:contract probe")
        before = len(mock_llm.request_log)
        cold = gateway.complete(prompt, cfg)
        warm = gateway.complete(prompt, cfg)
        assert cold.text == warm.text == "contract probe"
        assert not cold.from_cache
        assert warm.from_cache
        assert warm.attempt_count == 0
        assert len(mock_llm.request_log) == before + 1

        for parallelism in (1, 4, 16):
            n = 12
            prompts = [
                ChatPrompt(system="You are terse.",
                           user=f"SLOWMS:{(n - i) * 5}:ECHO:order p{parallelism} i{i}")
                for i in range(n)
            ]
            results = gateway.complete_batch(prompts, cfg, parallelism=parallelism)
            assert [r.text for r in results] == [
                f"order p{parallelism} i{i}" for i in range(n)]

        flaky = ChatPrompt(system="You are terse.", user="FAIL:2:ECHO:eventually fine")
        result = gateway.complete(flaky, config(max_retries=5))
        assert result.text == "eventually fine"
        assert result.attempt_count == 3
