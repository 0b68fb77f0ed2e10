import math
import warnings

import numpy as np
import pytest
from scipy import stats as scipy_stats
from sklearn.metrics import precision_recall_fscore_support

from infobias.corpus import parse_corpus_dict
from infobias.errors import ValidationError
from infobias.evaluation import (
    STRATA_SCHEMES,
    aggregate_seeds,
    assign_length_bin,
    has_strong_subjective_clue,
    independent_t_test,
    length_quartiles,
    load_mpqa_lexicon,
    prf1,
    quartile_cutoffs,
    sentence_length,
    stratify,
    tokenize,
)
from infobias.model.predictions import PredictionEntry, PredictionSet

from conftest import info_span, lex_span, make_corpus_doc


# ---------------------------------------------------------------------------
# prf1


def test_prf1_hand_example():
    golds = [1, 1, 1, 0, 1, 0]
    preds = [1, 1, 0, 1, 0, 0]
    r = prf1(golds, preds)
    assert (r.tp, r.fp, r.fn, r.tn) == (2, 1, 2, 1)
    assert r.precision == pytest.approx(100 * 2 / 3)
    assert r.recall == pytest.approx(50.0)
    assert r.f1 == pytest.approx(2 * (200 / 3) * 50 / (200 / 3 + 50))
    assert r.support == 4 and r.total == 6


def test_prf1_zero_division_convention():
    r = prf1([0, 0, 0], [0, 0, 0])
    assert (r.precision, r.recall, r.f1) == (0.0, 0.0, 0.0)
    assert r.tn == 3
    # predictions but no gold positives: recall denominator is zero
    r = prf1([0, 0], [1, 1])
    assert r.recall == 0.0 and r.f1 == 0.0


def test_prf1_perfect_and_inverted():
    assert prf1([1, 0, 1], [1, 0, 1]).f1 == pytest.approx(100.0)
    assert prf1([1, 0], [0, 1]).f1 == 0.0


def test_prf1_rejects_empty_and_mismatched():
    with pytest.raises(ValidationError):
        prf1([], [])
    with pytest.raises(ValidationError):
        prf1([1, 0], [1])
    with pytest.raises(ValidationError):
        prf1([1, 2], [1, 0])
    with pytest.raises(ValidationError):
        prf1(PredictionSet())


def test_prf1_accepts_prediction_set():
    ps = PredictionSet()
    for i, (g, p) in enumerate([(1, 1), (0, 1), (1, 0)]):
        ps.add(PredictionEntry(id=f"s{i}", p_biased=float(p), pred=p, gold=g,
                               variant="artcim", fold=0, seed=0))
    r = prf1(ps)
    assert (r.tp, r.fp, r.fn, r.tn) == (1, 1, 1, 0)


def test_prf1_matches_sklearn_on_random_sets():
    rng = np.random.default_rng(7)
    for _ in range(200):
        n = int(rng.integers(1, 60))
        golds = rng.integers(0, 2, size=n)
        preds = rng.integers(0, 2, size=n)
        r = prf1(golds.tolist(), preds.tolist())
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p, rec, f1, _ = precision_recall_fscore_support(
                golds, preds, average="binary", pos_label=1, zero_division=0
            )
        assert r.precision == pytest.approx(100 * p, abs=1e-9)
        assert r.recall == pytest.approx(100 * rec, abs=1e-9)
        assert r.f1 == pytest.approx(100 * f1, abs=1e-9)


def test_metric_report_to_dict_rounds():
    d = prf1([1, 1, 1], [1, 0, 1]).to_dict()
    assert d["recall"] == 66.67
    assert d["precision"] == 100.0


# ---------------------------------------------------------------------------
# Seed aggregation


def test_aggregate_two_seed_runs():
    reports = [
        prf1([1, 1, 0, 0], [1, 0, 1, 0]),
        prf1([1, 1, 0, 0], [1, 1, 1, 0]),
    ]
    agg = aggregate_seeds(reports)
    f1s = [r.f1 for r in reports]
    assert agg.mean_f1 == pytest.approx(sum(f1s) / 2)
    assert agg.std_f1 == pytest.approx(np.std(f1s, ddof=1))
    assert agg.n_seeds == 2
    assert agg.f1_values == tuple(f1s)


def test_aggregate_known_values():
    # two runs engineered to F1 values 42.x is overkill; use direct checks
    a = prf1([1, 0], [1, 0])   # 100
    b = prf1([1, 0], [0, 0])   # 0
    agg = aggregate_seeds([a, b])
    assert agg.mean_f1 == pytest.approx(50.0)
    assert agg.std_f1 == pytest.approx(np.std([100.0, 0.0], ddof=1))


def test_aggregate_single_requires_flag_and_warns():
    only = prf1([1, 0], [1, 0])
    with pytest.raises(ValidationError):
        aggregate_seeds([only])
    with pytest.warns(RuntimeWarning, match="single"):
        agg = aggregate_seeds([only], allow_single=True)
    assert agg.std_f1 is None and agg.std_precision is None
    assert agg.mean_f1 == pytest.approx(100.0)
    assert agg.to_dict()["f1"]["std"] is None


def test_aggregate_empty_rejected():
    with pytest.raises(ValidationError):
        aggregate_seeds([])


# ---------------------------------------------------------------------------
# t-test


def test_t_test_frozen_oracle():
    r = independent_t_test([1, 2, 3, 4, 5], [2, 3, 4, 5, 6])
    assert r.t == pytest.approx(-1.0, abs=1e-9)
    assert r.p == pytest.approx(0.3466, abs=5e-4)
    assert r.df == 8
    assert not r.significant


def test_t_test_matches_scipy_student_and_welch():
    rng = np.random.default_rng(11)
    for _ in range(300):
        na, nb = int(rng.integers(2, 12)), int(rng.integers(2, 12))
        a = rng.normal(0, 1 + rng.random(), size=na)
        b = rng.normal(rng.random(), 1 + rng.random(), size=nb)
        ours = independent_t_test(a.tolist(), b.tolist())
        ref = scipy_stats.ttest_ind(a, b, equal_var=True)
        assert ours.t == pytest.approx(ref.statistic, rel=1e-10, abs=1e-12)
        assert ours.p == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-12)

        ours_w = independent_t_test(a.tolist(), b.tolist(), welch=True)
        ref_w = scipy_stats.ttest_ind(a, b, equal_var=False)
        assert ours_w.t == pytest.approx(ref_w.statistic, rel=1e-10, abs=1e-12)
        assert ours_w.p == pytest.approx(ref_w.pvalue, rel=1e-9, abs=1e-12)
        assert ours_w.df == pytest.approx(ref_w.df, rel=1e-10)


def test_t_test_identical_samples_p_one():
    r = independent_t_test([3.0, 4.0, 5.0], [3.0, 4.0, 5.0])
    assert r.t == 0.0 and r.p == pytest.approx(1.0)


def test_t_test_antisymmetry():
    rng = np.random.default_rng(23)
    for _ in range(1000):
        na, nb = int(rng.integers(2, 8)), int(rng.integers(2, 8))
        a = rng.normal(size=na).tolist()
        b = rng.normal(size=nb).tolist()
        ab = independent_t_test(a, b)
        ba = independent_t_test(b, a)
        assert ab.t == pytest.approx(-ba.t, rel=1e-12, abs=1e-12)
        assert ab.p == pytest.approx(ba.p, rel=1e-12, abs=1e-12)


def test_t_test_zero_variance_branches():
    eq = independent_t_test([5.0, 5.0], [5.0, 5.0])
    assert eq.t == 0.0 and eq.p == 1.0 and not eq.significant

    with pytest.warns(RuntimeWarning):
        ne = independent_t_test([42.0] * 5, [44.0] * 5)
    assert ne.p == 0.0
    assert ne.significant
    assert ne.t < 0 and math.isinf(ne.t)


def test_t_test_validation():
    with pytest.raises(ValidationError):
        independent_t_test([1.0], [1.0, 2.0])
    with pytest.raises(ValidationError):
        independent_t_test([1.0, 2.0], [1.0, 2.0], alpha=0.0)
    with pytest.raises(ValidationError):
        independent_t_test([1.0, 2.0], [1.0, 2.0], alpha=1.0)
    with pytest.raises(ValidationError):
        independent_t_test([1.0, np.nan, 2.0], [1.0, 2.0, 3.0])


def test_t_test_significance_flag_tracks_alpha():
    a, b = [1.0, 2.0, 3.0], [5.0, 6.0, 7.0]
    strict = independent_t_test(a, b, alpha=0.001)
    loose = independent_t_test(a, b, alpha=0.05)
    assert loose.significant and not strict.significant
    assert loose.alpha == 0.05


# ---------------------------------------------------------------------------
# Length strata helpers


def test_tokenize_strips_punctuation():
    assert tokenize('He said, "Go home!"') == ["he", "said", "go", "home"]
    assert tokenize("...") == []
    assert sentence_length('He said, "Go home!"') == 4
    assert sentence_length("") == 0


def test_quartile_cutoffs_inverted_cdf():
    assert quartile_cutoffs([1, 2, 3, 4]) == (1, 2, 3)
    got = quartile_cutoffs(list(range(1, 101)))
    ref = tuple(
        float(np.quantile(np.arange(1, 101), q, method="inverted_cdf"))
        for q in (0.25, 0.5, 0.75)
    )
    assert got == ref


def test_assign_length_bin_ties_go_low():
    cutoffs = (18, 27, 36)
    assert assign_length_bin(5, cutoffs) == 1
    assert assign_length_bin(18, cutoffs) == 1
    assert assign_length_bin(19, cutoffs) == 2
    assert assign_length_bin(27, cutoffs) == 2
    assert assign_length_bin(36, cutoffs) == 3
    assert assign_length_bin(37, cutoffs) == 4
    assert assign_length_bin(400, cutoffs) == 4


def test_length_quartiles_from_corpus():
    doc = make_corpus_doc(n_stories=2, n_sentences=2)
    texts = iter(
        ["one", "one two", "one two three", "one two three four",
         "a b c d e", "a b c d e f", "a b c d e f g", "a b c d e f g h",
         "x", "x y", "x y z", "x y z w"]
    )
    for story in doc["stories"]:
        for art in story["articles"]:
            for sent in art["sentences"]:
                sent["text"] = next(texts)
                sent["spans"] = []
    corpus = parse_corpus_dict(doc)
    lengths = sorted(
        sentence_length(s.text) for _, _, s in corpus.iter_sentences()
    )
    assert length_quartiles(corpus) == quartile_cutoffs(lengths)


# ---------------------------------------------------------------------------
# Subjectivity lexicon


GOOD_LEXICON = """type=strongsubj len=1 word1=abuse pos1=verb stemmed1=y priorpolarity=negative
type=weaksubj len=1 word1=ability pos1=noun stemmed1=n priorpolarity=positive
type=strongsubj len=1 word1=tragic pos1=adj stemmed1=n priorpolarity=negative
"""


def write_lexicon(tmp_path, text):
    path = tmp_path / "clues.tff"
    path.write_text(text, encoding="utf-8")
    return path


def test_lexicon_parse_and_strength(tmp_path):
    lex = load_mpqa_lexicon(write_lexicon(tmp_path, GOOD_LEXICON))
    assert lex.strength("abuse") == "strong"
    assert lex.strength("TRAGIC") == "strong"
    assert lex.strength("ability") == "weak"
    assert lex.strength("missing") is None
    assert lex.strong == {"abuse", "tragic"}
    assert len(lex.entries) == 3
    assert lex.entries["abuse"].stemmed and not lex.entries["tragic"].stemmed


def test_lexicon_conflict_keeps_strong(tmp_path):
    text = (
        "type=weaksubj len=1 word1=dual pos1=noun stemmed1=n priorpolarity=neutral\n"
        "type=strongsubj len=1 word1=dual pos1=verb stemmed1=n priorpolarity=negative\n"
    )
    lex = load_mpqa_lexicon(write_lexicon(tmp_path, text))
    assert lex.strength("dual") == "strong"
    # order independence
    lines = text.splitlines()
    flipped = load_mpqa_lexicon(
        write_lexicon(tmp_path, "\n".join(reversed(lines)) + "\n")
    )
    assert flipped.strength("dual") == "strong"


def test_lexicon_malformed_lines_skipped_with_count(tmp_path):
    text = GOOD_LEXICON + "this line is garbage\nword1=\n"
    with pytest.warns(RuntimeWarning, match="2"):
        lex = load_mpqa_lexicon(write_lexicon(tmp_path, text))
    assert len(lex.entries) == 3


def test_lexicon_empty_warns(tmp_path):
    with pytest.warns(RuntimeWarning):
        lex = load_mpqa_lexicon(write_lexicon(tmp_path, ""))
    assert len(lex.entries) == 0


def test_strong_clue_matching(tmp_path):
    lex = load_mpqa_lexicon(write_lexicon(tmp_path, GOOD_LEXICON))
    assert has_strong_subjective_clue("A tragic event unfolded.", lex)
    assert has_strong_subjective_clue("They ABUSE power", lex)
    assert not has_strong_subjective_clue("An able assistant.", lex)
    assert not has_strong_subjective_clue("", lex)


# ---------------------------------------------------------------------------
# Stratified analysis


def build_eval_corpus():
    doc = make_corpus_doc(n_stories=2, n_sentences=3, biased_idx=())
    # spread token counts 1..18 so every length quartile is populated,
    # and plant one strong subjectivity clue
    n_tokens = 1
    for story in doc["stories"]:
        for art in story["articles"]:
            for sent in art["sentences"]:
                sent["text"] = " ".join(["word"] * n_tokens)
                n_tokens += 1
    doc["stories"][1]["articles"][0]["sentences"][0]["text"] = "a tragic revelation"
    # story 00, FOX: s0 biased in quote, s1 biased outside quote, s2 neutral
    fox = doc["stories"][0]["articles"][0]["sentences"]
    fox[0]["spans"] = [info_span(0, 4, in_quote=True)]
    fox[1]["spans"] = [info_span(0, 4, in_quote=False)]
    # story 00, NYT: s0 lexical only, s1 biased, s2 neutral
    nyt = doc["stories"][0]["articles"][1]["sentences"]
    nyt[0]["spans"] = [lex_span(0, 4)]
    nyt[1]["spans"] = [info_span(0, 4)]
    # story 01, HPO: s0 biased
    hpo = doc["stories"][1]["articles"][2]["sentences"]
    hpo[0]["spans"] = [info_span(0, 4)]
    return parse_corpus_dict(doc)


def all_positive_preds(corpus):
    ps = PredictionSet()
    from infobias.corpus import label_index

    for _, _, sent in corpus.iter_sentences():
        ps.add(
            PredictionEntry(
                id=sent.id, p_biased=0.9, pred=1,
                gold=label_index(sent), variant="artcim", fold=0, seed=0,
            )
        )
    return ps


def test_stratify_publisher_partitions_predictions():
    corpus = build_eval_corpus()
    preds = all_positive_preds(corpus)
    rep = stratify(preds, corpus, "publisher")
    assert rep.scheme == "publisher"
    assert [s.name for s in rep.strata] == ["FOX", "NYT", "HPO"]
    assert sum(s.size for s in rep.strata) == len(preds)
    fox = rep.stratum("FOX")
    assert fox.size == 6
    assert fox.bias_rate == pytest.approx(100 * 2 / 6)
    # all-positive predictions give recall 100 wherever support exists
    assert fox.metrics.recall == pytest.approx(100.0)


def test_stratify_leaning_uses_article_annotation():
    corpus = build_eval_corpus()
    rep = stratify(all_positive_preds(corpus), corpus, "leaning")
    assert [s.name for s in rep.strata] == ["right", "center", "left"]
    assert rep.stratum("right").size == 6


def test_stratify_quote_is_recall_only_over_gold_biased():
    corpus = build_eval_corpus()
    rep = stratify(all_positive_preds(corpus), corpus, "quote")
    assert rep.recall_only
    total = sum(s.size for s in rep.strata)
    assert total == 4  # only gold-biased sentences counted
    assert rep.stratum("in_quote").size == 1
    assert rep.stratum("outside").size == 3
    assert rep.stratum("in_quote").metrics.recall == pytest.approx(100.0)


def test_stratify_lexical_marker():
    corpus = build_eval_corpus()
    rep = stratify(all_positive_preds(corpus), corpus, "lexical")
    assert rep.stratum("lexical").size == 1
    assert rep.stratum("none").size == len(all_positive_preds(corpus)) - 1


def test_stratify_length_bins_cover_everything():
    corpus = build_eval_corpus()
    rep = stratify(all_positive_preds(corpus), corpus, "length")
    assert [s.name for s in rep.strata] == ["Q1", "Q2", "Q3", "Q4"]
    assert sum(s.size for s in rep.strata) == 18


def test_stratify_subjectivity_needs_lexicon(tmp_path):
    corpus = build_eval_corpus()
    with pytest.raises(ValidationError):
        stratify(all_positive_preds(corpus), corpus, "subjectivity")
    lex = load_mpqa_lexicon(write_lexicon(tmp_path, GOOD_LEXICON))
    rep = stratify(all_positive_preds(corpus), corpus, "subjectivity", lex)
    assert rep.names == ("clue", "no_clue")
    assert rep.stratum("clue").size == 1
    assert sum(s.size for s in rep.strata) == 18


def test_stratify_unknown_scheme():
    corpus = build_eval_corpus()
    with pytest.raises(ValidationError):
        stratify(all_positive_preds(corpus), corpus, "zodiac")
    assert "publisher" in STRATA_SCHEMES


def test_stratify_unknown_prediction_id():
    corpus = build_eval_corpus()
    ps = PredictionSet()
    ps.add(PredictionEntry(id="99xxx00", p_biased=0.5, pred=1, gold=1,
                           variant="artcim", fold=0, seed=0))
    with pytest.raises(ValidationError):
        stratify(ps, corpus, "publisher")


def test_stratified_report_to_dict():
    corpus = build_eval_corpus()
    doc = stratify(all_positive_preds(corpus), corpus, "publisher").to_dict()
    assert doc["scheme"] == "publisher"
    assert len(doc["strata"]) == 3
    assert {"name", "size", "bias_rate", "metrics"} <= set(doc["strata"][0])
