import numpy as np
import pytest
import torch
from sklearn.metrics import silhouette_score

from ticktack.annotate import extract_year_mentions
from ticktack.errors import DegeneratePartitionError, InsufficientDataError
from ticktack.evaluation import (
    clustering_metrics,
    era_bucket,
    evaluate_qa,
    generate_synthetic_tasks,
    read_items_jsonl,
    same_term_contrast,
    write_corpus_jsonl,
    write_items_jsonl,
    year_similarity_matrix,
    year_surface,
)
from ticktack.geometry import EncodingConfig
from ticktack.model import ModelConfig, ParameterSet, init
from ticktack.sexagenary import to_cycle_index
from ticktack.tokenizer import Tokenizer


def small_model(tok, dim=8, seed=0):
    cfg = ModelConfig(vocab_size=tok.vocab_size, dim=dim, n_layers=1, n_heads=2,
                      max_seq_len=96, seed=seed)
    return cfg, EncodingConfig(dim=dim), init(cfg)


class TestEraBuckets:
    @pytest.mark.parametrize(
        "year,label",
        [(-75000, "BCE"), (-1, "BCE"), (1, "AD1-500"), (500, "AD1-500"),
         (501, "AD501-1000"), (1500, "AD1001-1500"), (1965, "AD1501-2000"),
         (2000, "AD1501-2000"), (2001, "post-2000"), (2025, "post-2000")],
    )
    def test_bucketing(self, year, label):
        assert era_bucket(year) == label


class TestYearSurface:
    @pytest.mark.parametrize("year", [-75000, -1, 1, 99, 100, 606, 1965, 2999, 3000, 9999])
    def test_round_trips_through_extraction(self, year):
        (mention,) = extract_year_mentions(f"In {year_surface(year)}, it happened.")
        assert mention.year.value == year


class TestClusteringMetrics:
    def test_orthogonal_identical_classes(self):
        a, b = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        m = clustering_metrics([(a, 0), (a, 0), (b, 1), (b, 1)])
        assert m.silhouette == pytest.approx(1.0)
        assert m.intra_mean == pytest.approx(1.0)
        assert m.inter_mean == pytest.approx(0.0)

    def test_hand_computed_six_vector_fixture(self):
        vecs = [
            (np.array([1.0, 0.0]), 0),
            (np.array([0.9, 0.2]), 0),
            (np.array([0.8, -0.1]), 0),
            (np.array([0.1, 1.0]), 1),
            (np.array([-0.2, 0.9]), 1),
            (np.array([0.0, 0.8]), 1),
        ]
        got = clustering_metrics(vecs)
        # Oracle: direct definition, one point at a time.
        unit = np.stack([v / np.linalg.norm(v) for v, _ in vecs])
        labels = np.array([l for _, l in vecs])
        dist = 1.0 - unit @ unit.T
        scores = []
        for i in range(6):
            own = (labels == labels[i]) & (np.arange(6) != i)
            a = dist[i, own].mean()
            b = dist[i, labels != labels[i]].mean()
            scores.append((b - a) / max(a, b))
        assert got.silhouette == pytest.approx(np.mean(scores), abs=1e-12)
        sk = silhouette_score(unit, labels, metric="cosine")
        assert got.silhouette == pytest.approx(sk, abs=1e-9)

    def test_shuffled_labels_score_near_zero(self):
        rng = np.random.default_rng(0)
        vecs = rng.normal(size=(80, 6))
        labels = rng.integers(0, 4, size=80)
        if len(set(labels.tolist())) < 2:
            labels[0], labels[1] = 0, 1
        m = clustering_metrics(list(zip(vecs, labels)))
        assert abs(m.silhouette) < 0.15

    def test_adversarial_mislabeled_sign_flip(self):
        a, b = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        good = clustering_metrics([(a, 0), (a, 0), (b, 1), (b, 1)])
        bad = clustering_metrics([(a, 0), (b, 0), (a, 1), (b, 1)])
        assert good.silhouette > 0 > bad.silhouette

    def test_singletons_score_zero(self):
        a, b = np.array([1.0, 0.0]), np.array([0.0, 1.0])
        m = clustering_metrics([(a, 0), (b, 1)])
        assert m.silhouette == 0.0

    def test_degenerate_partitions_rejected(self):
        a = np.array([1.0, 0.0])
        with pytest.raises(DegeneratePartitionError):
            clustering_metrics([(a, 0), (a, 0)])
        with pytest.raises(DegeneratePartitionError):
            clustering_metrics([(a, 0)])


class TestGenerateSyntheticTasks:
    def test_deterministic(self):
        a = generate_synthetic_tasks(seed=5, n_items=50)
        b = generate_synthetic_tasks(seed=5, n_items=50)
        assert a.items == b.items
        assert a.corpus == b.corpus
        assert a.fewshot_pool == b.fewshot_pool

    def test_seed_changes_output(self):
        a = generate_synthetic_tasks(seed=5, n_items=50)
        b = generate_synthetic_tasks(seed=6, n_items=50)
        assert a.items != b.items

    def test_sixty_consecutive_years_cover_all_classes(self):
        tasks = generate_synthetic_tasks(seed=1, n_items=60, year_range=(1920, 1979),
                                         n_fewshot=0)
        classes = {to_cycle_index(i.year).value for i in tasks.items}
        assert len(classes) == 60

    def test_bce_coverage(self):
        tasks = generate_synthetic_tasks(seed=2, n_items=80, year_range=(-75000, 2025))
        assert any(i.era_bucket == "BCE" for i in tasks.items + tasks.fewshot_pool)

    def test_item_wellformedness(self):
        tasks = generate_synthetic_tasks(seed=3, n_items=40)
        for item in tasks.items:
            assert len(item.options) == 4
            assert len(set(item.options)) == 4
            assert 0 <= item.answer_index < 4
            assert "____" in item.question
            (mention,) = extract_year_mentions(item.question)
            assert mention.year.value == item.year
            assert era_bucket(item.year) == item.era_bucket

    def test_corpus_states_each_fact(self):
        tasks = generate_synthetic_tasks(seed=4, n_items=30, n_fewshot=4)
        texts = set(tasks.corpus)
        for item in tasks.items + tasks.fewshot_pool:
            assert item.question.replace("____", item.options[item.answer_index]) in texts

    def test_pool_disjoint_from_items(self):
        tasks = generate_synthetic_tasks(seed=7, n_items=30, n_fewshot=6)
        assert len(tasks.fewshot_pool) == 6
        item_years = {i.year for i in tasks.items}
        assert all(p.year not in item_years for p in tasks.fewshot_pool)

    def test_jsonl_round_trip(self, tmp_path):
        tasks = generate_synthetic_tasks(seed=8, n_items=12)
        path = tmp_path / "items.jsonl"
        write_items_jsonl(tasks.items, path)
        assert read_items_jsonl(path) == tasks.items
        write_corpus_jsonl(tasks.corpus, tmp_path / "corpus.jsonl")
        from ticktack.annotate import iter_corpus

        assert list(iter_corpus(tmp_path / "corpus.jsonl")) == tasks.corpus


class TestSimilarityMatrix:
    def test_well_formed_on_untrained_model(self):
        tok = Tokenizer.build(["In 2010, the chronicle records one event."], max_size=64)
        cfg, enc, params = small_model(tok)
        years = [y for y in range(2010, 2026)]
        sim = year_similarity_matrix(params, cfg, enc, tok, years,
                                     "In {year}, the chronicle records one event.")
        v = sim.values
        assert v.shape == (16, 16)
        assert np.allclose(v, v.T, atol=1e-9)
        assert np.allclose(np.diag(v), 1.0, atol=1e-9)
        assert np.all(v >= -1.0) and np.all(v <= 1.0)
        assert np.all(np.isfinite(v))

    def test_duplicate_year_rows_identical(self):
        tok = Tokenizer.build(["In 2010, the chronicle records one event."], max_size=64)
        cfg, enc, params = small_model(tok)
        sim = year_similarity_matrix(params, cfg, enc, tok, [2010, 2010, 2024],
                                     "In {year}, the chronicle records one event.")
        assert sim.values[0, 1] == pytest.approx(1.0, abs=1e-9)

    def test_template_placeholder_required(self):
        tok = Tokenizer.build(["x"], max_size=8)
        cfg, enc, params = small_model(tok)
        with pytest.raises(ValueError):
            year_similarity_matrix(params, cfg, enc, tok, [2010], "no placeholder")

    def test_same_term_contrast_requires_term_mates(self):
        tok = Tokenizer.build(["In 2010, the chronicle records one event."], max_size=64)
        cfg, enc, params = small_model(tok)
        sim = year_similarity_matrix(params, cfg, enc, tok, [2010, 2011],
                                     "In {year}, the chronicle records one event.")
        with pytest.raises(DegeneratePartitionError):
            same_term_contrast(sim)

    def test_same_term_contrast_splits_pairs(self):
        tok = Tokenizer.build(["In 2010, the chronicle records one event."], max_size=64)
        cfg, enc, params = small_model(tok)
        years = [1950, 1951, 2010, 2011]
        sim = year_similarity_matrix(params, cfg, enc, tok, years,
                                     "In {year}, the chronicle records one event.")
        same, diff = same_term_contrast(sim)
        # (1950, 2010) and (1951, 2011) are the only term mates.
        expect_same = (sim.values[0, 2] + sim.values[1, 3]) / 2
        assert same == pytest.approx(expect_same, abs=1e-12)
        assert np.isfinite(diff)


class TestEvaluateQa:
    @pytest.fixture
    def setup(self):
        tasks = generate_synthetic_tasks(seed=11, n_items=50, year_range=(1800, 2025),
                                         n_fewshot=6)
        tok = Tokenizer.build(tasks.corpus, max_size=256)
        cfg, enc, params = small_model(tok)
        return tasks, tok, cfg, enc, params

    def test_uniform_logits_score_near_chance(self):
        tasks = generate_synthetic_tasks(seed=12, n_items=200, year_range=(1500, 2025),
                                         n_fewshot=0)
        tok = Tokenizer.build(tasks.corpus, max_size=256)
        cfg, enc, params = small_model(tok)
        flat = ParameterSet({n: torch.zeros_like(t) if n == "head" else t
                             for n, t in params.items()})
        report = evaluate_qa(flat, cfg, enc, tok, tasks.items)
        # Uniform logits make every option tie; choice falls on index 0.
        assert abs(report.overall_accuracy - 0.25) < 0.1

    def test_conservation(self, setup):
        tasks, tok, cfg, enc, params = setup
        report = evaluate_qa(params, cfg, enc, tok, tasks.items)
        assert sum(b.count for b in report.buckets) == len(tasks.items) == report.total

    def test_single_bucket_overall(self, setup):
        tasks, tok, cfg, enc, params = setup
        subset = [i for i in tasks.items if i.era_bucket == "AD1501-2000"][:10]
        report = evaluate_qa(params, cfg, enc, tok, subset)
        nonempty = [b for b in report.buckets if b.count]
        assert len(nonempty) == 1
        assert report.overall_accuracy == nonempty[0].accuracy

    def test_deterministic(self, setup):
        tasks, tok, cfg, enc, params = setup
        a = evaluate_qa(params, cfg, enc, tok, tasks.items, shots=5,
                        fewshot_pool=tasks.fewshot_pool, seed=3)
        b = evaluate_qa(params, cfg, enc, tok, tasks.items, shots=5,
                        fewshot_pool=tasks.fewshot_pool, seed=3)
        assert [(x.count, x.correct) for x in a.buckets] == [
            (x.count, x.correct) for x in b.buckets
        ]

    def test_fewshot_requires_pool(self, setup):
        tasks, tok, cfg, enc, params = setup
        with pytest.raises(InsufficientDataError):
            evaluate_qa(params, cfg, enc, tok, tasks.items, shots=5, fewshot_pool=None)
        with pytest.raises(InsufficientDataError):
            evaluate_qa(params, cfg, enc, tok, tasks.items, shots=9,
                        fewshot_pool=tasks.fewshot_pool)

    def test_empty_items_rejected(self, setup):
        _, tok, cfg, enc, params = setup
        with pytest.raises(InsufficientDataError):
            evaluate_qa(params, cfg, enc, tok, [])

    def test_injection_changes_scores(self, setup):
        tasks, tok, cfg, enc, params = setup
        on = evaluate_qa(params, cfg, enc, tok, tasks.items, injection_enabled=True)
        off = evaluate_qa(params, cfg, enc, tok, tasks.items, injection_enabled=False)
        assert on.total == off.total  # both well-formed; scores may differ
