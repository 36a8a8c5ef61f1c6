import math

import numpy as np
import pytest

from intentcf import (
    DatasetSplit,
    EmbeddingTable,
    InteractionDataset,
    build_adjacency,
    evaluate,
    forward,
    init_embeddings,
    ndcg_at_n,
    recall_at_n,
    split_dataset,
    topn,
)
from intentcf.errors import ConfigError, EvalError

from conftest import random_dataset


class TestTopn:
    def test_basic(self):
        assert topn(np.array([0.1, 0.9, 0.5]), set(), 2).tolist() == [1, 2]

    def test_tie_breaks_on_index(self):
        assert topn(np.array([0.9, 0.9, 0.1]), set(), 1).tolist() == [0]

    def test_mask_excluded(self):
        out = topn(np.array([0.9, 0.8, 0.7]), {0}, 2)
        assert out.tolist() == [1, 2]

    def test_short_when_few_unmasked(self):
        out = topn(np.array([0.9, 0.8, 0.7]), {0, 2}, 5)
        assert out.tolist() == [1]

    def test_matches_full_sort_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            scores = rng.choice([0.0, 0.25, 0.5, 1.0], size=30)  # force ties
            mask = set(rng.choice(30, size=5, replace=False).tolist())
            got = topn(scores, mask, 10).tolist()
            oracle = sorted(
                (i for i in range(30) if i not in mask),
                key=lambda i: (-scores[i], i),
            )[:10]
            assert got == oracle

    def test_bad_n(self):
        with pytest.raises(ConfigError):
            topn(np.array([1.0]), set(), 0)


class TestRecall:
    def test_two_of_three(self):
        ranked = np.array([7, 1, 9, 3, 8, 2, 11, 12, 13, 14])
        assert recall_at_n(ranked, {1, 3, 99}, 10) == pytest.approx(2 / 3)

    def test_all_hit(self):
        assert recall_at_n(np.array([4, 5, 6]), {4, 5}, 3) == 1.0

    def test_matches_set_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            ranked = rng.permutation(40)[:15]
            relevant = set(rng.choice(40, size=6, replace=False).tolist())
            n = int(rng.integers(1, 16))
            expected = len(set(ranked[:n].tolist()) & relevant) / len(relevant)
            assert recall_at_n(ranked, relevant, n) == expected

    def test_empty_relevant_rejected(self):
        with pytest.raises(ConfigError):
            recall_at_n(np.array([1]), set(), 1)


class TestNdcg:
    def test_rank_two_hit(self):
        value = ndcg_at_n(np.array([5, 3]), {3}, 2)
        assert value == pytest.approx(1.0 / math.log2(3), abs=1e-9)
        assert value == pytest.approx(0.63093, abs=1e-5)

    def test_perfect_ranking(self):
        assert ndcg_at_n(np.array([1, 2, 3]), {1, 2, 3}, 3) == pytest.approx(1.0)

    def test_matches_formula_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            ranked = rng.permutation(30)[:12]
            relevant = set(rng.choice(30, size=5, replace=False).tolist())
            n = int(rng.integers(1, 13))
            dcg = sum(
                1.0 / math.log2(r + 1)
                for r, item in enumerate(ranked[:n], start=1)
                if item in relevant
            )
            idcg = sum(1.0 / math.log2(r + 1) for r in range(1, min(n, len(relevant)) + 1))
            assert ndcg_at_n(ranked, relevant, n) == pytest.approx(dcg / idcg, abs=1e-12)


def _model(seed=0, num_users=20, num_items=15, num_edges=160):
    rng = np.random.default_rng(seed)
    data = random_dataset(rng, num_users, num_items, num_edges)
    split = split_dataset(data, seed=seed)
    adj = build_adjacency(split.train)
    emb = init_embeddings(num_users, num_items, 6, seed=seed)
    trace = forward(emb, adj, False, 0.0, 2)
    return split, trace


class TestEvaluate:
    def test_single_test_item_ranked_first(self):
        train = InteractionDataset(1, 4, np.array([[0, 0]]))
        split = DatasetSplit(
            train=train,
            val=np.empty((0, 2), dtype=np.int64),
            test=np.array([[0, 2]]),
            seed=0,
        )
        adj = build_adjacency(train)
        table = np.zeros((5, 2))
        table[0] = [1.0, 0.0]   # user
        table[3] = [5.0, 0.0]   # item 2: best unmasked score
        table[1] = [9.0, 0.0]   # item 0: masked by train
        emb = EmbeddingTable(table, 1, 4)
        trace = forward(emb, adj, False, 0.0, 1)
        trace.readout[:] = table
        report = evaluate(trace, split, "test", (10,))
        assert report.recall(10) == 1.0
        assert report.ndcg(10) == 1.0

    def test_equal_scores_follow_index_tiebreak(self):
        split, trace = _model(seed=3)
        trace.readout[:] = 1.0
        report = evaluate(trace, split, "val", (5,))
        # Oracle: with all-equal scores the ranking is the lowest-index
        # unmasked items, computed per user.
        truth = split.edges_by_user("val")
        total_recall = 0.0
        for u, items in truth.items():
            masked = set(split.train.user_positives[u].tolist())
            ranking = [i for i in range(split.train.num_items) if i not in masked][:5]
            total_recall += len(set(ranking) & set(items.tolist())) / len(items)
        assert report.recall(5) == pytest.approx(total_recall / len(truth), abs=1e-12)

    def test_matches_per_user_loop_oracle(self):
        split, trace = _model(seed=4)
        ns = (5, 10)
        report = evaluate(trace, split, "test", ns)
        truth = split.edges_by_user("test")
        val_truth = split.edges_by_user("val")
        items_block = trace.readout[split.train.num_users:]
        sums = {n: [0.0, 0.0] for n in ns}
        for u, items in truth.items():
            scores = np.array([float(trace.readout[u] @ items_block[i]) for i in range(15)])
            masked = set(split.train.user_positives[u].tolist())
            masked |= set(val_truth.get(u, np.empty(0, dtype=np.int64)).tolist())
            order = sorted(
                (i for i in range(15) if i not in masked), key=lambda i: (-scores[i], i)
            )
            relevant = set(items.tolist())
            for n in ns:
                hits = [r for r, i in enumerate(order[:n], start=1) if i in relevant]
                sums[n][0] += len(hits) / len(relevant)
                dcg = sum(1.0 / math.log2(r + 1) for r in hits)
                idcg = sum(
                    1.0 / math.log2(r + 1) for r in range(1, min(n, len(relevant)) + 1)
                )
                sums[n][1] += dcg / idcg
        for n in ns:
            assert report.recall(n) == pytest.approx(sums[n][0] / len(truth), abs=1e-12)
            assert report.ndcg(n) == pytest.approx(sums[n][1] / len(truth), abs=1e-12)

    def test_monotone_in_n(self):
        split, trace = _model(seed=5)
        report = evaluate(trace, split, "val", (1, 3, 5, 10))
        recalls = [report.recall(n) for n in (1, 3, 5, 10)]
        assert all(b >= a - 1e-12 for a, b in zip(recalls, recalls[1:]))

    def test_masking_excludes_train_items(self):
        split, trace = _model(seed=6)
        truth = split.edges_by_user("val")
        for u in truth:
            from intentcf import score_all, topn as _topn

            scores = score_all(trace, np.array([u]))[0]
            ranked = _topn(scores, split.train.user_positives[u], 10)
            assert not set(ranked.tolist()) & set(split.train.user_positives[u].tolist())

    def test_permutation_invariance(self):
        split, trace = _model(seed=7)
        base = evaluate(trace, split, "test", (5,))
        rng = np.random.default_rng(0)
        perm = rng.permutation(split.train.num_items)
        inv = np.argsort(perm)
        # Relabel items consistently across train/val/test and readout rows.
        nu = split.train.num_users

        def relabel(edges):
            out = edges.copy()
            out[:, 1] = perm[out[:, 1]]
            return out

        train2 = InteractionDataset(nu, split.train.num_items, relabel(split.train.edges))
        split2 = DatasetSplit(train2, relabel(split.val), relabel(split.test), split.seed)
        trace2_readout = trace.readout.copy()
        trace2_readout[nu:] = trace.readout[nu:][inv]
        trace.readout, saved = trace2_readout, trace.readout
        try:
            permuted = evaluate(trace, split2, "test", (5,))
        finally:
            trace.readout = saved
        assert permuted.recall(5) == pytest.approx(base.recall(5), abs=1e-12)
        assert permuted.ndcg(5) == pytest.approx(base.ndcg(5), abs=1e-12)

    def test_empty_phase_raises(self):
        train = InteractionDataset(1, 3, np.array([[0, 0]]))
        split = DatasetSplit(
            train=train,
            val=np.empty((0, 2), dtype=np.int64),
            test=np.empty((0, 2), dtype=np.int64),
            seed=0,
        )
        adj = build_adjacency(train)
        emb = init_embeddings(1, 3, 3, seed=0)
        trace = forward(emb, adj, False, 0.0, 1)
        with pytest.raises(EvalError):
            evaluate(trace, split, "val", (5,))

    def test_noisy_trace_rejected(self):
        split, _ = _model(seed=8)
        adj = build_adjacency(split.train)
        emb = init_embeddings(split.train.num_users, split.train.num_items, 6, seed=0)
        trace = forward(emb, adj, True, 0.01, 2, rng=np.random.default_rng(0))
        with pytest.raises(ConfigError):
            evaluate(trace, split, "val", (5,))
