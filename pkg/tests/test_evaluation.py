import math

import numpy as np
import pytest

from conftest import unit_rows
from mcrn.clustering import ClusterLabeling, Domain, labelled_dataset
from mcrn.evaluation import RetrievalProtocol, average_precision, cluster_purity, domain_distance, map_cmc


def brute_map_cmc(qf, qids, gf, gids, max_rank):
    aps, firsts = [], []
    for q, qid in zip(qf, qids):
        ranking = sorted(range(len(gf)), key=lambda j: (-float(np.dot(q, gf[j])), j))
        rel = [gids[j] == qid for j in ranking]
        if not any(rel):
            continue
        hits, precisions = 0, []
        for pos, r in enumerate(rel, 1):
            if r:
                hits += 1
                precisions.append(hits / pos)
        aps.append(math.fsum(precisions) / len(precisions))
        firsts.append(rel.index(True))
    cmc = np.array([sum(f < r for f in firsts) / len(firsts) for r in range(1, max_rank + 1)])
    return math.fsum(aps) / len(aps), cmc


def test_ap_five_sixths():
    assert average_precision(np.array([1, 0, 1, 0])) == pytest.approx(5 / 6, abs=1e-15)


def test_ap_edge_cases():
    assert average_precision(np.array([1, 1, 0])) == 1.0
    assert average_precision(np.array([0, 0, 0])) == 0.0
    assert average_precision(np.array([0, 0, 1])) == pytest.approx(1 / 3)


def test_matches_brute_force(rng):
    for _ in range(200):
        n_g = int(rng.integers(2, 51))
        n_q = int(rng.integers(1, 8))
        dim = int(rng.integers(2, 6))
        gf, qf = unit_rows(rng, n_g, dim), unit_rows(rng, n_q, dim)
        if rng.random() < 0.3:  # force ties
            gf[1] = gf[0]
        gids = rng.integers(0, 4, size=n_g)
        qids = rng.choice(gids, size=n_q)
        m, cmc = map_cmc(RetrievalProtocol(qf, qids, gf, gids), max_rank=10)
        bm, bcmc = brute_map_cmc(qf, qids, gf, gids, 10)
        assert m == bm
        np.testing.assert_allclose(cmc, bcmc, atol=1e-15)


def test_hand_instance():
    # query (1,0); gallery sims 1.0, 0.8, 0.6, 0.0 with relevance 1,0,1,0
    gf = np.array([[1.0, 0.0], [0.8, 0.6], [0.6, 0.8], [0.0, 1.0]])
    m, cmc = map_cmc(RetrievalProtocol(np.array([[1.0, 0.0]]), [7], gf, [7, 1, 7, 2]), max_rank=3)
    assert m == pytest.approx(5 / 6)
    np.testing.assert_array_equal(cmc, [1.0, 1.0, 1.0])


def test_same_key_is_excluded():
    gf = np.array([[1.0, 0.0], [0.0, 1.0]])
    proto = RetrievalProtocol(np.array([[1.0, 0.0]]), [0], gf, [0, 0], query_keys=np.array([5]), gallery_keys=np.array([5, 6]))
    m, cmc = map_cmc(proto, max_rank=1)
    assert m == 1.0 and cmc[0] == 1.0


def test_unmatched_queries_skipped(caplog):
    gf = np.array([[1.0, 0.0], [0.0, 1.0]])
    m, _ = map_cmc(RetrievalProtocol(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 9], gf, [0, 1]), max_rank=2)
    assert m == 1.0 and "skipped" in caplog.text
    with pytest.raises(ValueError):
        map_cmc(RetrievalProtocol(np.array([[1.0, 0.0]]), [9], gf, [0, 1]))


def test_cmc_is_monotone(rng):
    gf, qf = unit_rows(rng, 30, 4), unit_rows(rng, 10, 4)
    _, cmc = map_cmc(RetrievalProtocol(qf, rng.integers(0, 5, 10), gf, rng.integers(0, 5, 30)), max_rank=10)
    assert np.all(np.diff(cmc) >= 0) and cmc[-1] <= 1.0


def test_domain_distance():
    a = np.array([[1.0, 0.0], [1.0, 0.0]])
    assert domain_distance(a, a) == 0.0
    assert domain_distance(a, np.array([[0.0, 1.0]])) == pytest.approx(1.0)
    assert domain_distance(a, -a) == pytest.approx(2.0)


def test_cluster_purity():
    labels = np.array([0, 0, 0, 1, 1, -1])
    ids = np.array([3, 3, 4, 5, 5, 9])
    assert cluster_purity(labels, ids) == pytest.approx(4 / 5)
    assert cluster_purity(ClusterLabeling(labels, 2), ids) == pytest.approx(4 / 5)
    ds = labelled_dataset(np.array([0, 0, 1]), Domain.TARGET, identities=np.array([1, 1, 1]))
    assert cluster_purity(ds, None) == 1.0
