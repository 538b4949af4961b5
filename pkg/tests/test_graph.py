"""Directed-graph learning layer and out-degree influence analysis."""
import numpy as np
import pytest

from marketgraph import (
    AdjacencyMatrix, DataError, DomainError, G7_COUNTRIES, GraphLearnParams,
    MINT_COUNTRIES, NodeEmbeddings, Rng, ShapeError, Tape, Tensor,
    init_graph_learn_params, init_node_embeddings, learn_adjacency, out_degree,
    rank_influence, read_adjacency_csv, snapshot_adjacency, sum_,
    top_k_row_mask, write_adjacency_csv,
)

FIXTURE_ONE_HOP = [1, 6, 4, 3, 5, 7, 5, 7, 5, 3, 2]
FIXTURE_TWO_HOP = {"US": 39, "Canada": 34, "Indonesia": 31, "Türkiye": 25}


@pytest.fixture
def fixture_adj(fixtures_dir):
    return read_adjacency_csv(fixtures_dir / "g7_mint_adjacency.csv")


# -- learn_adjacency --------------------------------------------------------------

def test_two_node_hand_evaluation():
    # E1=[1,0]^T, E2=[0,1]^T, both mixers the 1x1 identity, alpha=1:
    # M1=[tanh 1, 0]^T, M2=[0, tanh 1]^T, score=M1 M2^T - M2 M1^T has
    # tanh(1)^2 above the diagonal, so A = [[0, tanh(tanh(1)^2)], [0, 0]].
    emb = NodeEmbeddings(e1=Tensor([[1.0], [0.0]]), e2=Tensor([[0.0], [1.0]]))
    params = GraphLearnParams(theta1=Tensor([[1.0]]), theta2=Tensor([[1.0]]),
                              alpha=1.0, k=1)
    a = learn_adjacency(emb, params).data
    expected = np.tanh(np.tanh(1.0) ** 2)
    np.testing.assert_allclose(a, [[0.0, expected], [0.0, 0.0]], atol=1e-15)
    assert abs(expected - 0.5227) < 5e-4


def test_identical_embedding_roles_give_empty_graph():
    rng = Rng(3)
    e = Tensor(rng.normal((5, 4)))
    emb = NodeEmbeddings(e1=e, e2=Tensor(e.data.copy()))
    th = Tensor(rng.normal((4, 4)))
    params = GraphLearnParams(theta1=th, theta2=Tensor(th.data.copy()), alpha=2.0, k=3)
    np.testing.assert_allclose(learn_adjacency(emb, params).data, np.zeros((5, 5)))


def test_entries_in_unit_interval_and_zero_diagonal():
    # Mathematically the range is [0, 1); float64 tanh can round a deeply
    # saturated score to exactly 1.0, so the hard bound is <= 1.
    rng = Rng(11)
    emb = init_node_embeddings(8, 5, rng, scale=2.0)
    params = init_graph_learn_params(5, rng, alpha=3.0, k=4)
    a = learn_adjacency(emb, params).data
    assert np.all(a >= 0.0) and np.all(a <= 1.0)
    np.testing.assert_array_equal(np.diagonal(a), np.zeros(8))
    mild = learn_adjacency(init_node_embeddings(6, 3, Rng(0), scale=0.3),
                           GraphLearnParams(theta1=Tensor(np.eye(3) * 0.3),
                                            theta2=Tensor(np.eye(3) * 0.2),
                                            alpha=1.0, k=3)).data
    assert np.all(mild >= 0.0) and np.all(mild < 1.0)


def test_at_most_k_nonzeros_per_row():
    rng = Rng(2)
    emb = init_node_embeddings(9, 6, rng)
    for k in (1, 3, 8):
        params = init_graph_learn_params(6, rng.split(), k=k)
        a = learn_adjacency(emb, params).data
        assert np.all((a > 0).sum(axis=1) <= k)


def test_role_swap_transposes_dense_scores():
    # With k = N-1, sparsification keeps everything off-diagonal, so swapping
    # the two embedding/mixer roles must exactly transpose the matrix.
    rng = Rng(17)
    e1, e2 = Tensor(rng.normal((6, 4))), Tensor(rng.normal((6, 4)))
    t1, t2 = Tensor(rng.normal((4, 4))), Tensor(rng.normal((4, 4)))
    fwd = learn_adjacency(NodeEmbeddings(e1=e1, e2=e2),
                          GraphLearnParams(theta1=t1, theta2=t2, k=5)).data
    swp = learn_adjacency(NodeEmbeddings(e1=e2, e2=e1),
                          GraphLearnParams(theta1=t2, theta2=t1, k=5)).data
    np.testing.assert_allclose(swp, fwd.T, atol=1e-12)


def test_one_direction_per_pair():
    rng = Rng(23)
    emb = init_node_embeddings(7, 4, rng)
    params = init_graph_learn_params(4, rng.split(), k=6)
    a = learn_adjacency(emb, params).data
    assert np.all((a > 0) & (a.T > 0) == False)  # noqa: E712 - elementwise


def test_k_out_of_range_rejected():
    rng = Rng(1)
    emb = init_node_embeddings(4, 3, rng)
    params = init_graph_learn_params(3, rng.split(), k=4)
    with pytest.raises(DomainError):
        learn_adjacency(emb, params)
    with pytest.raises(DomainError):
        GraphLearnParams(theta1=Tensor(np.eye(3)), theta2=Tensor(np.eye(3)), k=0)
    with pytest.raises(DomainError):
        GraphLearnParams(theta1=Tensor(np.eye(3)), theta2=Tensor(np.eye(3)), alpha=0.0)


def test_dim_mismatch_rejected():
    rng = Rng(1)
    emb = init_node_embeddings(4, 3, rng)
    params = init_graph_learn_params(5, rng.split(), k=2)
    with pytest.raises(ShapeError):
        learn_adjacency(emb, params)


def test_gradients_reach_embeddings_through_mask():
    rng = Rng(9)
    emb = init_node_embeddings(5, 3, rng)
    params = init_graph_learn_params(3, rng.split(), k=2)
    with Tape() as tape:
        loss = sum_(learn_adjacency(emb, params))
    tape.backward(loss)
    grads = [p.grad for p in (*emb.parameters(), *params.parameters())]
    assert all(g is not None for g in grads)
    assert any(np.any(g != 0) for g in grads)


def test_top_k_row_mask_ties_and_saturation():
    vals = np.array([[1.0, 1.0, 0.5], [0.2, 0.9, 0.9]])
    mask = top_k_row_mask(vals, 1)
    np.testing.assert_array_equal(mask, [[1, 0, 0], [0, 1, 0]])
    np.testing.assert_array_equal(top_k_row_mask(vals, 3), np.ones((2, 3)))
    np.testing.assert_array_equal(top_k_row_mask(vals, 7), np.ones((2, 3)))


# -- AdjacencyMatrix invariants ------------------------------------------------------

def test_adjacency_validation():
    with pytest.raises(DataError):
        AdjacencyMatrix(labels=("a", "b"), values=np.array([[0.0, -1.0], [0.0, 0.0]]))
    with pytest.raises(DataError):
        AdjacencyMatrix(labels=("a", "b"), values=np.array([[0.5, 1.0], [0.0, 0.0]]))
    with pytest.raises(DataError):
        AdjacencyMatrix(labels=("a", "a"), values=np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        AdjacencyMatrix(labels=("a", "b"), values=np.zeros((2, 3)))


def test_snapshot_default_labels():
    rng = Rng(4)
    emb = init_node_embeddings(3, 2, rng)
    params = init_graph_learn_params(2, rng.split(), k=1)
    adj = snapshot_adjacency(emb, params)
    assert adj.labels == ("series_0", "series_1", "series_2")
    assert adj.num_nodes == 3


# -- out-degree oracles ---------------------------------------------------------------

def test_zero_matrix_degrees():
    adj = AdjacencyMatrix(labels=("a", "b", "c"), values=np.zeros((3, 3)))
    np.testing.assert_array_equal(out_degree(adj, 1), [0, 0, 0])
    np.testing.assert_array_equal(out_degree(adj, 2), [0, 0, 0])


def test_fixture_one_hop_degrees(fixture_adj):
    np.testing.assert_array_equal(out_degree(fixture_adj, 1), FIXTURE_ONE_HOP)


def test_fixture_two_hop_degrees(fixture_adj):
    by = dict(zip(fixture_adj.labels, out_degree(fixture_adj, 2)))
    for label, expected in FIXTURE_TWO_HOP.items():
        assert by[label] == expected


def test_one_hop_sum_equals_edge_count(fixture_adj):
    edges = int((fixture_adj.values > 0).sum())
    assert int(out_degree(fixture_adj, 1).sum()) == edges


def test_degree_invariant_under_rescaling(fixture_adj):
    scaled = AdjacencyMatrix(labels=fixture_adj.labels, values=fixture_adj.values * 17.0)
    np.testing.assert_array_equal(out_degree(scaled, 1), out_degree(fixture_adj, 1))
    np.testing.assert_array_equal(out_degree(scaled, 2), out_degree(fixture_adj, 2))


def test_hops_validated(fixture_adj):
    with pytest.raises(DomainError):
        out_degree(fixture_adj, 3)


# -- influence ranking -----------------------------------------------------------------

def test_g7_ranking_two_hop(fixture_adj):
    ranking = rank_influence(fixture_adj, hops=2, group=G7_COUNTRIES)
    assert ranking[0] == ("US", 39)
    assert ranking[1] == ("Canada", 34)


def test_mint_ranking_one_hop(fixture_adj):
    ranking = rank_influence(fixture_adj, hops=1, group=MINT_COUNTRIES)
    assert ranking[0] == ("Indonesia", 7)
    assert ranking[1] == ("Türkiye", 6)


def test_ties_break_lexicographically(fixture_adj):
    ranking = rank_influence(fixture_adj, hops=1)
    fives = [lbl for lbl, d in ranking if d == 5]
    assert fives == sorted(fives)


def test_single_node_group(fixture_adj):
    assert rank_influence(fixture_adj, hops=1, group=["Italy"]) == [("Italy", 1)]


def test_unknown_label_rejected(fixture_adj):
    with pytest.raises(DataError):
        rank_influence(fixture_adj, group=["Atlantis"])


# -- CSV round-trip ----------------------------------------------------------------------

def test_csv_round_trip(tmp_path, fixture_adj):
    path = tmp_path / "adj.csv"
    write_adjacency_csv(fixture_adj, path)
    back = read_adjacency_csv(path)
    assert back.labels == fixture_adj.labels
    np.testing.assert_array_equal(back.values, fixture_adj.values)


def test_csv_label_mismatch_detected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("node,a,b\nb,0,1\na,0,0\n", encoding="utf-8")
    with pytest.raises(DataError):
        read_adjacency_csv(path)


def test_csv_wrong_row_count(tmp_path):
    path = tmp_path / "short.csv"
    path.write_text("node,a,b\na,0,1\n", encoding="utf-8")
    with pytest.raises(DataError):
        read_adjacency_csv(path)
