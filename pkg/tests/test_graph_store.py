import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustgat import binfmt
from robustgat.graph_store import (
    Dataset,
    ParseError,
    build_csr,
    dataset_from_bytes,
    dataset_to_bytes,
    load_dataset,
    load_planetoid,
    make_split,
    row_normalize,
    save_dataset,
)


def test_load_minimal(tiny_planetoid):
    ds = load_planetoid(*tiny_planetoid)
    assert (ds.n_nodes, ds.n_features, ds.n_classes) == (3, 2, 2)
    assert ds.edges.tolist() == [[0, 1]]
    assert ds.label_names == ["Theory", "AI"]
    assert ds.labels.tolist() == [0, 1, 0]
    assert ds.features.tolist() == [[1, 0], [0, 1], [1, 1]]
    assert ds.skipped_cites == 0


def test_unknown_cite_is_skipped(tiny_planetoid, tmp_path):
    content, _ = tiny_planetoid
    cites = tmp_path / "bad.cites"
    cites.write_text("p1\tp2\nghost\tp1\n")
    ds = load_planetoid(content, cites)
    assert ds.skipped_cites == 1
    assert ds.edges.tolist() == [[0, 1]]


def test_duplicate_and_reversed_cites_collapse(tiny_planetoid, tmp_path):
    content, _ = tiny_planetoid
    cites = tmp_path / "dup.cites"
    cites.write_text("p1\tp2\np2\tp1\np3\tp3\n")
    assert load_planetoid(content, cites).edges.tolist() == [[0, 1]]


@pytest.mark.parametrize(
    "text, lineno",
    [
        ("p1\t1\t0\tA\np2\t1\tB\n", 2),        # wrong column count
        ("p1\t1\t0\tA\np2\t1\t2\tB\n", 2),     # non-binary token
        ("p1\t0.5\t0\tA\n", 1),
    ],
)
def test_parse_errors_carry_line_number(tmp_path, text, lineno):
    content = tmp_path / "x.content"
    cites = tmp_path / "x.cites"
    content.write_text(text)
    cites.write_text("")
    with pytest.raises(ParseError) as err:
        load_planetoid(content, cites)
    assert err.value.lineno == lineno
    assert f":{lineno}:" in str(err.value)


def test_empty_content_is_an_error(tmp_path):
    (tmp_path / "e.content").write_text("")
    (tmp_path / "e.cites").write_text("")
    with pytest.raises(ValueError, match="empty"):
        load_planetoid(tmp_path / "e.content", tmp_path / "e.cites")


def test_build_csr_self_loops_only():
    assert build_csr([], 3).rows() == {0: [0], 1: [1], 2: [2]}


def test_build_csr_dedup_and_symmetry():
    assert build_csr([(0, 1), (1, 0), (0, 1)], 2).rows() == {0: [0, 1], 1: [0, 1]}


def test_build_csr_path_layout():
    adj = build_csr([(0, 1), (1, 2)], 3)
    assert adj.row_ptr.tolist() == [0, 2, 5, 7]
    assert adj.col_idx.tolist() == [0, 1, 0, 1, 2, 1, 2]


def test_build_csr_rejects_out_of_range():
    with pytest.raises(ValueError):
        build_csr([(0, 3)], 3)


edge_lists = st.integers(1, 12).flatmap(
    lambda n: st.tuples(
        st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=40)
    )
)


@given(edge_lists)
@settings(max_examples=200, deadline=None)
def test_csr_invariants(case):
    n, edges = case
    adj = build_csr(edges, n)
    rows = adj.rows()
    for i, nb in rows.items():
        assert i in nb
        assert nb == sorted(set(nb))
        for j in nb:
            assert i in rows[j]
    assert (adj.degrees >= 1).all()
    # idempotent when rebuilt from its own edge list
    assert build_csr(adj.undirected_edges(), n) == adj


def test_row_normalize_examples():
    assert np.allclose(row_normalize([[1, 1, 2]]), [[0.25, 0.25, 0.5]])
    assert row_normalize([[0, 0]]).tolist() == [[0, 0]]
    assert row_normalize([[2, 0], [0, 5]]).tolist() == [[1, 0], [0, 1]]


def _six_node():
    return Dataset(
        features=np.eye(6),
        labels=[0, 0, 0, 1, 1, 1],
        node_ids=[f"n{i}" for i in range(6)],
        edges=[(0, 1)],
    )


def test_split_sizes_and_disjoint():
    sp = make_split(_six_node(), per_class_train=1, n_val=1, n_test=1, seed=3)
    assert sp.sizes() == (2, 1, 1)
    parts = [set(sp.train_idx), set(sp.val_idx), set(sp.test_idx)]
    assert not (parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2])
    assert sorted(_six_node().labels[sp.train_idx]) == [0, 1]


def test_split_determinism_and_seed_variation():
    ds = _six_node()
    assert make_split(ds, 1, 2, 2, seed=7) == make_split(ds, 1, 2, 2, seed=7)
    sizes = {make_split(ds, 1, 2, 2, seed=s).sizes() for s in range(20)}
    assert sizes == {(2, 2, 2)}
    members = {tuple(make_split(ds, 1, 2, 2, seed=s).train_idx) for s in range(20)}
    assert len(members) > 1


def test_split_errors():
    ds = _six_node()
    with pytest.raises(ValueError, match="class '1'"):
        make_split(Dataset(np.eye(4), [0, 0, 0, 1], list("abcd"), []), 2, 0, 0)
    with pytest.raises(ValueError):
        make_split(ds, 1, 3, 3)


def test_standard_protocol_train_size():
    from robustgat.synthetic import planted_citation_graph

    ds = planted_citation_graph(n_edges=100)
    sp = make_split(ds, 20, 500, 1000, seed=0)
    assert sp.sizes() == (140, 500, 1000)
    assert all((ds.labels[sp.train_idx] == c).sum() == 20 for c in range(7))


def test_cache_roundtrip(tiny_planetoid, tmp_path):
    ds = load_planetoid(*tiny_planetoid)
    path = tmp_path / "ds.bin"
    save_dataset(path, ds, tag="tiny")
    back, adj, tag = load_dataset(path)
    assert back == ds and tag == "tiny"
    assert adj == build_csr(ds.edges, ds.n_nodes)
    assert dataset_to_bytes(back, "tiny") == path.read_bytes()


def test_cache_rejects_other_version(tiny_planetoid):
    data = bytearray(dataset_to_bytes(load_planetoid(*tiny_planetoid)))
    data[4:8] = (binfmt.VERSION + 1).to_bytes(4, "little")
    with pytest.raises(binfmt.FormatError, match="version"):
        dataset_from_bytes(bytes(data))
