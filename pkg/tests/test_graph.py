import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pprhub.errors import GraphFormatError
from pprhub.graph import (DANGLING_POLICY, DirectedMultigraph, HubPartition, build_from_pairs,
                          load_binary, load_edge_list, save_binary, strip_dangling,
                          write_edge_list, zero_error_set)

from conftest import dense_transition

edge_lists = st.integers(1, 12).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
                                              max_size=40)))


def _write(tmp_path, text, name="g.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- edge-list ingestion ---------------------------------------------------------

def test_load_two_cycle(tmp_path):
    # [TRIVIAL] 2-cycle
    g, raw = load_edge_list(_write(tmp_path, "0 1\n1 0"))
    assert g.node_count == 2 and g.edge_count == 2
    assert g.out_degrees.tolist() == [1, 1] and g.in_degrees.tolist() == [1, 1]


def test_load_comment_and_self_loop(tmp_path):
    # [TRIVIAL] comment skipped, raw id 5 densified to 0
    g, raw = load_edge_list(_write(tmp_path, "# c\n5 5"))
    assert g.node_count == 1
    assert g.out_degrees.tolist() == [1] and g.in_degrees.tolist() == [1]
    assert raw.tolist() == [5]
    assert g.raw_ids.tolist() == [5]


def test_load_multi_edge(tmp_path):
    # [DERIVED] hand count of duplicate lines
    g, _ = load_edge_list(_write(tmp_path, "0 1\n0 1"))
    assert g.out_degrees.tolist() == [2, 0]
    assert g.in_degrees.tolist() == [0, 2]
    assert g.out_targets.tolist() == [1, 1]


def test_load_tabs_and_blank_lines(tmp_path):
    g, raw = load_edge_list(_write(tmp_path, "10\t30\n\n30 20\n"))
    assert raw.tolist() == [10, 20, 30]
    assert g.edges().tolist() == [[0, 2], [2, 1]]


@pytest.mark.parametrize("text,lineno", [("0 1\n1 x\n", 2), ("# h\n0 1\n1 2 3\n", 3), ("0\n", 1)])
def test_load_malformed_reports_line(tmp_path, text, lineno):
    with pytest.raises(GraphFormatError, match=f":{lineno}:"):
        load_edge_list(_write(tmp_path, text))


def test_load_empty_and_missing(tmp_path):
    with pytest.raises(GraphFormatError, match="no edges"):
        load_edge_list(_write(tmp_path, "# only comments\n"))
    with pytest.raises(FileNotFoundError):
        load_edge_list(tmp_path / "absent.txt")
    with pytest.raises(ValueError):
        load_edge_list(_write(tmp_path, "0 1"), format="csv")


# -- construction ------------------------------------------------------------------

def test_build_isolated():
    # [TRIVIAL]
    g = build_from_pairs([], 3)
    assert g.node_count == 3 and g.edge_count == 0
    assert g.dangling.all()


def test_build_self_loop():
    # [TRIVIAL]
    g = build_from_pairs([(0, 0)], 1)
    assert g.out_targets.tolist() == [0]
    assert g.in_degrees.tolist() == [1]


def test_build_three_cycle():
    # [TRIVIAL]
    g = build_from_pairs([(0, 1), (1, 2), (2, 0)], 3)
    assert g.out_degrees.tolist() == [1, 1, 1] and g.in_degrees.tolist() == [1, 1, 1]


def test_build_out_of_range():
    with pytest.raises(ValueError, match="outside"):
        build_from_pairs([(0, 3)], 3)
    with pytest.raises(ValueError):
        build_from_pairs([(-1, 0)], 3)


def test_constructor_checks_invariants():
    with pytest.raises(ValueError):
        DirectedMultigraph(2, [0, 1, 1], [1], [0, 0], [1, 0])
    with pytest.raises(ValueError):
        DirectedMultigraph(2, [0, 2, 1], [1], [0, 1], [2, -1])


def test_arrays_are_read_only():
    edges = np.array([[0, 1], [1, 0]])
    g = build_from_pairs(edges, 2)
    with pytest.raises(ValueError):
        g.out_targets[0] = 0
    edges[0, 0] = 1  # caller's array stays writable and unshared
    assert g.edges().tolist() == [[0, 1], [1, 0]]


@given(edge_lists)
def test_round_trip_and_degree_sums(case):
    n, edges = case
    g = build_from_pairs(edges, n)
    assert sorted(map(tuple, g.edges().tolist())) == sorted(edges)
    assert g.in_degrees.sum() == g.out_degrees.sum() == g.edge_count == len(edges)
    assert np.array_equal(np.diff(g.out_offsets), g.out_degrees)
    for v in range(n):
        nb = g.out_neighbors(v)
        assert np.all(np.diff(nb) >= 0)


@given(edge_lists)
def test_transition_matches_dense(case):
    n, edges = case
    g = build_from_pairs(edges, n)
    P = g.transition.toarray()
    np.testing.assert_allclose(P, dense_transition(g), atol=1e-15)
    np.testing.assert_allclose(P.sum(axis=1), 1.0)
    np.testing.assert_allclose(g.transition_t.toarray(), P.T)


def test_masked_transition_zeroes_hub_rows():
    g = build_from_pairs([(0, 1), (1, 2), (2, 0), (2, 2)], 3)
    hubs = HubPartition.from_hubs([1], 3)
    Pt, PtT = g.masked_ops(hubs)
    P = dense_transition(g)
    P[1] = 0.0
    np.testing.assert_allclose(Pt.toarray(), P)
    np.testing.assert_allclose(PtT.toarray(), P.T)
    assert g.masked_ops(HubPartition.from_hubs([1], 3))[0] is Pt  # cached by content


# -- hub partition and zero-error set ------------------------------------------------

def test_hub_partition_validation():
    part = HubPartition.from_hubs([2, 0], 4)
    assert part.hub_list.tolist() == [0, 2]
    assert part.non_hubs.tolist() == [1, 3]
    assert part.is_hub(0) and not part.is_hub(1)
    with pytest.raises(ValueError):
        HubPartition.from_hubs([1, 1], 3)
    with pytest.raises(ValueError):
        HubPartition.from_hubs([3], 3)
    with pytest.raises(ValueError):
        HubPartition(np.array([True, False]), np.array([0]))
    assert HubPartition.from_indicator([1, 0, 1]).hub_list.tolist() == [1]
    assert HubPartition.empty(3).hub_count == 0


def test_zero_error_star():
    # [TRIVIAL] c=0 points at hubs 1 and 2
    g = build_from_pairs([(0, 1), (0, 2), (1, 1), (2, 2)], 3)
    assert zero_error_set(g, HubPartition.from_hubs([1, 2], 3)).tolist() == [0]


def test_zero_error_cycle_without_hubs():
    # [TRIVIAL]
    g = build_from_pairs([(0, 1), (1, 2), (2, 0)], 3)
    assert zero_error_set(g, HubPartition.empty(3)).size == 0


def test_zero_error_dangling_included():
    # [DERIVED] direct scan: 0 escapes to non-hub 2; 2 has no out-edges
    g = build_from_pairs([(0, 1), (0, 2)], 3)
    assert zero_error_set(g, HubPartition.from_hubs([1], 3)).tolist() == [2]


@given(edge_lists, st.randoms(use_true_random=False))
def test_zero_error_invariant_under_edge_order(case, rnd):
    n, edges = case
    hubs = HubPartition.from_hubs(rnd.sample(range(n), rnd.randint(0, n)), n)
    shuffled = list(edges)
    rnd.shuffle(shuffled)
    a = zero_error_set(build_from_pairs(edges, n), hubs)
    b = zero_error_set(build_from_pairs(shuffled, n), hubs)
    assert a.tolist() == b.tolist()
    # oracle: direct definition
    expect = [v for v in range(n) if not hubs.is_hub(v)
              and all(hubs.is_hub(w) for u, w in edges if u == v)]
    assert a.tolist() == expect


# -- dangling handling and persistence -------------------------------------------------

def test_dangling_policy_flag():
    assert DANGLING_POLICY == "self_loop"
    g = build_from_pairs([(0, 1)], 2)
    assert g.transition.toarray().tolist() == [[0.0, 1.0], [0.0, 1.0]]


def test_strip_dangling_iterates():
    # 3 -> 2 -> 1 -> 0 (dangling) collapses completely; 4 <-> 5 survives
    g = build_from_pairs([(3, 2), (2, 1), (1, 0), (4, 5), (5, 4), (5, 0)], 6)
    sub, kept = strip_dangling(g)
    assert kept.tolist() == [4, 5]
    assert sub.edges().tolist() == [[0, 1], [1, 0]]
    assert sub.raw_ids.tolist() == [4, 5]


@settings(max_examples=25)
@given(edge_lists, st.booleans())
def test_binary_round_trip(tmp_path_factory, case, with_raw):
    n, edges = case
    raw = np.arange(n) * 7 + 3 if with_raw else None
    g = build_from_pairs(edges, n, raw_ids=raw)
    path = tmp_path_factory.mktemp("bin") / "g.bin"
    save_binary(g, path)
    h = load_binary(path)
    for name in ("out_offsets", "out_targets", "in_degrees", "out_degrees"):
        assert getattr(h, name).tobytes() == getattr(g, name).tobytes()
    if with_raw:
        assert h.raw_ids.tolist() == raw.tolist()
    else:
        assert h.raw_ids is None


def test_binary_rejects_garbage(tmp_path):
    p = _write(tmp_path, "not a graph at all, definitely", "x.bin")
    with pytest.raises(GraphFormatError):
        load_binary(p)
    g = build_from_pairs([(0, 1)], 2)
    save_binary(g, tmp_path / "g.bin")
    data = (tmp_path / "g.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(data[:-8])
    with pytest.raises(GraphFormatError, match="size"):
        load_binary(tmp_path / "t.bin")


def test_edge_list_text_round_trip(tmp_path):
    g, _ = load_edge_list(_write(tmp_path, "7 9\n9 7\n9 9\n"))
    write_edge_list(g, tmp_path / "out.tsv", ["hello"])
    h, raw = load_edge_list(tmp_path / "out.tsv")
    assert raw.tolist() == [7, 9]
    assert h.edges().tolist() == g.edges().tolist()
