"""Hierarchy construction, summing matrix, aggregation, file round-trips."""

import numpy as np
import pytest

from htsdyn.hierarchy import (
    HierarchyError,
    aggregate_panel,
    aggregate_price,
    build_hierarchy,
    load_hierarchy_csv,
    load_panel_csv,
    panel_from_bottom,
    save_hierarchy_csv,
    save_panel_csv,
    summing_matrix,
)
from conftest import FIG1_EDGES


class TestBuildHierarchy:
    def test_fig1_shape(self):
        h = build_hierarchy(FIG1_EDGES)
        assert h.n_nodes == 15
        assert h.level_count == 3
        assert len(h.bottom_ids) == 12
        assert h.top_id == "T"
        assert h.nodes_at_level(1) == ["R1", "R2"]

    def test_minimal_chain(self):
        h = build_hierarchy([("T", "A")])
        assert h.n_nodes == 2
        assert h.level_count == 2
        assert h.bottom_ids == ["A"]

    def test_cycle_detected(self):
        with pytest.raises(HierarchyError, match="cycle|multiple parents"):
            build_hierarchy([("T", "A"), ("T", "B"), ("A", "T")])

    def test_pure_cycle(self):
        with pytest.raises(HierarchyError, match="cycle|root"):
            build_hierarchy([("A", "B"), ("B", "A")])

    def test_multiple_roots(self):
        with pytest.raises(HierarchyError, match="multiple roots"):
            build_hierarchy([("T", "A"), ("U", "B")])

    def test_ragged_leaves_rejected(self):
        with pytest.raises(HierarchyError, match="ragged"):
            build_hierarchy([("T", "A"), ("T", "B"), ("A", "C")])

    def test_duplicate_edge(self):
        with pytest.raises(HierarchyError, match="duplicate"):
            build_hierarchy([("T", "A"), ("T", "A")])

    def test_empty_edges(self):
        with pytest.raises(HierarchyError):
            build_hierarchy([])

    def test_ordering_level_major_then_lexicographic(self):
        h = build_hierarchy([("T", "B"), ("T", "A")])
        assert h.node_ids == ["T", "A", "B"]

    def test_ordering_stable_across_runs(self):
        edges = list(reversed(FIG1_EDGES))
        ids1 = build_hierarchy(edges).node_ids
        ids2 = build_hierarchy(FIG1_EDGES).node_ids
        assert ids1 == ids2


class TestSummingMatrix:
    def test_two_leaf(self, hier3):
        S = summing_matrix(hier3)
        assert np.array_equal(S, np.array([[1.0, 1.0], [1.0, 0.0], [0.0, 1.0]]))

    def test_fig1(self, hier15):
        S = summing_matrix(hier15)
        assert S.shape == (15, 12)
        assert np.array_equal(S[0], np.ones(12))
        # each retailer row covers its six DCs
        assert S[1].sum() == 6
        assert S[2].sum() == 6
        assert np.array_equal(S[-12:, :], np.eye(12))

    def test_seven_node_column_sums(self, hier7):
        # hand enumeration: every bottom node lies under itself, one mid, the top
        S = summing_matrix(hier7)
        assert S.shape == (7, 4)
        assert np.array_equal(S.sum(axis=0), np.full(4, 3.0))
        expected = np.array(
            [
                [1, 1, 1, 1],   # T
                [1, 1, 0, 0],   # M1
                [0, 0, 1, 1],   # M2
                [1, 0, 0, 0],   # A
                [0, 1, 0, 0],   # B
                [0, 0, 1, 0],   # C
                [0, 0, 0, 1],   # D
            ],
            dtype=float,
        )
        assert np.array_equal(S, expected)

    def test_aggregate_rows_are_child_sums(self, hier15):
        S = summing_matrix(hier15)
        for node in hier15.node_ids:
            kids = hier15.children_of(node)
            if not kids:
                continue
            row = S[hier15.index_of(node)]
            child_sum = sum(S[hier15.index_of(c)] for c in kids)
            assert np.array_equal(row, child_sum)


class TestAggregatePanel:
    def test_direct_product(self, hier3):
        S = summing_matrix(hier3)
        out = aggregate_panel(np.array([[1.0], [2.0]]), S)
        assert np.array_equal(out, np.array([[3.0], [1.0], [2.0]]))

    def test_fig1_all_ones(self, hier15):
        S = summing_matrix(hier15)
        out = aggregate_panel(np.ones((12, 5)), S)
        assert np.array_equal(out[0], np.full(5, 12.0))

    def test_zero_panel(self, hier15):
        S = summing_matrix(hier15)
        assert not aggregate_panel(np.zeros((12, 3)), S).any()

    def test_dimension_mismatch(self, hier3):
        S = summing_matrix(hier3)
        with pytest.raises(ValueError, match="mismatch"):
            aggregate_panel(np.ones((3, 4)), S)

    def test_coherence_random(self, hier15, make_panel):
        rng = np.random.default_rng(0)
        panel = make_panel(hier15, 40, rng)
        panel.validate(hier15)  # raises on incoherence


class TestAggregatePrice:
    def test_sales_weighted(self, hier3):
        sales = np.array([[1.0], [3.0]])
        price = np.array([[10.0], [20.0]])
        out = aggregate_price(sales, price, hier3)
        assert out[0, 0] == pytest.approx((1 * 10 + 3 * 20) / 4)

    def test_zero_sales_falls_back_to_mean(self, hier3):
        sales = np.zeros((2, 1))
        price = np.array([[10.0], [20.0]])
        out = aggregate_price(sales, price, hier3)
        assert out[0, 0] == pytest.approx(15.0)


class TestFileRoundTrips:
    def test_hierarchy_csv(self, tmp_path, hier15):
        path = tmp_path / "hier.csv"
        save_hierarchy_csv(hier15, path)
        again = load_hierarchy_csv(path)
        assert again.node_ids == hier15.node_ids
        assert again.level_count == hier15.level_count

    def test_panel_csv(self, tmp_path, hier7, make_panel):
        rng = np.random.default_rng(1)
        panel = make_panel(hier7, 30, rng)
        path = tmp_path / "panel.csv"
        save_panel_csv(panel, path)
        again = load_panel_csv(path, hier7)
        assert np.allclose(again.sales, panel.sales, rtol=0, atol=0)
        assert np.allclose(again.price, panel.price, rtol=0, atol=0)

    def test_panel_incomplete_grid_rejected(self, tmp_path, hier3):
        path = tmp_path / "panel.csv"
        path.write_text(
            "week,node_id,sales,price\n"
            "1,T,3.0,10.0\n1,A,1.0,10.0\n1,B,2.0,10.0\n"
            "2,T,3.0,10.0\n2,A,1.0,10.0\n"
        )
        with pytest.raises(HierarchyError, match="incomplete"):
            load_panel_csv(path, hier3)

    def test_panel_missing_value_rejected(self, tmp_path, hier3):
        path = tmp_path / "panel.csv"
        path.write_text(
            "week,node_id,sales,price\n"
            "1,T,3.0,10.0\n1,A,,10.0\n1,B,2.0,10.0\n"
        )
        with pytest.raises(HierarchyError, match="missing"):
            load_panel_csv(path, hier3)

    def test_panel_incoherent_rejected(self, tmp_path, hier3):
        path = tmp_path / "panel.csv"
        path.write_text(
            "week,node_id,sales,price\n"
            "1,T,9.0,10.0\n1,A,1.0,10.0\n1,B,2.0,10.0\n"
        )
        with pytest.raises(HierarchyError, match="incoherent"):
            load_panel_csv(path, hier3)


def test_panel_from_bottom_coherent(hier15):
    rng = np.random.default_rng(3)
    sales = rng.uniform(0.0, 50.0, size=(12, 20))
    price = rng.uniform(5.0, 15.0, size=(12, 20))
    panel = panel_from_bottom(hier15, sales, price)
    panel.validate(hier15)
    assert np.allclose(panel.sales[-12:], sales)
