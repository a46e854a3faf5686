import io
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adaptqec.graph import (
    BOUNDARY,
    BOUNDARY_KIND,
    SPACE,
    TIME,
    DetectorErrorModel,
    DetectorId,
    EdgeSpec,
    GraphError,
    build_repetition_dem,
    evaluate_detectors,
    logical_parity,
    read_dem,
    write_dem,
)


def kinds(model):
    return [e.kind for e in model.edges]


class TestBuild:
    def test_single_round_d3(self):
        m = build_repetition_dem(3, 1, 1, 0.005)
        assert kinds(m).count(SPACE) == 1
        assert kinds(m).count(BOUNDARY_KIND) == 2
        assert kinds(m).count(TIME) == 0
        assert m.n_detectors == 2

    def test_three_rounds_d3(self):
        m = build_repetition_dem(3, 3, 1, 0.005)
        assert len(m.edges) == 13
        assert kinds(m).count(TIME) == 4

    def test_d5_two_rounds(self):
        m = build_repetition_dem(5, 2, 1, 0.005)
        assert kinds(m).count(SPACE) == 6
        assert kinds(m).count(BOUNDARY_KIND) == 4
        assert kinds(m).count(TIME) == 4
        assert all(e.probability == 0.005 for e in m.edges if e.kind != TIME)

    def test_lag_two_time_edges(self):
        m = build_repetition_dem(3, 5, 2, 0.01)
        times = [e for e in m.edges if e.kind == TIME]
        assert len(times) == 2 * 3
        assert all(e.v.round - e.u.round == 2 and e.u.ancilla == e.v.ancilla for e in times)

    def test_edge_geometry(self):
        m = build_repetition_dem(7, 4, 1, 0.01)
        for e in m.edges:
            if e.kind == SPACE:
                assert e.u.round == e.v.round and abs(e.u.ancilla - e.v.ancilla) == 1
            elif e.kind == BOUNDARY_KIND:
                assert e.v is BOUNDARY and e.u.ancilla in (0, 5)
        crossing = [e for e in m.edges if e.logical_crossing]
        assert all(e.kind == BOUNDARY_KIND and e.u.ancilla == 0 for e in crossing)
        assert len(crossing) == 4

    def test_rate_table_columns(self):
        d, rounds = 3, 2
        table = np.arange(rounds * (2 * d - 1)).reshape(rounds, -1) / 100
        m = build_repetition_dem(d, rounds, 1, table)
        e = m.edges
        # round 0: left boundary, space, right boundary, time a=0, time a=1
        assert [x.probability for x in e[:5]] == [0.0, 0.01, 0.02, 0.03, 0.04]
        assert [x.probability for x in e[5:]] == [0.05, 0.06, 0.07]

    def test_max_degree_four(self):
        m = build_repetition_dem(5, 6, 1, 0.01)
        assert max(len(v) for v in m.adjacency.values()) == 4

    @pytest.mark.parametrize("d", [2, 4, 1])
    def test_bad_distance(self, d):
        with pytest.raises(GraphError):
            build_repetition_dem(d, 2)

    def test_bad_probability(self):
        with pytest.raises(GraphError):
            build_repetition_dem(3, 2, 1, 0.5)
        with pytest.raises(GraphError):
            build_repetition_dem(3, 2, 1, -0.1)

    def test_bad_lag_and_rounds(self):
        with pytest.raises(GraphError):
            build_repetition_dem(3, 2, 3)
        with pytest.raises(GraphError):
            build_repetition_dem(3, 0)


class TestEdgeSpec:
    def test_boundary_canonicalised(self):
        e = EdgeSpec(BOUNDARY, DetectorId(1, 0), 0.1, BOUNDARY_KIND)
        assert e.u == DetectorId(1, 0) and e.v is BOUNDARY

    def test_invalid(self):
        with pytest.raises(GraphError):
            EdgeSpec(BOUNDARY, BOUNDARY, 0.1, BOUNDARY_KIND)
        with pytest.raises(GraphError):
            EdgeSpec(DetectorId(0, 0), DetectorId(1, 0), 0.1, BOUNDARY_KIND)
        with pytest.raises(GraphError):
            EdgeSpec(DetectorId(0, 0), BOUNDARY, 0.1, SPACE)

    def test_duplicate_rejected(self):
        e = EdgeSpec(DetectorId(0, 0), DetectorId(1, 0), 0.1, SPACE)
        f = EdgeSpec(DetectorId(1, 0), DetectorId(0, 0), 0.2, SPACE)
        with pytest.raises(GraphError):
            DetectorErrorModel(3, 1, 1, (e, f))

    def test_unknown_detector(self):
        e = EdgeSpec(DetectorId(0, 5), BOUNDARY, 0.1, BOUNDARY_KIND)
        with pytest.raises(GraphError):
            DetectorErrorModel(3, 2, 1, (e,))


class TestParity:
    model = build_repetition_dem(3, 3, 1, 0.01)

    def test_all_zero(self):
        s = np.zeros(len(self.model.edges), dtype=np.uint8)
        assert not evaluate_detectors(self.model, s).any()
        assert logical_parity(self.model, s) == 0

    def test_single_space_edge(self):
        i = kinds(self.model).index(SPACE)
        s = np.zeros(len(self.model.edges), dtype=np.uint8)
        s[i] = 1
        v = evaluate_detectors(self.model, s)
        e = self.model.edges[i]
        assert v.sum() == 2 and v[e.u.round, e.u.ancilla] and v[e.v.round, e.v.ancilla]

    def test_cancellation(self):
        # space edge and left boundary edge share detector (0, 0)
        s = np.zeros(len(self.model.edges), dtype=np.uint8)
        s[0] = s[1] = 1
        v = evaluate_detectors(self.model, s)
        assert v[0, 0] == 0 and v[0, 1] == 1 and v.sum() == 1

    def test_logical(self):
        left = [i for i, e in enumerate(self.model.edges) if e.logical_crossing]
        s = np.zeros(len(self.model.edges), dtype=np.uint8)
        s[left[0]] = 1
        assert logical_parity(self.model, s) == 1
        s[left[1]] = 1
        assert logical_parity(self.model, s) == 0

    def test_length_mismatch(self):
        with pytest.raises(GraphError):
            evaluate_detectors(self.model, [0, 1])
        with pytest.raises(GraphError):
            logical_parity(self.model, [0])

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_linear_over_xor(self, data):
        n = len(self.model.edges)
        x = np.array(data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)), dtype=np.uint8)
        y = np.array(data.draw(st.lists(st.integers(0, 1), min_size=n, max_size=n)), dtype=np.uint8)
        lhs = evaluate_detectors(self.model, x ^ y)
        rhs = evaluate_detectors(self.model, x) ^ evaluate_detectors(self.model, y)
        assert np.array_equal(lhs, rhs)
        assert logical_parity(self.model, x ^ y) == logical_parity(self.model, x) ^ logical_parity(self.model, y)

    def test_event_count_parity_by_enumeration(self):
        # one round of d=5 has 6 edges: left, 3 space, right (5 edges) -> use 2 rounds of d=3 minus extras
        model = build_repetition_dem(3, 2, 1, 0.01)
        edges = model.edges[:6]
        small = DetectorErrorModel(3, 2, 1, edges)
        for bits in itertools.product((0, 1), repeat=len(edges)):
            s = np.array(bits, dtype=np.uint8)
            endpoints = sum(len(e.endpoints()) for e, b in zip(edges, bits) if b and not e.is_boundary)
            boundary_on = sum(b for e, b in zip(edges, bits) if e.is_boundary)
            total = int(evaluate_detectors(small, s).sum())
            assert total % 2 == (endpoints + boundary_on) % 2
            assert total % 2 == boundary_on % 2


class TestText:
    def test_round_trip(self):
        m = build_repetition_dem(5, 3, 2, np.linspace(0.001, 0.2, 9))
        buf = io.StringIO()
        write_dem(m, buf)
        text = buf.getvalue()
        assert text.startswith("# dem d=5 rounds=3 lag=2\n")
        assert "boundary 0 0 B B 0.001 1" in text
        back = read_dem(io.StringIO(text))
        assert back.edges == m.edges and (back.d, back.rounds, back.lag) == (5, 3, 2)

    def test_missing_header(self):
        with pytest.raises(GraphError):
            read_dem(["space 0 0 1 0 0.1 0"])
