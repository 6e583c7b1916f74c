import numpy as np
import pytest

from logicrec.errors import ContractError
from logicrec.queries import (Literal, build_query, expand_full, format_query,
                              term_count)


def random_history(rng, n):
    items = rng.choice(1000, size=n, replace=False)
    pols = rng.integers(0, 2, size=n).astype(bool)
    return [(int(i), bool(p)) for i, p in zip(items, pols)]


class TestBuildQuery:
    def test_polarities_follow_history(self):
        q = build_query([(1, True), (2, False)], user=9)
        assert q.literals == (Literal(9, 1, True), Literal(9, 2, False))

    def test_single_positive_event(self):
        q = build_query([(4, True)], user=0)
        assert q.literals == (Literal(0, 4, True),)

    def test_ten_events_keep_chronological_order(self):
        hist = [(i, i % 2 == 0) for i in range(10)]
        q = build_query(hist, user=3)
        assert len(q.literals) == 10
        assert [l.item for l in q.literals] == list(range(10))

    def test_empty_history_rejected(self):
        with pytest.raises(ContractError, match="at least one"):
            build_query([], user=0)

    def test_n_max_guard(self):
        with pytest.raises(ContractError, match="n_max"):
            build_query([(1, True)] * 4, user=0, n_max=3)

    def test_order_bijection_property(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            hist = random_history(rng, int(rng.integers(1, 11)))
            q = build_query(hist, user=5)
            assert [(l.item, l.positive) for l in q.literals] == hist


class TestExpandFull:
    def test_two_events_three_terms(self):
        hist = [(1, True), (2, False)]
        exp = expand_full(hist, user=0)
        p1 = Literal(0, 1, True)
        n2 = Literal(0, 2, False)
        assert exp.terms == ((p1,), (n2,), (p1, n2))

    def test_three_events_seven_terms(self):
        assert len(expand_full([(1, True), (2, True), (3, False)], 0).terms) == 7

    def test_single_event_single_term(self):
        assert len(expand_full([(1, True)], 0).terms) == 1

    def test_scale_guard(self):
        with pytest.raises(ContractError, match="scale guard"):
            expand_full([(i, True) for i in range(13)], 0)

    def test_terms_are_distinct_subsets(self):
        rng = np.random.default_rng(1)
        hist = random_history(rng, 6)
        exp = expand_full(hist, user=2)
        assert len(set(exp.terms)) == len(exp.terms)
        sizes = [len(term) for term in exp.terms]
        assert sizes == sorted(sizes)

    def test_singletons_match_build_query(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = int(rng.integers(1, 9))
            hist = random_history(rng, n)
            exp = expand_full(hist, user=7)
            q = build_query(hist, user=7)
            assert exp.terms[:n] == tuple((l,) for l in q.literals)
            assert len(exp.terms) == term_count(n)


class TestTermCount:
    def test_paper_scale_points(self):
        assert term_count(3) == 7
        assert term_count(1) == 1

    def test_against_enumeration(self):
        hist = [(i, True) for i in range(10)]
        assert term_count(10) == 1023 == len(expand_full(hist, 0).terms)

    def test_range_guard(self):
        for bad in (0, -1, 63):
            with pytest.raises(ContractError):
                term_count(bad)


def test_format_query_notation():
    q = build_query([(1, True), (2, False)], user=3)
    assert format_query(q) == "Pos(u3,v1) ∨ Neg(u3,v2) → v?"
    q2 = build_query([(1, True)], user=3, implied_target=8)
    assert format_query(q2) == "Pos(u3,v1) → v8"
