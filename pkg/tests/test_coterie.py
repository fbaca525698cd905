import pytest

from quorumcs import (
    ConfigError,
    CoterieAssignment,
    build_grid_coterie,
    build_majority_coterie,
    build_single_quorum_coterie,
    coterie_from_lines,
    verify_coterie,
)

ALL_BUILDERS = [build_grid_coterie, build_majority_coterie, build_single_quorum_coterie]


def test_grid_n4_exact_quorums():
    # 2x2 grid laid out row-major: hand-enumerated row+column unions.
    cot = build_grid_coterie(4)
    assert cot.quorums == {
        1: frozenset({1, 2, 3}),
        2: frozenset({1, 2, 4}),
        3: frozenset({1, 3, 4}),
        4: frozenset({2, 3, 4}),
    }
    for a in cot.quorums.values():
        for b in cot.quorums.values():
            assert a & b


def test_grid_quorum_size_formula():
    for n in (1, 4, 9, 16, 25, 49, 100):
        r = int(n ** 0.5)
        cot = build_grid_coterie(n)
        assert all(len(q) == 2 * r - 1 for q in cot.quorums.values())


def test_grid_n1_trivial():
    cot = build_grid_coterie(1)
    assert cot.quorums == {1: frozenset({1})}


def test_grid_rejects_non_square():
    for n in (2, 3, 5, 8, 12, 99):
        with pytest.raises(ConfigError):
            build_grid_coterie(n)


def test_majority_lexicographic_rule():
    cot = build_majority_coterie(3)
    assert cot.quorums[1] == frozenset({1, 2})
    assert all(len(q) == 2 for q in cot.quorums.values())
    cot5 = build_majority_coterie(5)
    assert len(cot5.quorums[4]) == 3
    assert 4 in cot5.quorums[4]
    assert cot5.quorums[4] == frozenset({1, 2, 4})


def test_majority_n1_trivial():
    assert build_majority_coterie(1).quorums == {1: frozenset({1})}


def test_single_quorum_everyone():
    cot = build_single_quorum_coterie(3)
    v = frozenset({1, 2, 3})
    assert all(q == v for q in cot.quorums.values())
    assert all(r == v for r in cot.readers.values())


def test_constructors_contain_self():
    for build in ALL_BUILDERS:
        for n in (1, 4, 9, 25):
            try:
                cot = build(n)
            except ConfigError:
                continue
            assert all(i in cot.quorums[i] for i in range(1, n + 1))


def test_verify_all_constructors_up_to_100():
    for n in range(1, 101):
        for build in ALL_BUILDERS:
            try:
                cot = build(n)
            except ConfigError:
                continue
            assert verify_coterie(cot) == []


def test_readers_quorums_duality_exhaustive():
    for n in range(1, 101):
        for build in (build_majority_coterie, build_single_quorum_coterie):
            cot = build(n)
            for i in range(1, n + 1):
                for j in range(1, n + 1):
                    assert (j in cot.readers[i]) == (i in cot.quorums[j])
    for n in (4, 9, 16, 25, 36, 49, 64, 81, 100):
        cot = build_grid_coterie(n)
        for i in range(1, n + 1):
            for j in range(1, n + 1):
                assert (j in cot.readers[i]) == (i in cot.quorums[j])


def test_verify_reports_intersection_violation():
    bad = CoterieAssignment(2, {1: frozenset({1}), 2: frozenset({2})})
    problems = verify_coterie(bad)
    assert any("intersection" in p for p in problems)


def test_verify_reports_minimality_violation():
    bad = CoterieAssignment(2, {1: frozenset({1}), 2: frozenset({1, 2})})
    problems = verify_coterie(bad)
    assert any("minimality" in p for p in problems)


def test_verify_checks_distinct_quorums_only():
    # Several processes sharing one quorum is not a minimality violation.
    shared = frozenset({1, 2})
    cot = CoterieAssignment(3, {1: shared, 2: shared, 3: frozenset({1, 3})})
    assert verify_coterie(cot) == []


def test_serialization_round_trip():
    cot = build_grid_coterie(9)
    lines = cot.to_lines()
    assert lines[0] == "1: 1 2 3 4 7"
    back = coterie_from_lines(lines)
    assert back.quorums == cot.quorums
    assert back.readers == cot.readers


def test_from_lines_rejects_garbage():
    with pytest.raises(ConfigError):
        coterie_from_lines(["1: x y"])
    with pytest.raises(ConfigError):
        coterie_from_lines(["1: 1", "1: 1"])
    with pytest.raises(ConfigError):
        coterie_from_lines(["1: 1", "3: 3"])
    with pytest.raises(ConfigError):
        coterie_from_lines(["1: 1", "2: 2"])  # disjoint quorums
