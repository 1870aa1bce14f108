import pytest
from hypothesis import given, strategies as st

from trustshare import table1
from trustshare.disclosure import (
    DerivationError,
    SelectionOrder,
    category_of,
    derive_orders,
    select_shared,
)


@pytest.fixture(scope="module")
def orders():
    return derive_orders(table1.ROWS)


def _decompose(row):
    # independent of trustshare.disclosure.decompose
    return [list(row.available).index(x) for x in row.shared]


def test_category_of():
    assert category_of("98LetT1") == "98Let"
    assert category_of("03AlqT8") == "03Alq"
    with pytest.raises(ValueError):
        category_of("LetT1")


def test_row1_index_decomposition(orders):
    assert _decompose(table1.ROWS[0]) == [5, 2, 4, 7, 1, 0, 8, 9, 3]
    assert list(orders["98Let"].permutation[:9]) == [5, 2, 4, 7, 1, 0, 8, 9, 3]


def test_all_98let_rows_share_one_permutation():
    rows = [r for r in table1.ROWS if r.code.startswith("98Let")]
    assert len(rows) == 5
    longest = max((_decompose(r) for r in rows), key=len)
    for r in rows:
        idx = _decompose(r)
        assert idx == longest[: len(idx)]


@pytest.mark.parametrize("category, full", [
    ("98Let", [5, 2, 4, 7, 1, 0, 8, 9, 3, 6]),
    ("03Alq", [6, 3, 7, 4, 8, 0, 1, 2, 5, 9]),
    ("06Tal", [8, 1, 5, 3, 7, 0, 2, 4, 6, 9]),
])
def test_tail_completion(orders, category, full):
    assert list(orders[category].permutation) == full


def test_published_row2_cannot_be_derived():
    with pytest.raises(DerivationError, match="row 2"):
        derive_orders(table1.PUBLISHED_ROWS)


def test_row2_correction_is_the_only_change():
    diffs = [(a, b) for a, b in zip(table1.PUBLISHED_ROWS, table1.ROWS) if a != b]
    assert len(diffs) == 1
    published, corrected = diffs[0]
    changed = [(x, y) for x, y in zip(published.shared, corrected.shared) if x != y]
    assert changed == [(20, 30)]


def test_inconsistent_rows_are_reported():
    bad = [
        table1.Row("A", "B", "98LetT1", tuple(range(10)), (5, 2)),
        table1.Row("A", "B", "98LetT2", tuple(range(10)), (2, 5)),
    ]
    with pytest.raises(DerivationError, match="conflicts"):
        derive_orders(bad)


@pytest.mark.parametrize("row", range(10))
def test_every_table_row_reproduces(orders, row):
    r = table1.ROWS[row]
    order = orders[category_of(r.code)]
    assert tuple(select_shared(list(r.available), len(r.shared), order)) == r.shared


def test_spec_examples(orders):
    assert select_shared(list(range(11, 21)), 9, orders["98Let"]) == [16, 13, 15, 18, 12, 11, 19, 20, 14]
    assert select_shared(list(range(31, 41)), 4, orders["03Alq"]) == [37, 34, 38, 35]
    assert select_shared(list(range(61, 71)), 3, orders["06Tal"]) == [69, 62, 66]


def test_level_zero_is_empty(orders):
    assert select_shared(list(range(10)), 0, orders["98Let"]) == []


def test_short_item_lists_skip_missing_positions(orders):
    # 98Let order starts 5,2,4,... ; position 5 does not exist in a 3-item list
    assert select_shared(["a", "b", "c"], 2, orders["98Let"]) == ["c", "b"]
    assert select_shared(["a", "b", "c"], 10, orders["98Let"]) == ["c", "b", "a"]


def test_level_out_of_range(orders):
    with pytest.raises(ValueError):
        select_shared([1], 11, orders["98Let"])


def test_selection_order_must_be_permutation():
    with pytest.raises(ValueError):
        SelectionOrder("98Let", (0, 0, 1))


perms = st.permutations(list(range(10))).map(lambda p: SelectionOrder("98Let", tuple(p)))
item_lists = st.lists(st.integers(), max_size=12, unique=True)


@given(item_lists, st.integers(0, 10), perms)
def test_subset_and_no_duplicates(items, level, order):
    out = select_shared(items, level, order)
    assert set(out) <= set(items)
    assert len(out) == len(set(out)) == min(level, len([i for i in order.permutation if i < len(items)]))


@given(item_lists, st.integers(0, 9), perms)
def test_monotone_prefix(items, level, order):
    assert select_shared(items, level + 1, order)[:level] == select_shared(items, level, order)
