"""The ten-exchange experiment table the simulator reproduces.

``PUBLISHED_ROWS`` is the table exactly as printed. ``ROWS`` is the same data
with one correction: the second row's shared list prints ``20`` although
that agency only holds items 21..30. Decomposing the row against the 98Let
selection order places the item at index 9, i.e. ``30``.
"""

from __future__ import annotations

from importlib.resources import files
from typing import NamedTuple

from .disclosure import category_of, derive_orders
from .store import MappingFunctionSpec, TrustRecord, TrustStore


class Row(NamedTuple):
    source: str
    target: str
    code: str
    available: tuple[int, ...]
    shared: tuple[int, ...]


def _r(a, b):
    return tuple(range(a, b + 1))


PUBLISHED_ROWS: tuple[Row, ...] = (
    Row("CIA", "FBI", "98LetT1", _r(11, 20), (16, 13, 15, 18, 12, 11, 19, 20, 14)),
    Row("ISI", "CIA", "98LetT2", _r(21, 30), (26, 23, 25, 28, 22, 21, 29, 20, 24)),
    Row("RAW", "CIA", "03AlqT3", _r(31, 40), (37, 34, 38, 35)),
    Row("RAW", "FBI", "06TalT4", _r(41, 50), (49, 42, 46, 44, 48)),
    Row("CIA", "RAW", "98LetT5", _r(51, 60), (56, 53, 55, 58, 52, 51, 59, 60)),
    Row("RAW", "CIA", "06TalT6", _r(61, 70), (69, 62, 66)),
    Row("FBI", "RAW", "98LetT7", _r(71, 80), (76, 73, 75, 78, 72, 71)),
    Row("ISI", "FBI", "03AlqT8", _r(81, 90), (87, 84, 88, 85, 89)),
    Row("CIA", "FBI", "06TalT9", _r(91, 100), (99, 92, 96, 94)),
    Row("ISI", "FBI", "98LetT8", _r(81, 90), (86, 83, 85, 88, 82, 81, 89, 90)),
)

CORRECTED_ROW = 1  # 0-based index of the row carrying the typo

ROWS: tuple[Row, ...] = tuple(
    row._replace(shared=(26, 23, 25, 28, 22, 21, 29, 30, 24)) if i == CORRECTED_ROW else row
    for i, row in enumerate(PUBLISHED_ROWS)
)

AGENCIES = ("CIA", "FBI", "ISI", "RAW")

# Operator lists for each unordered pair that exchanges in the table. The
# table does not depend on them; they only need to differ between pairs.
MAPPING_FUNCTIONS = {
    ("CIA", "FBI"): "+*-",
    ("CIA", "ISI"): "*+/",
    ("CIA", "RAW"): "-*+/",
    ("FBI", "RAW"): "/+*",
    ("FBI", "ISI"): "+-*/",
}


def build_store(rows=ROWS):
    """Trust store reproducing the table: trust level = number of shared items."""
    store = TrustStore()
    for agency_id in AGENCIES:
        store.register_agency(agency_id)
    for row in rows:
        store.set_trust(TrustRecord(row.source, row.target, category_of(row.code), len(row.shared)))
        store.set_items(row.target, row.code, [str(i) for i in row.available])
    for (a, b), ops in MAPPING_FUNCTIONS.items():
        store.set_mapping(MappingFunctionSpec.between(a, b, ops))
    for order in derive_orders(rows).values():
        store.set_order(order)
    return store


def fixture_path():
    return files("trustshare") / "data" / "table1.store"


def load_store():
    return TrustStore.loads(fixture_path().read_text(encoding="utf-8"))
