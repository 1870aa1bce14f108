"""Trust-scored selection of information items.

The number of items disclosed equals the trust level. Which items, and in
which order, is fixed per category by a permutation of item positions that
is recovered from the experiment table: every observed row is a prefix of a
single per-category permutation. Positions never observed are appended in
ascending order.
"""

from __future__ import annotations

import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

ORDER_SIZE = 10
MAX_TRUST = 10

CODE_RE = re.compile(r"^(\d{2}[A-Za-z]{3})([A-Za-z0-9]+)$")
CATEGORY_RE = re.compile(r"^\d{2}[A-Za-z]{3}$")


def category_of(code: str) -> str:
    """``"98LetT1"`` -> ``"98Let"``."""
    m = CODE_RE.match(code)
    if not m:
        raise ValueError(f"terrorist code {code!r} does not match NNAaaSUFFIX")
    return m.group(1)


def is_valid_code(code: str) -> bool:
    return bool(CODE_RE.match(code))


def is_valid_category(category: str) -> bool:
    return bool(CATEGORY_RE.match(category))


@dataclass(frozen=True)
class SelectionOrder:
    category: str
    permutation: tuple[int, ...]

    def __post_init__(self):
        perm = tuple(self.permutation)
        object.__setattr__(self, "permutation", perm)
        if sorted(perm) != list(range(len(perm))):
            raise ValueError(f"selection order for {self.category} is not a permutation: {perm}")

    @classmethod
    def identity(cls, category: str, size: int = ORDER_SIZE) -> SelectionOrder:
        return cls(category, tuple(range(size)))


def select_shared(items: Sequence, level: int, order: SelectionOrder) -> list:
    """First ``level`` items in ``order``; positions past the end of ``items`` are skipped."""
    if not 0 <= level <= MAX_TRUST:
        raise ValueError(f"trust level {level} outside 0..{MAX_TRUST}")
    usable = [i for i in order.permutation if i < len(items)]
    return [items[i] for i in usable[:level]]


class DerivationError(ValueError):
    """The table rows cannot come from one permutation per category."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


def decompose(available: Sequence, shared: Sequence) -> list[int]:
    """Positions in ``available`` of each shared item."""
    index = {item: i for i, item in enumerate(available)}
    missing = [item for item in shared if item not in index]
    if missing:
        raise DerivationError([f"shared items {missing} not in available list"])
    return [index[item] for item in shared]


def derive_orders(rows: Iterable, size: int = ORDER_SIZE) -> dict[str, SelectionOrder]:
    """Recover one selection order per category from (code, available, shared) rows.

    Rows may be ``table1.Row`` tuples or anything with ``code``, ``available``
    and ``shared`` attributes.
    """
    prefixes: dict[str, list[int]] = {}
    problems = []
    for n, row in enumerate(rows, 1):
        category = category_of(row.code)
        try:
            idx = decompose(row.available, row.shared)
        except DerivationError as exc:
            problems.append(f"row {n} ({row.code}): {exc}")
            continue
        known = prefixes.setdefault(category, [])
        common = min(len(known), len(idx))
        if known[:common] != idx[:common]:
            problems.append(f"row {n} ({row.code}): order {idx} conflicts with {known}")
            continue
        if len(idx) > len(known):
            prefixes[category] = idx
    if problems:
        raise DerivationError(problems)

    orders = {}
    for category, prefix in prefixes.items():
        if len(set(prefix)) != len(prefix) or any(i >= size for i in prefix):
            raise DerivationError([f"{category}: prefix {prefix} is not extendable to size {size}"])
        tail = [i for i in range(size) if i not in prefix]
        orders[category] = SelectionOrder(category, tuple(prefix + tail))
    return orders
