"""Frequent itemset mining (presence-only semantics) and the ordering maps.

Treating the database qualitatively -- every attribute at its minimum level --
an itemset is frequent when the intersection of the members' presence bitsets
covers at least the minimum support fraction of histories.  These itemsets are
the scaffold over which rule quantifications are searched.

Items and, within each item, attributes are given total orders.  The engine
uses them to avoid generating the same quantification set twice: an item (or
attribute) may only be quantified if its rank is no lower than everything
already quantified.
"""

from __future__ import annotations

from itertools import combinations

from .dataset import Dataset, NEG_SUFFIX
from .index import SupportIndex


class OrdMaps:
    """Total order over items, and over the quantitative attributes of each item."""

    def __init__(self, item_ord: dict[str, int], attr_ord: dict[tuple[str, str], int]):
        self.item_ord = item_ord
        self.attr_ord = attr_ord

    def ord(self, item: str) -> int:
        return self.item_ord[item]

    def attr_rank(self, item: str, attr: str) -> int:
        return self.attr_ord[(item, attr)]

    def sort_items(self, items) -> list[str]:
        return sorted(items, key=self.item_ord.__getitem__)


def default_ord(dataset: Dataset) -> OrdMaps:
    """Catalog insertion order for items; per item, the shared attribute
    first, its negation second (when present), then declaration order."""
    item_ord = {item: pos for pos, item in enumerate(dataset.items)}
    attr_ord: dict[tuple[str, str], int] = {}
    shared = dataset.shared_attr
    neg = shared + NEG_SUFFIX
    for item in dataset.items:
        ranked = []
        declared = dataset.quantitative_attrs(item)
        if shared in declared:
            ranked.append(shared)
        if neg in declared:
            ranked.append(neg)
        ranked.extend(a for a in declared if a not in (shared, neg))
        for rank, attr in enumerate(ranked):
            attr_ord[(item, attr)] = rank
    return OrdMaps(item_ord, attr_ord)


def mine_frequent(
    idx: SupportIndex,
    s_min: float,
    max_len: int,
    ord_maps: OrdMaps | None = None,
) -> dict[int, list[tuple[str, ...]]]:
    """All itemsets of size 1..max_len with presence support >= s_min.

    Levelwise candidate generation (join + prune) counted on the presence
    bitsets; the grids at this scale make that both simple and fast.  Returned
    itemsets are tuples sorted by item order; levels are sorted lists.
    """
    if not 0.0 < s_min <= 1.0:
        raise ValueError(f"s_min must be in (0, 1], got {s_min}")
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    n = idx.universe
    if n == 0:
        return {}
    rank = ord_maps.item_ord.__getitem__ if ord_maps else None

    singles = {}
    for item, bits in idx.presence.items():
        if bits.bit_count() / n >= s_min:
            singles[(item,)] = bits
    levels: dict[int, list[tuple[str, ...]]] = {}
    levels[1] = sorted(singles, key=lambda t: tuple(map(rank, t)) if rank else t)

    prev = {tuple(sorted(t, key=rank) if rank else sorted(t)): b for t, b in singles.items()}
    k = 2
    while prev and k <= max_len:
        cur: dict[tuple[str, ...], int] = {}
        frequent_prev = set(prev)
        ordered = sorted(prev, key=lambda t: tuple(map(rank, t)) if rank else t)
        for a, b in combinations(ordered, 2):
            if a[:-1] != b[:-1]:
                continue
            cand = a + (b[-1],)
            # prune: every (k-1)-subset must itself be frequent
            if any(cand[:i] + cand[i + 1 :] not in frequent_prev for i in range(k)):
                continue
            bits = prev[a] & prev[b]
            if bits.bit_count() / n >= s_min:
                cur[cand] = bits
        if cur:
            levels[k] = sorted(cur, key=lambda t: tuple(map(rank, t)) if rank else t)
        prev = cur
        k += 1
    return levels
