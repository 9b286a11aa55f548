"""Domain model: items with numeric attributes, user purchase histories, datasets.

A dataset is a list of user histories, each history an ordered list of
transactions.  A transaction records one item together with values for one or
more of that item's quantitative attributes.  Every item carries one shared
quantitative attribute (e.g. the price paid), which is the only attribute a
mined rule may constrain in its consequent.
"""

from __future__ import annotations

import json
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

# Suffix of the artificial negated attribute added by augment_negated().
NEG_SUFFIX = "⁻"  # superscript minus, "p" -> "p⁻"

QUANTITATIVE = "quantitative"
CATEGORICAL = "categorical"


class DatasetError(ValueError):
    """A record or dataset violates the ingestion contract."""


@dataclass(frozen=True)
class AttributeDecl:
    """Declaration of one attribute of one item."""

    name: str
    kind: str = QUANTITATIVE
    declared_range: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.kind not in (QUANTITATIVE, CATEGORICAL):
            raise DatasetError(f"unknown attribute kind {self.kind!r}")
        if self.kind == QUANTITATIVE and self.declared_range is not None:
            lo, hi = self.declared_range
            if lo > hi:
                raise DatasetError(f"attribute {self.name!r}: declared range {lo} > {hi}")


@dataclass(frozen=True)
class Transaction:
    """One purchase: an item plus values for its quantitative attributes."""

    item: str
    attrs: Mapping[str, float]


@dataclass
class UserHistory:
    """All transactions of one user.  Repeat purchases of an item are kept."""

    user: str
    transactions: list[Transaction] = field(default_factory=list)


class Dataset:
    """User histories plus the item catalog and the shared attribute name.

    Histories carry dense indices 0..len-1 in first-appearance order of the
    user keys; the bitset support index relies on that numbering.  Instances
    are treated as immutable once built: transforms return new datasets.
    """

    def __init__(
        self,
        histories: list[UserHistory],
        items: dict[str, dict[str, AttributeDecl]],
        shared_attr: str,
    ):
        self.histories = histories
        self.items = items
        self.shared_attr = shared_attr
        self.user_index: dict[str, int] = {}
        for pos, h in enumerate(histories):
            if h.user in self.user_index:
                raise DatasetError(f"duplicate user key {h.user!r}")
            self.user_index[h.user] = pos

    def __len__(self) -> int:
        return len(self.histories)

    def transaction_count(self) -> int:
        return sum(len(h.transactions) for h in self.histories)

    def quantitative_attrs(self, item: str) -> list[str]:
        """Names of the item's quantitative attributes, in declaration order."""
        return [d.name for d in self.items[item].values() if d.kind == QUANTITATIVE]

    def validate(self) -> None:
        """Check catalog/history consistency; raises DatasetError on violation."""
        for h in self.histories:
            for t in h.transactions:
                decls = self.items.get(t.item)
                if decls is None:
                    raise DatasetError(f"user {h.user!r}: item {t.item!r} not in catalog")
                if self.shared_attr not in t.attrs:
                    raise DatasetError(
                        f"user {h.user!r}, item {t.item!r}: missing shared "
                        f"attribute {self.shared_attr!r}"
                    )
                for name in t.attrs:
                    if name not in decls or decls[name].kind != QUANTITATIVE:
                        raise DatasetError(
                            f"user {h.user!r}, item {t.item!r}: attribute {name!r} "
                            "not declared quantitative"
                        )

    def to_lines(self) -> Iterator[str]:
        """Serialize as one JSON record per history (the history file format)."""
        for h in self.histories:
            rec = {
                "u": h.user,
                "t": [{"i": t.item, "a": dict(t.attrs)} for t in h.transactions],
            }
            yield json.dumps(rec, ensure_ascii=False)

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.to_lines():
                fh.write(line + "\n")


class ValueIndex:
    """Sorted distinct values of every (item, attribute) pair in a dataset."""

    def __init__(self, entries: dict[tuple[str, str], tuple[float, ...]]):
        self.entries = entries

    def pairs(self) -> Iterator[tuple[str, str]]:
        return iter(self.entries)

    def values(self, item: str, attr: str) -> tuple[float, ...]:
        return self.entries[(item, attr)]

    def level(self, item: str, attr: str, value: float) -> int:
        """Position of an exact grid value; raises if not on the grid."""
        vals = self.entries.get((item, attr))
        if vals is None:
            raise DatasetError(f"no values recorded for ({item!r}, {attr!r})")
        pos = bisect_left(vals, value)
        if pos == len(vals) or vals[pos] != value:
            raise DatasetError(f"{value!r} is not an observed value of ({item!r}, {attr!r})")
        return pos

    def predecessor(self, item: str, attr: str, value: float) -> float | None:
        """Greatest observed value strictly below ``value``, or None."""
        vals = self.entries.get((item, attr), ())
        pos = bisect_left(vals, value)
        return vals[pos - 1] if pos > 0 else None


def _check_numeric(value, user: str, item: str, attr: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DatasetError(
            f"user {user!r}, item {item!r}: non-numeric value {value!r} "
            f"for quantitative attribute {attr!r}"
        )
    return float(value)


def dataset_from_transactions(
    records: Iterable[tuple[str, str, Mapping[str, float]]],
    shared_attr: str,
) -> Dataset:
    """Build a dataset from (user, item, attrs) triples.

    Users and catalog entries are registered in first-appearance order;
    attribute declarations are inferred as quantitative.
    """
    histories: list[UserHistory] = []
    by_user: dict[str, UserHistory] = {}
    items: dict[str, dict[str, AttributeDecl]] = {}
    for user, item, attrs in records:
        if shared_attr not in attrs:
            raise DatasetError(
                f"user {user!r}, item {item!r}: missing shared attribute {shared_attr!r}"
            )
        clean = {a: _check_numeric(v, user, item, a) for a, v in attrs.items()}
        decls = items.setdefault(item, {})
        for a in clean:
            decls.setdefault(a, AttributeDecl(a))
        hist = by_user.get(user)
        if hist is None:
            hist = by_user[user] = UserHistory(user)
            histories.append(hist)
        hist.transactions.append(Transaction(item, clean))
    return Dataset(histories, items, shared_attr)


def _iter_lines(source) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            yield from fh
    else:
        yield from source


def load_dataset(source, shared_attr: str) -> Dataset:
    """Load histories from the line-per-record JSON format.

    Each line is ``{"u": key, "t": [{"i": item, "a": {attr: value, ...}}, ...]}``.
    Lines sharing a user key merge into a single history, transactions kept in
    input order including repeats.
    """

    def gen():
        for lineno, raw in enumerate(_iter_lines(source), 1):
            line = raw.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                user, txns = rec["u"], rec["t"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DatasetError(f"line {lineno}: malformed history record: {exc}") from exc
            for t in txns:
                yield user, t["i"], t["a"]

    return dataset_from_transactions(gen(), shared_attr)


def load_movielens(source) -> Dataset:
    """Load a Movie-Lens ratings file (``user::movie::rating::timestamp``).

    Each rating becomes one transaction on the movie item, with the rating as
    the shared attribute; timestamps are dropped.
    """

    def gen():
        for lineno, raw in enumerate(_iter_lines(source), 1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split("::")
            if len(parts) != 4:
                raise DatasetError(f"line {lineno}: expected user::movie::rating::timestamp")
            user, movie, rating_s, _ts = parts
            try:
                rating = int(rating_s)
            except ValueError as exc:
                raise DatasetError(f"line {lineno}: non-integer rating {rating_s!r}") from exc
            if not 1 <= rating <= 5:
                raise DatasetError(f"line {lineno}: rating {rating} outside 1..5")
            yield user, movie, {"rating": float(rating)}

    ds = dataset_from_transactions(gen(), "rating")
    if not ds.histories:
        raise DatasetError("no usable ratings records in source")
    return ds


def augment_negated(dataset: Dataset, attr: str) -> Dataset:
    """Add the artificial attribute ``attr⁻`` = -attr to every carrying transaction.

    Two ">=" conditions on attr and attr⁻ together express a closed interval,
    which is how antecedents get two-sided bounds.
    """
    neg = attr + NEG_SUFFIX
    carriers = [
        item
        for item, decls in dataset.items.items()
        if attr in decls and decls[attr].kind == QUANTITATIVE
    ]
    if not carriers:
        raise DatasetError(f"attribute {attr!r} is not declared quantitative on any item")
    for item, decls in dataset.items.items():
        if neg in decls:
            raise DatasetError(f"attribute {neg!r} already declared on item {item!r}")

    items: dict[str, dict[str, AttributeDecl]] = {}
    for item, decls in dataset.items.items():
        new_decls = dict(decls)
        if attr in decls and decls[attr].kind == QUANTITATIVE:
            rng = decls[attr].declared_range
            neg_rng = (-rng[1], -rng[0]) if rng is not None else None
            new_decls[neg] = AttributeDecl(neg, QUANTITATIVE, neg_rng)
        items[item] = new_decls

    histories = []
    for h in dataset.histories:
        txns = []
        for t in h.transactions:
            if attr in t.attrs:
                new_attrs = dict(t.attrs)
                new_attrs[neg] = -t.attrs[attr]
                txns.append(Transaction(t.item, new_attrs))
            else:
                txns.append(t)
        histories.append(UserHistory(h.user, txns))
    return Dataset(histories, items, dataset.shared_attr)


def build_value_index(dataset: Dataset) -> ValueIndex:
    """Collect the sorted distinct values each attribute takes per item."""
    seen: dict[tuple[str, str], set[float]] = {}
    for h in dataset.histories:
        for t in h.transactions:
            for a, v in t.attrs.items():
                seen.setdefault((t.item, a), set()).add(v)
    return ValueIndex({key: tuple(sorted(vals)) for key, vals in seen.items()})


def vacuous_thresholds(dataset: Dataset, vi: ValueIndex) -> dict[tuple[str, str], float]:
    """Per (item, attr): the grid minimum, when every transaction of the item
    carries the attribute.  A ">= minimum" constraint on such an attribute
    holds for every history containing the item, i.e. it constrains nothing;
    dominance comparisons use this map to recognize those vacuous constraints.
    """
    txns: dict[str, int] = {}
    carrying: dict[tuple[str, str], int] = {}
    for h in dataset.histories:
        for t in h.transactions:
            txns[t.item] = txns.get(t.item, 0) + 1
            for a in t.attrs:
                key = (t.item, a)
                carrying[key] = carrying.get(key, 0) + 1
    return {
        key: values[0]
        for key, values in vi.entries.items()
        if carrying.get(key, 0) == txns.get(key[0], -1)
    }


def discretize(dataset: Dataset, attr: str, bins: int) -> Dataset:
    """Snap ``attr`` values to the lower edges of equal-width bins.

    Bins span the observed [min, max] per (item, attr); a constant attribute
    is left unchanged.  Opt-in transform for dense value grids.
    """
    if bins < 1:
        raise DatasetError(f"bins must be >= 1, got {bins}")
    spans: dict[str, tuple[float, float]] = {}
    for h in dataset.histories:
        for t in h.transactions:
            if attr in t.attrs:
                v = t.attrs[attr]
                lo, hi = spans.get(t.item, (v, v))
                spans[t.item] = (min(lo, v), max(hi, v))
    if not spans:
        raise DatasetError(f"attribute {attr!r} not present in any transaction")

    def snap(item: str, v: float) -> float:
        lo, hi = spans[item]
        width = (hi - lo) / bins
        if width == 0.0:
            return v
        idx = min(int((v - lo) / width), bins - 1)
        return lo + idx * width

    histories = []
    for h in dataset.histories:
        txns = []
        for t in h.transactions:
            if attr in t.attrs:
                new_attrs = dict(t.attrs)
                new_attrs[attr] = snap(t.item, t.attrs[attr])
                txns.append(Transaction(t.item, new_attrs))
            else:
                txns.append(t)
        histories.append(UserHistory(h.user, txns))
    return Dataset(histories, {i: dict(d) for i, d in dataset.items.items()}, dataset.shared_attr)
