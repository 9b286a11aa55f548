"""Bitset cache over dense user indices for constant-scan support counting.

Bitsets are plain Python ints: bit u is set when user u (dense index) matches
a predicate.  Support and confidence of any quantified rule then reduce to
AND-ing a handful of cached bitsets and counting bits.

Three bitset families are cached per dataset:

* presence[item]            -- users whose history contains the item at all
* thresholds[item, attr][j] -- users with some transaction of the item whose
                               attribute value is >= the j-th grid value
* exact[item, attr][j]      -- same, but == the j-th grid value (equality-mode
                               consequents)

Threshold bitsets are nested: level j+1 is a subset of level j.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

from .dataset import Dataset, DatasetError, ValueIndex, build_value_index
from .rules import EQ, Quantification, Rule, RuleMetrics


class MetricUndefinedError(ValueError):
    """A metric's denominator is zero for the queried rule."""


class SupportIndex:
    def __init__(
        self,
        universe: int,
        presence: dict[str, int],
        thresholds: dict[tuple[str, str], list[int]],
        exact: dict[tuple[str, str], list[int]],
        vi: ValueIndex,
    ):
        self.universe = universe
        self.presence = presence
        self.thresholds = thresholds
        self.exact = exact
        self.vi = vi

    def presence_bits(self, item: str) -> int:
        return self.presence.get(item, 0)

    def threshold_bits(self, item: str, attr: str, value: float) -> int:
        level = self.vi.level(item, attr, value)
        return self.thresholds[(item, attr)][level]

    def exact_bits(self, item: str, attr: str, value: float) -> int:
        level = self.vi.level(item, attr, value)
        return self.exact[(item, attr)][level]


def build_index(dataset: Dataset, vi: ValueIndex | None = None) -> SupportIndex:
    """Populate presence/threshold/exact bitsets for every grid value."""
    if vi is None:
        vi = build_value_index(dataset)
    presence: dict[str, int] = {}
    exact: dict[tuple[str, str], list[int]] = {
        key: [0] * len(vals) for key, vals in vi.entries.items()
    }
    for pos, hist in enumerate(dataset.histories):
        bit = 1 << pos
        for t in hist.transactions:
            presence[t.item] = presence.get(t.item, 0) | bit
            for a, v in t.attrs.items():
                exact[(t.item, a)][vi.level(t.item, a, v)] |= bit
    thresholds: dict[tuple[str, str], list[int]] = {}
    for key, levels in exact.items():
        acc = 0
        out = [0] * len(levels)
        for j in range(len(levels) - 1, -1, -1):  # descending cumulative union
            acc |= levels[j]
            out[j] = acc
        thresholds[key] = out
    return SupportIndex(len(dataset), presence, thresholds, exact, vi)


def matching_histories(
    idx: SupportIndex,
    items: Iterable[str],
    quants: Iterable[tuple[str, str, float]],
    mode: str = "geq",
    eq_item: str | None = None,
) -> int:
    """Bitset of users satisfying every item-presence and quantification.

    Each quantification is checked existentially and independently over a
    history's transactions.  When ``mode`` is eq, quantifications on
    ``eq_item`` (the consequent) demand an exact value match.
    """
    items = set(items)
    bits = (1 << idx.universe) - 1
    for item in items:
        bits &= idx.presence_bits(item)
    for item, attr, value in quants:
        if item not in items:
            raise ValueError(f"quantified item {item!r} not in the queried item set")
        if mode == EQ and item == eq_item:
            bits &= idx.exact_bits(item, attr, value)
        else:
            bits &= idx.threshold_bits(item, attr, value)
    return bits


def _rule_counts(idx: SupportIndex, rule: Rule) -> tuple[int, int, int]:
    """(joint, antecedent-only, consequent-only) match counts for a rule."""
    eq_item = rule.consequent if rule.mode == EQ else None
    joint = matching_histories(
        idx, rule.antecedent | {rule.consequent}, rule.quants, rule.mode, eq_item
    )
    ante_quants = list(rule.antecedent_quants())
    ante = matching_histories(idx, rule.antecedent, ante_quants, rule.mode, eq_item)
    cons_quants = [q for q in rule.quants if q.item == rule.consequent]
    cons = matching_histories(idx, {rule.consequent}, cons_quants, rule.mode, eq_item)
    return joint.bit_count(), ante.bit_count(), cons.bit_count()


def support(idx: SupportIndex, rule: Rule) -> float:
    """Fraction of user histories satisfying the whole rule condition."""
    if idx.universe == 0:
        raise MetricUndefinedError("support undefined on an empty dataset")
    joint, _, _ = _rule_counts(idx, rule)
    return joint / idx.universe


def confidence(idx: SupportIndex, rule: Rule) -> float:
    """Joint match count over antecedent match count."""
    joint, ante, _ = _rule_counts(idx, rule)
    if ante == 0:
        raise MetricUndefinedError("confidence undefined: antecedent matches no history")
    return joint / ante


def extended_metrics(idx: SupportIndex, rule: Rule) -> dict[str, float]:
    """Consequent support, conviction, lift and leverage of one rule."""
    if idx.universe == 0:
        raise MetricUndefinedError("metrics undefined on an empty dataset")
    joint, ante, cons = _rule_counts(idx, rule)
    if ante == 0:
        raise MetricUndefinedError("confidence undefined: antecedent matches no history")
    if cons == 0:
        raise MetricUndefinedError("lift undefined: consequent support is zero")
    n = idx.universe
    conf = joint / ante
    cons_supp = cons / n
    conviction = math.inf if conf == 1.0 else (1.0 - cons_supp) / (1.0 - conf)
    return {
        "cons_supp": cons_supp,
        "conviction": conviction,
        "lift": conf / cons_supp,
        "leverage": joint / n - (ante / n) * cons_supp,
    }


def rule_metrics(idx: SupportIndex, rule: Rule) -> RuleMetrics:
    """All six metrics in one pass (support, confidence and the extended set)."""
    if idx.universe == 0:
        raise MetricUndefinedError("metrics undefined on an empty dataset")
    joint, ante, cons = _rule_counts(idx, rule)
    if ante == 0:
        raise MetricUndefinedError("confidence undefined: antecedent matches no history")
    if cons == 0:
        raise MetricUndefinedError("lift undefined: consequent support is zero")
    return metrics_from_counts(joint, ante, cons, idx.universe)


def metrics_from_counts(joint: int, ante: int, cons: int, universe: int) -> RuleMetrics:
    n = universe
    conf = joint / ante
    cons_supp = cons / n
    conviction = math.inf if conf == 1.0 else (1.0 - cons_supp) / (1.0 - conf)
    return RuleMetrics(
        support=joint / n,
        confidence=conf,
        cons_supp=cons_supp,
        conviction=conviction,
        lift=conf / cons_supp,
        leverage=joint / n - (ante / n) * cons_supp,
    )
