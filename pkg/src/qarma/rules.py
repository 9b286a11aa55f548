"""Quantified rules, the dominance and widening relations, and the rule store.

A rule ``B -> I | Q`` pairs an antecedent item set B with a single consequent
item I; the quantification set Q holds (item, attribute, value) tuples keyed
by (item, attribute).  Antecedent tuples always read "some transaction of the
item has attribute >= value"; the consequent tuple reads ">=" in geq mode and
"=" in eq mode.

A rule is dominated when another rule with the same consequent says at least
as much (superset-free antecedent, lower antecedent thresholds, consequent
value at least as high) at least as reliably (support and the configured
interestingness metrics no lower).  Dominated rules carry no information and
are pruned everywhere.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence

from .dataset import ValueIndex

GEQ = "geq"
EQ = "eq"

_NEG_INF = float("-inf")


class Quantification(NamedTuple):
    item: str
    attr: str
    value: float


@dataclass(frozen=True)
class Rule:
    antecedent: frozenset[str]
    consequent: str
    quants: tuple[Quantification, ...]  # canonically sorted by (item, attr)
    mode: str = GEQ

    @staticmethod
    def make(
        antecedent: Iterable[str],
        consequent: str,
        quants: Iterable[tuple[str, str, float]],
        mode: str = GEQ,
    ) -> "Rule":
        ante = frozenset(antecedent)
        if consequent in ante:
            raise ValueError(f"consequent {consequent!r} also appears in the antecedent")
        if mode not in (GEQ, EQ):
            raise ValueError(f"unknown rule mode {mode!r}")
        qs = tuple(sorted(Quantification(i, a, float(v)) for i, a, v in quants))
        keys = [(q.item, q.attr) for q in qs]
        if len(set(keys)) != len(keys):
            raise ValueError("quantification set holds two tuples with the same (item, attr)")
        members = ante | {consequent}
        for q in qs:
            if q.item not in members:
                raise ValueError(f"quantified item {q.item!r} not in rule items")
        return Rule(ante, consequent, qs, mode)

    def consequent_value(self) -> float | None:
        """Value constrained on the consequent item, or None if unquantified."""
        for q in self.quants:
            if q.item == self.consequent:
                return q.value
        return None

    def antecedent_quants(self) -> Iterator[Quantification]:
        return (q for q in self.quants if q.item != self.consequent)


@dataclass(frozen=True)
class RuleMetrics:
    support: float
    confidence: float
    cons_supp: float
    conviction: float  # math.inf when confidence == 1
    lift: float
    leverage: float


ScoredRule = tuple[Rule, RuleMetrics]

DEFAULT_LTF = ("confidence",)


def _cons_value(rule: Rule) -> float:
    v = rule.consequent_value()
    return _NEG_INF if v is None else v


# The vacuity map resolves an asymmetry the worked examples force: a
# constraint at an attribute's observed minimum holds for every history that
# contains the item (when every transaction of the item carries the
# attribute), so such a constraint says nothing.  Two rules that differ only
# in vacuous constraints are the same rule and must not survive side by side.
# Maps (item, attr) -> minimum grid value, for attributes carried by every
# transaction of the item; comparisons treat a missing antecedent key as an
# implicit constraint at that value.
VacuityMap = dict

def dominates(
    winner: Rule,
    winner_metrics: RuleMetrics,
    loser: Rule,
    loser_metrics: RuleMetrics,
    ltf_metrics: Sequence[str] = DEFAULT_LTF,
    vacuums: VacuityMap | None = None,
) -> bool:
    """True if ``winner`` dominates ``loser``.  Reflexive; all checks non-strict."""
    if winner.mode != loser.mode:
        raise ValueError(f"mode mismatch: {winner.mode!r} vs {loser.mode!r}")
    if winner.consequent != loser.consequent:
        return False
    if not loser.antecedent >= winner.antecedent:
        return False
    wv, lv = _cons_value(winner), _cons_value(loser)
    if winner.mode == EQ:
        if wv != lv:
            return False
    elif wv < lv:
        return False
    if loser_metrics.support > winner_metrics.support:
        return False
    for name in ltf_metrics:
        if getattr(loser_metrics, name) > getattr(winner_metrics, name):
            return False
    return _quants_at_most(winner, loser, vacuums)


def _quants_at_most(winner: Rule, loser: Rule, vacuums: VacuityMap | None) -> bool:
    # Every antecedent constraint of the winner must be matched (same item and
    # attribute) by a loser constraint at least as tight; a loser missing the
    # key counts as constrained at the attribute's vacuous threshold.
    loser_q = {(q.item, q.attr): q.value for q in loser.antecedent_quants()}
    for q in winner.antecedent_quants():
        lv = loser_q.get((q.item, q.attr))
        if lv is None and vacuums is not None:
            lv = vacuums.get((q.item, q.attr))
        if lv is None or q.value > lv:
            return False
    return True


def wider(winner: Rule, loser: Rule, vacuums: VacuityMap | None = None) -> bool:
    """The dominance relation minus the support/interestingness comparisons."""
    if winner.mode != loser.mode:
        raise ValueError(f"mode mismatch: {winner.mode!r} vs {loser.mode!r}")
    if winner.consequent != loser.consequent:
        return False
    if not loser.antecedent >= winner.antecedent:
        return False
    wv, lv = _cons_value(winner), _cons_value(loser)
    if winner.mode == EQ:
        if wv != lv:
            return False
    elif wv < lv:
        return False
    return _quants_at_most(winner, loser, vacuums)


class RuleStore:
    """Dominance-checked rule collection bucketed by consequent item.

    Each bucket is kept in decreasing order of the consequent value so that
    dominance scans can stop as soon as the scanned value drops below the
    candidate's (a dominating rule never constrains the consequent lower).

    With a vacuity map, two distinct rules can dominate each other (they
    differ only in vacuous constraints); the one with the smaller canonical
    sort key wins, which keeps the store contents independent of insertion
    order.
    """

    def __init__(self, ltf_metrics: Sequence[str] = DEFAULT_LTF,
                 vacuums: VacuityMap | None = None):
        self.ltf_metrics = tuple(ltf_metrics)
        self.vacuums = vacuums
        self.buckets: dict[str, list[ScoredRule]] = {}

    def __len__(self) -> int:
        return sum(len(b) for b in self.buckets.values())

    def scored_rules(self) -> Iterator[ScoredRule]:
        for bucket in self.buckets.values():
            yield from bucket

    def _beats(self, a: ScoredRule, b: ScoredRule) -> bool:
        # Strict order: a dominates b and b does not dominate a back with a
        # smaller canonical key.  Structural duplicates beat nothing.
        if a[0] == b[0]:
            return False
        if not dominates(a[0], a[1], b[0], b[1], self.ltf_metrics, self.vacuums):
            return False
        if not dominates(b[0], b[1], a[0], a[1], self.ltf_metrics, self.vacuums):
            return True
        return sort_key(a[0]) < sort_key(b[0])

    def exists_dominating(self, rule: Rule, metrics: RuleMetrics) -> bool:
        """True when a stored rule makes this one redundant (itself included)."""
        bucket = self.buckets.get(rule.consequent)
        if not bucket:
            return False
        value = _cons_value(rule)
        cand = (rule, metrics)
        for entry in bucket:
            ov = _cons_value(entry[0])
            if ov < value:
                break  # sorted descending: nothing below can dominate
            if rule.mode == EQ and ov != value:
                continue
            if entry[0] == rule or self._beats(entry, cand):
                return True
        return False

    def insert_if_undominated(self, rule: Rule, metrics: RuleMetrics) -> bool:
        """Insert unless redundant; evict stored rules the newcomer beats."""
        if self.exists_dominating(rule, metrics):
            return False
        bucket = self.buckets.setdefault(rule.consequent, [])
        value = _cons_value(rule)
        cand = (rule, metrics)
        kept: list[ScoredRule] = []
        pos = None
        for entry in bucket:
            ov = _cons_value(entry[0])
            if ov <= value and self._beats(cand, entry):
                continue
            if pos is None and ov < value:
                pos = len(kept)
            kept.append(entry)
        if pos is None:
            pos = len(kept)
        kept.insert(pos, cand)
        self.buckets[rule.consequent] = kept
        return True

    def bulk_load(self, scored: Iterable[ScoredRule]) -> None:
        """Fill buckets from an already dominance-minimal collection."""
        for rule, metrics in scored:
            self.buckets.setdefault(rule.consequent, []).append((rule, metrics))
        for bucket in self.buckets.values():
            bucket.sort(key=lambda e: -_cons_value(e[0]))


def final_prune(
    scored: Iterable[ScoredRule],
    ltf_metrics: Sequence[str] = DEFAULT_LTF,
    vacuums: VacuityMap | None = None,
) -> list[ScoredRule]:
    """Reduce a collection to its dominance-minimal subset.  Idempotent.

    Needed after merging worker-local results: two workers may emit a
    dominating/dominated pair within the same level without seeing each other.
    """
    store = RuleStore(ltf_metrics, vacuums)
    seen: set[Rule] = set()
    for rule, metrics in sorted(scored, key=lambda e: sort_key(e[0])):
        if rule in seen:
            continue
        seen.add(rule)
        store.insert_if_undominated(rule, metrics)
    return sorted(store.scored_rules(), key=lambda e: sort_key(e[0]))


def widest_filter(
    scored: Iterable[ScoredRule],
    vacuums: VacuityMap | None = None,
) -> list[ScoredRule]:
    """Drop every rule for which a distinct wider rule is present.

    Two distinct mutually-wider rules (vacuous variants) resolve to the one
    with the smaller canonical key, as in the store.
    """
    entries = list(scored)
    by_consequent: dict[str, list[Rule]] = {}
    for rule, _ in entries:
        by_consequent.setdefault(rule.consequent, []).append(rule)
    kept = []
    for rule, metrics in entries:
        beaten = False
        for other in by_consequent[rule.consequent]:
            if other == rule or not wider(other, rule, vacuums):
                continue
            if not wider(rule, other, vacuums) or sort_key(other) < sort_key(rule):
                beaten = True
                break
        if not beaten:
            kept.append((rule, metrics))
    return kept


GT = ">"
GE = ">="
EQUAL = "="


@dataclass(frozen=True)
class DisplayCondition:
    item: str
    attr: str
    op: str
    value: float

    def __str__(self) -> str:
        return f"{self.item}[{self.attr}{self.op}{self.value:g}]"


@dataclass(frozen=True)
class DisplayRule:
    antecedent: tuple[DisplayCondition, ...]
    consequent: DisplayCondition | None

    def __str__(self) -> str:
        lhs = " ^ ".join(str(c) for c in self.antecedent)
        rhs = str(self.consequent) if self.consequent is not None else ""
        return f"{lhs} -> {rhs}"


def generalize(rule: Rule, vi: ValueIndex) -> DisplayRule:
    """Rewrite grid thresholds as strict bounds at the predecessor value.

    Evidence for ``item[attr >= v]`` on the training data equally supports
    ``item[attr > w]`` where w is the greatest observed value below v; when no
    smaller value exists the ``>=`` reading is kept.  Equality-mode consequents
    stay exact.
    """
    ante = []
    cons: DisplayCondition | None = None
    for q in rule.quants:
        if q.item == rule.consequent and rule.mode == EQ:
            cons = DisplayCondition(q.item, q.attr, EQUAL, q.value)
            continue
        pred = vi.predecessor(q.item, q.attr, q.value)
        cond = (
            DisplayCondition(q.item, q.attr, GT, pred)
            if pred is not None
            else DisplayCondition(q.item, q.attr, GE, q.value)
        )
        if q.item == rule.consequent:
            cons = cond
        else:
            ante.append(cond)
    return DisplayRule(tuple(ante), cons)


def sort_key(rule: Rule):
    """Canonical output order: consequent item, then decreasing consequent
    value, then antecedent, then the quantification set, shorter first.

    Shorter-first also picks the lean member of a class of rules that differ
    only in vacuous constraints.
    """
    return (rule.consequent, -_cons_value(rule), sorted(rule.antecedent),
            len(rule.quants), rule.quants)


def _round_sig(x: float, sig: int = 6) -> float:
    return float(f"{x:.{sig}g}")


def rule_to_dict(rule: Rule, metrics: RuleMetrics, sig: int | None = 6) -> dict:
    rnd = (lambda x: _round_sig(x, sig)) if sig is not None else (lambda x: x)
    return {
        "B": sorted(rule.antecedent),
        "I": rule.consequent,
        "Q": [[q.item, q.attr, rnd(q.value)] for q in rule.quants],
        "mode": rule.mode,
        "support": rnd(metrics.support),
        "confidence": rnd(metrics.confidence),
        "cons_supp": rnd(metrics.cons_supp),
        "conviction": "inf" if math.isinf(metrics.conviction) else rnd(metrics.conviction),
        "lift": rnd(metrics.lift),
        "leverage": rnd(metrics.leverage),
    }


def format_rule_line(rule: Rule, metrics: RuleMetrics, sig: int | None = 6) -> str:
    """One-line JSON form.  ``sig=None`` keeps full float precision (used on
    the wire, where values must round-trip exactly); 6 significant digits is
    the file output contract."""
    return json.dumps(rule_to_dict(rule, metrics, sig), ensure_ascii=False)


def parse_rule_line(line: str) -> ScoredRule:
    rec = json.loads(line)
    rule = Rule.make(rec["B"], rec["I"], [tuple(q) for q in rec["Q"]], rec["mode"])
    conviction = math.inf if rec["conviction"] == "inf" else float(rec["conviction"])
    metrics = RuleMetrics(
        support=float(rec["support"]),
        confidence=float(rec["confidence"]),
        cons_supp=float(rec["cons_supp"]),
        conviction=conviction,
        lift=float(rec["lift"]),
        leverage=float(rec["leverage"]),
    )
    return rule, metrics


def write_rule_lines(scored: Iterable[ScoredRule], path, sig: int | None = 6) -> int:
    """Write rules sorted canonically; returns the number written."""
    ordered = sorted(scored, key=lambda e: sort_key(e[0]))
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rule, metrics in ordered:
            fh.write(format_rule_line(rule, metrics, sig) + "\n")
            n += 1
    return n


def read_rule_lines(source) -> list[ScoredRule]:
    if isinstance(source, (str,)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8") as fh:
            return [parse_rule_line(line) for line in fh if line.strip()]
    return [parse_rule_line(line) for line in source if line.strip()]
