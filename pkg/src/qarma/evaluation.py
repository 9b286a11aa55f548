"""Applying mined rules: coverage, rare-event detection, price estimation,
and the discounting comparison report.

Rule firing here scans histories directly (no bitset index), because rules
are routinely applied to data they were not mined from -- test sets, new
users, continued simulations.  Each quantification is satisfied existentially
and independently over a history's transactions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .dataset import Dataset, UserHistory
from .generators import (
    HorizontalDiscount,
    MarketState,
    PersonalizedDiscount,
    run_discounting,
)
from .rules import EQ, Rule, RuleMetrics, ScoredRule


def _history_values(history: UserHistory) -> dict[tuple[str, str], list[float]]:
    values: dict[tuple[str, str], list[float]] = {}
    for t in history.transactions:
        for a, v in t.attrs.items():
            values.setdefault((t.item, a), []).append(v)
    return values


class HistoryMatcher:
    """Precomputed per-history value lists for repeated rule evaluation."""

    def __init__(self, dataset: Dataset):
        self.dataset = dataset
        self._values = [_history_values(h) for h in dataset.histories]
        self._items = [
            {t.item for t in h.transactions} for h in dataset.histories
        ]

    def __len__(self) -> int:
        return len(self.dataset)

    def _satisfies(self, pos: int, item: str, attr: str, value: float, exact: bool) -> bool:
        vals = self._values[pos].get((item, attr))
        if not vals:
            return False
        if exact:
            return value in vals
        return max(vals) >= value

    def fires(self, rule: Rule, pos: int) -> bool:
        """Antecedent check only: every item present, every constraint met."""
        items = self._items[pos]
        if any(b not in items for b in rule.antecedent):
            return False
        return all(
            self._satisfies(pos, q.item, q.attr, q.value, False)
            for q in rule.antecedent_quants()
        )

    def holds(self, rule: Rule, pos: int) -> bool:
        """Full rule condition (antecedent and consequent)."""
        if not self.fires(rule, pos):
            return False
        if rule.consequent not in self._items[pos]:
            return False
        exact = rule.mode == EQ
        return all(
            self._satisfies(pos, q.item, q.attr, q.value, exact)
            for q in rule.quants
            if q.item == rule.consequent
        )


def _bare_rules(rules: Iterable) -> list[Rule]:
    out = []
    for r in rules:
        out.append(r[0] if isinstance(r, tuple) else r)
    return out


def coverage(rules: Iterable, dataset: Dataset) -> float:
    """Fraction of histories on which at least one rule's full condition holds."""
    if len(dataset) == 0:
        raise ValueError("coverage undefined on an empty dataset")
    matcher = HistoryMatcher(dataset)
    bare = _bare_rules(rules)
    covered = sum(
        1 for pos in range(len(dataset)) if any(matcher.holds(r, pos) for r in bare)
    )
    return covered / len(dataset)


@dataclass(frozen=True)
class DetectionResult:
    detection: float   # flagged anomalies / anomalies
    false_alarm: float  # flagged normals / normals
    accuracy: float    # (hits + correct rejections) / histories


def detect(
    rules: Iterable,
    dataset: Dataset,
    target_item: str,
    threshold: float,
    labels: Mapping[str, bool],
) -> DetectionResult:
    """Flag each history whose antecedents fire for any sufficiently strong rule.

    A rule counts when its consequent is ``target_item`` with value >=
    ``threshold``; flagging ignores the consequent condition itself (that is
    the prediction).  Rates are per history, against the ground-truth labels.
    """
    if not labels:
        raise ValueError("detection requires ground-truth labels")
    bare = _bare_rules(rules)
    active = [
        r
        for r in bare
        if r.consequent == target_item
        and (r.consequent_value() or float("-inf")) >= threshold
    ]
    matcher = HistoryMatcher(dataset)
    tp = fp = tn = fn = 0
    for pos, hist in enumerate(dataset.histories):
        truth = labels[hist.user]
        flagged = any(matcher.fires(r, pos) for r in active)
        if truth and flagged:
            tp += 1
        elif truth:
            fn += 1
        elif flagged:
            fp += 1
        else:
            tn += 1
    anomalies = tp + fn
    normals = fp + tn
    return DetectionResult(
        detection=tp / anomalies if anomalies else 0.0,
        false_alarm=fp / normals if normals else 0.0,
        accuracy=(tp + tn) / len(dataset.histories) if dataset.histories else 0.0,
    )


def roc_sweep(
    scored: Sequence[ScoredRule],
    dataset: Dataset,
    target_item: str,
    threshold: float,
    labels: Mapping[str, bool],
    confidence_cuts: Sequence[float],
) -> list[tuple[float, float, float, float]]:
    """Detection operating points for increasing training-confidence cuts.

    Mines once at the lowest confidence and filters at evaluation time, which
    is equivalent to re-mining per point and far cheaper.  Returns
    (cut, detection, false_alarm, accuracy) rows.
    """
    rows = []
    for cut in confidence_cuts:
        subset = [(r, m) for r, m in scored if m.confidence >= cut]
        res = detect(subset, dataset, target_item, threshold, labels)
        rows.append((cut, res.detection, res.false_alarm, res.accuracy))
    return rows


def estimate_reservation_price(
    scored: Iterable[ScoredRule],
    history: UserHistory,
    item: str,
    min_conf: float = 0.7,
) -> float | None:
    """Largest consequent value among sufficiently confident rules that fire."""
    matcher = HistoryMatcher(Dataset([history], {}, ""))
    best: float | None = None
    for rule, metrics in scored:
        if rule.consequent != item or metrics.confidence < min_conf:
            continue
        v = rule.consequent_value()
        if v is None or (best is not None and v <= best):
            continue
        if matcher.fires(rule, 0):
            best = v
    return best


def build_reservation_estimator(
    scored: Sequence[ScoredRule],
    dataset: Dataset,
    state: MarketState,
    min_conf: float = 0.7,
):
    """(user index, item index) -> estimated reservation price, for the
    personalized discounting policy.  Estimates come from the mining-time
    histories: the largest fired consequent value per (user, item)."""
    matcher = HistoryMatcher(dataset)
    by_user: list[dict[str, float]] = [{} for _ in range(len(dataset))]
    for rule, metrics in scored:
        if metrics.confidence < min_conf:
            continue
        v = rule.consequent_value()
        if v is None:
            continue
        for pos in range(len(dataset)):
            if by_user[pos].get(rule.consequent, float("-inf")) >= v:
                continue
            if matcher.fires(rule, pos):
                by_user[pos][rule.consequent] = v

    index_of = dataset.user_index

    def estimator(user_idx: int, item_idx: int) -> float | None:
        pos = index_of.get(state.user_key(user_idx))
        if pos is None:
            return None
        return by_user[pos].get(state.item_id(item_idx))

    return estimator


@dataclass(frozen=True)
class DiscountRow:
    level: float
    baseline: float
    horizontal: float
    horizontal_pct: float
    personalized: float
    personalized_pct: float


def report_discounting(
    state: MarketState,
    dataset: Dataset,
    scored: Sequence[ScoredRule],
    levels: Sequence[float] = (0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40),
    cycles: int = 100,
    min_conf: float = 0.7,
) -> list[DiscountRow]:
    """Baseline vs storewide vs estimator-driven discounting, per level.

    All three runs continue the same simulation from the same cycle with the
    same random substreams, so differences are attributable to pricing alone.
    """
    estimator = build_reservation_estimator(scored, dataset, state, min_conf)
    baseline = run_discounting(state, None, cycles)
    rows = []
    for level in levels:
        horizontal = run_discounting(state, HorizontalDiscount(level), cycles)
        personalized = run_discounting(
            state, PersonalizedDiscount(estimator, level), cycles
        )
        rows.append(
            DiscountRow(
                level=level,
                baseline=baseline,
                horizontal=horizontal,
                horizontal_pct=(horizontal - baseline) / baseline * 100.0,
                personalized=personalized,
                personalized_pct=(personalized - baseline) / baseline * 100.0,
            )
        )
    return rows


def discount_report_lines(rows: Iterable[DiscountRow]) -> list[str]:
    """Comma-separated lines mirroring the revenue table's columns."""
    out = ["level,baseline,horizontal,horizontal_pct,personalized,personalized_pct"]
    for r in rows:
        out.append(
            f"{r.level:.6g},{r.baseline:.6g},{r.horizontal:.6g},"
            f"{r.horizontal_pct:.6g},{r.personalized:.6g},{r.personalized_pct:.6g}"
        )
    return out


def roc_lines(rows: Iterable[tuple[float, float, float, float]]) -> list[str]:
    """Comma-separated "conf_cut,detection,false_alarm,accuracy" lines."""
    return [f"{c:.6g},{d:.6g},{f:.6g},{a:.6g}" for c, d, f, a in rows]
