"""Level-synchronized search for all non-dominated quantified rules.

For every frequent itemset (processed strictly by size), each choice of
consequent yields a base rule.  The consequent's shared-attribute values are
tried from the highest grid value down; each passing value seeds a FIFO queue
of quantification sets that is expanded by adding one antecedent constraint at
a time.  Antecedent value loops ascend and stop at the first support failure,
which is safe because tightening a constraint can only shrink coverage.
Candidate rules that meet every metric threshold enter a worker-local store
unless a dominating rule is already visible.

Parallelism is per level: itemsets of one size are batched over a pool of
forked worker processes, each holding a private store and a read-only snapshot
of the global rule set taken at level start.  Workers never communicate
mid-level; local results merge at the level boundary and are re-pruned, which
makes the final rule set independent of worker count, batch size and dispatch
order.
"""

from __future__ import annotations

import logging
import multiprocessing
import pickle
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .dataset import (
    Dataset,
    DatasetError,
    ValueIndex,
    augment_negated,
    build_value_index,
    vacuous_thresholds,
)
from .index import SupportIndex, build_index, metrics_from_counts
from .itemsets import OrdMaps, default_ord, mine_frequent
from .rules import (
    DEFAULT_LTF,
    EQ,
    GEQ,
    Quantification,
    Rule,
    RuleStore,
    ScoredRule,
    final_prune,
    sort_key,
    widest_filter,
)

log = logging.getLogger("qarma.engine")

METRIC_NAMES = ("support", "confidence", "cons_supp", "conviction", "lift", "leverage")


@dataclass
class EngineConfig:
    s_min: float
    thresholds: dict[str, float] = field(default_factory=dict)
    ltf_metrics: tuple[str, ...] = DEFAULT_LTF
    shared_attr: str | None = None
    max_len: int = 3
    workers: int = 1
    batch: int = 128
    mode: str = GEQ
    widest: bool = False
    negate_attrs: tuple[str, ...] = ()
    audit_breaks: bool = False

    def __post_init__(self) -> None:
        if not 0.0 < self.s_min <= 1.0:
            raise ValueError(f"s_min must be in (0, 1], got {self.s_min}")
        if not self.thresholds:
            raise ValueError("at least one interestingness threshold is required")
        for name in list(self.thresholds) + list(self.ltf_metrics):
            if name not in METRIC_NAMES:
                raise ValueError(f"unknown metric {name!r}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")
        if self.mode not in (GEQ, EQ):
            raise ValueError(f"mode must be 'geq' or 'eq', got {self.mode!r}")


# One break event: (antecedent, consequent, mode, quants so far, (item, attr),
# grid values skipped by the break).  Only collected when audit_breaks is set.
BreakEvent = tuple[tuple[str, ...], str, str, tuple, tuple[str, str], tuple[float, ...]]


@dataclass
class _MiningContext:
    idx: SupportIndex
    vi: ValueIndex
    ord_maps: OrdMaps
    config: EngineConfig
    shared_attr: str
    # per item: [(attr, grid values, threshold bitsets per level), ...] in attr order
    item_attrs: dict[str, list[tuple[str, tuple[float, ...], list[int]]]]
    # (item, attr) -> grid minimum for attributes carried on every transaction
    vacuums: dict[tuple[str, str], float]

    @property
    def n(self) -> int:
        return self.idx.universe


def _build_context(idx: SupportIndex, vi: ValueIndex, ord_maps: OrdMaps,
                   config: EngineConfig, shared_attr: str,
                   vacuums: dict[tuple[str, str], float]) -> _MiningContext:
    item_attrs: dict[str, list[tuple[str, tuple[float, ...], list[int]]]] = {}
    for (item, attr), values in vi.entries.items():
        if (item, attr) in ord_maps.attr_ord:
            item_attrs.setdefault(item, []).append((attr, values, idx.thresholds[(item, attr)]))
    for item, attrs in item_attrs.items():
        attrs.sort(key=lambda e: ord_maps.attr_rank(item, e[0]))
    return _MiningContext(idx, vi, ord_maps, config, shared_attr, item_attrs, vacuums)


def base_rules(itemset: Sequence[str]) -> list[tuple[tuple[str, ...], str]]:
    """One unquantified rule per choice of consequent item."""
    items = tuple(itemset)
    if len(items) < 2:
        raise ValueError(f"base rules need an itemset of size >= 2, got {items!r}")
    return [(tuple(j for j in items if j != i), i) for i in items]


def eligible_item(item: str, quants: Iterable[tuple], antecedent: Iterable[str],
                  ord_maps: OrdMaps) -> bool:
    """May ``item``'s attributes be quantified next, given the current set?

    False when some antecedent item of higher rank is already quantified;
    quantifying below it would recreate a set reachable another way.
    """
    ante = set(antecedent)
    ranks = [ord_maps.ord(q[0]) for q in quants if q[0] in ante]
    return not ranks or ord_maps.ord(item) >= max(ranks)


def eligible_attr(item: str, attr: str, quants: Iterable[tuple],
                  antecedent: Iterable[str], ord_maps: OrdMaps) -> bool:
    """May this attribute of ``item`` be quantified next?"""
    quants = list(quants)
    if not eligible_item(item, quants, antecedent, ord_maps):
        return False
    ranks = [ord_maps.attr_rank(item, q[1]) for q in quants if q[0] == item]
    return not ranks or ord_maps.attr_rank(item, attr) > max(ranks)


def expand_rule(
    antecedent: tuple[str, ...],
    consequent: str,
    snapshot: RuleStore,
    local: RuleStore,
    ctx: _MiningContext,
    audits: list[BreakEvent] | None = None,
) -> list[ScoredRule]:
    """Enumerate all valid quantifications of one base rule.

    Returns the rules added to ``local`` during this call; dominance is
    checked against the level-start snapshot and the local store.
    """
    cfg = ctx.config
    n = ctx.n
    s_min = cfg.s_min
    eq_mode = cfg.mode == EQ
    p = ctx.shared_attr
    ord_maps = ctx.ord_maps
    thresholds = list(cfg.thresholds.items())
    added: list[ScoredRule] = []

    key = (consequent, p)
    if key not in ctx.vi.entries:
        return added
    cons_values = ctx.vi.entries[key]
    cons_levels = ctx.idx.exact[key] if eq_mode else ctx.idx.thresholds[key]

    presence_b = -1
    for j_item in antecedent:
        presence_b &= ctx.idx.presence_bits(j_item)
    sorted_b = ord_maps.sort_items(antecedent)
    ante_frozen = frozenset(antecedent)

    for i in range(len(cons_values) - 1, -1, -1):
        cons_bits = cons_levels[i]
        joint0 = presence_b & cons_bits
        if joint0.bit_count() / n < s_min:
            continue
        cons_count = cons_bits.bit_count()
        queue: deque = deque()
        queue.append(((Quantification(consequent, p, cons_values[i]),), joint0, presence_b))
        while queue:
            quants, joint, ante = queue.popleft()
            max_item_rank = -1
            attr_ranks: dict[str, int] = {}
            for q in quants:
                if q.item == consequent:
                    continue
                r = ord_maps.ord(q.item)
                if r > max_item_rank:
                    max_item_rank = r
                ar = ord_maps.attr_rank(q.item, q.attr)
                if ar > attr_ranks.get(q.item, -1):
                    attr_ranks[q.item] = ar
            for j_item in sorted_b:
                if ord_maps.ord(j_item) < max_item_rank:
                    continue
                top_attr = attr_ranks.get(j_item, -1)
                for attr, values, levels in ctx.item_attrs.get(j_item, ()):
                    if ord_maps.attr_rank(j_item, attr) <= top_attr:
                        continue
                    for j, value in enumerate(values):
                        joint2 = joint & levels[j]
                        jc = joint2.bit_count()
                        if jc / n < s_min:
                            if audits is not None:
                                audits.append((antecedent, consequent, cfg.mode, quants,
                                               (j_item, attr), values[j + 1:]))
                            break
                        ante2 = ante & levels[j]
                        quants2 = quants + (Quantification(j_item, attr, value),)
                        queue.append((quants2, joint2, ante2))
                        metrics = metrics_from_counts(jc, ante2.bit_count(), cons_count, n)
                        if all(getattr(metrics, name) >= c for name, c in thresholds):
                            rule = Rule(ante_frozen, consequent, tuple(sorted(quants2)), cfg.mode)
                            if not snapshot.exists_dominating(rule, metrics):
                                if local.insert_if_undominated(rule, metrics):
                                    added.append((rule, metrics))
    return added


def _process_batch(
    batch: Sequence[tuple[str, ...]],
    snapshot: RuleStore,
    ctx: _MiningContext,
) -> tuple[list[ScoredRule], list[BreakEvent]]:
    local = RuleStore(ctx.config.ltf_metrics, ctx.vacuums)
    audits: list[BreakEvent] = [] if ctx.config.audit_breaks else None
    for itemset in batch:
        for antecedent, consequent in base_rules(itemset):
            expand_rule(antecedent, consequent, snapshot, local, ctx, audits)
    return list(local.scored_rules()), (audits or [])


# Fork-inherited context for pool workers; set in the parent before the pool
# is created so children share it copy-on-write.
_POOL_CTX: _MiningContext | None = None


def _pool_run(task):
    batch, snapshot_blob = task
    snapshot = RuleStore(_POOL_CTX.config.ltf_metrics, _POOL_CTX.vacuums)
    snapshot.bulk_load(pickle.loads(snapshot_blob))
    return _process_batch(batch, snapshot, _POOL_CTX)


def run_level(
    k: int,
    itemsets: Sequence[tuple[str, ...]],
    global_scored: list[ScoredRule],
    ctx: _MiningContext,
    pool=None,
) -> tuple[list[ScoredRule], dict, list[BreakEvent]]:
    """Process all itemsets of size k and merge local results into the global set."""
    cfg = ctx.config
    batches = [tuple(itemsets[i: i + cfg.batch]) for i in range(0, len(itemsets), cfg.batch)]
    audits: list[BreakEvent] = []
    additions: list[ScoredRule] = []
    if pool is not None and len(batches) > 1:
        blob = pickle.dumps(global_scored)
        for adds, batch_audits in pool.map(_pool_run, [(b, blob) for b in batches]):
            additions.extend(adds)
            audits.extend(batch_audits)
    else:
        snapshot = RuleStore(cfg.ltf_metrics, ctx.vacuums)
        snapshot.bulk_load(global_scored)
        for batch in batches:
            adds, batch_audits = _process_batch(batch, snapshot, ctx)
            additions.extend(adds)
            audits.extend(batch_audits)
    before = {rule for rule, _ in global_scored}
    merged = final_prune(global_scored + additions, cfg.ltf_metrics, ctx.vacuums)
    stats = {
        "k": k,
        "itemsets": len(itemsets),
        "rules_added": sum(1 for rule, _ in merged if rule not in before),
    }
    log.info("level %d: %d itemsets, %d rules after merge", k, len(itemsets), len(merged))
    return merged, stats, audits


def mine(dataset: Dataset, config: EngineConfig) -> tuple[list[ScoredRule], dict]:
    """Mine all non-dominated rules meeting the support and metric thresholds.

    Returns the canonically sorted rule list and a run report with the
    itemset/quantification timing split and per-level counts.
    """
    global _POOL_CTX
    t0 = time.perf_counter()
    if len(dataset) == 0:
        raise DatasetError("cannot mine an empty dataset")
    ds = dataset
    for attr in config.negate_attrs:
        ds = augment_negated(ds, attr)
    p = config.shared_attr or ds.shared_attr
    if p != ds.shared_attr:
        ds = Dataset(ds.histories, ds.items, p)
    for item in ds.items:
        decls = ds.items[item]
        if p not in decls:
            raise DatasetError(f"shared attribute {p!r} not declared on item {item!r}")

    vi = build_value_index(ds)
    idx = build_index(ds, vi)
    ord_maps = default_ord(ds)
    levels = mine_frequent(idx, config.s_min, config.max_len, ord_maps)
    itemset_secs = time.perf_counter() - t0

    vacuums = vacuous_thresholds(ds, vi)
    ctx = _build_context(idx, vi, ord_maps, config, p, vacuums)
    scored: list[ScoredRule] = []
    level_stats: list[dict] = []
    audits: list[BreakEvent] = []
    pool = None
    try:
        if config.workers > 1:
            _POOL_CTX = ctx
            pool = multiprocessing.get_context("fork").Pool(config.workers)
        for k in sorted(levels):
            if k < 2:
                continue
            scored, stats, level_audits = run_level(k, levels[k], scored, ctx, pool)
            level_stats.append(stats)
            audits.extend(level_audits)
    finally:
        if pool is not None:
            pool.close()
            pool.join()
        _POOL_CTX = None

    if config.widest:
        scored = widest_filter(scored, ctx.vacuums)
    scored.sort(key=lambda e: sort_key(e[0]))
    report = {
        "total_secs": time.perf_counter() - t0,
        "itemset_secs": itemset_secs,
        "levels": level_stats,
        "workers": config.workers,
        "batch": config.batch,
        "notes": {
            "lift": "confidence divided by the consequent-support fraction",
            "widest_filter": "applied after dominance pruning" if config.widest else "off",
        },
    }
    if config.audit_breaks:
        report["break_audit"] = audits
    return scored, report
