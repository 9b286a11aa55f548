"""Independent brute-force reference implementations used as test oracles.

Everything here evaluates rules by scanning histories directly and enumerating
candidate spaces exhaustively; nothing touches the bitset index or the
engine's search loops, so agreement between the two routes is meaningful.
"""

from __future__ import annotations

import itertools
import random

from qarma.dataset import Dataset, dataset_from_transactions


def history_values(history):
    values = {}
    for t in history.transactions:
        for a, v in t.attrs.items():
            values.setdefault((t.item, a), []).append(v)
    return values


def naive_match_count(dataset, members, quants, mode="geq", eq_item=None):
    """Histories containing every member item and satisfying every
    quantification existentially (exact match for eq_item in eq mode)."""
    count = 0
    for h in dataset.histories:
        vals = history_values(h)
        items = {t.item for t in h.transactions}
        if any(m not in items for m in members):
            continue
        ok = True
        for item, attr, value in quants:
            observed = vals.get((item, attr), [])
            if mode == "eq" and item == eq_item:
                hit = value in observed
            else:
                hit = any(v >= value for v in observed)
            if not hit:
                ok = False
                break
        if ok:
            count += 1
    return count


def naive_rule_counts(dataset, antecedent, consequent, quants, mode="geq"):
    eq_item = consequent if mode == "eq" else None
    members = set(antecedent) | {consequent}
    joint = naive_match_count(dataset, members, quants, mode, eq_item)
    ante_quants = [q for q in quants if q[0] != consequent]
    ante = naive_match_count(dataset, set(antecedent), ante_quants, mode, eq_item)
    cons_quants = [q for q in quants if q[0] == consequent]
    cons = naive_match_count(dataset, {consequent}, cons_quants, mode, eq_item)
    return joint, ante, cons


def naive_metrics(dataset, antecedent, consequent, quants, mode="geq"):
    """(support, confidence, cons_supp, conviction, lift, leverage) or None
    when the antecedent or consequent matches nothing."""
    n = len(dataset)
    joint, ante, cons = naive_rule_counts(dataset, antecedent, consequent, quants, mode)
    if ante == 0 or cons == 0:
        return None
    conf = joint / ante
    cons_supp = cons / n
    conviction = float("inf") if conf == 1.0 else (1.0 - cons_supp) / (1.0 - conf)
    return {
        "support": joint / n,
        "confidence": conf,
        "cons_supp": cons_supp,
        "conviction": conviction,
        "lift": conf / cons_supp,
        "leverage": joint / n - (ante / n) * cons_supp,
    }


def grids(dataset):
    """(item, attr) -> sorted distinct values, by literal set construction."""
    out = {}
    for h in dataset.histories:
        for t in h.transactions:
            for a, v in t.attrs.items():
                out.setdefault((t.item, a), set()).add(v)
    return {k: sorted(vs) for k, vs in out.items()}


def vacuous_map(dataset):
    """Grid minima of attributes carried by every transaction of their item."""
    total = {}
    seen = {}
    for h in dataset.histories:
        for t in h.transactions:
            seen[t.item] = seen.get(t.item, 0) + 1
            for a in t.attrs:
                total[(t.item, a)] = total.get((t.item, a), 0) + 1
    g = grids(dataset)
    return {
        key: values[0]
        for key, values in g.items()
        if total.get(key, 0) == seen.get(key[0], -1)
    }


# Candidate rules carry plain tuples: (B frozenset, I, quants tuple, metrics dict).

def oracle_dominates(winner, loser, ltf_metrics, vacuums, mode="geq"):
    wB, wI, wQ, wm = winner
    lB, lI, lQ, lm = loser
    if wI != lI or not lB >= wB:
        return False
    wv = next((v for i, a, v in wQ if i == wI), None)
    lv = next((v for i, a, v in lQ if i == lI), None)
    if mode == "eq":
        if wv != lv:
            return False
    else:
        wvx = float("-inf") if wv is None else wv
        lvx = float("-inf") if lv is None else lv
        if wvx < lvx:
            return False
    if lm["support"] > wm["support"]:
        return False
    for name in ltf_metrics:
        if lm[name] > wm[name]:
            return False
    lmap = {(i, a): v for i, a, v in lQ if i != lI}
    for i, a, v in wQ:
        if i == wI:
            continue
        have = lmap.get((i, a))
        if have is None:
            have = vacuums.get((i, a))
        if have is None or v > have:
            return False
    return True


def canonical_key(cand):
    B, I, quants, m = cand
    cv = next((v for i, a, v in quants if i == I), float("-inf"))
    return (I, -cv, sorted(B), len(quants), tuple(sorted(quants)))


def oracle_beats(a, b, ltf_metrics, vacuums, mode="geq"):
    if (a[0], a[1], tuple(sorted(a[2]))) == (b[0], b[1], tuple(sorted(b[2]))):
        return False
    if not oracle_dominates(a, b, ltf_metrics, vacuums, mode):
        return False
    if not oracle_dominates(b, a, ltf_metrics, vacuums, mode):
        return True
    return canonical_key(a) < canonical_key(b)


def frequent_itemsets(dataset, s_min, max_len):
    """Every itemset of size 2..max_len whose presence support >= s_min,
    checked by direct enumeration."""
    n = len(dataset)
    items = sorted(dataset.items)
    presence = [{t.item for t in h.transactions} for h in dataset.histories]
    out = []
    for size in range(2, max_len + 1):
        for combo in itertools.combinations(items, size):
            count = sum(1 for pres in presence if all(i in pres for i in combo))
            if count / n >= s_min:
                out.append(combo)
    return out


def enumerate_rules(dataset, s_min, thresholds, ltf_metrics=("confidence",),
                    max_len=3, mode="geq"):
    """Brute-force mine: every candidate over every frequent itemset, filtered
    by the thresholds, reduced to the beats-maximal set.  Returns a set of
    hashable (B, I, quants, rounded-metrics) descriptors."""
    n = len(dataset)
    g = grids(dataset)
    vacuums = vacuous_map(dataset)
    shared = dataset.shared_attr
    cands = []
    for itemset in frequent_itemsets(dataset, s_min, max_len):
        for consequent in itemset:
            if (consequent, shared) not in g:
                continue
            antecedent = frozenset(i for i in itemset if i != consequent)
            keys = [
                (j, a)
                for j in sorted(antecedent)
                for a in dataset.quantitative_attrs(j)
                if (j, a) in g
            ]
            for cv in g[(consequent, shared)]:
                base = ((consequent, shared, cv),)
                for r in range(1, len(keys) + 1):
                    for ksub in itertools.combinations(keys, r):
                        value_lists = [g[k] for k in ksub]
                        for values in itertools.product(*value_lists):
                            quants = base + tuple(
                                (j, a, v) for (j, a), v in zip(ksub, values)
                            )
                            m = naive_metrics(dataset, antecedent, consequent,
                                              quants, mode)
                            if m is None or m["support"] < s_min:
                                continue
                            if any(m[k] < c for k, c in thresholds.items()):
                                continue
                            cands.append((antecedent, consequent, quants, m))
    kept = []
    for i, cand in enumerate(cands):
        beaten = any(
            j != i and oracle_beats(other, cand, ltf_metrics, vacuums, mode)
            for j, other in enumerate(cands)
        )
        if not beaten:
            kept.append(cand)
    return {rule_descriptor(c) for c in kept}


def rule_descriptor(cand):
    B, I, quants, m = cand
    return (
        tuple(sorted(B)),
        I,
        tuple(sorted(quants)),
        round(m["support"], 12),
        round(m["confidence"], 12),
    )


def scored_descriptor(rule, metrics):
    return (
        tuple(sorted(rule.antecedent)),
        rule.consequent,
        tuple(sorted((q.item, q.attr, q.value) for q in rule.quants)),
        round(metrics.support, 12),
        round(metrics.confidence, 12),
    )


def random_dataset(rng: random.Random, max_users=8, max_items=4, max_attrs=2,
                   max_values=3) -> Dataset:
    """Small random dataset within the oracle-equivalence bounds: every item
    carries the shared attribute "p"; a second attribute "q" may appear on a
    random subset of transactions."""
    n_users = rng.randint(2, max_users)
    n_items = rng.randint(2, max_items)
    use_q = max_attrs >= 2 and rng.random() < 0.6
    item_ids = [f"i{k}" for k in range(n_items)]
    value_pool = [1.0, 2.0, 3.0, 4.0, 5.0]
    p_grid = {
        item: sorted(rng.sample(value_pool, rng.randint(1, max_values)))
        for item in item_ids
    }
    q_grid = {
        item: sorted(rng.sample(value_pool, rng.randint(1, max_values)))
        for item in item_ids
    }
    records = []
    for u in range(n_users):
        for item in item_ids:
            if rng.random() < 0.4:
                continue
            for _ in range(rng.randint(1, 2)):
                attrs = {"p": rng.choice(p_grid[item])}
                if use_q and rng.random() < 0.5:
                    attrs["q"] = rng.choice(q_grid[item])
                records.append((f"u{u}", item, attrs))
    if not records:  # mining rejects empty datasets; guarantee one transaction
        records.append(("u0", item_ids[0], {"p": rng.choice(p_grid[item_ids[0]])}))
    return dataset_from_transactions(records, "p")
