"""Seeded synthetic dataset generators: e-commerce market and rare events.

Every random draw comes from a substream keyed by (seed, purpose, cycle,
user), so outputs are bit-reproducible across runs and platforms and cannot
be perturbed by execution order or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dataset import Dataset, dataset_from_transactions

# Substream purpose tags (SeedSequence entropy words).
_PRICES, _RANK, _ELASTIC, _RESERVE, _JITTER, _WISH = 1, 2, 3, 4, 5, 6
_DIM_PARAMS, _VALUES, _PRESENT, _CLASS, _ANOMALY = 10, 11, 12, 13, 14


def _rng(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, *tags)))


@dataclass(frozen=True)
class MarketConfig:
    n_items: int = 2000
    n_users: int = 2000
    elastic_frac: float = 0.51
    cycles: int = 10
    purchases_per_cycle: int = 10
    pareto_shape: float = 1.0
    price_range: tuple[float, float] = (1.0, 100.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.elastic_frac <= 1.0:
            raise ValueError(f"elastic_frac must be in [0, 1], got {self.elastic_frac}")
        for name in ("n_items", "n_users", "cycles", "purchases_per_cycle"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.pareto_shape <= 0:
            raise ValueError("pareto_shape must be positive")


@dataclass
class MarketState:
    """Everything needed to continue a simulation from where it stopped."""

    config: MarketConfig
    base_prices: np.ndarray          # per item
    elastic: np.ndarray              # bool per item
    wish_weights: np.ndarray         # per item, sums to 1
    reservations: np.ndarray         # (n_users, n_items); NaN for inelastic items
    next_cycle: int = 0

    def item_id(self, idx: int) -> str:
        return f"i{idx:04d}"

    def user_key(self, idx: int) -> str:
        return f"u{idx}"


PricingPolicy = Callable[[int, int, float], float]
"""(user index, item index, list price) -> offered price."""


def _init_state(config: MarketConfig) -> MarketState:
    lo, hi = config.price_range
    base = _rng(config.seed, _PRICES).uniform(lo, hi, config.n_items)
    n_elastic = round(config.elastic_frac * config.n_items)
    elastic = np.zeros(config.n_items, dtype=bool)
    chosen = _rng(config.seed, _ELASTIC).choice(config.n_items, size=n_elastic, replace=False)
    elastic[chosen] = True
    # popularity: items ranked once, selection probability ~ rank^(-shape)
    ranks = np.empty(config.n_items, dtype=float)
    ranks[_rng(config.seed, _RANK).permutation(config.n_items)] = np.arange(
        1, config.n_items + 1
    )
    weights = ranks ** -config.pareto_shape
    weights /= weights.sum()
    reservations = np.full((config.n_users, config.n_items), np.nan)
    factors = _rng(config.seed, _RESERVE).uniform(0.5, 1.5, (config.n_users, n_elastic))
    cols = np.flatnonzero(elastic)
    reservations[:, cols] = factors * base[cols]
    return MarketState(config, base, elastic, weights, reservations)


def cycle_prices(state: MarketState, cycle: int) -> np.ndarray:
    """List prices for one cycle: base price with multiplicative jitter."""
    jitter = _rng(state.config.seed, _JITTER, cycle).uniform(0.85, 1.15, state.config.n_items)
    return state.base_prices * jitter


def _wish_list(state: MarketState, cycle: int, user: int) -> np.ndarray:
    rng = _rng(state.config.seed, _WISH, cycle, user)
    return rng.choice(
        state.config.n_items,
        size=state.config.purchases_per_cycle,
        replace=True,  # repeat purchases model consumables
        p=state.wish_weights,
    )


def _run_cycle(
    state: MarketState,
    cycle: int,
    pricing: PricingPolicy | None,
    record: list | None,
) -> float:
    """Simulate one cycle; returns its revenue, optionally recording purchases."""
    prices = cycle_prices(state, cycle)
    revenue = 0.0
    for user in range(state.config.n_users):
        for item in _wish_list(state, cycle, user):
            offer = prices[item]
            if pricing is not None:
                offer = pricing(user, item, offer)
            if state.elastic[item] and offer > state.reservations[user, item]:
                continue  # elastic item above this user's reservation price
            revenue += offer
            if record is not None:
                record.append((user, int(item), offer))
    return revenue


def gen_market(config: MarketConfig) -> tuple[Dataset, MarketState]:
    """Simulate the configured cycles and return the histories plus the state."""
    state = _init_state(config)
    record: list[tuple[int, int, float]] = []
    for cycle in range(config.cycles):
        _run_cycle(state, cycle, None, record)
    state.next_cycle = config.cycles
    # one history per user, even for users who never bought anything
    seen_users = {u for u, _, _ in record}
    records = [
        (state.user_key(u), state.item_id(i), {"p": price}) for u, i, price in record
    ]
    ds = dataset_from_transactions(records, "p")
    missing = [state.user_key(u) for u in range(config.n_users) if u not in seen_users]
    if missing:
        from .dataset import UserHistory

        for key in missing:
            ds.histories.append(UserHistory(key))
            ds.user_index[key] = len(ds.histories) - 1
    return ds, state


@dataclass(frozen=True)
class HorizontalDiscount:
    rate: float  # e.g. 0.05 for a 5% storewide sale


@dataclass(frozen=True)
class PersonalizedDiscount:
    """Price elastic items down to the buyer's estimated reservation price,
    if that discount stays within the cap."""

    estimator: Callable[[int, int], float | None]  # (user idx, item idx) -> estimate
    cap: float


Policy = HorizontalDiscount | PersonalizedDiscount | None


def run_discounting(state: MarketState, policy: Policy, cycles: int) -> float:
    """Total revenue from continuing the simulation under a pricing policy.

    Continues from ``state.next_cycle`` without mutating the state, so the
    baseline, horizontal and personalized runs replay identical wish-lists and
    price jitters (paired comparison).
    """
    if policy is None:
        pricing = None
    elif isinstance(policy, HorizontalDiscount):
        rate = policy.rate

        def pricing(user, item, price, _r=rate):
            return price * (1.0 - _r)

    elif isinstance(policy, PersonalizedDiscount):
        estimator, cap = policy.estimator, policy.cap
        cache: dict[tuple[int, int], float | None] = {}
        elastic = state.elastic

        def pricing(user, item, price):
            if not elastic[item]:
                return price
            key = (user, item)
            if key not in cache:
                cache[key] = estimator(user, item)
            est = cache[key]
            if est is None or est >= price:
                return price  # no discount needed (or no estimate)
            if price - est <= cap * price:
                return est
            return price  # required discount exceeds the cap
    else:
        raise TypeError(f"unknown pricing policy {policy!r}")

    total = 0.0
    for cycle in range(state.next_cycle, state.next_cycle + cycles):
        total += _run_cycle(state, cycle, pricing, None)
    return total


@dataclass(frozen=True)
class RareEventConfig:
    dims: int = 20
    sparsity: float = 0.9
    n_train: int = 35000
    n_anomalies: int = 100
    anomaly_dims: int = 3  # the last `anomaly_dims` dimensions carry the signature
    extremal_band: float = 0.01
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.sparsity < 1.0:
            raise ValueError(f"sparsity must be in [0, 1), got {self.sparsity}")
        if not 0 < self.anomaly_dims <= self.dims:
            raise ValueError("anomaly_dims must be in 1..dims")
        if self.n_train < 1 or self.n_anomalies < 0:
            raise ValueError("n_train must be >= 1 and n_anomalies >= 0")


def dim_item(d: int) -> str:
    return f"dim_{d}"


CLASS_ITEM = "class"
VALUE_ATTR = "value"


def gen_rare_event(config: RareEventConfig) -> tuple[Dataset, Dataset, dict[str, bool]]:
    """Train and test datasets of sparse multi-Gaussian points plus labels.

    Each data point becomes one user history: one transaction per present
    dimension (item ``dim_d``) and one ``class`` transaction whose value is
    N(0,1) for normal points and N(50,10^2) for anomalous ones.  Anomalous
    points additionally place their last ``anomaly_dims`` dimension values in
    a narrow band just beyond the per-dimension extremes of the training
    sample (the band is shared by train and test, as both sets come from the
    same generator).  Labels are keyed by user: True marks an anomaly.
    """
    seed = config.seed
    mu = _rng(seed, _DIM_PARAMS, 0).uniform(-10.0, 10.0, config.dims)
    sigma = _rng(seed, _DIM_PARAMS, 1).uniform(1.0, 5.0, config.dims)

    def normal_block(tag: int, n: int):
        values = _rng(seed, _VALUES, tag).normal(mu, sigma, size=(n, config.dims))
        present = _rng(seed, _PRESENT, tag).random((n, config.dims)) >= config.sparsity
        cls = _rng(seed, _CLASS, tag).normal(0.0, 1.0, n)
        return values, present, cls

    train_vals, train_present, train_cls = normal_block(0, config.n_train)
    test_vals, test_present, test_cls = normal_block(1, config.n_train)

    # Extremes estimated from the training normal sample; anomalies sit in a
    # band just beyond the maximum, where normal traffic (almost) never goes.
    lo = np.empty(config.dims)
    hi = np.empty(config.dims)
    for d in range(config.dims):
        observed = train_vals[train_present[:, d], d]
        if observed.size:
            lo[d], hi[d] = observed.min(), observed.max()
        else:
            lo[d], hi[d] = mu[d] - 5 * sigma[d], mu[d] + 5 * sigma[d]
    band = config.extremal_band * (hi - lo)

    sig_dims = list(range(config.dims - config.anomaly_dims, config.dims))

    def anomaly_block(tag: int):
        n = config.n_anomalies
        values = _rng(seed, _ANOMALY, tag, 0).normal(mu, sigma, size=(n, config.dims))
        present = _rng(seed, _ANOMALY, tag, 1).random((n, config.dims)) >= config.sparsity
        for d in sig_dims:
            values[:, d] = _rng(seed, _ANOMALY, tag, 2, d).uniform(hi[d], hi[d] + band[d], n)
            present[:, d] = True  # the signature dimensions are always observed
        cls = _rng(seed, _ANOMALY, tag, 3).normal(50.0, 10.0, n)
        return values, present, cls

    def assemble(prefix, vals, present, cls, a_vals, a_present, a_cls):
        records = []
        labels = {}
        row = 0
        for v, pr, cl, anomalous in [(vals, present, cls, False),
                                     (a_vals, a_present, a_cls, True)]:
            for k in range(v.shape[0]):
                user = f"{prefix}{row}"
                labels[user] = anomalous
                for d in range(config.dims):
                    if pr[k, d]:
                        records.append((user, dim_item(d), {VALUE_ATTR: float(v[k, d])}))
                records.append((user, CLASS_ITEM, {VALUE_ATTR: float(cl[k])}))
                row += 1
        return records, labels

    a_train = anomaly_block(0)
    a_test = anomaly_block(1)
    train_records, train_labels = assemble("tr", train_vals, train_present, train_cls, *a_train)
    test_records, test_labels = assemble("te", test_vals, test_present, test_cls, *a_test)
    train = dataset_from_transactions(train_records, VALUE_ATTR)
    test = dataset_from_transactions(test_records, VALUE_ATTR)
    labels = {**train_labels, **test_labels}
    return train, test, labels
