"""Mining all non-dominated quantitative association rules.

Rules of the form ``B -> I | Q`` are mined from user purchase histories:
the antecedent constrains item attributes from below (and, through negated
attributes, from above), the single consequent item constrains the shared
attribute every item carries.  The engine enumerates the complete
dominance-minimal rule set meeting minimum support and interestingness
thresholds, in-process (optionally over a worker pool) or across machines.
"""

from .dataset import (
    AttributeDecl,
    Dataset,
    DatasetError,
    Transaction,
    UserHistory,
    ValueIndex,
    augment_negated,
    build_value_index,
    dataset_from_transactions,
    discretize,
    load_dataset,
    load_movielens,
)
from .engine import EngineConfig, base_rules, mine
from .evaluation import (
    DetectionResult,
    coverage,
    detect,
    estimate_reservation_price,
    report_discounting,
    roc_sweep,
)
from .generators import (
    HorizontalDiscount,
    MarketConfig,
    PersonalizedDiscount,
    RareEventConfig,
    gen_market,
    gen_rare_event,
    run_discounting,
)
from .index import (
    SupportIndex,
    build_index,
    confidence,
    extended_metrics,
    matching_histories,
    rule_metrics,
    support,
)
from .itemsets import OrdMaps, default_ord, mine_frequent
from .rules import (
    Quantification,
    Rule,
    RuleMetrics,
    RuleStore,
    dominates,
    final_prune,
    generalize,
    parse_rule_line,
    read_rule_lines,
    wider,
    widest_filter,
    write_rule_lines,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
