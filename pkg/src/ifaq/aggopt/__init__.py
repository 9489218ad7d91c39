"""Aggregate batches over joins: extraction, view trees, lowering and tries."""

from ..frontend.schema import JoinEdge, JoinTree
from .driver import AggOptError, AggOptResult, drop_dead_bindings, optimize_aggregates
from .extract import AggregateSpec, Extraction, extract_aggregates, find_joins
from .join import JoinPredicate, JoinSpec, NotAJoin, join_expr, join_spec_from_schema, parse_join
from .lower import Fragment, dict_to_trie, lower_multi_aggregate, trie_order
from .views import PushDownError, View, ViewTree, merge_views, push_down
