"""Communication primitives on the emulated butterfly."""

from .aggregate import (EMPTY, MAX, MIN, SUM, XOR, XOR_SUM, XOR_XOR, AggregateFunction,
                        ConfigurationError, lexmin)
from .waves import (aggregate_and_broadcast, distribute_shared_randomness, post_wave,
                    sync_barrier)
from .aggregation import AggregationResult, run_aggregation
