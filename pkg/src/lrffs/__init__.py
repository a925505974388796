"""Federated feature screening that stays consistent under label shift."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    CategoryRegistry,
    CategoryUtilityMatrix,
    DataError,
    ScreeningResult,
    Shard,
    UtilityVector,
    load_csv_dataset,
    load_csv_federation,
    seed_hierarchy,
)
from .methods import MethodSpec, federated_utilities, parse_method  # noqa: E402

__all__ = [
    "CategoryRegistry",
    "CategoryUtilityMatrix",
    "DataError",
    "MethodSpec",
    "ScreeningResult",
    "Shard",
    "UtilityVector",
    "federated_utilities",
    "load_csv_dataset",
    "load_csv_federation",
    "parse_method",
    "seed_hierarchy",
]
