"""Online matching of reusable multi-capacity resources under known arrival distributions."""

from ridepool.grouping import GroupCatalog, GroupType, count_group_types, enumerate_group_types
from ridepool.model import Instance, make_instance, validate_instance

__version__ = "0.1.0"

__all__ = [
    "GroupCatalog",
    "GroupType",
    "Instance",
    "count_group_types",
    "enumerate_group_types",
    "make_instance",
    "validate_instance",
]
