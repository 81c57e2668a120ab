"""Declarative device/service integration: manifests, dispatch, built-ins."""

from .manifest import (
    ActionMeta,
    Binding,
    ObjectTypeManifest,
    ParameterMeta,
    Registry,
    RobotFeatures,
    discover_features,
    load_manifests,
)
from .runtime import ObjectInstance, dispatch_action, instantiate

__all__ = [
    "ActionMeta",
    "Binding",
    "ObjectTypeManifest",
    "ParameterMeta",
    "Registry",
    "RobotFeatures",
    "discover_features",
    "load_manifests",
    "ObjectInstance",
    "dispatch_action",
    "instantiate",
]
