"""World model: keyframes, landmarks, covisibility, spanning tree, place recognition."""

from .database import (
    LOCAL_MAP_CAP,
    DuplicateLinkError,
    KeyframeCullPolicy,
    LandmarkCullPolicy,
    MapDatabase,
    MapError,
    MapFrozenError,
    MapIntegrityError,
    sim3_of,
)
from .entities import Keyframe, Landmark, representative_descriptor
from .place import PlaceIndex
from .rwlock import RWLock
from .vocabulary import Vocabulary, VocabularyError, bow_score, default_vocabulary, k_medians, train_vocabulary

__all__ = [
    "DuplicateLinkError",
    "Keyframe",
    "KeyframeCullPolicy",
    "LOCAL_MAP_CAP",
    "Landmark",
    "LandmarkCullPolicy",
    "MapDatabase",
    "MapError",
    "MapFrozenError",
    "MapIntegrityError",
    "PlaceIndex",
    "RWLock",
    "Vocabulary",
    "VocabularyError",
    "bow_score",
    "default_vocabulary",
    "k_medians",
    "representative_descriptor",
    "sim3_of",
    "train_vocabulary",
]
