from .matching import MatchParams, hamming, hamming_matrix, hamming_rows, match, match_descriptors
from .orb import FeatureFrame, FeatureParams, Keypoint, detect_and_describe, fast_score

__all__ = [
    "FeatureFrame",
    "FeatureParams",
    "Keypoint",
    "MatchParams",
    "detect_and_describe",
    "fast_score",
    "hamming",
    "hamming_matrix",
    "hamming_rows",
    "match",
    "match_descriptors",
]
