"""Place recognition: BoW inverted index with a brute-force voting fallback."""

from __future__ import annotations

from collections import defaultdict

import numpy as np

from ..features.matching import MatchParams, match_descriptors
from .vocabulary import Vocabulary, bow_score


class PlaceIndex:
    """Keyframe retrieval by appearance.

    With a vocabulary, keyframes are scored by TF-IDF L1 similarity through an
    inverted index. Without one, every keyframe is scored by the fraction of
    query descriptors it matches (ratio test, mutual best).
    """

    def __init__(self, vocabulary: Vocabulary | None = None):
        self.vocabulary = vocabulary
        self._vectors = {}
        self._inverted = defaultdict(set)
        self._descriptors = {}

    def __len__(self):
        return len(self._vectors) if self.vocabulary else len(self._descriptors)

    def vector(self, descriptors):
        return self.vocabulary.bow(descriptors) if self.vocabulary else {}

    def add(self, kf_id, descriptors, vector=None):
        if self.vocabulary is None:
            self._descriptors[kf_id] = np.asarray(descriptors, dtype=np.uint8)
            return {}
        vec = self.vector(descriptors) if vector is None else vector
        self._vectors[kf_id] = vec
        for w in vec:
            self._inverted[w].add(kf_id)
        return vec

    def remove(self, kf_id):
        self._descriptors.pop(kf_id, None)
        vec = self._vectors.pop(kf_id, None)
        if vec:
            for w in vec:
                self._inverted[w].discard(kf_id)

    def score(self, descriptors_or_vector, kf_id) -> float:
        if self.vocabulary is None:
            return self._vote(np.asarray(descriptors_or_vector), self._descriptors[kf_id])
        vec = descriptors_or_vector if isinstance(descriptors_or_vector, dict) else self.vector(descriptors_or_vector)
        return bow_score(vec, self._vectors[kf_id])

    @staticmethod
    def _vote(query, target):
        if len(query) == 0 or len(target) == 0:
            return 0.0
        pairs = match_descriptors(query, target, MatchParams(ratio=0.8, max_hamming=64))
        return len(pairs) / len(query)

    def query(self, descriptors, exclude=(), min_score=0.0, top_k=None, vector=None):
        """Keyframes ranked by similarity, as a list of (id, score).

        Ties break by ascending id so results are deterministic.
        """
        exclude = set(exclude)
        if self.vocabulary is None:
            q = np.asarray(descriptors, dtype=np.uint8)
            scores = {k: self._vote(q, d) for k, d in self._descriptors.items() if k not in exclude}
        else:
            vec = self.vector(descriptors) if vector is None else vector
            cand = set()
            for w in vec:
                cand |= self._inverted.get(w, set())
            scores = {k: bow_score(vec, self._vectors[k]) for k in cand - exclude}
        ranked = sorted(((k, s) for k, s in scores.items() if s > 0 and s >= min_score), key=lambda x: (-x[1], x[0]))
        return ranked[:top_k] if top_k else ranked
