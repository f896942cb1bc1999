"""Hierarchical bag-of-binary-words vocabulary and its data file.

File layout (little-endian): 8-byte magic ``VSLMVOC\\0``, u32 format version,
u32 branching, u32 depth, u32 node count, then one packed record per non-root
node in breadth-first order: u32 parent (0 is the root, nodes count from 1),
f64 weight (IDF; 0 for inner nodes), 32 descriptor bytes. Leaves are the
nodes without children, numbered as words in file order.
"""

from __future__ import annotations

from collections import Counter
from importlib import resources
from pathlib import Path

import numpy as np

from ..features.matching import hamming_matrix

MAGIC = b"VSLMVOC\x00"
FORMAT_VERSION = 1
_HEADER = np.dtype([("magic", "S8"), ("version", "<u4"), ("branching", "<u4"), ("depth", "<u4"), ("count", "<u4")])
_NODE = np.dtype([("parent", "<u4"), ("weight", "<f8"), ("desc", "u1", (32,))])


class VocabularyError(ValueError):
    pass


def _majority(desc):
    """Bitwise median of a set of descriptors (ties resolve to 0)."""
    bits = np.unpackbits(desc, axis=1, bitorder="little")
    return np.packbits(bits.sum(axis=0) * 2 > len(desc), bitorder="little")


def k_medians(desc, k, rng, iterations=10):
    """Cluster binary descriptors under Hamming distance.

    Seeds with k-means++ style sampling, then alternates nearest-center
    assignment and bitwise-majority centers. Returns (centers, labels).
    """
    n = len(desc)
    if n <= k:
        return desc.copy(), np.arange(n)
    centers = [desc[rng.integers(n)]]
    dmin = hamming_matrix(desc, np.array(centers))[:, 0].astype(float)
    for _ in range(1, k):
        p = dmin**2
        total = p.sum()
        idx = rng.integers(n) if total == 0 else rng.choice(n, p=p / total)
        centers.append(desc[idx])
        dmin = np.minimum(dmin, hamming_matrix(desc, desc[idx : idx + 1])[:, 0])
    centers = np.array(centers)
    labels = None
    for _ in range(iterations):
        new = np.argmin(hamming_matrix(desc, centers), axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = desc[labels == c]
            if len(members):
                centers[c] = _majority(members)
    return centers, labels


class Vocabulary:
    def __init__(self, branching, depth, parents, weights, descriptors):
        self.branching = int(branching)
        self.depth = int(depth)
        self.parents = np.asarray(parents, dtype=np.int64)  # per node, node ids start at 1
        self.weights = np.asarray(weights, dtype=float)
        self.descriptors = np.asarray(descriptors, dtype=np.uint8).reshape(-1, 32)
        n = len(self.parents)
        children = np.full((n + 1, self.branching), -1, dtype=np.int64)
        fill = np.zeros(n + 1, dtype=int)
        for node, par in enumerate(self.parents, start=1):
            if fill[par] >= self.branching:
                raise VocabularyError(f"node {par} has more than {self.branching} children")
            children[par, fill[par]] = node
            fill[par] += 1
        self._children = children
        leaf = fill[1:] == 0
        self.word_of_node = np.full(n + 1, -1, dtype=np.int64)
        self.word_of_node[1:][leaf] = np.arange(leaf.sum())
        self.word_weights = self.weights[leaf]

    @property
    def size(self):
        return len(self.word_weights)

    def transform(self, desc):
        """Word id for each descriptor, by greedy descent of the tree."""
        desc = np.asarray(desc, dtype=np.uint8).reshape(-1, 32)
        node = np.zeros(len(desc), dtype=np.int64)
        padded = np.concatenate([np.zeros((1, 32), np.uint8), self.descriptors])
        words = desc.view(np.uint64)
        for _ in range(self.depth):
            ch = self._children[node]
            active = ch[:, 0] >= 0
            if not active.any():
                break
            cand = padded[np.maximum(ch, 0)].view(np.uint64)  # (N, B, 4)
            d = np.bitwise_count(cand ^ words[:, None, :]).sum(axis=-1).astype(np.int64)
            d[ch < 0] = 1 << 20
            best = ch[np.arange(len(desc)), np.argmin(d, axis=1)]
            node = np.where(active, best, node)
        return self.word_of_node[node]

    def bow(self, desc):
        """L1-normalized TF-IDF vector as a dict word -> weight."""
        words = self.transform(desc)
        if len(words) == 0:
            return {}
        counts = Counter(words.tolist())
        vec = {w: c / len(words) * self.word_weights[w] for w, c in counts.items()}
        norm = sum(abs(v) for v in vec.values())
        if norm > 0:
            vec = {w: v / norm for w, v in vec.items()}
        return dict(sorted(vec.items()))

    # -- persistence ------------------------------------------------------
    def to_bytes(self) -> bytes:
        header = np.array([(MAGIC, FORMAT_VERSION, self.branching, self.depth, len(self.parents))], dtype=_HEADER)
        nodes = np.zeros(len(self.parents), dtype=_NODE)
        nodes["parent"] = self.parents
        nodes["weight"] = self.weights
        nodes["desc"] = self.descriptors
        return header.tobytes() + nodes.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Vocabulary":
        if len(data) < _HEADER.itemsize:
            raise VocabularyError("vocabulary file truncated in header")
        h = np.frombuffer(data, dtype=_HEADER, count=1)[0]
        if bytes(h["magic"]).ljust(8, b"\x00") != MAGIC:
            raise VocabularyError("not a vocabulary file (bad magic)")
        if int(h["version"]) != FORMAT_VERSION:
            raise VocabularyError(f"unsupported vocabulary version {int(h['version'])}")
        count = int(h["count"])
        body = data[_HEADER.itemsize :]
        if len(body) != count * _NODE.itemsize:
            raise VocabularyError(f"expected {count} nodes, file holds {len(body) / _NODE.itemsize:g}")
        nodes = np.frombuffer(body, dtype=_NODE)
        parents = nodes["parent"].astype(np.int64)
        if np.any(parents >= np.arange(1, count + 1)):
            raise VocabularyError("nodes must follow their parents")
        return cls(h["branching"], h["depth"], parents, nodes["weight"], nodes["desc"])

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls.from_bytes(Path(path).read_bytes())


def train_vocabulary(images, branching=10, depth=3, seed=0, iterations=10) -> Vocabulary:
    """Build a vocabulary from a list of per-image descriptor arrays.

    Leaf weights are IDF, log(N images / images containing the word).
    """
    images = [np.asarray(d, dtype=np.uint8).reshape(-1, 32) for d in images]
    desc = np.concatenate(images) if images else np.zeros((0, 32), np.uint8)
    if len(desc) == 0:
        raise VocabularyError("no training descriptors")
    rng = np.random.default_rng(seed)
    parents, centers = [], []
    frontier = [(0, np.arange(len(desc)))]  # (node id, member rows)
    for _ in range(depth):
        nxt = []
        for node, rows in frontier:
            if len(rows) <= 1:
                continue
            c, lab = k_medians(desc[rows], branching, rng, iterations)
            for j in range(len(c)):
                parents.append(node)
                centers.append(c[j])
                nxt.append((len(parents), rows[lab == j]))
        frontier = nxt
    voc = Vocabulary(branching, depth, parents, np.zeros(len(parents)), np.array(centers))
    n_img = len(images)
    df = np.zeros(voc.size)
    for d in images:
        if len(d):
            df[np.unique(voc.transform(d))] += 1
    idf = np.log(n_img / np.maximum(df, 1.0))
    leaf = voc.word_of_node[1:] >= 0
    weights = np.zeros(len(parents))
    weights[leaf] = idf[voc.word_of_node[1:][leaf]]
    return Vocabulary(branching, depth, parents, weights, np.array(centers))


def default_vocabulary() -> Vocabulary:
    """The vocabulary shipped with the package."""
    data = resources.files("vslam.data").joinpath("vocab.bin").read_bytes()
    return Vocabulary.from_bytes(data)


def bow_score(a: dict, b: dict) -> float:
    """L1 similarity in [0, 1] of two normalized BoW vectors."""
    if not a or not b:
        return 0.0
    s = 0.0
    for w, va in a.items():
        vb = b.get(w)
        if vb is not None:
            s += abs(va) + abs(vb) - abs(va - vb)
    return float(0.5 * s)
