"""Dataset management: ingesting OBJ collections, the min/max feature
normalizer, train/held-out splits, labels and evaluation metrics.
"""

from dataclasses import dataclass, field
from pathlib import Path
import logging

import numpy as np

from .container import ContainerError, read_container, write_container
from .mesh import Mesh, MeshError, bbox_diagonal, load_obj
from .rimd import ReferenceGeometry, RimdFeature
from .rotations import rigid_align
from .synth import synthesize_corpus  # re-exported: corpus generation lives here too

__all__ = [
    "FeatureNormalizer",
    "ShapeCorpus",
    "fit_normalizer",
    "ingest",
    "per_vertex_error",
    "synthesize_corpus",
    "save_corpus",
    "load_corpus",
]

log = logging.getLogger("shapespace.corpus")

_CACHE_VERSION = 1


@dataclass(frozen=True)
class FeatureNormalizer:
    """Per-component affine map onto [-a, a] with exact inverse.

    Components that are constant across the fitting set get their bounds
    widened to value -/+ eps, so the map stays invertible and the model
    may generate values outside the observed range.
    """

    low: np.ndarray
    high: np.ndarray
    a: float = 0.9
    eps: float = 1e-6

    def __post_init__(self):
        if self.low.shape != self.high.shape or self.low.ndim != 1:
            raise ValueError("normalizer bounds must be matching vectors")
        if np.any(self.high < self.low):
            raise ValueError("normalizer upper bounds below lower bounds")

    def __len__(self):
        return self.low.size

    def _check(self, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape[-1] != self.low.size:
            raise ValueError(
                f"feature length {vec.shape[-1]}, normalizer expects {self.low.size}")
        return vec

    def normalize(self, vec):
        """Map components to [-a, a]; out-of-range input maps outside
        without clamping."""
        vec = self._check(vec)
        return 2.0 * self.a * (vec - self.low) / (self.high - self.low) - self.a

    def denormalize(self, vec):
        vec = self._check(vec)
        return self.low + (vec + self.a) * (self.high - self.low) / (2.0 * self.a)


def fit_normalizer(features, a=0.9, eps=1e-6):
    """Per-component min/max over the given feature rows."""
    features = np.atleast_2d(np.asarray(features, dtype=float))
    if features.size == 0:
        raise ValueError("cannot fit a normalizer on an empty feature set")
    low = features.min(axis=0)
    high = features.max(axis=0)
    flat = high == low
    low = np.where(flat, low - eps, low)
    high = np.where(flat, high + eps, high)
    return FeatureNormalizer(low=low, high=high, a=a, eps=eps)


@dataclass
class ShapeCorpus:
    """An encoded mesh collection sharing one connectivity.

    ``features`` holds the raw (un-normalized) feature vector of every
    model relative to the base model. The normalizer is fitted on the
    train split only.
    """

    geometry: ReferenceGeometry
    meshes: list
    names: list
    features: np.ndarray          # (M, K) raw features
    base_index: int
    train_idx: np.ndarray
    heldout_idx: np.ndarray
    normalizer: FeatureNormalizer
    labels: list = field(default_factory=list)   # one list of tokens per family
    vocabularies: list = field(default_factory=list)

    @property
    def connectivity(self):
        return self.geometry.key

    @property
    def size(self):
        return len(self.meshes)

    @property
    def base_mesh(self):
        return self.meshes[self.base_index]

    def feature(self, k):
        return RimdFeature.from_vector(
            self.features[k], self.geometry.mesh.n_vertices, len(self.geometry.edges))

    def normalized_train_features(self):
        return self.normalizer.normalize(self.features[self.train_idx])

    def condition_indices(self, model_indices):
        """(len(idx), n_families) vocabulary indices, or None when unlabeled."""
        if not self.labels:
            return None
        out = np.empty((len(model_indices), len(self.labels)), dtype=int)
        for fam, (tokens, vocab) in enumerate(zip(self.labels, self.vocabularies)):
            lookup = {tok: i for i, tok in enumerate(vocab)}
            out[:, fam] = [lookup[tokens[k]] for k in model_indices]
        return out

    def train_condition_indices(self):
        return self.condition_indices(self.train_idx)


def _read_labels(path, count):
    tokens = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()
              if ln.strip()]
    if len(tokens) != count:
        raise ValueError(
            f"{path}: {len(tokens)} labels for {count} models")
    return tokens


def ingest(directory, base_index=0, split=0.9, seed=0, a=0.9, eps=1e-6):
    """Encode every OBJ in a directory against the base model.

    Files are taken in sorted name order; ``labels.txt`` and
    ``labels2.txt``, when present, carry one condition token per line in
    that same order. The train/held-out split is a seeded shuffle and
    the normalizer is fitted on the train rows only.
    """
    directory = Path(directory)
    paths = sorted(directory.glob("*.obj"))
    if len(paths) < 2:
        raise MeshError(f"{directory}: need at least 2 OBJ files, found {len(paths)}")
    if not 0 <= base_index < len(paths):
        raise ValueError(f"base index {base_index} outside 0..{len(paths) - 1}")
    meshes = [load_obj(p) for p in paths]
    geometry = ReferenceGeometry(meshes[base_index])
    for p, m in zip(paths, meshes):
        try:
            geometry.check_same_connectivity(m)
        except MeshError:
            raise MeshError(f"{p.name}: connectivity differs from base "
                            f"{paths[base_index].name}") from None
    log.info("encoding %d models against %s", len(meshes), paths[base_index].name)
    features = np.stack([geometry.encode(m).vector() for m in meshes])

    order = np.random.default_rng([seed, 5]).permutation(len(meshes))
    n_train = int(round(split * len(meshes)))
    n_train = min(max(n_train, 2), len(meshes))
    train_idx = np.sort(order[:n_train])
    heldout_idx = np.sort(order[n_train:])

    labels = []
    for fname in ("labels.txt", "labels2.txt"):
        lp = directory / fname
        if lp.exists():
            labels.append(_read_labels(lp, len(meshes)))
    vocabularies = [sorted(set(toks)) for toks in labels]

    return ShapeCorpus(
        geometry=geometry,
        meshes=meshes,
        names=[p.name for p in paths],
        features=features,
        base_index=base_index,
        train_idx=train_idx,
        heldout_idx=heldout_idx,
        normalizer=fit_normalizer(features[train_idx], a=a, eps=eps),
        labels=labels,
        vocabularies=vocabularies,
    )


def per_vertex_error(reconstructed, truth):
    """Mean per-vertex distance after optimal rigid alignment.

    The feature codec leaves a free global motion, so the metric aligns
    first; it is invariant under rigid motion of either argument.
    """
    if reconstructed.vertices.shape != truth.vertices.shape or \
            not np.array_equal(reconstructed.faces, truth.faces):
        raise MeshError("meshes do not share connectivity")
    r, t = rigid_align(reconstructed.vertices, truth.vertices)
    aligned = reconstructed.vertices @ r.T + t
    return float(np.linalg.norm(aligned - truth.vertices, axis=1).mean())


def heldout_errors(corpus, reconstruct_fn):
    """Per-vertex error of ``reconstruct_fn(k)`` against held-out model k."""
    return {int(k): per_vertex_error(reconstruct_fn(int(k)), corpus.meshes[k])
            for k in corpus.heldout_idx}


def corpus_bbox_diagonal(corpus):
    return max(bbox_diagonal(m) for m in corpus.meshes)


def save_corpus(corpus, path):
    """Cache a corpus (same container scheme as checkpoints)."""
    manifest = {
        "kind": "corpus",
        "version": _CACHE_VERSION,
        "names": corpus.names,
        "base_index": corpus.base_index,
        "connectivity": corpus.connectivity.hex(),
        "labels": corpus.labels,
        "vocabularies": corpus.vocabularies,
        "normalizer_a": corpus.normalizer.a,
        "normalizer_eps": corpus.normalizer.eps,
        "n_vertices": corpus.geometry.mesh.n_vertices,
    }
    tensors = {
        "faces": corpus.geometry.mesh.faces.astype(float),
        "vertices": np.stack([m.vertices for m in corpus.meshes]),
        "features": corpus.features,
        "train_idx": corpus.train_idx.astype(float),
        "heldout_idx": corpus.heldout_idx.astype(float),
        "normalizer.low": corpus.normalizer.low,
        "normalizer.high": corpus.normalizer.high,
    }
    write_container(path, manifest, tensors)


def load_corpus(path):
    manifest, tensors = read_container(path)
    if manifest.get("kind") != "corpus":
        raise ContainerError(f"{path}: not a corpus cache")
    if manifest["version"] != _CACHE_VERSION:
        raise ContainerError(f"{path}: unsupported corpus cache version")
    faces = tensors["faces"].astype(np.int64)
    meshes = [Mesh(v, faces) for v in tensors["vertices"]]
    corpus = ShapeCorpus(
        geometry=ReferenceGeometry(meshes[manifest["base_index"]]),
        meshes=meshes,
        names=list(manifest["names"]),
        features=tensors["features"],
        base_index=manifest["base_index"],
        train_idx=tensors["train_idx"].astype(np.int64),
        heldout_idx=tensors["heldout_idx"].astype(np.int64),
        normalizer=FeatureNormalizer(
            low=tensors["normalizer.low"],
            high=tensors["normalizer.high"],
            a=manifest["normalizer_a"],
            eps=manifest["normalizer_eps"],
        ),
        labels=[list(l) for l in manifest["labels"]],
        vocabularies=[list(v) for v in manifest["vocabularies"]],
    )
    if corpus.connectivity != bytes.fromhex(manifest["connectivity"]):
        raise ContainerError(f"{path}: connectivity digest mismatch")
    return corpus
