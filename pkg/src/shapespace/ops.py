"""Applications over a trained checkpoint: sampling new shapes, latent
interpolation, low-dimensional embedding and grid exploration.

Everything here reads a frozen checkpoint and a base mesh; there is one
shared decode path (latent code -> normalized feature -> raw feature ->
position solve), so the CLI, the HTTP service and the tests all produce
identical geometry for identical codes.
"""

import numpy as np

from .mesh import MeshError, connectivity_key
from .rimd import FeatureError, ReferenceGeometry, RimdFeature, feature_distance

__all__ = [
    "SessionGeometry",
    "decode_mesh",
    "generate",
    "nearest_neighbor",
    "interpolate",
    "interpolate_latent",
    "embed",
    "explore_grid",
]


class SessionGeometry:
    """Checkpoint bound to its base mesh, with the position solver cached."""

    def __init__(self, checkpoint, base_mesh):
        geometry = base_mesh if isinstance(base_mesh, ReferenceGeometry) \
            else ReferenceGeometry(base_mesh)
        if geometry.key != checkpoint.connectivity:
            raise MeshError("base mesh connectivity does not match the checkpoint")
        if len(checkpoint.normalizer) != _expected_width(geometry):
            raise FeatureError("checkpoint feature width does not match the base mesh")
        self.checkpoint = checkpoint
        self.geometry = geometry

    def decode(self, code, condition=None):
        """Mesh for one latent code."""
        code = np.asarray(code, dtype=float)
        if code.shape != (self.checkpoint.latent_dim,):
            raise ValueError(
                f"latent code has length {code.size}, expected {self.checkpoint.latent_dim}")
        cond_idx = self._condition(condition)
        normalized = self.checkpoint.vae.decode_latent(code, cond_idx)
        raw = self.checkpoint.normalizer.denormalize(normalized)
        feature = RimdFeature.from_vector(
            raw, self.geometry.mesh.n_vertices, len(self.geometry.edges))
        return self.geometry.reconstruct(feature)

    def posterior_mean(self, mesh_or_feature, condition=None):
        """Inference-mode posterior mean of a mesh or raw feature vector."""
        if hasattr(mesh_or_feature, "vertices"):
            self.geometry.check_same_connectivity(mesh_or_feature)
            raw = self.geometry.encode(mesh_or_feature).vector()
        else:
            raw = np.asarray(mesh_or_feature, dtype=float)
        normalized = self.checkpoint.normalizer.normalize(raw)
        mu, _ = self.checkpoint.vae.encode_latent(normalized, self._condition(condition))
        return mu

    def _condition(self, condition):
        if condition is None:
            return None
        if isinstance(condition, (str, list)) or (
                isinstance(condition, tuple) and condition
                and isinstance(condition[0], str)):
            return self.checkpoint.condition_index(condition)
        return condition


def _expected_width(geometry):
    return 6 * geometry.mesh.n_vertices + 3 * len(geometry.edges)


def _session(checkpoint, base_mesh):
    if isinstance(checkpoint, SessionGeometry):
        return checkpoint
    return SessionGeometry(checkpoint, base_mesh)


def decode_mesh(checkpoint, base_mesh, code, condition=None):
    """Shared decode path: latent code to mesh."""
    return _session(checkpoint, base_mesh).decode(code, condition)


def generate(checkpoint, base_mesh, count, seed, condition=None):
    """Sample latent codes from the checkpoint's own prior and decode them.

    Returns (meshes, codes). Sampling uses N(0, diag(prior_sigma^2)), so
    models trained with a shaped prior sample from that same prior.
    """
    session = _session(checkpoint, base_mesh)
    rng = np.random.default_rng([seed, 11])
    prior = session.checkpoint.vae.prior_sigma
    codes = rng.standard_normal((count, checkpoint.latent_dim)) * prior
    meshes = [session.decode(c, condition) for c in codes]
    return meshes, codes


def nearest_neighbor(corpus, feature):
    """(model index, distance) of the corpus model closest in feature
    space; ties resolve to the smallest index."""
    if corpus.size == 0:
        raise ValueError("corpus is empty")
    vec = feature.vector() if isinstance(feature, RimdFeature) \
        else np.asarray(feature, dtype=float)
    if vec.shape != (corpus.features.shape[1],):
        raise FeatureError(
            f"feature length {vec.size} does not match corpus ({corpus.features.shape[1]})")
    dists = np.linalg.norm(corpus.features - vec, axis=1)
    k = int(np.argmin(dists))  # argmin takes the first, i.e. smallest index
    return k, float(dists[k])


def interpolate(checkpoint, base_mesh, mesh_a, mesh_b, steps,
                condition_a=None, condition_b=None):
    """Decode the straight latent path between two meshes' posterior means.

    Endpoints use the means themselves (no sampling), so frame 0 and
    frame steps-1 equal the direct decodes of the two means.
    """
    session = _session(checkpoint, base_mesh)
    mu_a = session.posterior_mean(mesh_a, condition_a)
    mu_b = session.posterior_mean(mesh_b, condition_b)
    return interpolate_latent(session, base_mesh, mu_a, mu_b, steps,
                              condition=condition_a)


def interpolate_latent(checkpoint, base_mesh, code_a, code_b, steps,
                       condition=None):
    """Decoded meshes along (1-t) a + t b at ``steps`` uniform t in [0, 1]."""
    if steps < 2:
        raise ValueError("need at least 2 interpolation steps")
    session = _session(checkpoint, base_mesh)
    code_a = np.asarray(code_a, dtype=float)
    code_b = np.asarray(code_b, dtype=float)
    ts = np.linspace(0.0, 1.0, steps)
    if np.array_equal(code_a, code_b):
        codes = [code_a] * steps  # avoid lerp roundoff: frames stay identical
    else:
        codes = [(1.0 - t) * code_a + t * code_b for t in ts]
    return [session.decode(c, condition) for c in codes]


def embed(checkpoint, corpus, dims):
    """First ``dims`` posterior-mean coordinates of every corpus model."""
    if dims < 1 or dims > checkpoint.latent_dim:
        raise ValueError(f"dims must lie in 1..{checkpoint.latent_dim}")
    session = SessionGeometry(checkpoint, corpus.geometry)
    conds = corpus.condition_indices(range(corpus.size))
    out = np.empty((corpus.size, dims))
    for k in range(corpus.size):
        cond = tuple(conds[k]) if conds is not None and checkpoint.vocabularies else None
        out[k] = session.posterior_mean(corpus.features[k], cond)[:dims]
    return out


def explore_grid(checkpoint, base_mesh, dim_pair, base_code, value_range,
                 resolution, condition=None):
    """resolution x resolution decoded lattice over two latent dimensions.

    Cell (i, j) sets dims (d1, d2) to the i-th and j-th lattice values
    over ``value_range`` and keeps every other dimension from
    ``base_code``. Cells are independent: recomputing one reproduces the
    batch result exactly.
    """
    d1, d2 = dim_pair
    d = checkpoint.latent_dim
    if d1 == d2 or not (0 <= d1 < d) or not (0 <= d2 < d):
        raise ValueError(f"dimension pair {dim_pair} invalid for latent size {d}")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    lo, hi = value_range
    session = _session(checkpoint, base_mesh)
    base_code = np.asarray(base_code, dtype=float)
    if base_code.shape != (d,):
        raise ValueError(f"base code has length {base_code.size}, expected {d}")
    values = np.linspace(lo, hi, resolution)
    grid = []
    for vi in values:
        row = []
        for vj in values:
            code = base_code.copy()
            code[d1] = vi
            code[d2] = vj
            row.append(session.decode(code, condition))
        grid.append(row)
    return grid
