"""Rotation-invariant deformation feature codec.

Encoding a (reference, deformed) mesh pair:

1. Per vertex, the deformation gradient ``T_i`` is the weighted
   least-squares linear map taking reference one-ring edges to deformed
   one-ring edges (cotangent weights).
2. ``T_i = R_i S_i`` by polar decomposition; the symmetric part ``S_i``
   is stored per vertex, and the axis-angle log of the relative rotation
   ``R_i^T R_j`` is stored per directed edge. Global rotation and
   translation cancel, so the feature is rigid-motion invariant.

Decoding integrates absolute rotations from the relative ones (spanning
tree plus weighted averaging sweeps), rebuilds ``T_i``, and solves for
positions from the per-ring gradient equations
``sum_j c_ij (p_i - p_j) e_ij^T = T_i B_i`` in least squares with the
centroid pinned. For a feature encoded from an actual mesh pair these
equations are consistent, so decoding reproduces the deformed mesh up to
rigid motion and solver roundoff; for arbitrary features (e.g. network
output) the solve is the best fit.
"""

from collections import deque
from dataclasses import dataclass
import struct

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import (
    Mesh,
    MeshError,
    connectivity_key,
    cotan_weights,
    directed_edges,
    edge_weight_array,
    one_rings,
)
from .rotations import polar_decompose, project_rotation, so3_exp, so3_log

__all__ = [
    "FeatureError",
    "DeformGradients",
    "RimdFeature",
    "ReferenceGeometry",
    "feature_length",
    "deformation_gradients",
    "encode",
    "integrate_rotations",
    "reconstruct",
    "feature_distance",
    "write_feature",
    "read_feature",
]

# Ring basis matrices with condition number above this get a trace-scaled
# Tikhonov term: a flat one-ring leaves the gradient underdetermined
# along its normal.
_COND_LIMIT = 1e12
_RIDGE = 1e-8

_MAX_SWEEPS = 20
_SWEEP_TOL = 1e-6

_MAGIC = b"RIMD"
_VERSION = 1


class FeatureError(ValueError):
    """Malformed or mismatched deformation feature."""


def feature_length(n_vertices, n_directed_edges):
    """Flat feature length: 6 per vertex plus 3 per directed edge."""
    return 6 * n_vertices + 3 * n_directed_edges


@dataclass(frozen=True)
class DeformGradients:
    """Per-vertex deformation gradients and their polar factors."""

    tensors: np.ndarray    # (n, 3, 3) T_i
    rotations: np.ndarray  # (n, 3, 3) R_i, proper rotations
    stretches: np.ndarray  # (n, 3, 3) S_i, symmetric


@dataclass(frozen=True)
class RimdFeature:
    """Per-vertex symmetric stretch 6-vectors plus per-directed-edge
    axis-angle rotation differences, in canonical layout."""

    scales: np.ndarray         # (n, 6) upper triangle of S_i, row-major
    log_rotations: np.ndarray  # (E, 3) log of R_i^T R_j per directed edge

    @property
    def n_vertices(self):
        return self.scales.shape[0]

    @property
    def n_directed_edges(self):
        return self.log_rotations.shape[0]

    def __len__(self):
        return feature_length(self.n_vertices, self.n_directed_edges)

    def vector(self):
        """Canonical flat layout: all scale blocks, then all edge blocks."""
        return np.concatenate([self.scales.ravel(), self.log_rotations.ravel()])

    @classmethod
    def from_vector(cls, vec, n_vertices, n_directed_edges):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (feature_length(n_vertices, n_directed_edges),):
            raise FeatureError(
                f"feature vector has length {vec.size}, expected "
                f"{feature_length(n_vertices, n_directed_edges)}")
        cut = 6 * n_vertices
        return cls(vec[:cut].reshape(n_vertices, 6).copy(),
                   vec[cut:].reshape(n_directed_edges, 3).copy())


def stretch_to_matrix(six):
    """(…, 6) upper-triangular rows -> (…, 3, 3) symmetric matrices."""
    six = np.asarray(six, dtype=float)
    out = np.empty(six.shape[:-1] + (3, 3))
    out[..., 0, 0] = six[..., 0]
    out[..., 0, 1] = out[..., 1, 0] = six[..., 1]
    out[..., 0, 2] = out[..., 2, 0] = six[..., 2]
    out[..., 1, 1] = six[..., 3]
    out[..., 1, 2] = out[..., 2, 1] = six[..., 4]
    out[..., 2, 2] = six[..., 5]
    return out


def matrix_to_stretch(s):
    """(…, 3, 3) symmetric matrices -> (…, 6) upper-triangular rows."""
    s = np.asarray(s, dtype=float)
    return np.stack(
        [s[..., 0, 0], s[..., 0, 1], s[..., 0, 2],
         s[..., 1, 1], s[..., 1, 2], s[..., 2, 2]],
        axis=-1,
    )


class ReferenceGeometry:
    """Derived quantities of a reference mesh, shared across codec calls.

    Immutable after construction; safe for concurrent readers. The
    position solver is factorized lazily on first reconstruction and
    then reused.
    """

    def __init__(self, mesh, weights=None):
        self.mesh = mesh
        self.key = connectivity_key(mesh)
        self.rings = one_rings(mesh)
        self.edges, self.edge_index = directed_edges(self.rings)
        if weights is None:
            weights = cotan_weights(mesh)
        self.weights = weights
        self.edge_w = edge_weight_array(weights, self.edges)
        src = self.edges[:, 0]
        dst = self.edges[:, 1]
        self.edge_vec = mesh.vertices[src] - mesh.vertices[dst]
        self.centroid = mesh.vertices.mean(axis=0)
        # ring slices: canonical edge order is grouped by source vertex
        counts = np.bincount(src, minlength=mesh.n_vertices)
        self.ring_ptr = np.concatenate([[0], np.cumsum(counts)])
        self.basis = self._ring_basis()
        self._solver = None

    def _ring_basis(self):
        n = self.mesh.n_vertices
        contrib = self.edge_w[:, None, None] * (
            self.edge_vec[:, :, None] * self.edge_vec[:, None, :])
        basis = np.zeros((n, 3, 3))
        np.add.at(basis, self.edges[:, 0], contrib)
        cond = np.linalg.cond(basis)
        flat = ~np.isfinite(cond) | (cond > _COND_LIMIT)
        if np.any(flat):
            tr = np.einsum("vii->v", basis)
            if np.any(tr[flat] <= 0.0):
                bad = int(np.nonzero(flat & (tr <= 0.0))[0][0])
                raise FeatureError(f"degenerate one-ring at vertex {bad}")
            basis = basis.copy()
            basis[flat] += (_RIDGE * tr[flat])[:, None, None] * np.eye(3)
        return basis

    def check_same_connectivity(self, mesh, what="mesh"):
        if connectivity_key(mesh) != self.key:
            raise MeshError(f"{what} does not share the reference connectivity")

    def gradients(self, deformed):
        """Per-vertex least-squares deformation gradients toward ``deformed``."""
        self.check_same_connectivity(deformed, "deformed mesh")
        src = self.edges[:, 0]
        dst = self.edges[:, 1]
        evec_d = deformed.vertices[src] - deformed.vertices[dst]
        contrib = self.edge_w[:, None, None] * (
            evec_d[:, :, None] * self.edge_vec[:, None, :])
        corr = np.zeros((self.mesh.n_vertices, 3, 3))
        np.add.at(corr, src, contrib)
        # T_i = corr_i @ basis_i^-1, with basis symmetric
        tensors = np.linalg.solve(self.basis, corr.transpose(0, 2, 1)).transpose(0, 2, 1)
        rot, stretch = polar_decompose(tensors)
        return DeformGradients(tensors, rot, stretch)

    def encode(self, deformed):
        """Feature of ``deformed`` relative to this reference."""
        grads = self.gradients(deformed)
        rot = grads.rotations
        src = self.edges[:, 0]
        dst = self.edges[:, 1]
        rel = rot[src].transpose(0, 2, 1) @ rot[dst]
        return RimdFeature(matrix_to_stretch(grads.stretches), so3_log(rel))

    def integrate_rotations(self, feature):
        """Absolute per-vertex rotations from relative edge rotations.

        Breadth-first propagation over a spanning tree rooted at vertex
        0 (anchored to the identity), then up to 20 Gauss-Seidel sweeps
        of cotangent-weighted rotation averaging. Exact for features
        encoded from a mesh pair; a convergent smoothing for arbitrary
        features. Returns (rotations, info) with the sweep count and the
        last maximal per-vertex rotation change in radians.
        """
        self._check_feature(feature)
        n = self.mesh.n_vertices
        rel = so3_exp(feature.log_rotations)
        rot = np.empty((n, 3, 3))
        rot[0] = np.eye(3)
        seen = np.zeros(n, dtype=bool)
        seen[0] = True
        queue = deque([0])
        while queue:
            i = queue.popleft()
            lo, hi = self.ring_ptr[i], self.ring_ptr[i + 1]
            for k in range(lo, hi):
                j = self.edges[k, 1]
                if not seen[j]:
                    seen[j] = True
                    rot[j] = rot[i] @ rel[k]
                    queue.append(j)
        if not seen.all():
            raise MeshError("mesh is disconnected; rotations cannot propagate")

        max_change = 0.0
        sweeps = 0
        for sweeps in range(1, _MAX_SWEEPS + 1):
            max_change = 0.0
            for i in range(n):
                lo, hi = self.ring_ptr[i], self.ring_ptr[i + 1]
                nb = self.edges[lo:hi, 1]
                # each consistent term equals R_i: R_j (R_i^T R_j)^T
                acc = np.einsum(
                    "e,eab->ab",
                    self.edge_w[lo:hi],
                    rot[nb] @ rel[lo:hi].transpose(0, 2, 1),
                )
                floor = 1e-12 * np.abs(self.edge_w[lo:hi]).sum()
                if np.linalg.norm(acc) <= max(floor, 1e-300):
                    continue  # averaging target vanished; keep current estimate
                new = project_rotation(acc)
                cos_c = np.clip((np.trace(rot[i].T @ new) - 1.0) / 2.0, -1.0, 1.0)
                max_change = max(max_change, float(np.arccos(cos_c)))
                rot[i] = new
            if max_change < _SWEEP_TOL:
                break
        return rot, {"sweeps": sweeps, "max_change": max_change}

    def _check_feature(self, feature):
        if (feature.n_vertices != self.mesh.n_vertices
                or feature.n_directed_edges != len(self.edges)):
            raise FeatureError(
                f"feature sized for {feature.n_vertices} vertices / "
                f"{feature.n_directed_edges} directed edges, reference has "
                f"{self.mesh.n_vertices} / {len(self.edges)}")

    def _position_solver(self):
        if self._solver is None:
            n = self.mesh.n_vertices
            e = len(self.edges)
            src = self.edges[:, 0]
            dst = self.edges[:, 1]
            rows = (np.repeat(src * 3, 3) + np.tile(np.arange(3), e))
            vals = (self.edge_w[:, None] * self.edge_vec).ravel()
            psi = sp.coo_matrix(
                (np.concatenate([vals, -vals]),
                 (np.concatenate([rows, rows]),
                  np.concatenate([np.repeat(src, 3), np.repeat(dst, 3)]))),
                shape=(3 * n, n),
            ).tocsr()
            normal = (psi.T @ psi).tocsc()
            ones = sp.csc_matrix(np.ones((n, 1)))
            bordered = sp.bmat(
                [[normal, ones], [ones.T, None]], format="csc")
            try:
                lu = spla.splu(bordered)
            except RuntimeError as exc:
                raise FeatureError(f"singular position system: {exc}") from None
            self._solver = (psi, lu)
        return self._solver

    def reconstruct(self, feature):
        """Mesh whose per-ring deformation gradients best match the feature.

        Solves the consistent least-squares system described in the
        module docstring; the translation null space is pinned by
        fixing the centroid to the reference centroid.
        """
        rot, _ = self.integrate_rotations(feature)
        stretch = stretch_to_matrix(feature.scales)
        tensors = rot @ stretch
        target = tensors @ self.basis                       # (n, 3, 3)
        rhs = target.transpose(0, 2, 1).reshape(-1, 3)      # row (i,b), column a
        psi, lu = self._position_solver()
        n = self.mesh.n_vertices
        stacked = np.empty((n + 1, 3))
        stacked[:n] = psi.T @ rhs
        stacked[n] = n * self.centroid
        sol = lu.solve(stacked)
        pos = sol[:n]
        if not np.all(np.isfinite(pos)):
            raise FeatureError("position solve produced non-finite coordinates")
        return self.mesh.with_vertices(pos)


def deformation_gradients(reference, deformed, weights=None):
    """Least-squares per-vertex deformation gradients of a mesh pair.

    ``weights`` are cotangent weights of the reference; computed when
    omitted.
    """
    return ReferenceGeometry(reference, weights).gradients(deformed)


def encode(reference, deformed):
    """RIMD feature of ``deformed`` relative to ``reference``."""
    return ReferenceGeometry(reference).encode(deformed)


def integrate_rotations(feature, reference):
    """See :meth:`ReferenceGeometry.integrate_rotations`."""
    return ReferenceGeometry(reference).integrate_rotations(feature)


def reconstruct(feature, reference):
    """See :meth:`ReferenceGeometry.reconstruct`."""
    return ReferenceGeometry(reference).reconstruct(feature)


def feature_distance(a, b):
    """Euclidean distance between two features of the same layout."""
    va = a.vector() if isinstance(a, RimdFeature) else np.asarray(a, dtype=float)
    vb = b.vector() if isinstance(b, RimdFeature) else np.asarray(b, dtype=float)
    if va.shape != vb.shape:
        raise FeatureError(f"feature lengths differ: {va.size} vs {vb.size}")
    return float(np.linalg.norm(va - vb))


def write_feature(feature, digest, path):
    """Binary feature file: magic, version, sizes, connectivity digest,
    then the canonical payload as little-endian float64."""
    if len(digest) != 32:
        raise FeatureError("connectivity digest must be 32 bytes")
    payload = feature.vector().astype("<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", _VERSION, feature.n_vertices,
                             feature.n_directed_edges))
        fh.write(digest)
        fh.write(payload)


def read_feature(path):
    """Read a feature file; returns (feature, connectivity digest)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise FeatureError(f"{path}: not a feature file")
    if len(blob) < 48:
        raise FeatureError(f"{path}: truncated header")
    version, n, e = struct.unpack("<III", blob[4:16])
    if version != _VERSION:
        raise FeatureError(f"{path}: unsupported version {version}")
    digest = blob[16:48]
    expected = 48 + 8 * feature_length(n, e)
    if len(blob) != expected:
        raise FeatureError(f"{path}: expected {expected} bytes, found {len(blob)}")
    vec = np.frombuffer(blob, dtype="<f8", offset=48).astype(float)
    return RimdFeature.from_vector(vec, n, e), digest
