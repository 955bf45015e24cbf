"""Triangle meshes with shared connectivity: OBJ ingestion, validation,
one-rings, directed edge ordering and cotangent weights.
"""

import hashlib
import os

import numpy as np

__all__ = [
    "MeshError",
    "Mesh",
    "load_obj",
    "save_obj",
    "connectivity_key",
    "one_rings",
    "directed_edges",
    "cotan_weights",
    "bbox_diagonal",
]


class MeshError(ValueError):
    """Invalid mesh topology, geometry or file contents."""


class Mesh:
    """Immutable triangle mesh: (n, 3) float64 vertices, (f, 3) int faces.

    Face indices are 0-based. Every face index must be in range, no face
    may repeat a vertex, and no edge may be shared by more than two
    faces. Boundary edges are allowed. Arrays are frozen after
    construction so a mesh can be shared across threads.
    """

    def __init__(self, vertices, faces):
        v = np.ascontiguousarray(vertices, dtype=float)
        f = np.ascontiguousarray(faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError("vertices must be an (n, 3) array")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshError("faces must be an (f, 3) array of vertex indices")
        if v.shape[0] < 4:
            raise MeshError(f"mesh needs at least 4 vertices, got {v.shape[0]}")
        if f.shape[0] < 1:
            raise MeshError("mesh needs at least 1 face")
        if not np.all(np.isfinite(v)):
            raise MeshError("vertex coordinates must be finite")
        n = v.shape[0]
        if f.min(initial=0) < 0 or f.max(initial=-1) >= n:
            raise MeshError("face index out of range")
        degenerate = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if np.any(degenerate):
            k = int(np.nonzero(degenerate)[0][0])
            raise MeshError(f"face {k} repeats a vertex: {tuple(f[k])}")
        _validate_edge_sharing(f)
        v.setflags(write=False)
        f.setflags(write=False)
        self.vertices = v
        self.faces = f

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_faces(self):
        return self.faces.shape[0]

    def with_vertices(self, vertices):
        """New mesh sharing this connectivity with replaced positions."""
        return Mesh(vertices, self.faces)

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (self.vertices.shape == other.vertices.shape
                and np.array_equal(self.vertices, other.vertices)
                and np.array_equal(self.faces, other.faces))


def _validate_edge_sharing(faces):
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    if np.any(counts > 2):
        bad = np.unique(edges, axis=0)[counts > 2][0]
        raise MeshError(f"edge {tuple(bad)} is shared by more than 2 faces")


def load_obj(path):
    """Read a Wavefront OBJ file (``v``/``f`` records only).

    Faces with more than three vertices are fan-triangulated around the
    first vertex. Indices are 1-based in the file; ``vt``/``vn`` suffixes
    and records, comments and material statements are ignored. Errors
    carry the offending line number.
    """
    vertices = []
    faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) != 4:
                    raise MeshError(f"{path}:{lineno}: vertex record needs 3 coordinates")
                try:
                    vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
                except ValueError as exc:
                    raise MeshError(f"{path}:{lineno}: bad vertex coordinate: {exc}") from None
            elif tag == "f":
                if len(parts) < 4:
                    raise MeshError(f"{path}:{lineno}: face record needs at least 3 indices")
                idx = []
                for token in parts[1:]:
                    head = token.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError:
                        raise MeshError(f"{path}:{lineno}: bad face index {token!r}") from None
                    if i < 1:
                        raise MeshError(
                            f"{path}:{lineno}: face index {i} out of range (OBJ is 1-based)")
                    idx.append(i - 1)
                for a, b in zip(idx[1:], idx[2:]):
                    faces.append((idx[0], a, b))
            # vt, vn, vp, o, g, s, usemtl, mtllib: not part of the subset
    if len(vertices) < 4:
        raise MeshError(f"{path}: mesh needs at least 4 vertices, found {len(vertices)}")
    arr = np.asarray(faces, dtype=np.int64)
    if arr.size and arr.max() >= len(vertices):
        bad = int(arr.max())
        raise MeshError(f"{path}: face index {bad + 1} out of range ({len(vertices)} vertices)")
    try:
        return Mesh(np.asarray(vertices), arr)
    except MeshError as exc:
        raise MeshError(f"{path}: {exc}") from None


def save_obj(mesh, path):
    """Write a mesh as OBJ; coordinates keep full float64 round-trip precision."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(format_obj(mesh))
    os.replace(tmp, path)


def format_obj(mesh):
    """OBJ text for a mesh; deterministic, 17 significant digits."""
    lines = []
    for x, y, z in mesh.vertices:
        lines.append(f"v {x:.17g} {y:.17g} {z:.17g}")
    for a, b, c in mesh.faces:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    lines.append("")
    return "\n".join(lines)


def connectivity_key(mesh):
    """Digest of the canonicalized face list.

    Faces are rotated so the smallest index comes first (winding kept),
    then sorted, so the key is invariant under face reordering and
    vertex-position changes but sensitive to any index or winding change.
    """
    f = mesh.faces
    rot = np.argmin(f, axis=1)
    canon = np.stack([f[np.arange(len(f)), (rot + k) % 3] for k in range(3)], axis=1)
    canon = canon[np.lexsort((canon[:, 2], canon[:, 1], canon[:, 0]))]
    h = hashlib.sha256()
    h.update(np.int64(mesh.n_vertices).tobytes())
    h.update(np.ascontiguousarray(canon, dtype=np.int64).tobytes())
    return h.digest()


def one_rings(mesh):
    """Per-vertex neighbor lists, each sorted ascending.

    Raises on isolated vertices: they cannot carry a deformation
    gradient.
    """
    n = mesh.n_vertices
    neighbors = [set() for _ in range(n)]
    for a, b, c in mesh.faces:
        neighbors[a].update((b, c))
        neighbors[b].update((a, c))
        neighbors[c].update((a, b))
    rings = []
    for i, s in enumerate(neighbors):
        if not s:
            raise MeshError(f"isolated vertex {i}: not referenced by any face")
        rings.append(sorted(s))
    return rings


def directed_edges(rings):
    """Canonical directed edge order: by source vertex, then ascending neighbor.

    Returns (edges, index) where edges is an (E, 2) int array and index
    maps (i, j) -> position.
    """
    edges = [(i, j) for i, ring in enumerate(rings) for j in ring]
    arr = np.asarray(edges, dtype=np.int64)
    return arr, {e: k for k, e in enumerate(edges)}


def cotan_weights(mesh):
    """Cotangent weight per undirected edge: cot(alpha) + cot(beta) of the
    angles opposite the edge; boundary edges keep their single cotangent.

    Returned as a dict over ordered vertex pairs (i < j). Weights may be
    negative for obtuse triangles and are used as-is. Raises on
    zero-area faces, whose cotangents are undefined.
    """
    v = mesh.vertices
    weights = {}
    for fi, (a, b, c) in enumerate(mesh.faces):
        pa, pb, pc = v[a], v[b], v[c]
        for apex, (i, j) in ((a, (b, c)), (b, (c, a)), (c, (a, b))):
            u = v[i] - v[apex]
            w = v[j] - v[apex]
            cross = np.cross(u, w)
            area2 = np.linalg.norm(cross)
            if area2 < 1e-300:
                raise MeshError(f"face {fi} {(int(a), int(b), int(c))} has zero area")
            cot = float(np.dot(u, w) / area2)
            key = (i, j) if i < j else (j, i)
            weights[key] = weights.get(key, 0.0) + cot
    return weights


def edge_weight_array(weights, edges):
    """Weights aligned with a canonical directed edge array."""
    out = np.empty(len(edges))
    for k, (i, j) in enumerate(edges):
        key = (i, j) if i < j else (j, i)
        out[k] = weights[(int(key[0]), int(key[1]))]
    return out


def bbox_diagonal(mesh):
    """Length of the axis-aligned bounding box diagonal."""
    span = mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)
    return float(np.linalg.norm(span))
