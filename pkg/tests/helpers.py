"""Shared measurement utilities for the test suite."""

import numpy as np


def fit_bend_angle(mesh, rings, segments):
    """Total signed turning of the tube centerline in the x-z plane.

    The centerline is the per-ring vertex centroid; the bend parameter
    is the least-squares constant turning rate between consecutive
    centerline segments (their mean) times the number of turns, i.e.
    the summed signed angle about the +y axis. Decoded meshes keep the
    generator's orientation (rotation integration anchors vertex 0), so
    no alignment is needed.
    """
    centers = mesh.vertices.reshape(rings, segments, 3).mean(axis=1)
    seg = np.diff(centers, axis=0)
    seg = seg / np.linalg.norm(seg, axis=1, keepdims=True)
    a, b = seg[:-1], seg[1:]
    cross_y = a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2]
    dots = np.clip((a * b).sum(axis=1), -1.0, 1.0)
    return float(np.arctan2(cross_y, dots).sum())


def is_monotone(values, tol):
    """True if the sequence moves in one direction, allowing dips <= tol."""
    diffs = np.diff(values)
    return bool(np.all(diffs >= -tol) or np.all(diffs <= tol))


def class_separation_accuracy(coords, labels):
    """Accuracy of the midpoint threshold along the class-mean axis."""
    labels = np.asarray(labels)
    classes = sorted(set(labels))
    assert len(classes) == 2
    mask = labels == classes[0]
    direction = coords[~mask].mean(axis=0) - coords[mask].mean(axis=0)
    proj = coords @ direction
    threshold = (proj[mask].mean() + proj[~mask].mean()) / 2.0
    pred = proj > threshold
    acc = (pred == ~mask).mean()
    return float(max(acc, 1.0 - acc))


def retrieval_average_precision(coords, labels):
    """Mean average precision of same-class retrieval ranked by distance."""
    labels = np.asarray(labels)
    n = len(labels)
    aps = []
    for q in range(n):
        d = np.linalg.norm(coords - coords[q], axis=1)
        order = np.argsort(d, kind="stable")
        order = order[order != q]
        relevant = labels[order] == labels[q]
        if not relevant.any():
            continue
        hits = np.cumsum(relevant)
        precision = hits / np.arange(1, n)
        aps.append((precision * relevant).sum() / relevant.sum())
    return float(np.mean(aps))
