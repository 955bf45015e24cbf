"""Synthetic families of deformed cylinder meshes.

Stand-in corpora for experimentation and tests: a grid tube swept
through smooth bend / twist deformations, optionally with a mild
secondary bulge or taper modulation so the family carries more than one
independent mode of variation.
"""

import numpy as np

from .mesh import Mesh, save_obj

__all__ = ["tube_mesh", "deform_tube", "synthesize_corpus", "SYNTH_KINDS"]

SYNTH_KINDS = ("cylinder-bend", "cylinder-twist", "two-class")


def tube_mesh(rings=20, segments=20, radius=1.0, length=4.0):
    """Open-ended cylinder grid: ``rings`` circles of ``segments`` vertices.

    Vertex (i, j) has index i * segments + j; the axis runs along z,
    centered on the origin.
    """
    if rings < 2 or segments < 3:
        raise ValueError("tube needs at least 2 rings and 3 segments")
    zs = np.linspace(-length / 2.0, length / 2.0, rings)
    phi = 2.0 * np.pi * np.arange(segments) / segments
    verts = np.empty((rings * segments, 3))
    for i, z in enumerate(zs):
        sl = slice(i * segments, (i + 1) * segments)
        verts[sl, 0] = radius * np.cos(phi)
        verts[sl, 1] = radius * np.sin(phi)
        verts[sl, 2] = z
    faces = []
    for i in range(rings - 1):
        for j in range(segments):
            a = i * segments + j
            b = i * segments + (j + 1) % segments
            c = (i + 1) * segments + (j + 1) % segments
            d = (i + 1) * segments + j
            faces.append((a, b, c))
            faces.append((a, c, d))
    return Mesh(verts, np.asarray(faces, dtype=np.int64))


def deform_tube(mesh, length, bend=0.0, twist=0.0, bulge=0.0, taper=0.0):
    """Smooth tube deformation, identity when all parameters are zero.

    bend:  total turning angle (radians) of the axis, bent in the x-z
           plane with constant curvature.
    twist: total rotation (radians) of the last ring against the first.
    bulge: relative radius gain at mid-height, sine profile.
    taper: relative radius slope from -taper at the bottom to +taper at
           the top.
    """
    v = mesh.vertices
    w = (v[:, 2] + length / 2.0) / length  # axial fraction in [0, 1]
    scale = (1.0 + bulge * np.sin(np.pi * w)) * (1.0 + taper * (2.0 * w - 1.0))
    x = v[:, 0] * scale
    y = v[:, 1] * scale
    out = np.empty_like(v)
    if twist != 0.0:
        ang = twist * w
        x, y = x * np.cos(ang) - y * np.sin(ang), x * np.sin(ang) + y * np.cos(ang)
    if bend != 0.0:
        # axis mapped to a circular arc of radius length/bend, sections
        # rotated to stay orthogonal to it
        rho = length / bend
        s = w * length
        alpha = s / rho
        out[:, 0] = rho * (1.0 - np.cos(alpha)) + x * np.cos(alpha)
        out[:, 1] = y
        out[:, 2] = (rho - x) * np.sin(alpha) - length / 2.0
    else:
        out[:, 0] = x
        out[:, 1] = y
        out[:, 2] = v[:, 2]
    return mesh.with_vertices(out)


def _sweep(count):
    if count == 1:
        return np.zeros(1)
    return np.arange(count) / (count - 1.0)


def synthesize_corpus(kind, count, seed, out_dir, rings=20, segments=20,
                      radius=1.0, length=4.0):
    """Write a deterministic family of deformed tubes as OBJ files.

    ``cylinder-bend`` sweeps the bend angle from zero with a mild,
    seed-jittered bulge modulation; ``cylinder-twist`` sweeps the twist
    angle with a mild taper modulation; ``two-class`` emits two
    visually distinct radius classes (bend-swept within each class) and
    a ``labels.txt`` file. Returns the list of written paths.
    """
    if kind not in SYNTH_KINDS:
        raise ValueError(f"unknown corpus kind {kind!r}, expected one of {SYNTH_KINDS}")
    if count < 2:
        raise ValueError("corpus needs at least 2 models")
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([seed, 17])
    paths = []

    # The primary angle is swept smoothly over the family; bulge and
    # taper are independent seeded draws per model (zero for model 0,
    # which therefore stays the undeformed reference tube), so the
    # family has more independent modes than the sweep alone.
    if kind == "cylinder-bend":
        base = tube_mesh(rings, segments, radius, length)
        bulges = rng.uniform(-0.08, 0.08, count)
        tapers = rng.uniform(-0.1, 0.1, count)
        bulges[0] = tapers[0] = 0.0
        for k, uk in enumerate(_sweep(count)):
            m = deform_tube(base, length, bend=0.9 * uk, bulge=bulges[k],
                            taper=tapers[k])
            p = out_dir / f"bend_{k:03d}.obj"
            save_obj(m, p)
            paths.append(p)
    elif kind == "cylinder-twist":
        base = tube_mesh(rings, segments, radius, length)
        bulges = rng.uniform(-0.08, 0.08, count)
        tapers = rng.uniform(-0.1, 0.1, count)
        bulges[0] = tapers[0] = 0.0
        for k, uk in enumerate(_sweep(count)):
            m = deform_tube(base, length, twist=1.4 * uk, bulge=bulges[k],
                            taper=tapers[k])
            p = out_dir / f"twist_{k:03d}.obj"
            save_obj(m, p)
            paths.append(p)
    else:  # two-class
        half = count // 2
        labels = []
        idx = 0
        for label, rad, n_class in (("thin", 0.75 * radius, half),
                                    ("thick", 1.25 * radius, count - half)):
            base = tube_mesh(rings, segments, rad, length)
            bulges = rng.uniform(-0.08, 0.08, n_class)
            tapers = rng.uniform(-0.1, 0.1, n_class)
            twists = rng.uniform(-0.5, 0.5, n_class)
            for k, uk in enumerate(_sweep(n_class)):
                m = deform_tube(base, length, bend=0.7 * uk, twist=twists[k],
                                bulge=bulges[k], taper=tapers[k])
                p = out_dir / f"shape_{idx:03d}.obj"
                save_obj(m, p)
                paths.append(p)
                labels.append(label)
                idx += 1
        (out_dir / "labels.txt").write_text("\n".join(labels) + "\n", encoding="utf-8")
    return paths
