"""Rotation-group primitives: exp/log maps on SO(3), polar decomposition,
and rigid point-set alignment.

All functions accept a single item or a leading batch axis and operate in
float64. Angles are radians.
"""

import numpy as np

__all__ = [
    "skew",
    "so3_exp",
    "so3_log",
    "polar_decompose",
    "project_rotation",
    "rigid_align",
]

# Below this angle the sin(t)/t style ratios switch to their Taylor series.
_TAYLOR_ANGLE = 1e-6
# Above pi - _NEAR_PI the log map extracts the axis from the symmetric part
# of R; the antisymmetric part scales with sin(t) and loses the axis there.
_NEAR_PI = 1e-2


def skew(v):
    """Cross-product matrix of a 3-vector (batched on leading axes)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _vee(m):
    return np.stack(
        [m[..., 2, 1] - m[..., 1, 2],
         m[..., 0, 2] - m[..., 2, 0],
         m[..., 1, 0] - m[..., 0, 1]],
        axis=-1,
    )


def so3_exp(v):
    """Rodrigues map: axis-angle vector -> rotation matrix.

    Uses the series expansion of sin(t)/t and (1-cos t)/t^2 for tiny
    angles so the map is smooth through zero.
    """
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1)
    t2 = theta * theta
    small = theta < _TAYLOR_ANGLE
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0,
                     np.sin(theta) / np.where(small, 1.0, theta))
        b = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0,
                     (1.0 - np.cos(theta)) / np.where(small, 1.0, t2))
    k = skew(v)
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + a[..., None, None] * k + b[..., None, None] * (k @ k)


def _check_rotation(r, tol):
    err = np.abs(r @ np.swapaxes(r, -1, -2) - np.eye(3)).max()
    if err > tol:
        raise ValueError(f"matrix is not orthogonal within {tol:g} (defect {err:.3e})")
    if np.any(np.linalg.det(r) < 0.0):
        raise ValueError("matrix has determinant -1, not a rotation")


def _canonical_pi_axis(axis):
    """Resolve the +/-axis ambiguity at angle pi: first nonzero component > 0."""
    flat = np.atleast_2d(axis)
    for row in flat:
        for c in row:
            if c != 0.0:
                if c < 0.0:
                    row *= -1.0
                break
    return flat.reshape(axis.shape)


def so3_log(r, *, orth_tol=1e-8):
    """Principal logarithm of a rotation matrix as an axis-angle 3-vector.

    The returned angle lies in [0, pi]; it comes from
    atan2(|antisymmetric part|, (trace-1)/2), which stays accurate at
    both ends of the range. At exactly pi the sign of the axis is fixed
    by making its first nonzero component positive.
    """
    r = np.asarray(r, dtype=float)
    single = r.ndim == 2
    rb = r.reshape((-1, 3, 3))
    _check_rotation(rb, orth_tol)

    tr = np.einsum("...ii", rb)
    cos_t = np.clip((tr - 1.0) / 2.0, -1.0, 1.0)
    anti = 0.5 * _vee(rb)  # = sin(theta) * axis
    sin_t = np.linalg.norm(anti, axis=-1)
    theta = np.arctan2(sin_t, cos_t)

    out = np.empty((rb.shape[0], 3))
    tiny = theta < _TAYLOR_ANGLE
    near_pi = theta > np.pi - _NEAR_PI
    generic = ~tiny & ~near_pi

    if np.any(generic):
        t = theta[generic]
        out[generic] = anti[generic] * (t / np.sin(t))[:, None]
    if np.any(tiny):
        # theta/sin(theta) to second order; higher terms are below precision
        t2 = theta[tiny] ** 2
        out[tiny] = anti[tiny] * (1.0 + t2 / 6.0)[:, None]
    for i in np.nonzero(near_pi)[0]:
        m = rb[i]
        t = theta[i]
        # axis from the symmetric part: u u^T = (sym(R) - cos t I) / (1 - cos t)
        uut = (0.5 * (m + m.T) - cos_t[i] * np.eye(3)) / (1.0 - cos_t[i])
        k = int(np.argmax(np.diag(uut)))
        u = uut[:, k] / np.sqrt(max(uut[k, k], 0.0))
        u /= np.linalg.norm(u)
        if sin_t[i] > 1e-12:
            if np.dot(anti[i], u) < 0.0:
                u = -u
        else:
            u = _canonical_pi_axis(u)
        out[i] = t * u

    return out[0] if single else out.reshape(r.shape[:-2] + (3,))


def polar_decompose(t):
    """Factor a 3x3 matrix as R @ S with R a rotation and S symmetric.

    When the orthogonal factor of the SVD has determinant -1, the sign of
    the column paired with the smallest singular value is flipped, so R
    is always a proper rotation (S then carries a negative stretch).
    """
    t = np.asarray(t, dtype=float)
    single = t.ndim == 2
    tb = t.reshape((-1, 3, 3))
    if not np.all(np.isfinite(tb)):
        raise ValueError("matrix has non-finite entries")
    u, sig, vt = np.linalg.svd(tb)
    if np.any(sig[:, 0] < 1e-300):
        raise ValueError("matrix is numerically singular, no polar factorization")
    det = np.linalg.det(u @ vt)
    flip = det < 0.0
    if np.any(flip):
        u = u.copy()
        u[flip, :, 2] *= -1.0  # singular values sorted descending: column 2 is smallest
    r = u @ vt
    s = np.swapaxes(r, -1, -2) @ tb
    s = 0.5 * (s + np.swapaxes(s, -1, -2))
    if single:
        return r[0], s[0]
    shape = t.shape
    return r.reshape(shape), s.reshape(shape)


def project_rotation(m):
    """Closest rotation (Frobenius) to a 3x3 matrix; the R of its polar form."""
    r, _ = polar_decompose(m)
    return r


def rigid_align(source, target):
    """Best rigid transform (R, t) with R @ source_i + t ~= target_i.

    Least-squares over all rotations and translations (Kabsch); no scaling.
    """
    source = np.asarray(source, dtype=float)
    target = np.asarray(target, dtype=float)
    if source.shape != target.shape or source.ndim != 2 or source.shape[1] != 3:
        raise ValueError("point sets must both be (n, 3)")
    cs = source.mean(axis=0)
    ct = target.mean(axis=0)
    h = (source - cs).T @ (target - ct)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = ct - r @ cs
    return r, t
