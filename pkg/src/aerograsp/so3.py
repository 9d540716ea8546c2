"""Small rotation-group helpers shared across the package."""

import numpy as np

E3 = np.array([0.0, 0.0, 1.0])


def cross(a, b):
    """Cross product of two 3-vectors (np.cross is slow for single vectors)."""
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def hat(r):
    """Map a 3-vector to its skew-symmetric matrix."""
    return np.array(
        [
            [0.0, -r[2], r[1]],
            [r[2], 0.0, -r[0]],
            [-r[1], r[0], 0.0],
        ]
    )


def vee(S):
    """Inverse of :func:`hat`."""
    return np.array([S[2, 1], S[0, 2], S[1, 0]])


def expm(w):
    """Rodrigues formula, exp(hat(w))."""
    th = np.linalg.norm(w)
    W = hat(w)
    if th < 1e-8:
        return np.eye(3) + W + 0.5 * W @ W
    return np.eye(3) + np.sin(th) / th * W + (1.0 - np.cos(th)) / th**2 * W @ W


def logm(R):
    """Rotation vector of R (principal branch)."""
    c = np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0)
    th = np.arccos(c)
    if th < 1e-6:
        return vee(R - R.T) * 0.5
    if np.pi - th < 1e-6:
        # near pi: axis from the symmetric part
        B = 0.5 * (R + np.eye(3))
        k = np.argmax(np.diag(B))
        axis = B[:, k] / np.sqrt(B[k, k])
        return th * axis
    return th / (2.0 * np.sin(th)) * vee(R - R.T)


def axis_angle(axis, angle):
    return expm(np.asarray(axis, dtype=float) * angle)


def rot_x(a):
    return axis_angle([1.0, 0.0, 0.0], a)


def rot_y(a):
    return axis_angle([0.0, 1.0, 0.0], a)


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def project_to_so3(R):
    """Nearest rotation matrix in the Frobenius sense (polar factor)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


def is_rotation(R, tol=1e-9):
    R = np.asarray(R)
    return (
        R.shape == (3, 3)
        and np.all(np.isfinite(R))
        and np.allclose(R.T @ R, np.eye(3), atol=tol)
        and abs(np.linalg.det(R) - 1.0) < tol
    )
