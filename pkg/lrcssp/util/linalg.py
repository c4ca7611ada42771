import numpy as np

__all__ = ['project_capped_simplex', 'sherman_morrison_update', 'largest_eigenvalue']


def project_capped_simplex(x):
    """Euclidean projection of every column of ``x`` onto {z >= 0, sum(z) <= 1}

    Args:
        x (numpy.ndarray): vector of shape (n,) or matrix of shape (n, m)

    Returns:
        numpy.ndarray: array of the same shape with feasible columns
    """
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    n, m = x.shape

    z = np.maximum(x, 0.0)
    over = z.sum(axis=0) > 1.0
    if np.any(over):
        xo = x[:, over]
        u = -np.sort(-xo, axis=0)
        css = np.cumsum(u, axis=0) - 1.0
        k = np.arange(1, n + 1)[:, None]
        cond = u - css / k > 0
        # last index where the condition holds
        rho = n - 1 - np.argmax(cond[::-1], axis=0)
        theta = css[rho, np.arange(xo.shape[1])] / (rho + 1)
        z[:, over] = np.maximum(xo - theta, 0.0)

    return z[:, 0] if squeeze else z


def sherman_morrison_update(a_inv, c):
    """Inverse of ``A + c c^T`` given the inverse of a symmetric ``A``
    """
    u = a_inv @ c
    return a_inv - np.outer(u, u) / (1.0 + c @ u)


def largest_eigenvalue(v, n_iter=100):
    """Largest eigenvalue of a symmetric positive-definite matrix by power iteration
    """
    x = np.ones(v.shape[0]) / np.sqrt(v.shape[0])
    for _ in range(n_iter):
        y = v @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
    return float(x @ v @ x)
