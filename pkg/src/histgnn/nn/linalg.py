import numpy as np

from ..exceptions import InputError


def spectral_norm_estimate(w, iters: int = 500, seed: int = 0, tol: float = 1e-12) -> float:
    """Largest singular value of ``w`` by power iteration on ``w.T @ w``."""
    w = np.asarray(getattr(w, "value", w), dtype=np.float64)
    if w.ndim != 2:
        raise InputError("spectral norm needs a 2-D matrix")
    if w.size == 0 or not np.any(w):
        return 0.0
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(w.shape[1])
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(iters):
        y = w.T @ (w @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            # started in the null space; restart away from it
            x = rng.standard_normal(w.shape[1])
            x /= np.linalg.norm(x)
            continue
        x = y / ny
        new = float(np.sqrt(ny))
        if abs(new - sigma) <= tol * max(new, 1.0):
            sigma = new
            break
        sigma = new
    return float(np.linalg.norm(w @ x))
