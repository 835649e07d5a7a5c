"""Counter-based random numbers.

Values depend only on a key and on element coordinates, never on call order,
so a node's dropout mask is identical whether it is computed in a full batch,
in one of several mini-batches, or on a different thread.
"""
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(x: np.ndarray) -> np.ndarray:
    # splitmix64 finaliser; uint64 arithmetic wraps
    z = x + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def key_hash(key) -> np.ndarray:
    h = np.zeros(1, dtype=np.uint64)
    for k in key:
        h = _mix(h ^ np.array([int(k) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    return h


def counter_uniform(key, row_ids, cols: int) -> np.ndarray:
    """Uniform ``[0, 1)`` matrix of shape ``(len(row_ids), cols)``.

    Entry ``(i, j)`` is a pure function of ``(key, row_ids[i], j)``.
    """
    rows = np.asarray(row_ids, dtype=np.uint64).reshape(-1, 1)
    cidx = np.arange(cols, dtype=np.uint64).reshape(1, -1)
    h = key_hash(key)
    z = _mix(_mix(rows ^ h) ^ (cidx * _GOLDEN))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
