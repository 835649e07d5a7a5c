"""1-WL color refinement with collision-free interning."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import InputError
from ..graph import Graph

__all__ = ["WLColoring", "wl_refine", "num_classes"]


@dataclass
class WLColoring:
    colors: np.ndarray  # (rounds + 1, num_nodes), dense ids per round
    stable_round: int | None  # first round whose partition equals the previous one

    @property
    def rounds(self) -> int:
        return self.colors.shape[0] - 1

    def final(self) -> np.ndarray:
        return self.colors[-1]

    def classes(self, r: int = -1) -> int:
        return num_classes(self.colors[r])


def num_classes(colors) -> int:
    return len(np.unique(colors))


def wl_refine(g: Graph, init_colors=None, rounds: int = 3, until_stable: bool = False) -> WLColoring:
    """New color = id of ``(old color, sorted multiset of neighbour colors)``.

    Ids are dense in order of first appearance, so two nodes share a color
    exactly when their signatures are equal.  With ``until_stable`` the loop
    runs until the partition stops changing (at most ``num_nodes`` rounds).
    """
    if rounds < 0:
        raise InputError("rounds must be non-negative")
    n = g.num_nodes
    init = np.zeros(n, dtype=np.int64) if init_colors is None else np.asarray(init_colors)
    if init.shape != (n,):
        raise InputError("need one initial color per node")
    table = {}
    current = np.array([table.setdefault(c, len(table)) for c in init.tolist()], dtype=np.int64)
    history = [current]
    stable = None
    limit = max(n, 1) if until_stable else rounds
    offs, cols = g.row_offsets, g.col_indices
    for r in range(1, limit + 1):
        table = {}
        prev = history[-1]
        sig = [
            (int(prev[v]), tuple(sorted(prev[cols[offs[v]:offs[v + 1]]].tolist())))
            for v in range(n)
        ]
        nxt = np.array([table.setdefault(s, len(table)) for s in sig], dtype=np.int64)
        history.append(nxt)
        if stable is None and num_classes(nxt) == num_classes(prev):
            stable = r
            if until_stable:
                break
    return WLColoring(np.stack(history), stable)
