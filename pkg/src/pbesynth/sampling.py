"""Incremental sampling without replacement over per-position distributions.

A sampler state is a prefix tree of partial choices.  Every node tracks the
unsampled probability mass below it; drawing a complete tuple subtracts its
path mass from all ancestors, so no tuple is ever produced twice and the
first draw from a fresh state follows the input distribution exactly.
Exhaustion is tracked structurally (booleans, not float comparisons), so a
support of size k yields exactly k distinct tuples.
"""

from __future__ import annotations

import random
from typing import List, Optional, Sequence, Tuple


class _Node:
    __slots__ = ("orig", "remaining", "children", "exhausted")

    def __init__(self, orig: float):
        self.orig = orig
        self.remaining = orig
        self.children: Optional[list] = None
        self.exhausted = False


class UniqueSampler:
    """Samples distinct tuples from a product of finite distributions.

    `position_dists` is a list (one entry per tuple position) of lists of
    ``(choice, probability)`` pairs; probabilities at each position should
    sum to 1 (they are normalized defensively).
    """

    def __init__(self, position_dists: Sequence[Sequence[Tuple[object, float]]]):
        self.dists = []
        for dist in position_dists:
            total = sum(p for _, p in dist)
            if not dist or total <= 0:
                raise ValueError("each position needs positive total mass")
            self.dists.append([(c, p / total) for c, p in dist])
        self.root = _Node(1.0)

    @property
    def exhausted(self) -> bool:
        return self.root.exhausted

    def support_size(self) -> int:
        n = 1
        for dist in self.dists:
            n *= len(dist)
        return n

    def sample(self, rng: random.Random) -> Optional[tuple]:
        """Draw one not-yet-seen tuple, or None when the support is spent."""
        if self.root.exhausted:
            return None
        node = self.root
        trail: List[_Node] = [node]
        choices = []
        for depth, dist in enumerate(self.dists):
            if node.children is None:
                node.children = [_Node(node.orig * p) for _, p in dist]
            idx = self._pick(node, rng)
            choices.append(dist[idx][0])
            node = node.children[idx]
            trail.append(node)
        # `node` is now the leaf for this complete tuple
        consumed = node.remaining
        node.exhausted = True
        for anc in trail:
            anc.remaining = max(anc.remaining - consumed, 0.0)
        for anc in reversed(trail[:-1]):
            if anc.children is not None and all(c.exhausted for c in anc.children):
                anc.exhausted = True
            else:
                break
        return tuple(choices)

    def _pick(self, node: _Node, rng: random.Random) -> int:
        live = [i for i, c in enumerate(node.children) if not c.exhausted]
        weights = [node.children[i].remaining for i in live]
        total = sum(weights)
        if total <= 0.0:
            # float cancellation: fall back to uniform over live children
            return live[int(rng.random() * len(live)) % len(live)]
        x = rng.random() * total
        acc = 0.0
        for i, w in zip(live, weights):
            acc += w
            if x < acc:
                return i
        return live[-1]


def unique_sample(position_dists, budget: int, state: UniqueSampler,
                  rng: random.Random):
    """Draw up to `budget` distinct tuples from `state`; returns fewer once
    the support is exhausted."""
    out = []
    for _ in range(budget):
        t = state.sample(rng)
        if t is None:
            break
        out.append(t)
    return out
