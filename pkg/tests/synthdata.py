"""Synthetic rating files for tests and demos.

``clustered_ratings`` plants learnable structure: users and items belong
to taste clusters, own-cluster items rate high and off-cluster items low,
so a working model should rank held-out targets far above chance.
"""

from __future__ import annotations

import numpy as np


def clustered_ratings(num_users=60, num_items=120, events_per_user=(10, 24),
                      clusters=4, noise=0.1, seed=0) -> bytes:
    """An ml100k-format byte blob with planted cluster preferences."""
    rng = np.random.default_rng(seed)
    user_cluster = rng.integers(clusters, size=num_users)
    item_cluster = rng.integers(clusters, size=num_items)
    lines = []
    ts = 0
    for u in range(num_users):
        n = int(rng.integers(events_per_user[0], events_per_user[1] + 1))
        items = rng.choice(num_items, size=min(n, num_items), replace=False)
        for item in items:
            ts += 1
            same = item_cluster[item] == user_cluster[u]
            if rng.random() < noise:
                same = not same
            rating = rng.integers(4, 6) if same else rng.integers(1, 4)
            lines.append(f"{u}\t{item}\t{rating}\t{ts}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def uniform_ratings(num_users=30, num_items=40, events_per_user=(6, 15),
                    seed=7) -> bytes:
    """Structure-free ratings; handy for protocol and determinism tests."""
    rng = np.random.default_rng(seed)
    lines = []
    ts = 0
    for u in range(num_users):
        n = int(rng.integers(events_per_user[0], events_per_user[1] + 1))
        for _ in range(n):
            ts += 1
            lines.append(f"{u}\t{rng.integers(num_items)}\t{rng.integers(1, 6)}\t{ts}")
    return ("\n".join(lines) + "\n").encode("utf-8")
