"""G-way one-shot episodes over classes the model never trained on.

An episode holds one support exemplar per class plus a batch of queries
drawn (without replacement) from the remaining instances of those classes.
A query takes the class of its nearest support embedding; exact distance
ties go to the smaller class id so evaluation is order-independent.
"""

from dataclasses import dataclass

import numpy as np

from .encoder import omega_forward
from .gradients import distance
from .kernel import Rng


@dataclass
class Episode:
    support: list  # (EncodedInstance, class_id), one entry per class
    queries: list  # (EncodedInstance, true class_id)


@dataclass
class EvalReport:
    g: int
    n_queries: int
    n_runs: int
    distance: str
    per_run: list
    median: float
    p25: float
    p75: float

    def to_dict(self):
        return {
            "G": self.g,
            "n_queries": self.n_queries,
            "n_runs": self.n_runs,
            "distance": self.distance,
            "per_run": self.per_run,
            "median": self.median,
            "p25": self.p25,
            "p75": self.p75,
        }


def build_episode(pool, g: int, n_queries: int, rng: Rng) -> Episode:
    """Draw a G-way episode from (instance, label) pairs.

    Support exemplars are excluded from the query pool, and queries only come
    from the G chosen classes.
    """
    if g < 1:
        raise ValueError(f"g must be >= 1, got {g}")
    if n_queries < 1:
        raise ValueError(f"n_queries must be >= 1, got {n_queries}")
    by_class = {}
    for idx, (_, label) in enumerate(pool):
        by_class.setdefault(label, []).append(idx)
    classes = sorted(by_class)
    if len(classes) < g:
        raise ValueError(f"a {g}-way episode needs {g} classes, pool has {len(classes)}")
    gen = rng.gen
    chosen = [classes[i] for i in gen.choice(len(classes), size=g, replace=False)]

    support, support_idx = [], set()
    for c in chosen:
        pick = by_class[c][gen.integers(len(by_class[c]))]
        support.append(pool[pick])
        support_idx.add(pick)
    remaining = [i for c in chosen for i in by_class[c] if i not in support_idx]
    if len(remaining) < n_queries:
        raise ValueError(
            f"need {n_queries} queries but only {len(remaining)} instances remain "
            f"outside the support set"
        )
    picks = gen.choice(len(remaining), size=n_queries, replace=False)
    queries = [pool[remaining[i]] for i in picks]
    return Episode(support, queries)


def embed_support(params, cfg, support):
    """Embed support exemplars once for reuse across queries."""
    return [(omega_forward(params, cfg, inst)[0], c) for inst, c in support]


def nearest_class(scored) -> int:
    """argmin over (distance, class_id); ties resolve to the smaller id."""
    return min(scored)[1]


def classify(params, cfg, kind, support, query, support_embeddings=None) -> int:
    """Label a query with the class of its nearest support exemplar."""
    if support_embeddings is None:
        support_embeddings = embed_support(params, cfg, support)
    q_emb, _ = omega_forward(params, cfg, query)
    return nearest_class([(distance(kind, q_emb, emb), c) for emb, c in support_embeddings])


def evaluate(params, cfg, kind, pool, g, n_queries, n_runs, seed) -> EvalReport:
    """Repeat independent episodes and aggregate accuracy quartiles.

    Each run draws a fresh support set and fresh queries from its own child
    stream, so run k is reproducible regardless of the other runs.
    """
    if n_runs < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    root = Rng(seed)
    per_run = []
    for run in range(n_runs):
        ep = build_episode(pool, g, n_queries, root.child(f"run{run}"))
        cached = embed_support(params, cfg, ep.support)
        correct = sum(
            classify(params, cfg, kind, ep.support, q, support_embeddings=cached) == truth
            for q, truth in ep.queries
        )
        per_run.append(correct / n_queries)
    p25, median, p75 = (float(x) for x in np.percentile(per_run, [25, 50, 75]))
    return EvalReport(
        g=g, n_queries=n_queries, n_runs=n_runs, distance=kind,
        per_run=per_run, median=median, p25=p25, p75=p75,
    )
