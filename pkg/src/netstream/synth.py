"""Piecewise-stationary synthetic time series with known ground-truth
networks.

Each segment draws a fresh random graph (preferential-attachment or
rewired-ring), assigns edge weights uniformly from [-1/2,-1/4] u [1/4,1/2],
builds a diagonally dominant precision matrix from them, and simulates a
VAR(1) whose stationary marginal covariance equals the precision's inverse
exactly:

    x_t = a * x_{t-1} + eps_t,   eps_t ~ N(0, (1 - a^2) * Sigma)

Segments are simulated independently (fresh x_0 per segment) and
concatenated; all randomness flows from explicit PCG64 seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


def _generator(seed):
    return np.random.Generator(np.random.PCG64(seed))


def gen_barabasi_albert(p, m, seed):
    """Preferential-attachment graph: edge list over p nodes.

    Starts from m unconnected seed nodes; every new node attaches to m
    distinct existing nodes sampled proportionally to degree (uniformly
    while all degrees are zero), giving exactly m*(p - m) edges.
    """
    if not 1 <= m < p:
        raise ValueError("require 1 <= m < p")
    rng = _generator(seed)
    edges = set()
    attachment = []      # existing nodes repeated once per degree unit
    for new in range(m, p):
        targets = set()
        while len(targets) < m:
            if attachment:
                cand = int(attachment[rng.integers(len(attachment))])
            else:
                cand = int(rng.integers(new))
            targets.add(cand)
        for tgt in sorted(targets):
            edges.add((min(new, tgt), max(new, tgt)))
            attachment.append(tgt)
        attachment.extend([new] * m)
    return sorted(edges)


def gen_watts_strogatz(p, k, beta, seed):
    """Rewired ring lattice with p*k/2 edges preserved.

    Each clockwise lattice edge (i, i+j) is rewired with probability beta
    to a uniformly random non-duplicate target.
    """
    if k % 2 != 0 or not 0 < k < p:
        raise ValueError("require even k with 0 < k < p")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    rng = _generator(seed)
    edges = set()
    for j in range(1, k // 2 + 1):
        for i in range(p):
            edges.add((min(i, (i + j) % p), max(i, (i + j) % p)))
    edges = sorted(edges)
    adjacency = {e: True for e in edges}
    result = []
    for j in range(1, k // 2 + 1):
        for i in range(p):
            e = (min(i, (i + j) % p), max(i, (i + j) % p))
            if e not in adjacency:
                continue
            if rng.random() < beta:
                # rewire the far endpoint, keeping i
                for _ in range(p):
                    w = int(rng.integers(p))
                    cand = (min(i, w), max(i, w))
                    if w != i and cand not in adjacency:
                        del adjacency[e]
                        adjacency[cand] = True
                        break
    return sorted(adjacency)


def graph_to_precision(edges, p, seed, dominance_margin=0.1, normalize=True):
    """Weighted precision matrix from an edge list.

    Off-diagonal entries on edges draw uniformly from
    [-1/2,-1/4] u [1/4,1/2]; the diagonal is the absolute row sum plus
    dominance_margin, which guarantees positive definiteness.  With
    normalize=True the matrix is rescaled to unit diagonal.  Returns
    (precision, covariance).
    """
    rng = _generator(seed)
    K = np.zeros((p, p))
    for (i, j) in edges:
        w = rng.uniform(0.25, 0.5) * (1.0 if rng.random() < 0.5 else -1.0)
        K[i, j] = w
        K[j, i] = w
    diag = np.abs(K).sum(axis=1) + dominance_margin
    K[np.diag_indices(p)] = diag
    if normalize:
        K = K / np.sqrt(np.outer(diag, diag))
    K = 0.5 * (K + K.T)
    return K, np.linalg.inv(K)


def gen_var_segment(precision, length, var_coeff, seed):
    """VAR(1) draw whose stationary marginal covariance is precision^{-1}."""
    if not 0.0 <= var_coeff < 1.0:
        raise ValueError("var_coeff must lie in [0, 1)")
    rng = _generator(seed)
    Sigma = np.linalg.inv(precision)
    L = np.linalg.cholesky(Sigma)
    p = precision.shape[0]
    X = np.empty((length, p))
    X[0] = L @ rng.standard_normal(p)
    innov_scale = np.sqrt(1.0 - var_coeff ** 2)
    for t in range(1, length):
        X[t] = var_coeff * X[t - 1] + innov_scale * (L @ rng.standard_normal(p))
    return X


@dataclass(frozen=True)
class GroundTruthSegment:
    graph: tuple            # sorted edge tuples (i, j), i < j
    precision: np.ndarray
    covariance: np.ndarray
    length: int
    start: int              # 1-based index of the segment's first observation

    @property
    def edge_set(self):
        return set(self.graph)


@dataclass(frozen=True)
class DatasetSpec:
    p: int = 10
    segments: int = 5
    seg_len: int = 100
    graph_model: str = "ba"          # "ba" or "ws"
    m: int = 2
    k: int = 4
    beta: float = 0.75
    var_coeff: float = 0.3
    seed: int = 0
    normalize: bool = True

    def __post_init__(self):
        if self.graph_model not in ("ba", "ws"):
            raise ValueError("graph_model must be 'ba' or 'ws'")
        if self.segments < 1 or self.seg_len < 1:
            raise ValueError("segments and seg_len must be >= 1")


@dataclass(frozen=True)
class SyntheticDataset:
    spec: DatasetSpec
    segments: tuple          # GroundTruthSegment per block
    observations: np.ndarray # (T, p)
    change_points: tuple     # 1-based first index of each new segment

    @property
    def T(self):
        return self.observations.shape[0]

    def truth_at(self, t):
        """Ground-truth segment active at 1-based time t."""
        idx = min((t - 1) // self.spec.seg_len, len(self.segments) - 1)
        return self.segments[idx]


def gen_dataset(spec):
    """Independent graph + precision per segment, segments concatenated."""
    root = np.random.SeedSequence(spec.seed)
    children = root.spawn(spec.segments)
    segments = []
    blocks = []
    for s in range(spec.segments):
        graph_seed, weight_seed, path_seed = children[s].spawn(3)
        if spec.graph_model == "ba":
            edges = gen_barabasi_albert(spec.p, spec.m, graph_seed)
        else:
            edges = gen_watts_strogatz(spec.p, spec.k, spec.beta, graph_seed)
        K, Sigma = graph_to_precision(edges, spec.p, weight_seed,
                                      normalize=spec.normalize)
        X = gen_var_segment(K, spec.seg_len, spec.var_coeff, path_seed)
        segments.append(GroundTruthSegment(graph=tuple(edges), precision=K,
                                           covariance=Sigma, length=spec.seg_len,
                                           start=s * spec.seg_len + 1))
        blocks.append(X)
    observations = np.vstack(blocks)
    change_points = tuple(s * spec.seg_len + 1 for s in range(1, spec.segments))
    return SyntheticDataset(spec=spec, segments=tuple(segments),
                            observations=observations,
                            change_points=change_points)


def write_dataset(dataset, obs_path, truth_path):
    """Observations as comma-separated text with a metadata header line;
    ground truth (edges, weights, spans) as a JSON sidecar."""
    spec = dataset.spec
    header = (f"p={spec.p},T={dataset.T},seed={spec.seed},"
              f"segments={spec.segments},seg_len={spec.seg_len},"
              f"graph={spec.graph_model},m={spec.m},k={spec.k},"
              f"beta={spec.beta!r},var_coeff={spec.var_coeff!r},"
              f"normalize={int(spec.normalize)}")
    with open(obs_path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in dataset.observations:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    truth = {
        "p": spec.p,
        "T": dataset.T,
        "seed": spec.seed,
        "var_model": {"order": 1, "coeff": spec.var_coeff,
                      "innovation": "(1 - coeff^2) * Sigma"},
        "change_points": list(dataset.change_points),
        "segments": [
            {
                "start": seg.start,
                "length": seg.length,
                "edges": [[int(i), int(j), float(seg.precision[i, j])]
                          for (i, j) in seg.graph],
                "precision": seg.precision.tolist(),
            }
            for seg in dataset.segments
        ],
    }
    with open(truth_path, "w", encoding="utf-8") as fh:
        json.dump(truth, fh, indent=1)
        fh.write("\n")


def read_observations(path):
    """Load an observations file; returns (X, header_dict)."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        rows = [[float(v) for v in line.replace(",", " ").split()]
                for line in fh if line.strip()]
    meta = {}
    for part in header.split(","):
        if "=" in part:
            key, val = part.split("=", 1)
            meta[key] = val
    return np.asarray(rows, dtype=float), meta


def read_truth(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
