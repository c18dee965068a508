"""Scoring of estimated network sequences against ground truth."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


def trace_distance(Sigma_true, S_est):
    """trace(Sigma^{-1} S); approximately p when S estimates Sigma well."""
    Sigma_true = np.asarray(Sigma_true, dtype=float)
    S_est = np.asarray(S_est, dtype=float)
    try:
        solved = np.linalg.solve(Sigma_true, S_est)
    except np.linalg.LinAlgError as exc:
        raise ValueError("true covariance is singular") from exc
    return float(np.trace(solved))


def prf(edges_est, edges_true):
    """Precision, recall, F score of an edge set against the truth.

    Empty estimate against nonempty truth scores (0, 0, 0); two empty sets
    score (1, 1, 1); F is 0 whenever P + R is 0.
    """
    est = set(edges_est)
    true = set(edges_true)
    if not est and not true:
        return 1.0, 1.0, 1.0
    inter = len(est & true)
    P = inter / len(est) if est else 0.0
    R = inter / len(true) if true else 0.0
    F = 2.0 * P * R / (P + R) if (P + R) > 0 else 0.0
    return P, R, F


@dataclass(frozen=True)
class GroundTruth:
    """Shape shared by SyntheticDataset and a loaded truth sidecar."""

    T: int
    segments: tuple
    change_points: tuple

    def truth_at(self, t):
        for seg in reversed(self.segments):
            if t >= seg.start:
                return seg
        return self.segments[0]


@dataclass
class MetricRecord:
    t: int
    precision: float
    recall: float
    f_score: float
    trace_distance: float = None
    r_t: float = None
    solver_iters: int = None
    wall_time_ms: float = None


@dataclass
class MetricSeries:
    records: list
    segment_plateau_f: list      # mean F over each segment's plateau window
    recovery_times: list         # per change point; None when never recovered

    def f_values(self):
        return np.array([np.nan if rec.f_score is None else rec.f_score
                         for rec in self.records])

    def to_csv_lines(self):
        yield "t,precision,recall,f_score,trace_distance,r_t,solver_iters,wall_time_ms"
        for rec in self.records:
            fmt = lambda v: "" if v is None else repr(float(v))
            yield (f"{rec.t},{fmt(rec.precision)},{fmt(rec.recall)},"
                   f"{fmt(rec.f_score)},{fmt(rec.trace_distance)},{fmt(rec.r_t)},"
                   f"{'' if rec.solver_iters is None else rec.solver_iters},"
                   f"{fmt(rec.wall_time_ms)}")

    def to_jsonl_lines(self):
        for rec in self.records:
            yield json.dumps({
                "t": rec.t, "precision": rec.precision, "recall": rec.recall,
                "f_score": rec.f_score, "trace_distance": rec.trace_distance,
                "r_t": rec.r_t, "solver_iters": rec.solver_iters,
                "wall_time_ms": rec.wall_time_ms,
            })

    def summary(self):
        f_vals = self.f_values()
        have_f = self.records and not np.all(np.isnan(f_vals))
        return {
            "segment_plateau_f": self.segment_plateau_f,
            "recovery_times": self.recovery_times,
            "mean_f": float(np.nanmean(f_vals)) if have_f else None,
        }


def score_run(edge_seq, dataset, forgetting_trace=None, S_seq=None,
              iters_seq=None, wall_ms_seq=None, plateau_frac=0.5,
              recovery_level=0.9):
    """Per-timepoint precision/recall/F against the active segment's truth.

    edge_seq is one edge set per observation (length must match the
    dataset); trace_distance is filled when S_seq provides per-t covariance
    estimates.  The plateau mean is taken over the trailing plateau_frac of
    each segment; the recovery time after a change point is the first t
    whose F regains recovery_level of the previous segment's plateau mean.
    """
    T = dataset.T
    if len(edge_seq) != T:
        raise ValueError(f"edge_seq has length {len(edge_seq)}, dataset has T={T}")
    for name, seq in (("forgetting_trace", forgetting_trace), ("S_seq", S_seq),
                      ("iters_seq", iters_seq), ("wall_ms_seq", wall_ms_seq)):
        if seq is not None and len(seq) != T:
            raise ValueError(f"{name} has length {len(seq)}, dataset has T={T}")
    records = []
    for t in range(1, T + 1):
        seg = dataset.truth_at(t)
        if edge_seq[t - 1] is None:
            # not estimated (e.g. burn-in not reported); skipped in aggregates
            P = R = F = None
        else:
            P, R, F = prf(edge_seq[t - 1], seg.edge_set)
        d = None
        if S_seq is not None and S_seq[t - 1] is not None:
            d = trace_distance(seg.covariance, S_seq[t - 1])
        rt = None
        if forgetting_trace is not None and forgetting_trace[t - 1] is not None:
            rt = float(forgetting_trace[t - 1])
        records.append(MetricRecord(
            t=t, precision=P, recall=R, f_score=F, trace_distance=d, r_t=rt,
            solver_iters=None if iters_seq is None else iters_seq[t - 1],
            wall_time_ms=None if wall_ms_seq is None else wall_ms_seq[t - 1]))
    f_vals = np.array([np.nan if rec.f_score is None else rec.f_score
                       for rec in records])
    plateau_f = []
    for seg in dataset.segments:
        lo = seg.start - 1 + seg.length - max(1, int(seg.length * plateau_frac))
        hi = seg.start - 1 + seg.length
        window = f_vals[lo:hi]
        plateau_f.append(None if np.all(np.isnan(window))
                         else float(np.nanmean(window)))
    recovery = []
    for i, cp in enumerate(dataset.change_points):
        if plateau_f[i] is None:
            recovery.append(None)
            continue
        target = recovery_level * plateau_f[i]
        seg = dataset.segments[i + 1]
        seg_end = seg.start + seg.length - 1
        found = None
        for t in range(cp, min(seg_end, T) + 1):
            if not np.isnan(f_vals[t - 1]) and f_vals[t - 1] >= target:
                found = t - cp + 1
                break
        recovery.append(found)
    return MetricSeries(records=records, segment_plateau_f=plateau_f,
                        recovery_times=recovery)
