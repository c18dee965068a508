"""Streaming engine: burn-in, covariance tracking, per-observation solves,
JSON-lines records, and checkpoint/resume.

Rows fed before the burn-in completes are buffered; once burn_in_n rows
have arrived the joint offline solve runs on the kernel covariances of the
buffer, its final sparse iterate seeds the temporal-penalty anchor, and
the buffered rows are replayed through the streaming covariance state so
the stream is self-consistent.  Every later row yields one record.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, asdict

import numpy as np

from . import covariance as cov
from .offline import KernelConfig, burn_in as offline_burn_in
from .solver import NetworkEstimate, SolverConfig, solve


@dataclass
class StreamConfig:
    mode: str = "adaptive"          # "sliding" | "ewma" | "adaptive"
    h: int = 20
    r: float = 0.95
    eta: float = 0.005
    r_init: float = 0.95
    r_min: float = 0.5
    r_max: float = 0.9999
    lambda1: float = 0.1
    lambda2: float = 0.1
    epsilon: float = 1e-4
    max_iters: int = 500
    zero_tol: float = 1e-8
    penalize_diagonal: bool = True
    burn_in_n: int = 15
    kernel_width: float = 3.0
    warm_start: bool = True
    ridge_scale: float = 1e-6
    emit: str = "edges"              # "edges" | "full_matrix" | "metrics"

    def __post_init__(self):
        if self.mode not in ("sliding", "ewma", "adaptive"):
            raise ValueError("mode must be sliding, ewma, or adaptive")
        if self.emit not in ("edges", "full_matrix", "metrics"):
            raise ValueError("emit must be edges, full_matrix, or metrics")

    def solver_config(self):
        return SolverConfig(lambda1=self.lambda1, lambda2=self.lambda2,
                            epsilon=self.epsilon, max_iters=self.max_iters,
                            zero_tol=self.zero_tol,
                            penalize_diagonal=self.penalize_diagonal)

    def make_mode(self):
        if self.mode == "sliding":
            return cov.SlidingWindow(self.h)
        if self.mode == "ewma":
            return cov.FixedForgetting(self.r)
        return cov.AdaptiveForgetting(self.eta, self.r_init, self.r_min,
                                      self.r_max)


class StreamingEstimator:
    """Single stream: feed rows in time order, collect one record per row
    after burn-in."""

    def __init__(self, p, config):
        self.p = int(p)
        self.config = config
        self.state = cov.ForgettingState(p, config.make_mode(),
                                         ridge_scale=config.ridge_scale)
        self.solver_cfg = config.solver_config()
        self.theta_anchor = np.eye(p)
        self.warm = None
        self.burn_buffer = []
        self.burned_in = config.burn_in_n <= 0
        self.burn_result = None
        self.t = 0

    def _run_burn_in(self):
        X = np.asarray(self.burn_buffer, dtype=float)
        result = offline_burn_in(X, self.solver_cfg,
                                 KernelConfig(width=self.config.kernel_width))
        self.burn_result = result
        self.theta_anchor = result.zs[-1].copy()
        if self.config.warm_start:
            self.warm = NetworkEstimate(Theta=result.thetas[-1].copy(),
                                        Z=result.zs[-1].copy(),
                                        U=np.zeros((self.p, self.p)),
                                        iterations_used=result.iterations_used,
                                        converged=result.converged,
                                        objective=result.objective)
        for row in self.burn_buffer:
            cov.update(self.state, row)
        self.burn_buffer = []
        self.burned_in = True

    def feed(self, x):
        """Consume one observation; return a record dict, or None during
        burn-in."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.p,):
            raise ValueError(f"row has shape {x.shape}, expected ({self.p},)")
        self.t += 1
        if not self.burned_in:
            self.burn_buffer.append(x)
            if len(self.burn_buffer) >= self.config.burn_in_n:
                self._run_burn_in()
            return None
        start = time.perf_counter()
        cov.update(self.state, x)
        est = solve(self.state.S_t, self.theta_anchor, self.solver_cfg,
                    warm=self.warm if self.config.warm_start else None)
        wall_ms = (time.perf_counter() - start) * 1000.0
        if est.converged:
            self.theta_anchor = est.Z.copy()
        if self.config.warm_start:
            self.warm = est
        return self._record(est, wall_ms)

    def _record(self, est, wall_ms):
        rec = {"t": self.t, "r_t": float(self.state.r_t),
               "omega_t": float(self.state.omega_t)}
        if self.config.emit != "metrics":
            rows, cols = np.triu_indices(self.p, k=1)
            vals = est.Z[rows, cols]
            mask = np.abs(vals) > self.solver_cfg.zero_tol
            rec["edges"] = [[int(i), int(j), float(v)] for i, j, v in
                            zip(rows[mask], cols[mask], vals[mask])]
        rec["converged"] = bool(est.converged)
        rec["iters"] = int(est.iterations_used)
        rec["wall_ms"] = wall_ms
        rec["trace_of_S"] = float(np.trace(self.state.S_t))
        if self.config.emit == "full_matrix":
            rec["Z"] = est.Z.tolist()
            rec["S"] = self.state.S_t.tolist()
        return rec

    # -- checkpointing ------------------------------------------------------

    def to_checkpoint(self):
        est = self.warm
        return {
            "version": 1,
            "p": self.p,
            "config": asdict(self.config),
            "t": self.t,
            "burned_in": self.burned_in,
            "burn_buffer": [row.tolist() for row in self.burn_buffer],
            "state": self.state.to_dict(),
            "theta_anchor": self.theta_anchor.tolist(),
            "warm": None if est is None else {
                "Theta": est.Theta.tolist(), "Z": est.Z.tolist(),
                "U": est.U.tolist(), "iterations_used": est.iterations_used,
                "converged": est.converged, "objective": est.objective,
            },
        }

    @classmethod
    def from_checkpoint(cls, d):
        if d.get("version") != 1:
            raise ValueError(f"unsupported checkpoint version {d.get('version')!r}")
        config = StreamConfig(**d["config"])
        engine = cls(d["p"], config)
        engine.t = d["t"]
        engine.burned_in = d["burned_in"]
        engine.burn_buffer = [np.array(r, dtype=float) for r in d["burn_buffer"]]
        engine.state = cov.ForgettingState.from_dict(d["state"])
        engine.theta_anchor = np.array(d["theta_anchor"], dtype=float)
        w = d["warm"]
        if w is not None:
            engine.warm = NetworkEstimate(
                Theta=np.array(w["Theta"]), Z=np.array(w["Z"]),
                U=np.array(w["U"]), iterations_used=w["iterations_used"],
                converged=w["converged"], objective=w["objective"])
        return engine


def record_to_json(rec):
    """Fixed field order, compact separators; floats round-trip exactly."""
    return json.dumps(rec, separators=(",", ":"))
