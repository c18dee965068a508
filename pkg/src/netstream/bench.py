"""Per-update timing harness on the short benchmark protocol
(three segments of length 50)."""

from __future__ import annotations

import numpy as np

from .stream import StreamConfig, StreamingEstimator
from .synth import DatasetSpec, gen_dataset


def bench_mode(p, mode, reps=1, seed=0, segments=3, seg_len=50, graph="ws",
               config_overrides=None):
    """Mean/median wall time (ms) per post-burn-in update for one mode.

    Returns a dict with p, mode, mean_ms, median_ms, n_updates.
    """
    times = []
    for rep in range(reps):
        kwargs_spec = {"p": p, "segments": segments, "seg_len": seg_len,
                       "graph_model": graph, "seed": seed + rep}
        if graph == "ws":
            # ring degree must stay even and below p
            k = min(4, 2 * ((p - 1) // 2))
            if k < 2:
                kwargs_spec.update(graph_model="ba", m=1)
            else:
                kwargs_spec["k"] = k
        data = gen_dataset(DatasetSpec(**kwargs_spec))
        cfg_kwargs = {"mode": mode}
        if config_overrides:
            cfg_kwargs.update(config_overrides)
        engine = StreamingEstimator(p, StreamConfig(**cfg_kwargs))
        for row in data.observations:
            rec = engine.feed(row)
            if rec is not None:
                times.append(rec["wall_ms"])
    times = np.asarray(times)
    return {"p": p, "mode": mode, "mean_ms": float(times.mean()),
            "median_ms": float(np.median(times)), "n_updates": int(times.size)}


def bench_table(p_values, reps=1, seed=0, modes=("ewma", "adaptive"),
                config_overrides=None, **kwargs):
    return [bench_mode(p, mode, reps=reps, seed=seed,
                       config_overrides=config_overrides, **kwargs)
            for p in p_values for mode in modes]
