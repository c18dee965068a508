"""Streaming mean/covariance tracking under sliding-window, EWMA, and
adaptive-forgetting regimes.

The fixed-forgetting recursions, with effective sample size w_t:

    w_t  = r * w_{t-1} + 1
    xbar_t = (1 - 1/w_t) * xbar_{t-1} + (1/w_t) * x_t
    Pi_t   = (1 - 1/w_t) * Pi_{t-1}   + (1/w_t) * x_t x_t^T
    S_t  = Pi_t - xbar_t xbar_t^T

Adaptive forgetting tunes r_t by gradient ascent on the predictive
Gaussian log-likelihood of each incoming observation.  The derivative
trackers (d_omega, d_xbar, d_Pi, d_S) follow the exact differentiation of
the fixed-r recursions:

    w_t'  = r * w_{t-1}' + w_{t-1}
    xbar_t' = (1 - 1/w_t) * xbar_{t-1}' - (w_t'/w_t^2) * (x_t - xbar_{t-1})
    Pi_t'   = (1 - 1/w_t) * Pi_{t-1}'   - (w_t'/w_t^2) * (x_t x_t^T - Pi_{t-1})
    S_t' = Pi_t' - xbar_t' xbar_t^T - xbar_t xbar_t'^T

These are validated against central finite differences of the full
recursion replay; ``omega_prime_variant="paper"`` switches the w' trailing
term from w_{t-1} to w_t for comparison runs.

The inverse covariance is maintained by two sequential Sherman-Morrison
rank-one updates (scatter update, then mean-outer-product downdate) with a
full re-factorization every K_REFACTOR steps, whenever an update
denominator underflows, or whenever the ridge engages.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

K_REFACTOR = 64
DENOM_TOL = 1e-10
DEFAULT_RIDGE_SCALE = 1e-6


class SingularCovarianceError(RuntimeError):
    """Covariance not invertible and the ridge is disabled or degenerate."""


class StateUpdateError(RuntimeError):
    """An update left the state unusable; carries the failing time index."""

    def __init__(self, t, message):
        super().__init__(f"t={t}: {message}")
        self.t = t


@dataclass(frozen=True)
class SlidingWindow:
    h: int

    def __post_init__(self):
        if self.h < 2:
            raise ValueError("sliding window length must be >= 2")


@dataclass(frozen=True)
class FixedForgetting:
    r: float

    def __post_init__(self):
        if not 0.0 < self.r <= 1.0:
            raise ValueError("forgetting factor must lie in (0, 1]")


@dataclass(frozen=True)
class AdaptiveForgetting:
    """Gradient-ascent forgetting.  With normalize_step the raw gradient is
    divided by a running RMS of itself (decay rms_decay, current sample
    included, which caps single steps at eta/sqrt(1-rms_decay)); gradients
    computed under an engaged ridge are wild by construction and are
    neither applied nor accumulated.  normalize_step=False applies the raw
    gradient times eta verbatim."""

    eta: float
    r_init: float = 0.95
    r_min: float = 0.5
    r_max: float = 0.9999
    normalize_step: bool = True
    rms_decay: float = 0.95

    def __post_init__(self):
        if not 0.0 < self.r_min <= self.r_init <= self.r_max <= 1.0:
            raise ValueError("require 0 < r_min <= r_init <= r_max <= 1")
        if not 0.0 <= self.rms_decay < 1.0:
            raise ValueError("rms_decay must lie in [0, 1)")


@dataclass(frozen=True)
class Observation:
    """One p-dimensional measurement at a 1-based time index."""

    t: int
    x: np.ndarray


class ForgettingState:
    """Single-writer streaming state; snapshot with ``copy()`` for readers."""

    def __init__(self, p, mode, ridge_scale=DEFAULT_RIDGE_SCALE,
                 omega_prime_variant="derived"):
        if p < 1:
            raise ValueError("dimension must be >= 1")
        if omega_prime_variant not in ("derived", "paper"):
            raise ValueError("omega_prime_variant must be 'derived' or 'paper'")
        self.p = int(p)
        self.mode = mode
        self.ridge_scale = float(ridge_scale)
        self.omega_prime_variant = omega_prime_variant
        self.t = 0
        self.r_t = mode.r_init if isinstance(mode, AdaptiveForgetting) else (
            mode.r if isinstance(mode, FixedForgetting) else 1.0)
        self.omega_t = 0.0
        self.xbar_t = np.zeros(p)
        self.Pi_t = np.zeros((p, p))
        self.S_t = np.zeros((p, p))
        self.Sinv_t = None
        self.ridge = 0.0
        self.window_buffer = deque(maxlen=mode.h) if isinstance(mode, SlidingWindow) else None
        if isinstance(mode, AdaptiveForgetting):
            self.d_xbar = np.zeros(p)
            self.d_omega = 0.0
            self.d_Pi = np.zeros((p, p))
            self.d_S = np.zeros((p, p))
            self.grad_ms = 0.0
        else:
            self.d_xbar = None
            self.d_omega = None
            self.d_Pi = None
            self.d_S = None
            self.grad_ms = None
        self.last_refresh_path = None
        self._pi_inv = None
        self._steps_since_refactor = 0
        self._pending_obs = None

    # -- helpers -----------------------------------------------------------

    def effective_count(self):
        """Observations currently informing S_t (window-limited if sliding)."""
        if isinstance(self.mode, SlidingWindow):
            return min(self.t, self.mode.h)
        return self.t

    def copy(self):
        new = ForgettingState.__new__(ForgettingState)
        new.__dict__.update(self.__dict__)
        for name in ("xbar_t", "Pi_t", "S_t", "Sinv_t", "d_xbar", "d_Pi",
                     "d_S", "_pi_inv"):
            val = getattr(self, name)
            if isinstance(val, np.ndarray):
                setattr(new, name, val.copy())
        if self.window_buffer is not None:
            new.window_buffer = deque((x.copy() for x in self.window_buffer),
                                      maxlen=self.mode.h)
        return new

    def to_dict(self):
        """Checkpoint snapshot; floats survive a JSON round trip exactly."""
        mode = self.mode
        if isinstance(mode, SlidingWindow):
            mode_d = {"kind": "sliding", "h": mode.h}
        elif isinstance(mode, FixedForgetting):
            mode_d = {"kind": "fixed", "r": mode.r}
        else:
            mode_d = {"kind": "adaptive", "eta": mode.eta, "r_init": mode.r_init,
                      "r_min": mode.r_min, "r_max": mode.r_max,
                      "normalize_step": mode.normalize_step,
                      "rms_decay": mode.rms_decay}
        arr = lambda a: None if a is None else np.asarray(a).tolist()
        return {
            "version": 1,
            "p": self.p,
            "mode": mode_d,
            "ridge_scale": self.ridge_scale,
            "omega_prime_variant": self.omega_prime_variant,
            "t": self.t,
            "r_t": self.r_t,
            "omega_t": self.omega_t,
            "xbar_t": arr(self.xbar_t),
            "Pi_t": arr(self.Pi_t),
            "S_t": arr(self.S_t),
            "Sinv_t": arr(self.Sinv_t),
            "ridge": self.ridge,
            "d_xbar": arr(self.d_xbar),
            "d_omega": self.d_omega,
            "d_Pi": arr(self.d_Pi),
            "d_S": arr(self.d_S),
            "grad_ms": self.grad_ms,
            "window_buffer": None if self.window_buffer is None
                             else [x.tolist() for x in self.window_buffer],
            "pi_inv": arr(self._pi_inv),
            "steps_since_refactor": self._steps_since_refactor,
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("version") != 1:
            raise ValueError(f"unsupported checkpoint version {d.get('version')!r}")
        m = d["mode"]
        if m["kind"] == "sliding":
            mode = SlidingWindow(m["h"])
        elif m["kind"] == "fixed":
            mode = FixedForgetting(m["r"])
        else:
            mode = AdaptiveForgetting(m["eta"], m["r_init"], m["r_min"],
                                      m["r_max"], m["normalize_step"],
                                      m["rms_decay"])
        state = cls(d["p"], mode, d["ridge_scale"], d["omega_prime_variant"])
        arr = lambda a: None if a is None else np.array(a, dtype=float)
        state.t = d["t"]
        state.r_t = d["r_t"]
        state.omega_t = d["omega_t"]
        state.xbar_t = arr(d["xbar_t"])
        state.Pi_t = arr(d["Pi_t"])
        state.S_t = arr(d["S_t"])
        state.Sinv_t = arr(d["Sinv_t"])
        state.ridge = d["ridge"]
        if isinstance(mode, AdaptiveForgetting):
            state.d_xbar = arr(d["d_xbar"])
            state.d_omega = d["d_omega"]
            state.d_Pi = arr(d["d_Pi"])
            state.d_S = arr(d["d_S"])
            state.grad_ms = d["grad_ms"]
        if state.window_buffer is not None and d["window_buffer"] is not None:
            for row in d["window_buffer"]:
                state.window_buffer.append(np.array(row, dtype=float))
        state._pi_inv = arr(d["pi_inv"])
        state._steps_since_refactor = d["steps_since_refactor"]
        return state


def _as_vector(state, obs):
    x = obs.x if isinstance(obs, Observation) else obs
    x = np.asarray(x, dtype=float)
    if x.shape != (state.p,):
        raise ValueError(f"observation has shape {x.shape}, expected ({state.p},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("observation contains non-finite entries")
    if isinstance(obs, Observation) and obs.t != state.t + 1:
        raise ValueError(f"out-of-order observation: got t={obs.t}, expected {state.t + 1}")
    return x


def _effective_ridge(state, S=None, count=None):
    """Ridge engages while S is structurally rank-deficient or fails Cholesky."""
    if state.ridge_scale == 0.0:
        return 0.0
    S = state.S_t if S is None else S
    count = state.effective_count() if count is None else count
    needs = count <= state.p
    if not needs:
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            needs = True
    if not needs:
        return 0.0
    tr = float(np.trace(S))
    return state.ridge_scale * (tr / state.p if tr > 0.0 else 1.0)


def _full_refactor(state, rho):
    A = state.S_t if rho == 0.0 else state.S_t + rho * np.eye(state.p)
    try:
        state.Sinv_t = np.linalg.inv(A)
    except np.linalg.LinAlgError:
        if rho == 0.0 and state.ridge_scale == 0.0:
            raise SingularCovarianceError(
                "covariance is singular and the ridge is disabled")
        raise StateUpdateError(state.t, "covariance not invertible even with ridge")
    state.Sinv_t = 0.5 * (state.Sinv_t + state.Sinv_t.T)
    state.ridge = rho
    state._steps_since_refactor = 0
    state.last_refresh_path = "full"
    state._pi_inv = None
    if rho == 0.0 and not isinstance(state.mode, SlidingWindow):
        # start the Sherman-Morrison chain only from a trustworthy scatter
        # inverse; a mean-dominated Pi is near-singular and inv() returns
        # garbage without raising, so check the residual directly, then the
        # mean-downdate denominator 1 - xbar' Pi^{-1} xbar = det(S)/det(Pi)
        try:
            pi_inv = np.linalg.inv(state.Pi_t)
        except np.linalg.LinAlgError:
            return
        if np.abs(pi_inv @ state.Pi_t - np.eye(state.p)).max() > 1e-9:
            return
        denom = 1.0 - float(state.xbar_t @ pi_inv @ state.xbar_t)
        if np.isfinite(denom) and abs(denom) >= DENOM_TOL:
            state._pi_inv = 0.5 * (pi_inv + pi_inv.T)


def inverse_refresh(state):
    """Bring Sinv_t up to date with S_t (+ ridge when engaged).

    Consumes the rank-one information stashed by the last mean/scatter
    update when the Sherman-Morrison chain is alive; otherwise, or on
    denominator underflow / refactor schedule / ridge engagement, performs
    a direct factorization.
    """
    pending = state._pending_obs
    state._pending_obs = None
    rho = _effective_ridge(state)
    use_sm = (pending is not None and rho == 0.0 and state._pi_inv is not None
              and state._steps_since_refactor < K_REFACTOR
              and not isinstance(state.mode, SlidingWindow))
    if use_sm:
        x, omega = pending
        beta = 1.0 - 1.0 / omega
        if beta <= 0.0:
            use_sm = False
    if use_sm:
        alpha = 1.0 / omega
        B = state._pi_inv / beta
        Bx = B @ x
        denom1 = 1.0 + alpha * float(x @ Bx)
        if abs(denom1) < DENOM_TOL:
            use_sm = False
        else:
            pi_inv = B - np.outer(Bx, Bx) * (alpha / denom1)
            y = pi_inv @ state.xbar_t
            denom2 = 1.0 - float(state.xbar_t @ y)
            if abs(denom2) < DENOM_TOL:
                use_sm = False
            else:
                sinv = pi_inv + np.outer(y, y) / denom2
                state._pi_inv = 0.5 * (pi_inv + pi_inv.T)
                state.Sinv_t = 0.5 * (sinv + sinv.T)
                state.ridge = 0.0
                state._steps_since_refactor += 1
                state.last_refresh_path = "sm"
    if not use_sm:
        _full_refactor(state, rho)
    return state


def update_sliding(state, obs):
    """Advance a sliding-window state: window mean and biased covariance."""
    if not isinstance(state.mode, SlidingWindow):
        raise ValueError("state is not in sliding-window mode")
    x = _as_vector(state, obs)
    state.t += 1
    state.window_buffer.append(x)
    W = np.stack(tuple(state.window_buffer))
    m = W.shape[0]
    state.xbar_t = W.mean(axis=0)
    D = W - state.xbar_t
    state.S_t = D.T @ D / m
    state.S_t = 0.5 * (state.S_t + state.S_t.T)
    state.Pi_t = state.S_t + np.outer(state.xbar_t, state.xbar_t)
    state.omega_t = float(m)
    return inverse_refresh(state)


def _advance_moments(state, x, r_used):
    """Shared fixed/adaptive recursion step; returns pre-update snapshot."""
    omega_prev = state.omega_t
    xbar_prev = state.xbar_t
    Pi_prev = state.Pi_t
    omega = r_used * omega_prev + 1.0
    w = 1.0 / omega
    state.omega_t = omega
    state.xbar_t = (1.0 - w) * xbar_prev + w * x
    Pi = (1.0 - w) * Pi_prev + w * np.outer(x, x)
    state.Pi_t = 0.5 * (Pi + Pi.T)
    S = state.Pi_t - np.outer(state.xbar_t, state.xbar_t)
    state.S_t = 0.5 * (S + S.T)
    state.t += 1
    state._pending_obs = (x, omega)
    return omega_prev, xbar_prev, Pi_prev


def _advance_trackers(state, x, r_used, omega_prev, xbar_prev, Pi_prev):
    omega = state.omega_t
    d_omega_prev = state.d_omega
    trailing = omega if state.omega_prime_variant == "paper" else omega_prev
    state.d_omega = r_used * d_omega_prev + trailing
    w = 1.0 / omega
    scale = state.d_omega / (omega * omega)
    state.d_xbar = (1.0 - w) * state.d_xbar - scale * (x - xbar_prev)
    d_Pi = (1.0 - w) * state.d_Pi - scale * (np.outer(x, x) - Pi_prev)
    state.d_Pi = 0.5 * (d_Pi + d_Pi.T)
    d_S = state.d_Pi - np.outer(state.d_xbar, state.xbar_t) \
        - np.outer(state.xbar_t, state.d_xbar)
    state.d_S = 0.5 * (d_S + d_S.T)


def update_fixed(state, obs):
    """Advance a fixed-forgetting (EWMA) state by one observation."""
    if not isinstance(state.mode, FixedForgetting):
        raise ValueError("state is not in fixed-forgetting mode")
    x = _as_vector(state, obs)
    _advance_moments(state, x, state.mode.r)
    return inverse_refresh(state)


def update_adaptive(state, obs):
    """Adaptive-forgetting step: gradient, clamped r update, then recursions."""
    if not isinstance(state.mode, AdaptiveForgetting):
        raise ValueError("state is not in adaptive-forgetting mode")
    x = _as_vector(state, obs)
    grad = likelihood_gradient(state, x)
    mode = state.mode
    if mode.normalize_step:
        step = 0.0
        if _effective_ridge(state) == 0.0:
            state.grad_ms = mode.rms_decay * state.grad_ms \
                + (1.0 - mode.rms_decay) * grad * grad
            if state.grad_ms > 0.0:
                step = mode.eta * grad / math.sqrt(state.grad_ms + 1e-12)
    else:
        step = mode.eta * grad
    state.r_t = min(max(state.r_t + step, mode.r_min), mode.r_max)
    snapshot = _advance_moments(state, x, state.r_t)
    _advance_trackers(state, x, state.r_t, *snapshot)
    return inverse_refresh(state)


def _ridged(state):
    """(S + rho*I, rho) with the current effective ridge."""
    rho = _effective_ridge(state)
    if rho == 0.0:
        return state.S_t, 0.0
    return state.S_t + rho * np.eye(state.p), rho


def log_likelihood(state, obs):
    """Predictive Gaussian log-likelihood of obs under (xbar_t, S_t).

    Returns -1/2 log det(S) - 1/2 (x - xbar)^T S^{-1} (x - xbar), dropping
    the -(p/2) log(2 pi) constant; S is ridged when the ridge is engaged.
    """
    x = obs.x if isinstance(obs, Observation) else np.asarray(obs, dtype=float)
    if x.shape != (state.p,):
        raise ValueError(f"observation has shape {x.shape}, expected ({state.p},)")
    A, _ = _ridged(state)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError("covariance is singular; ridge disabled or zero")
    logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
    y = x - state.xbar_t
    v = np.linalg.solve(L, y)
    return -0.5 * logdet - 0.5 * float(v @ v)


def likelihood_gradient(state, obs):
    """Derivative of the predictive log-likelihood w.r.t. the forgetting factor.

    Uses the stored derivative trackers; when the ridge is engaged its
    trace-scaled r-dependence is differentiated alongside S so the result
    stays consistent with a finite-difference replay.
    """
    if state.d_S is None:
        raise ValueError("derivative trackers are only kept in adaptive mode")
    x = obs.x if isinstance(obs, Observation) else np.asarray(obs, dtype=float)
    if x.shape != (state.p,):
        raise ValueError(f"observation has shape {x.shape}, expected ({state.p},)")
    if state.d_omega == 0.0 and not state.d_S.any() and not state.d_xbar.any():
        return 0.0
    A, rho = _ridged(state)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError("covariance is singular; ridge disabled or zero")
    dS = state.d_S
    if rho > 0.0 and np.trace(state.S_t) > 0.0:
        dS = dS + (state.ridge_scale * np.trace(dS) / state.p) * np.eye(state.p)
    y = x - state.xbar_t
    Sy = np.linalg.solve(L.T, np.linalg.solve(L, y))
    SinvdS = np.linalg.solve(L.T, np.linalg.solve(L, dS))
    return float(state.d_xbar @ Sy) + 0.5 * float(Sy @ dS @ Sy) \
        - 0.5 * float(np.trace(SinvdS))


def update(state, obs):
    """Dispatch to the state's mode-specific update."""
    if isinstance(state.mode, SlidingWindow):
        return update_sliding(state, obs)
    if isinstance(state.mode, FixedForgetting):
        return update_fixed(state, obs)
    return update_adaptive(state, obs)
