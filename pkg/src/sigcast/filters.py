"""Reference filters: discrete Kalman, discretized Kalman-Bucy, and the
truncated signature expansion of a steady-state scalar filter."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .sigcore import TruncatedSignature


def _mat(a, shape=None) -> np.ndarray:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if shape is not None and a.shape != shape:
        raise ValueError(f"expected shape {shape}, got {a.shape}")
    return a


@dataclass(frozen=True)
class DiscreteKalmanParams:
    """``Y_t = A Y_{t-1} + W_t``, ``X_t = C Y_t + V_t`` with W ~ N(0, Gamma), V ~ N(0, Sigma)."""

    A: np.ndarray
    C: np.ndarray
    Gamma: np.ndarray
    Sigma: np.ndarray
    mu0: np.ndarray
    P0: np.ndarray

    def __post_init__(self):
        A = _mat(self.A)
        d = A.shape[0]
        C = _mat(self.C)
        m = C.shape[0]
        object.__setattr__(self, "A", _mat(A, (d, d)))
        object.__setattr__(self, "C", _mat(C, (m, d)))
        object.__setattr__(self, "Gamma", _mat(self.Gamma, (d, d)))
        object.__setattr__(self, "Sigma", _mat(self.Sigma, (m, m)))
        object.__setattr__(self, "mu0", np.atleast_1d(np.asarray(self.mu0, dtype=float)))
        object.__setattr__(self, "P0", _mat(self.P0, (d, d)))

    def initial_state(self) -> "FilterState":
        return FilterState(0, self.mu0.copy(), self.P0.copy())


@dataclass(frozen=True)
class FilterState:
    t: int
    mean: np.ndarray
    cov: np.ndarray
    innovation: np.ndarray | None = None
    innovation_cov: np.ndarray | None = None
    gain: np.ndarray | None = None


def kalman_step(state: FilterState, params: DiscreteKalmanParams, x_t, joseph: bool = False
                ) -> FilterState:
    """One predict/correct cycle. ``x_t=None`` skips the correction."""
    A, C = params.A, params.C
    mu_pred = A @ state.mean
    P_pred = A @ state.cov @ A.T + params.Gamma
    if x_t is None:
        return FilterState(state.t + 1, mu_pred, P_pred)
    x_t = np.atleast_1d(np.asarray(x_t, dtype=float))
    eta = x_t - C @ mu_pred
    S = C @ P_pred @ C.T + params.Sigma
    try:
        # K = P C^T S^{-1}, solved rather than inverted
        K = np.linalg.solve(S.T, (P_pred @ C.T).T).T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("innovation covariance S is singular") from exc
    if np.linalg.cond(S) > 1e14:
        raise np.linalg.LinAlgError("innovation covariance S is singular")
    mu = mu_pred + K @ eta
    I_KC = np.eye(len(mu)) - K @ C
    if joseph:
        P = I_KC @ P_pred @ I_KC.T + K @ params.Sigma @ K.T
    else:
        P = I_KC @ P_pred
    P = 0.5 * (P + P.T)
    return FilterState(state.t + 1, mu, P, eta, S, K)


def kalman_filter(params: DiscreteKalmanParams, observations, joseph: bool = False
                  ) -> list[FilterState]:
    """Run :func:`kalman_step` over a sequence; NaN rows are treated as missing."""
    state = params.initial_state()
    out = []
    for x in observations:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        state = kalman_step(state, params, None if np.all(np.isnan(x)) else x, joseph)
        out.append(state)
    return out


@dataclass(frozen=True)
class KalmanBucyParams:
    """``dY = (F Y + f) dt + sigma dV``, ``dX = (H Y + h) dt + dW``."""

    F: np.ndarray
    sigma: np.ndarray
    H: np.ndarray
    f: np.ndarray | None = None
    h: np.ndarray | None = None
    R0: np.ndarray | None = None
    y0: np.ndarray | None = None

    def __post_init__(self):
        F = _mat(self.F)
        d = F.shape[0]
        H = _mat(self.H)
        m = H.shape[0]
        object.__setattr__(self, "F", _mat(F, (d, d)))
        sigma = _mat(self.sigma)
        if sigma.shape[0] != d:
            raise ValueError(f"sigma must have {d} rows")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "H", _mat(H, (m, d)))
        f = np.zeros(d) if self.f is None else np.atleast_1d(np.asarray(self.f, dtype=float))
        h = np.zeros(m) if self.h is None else np.atleast_1d(np.asarray(self.h, dtype=float))
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "h", h)
        R0 = np.zeros((d, d)) if self.R0 is None else _mat(self.R0, (d, d))
        object.__setattr__(self, "R0", R0)
        y0 = np.zeros(d) if self.y0 is None else np.atleast_1d(np.asarray(self.y0, dtype=float))
        object.__setattr__(self, "y0", y0)

    @classmethod
    def scalar(cls, F, H, sigma2, f=0.0, h=0.0, R0=None, y0=0.0) -> "KalmanBucyParams":
        return cls(F=[[F]], sigma=[[np.sqrt(sigma2)]], H=[[H]], f=[f], h=[h],
                   R0=None if R0 is None else [[R0]], y0=[y0])

    @property
    def is_scalar(self) -> bool:
        return self.F.shape == (1, 1) and self.H.shape == (1, 1)


def riccati_rhs(R: np.ndarray, params: KalmanBucyParams) -> np.ndarray:
    F, H, s = params.F, params.H, params.sigma
    return s @ s.T + F @ R + R @ F.T - R @ H.T @ H @ R


def riccati_steady_state(params: KalmanBucyParams, tol: float = 1e-12, dt: float = 1e-3,
                         max_time: float = 1e4) -> np.ndarray:
    """Stationary filter variance: zero of the Riccati right-hand side.

    Scalar systems use the positive root of the quadratic; others integrate
    the Riccati ODE (RK4) from ``R0`` until the derivative norm drops below
    ``tol``, then polish with Newton steps on the algebraic equation.
    """
    F, H, s = params.F, params.H, params.sigma
    if params.is_scalar:
        F_, H_, q = F[0, 0], H[0, 0], (s @ s.T)[0, 0]
        if H_ == 0.0:
            if F_ >= 0:
                raise RuntimeError("no steady state: unobserved, non-decaying state")
            return np.array([[q / (-2.0 * F_)]])
        return np.array([[(F_ + np.sqrt(F_**2 + q * H_**2)) / H_**2]])

    R = params.R0.copy()
    t = 0.0
    while t < max_time:
        k1 = riccati_rhs(R, params)
        if np.linalg.norm(k1) < 1e-9:
            break
        k2 = riccati_rhs(R + 0.5 * dt * k1, params)
        k3 = riccati_rhs(R + 0.5 * dt * k2, params)
        k4 = riccati_rhs(R + dt * k3, params)
        R = R + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        R = 0.5 * (R + R.T)
        t += dt
    else:
        raise RuntimeError("Riccati integration did not converge")
    d = R.shape[0]
    eye = np.eye(d)
    for _ in range(50):
        G = riccati_rhs(R, params)
        if np.linalg.norm(G) < tol:
            return R
        # Lyapunov-form Newton step: (F - R H^T H) dR + dR (F - R H^T H)^T = -G
        M = F - R @ H.T @ H
        L = np.kron(eye, M) + np.kron(M, eye)
        dR = np.linalg.solve(L, -G.reshape(-1)).reshape(d, d)
        R = 0.5 * (R + dR + (R + dR).T)
    if np.linalg.norm(riccati_rhs(R, params)) >= tol:
        raise RuntimeError("Riccati steady state did not converge")
    return R


def kalman_bucy_discrete(params: KalmanBucyParams, times, observations, steady_state=True,
                         increments=None, obs_mask=None) -> np.ndarray:
    """Euler scheme for the Kalman-Bucy mean.

    ``observations`` has one row per entry of ``times`` (gaps allowed; each
    step uses its own elapsed time and observation increment). ``increments``
    overrides the observation increments, e.g. for transformed observations.
    Steps where ``obs_mask`` is False carry no observation and only apply
    the prediction drift. Returns the filtered mean at every time.
    """
    times = np.asarray(times, dtype=float)
    dts = np.diff(times)
    if np.any(dts <= 0):
        raise ValueError("observation times must be strictly increasing")
    if increments is None:
        obs = np.asarray(observations, dtype=float)
        if obs.ndim == 1:
            obs = obs[:, None]
        dX = np.diff(obs, axis=0)
    else:
        dX = np.asarray(increments, dtype=float)
        if dX.ndim == 1:
            dX = dX[:, None]
    if len(dX) != len(dts):
        raise ValueError("need one observation increment per time step")
    F, H, f, h = params.F, params.H, params.f, params.h
    if steady_state:
        R = riccati_steady_state(params)
    else:
        R = params.R0.copy()
    out = np.empty((len(times), F.shape[0]))
    y = params.y0.astype(float).copy()
    out[0] = y
    for k, dt in enumerate(dts):
        observing = obs_mask is None or obs_mask[k]
        drift = F @ y + f
        if observing:
            y = y + drift * dt + R @ H.T @ (dX[k] - (H @ y + h) * dt)
        else:
            y = y + drift * dt
        if not steady_state:
            if observing:
                R = R + riccati_rhs(R, params) * dt
            else:
                s = params.sigma
                R = R + (s @ s.T + F @ R + R @ F.T) * dt
            R = 0.5 * (R + R.T)
        out[k + 1] = y
    return out


def signature_filter_expansion(y0: float, sig: TruncatedSignature, a: float, N: int,
                               gain: float = 1.0, time_channel: int = 0, data_channel: int = 1
                               ) -> float:
    """Filter mean from the truncated expansion in time-only and
    data-innermost signature terms.

    ``y0 * sum_{n<=N} a^n S(t..t)`` plus ``gain * sum_{n<=N+1} a^(n-1) S(x t..t)``,
    where ``a`` is the decay rate ``F - R H^2`` and ``gain`` is ``R H``.
    """
    if sig.level < N + 1:
        raise ValueError(f"expansion to N={N} needs signature level >= {N + 1}, got {sig.level}")
    t, x = time_channel, data_channel
    total = y0
    for n in range(1, N + 1):
        total += y0 * a**n * sig[(t,) * n]
    for n in range(1, N + 2):
        total += gain * a ** (n - 1) * sig[(x,) + (t,) * (n - 1)]
    return float(total)


def steady_state_rates(params: KalmanBucyParams) -> tuple[float, float]:
    """(decay rate F - R H^2, gain R H) of a scalar steady-state filter."""
    if not params.is_scalar:
        raise ValueError("only defined for scalar systems")
    R = riccati_steady_state(params)[0, 0]
    F, H = params.F[0, 0], params.H[0, 0]
    return F - R * H**2, R * H


def with_y0(params: KalmanBucyParams, y0) -> KalmanBucyParams:
    return replace(params, y0=np.atleast_1d(np.asarray(y0, dtype=float)))
