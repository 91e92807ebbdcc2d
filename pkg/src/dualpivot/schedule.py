"""Variance-preserving noise schedule and the diffusion forward/reverse steps.

Convention: timesteps are 1-indexed, t=1 nearest-clean, t=T nearest-pure-noise.
The schedule stores per-step (alpha_t, sigma_t) with alpha_t^2 + sigma_t^2 = 1,
so the forward process is x_t = alpha_t * x + sigma_t * eps.

All functions here are pure and array-library agnostic: they only combine the
input array with python-float schedule coefficients, so numpy arrays and torch
tensors both work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidArgumentError,
    NoFurtherStepsError,
    SingularStepError,
)

SCHEDULE_KINDS = ("cosine", "linear")

# Endpoints of the cosine phase u in [0, 1]: u_min keeps alpha_1 >= 0.999,
# u_max keeps sigma_T >= 0.99 while leaving alpha_T > 0 (no singular step).
_COS_U_MIN = 0.02
_COS_U_MAX = 0.95
_LIN_SIGMA_MIN = 0.02
_LIN_SIGMA_MAX = 0.995


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-timestep forward-process coefficients.

    alpha/sigma are length-T arrays indexed by t-1 (use alpha_at/sigma_at
    for 1-indexed access). Checkpoints persist only (kind, T) and rebuild.
    """

    T: int
    alpha: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    kind: str = "cosine"

    def alpha_at(self, t: int) -> float:
        self._check_t(t)
        return float(self.alpha[t - 1])

    def sigma_at(self, t: int) -> float:
        self._check_t(t)
        return float(self.sigma[t - 1])

    def _check_t(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise InvalidArgumentError(f"t={t} outside [1, {self.T}]")


@dataclass
class NoisyState:
    """A noised image together with its timestep index."""

    x_t: object  # image-shaped numpy array or torch tensor
    t: int


def make_schedule(T: int, kind: str = "cosine") -> NoiseSchedule:
    """Build a variance-preserving schedule of the given kind.

    cosine: alpha_t = cos(pi/2 * u_t) with u_t spaced linearly in
    [0.02, 0.95]; linear: sigma_t spaced linearly in [0.02, 0.995].
    Both keep alpha strictly decreasing, sigma strictly increasing, and
    alpha_t^2 + sigma_t^2 = 1 exactly up to float rounding.
    """
    if not isinstance(T, int) or T <= 0:
        raise InvalidArgumentError(f"T must be a positive integer, got {T!r}")
    if kind not in SCHEDULE_KINDS:
        raise InvalidArgumentError(f"kind must be one of {SCHEDULE_KINDS}, got {kind!r}")
    if T == 1:
        # Degenerate single-step schedule: the near-clean and near-noise
        # endpoints cannot both hold, so it sits at the sampling (noise) end.
        if kind == "cosine":
            alpha = np.cos(0.5 * math.pi * np.array([_COS_U_MAX]))
            sigma = np.sin(0.5 * math.pi * np.array([_COS_U_MAX]))
        else:
            sigma = np.array([_LIN_SIGMA_MAX])
            alpha = np.sqrt(1.0 - sigma**2)
        return NoiseSchedule(T=1, alpha=alpha, sigma=sigma, kind=kind)
    if kind == "cosine":
        u = np.linspace(_COS_U_MIN, _COS_U_MAX, T)
        alpha = np.cos(0.5 * math.pi * u)
        sigma = np.sin(0.5 * math.pi * u)
    else:
        sigma = np.linspace(_LIN_SIGMA_MIN, _LIN_SIGMA_MAX, T)
        alpha = np.sqrt(1.0 - sigma**2)
    s = NoiseSchedule(T=T, alpha=alpha, sigma=sigma, kind=kind)
    validate_schedule(s)
    return s


def validate_schedule(s: NoiseSchedule, atol: float = 1e-6) -> None:
    """Raise InvalidArgumentError unless all schedule invariants hold.

    The near-clean/near-noise endpoint bounds only apply for T >= 2; a
    single step cannot be both.
    """
    if s.T < 1 or len(s.alpha) != s.T or len(s.sigma) != s.T:
        raise InvalidArgumentError("schedule arrays must have length T >= 1")
    vp = s.alpha**2 + s.sigma**2
    if np.max(np.abs(vp - 1.0)) > atol:
        raise InvalidArgumentError("variance-preserving identity violated")
    if np.any(s.alpha <= 0.0) or np.any(s.alpha > 1.0):
        raise InvalidArgumentError("alpha must lie in (0, 1]")
    if np.any(s.sigma < 0.0) or np.any(s.sigma >= 1.0 + atol):
        raise InvalidArgumentError("sigma must lie in [0, 1)")
    if s.T >= 2:
        if np.any(np.diff(s.alpha) >= 0.0):
            raise InvalidArgumentError("alpha must be strictly decreasing in t")
        if np.any(np.diff(s.sigma) <= 0.0):
            raise InvalidArgumentError("sigma must be strictly increasing in t")
        if s.alpha[0] < 0.999:
            raise InvalidArgumentError("alpha_1 must be >= 0.999 (near-clean)")
        if s.sigma[-1] < 0.99:
            raise InvalidArgumentError("sigma_T must be >= 0.99 (near-pure-noise)")


def add_noise(x, eps, t: int, s: NoiseSchedule) -> NoisyState:
    """Forward process: x_t = alpha_t * x + sigma_t * eps, elementwise."""
    if getattr(eps, "shape", None) != getattr(x, "shape", None):
        raise InvalidArgumentError(
            f"eps shape {getattr(eps, 'shape', None)} != x shape {getattr(x, 'shape', None)}"
        )
    a, g = s.alpha_at(t), s.sigma_at(t)
    return NoisyState(x_t=a * x + g * eps, t=t)


def predict_x0(state: NoisyState, eps_hat, s: NoiseSchedule):
    """Invert the forward process: x0_hat = (x_t - sigma_t * eps_hat) / alpha_t."""
    a = s.alpha_at(state.t)
    if a == 0.0:
        raise SingularStepError(f"alpha_t = 0 at t={state.t}; cannot invert")
    g = s.sigma_at(state.t)
    return (state.x_t - g * eps_hat) / a


def sampler_step(
    state: NoisyState, eps_hat, s: NoiseSchedule, eta: float = 0.0, rng=None
) -> NoisyState:
    """One reverse step t -> t-1.

    x_{t-1} = alpha_{t-1} * x0_hat + sqrt(sigma_{t-1}^2 - v^2) * eps_hat + v * z
    with v = 0 when eta = 0 (deterministic, bit-reproducible).
    """
    if state.t <= 1:
        raise NoFurtherStepsError("already at t=1; no further reverse steps")
    return ddim_transition(state, eps_hat, state.t - 1, s, eta=eta, rng=rng)


def ddim_transition(
    state: NoisyState, eps_hat, t_next: int, s: NoiseSchedule, eta: float = 0.0, rng=None
) -> NoisyState:
    """Generalized deterministic/stochastic reverse transition t -> t_next < t."""
    if not 1 <= t_next < state.t:
        raise InvalidArgumentError(f"t_next={t_next} must satisfy 1 <= t_next < t={state.t}")
    x0_hat = predict_x0(state, eps_hat, s)
    a_n, g_n = s.alpha_at(t_next), s.sigma_at(t_next)
    if eta == 0.0:
        x_next = a_n * x0_hat + g_n * eps_hat
        return NoisyState(x_t=x_next, t=t_next)
    if rng is None:
        raise InvalidArgumentError("eta > 0 requires an rng")
    a_t, g_t = s.alpha_at(state.t), s.sigma_at(state.t)
    # DDIM posterior noise scale interpolating toward the ancestral sampler.
    v = eta * math.sqrt(max(0.0, (g_n**2 / g_t**2) * (1.0 - (a_t**2 / a_n**2))))
    direction = math.sqrt(max(0.0, g_n**2 - v**2))
    z = rng.standard_normal(np.shape(state.x_t))
    if not isinstance(state.x_t, np.ndarray):  # torch path
        import torch

        z = torch.from_numpy(z).to(state.x_t.dtype)
    x_next = a_n * x0_hat + direction * eps_hat + v * z
    return NoisyState(x_t=x_next, t=t_next)


def timestep_indices(T: int, steps: int) -> list[int]:
    """Strided descending timestep subsequence from T down toward 1.

    steps >= T yields every index T..1; steps == 1 yields [T].
    """
    if steps < 1:
        raise InvalidArgumentError(f"steps must be >= 1, got {steps}")
    if steps >= T:
        return list(range(T, 0, -1))
    pts = np.rint(np.linspace(T, 1, steps)).astype(int)
    out: list[int] = []
    for p in pts:
        if not out or p < out[-1]:
            out.append(int(p))
    return out
