"""Diffusion numerical kernels over abstract latent tensors.

Latents are float64 arrays shaped (C, H, W). Steps are 1-indexed (1..T); step 0
is the clean endpoint with alpha_bar = 1, used as the last DDIM target. The
denoiser is any callable ``denoiser(zt, t, conditions) -> v_hat`` returning a
velocity prediction shaped like ``zt``; conditions (e.g. the left-view latent
and the warped-view latent) are passed through untouched.
"""
from __future__ import annotations

from dataclasses import dataclass
import json
import logging
import math
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray

from src.edges import sobel, sobel_adjoint
from src.errors import (
    DimensionMismatchError,
    InvalidParamsError,
    InvalidRangeError,
    NonMonotoneStepsError,
    ShapeMismatchError,
    StepOutOfRangeError,
)

LOGGER = logging.getLogger(__name__)

LatentTensor = NDArray[np.float64]
Denoiser = Callable[[LatentTensor, int, Sequence[LatentTensor]], LatentTensor]


def as_latent(data: NDArray) -> LatentTensor:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeMismatchError(f"latents are (C, H, W) tensors, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParamsError("latent tensor contains non-finite values")
    return arr


def _same_shape(a: NDArray, b: NDArray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")


# ---------- NOISE SCHEDULE ----------

@dataclass(frozen=True)
class NoiseSchedule:
    betas: NDArray[np.float64]
    alpha_bars: NDArray[np.float64]

    @classmethod
    def from_betas(cls, betas: Sequence[float]) -> "NoiseSchedule":
        b = np.asarray(betas, dtype=np.float64)
        if b.ndim != 1 or b.size < 1:
            raise InvalidRangeError("a schedule needs at least one beta")
        if np.any(b <= 0) or np.any(b >= 1):
            raise InvalidRangeError("every beta must lie in (0, 1)")
        return cls(betas=b, alpha_bars=np.cumprod(1.0 - b))

    @property
    def total_steps(self) -> int:
        return int(self.betas.size)

    def alpha_bar(self, t: int) -> float:
        if t == 0:
            return 1.0
        if not 1 <= t <= self.total_steps:
            raise StepOutOfRangeError(f"step {t} outside [1, {self.total_steps}]")
        return float(self.alpha_bars[t - 1])

    def coefficients(self, t: int) -> tuple[float, float]:
        """(sqrt(alpha_bar_t), sqrt(1 - alpha_bar_t))."""
        a = self.alpha_bar(t)
        return math.sqrt(a), math.sqrt(1.0 - a)


def _check_beta_range(total_steps: int, beta_start: float, beta_end: float) -> None:
    if total_steps < 1:
        raise InvalidRangeError(f"total_steps must be >= 1, got {total_steps}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise InvalidRangeError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")


def make_linear_schedule(total_steps: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    _check_beta_range(total_steps, beta_start, beta_end)
    return NoiseSchedule.from_betas(np.linspace(beta_start, beta_end, total_steps))


def make_scaled_linear_schedule(
    total_steps: int, beta_start: float = 0.00085, beta_end: float = 0.012
) -> NoiseSchedule:
    """Linear in sqrt(beta); the schedule latent diffusion backbones are trained with."""
    _check_beta_range(total_steps, beta_start, beta_end)
    return NoiseSchedule.from_betas(np.linspace(math.sqrt(beta_start), math.sqrt(beta_end), total_steps) ** 2)


SCHEDULES: dict[str, Callable[[int, float, float], NoiseSchedule]] = {
    "linear": make_linear_schedule,
    "scaled_linear": make_scaled_linear_schedule,
}


def make_schedule(kind: str, total_steps: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    try:
        factory = SCHEDULES[kind]
    except KeyError as exc:
        raise InvalidRangeError(f"unknown schedule kind {kind!r}; expected one of {sorted(SCHEDULES)}") from exc
    return factory(total_steps, beta_start, beta_end)


# ---------- NOISING & VELOCITY ----------

def _noisy_step(t: int, sched: NoiseSchedule) -> tuple[float, float]:
    if t == 0:
        raise StepOutOfRangeError(f"step {t} outside [1, {sched.total_steps}]")
    return sched.coefficients(t)


def forward_noise(z0: LatentTensor, eps: LatentTensor, t: int, sched: NoiseSchedule) -> LatentTensor:
    """z_t = sqrt(a_t) * z0 + sqrt(1 - a_t) * eps."""
    x0, noise = as_latent(z0), as_latent(eps)
    _same_shape(x0, noise)
    a, s = _noisy_step(t, sched)
    return a * x0 + s * noise


def velocity_target(z0: LatentTensor, eps: LatentTensor, t: int, sched: NoiseSchedule) -> LatentTensor:
    """v = sqrt(a_t) * eps - sqrt(1 - a_t) * z0."""
    x0, noise = as_latent(z0), as_latent(eps)
    _same_shape(x0, noise)
    a, s = _noisy_step(t, sched)
    return a * noise - s * x0


def recover_z0(zt: LatentTensor, v: LatentTensor, t: int, sched: NoiseSchedule) -> LatentTensor:
    """z0 = sqrt(a_t) * z_t - sqrt(1 - a_t) * v."""
    xt, vel = as_latent(zt), as_latent(v)
    _same_shape(xt, vel)
    a, s = _noisy_step(t, sched)
    return a * xt - s * vel


def epsilon_from_velocity(zt: LatentTensor, v: LatentTensor, t: int, sched: NoiseSchedule) -> LatentTensor:
    """eps = sqrt(a_t) * v + sqrt(1 - a_t) * z_t."""
    xt, vel = as_latent(zt), as_latent(v)
    _same_shape(xt, vel)
    a, s = _noisy_step(t, sched)
    return a * vel + s * xt


# ---------- EDGE CONSISTENCY LOSS ----------

@dataclass(frozen=True)
class EcLossConfig:
    alpha: float = 1.0

    def validate(self) -> "EcLossConfig":
        if self.alpha < 0:
            raise InvalidParamsError(f"edge-term weight alpha must be >= 0, got {self.alpha}")
        return self


@dataclass(frozen=True)
class EcLossResult:
    loss: float
    grad_wrt_pred: LatentTensor
    mse_term: float
    edge_term: float


def ec_loss(target: LatentTensor, pred: LatentTensor, cfg: EcLossConfig = EcLossConfig()) -> EcLossResult:
    """MSE plus alpha times the mean squared Sobel-gradient difference, with its exact gradient.

    Both terms are normalized by the element count N of the tensor; Sobel runs
    per channel plane and contributes both gx and gy.
    """
    cfg.validate()
    ref, out = as_latent(target), as_latent(pred)
    _same_shape(ref, out)
    n = ref.size

    diff = out - ref
    grad_field = sobel(diff)
    mse_term = float(np.sum(diff * diff) / n)
    edge_term = float((np.sum(grad_field.gx**2) + np.sum(grad_field.gy**2)) / n)

    grad = (2.0 / n) * diff
    if cfg.alpha:
        grad = grad + (2.0 * cfg.alpha / n) * sobel_adjoint(grad_field.gx, grad_field.gy)
    return EcLossResult(
        loss=mse_term + cfg.alpha * edge_term,
        grad_wrt_pred=grad,
        mse_term=mse_term,
        edge_term=edge_term,
    )


# ---------- DDIM ----------

def ddim_step(
    zt: LatentTensor,
    t: int,
    t_prev: int,
    denoiser: Denoiser,
    conditions: Sequence[LatentTensor],
    sched: NoiseSchedule,
) -> LatentTensor:
    """One deterministic (eta = 0) DDIM update from step t to t_prev < t."""
    if t_prev >= t:
        raise NonMonotoneStepsError(f"t_prev ({t_prev}) must be smaller than t ({t})")
    if t_prev < 0:
        raise StepOutOfRangeError(f"t_prev must be >= 0, got {t_prev}")
    xt = as_latent(zt)
    v_hat = as_latent(denoiser(xt, t, conditions))
    _same_shape(xt, v_hat)

    z0_hat = recover_z0(xt, v_hat, t, sched)
    eps_hat = epsilon_from_velocity(xt, v_hat, t, sched)
    a_prev, s_prev = sched.coefficients(t_prev)
    return a_prev * z0_hat + s_prev * eps_hat


def ddim_timesteps(total_steps: int, num_steps: int) -> list[int]:
    """Evenly spaced descending steps from T down to 0 (num_steps updates)."""
    if not 1 <= num_steps <= total_steps:
        raise InvalidRangeError(f"num_steps must lie in [1, {total_steps}], got {num_steps}")
    steps = np.round(np.linspace(total_steps, 0, num_steps + 1)).astype(int)
    return [int(s) for s in steps]


def ddim_sample(
    z_start: LatentTensor,
    denoiser: Denoiser,
    conditions: Sequence[LatentTensor],
    sched: NoiseSchedule,
    num_steps: int = 50,
) -> LatentTensor:
    """Run DDIM from step T to the clean endpoint."""
    steps = ddim_timesteps(sched.total_steps, num_steps)
    z = as_latent(z_start)
    for t, t_prev in zip(steps[:-1], steps[1:]):
        z = ddim_step(z, t, t_prev, denoiser, conditions, sched)
    return z


# ---------- LATENT FILES ----------

def _sidecar(path: Path) -> Path:
    return path.with_suffix(".json")


def save_latent(path: str | Path, latent: LatentTensor) -> Path:
    """Raw little-endian float32 plus a JSON sidecar {channels, height, width}."""
    z = as_latent(latent)
    out_path = Path(path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    z.astype("<f4").tofile(out_path)
    channels, height, width = z.shape
    header = {"channels": channels, "height": height, "width": width}
    _sidecar(out_path).write_text(json.dumps(header), encoding="utf-8")
    return out_path


def load_latent(path: str | Path) -> LatentTensor:
    latent_path = Path(path)
    header = json.loads(_sidecar(latent_path).read_text(encoding="utf-8"))
    shape = (int(header["channels"]), int(header["height"]), int(header["width"]))
    raw = np.fromfile(latent_path, dtype="<f4")
    if raw.size != shape[0] * shape[1] * shape[2]:
        raise DimensionMismatchError(f"{latent_path} holds {raw.size} values, header declares {shape}")
    return as_latent(raw.reshape(shape).astype(np.float64))


# ---------- SELF CHECK ----------

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def finite_difference_gradient(
    loss_fn: Callable[[LatentTensor], float], x: LatentTensor, step: float = 1e-5
) -> LatentTensor:
    grad = np.zeros_like(x)
    flat_x = x.reshape(-1)
    flat_g = grad.reshape(-1)
    for i in range(flat_x.size):
        original = flat_x[i]
        flat_x[i] = original + step
        upper = loss_fn(x)
        flat_x[i] = original - step
        lower = loss_fn(x)
        flat_x[i] = original
        flat_g[i] = (upper - lower) / (2.0 * step)
    return grad


def _oracle_denoiser(z0: LatentTensor, eps: LatentTensor, sched: NoiseSchedule) -> Denoiser:
    def denoise(zt: LatentTensor, t: int, conditions: Sequence[LatentTensor]) -> LatentTensor:
        return velocity_target(z0, eps, t, sched)

    return denoise


def run_losscheck(
    seed: int = 42,
    trials: int = 20,
    shape: tuple[int, int, int] = (4, 8, 8),
    sched: NoiseSchedule | None = None,
    cfg: EcLossConfig = EcLossConfig(),
) -> list[CheckResult]:
    """Gradient, identity and sampler consistency checks on random tensors."""
    rng = np.random.default_rng(seed)
    schedule = sched or make_linear_schedule(1000)
    results: list[CheckResult] = []

    worst = 0.0
    for _ in range(trials):
        target = rng.standard_normal(shape)
        pred = rng.standard_normal(shape)
        analytic = ec_loss(target, pred, cfg).grad_wrt_pred
        numeric = finite_difference_gradient(lambda x: ec_loss(target, x, cfg).loss, pred.copy())
        worst = max(worst, float(np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric)))
    results.append(CheckResult("ec_gradient_vs_finite_differences", worst <= 1e-4, f"max relative error {worst:.2e}"))

    target = rng.standard_normal(shape)
    offset = ec_loss(target, target + 0.5, cfg)
    ok = abs(offset.loss - 0.25) <= 1e-12 and offset.edge_term <= 1e-12
    results.append(CheckResult("ec_constant_offset", ok, f"loss {offset.loss:.15f}, edge term {offset.edge_term:.2e}"))

    dominated = True
    for _ in range(trials):
        sample = ec_loss(rng.standard_normal(shape), rng.standard_normal(shape), cfg)
        dominated = dominated and sample.loss >= sample.mse_term
    results.append(CheckResult("ec_loss_bounds_mse", dominated, f"{trials} random pairs"))

    worst_roundtrip = 0.0
    worst_rotation = 0.0
    for _ in range(100):
        z0 = rng.standard_normal(shape)
        eps = rng.standard_normal(shape)
        t = int(rng.integers(1, schedule.total_steps + 1))
        zt = forward_noise(z0, eps, t, schedule)
        v = velocity_target(z0, eps, t, schedule)
        worst_roundtrip = max(worst_roundtrip, float(np.max(np.abs(recover_z0(zt, v, t, schedule) - z0))))
        lhs = np.sum(zt * zt) + np.sum(v * v)
        rhs = np.sum(z0 * z0) + np.sum(eps * eps)
        worst_rotation = max(worst_rotation, float(abs(lhs - rhs)))
    results.append(CheckResult("velocity_round_trip", worst_roundtrip <= 1e-12, f"max error {worst_roundtrip:.2e}"))
    results.append(CheckResult("velocity_rotation_identity", worst_rotation <= 1e-9, f"max error {worst_rotation:.2e}"))

    z0 = rng.standard_normal(shape)
    eps = rng.standard_normal(shape)
    oracle = _oracle_denoiser(z0, eps, schedule)
    t, t_prev = schedule.total_steps // 2, schedule.total_steps // 4
    stepped = ddim_step(forward_noise(z0, eps, t, schedule), t, t_prev, oracle, [], schedule)
    step_error = float(np.max(np.abs(stepped - forward_noise(z0, eps, t_prev, schedule))))
    results.append(CheckResult("ddim_single_step", step_error <= 1e-9, f"max error {step_error:.2e}"))

    start = forward_noise(z0, eps, schedule.total_steps, schedule)
    sampled = ddim_sample(start, oracle, [], schedule, num_steps=50)
    sample_error = float(np.max(np.abs(sampled - z0)))
    results.append(CheckResult("ddim_50_step_recovery", sample_error <= 1e-6, f"max error {sample_error:.2e}"))

    for result in results:
        LOGGER.debug("%s: %s (%s)", result.name, "ok" if result.passed else "FAILED", result.detail)
    return results


__all__ = [
    "LatentTensor",
    "NoiseSchedule",
    "EcLossConfig",
    "EcLossResult",
    "CheckResult",
    "as_latent",
    "make_linear_schedule",
    "make_scaled_linear_schedule",
    "make_schedule",
    "forward_noise",
    "velocity_target",
    "recover_z0",
    "epsilon_from_velocity",
    "ec_loss",
    "ddim_step",
    "ddim_timesteps",
    "ddim_sample",
    "save_latent",
    "load_latent",
    "finite_difference_gradient",
    "run_losscheck",
]
