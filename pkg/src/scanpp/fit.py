"""Maximum-likelihood training for saccade and duration models.

Both model families share one trainer: parameters are packed into a flat
unconstrained vector (positivity through softplus or log), the objective is
the mean negative log-likelihood per fixation, and optimization is SGD with
Nesterov momentum over whole-scanpath batches, early stopping on validation
loss, and an optional hyperparameter grid. The saccade adapter additionally
rescales the spatial axes by the larger screen dimension while fitting; the
mapping is an exact reparameterization, so reported likelihoods and returned
parameters are always in pixel units.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import Rect
from .duration import (
    DurationParams,
    DurationSpec,
    duration_loglik_grad,
    duration_means,
    gamma_logpdf,
    lognormal_logpdf,
)
from .errors import ScanppError, UsageError, ValidationError
from .mathutil import LOG2, sigmoid, softplus, softplus_inv
from .saccade import PathData, SaccadeParams, SaccadeSpec, loglik_grad, loglik_terms


class DivergenceError(ScanppError):
    """Loss or gradient became non-finite; carries the loss trace so far."""

    def __init__(self, message: str, trace: Sequence[float] = ()):
        super().__init__(message)
        self.trace = tuple(trace)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    batch_size: int = 64
    max_epochs: int = 30
    patience: int = 5
    seed: int = 0
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        object.__setattr__(self, "split", tuple(float(f) for f in self.split))
        if self.learning_rate <= 0:
            raise ValidationError(f"learning rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValidationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValidationError(f"weight decay must be >= 0, got {self.weight_decay}")
        if self.batch_size < 1:
            raise ValidationError(f"batch size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ValidationError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not 0 <= self.patience <= self.max_epochs:
            raise ValidationError(
                f"patience must lie in [0, max_epochs], got {self.patience}")
        if len(self.split) != 3 or any(f < 0 for f in self.split):
            raise ValidationError(f"split must be three fractions >= 0, got {self.split}")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValidationError(f"split fractions must sum to 1, got {self.split}")

    def replace(self, **changes) -> "TrainConfig":
        base = {"learning_rate": self.learning_rate, "momentum": self.momentum,
                "weight_decay": self.weight_decay, "batch_size": self.batch_size,
                "max_epochs": self.max_epochs, "patience": self.patience,
                "seed": self.seed, "split": self.split}
        base.update(changes)
        return TrainConfig(**base)


@dataclass(frozen=True)
class GridSpec:
    """Candidate hyperparameter values; the product is enumerated in field order."""

    batch_sizes: tuple[int, ...] = (64, 128, 256)
    learning_rates: tuple[float, ...] = (0.1, 0.01, 0.001)
    weight_decays: tuple[float, ...] = (0.0, 1e-4)
    kernel_inits: tuple[tuple[float, float, float], ...] = ((2.0, 3.0, 0.5),)

    def __post_init__(self):
        object.__setattr__(self, "batch_sizes", tuple(int(b) for b in self.batch_sizes))
        object.__setattr__(self, "learning_rates", tuple(float(v) for v in self.learning_rates))
        object.__setattr__(self, "weight_decays", tuple(float(v) for v in self.weight_decays))
        object.__setattr__(self, "kernel_inits",
                           tuple(tuple(float(x) for x in k) for k in self.kernel_inits))
        for name in ("batch_sizes", "learning_rates", "weight_decays", "kernel_inits"):
            if not getattr(self, name):
                raise ValidationError(f"grid field {name} must be non-empty")

    @property
    def size(self) -> int:
        return (len(self.batch_sizes) * len(self.learning_rates)
                * len(self.weight_decays) * len(self.kernel_inits))


@dataclass(frozen=True)
class Split:
    train: tuple
    val: tuple
    test: tuple


def split(data: Sequence, fractions: tuple[float, float, float], seed: int) -> Split:
    """Deterministic shuffle-and-cut split; the unit is one element of data."""
    if len(fractions) != 3 or any(f < 0 for f in fractions):
        raise ValidationError(f"need three fractions >= 0, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError(f"fractions must sum to 1, got {fractions}")
    data = list(data)
    n = len(data)
    perm = np.random.default_rng(seed).permutation(n)
    c1 = int(round(fractions[0] * n))
    c2 = int(round((fractions[0] + fractions[1]) * n))
    idx_train, idx_val, idx_test = perm[:c1], perm[c1:c2], perm[c2:]
    return Split(tuple(data[i] for i in idx_train),
                 tuple(data[i] for i in idx_val),
                 tuple(data[i] for i in idx_test))


def kfold(data: Sequence, k: int, seed: int) -> list[tuple[tuple, tuple]]:
    """k (train, held-out) pairs from contiguous chunks of one shuffled order."""
    data = list(data)
    n = len(data)
    if k < 2:
        raise UsageError(f"need k >= 2 folds, got {k}")
    if k > n:
        raise ValidationError(f"cannot make {k} folds from {n} units")
    perm = np.random.default_rng(seed).permutation(n)
    bounds = [int(math.floor(i * n / k)) for i in range(k + 1)]
    folds = []
    for i in range(k):
        held = set(perm[bounds[i]:bounds[i + 1]].tolist())
        train = tuple(data[j] for j in perm if j not in held)
        test = tuple(data[j] for j in perm[bounds[i]:bounds[i + 1]])
        folds.append((train, test))
    return folds


# --- Model adapters ----------------------------------------------------------

class SaccadeModel:
    """Flattens SaccadeParams to an unconstrained vector and evaluates batches.

    Spatial quantities are rescaled by the larger screen dimension during
    fitting; base intensity, variance, shift, and predictor offsets transform
    exactly under that change of units, and the per-event Jacobian constant
    is removed again so likelihoods are reported per squared pixel.
    """

    kind = "saccade"

    def __init__(self, spec: SaccadeSpec, omega: Rect, rescale: bool = True):
        self.spec = spec
        self.omega = omega
        self.scale = max(omega.width, omega.height) if rescale else 1.0
        L = self.scale
        self.omega_s = Rect(omega.x0 / L, omega.y0 / L, omega.width / L, omega.height / L)
        self.log_jac = 2.0 * math.log(L)
        names: list[str] = ["nu"]
        cols = spec.columns
        if spec.variant == "hawkes":
            names += [f"alpha[{c}]" for c in cols] + [f"beta[{c}]" for c in cols]
            if spec.mean_fn in ("affine", "full"):
                names += ["A[0,0]", "A[0,1]", "A[1,0]", "A[1,1]", "b[0]", "b[1]"]
            if spec.mean_fn == "full":
                names += [f"C[0,{c}]" for c in cols] + [f"C[1,{c}]" for c in cols]
        if spec.variant != "poisson":
            names += ["sigma2"]
        self.names: tuple[str, ...] = tuple(names)
        self.dim = len(names)

    def prepare_unit(self, pd: PathData) -> PathData:
        L = self.scale
        if L == 1.0:
            return pd
        return PathData(pd.onsets, pd.durations, pd.locations / L, pd.design, pd.label)

    def _unpack_scaled(self, raw: np.ndarray) -> SaccadeParams:
        raw = np.asarray(raw, dtype=float)
        spec = self.spec
        p = spec.p
        i = 0
        nu = softplus(raw[i]); i += 1
        alpha = np.zeros(p)
        beta = np.zeros(p)
        A = np.eye(2)
        b = np.zeros(2)
        C = np.zeros((2, p))
        sigma2 = 1.0
        if spec.variant == "hawkes":
            alpha = raw[i:i + p]; i += p
            beta = raw[i:i + p]; i += p
            if spec.mean_fn in ("affine", "full"):
                A = raw[i:i + 4].reshape(2, 2); i += 4
                b = raw[i:i + 2]; i += 2
            if spec.mean_fn == "full":
                C = raw[i:i + 2 * p].reshape(2, p); i += 2 * p
        if spec.variant != "poisson":
            sigma2 = math.exp(raw[i]); i += 1
        return SaccadeParams(nu=nu, alpha=alpha, beta=beta, A=A, b=b, C=C, sigma2=sigma2)

    def unpack(self, raw: np.ndarray) -> SaccadeParams:
        ps = self._unpack_scaled(raw)
        L = self.scale
        return ps.replace(nu=ps.nu / (L * L), b=ps.b * L, C=ps.C * L,
                          sigma2=ps.sigma2 * L * L)

    def _pack_scaled(self, params: SaccadeParams) -> np.ndarray:
        spec = self.spec
        parts = [np.atleast_1d(softplus_inv(max(params.nu, 1e-300)))]
        if spec.variant == "hawkes":
            parts += [params.alpha, params.beta]
            if spec.mean_fn in ("affine", "full"):
                parts += [params.A.reshape(-1), params.b]
            if spec.mean_fn == "full":
                parts += [params.C.reshape(-1)]
        if spec.variant != "poisson":
            parts += [np.atleast_1d(math.log(params.sigma2))]
        return np.concatenate(parts)

    def pack(self, params: SaccadeParams) -> np.ndarray:
        L = self.scale
        scaled = params.replace(nu=params.nu * L * L, b=params.b / L, C=params.C / L,
                                sigma2=params.sigma2 / (L * L))
        return self._pack_scaled(scaled)

    def constrained(self, raw: np.ndarray) -> np.ndarray:
        """Pixel-space parameter values aligned with ``names``."""
        ps = self.unpack(raw)
        spec = self.spec
        parts = [np.atleast_1d(ps.nu)]
        if spec.variant == "hawkes":
            parts += [ps.alpha, ps.beta]
            if spec.mean_fn in ("affine", "full"):
                parts += [ps.A.reshape(-1), ps.b]
            if spec.mean_fn == "full":
                parts += [ps.C.reshape(-1)]
        if spec.variant != "poisson":
            parts += [np.atleast_1d(ps.sigma2)]
        return np.concatenate(parts)

    def loglik_unit(self, raw: np.ndarray, unit: PathData) -> tuple[float, int]:
        params = self._unpack_scaled(raw)
        terms = loglik_terms(unit, self.spec, params, self.omega_s)
        if terms.invalid_count:
            return float("-inf"), unit.n
        return terms.total - unit.n * self.log_jac, unit.n

    def per_event_loglik(self, raw: np.ndarray, unit: PathData) -> np.ndarray:
        params = self._unpack_scaled(raw)
        terms = loglik_terms(unit, self.spec, params, self.omega_s)
        return terms.per_event - self.log_jac

    def grad_unit(self, raw: np.ndarray, unit: PathData) -> tuple[float, int, np.ndarray]:
        raw = np.asarray(raw, dtype=float)
        params = self._unpack_scaled(raw)
        terms, grads = loglik_grad(unit, self.spec, params, self.omega_s)
        spec = self.spec
        p = spec.p
        out = np.zeros(self.dim)
        i = 0
        out[i] = float(grads["nu"]) * sigmoid(raw[i]); i += 1
        if spec.variant == "hawkes":
            out[i:i + p] = grads["alpha"]; i += p
            out[i:i + p] = grads["beta"]; i += p
            if spec.mean_fn in ("affine", "full"):
                out[i:i + 4] = np.asarray(grads["A"]).reshape(-1); i += 4
                out[i:i + 2] = np.asarray(grads["b"]).reshape(-1); i += 2
            if spec.mean_fn == "full":
                out[i:i + 2 * p] = np.asarray(grads["C"]).reshape(-1); i += 2 * p
        if spec.variant != "poisson":
            out[i] = float(grads["sigma2"]) * params.sigma2; i += 1
        ll = terms.total - unit.n * self.log_jac
        if terms.invalid_count:
            ll = float("-inf")
        return ll, unit.n, out

    def decay_mask(self) -> np.ndarray:
        mask = np.zeros(self.dim, dtype=bool)
        for i, name in enumerate(self.names):
            if name.startswith(("alpha[", "beta[")) and "[intercept]" not in name:
                mask[i] = True
            elif name.startswith("C["):
                mask[i] = True
        return mask

    def default_init(self, units: Sequence[PathData],
                     kernel: Optional[tuple[float, float, float]] = None) -> np.ndarray:
        spec = self.spec
        n_events = sum(u.n for u in units)
        exposure = sum(float(u.clock[-1]) for u in units if u.n)
        if n_events and exposure > 0:
            nu = n_events / (self.omega_s.area * exposure)
        else:
            nu = 1e-3
        params = SaccadeParams.initial(spec, nu=nu, sigma2=1.0)
        disp = [np.linalg.norm(np.diff(u.locations, axis=0), axis=1)
                for u in units if u.n > 1]
        if disp:
            var = float(np.var(np.concatenate(disp)))
            params = params.replace(sigma2=max(var, 1e-4))
        if spec.variant == "hawkes":
            unit_a = softplus_inv(1.0)
            alpha = np.zeros(spec.p)
            beta = np.zeros(spec.p)
            if "intercept" in spec.columns:
                j = spec.columns.index("intercept")
                alpha[j] = unit_a
                beta[j] = unit_a
            else:
                alpha[:] = unit_a
                beta[:] = unit_a
            params = params.replace(alpha=alpha, beta=beta)
        # built from prepared units, so already in fitting units
        return self._pack_scaled(params)


class DurationModel:
    """Flattens DurationParams; kernel shapes and scales stay in bounds by construction."""

    kind = "duration"

    def __init__(self, spec: DurationSpec):
        self.spec = spec
        names: list[str] = [f"w[{c}]" for c in spec.columns]
        if spec.mean_variant == "convolution":
            names += [f"w_prime[{k}]" for k in spec.spillover]
        elif spec.mean_variant == "markov":
            names += [f"w_prime[lag{j},{k}]"
                      for j in range(1, spec.lags + 1) for k in spec.spillover]
        if spec.mean_variant == "convolution":
            for part in ("kernel_alpha", "kernel_beta", "kernel_theta"):
                names += [f"{part}[{k}]" for k in spec.spillover]
        names += ["shape" if spec.distribution == "gamma" else "sigma2"]
        self.names: tuple[str, ...] = tuple(names)
        self.dim = len(names)

    def prepare_unit(self, pd: PathData) -> PathData:
        return pd

    def unpack(self, raw: np.ndarray) -> DurationParams:
        raw = np.asarray(raw, dtype=float)
        spec = self.spec
        p, k = spec.p, spec.n_spill
        i = 0
        w = raw[i:i + p]; i += p
        if spec.mean_variant == "convolution":
            w_prime = raw[i:i + k]; i += k
        elif spec.mean_variant == "markov":
            w_prime = raw[i:i + spec.lags * k].reshape(spec.lags, k); i += spec.lags * k
        else:
            w_prime = np.zeros(0)
        if spec.mean_variant == "convolution":
            ka = 1.0 + softplus(raw[i:i + k]); i += k
            kb = softplus(raw[i:i + k]); i += k
            kt = np.maximum(softplus(raw[i:i + k]) - LOG2, 0.0); i += k
        else:
            ka = np.full(k, 2.0); kb = np.full(k, 1.0); kt = np.zeros(k)
        disp = math.exp(raw[i]); i += 1
        if spec.distribution == "gamma":
            return DurationParams(w=w, w_prime=w_prime, kernel_alpha=ka, kernel_beta=kb,
                                  kernel_theta=kt, sigma2=1.0, shape=disp)
        return DurationParams(w=w, w_prime=w_prime, kernel_alpha=ka, kernel_beta=kb,
                              kernel_theta=kt, sigma2=disp)

    def pack(self, params: DurationParams) -> np.ndarray:
        spec = self.spec
        parts = [params.w]
        if spec.mean_variant in ("convolution", "markov"):
            parts += [np.asarray(params.w_prime, dtype=float).reshape(-1)]
        if spec.mean_variant == "convolution":
            ka = np.atleast_1d(softplus_inv(np.maximum(params.kernel_alpha - 1.0, 1e-12)))
            kb = np.atleast_1d(softplus_inv(np.maximum(params.kernel_beta, 1e-12)))
            kt = np.atleast_1d(softplus_inv(params.kernel_theta + LOG2))
            kt = np.where(params.kernel_theta > 0, kt, 0.0)
            parts += [ka, kb, kt]
        disp = params.shape if spec.distribution == "gamma" else params.sigma2
        parts += [np.atleast_1d(math.log(disp))]
        return np.concatenate(parts)

    def constrained(self, raw: np.ndarray) -> np.ndarray:
        """Constrained parameter values aligned with ``names``."""
        params = self.unpack(raw)
        spec = self.spec
        parts = [params.w]
        if spec.mean_variant in ("convolution", "markov"):
            parts += [np.asarray(params.w_prime, dtype=float).reshape(-1)]
        if spec.mean_variant == "convolution":
            parts += [params.kernel_alpha, params.kernel_beta, params.kernel_theta]
        disp = params.shape if spec.distribution == "gamma" else params.sigma2
        parts += [np.atleast_1d(disp)]
        return np.concatenate(parts)

    def loglik_unit(self, raw: np.ndarray, unit: PathData) -> tuple[float, int]:
        if unit.n == 0:
            return 0.0, 0
        params = self.unpack(raw)
        xi = duration_means(unit.onsets, unit.design, self.spec, params)
        if self.spec.distribution == "gamma":
            per = gamma_logpdf(unit.durations, xi, params.shape)
        else:
            per = lognormal_logpdf(unit.durations, xi, params.sigma2)
        return float(np.sum(per)), unit.n

    def per_event_loglik(self, raw: np.ndarray, unit: PathData) -> np.ndarray:
        if unit.n == 0:
            return np.empty(0)
        params = self.unpack(raw)
        xi = duration_means(unit.onsets, unit.design, self.spec, params)
        if self.spec.distribution == "gamma":
            return np.atleast_1d(gamma_logpdf(unit.durations, xi, params.shape))
        return np.atleast_1d(lognormal_logpdf(unit.durations, xi, params.sigma2))

    def grad_unit(self, raw: np.ndarray, unit: PathData) -> tuple[float, int, np.ndarray]:
        raw = np.asarray(raw, dtype=float)
        spec = self.spec
        params = self.unpack(raw)
        result, grads = duration_loglik_grad(unit.onsets, unit.durations, unit.design,
                                             spec, params)
        p, k = spec.p, spec.n_spill
        out = np.zeros(self.dim)
        i = 0
        out[i:i + p] = grads["w"]; i += p
        if spec.mean_variant == "convolution":
            out[i:i + k] = np.asarray(grads["w_prime"]).reshape(-1); i += k
        elif spec.mean_variant == "markov":
            nk = spec.lags * k
            out[i:i + nk] = np.asarray(grads["w_prime"]).reshape(-1); i += nk
        if spec.mean_variant == "convolution":
            ra = raw[i:i + k]
            out[i:i + k] = np.asarray(grads["kernel_alpha"]) * sigmoid(ra); i += k
            rb = raw[i:i + k]
            out[i:i + k] = np.asarray(grads["kernel_beta"]) * sigmoid(rb); i += k
            rc = raw[i:i + k]
            active = (softplus(rc) > LOG2).astype(float)
            out[i:i + k] = np.asarray(grads["kernel_theta"]) * sigmoid(rc) * active; i += k
        if spec.distribution == "gamma":
            out[i] = float(grads["shape"]) * params.shape
        else:
            out[i] = float(grads["sigma2"]) * params.sigma2
        i += 1
        return result.total, unit.n, out

    def decay_mask(self) -> np.ndarray:
        mask = np.zeros(self.dim, dtype=bool)
        for i, name in enumerate(self.names):
            if name.startswith("w[") and "[intercept]" not in name:
                mask[i] = True
            elif name.startswith("w_prime["):
                mask[i] = True
        return mask

    def default_init(self, units: Sequence[PathData],
                     kernel: Optional[tuple[float, float, float]] = None) -> np.ndarray:
        spec = self.spec
        logs = [np.log(u.durations) for u in units if u.n]
        all_logs = np.concatenate(logs) if logs else np.zeros(1)
        mean = float(np.mean(all_logs))
        var = max(float(np.var(all_logs)), 1e-6)
        params = DurationParams.initial(spec, kernel=kernel or (2.0, 3.0, 0.5), sigma2=var)
        w = np.zeros(spec.p)
        if "intercept" in spec.columns:
            w[spec.columns.index("intercept")] = mean
        params = params.replace(w=w)
        if spec.distribution == "gamma":
            params = params.replace(shape=float(np.clip(1.0 / var, 0.1, 1e4)))
        return self.pack(params)


Model = SaccadeModel | DurationModel


# --- Objective and training --------------------------------------------------

def objective(model: Model, units: Sequence[PathData], raw: np.ndarray,
              want_grad: bool = True) -> tuple[float, Optional[np.ndarray]]:
    """Mean negative log-likelihood per fixation over the batch, with gradient."""
    total_ll = 0.0
    total_n = 0
    grad = np.zeros(model.dim) if want_grad else None
    for unit in units:
        if want_grad:
            ll, n, g = model.grad_unit(raw, unit)
        else:
            ll, n = model.loglik_unit(raw, unit)
            g = None
        if not np.isfinite(ll):
            raise DivergenceError(f"non-finite log-likelihood on scanpath {unit.label!r}")
        total_ll += ll
        total_n += n
        if want_grad:
            grad += g
    if total_n == 0:
        return 0.0, (np.zeros(model.dim) if want_grad else None)
    loss = -total_ll / total_n
    if want_grad:
        grad = -grad / total_n
        if not np.all(np.isfinite(grad)):
            raise DivergenceError("non-finite gradient over batch")
    return loss, grad


def dataset_loglik(model: Model, units: Sequence[PathData], raw: np.ndarray
                   ) -> tuple[float, int]:
    """Total log-likelihood and fixation count of a prepared dataset."""
    total, n = 0.0, 0
    for unit in units:
        ll, k = model.loglik_unit(raw, unit)
        total += ll
        n += k
    return total, n


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of one training run (or the winning grid-search run)."""

    names: tuple[str, ...]
    raw: np.ndarray
    params: object
    train_trace: tuple[float, ...]
    val_trace: tuple[float, ...]
    best_epoch: int
    selected: dict
    grid_trace: tuple = ()
    test_loglik: float = float("nan")
    test_events: int = 0
    seed: int = 0
    wall_clock: float = 0.0

    @property
    def best_val_loss(self) -> float:
        return self.val_trace[self.best_epoch - 1]

    @property
    def test_loglik_per_fixation(self) -> float:
        if self.test_events == 0:
            return float("nan")
        return self.test_loglik / self.test_events


def _as_split(data, config: TrainConfig) -> Split:
    if isinstance(data, Split):
        return data
    return split(list(data), config.split, config.seed)


def train(model: Model, data, config: TrainConfig,
          init: Optional[np.ndarray] = None,
          kernel_init: Optional[tuple[float, float, float]] = None) -> FitResult:
    """SGD with Nesterov momentum, early-stopped on validation loss.

    ``data`` is a sequence of PathData (split internally per config) or a
    prepared Split. Returns the parameters of the best validation epoch.
    """
    t0 = time.perf_counter()
    parts = _as_split(data, config)
    train_units = [model.prepare_unit(u) for u in parts.train]
    val_units = [model.prepare_unit(u) for u in parts.val]
    test_units = [model.prepare_unit(u) for u in parts.test]
    if not train_units:
        raise ValidationError("training split is empty")

    raw = np.array(model.default_init(train_units, kernel=kernel_init)
                   if init is None else init, dtype=float)
    if raw.shape != (model.dim,):
        raise ValidationError(f"init vector must have {model.dim} entries, got {raw.shape}")
    velocity = np.zeros_like(raw)
    mask = model.decay_mask().astype(float)
    rng = np.random.default_rng(config.seed)

    train_trace: list[float] = []
    val_trace: list[float] = []
    best_val = float("inf")
    best_epoch = 0
    best_raw = raw.copy()

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_units))
        for start in range(0, len(order), config.batch_size):
            batch = [train_units[i] for i in order[start:start + config.batch_size]]
            try:
                _, grad = objective(model, batch, raw)
            except DivergenceError as exc:
                raise DivergenceError(str(exc), trace=train_trace) from None
            grad = grad + config.weight_decay * mask * raw
            velocity = config.momentum * velocity + grad
            raw = raw - config.learning_rate * (grad + config.momentum * velocity)
        try:
            epoch_train, _ = objective(model, train_units, raw, want_grad=False)
            if val_units:
                epoch_val, _ = objective(model, val_units, raw, want_grad=False)
            else:
                epoch_val = epoch_train
        except DivergenceError as exc:
            raise DivergenceError(str(exc), trace=train_trace) from None
        if not (np.isfinite(epoch_train) and np.isfinite(epoch_val)):
            raise DivergenceError(f"non-finite loss at epoch {epoch}", trace=train_trace)
        train_trace.append(epoch_train)
        val_trace.append(epoch_val)
        if epoch_val < best_val:
            best_val = epoch_val
            best_epoch = epoch
            best_raw = raw.copy()
        if epoch - best_epoch >= config.patience:
            break

    test_ll, test_n = dataset_loglik(model, test_units, best_raw) if test_units else (float("nan"), 0)
    return FitResult(
        names=model.names, raw=best_raw, params=model.unpack(best_raw),
        train_trace=tuple(train_trace), val_trace=tuple(val_trace),
        best_epoch=best_epoch, selected={},
        test_loglik=test_ll, test_events=test_n, seed=config.seed,
        wall_clock=time.perf_counter() - t0)


def grid_search(model: Model, data, grid: GridSpec, config: TrainConfig,
                init: Optional[np.ndarray] = None) -> FitResult:
    """Train every grid configuration; select by best validation loss.

    Enumeration and tie-breaking follow the declared field order (batch size,
    learning rate, weight decay, kernel init), so the first strict improvement
    wins and results are reproducible.
    """
    t0 = time.perf_counter()
    parts = _as_split(data, config)
    runs: list[tuple[dict, float]] = []
    best: Optional[FitResult] = None
    best_loss = float("inf")
    best_hp: dict = {}
    for bs, lr, wd, kern in itertools.product(grid.batch_sizes, grid.learning_rates,
                                              grid.weight_decays, grid.kernel_inits):
        hp = {"batch_size": bs, "learning_rate": lr, "weight_decay": wd,
              "kernel_init": tuple(kern)}
        cfg = config.replace(batch_size=bs, learning_rate=lr, weight_decay=wd)
        try:
            result = train(model, parts, cfg, init=init, kernel_init=tuple(kern))
            loss = result.best_val_loss
        except DivergenceError:
            result = None
            loss = float("inf")
        runs.append((hp, loss))
        if result is not None and loss < best_loss:
            best, best_loss, best_hp = result, loss, hp
    if best is None:
        raise DivergenceError(f"all {len(runs)} grid configurations diverged")
    return FitResult(
        names=best.names, raw=best.raw, params=best.params,
        train_trace=best.train_trace, val_trace=best.val_trace,
        best_epoch=best.best_epoch, selected=dict(best_hp),
        grid_trace=tuple((dict(hp), loss) for hp, loss in runs),
        test_loglik=best.test_loglik, test_events=best.test_events,
        seed=config.seed, wall_clock=time.perf_counter() - t0)


def warm_start(source_names: Sequence[str], source_raw: np.ndarray, target_model: Model,
               units: Sequence[PathData] = (),
               kernel_init: Optional[tuple[float, float, float]] = None) -> np.ndarray:
    """Initial vector for a larger model: copy shared entries, default the rest.

    Every source entry must exist in the target by name; parameters absent
    from the source keep the target's documented defaults.
    """
    target_names = list(target_model.names)
    missing = [n for n in source_names if n not in target_names]
    if missing:
        raise ValidationError(
            f"source parameters {missing} do not exist in the target model")
    prepared = [target_model.prepare_unit(u) for u in units]
    raw = np.array(target_model.default_init(prepared, kernel=kernel_init), dtype=float)
    source_raw = np.asarray(source_raw, dtype=float)
    for name, value in zip(source_names, source_raw):
        raw[target_names.index(name)] = value
    return raw


def warm_start_result(source: FitResult, target_model: Model,
                      units: Sequence[PathData] = (),
                      kernel_init: Optional[tuple[float, float, float]] = None) -> np.ndarray:
    return warm_start(source.names, source.raw, target_model, units, kernel_init)


def poisson_mle_nu(paths: Sequence[PathData], omega: Rect) -> float:
    """Closed-form base-rate estimate: events per unit exposure and area."""
    n_events = sum(p.n for p in paths)
    exposure = sum(float(p.clock[-1]) for p in paths if p.n)
    if exposure <= 0:
        raise ValidationError("total exposure is zero; cannot estimate a base rate")
    return n_events / (omega.area * exposure)


def affine_moment_init(units: Sequence[PathData]
                       ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Least-squares fit of each landing site on its predecessor.

    Regresses the next location on the previous one across all consecutive
    fixation pairs, giving a data-driven starting point for the affine
    excitation-center map: a 2x2 matrix, an offset vector, and the squared
    residual norm per pair. The residual quantiles in turn seed the spatial
    variance; background-driven jumps inflate the tail, so a low quantile is
    the more robust choice.
    """
    prev = [u.locations[:-1] for u in units if u.n > 1]
    nxt = [u.locations[1:] for u in units if u.n > 1]
    if not prev:
        raise ValidationError("no consecutive fixation pairs to regress on")
    prev = np.concatenate(prev)
    nxt = np.concatenate(nxt)
    X = np.column_stack([prev, np.ones(len(prev))])
    coef, *_ = np.linalg.lstsq(X, nxt, rcond=None)
    resid = nxt - X @ coef
    return coef[:2].T, coef[2], (resid ** 2).sum(axis=1)
