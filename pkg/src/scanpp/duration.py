"""How long fixations last: log-normal durations with spillover means.

The mean of log-duration is a linear predictor plus optional spillover from
earlier fixations, either as a convolution of past predictor values with a
shifted-gamma kernel over elapsed time, or as a fixed-lag sum with one weight
per (lag, predictor). A gamma output distribution is available as an
alternative to the log-normal. Aggregated word-level reading times use the
same spillover construction as lagged regressors in a closed-form
least-squares fit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import digamma, gammaincc, gammaln

from .data import AggregatedRecord, DesignMatrix, Scanpath
from .errors import UsageError, ValidationError

MEAN_VARIANTS = ("plain", "convolution", "markov")
DISTRIBUTIONS = ("lognormal", "gamma")


@dataclass(frozen=True)
class DurationSpec:
    """Mean-structure and output-distribution selector for fixation durations.

    ``columns`` is the design schema; ``spillover`` names the columns whose
    past values feed the spillover term; ``lags`` is the fixed-lag count of
    the markov variant.
    """

    mean_variant: str = "plain"
    spillover: tuple[str, ...] = ()
    lags: int = 0
    distribution: str = "lognormal"
    columns: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "spillover", tuple(self.spillover))
        object.__setattr__(self, "columns", tuple(self.columns))
        if self.mean_variant not in MEAN_VARIANTS:
            raise ValidationError(
                f"unknown mean variant {self.mean_variant!r}; expected one of {MEAN_VARIANTS}")
        if self.distribution not in DISTRIBUTIONS:
            raise ValidationError(
                f"unknown distribution {self.distribution!r}; expected one of {DISTRIBUTIONS}")
        if self.lags < 0:
            raise UsageError(f"lag count must be >= 0, got {self.lags}")
        missing = [k for k in self.spillover if k not in self.columns]
        if missing:
            raise ValidationError(f"spillover columns {missing} not in the design schema")
        if self.mean_variant == "plain" and self.spillover:
            raise ValidationError("the plain mean has no spillover columns")
        if self.mean_variant == "markov" and self.spillover and self.lags == 0:
            raise ValidationError("markov spillover requires lags >= 1")

    @property
    def p(self) -> int:
        return len(self.columns)

    @property
    def n_spill(self) -> int:
        return len(self.spillover)

    @property
    def spill_indices(self) -> tuple[int, ...]:
        return tuple(self.columns.index(k) for k in self.spillover)


@dataclass(frozen=True, eq=False)
class DurationParams:
    """Weights and kernel parameters; shapes follow the spec's variant.

    ``w_prime`` is one weight per spillover column (convolution) or a
    (lags, spillover) matrix (markov). ``shape`` is only read by the gamma
    output distribution.
    """

    w: np.ndarray
    w_prime: np.ndarray
    kernel_alpha: np.ndarray
    kernel_beta: np.ndarray
    kernel_theta: np.ndarray
    sigma2: float
    shape: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float).reshape(-1))
        object.__setattr__(self, "w_prime", np.asarray(self.w_prime, dtype=float))
        for name in ("kernel_alpha", "kernel_beta", "kernel_theta"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        k = self.kernel_alpha.shape[0]
        if self.kernel_beta.shape[0] != k or self.kernel_theta.shape[0] != k:
            raise ValidationError("kernel parameter arrays must share one length")
        if np.any(self.kernel_alpha <= 1.0):
            raise ValidationError("kernel shape parameters must be > 1")
        if np.any(self.kernel_beta <= 0.0):
            raise ValidationError("kernel rate parameters must be > 0")
        if np.any(self.kernel_theta < 0.0):
            raise ValidationError("kernel shifts must be >= 0")
        if not np.isfinite(self.sigma2) or self.sigma2 <= 0.0:
            raise ValidationError(f"log-scale variance must be > 0, got {self.sigma2}")
        if not np.isfinite(self.shape) or self.shape <= 0.0:
            raise ValidationError(f"gamma shape must be > 0, got {self.shape}")

    @classmethod
    def initial(cls, spec: DurationSpec, kernel: tuple[float, float, float] = (2.0, 3.0, 0.5),
                sigma2: float = 1.0) -> "DurationParams":
        k = spec.n_spill
        if spec.mean_variant == "markov":
            w_prime = np.zeros((spec.lags, k))
        elif spec.mean_variant == "convolution":
            w_prime = np.zeros(k)
        else:
            w_prime = np.zeros(0)
        a0, b0, t0 = kernel
        return cls(w=np.zeros(spec.p), w_prime=w_prime,
                   kernel_alpha=np.full(k, a0), kernel_beta=np.full(k, b0),
                   kernel_theta=np.full(k, t0), sigma2=sigma2)

    def replace(self, **changes) -> "DurationParams":
        fields = {"w": self.w, "w_prime": self.w_prime, "kernel_alpha": self.kernel_alpha,
                  "kernel_beta": self.kernel_beta, "kernel_theta": self.kernel_theta,
                  "sigma2": self.sigma2, "shape": self.shape}
        fields.update(changes)
        return DurationParams(**fields)


def check_compatible(spec: DurationSpec, params: DurationParams) -> None:
    if params.w.shape[0] != spec.p:
        raise ValidationError(f"w has {params.w.shape[0]} weights for {spec.p} columns")
    k = spec.n_spill
    if spec.mean_variant == "convolution":
        if params.w_prime.shape != (k,) or params.kernel_alpha.shape[0] != k:
            raise ValidationError("convolution params need one weight and kernel per spillover column")
    elif spec.mean_variant == "markov":
        if params.w_prime.shape != (spec.lags, k):
            raise ValidationError(
                f"markov spillover weights must be {(spec.lags, k)}, got {params.w_prime.shape}")


# --- Kernels and densities --------------------------------------------------

def gamma_kernel(tau, alpha: float, beta: float, theta: float):
    """Shifted-gamma kernel value at elapsed time tau >= 0."""
    if alpha <= 1.0:
        raise ValidationError(f"kernel shape must be > 1, got {alpha}")
    if beta <= 0.0:
        raise ValidationError(f"kernel rate must be > 0, got {beta}")
    if theta < 0.0:
        raise ValidationError(f"kernel shift must be >= 0, got {theta}")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise UsageError("kernel argument must be >= 0")
    z = tau + theta
    with np.errstate(divide="ignore"):
        logz = np.where(z > 0, np.log(np.maximum(z, 1e-300)), -np.inf)
    logk = alpha * np.log(beta) - gammaln(alpha) + (alpha - 1.0) * logz - beta * z
    out = np.where(z > 0, np.exp(logk), 0.0)
    return out if out.ndim else float(out)


def gamma_kernel_mass(alpha: float, beta: float, theta: float) -> float:
    """Integral of the kernel over all elapsed times; 1 exactly when theta = 0."""
    return float(gammaincc(alpha, beta * theta))


def lognormal_logpdf(d, xi, sigma2: float):
    """Log-density of a log-normal duration with log-scale mean xi."""
    if sigma2 <= 0:
        raise ValidationError(f"log-scale variance must be > 0, got {sigma2}")
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValidationError("durations must be > 0")
    logd = np.log(d)
    out = -logd - 0.5 * np.log(2.0 * np.pi * sigma2) - (logd - xi) ** 2 / (2.0 * sigma2)
    return out if out.ndim else float(out)


def gamma_logpdf(d, xi, shape: float):
    """Log-density of a gamma duration with mean exp(xi) and the given shape."""
    if shape <= 0:
        raise ValidationError(f"gamma shape must be > 0, got {shape}")
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValidationError("durations must be > 0")
    out = (shape * np.log(shape) - shape * np.asarray(xi, dtype=float) - gammaln(shape)
           + (shape - 1.0) * np.log(d) - shape * np.exp(-np.asarray(xi, dtype=float)) * d)
    return out if out.ndim else float(out)


# --- Mean structures ---------------------------------------------------------

def _conv_features(onsets: np.ndarray, design: np.ndarray, spec: DurationSpec,
                   params: DurationParams) -> np.ndarray:
    """Per-event convolution features c[i, k] = sum_{m<i} x[m, k] * kernel(t_i - t_m)."""
    n = onsets.shape[0]
    k = spec.n_spill
    feats = np.zeros((n, k))
    if n < 2 or k == 0:
        return feats
    tri = np.tril(np.ones((n, n), dtype=bool), k=-1)
    tau = np.where(tri, onsets[:, None] - onsets[None, :], 0.0)
    for kk, col in enumerate(spec.spill_indices):
        kern = gamma_kernel(tau, float(params.kernel_alpha[kk]),
                            float(params.kernel_beta[kk]), float(params.kernel_theta[kk]))
        feats[:, kk] = (np.where(tri, kern, 0.0)) @ design[:, col]
    return feats


def _markov_features(design: np.ndarray, spec: DurationSpec) -> np.ndarray:
    """Lagged predictor values, shape (n, lags, spillover); zeros before the start."""
    n = design.shape[0]
    feats = np.zeros((n, spec.lags, spec.n_spill))
    cols = list(spec.spill_indices)
    for j in range(1, spec.lags + 1):
        if j < n:
            feats[j:, j - 1, :] = design[:n - j, cols]
    return feats


def conv_mean(n: int, onsets: np.ndarray, design: np.ndarray, spec: DurationSpec,
              params: DurationParams) -> float:
    """Mean log-duration of event n (0-based) under the convolution variant."""
    onsets = np.asarray(onsets, dtype=float)[: n + 1]
    design = np.asarray(design, dtype=float)[: n + 1]
    feats = _conv_features(onsets, design, spec, params)
    return float(design[n] @ params.w + feats[n] @ params.w_prime)


def markov_mean(n: int, design: np.ndarray, spec: DurationSpec,
                params: DurationParams) -> float:
    """Mean log-duration of event n (0-based) under the fixed-lag variant."""
    design = np.asarray(design, dtype=float)
    feats = _markov_features(design, spec)
    return float(design[n] @ params.w + np.sum(feats[n] * params.w_prime))


def duration_means(onsets: np.ndarray, design: np.ndarray, spec: DurationSpec,
                   params: DurationParams) -> np.ndarray:
    """Mean log-durations for every event of one scanpath."""
    check_compatible(spec, params)
    design = np.asarray(design, dtype=float)
    xi = design @ params.w
    if spec.mean_variant == "convolution" and spec.n_spill:
        xi = xi + _conv_features(np.asarray(onsets, dtype=float), design, spec, params) @ params.w_prime
    elif spec.mean_variant == "markov" and spec.n_spill:
        feats = _markov_features(design, spec)
        xi = xi + np.einsum("njk,jk->n", feats, params.w_prime)
    return xi


@dataclass(frozen=True, eq=False)
class DurationLoglik:
    per_event: np.ndarray

    @property
    def total(self) -> float:
        return float(np.sum(self.per_event))

    def __float__(self) -> float:
        return self.total


def duration_loglik(scanpath: Scanpath, design: DesignMatrix | np.ndarray | None,
                    spec: DurationSpec, params: DurationParams) -> DurationLoglik:
    """Joint log-likelihood of the fixation durations of one scanpath."""
    if isinstance(design, DesignMatrix):
        design = design.matrix
    if design is None:
        design = np.zeros((len(scanpath), spec.p))
    if len(scanpath) == 0:
        return DurationLoglik(np.empty(0))
    xi = duration_means(scanpath.onsets, design, spec, params)
    if spec.distribution == "gamma":
        per = gamma_logpdf(scanpath.durations, xi, params.shape)
    else:
        per = lognormal_logpdf(scanpath.durations, xi, params.sigma2)
    return DurationLoglik(np.atleast_1d(per))


def duration_loglik_grad(onsets: np.ndarray, durations: np.ndarray, design: np.ndarray,
                         spec: DurationSpec, params: DurationParams
                         ) -> tuple[DurationLoglik, dict[str, np.ndarray | float]]:
    """Log-likelihood and its gradient in constrained parameter space.

    Keys: w always; w_prime plus kernel_alpha/kernel_beta/kernel_theta for
    the convolution variant; w_prime for markov; sigma2 (log-normal) or
    shape (gamma).
    """
    check_compatible(spec, params)
    onsets = np.asarray(onsets, dtype=float)
    durations = np.asarray(durations, dtype=float)
    design = np.asarray(design, dtype=float)
    n = onsets.shape[0]
    k = spec.n_spill

    xi = design @ params.w
    conv_feats = None
    markov_feats = None
    if spec.mean_variant == "convolution" and k:
        conv_feats = _conv_features(onsets, design, spec, params)
        xi = xi + conv_feats @ params.w_prime
    elif spec.mean_variant == "markov" and k:
        markov_feats = _markov_features(design, spec)
        xi = xi + np.einsum("njk,jk->n", markov_feats, params.w_prime)

    grads: dict[str, np.ndarray | float] = {}
    if spec.distribution == "gamma":
        per = gamma_logpdf(durations, xi, params.shape)
        kap = params.shape
        dxi = kap * (np.exp(-xi) * durations - 1.0)
        grads["shape"] = float(np.sum(np.log(kap) + 1.0 - xi - digamma(kap)
                                      + np.log(durations) - np.exp(-xi) * durations))
    else:
        per = lognormal_logpdf(durations, xi, params.sigma2)
        resid = np.log(durations) - xi
        s2 = params.sigma2
        dxi = resid / s2
        grads["sigma2"] = float(np.sum(-0.5 / s2 + resid ** 2 / (2.0 * s2 * s2)))

    grads["w"] = design.T @ dxi
    if conv_feats is not None:
        grads["w_prime"] = conv_feats.T @ dxi
        d_alpha = np.zeros(k)
        d_beta = np.zeros(k)
        d_theta = np.zeros(k)
        if n > 1:
            tri = np.tril(np.ones((n, n), dtype=bool), k=-1)
            tau = np.where(tri, onsets[:, None] - onsets[None, :], 0.0)
            for kk, col in enumerate(spec.spill_indices):
                al = float(params.kernel_alpha[kk])
                be = float(params.kernel_beta[kk])
                th = float(params.kernel_theta[kk])
                kern = np.where(tri, gamma_kernel(tau, al, be, th), 0.0)
                z = tau + th
                with np.errstate(divide="ignore", invalid="ignore"):
                    logz = np.where(z > 0, np.log(np.maximum(z, 1e-300)), 0.0)
                    invz = np.where(z > 0, 1.0 / np.maximum(z, 1e-300), 0.0)
                dk_da = kern * (np.log(be) - digamma(al) + logz)
                dk_db = kern * (al / be - z)
                dk_dt = kern * ((al - 1.0) * invz - be)
                xcol = design[:, col]
                wk = float(params.w_prime[kk])
                d_alpha[kk] = wk * float(dxi @ (np.where(tri, dk_da, 0.0) @ xcol))
                d_beta[kk] = wk * float(dxi @ (np.where(tri, dk_db, 0.0) @ xcol))
                d_theta[kk] = wk * float(dxi @ (np.where(tri, dk_dt, 0.0) @ xcol))
        grads["kernel_alpha"] = d_alpha
        grads["kernel_beta"] = d_beta
        grads["kernel_theta"] = d_theta
    elif markov_feats is not None:
        grads["w_prime"] = np.einsum("n,njk->jk", dxi, markov_feats)
    else:
        grads["w_prime"] = np.zeros_like(params.w_prime)

    return DurationLoglik(np.atleast_1d(per)), grads


# --- Closed-form linear fits -------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearDurationFit:
    """Least-squares fit of log durations on an extended design.

    ``columns`` lists base columns, then lagged spillover columns
    ``{name}@lag{j}``, then lag-presence indicators ``has:lag{j}``.
    Dropped (collinear) columns keep a zero weight.
    """

    columns: tuple[str, ...]
    weights: np.ndarray
    sigma2: float
    per_record: np.ndarray
    dropped: tuple[str, ...]

    @property
    def loglik(self) -> float:
        return float(np.sum(self.per_record))


def lag_column(name: str, lag: int) -> str:
    return f"{name}@lag{lag}"


def lag_presence_column(lag: int) -> str:
    return f"has:lag{lag}"


def _independent_columns(X: np.ndarray, names: Sequence[str], tol: float = 1e-10):
    """Greedy left-to-right selection of linearly independent columns."""
    kept: list[int] = []
    dropped: list[str] = []
    basis = np.empty((X.shape[0], 0))
    for j in range(X.shape[1]):
        col = X[:, j]
        norm = np.linalg.norm(col)
        resid = col - basis @ (basis.T @ col)
        if norm == 0.0 or np.linalg.norm(resid) <= tol * max(norm, 1.0):
            dropped.append(names[j])
            warnings.warn(f"dropping collinear column {names[j]!r}", stacklevel=3)
            continue
        kept.append(j)
        basis = np.concatenate([basis, (resid / np.linalg.norm(resid))[:, None]], axis=1)
    return kept, dropped


def extend_with_lags(design: np.ndarray, groups: Sequence[int], columns: Sequence[str],
                     spillover: Sequence[str], lags: int) -> tuple[np.ndarray, tuple[str, ...]]:
    """Append lagged spillover columns and lag-presence indicators.

    ``groups`` labels each row's sequence; lags never cross a group boundary.
    """
    design = np.asarray(design, dtype=float)
    groups = np.asarray(groups)
    names = list(columns)
    missing = [k for k in spillover if k not in names]
    if missing:
        raise ValidationError(f"spillover columns {missing} not in the design")
    blocks = [design]
    out_names = list(names)
    for j in range(1, lags + 1):
        for name in spillover:
            src = design[:, names.index(name)]
            lagged = np.zeros_like(src)
            lagged[j:] = src[:-j]
            same = np.zeros(len(src), dtype=bool)
            same[j:] = groups[j:] == groups[:-j]
            lagged[~same] = 0.0
            blocks.append(lagged[:, None])
            out_names.append(lag_column(name, j))
    for j in range(1, lags + 1):
        present = np.zeros(design.shape[0])
        present[j:] = (groups[j:] == groups[:-j]).astype(float)
        blocks.append(present[:, None])
        out_names.append(lag_presence_column(j))
    return np.concatenate(blocks, axis=1), tuple(out_names)


def fit_linear_log(values: np.ndarray, design: np.ndarray,
                   columns: Sequence[str]) -> LinearDurationFit:
    """Ordinary least squares of log(values) on the design; variance by MLE."""
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0):
        raise ValidationError("all response values must be > 0")
    design = np.asarray(design, dtype=float)
    n = values.shape[0]
    if n == 0:
        raise ValidationError("cannot fit on zero records")
    y = np.log(values)
    kept, dropped = _independent_columns(design, list(columns))
    coef = np.zeros(design.shape[1])
    sub = design[:, kept]
    sol, _, _, _ = np.linalg.lstsq(sub, y, rcond=None)
    coef[kept] = sol
    fitted = design @ coef
    rss = float(np.sum((y - fitted) ** 2))
    sigma2 = max(rss / n, 1e-12)
    per = lognormal_logpdf(values, fitted, sigma2)
    return LinearDurationFit(tuple(columns), coef, sigma2, np.atleast_1d(per), tuple(dropped))


def fit_linear_aggregated(records: Sequence[AggregatedRecord], design: np.ndarray,
                          columns: Sequence[str], lags: int = 0,
                          spillover: Sequence[str] = ()) -> LinearDurationFit:
    """Fit log reading times on predictors plus fixed-lag spillover columns.

    ``design`` has one row per record in the given order; lagged columns are
    built within each (reader, text) record sequence.
    """
    if not records:
        raise ValidationError("cannot fit on zero records")
    design = np.asarray(design, dtype=float)
    if design.shape[0] != len(records):
        raise ValidationError("design rows must match the record count")
    key_ids: dict[tuple[str, str], int] = {}
    groups = np.empty(len(records), dtype=int)
    for i, rec in enumerate(records):
        key = (rec.reader_id, rec.text_id)
        groups[i] = key_ids.setdefault(key, len(key_ids))
    if lags > 0 and spillover:
        full, names = extend_with_lags(design, groups, columns, spillover, lags)
    else:
        full, names = design, tuple(columns)
    values = np.array([rec.value for rec in records], dtype=float)
    return fit_linear_log(values, full, names)
