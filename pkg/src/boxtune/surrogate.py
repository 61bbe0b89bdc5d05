"""Mixed-type distances, the Matern-5/2 kernel, and Gaussian-process surrogate.

Distances per parameter kind:

* numeric (real/integer/ordinal): absolute difference of the normalized
  (optionally log) coordinates,
* categorical: the indicator ``1{a != b}``,
* permutation: one of the Kendall / Spearman / positional-Hamming semimetrics
  normalized by its maximum over all permutation pairs, or the naive
  whole-permutation indicator.

The kernel combines them through the weighted norm
``d = sqrt(sum_i d_i^2 / l_i^2)`` and applies Matern-5/2:
``k(x, x') = sigma * (1 + sqrt(5) d + 5 d^2 / 3) * exp(-sqrt(5) d)``.

The per-parameter distances are arranged so that every ``d_i^2`` is a genuine
squared Euclidean distance in some embedding (permutation semimetrics are of
negative type, so their square roots embed isometrically; the categorical
indicator is half a squared one-hot distance).  The combined ``d`` is then a
Euclidean metric and the Gram matrix is positive semi-definite for any
lengthscales, which the test suite checks empirically per metric.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, get_lapack_funcs, solve_triangular
from scipy.optimize import minimize
from scipy.special import gammaincinv, gammaln

from .space import Parameter, SearchSpace

SQRT5 = math.sqrt(5.0)
JITTER = 1e-9          # always added to the Gram diagonal
NOISE_FLOOR = 1e-6     # smallest usable noise variance

# multistart hyperparameter search budget
N_CANDIDATES = 64
N_TOP = 8
MAX_OPT_ITERS = 50
OPT_TOL = 1e-6


class SurrogateError(RuntimeError):
    """Gaussian-process fitting or prediction failure."""


# --------------------------------------------------------------------------
# permutation semimetrics (raw, un-normalized)
# --------------------------------------------------------------------------

def kendall_distance(a, b) -> int:
    """Number of discordant pairs between two permutations."""
    m = len(a)
    count = 0
    for i in range(m):
        for j in range(i + 1, m):
            if (a[i] < a[j]) != (b[i] < b[j]):
                count += 1
    return count


def spearman_distance(a, b) -> int:
    """Sum of squared element movements between two permutations."""
    return sum((x - y) ** 2 for x, y in zip(a, b))


def hamming_permutation_distance(a, b) -> int:
    """Number of positions whose element changed between two permutations."""
    return sum(1 for x, y in zip(a, b) if x != y)


def permutation_metric_max(metric: str, m: int) -> float:
    """Maximum of a semimetric over all pairs of permutations of ``m`` elements."""
    if metric == "kendall":
        return m * (m - 1) / 2.0
    if metric == "spearman":
        return m * (m * m - 1) / 3.0
    if metric == "hamming":
        return float(m)
    if metric == "naive":
        return 1.0
    raise ValueError(f"unknown permutation metric {metric!r}")


# --------------------------------------------------------------------------
# scalar distance / kernel (the reference path; batched versions below)
# --------------------------------------------------------------------------

def _effective_param(param: Parameter, use_transforms: bool) -> Parameter:
    if use_transforms or param.transform == "none":
        return param
    return replace(param, transform="none")


def distance(param: Parameter, a, b, use_transforms: bool = True) -> float:
    """Distance between two values of one parameter, as used by the kernel.

    Numeric values are compared on their normalized coordinates.  Permutation
    values yield the square root of the max-normalized semimetric so that the
    squared contribution inside the kernel's weighted norm is the semimetric
    itself (this keeps the Gram matrix positive semi-definite).
    """
    from .space import transform_value

    if param.is_numeric:
        p = _effective_param(param, use_transforms)
        return abs(transform_value(p, a) - transform_value(p, b))
    if param.kind == "categorical":
        return 0.0 if a == b else 1.0
    metric = param.permutation_metric
    if metric == "kendall":
        raw = kendall_distance(a, b)
    elif metric == "spearman":
        raw = spearman_distance(a, b)
    elif metric == "hamming":
        raw = hamming_permutation_distance(a, b)
    else:
        raw = 0.0 if tuple(a) == tuple(b) else 1.0
    return math.sqrt(raw / permutation_metric_max(metric, param.size))


@dataclass(frozen=True)
class GPHyperparameters:
    """Kernel hyperparameters: outputscale, noise variance, one lengthscale per parameter."""

    outputscale: float
    noise_variance: float
    lengthscales: tuple

    def __post_init__(self):
        if self.outputscale <= 0:
            raise ValueError("outputscale must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise variance must be non-negative")
        if any(l <= 0 for l in self.lengthscales):
            raise ValueError("lengthscales must be positive")


def matern52(d):
    """Matern-5/2 correlation at (weighted) distance ``d``; equals 1 at d=0."""
    d = np.asarray(d, float)
    return (1.0 + SQRT5 * d + (5.0 / 3.0) * d * d) * np.exp(-SQRT5 * d)


def kernel(space: SearchSpace, x, x2, h: GPHyperparameters,
           use_transforms: bool = True) -> float:
    """Covariance between two configurations; ``kernel(space, x, x, h) == outputscale``."""
    w = 0.0
    for i, p in enumerate(space.parameters):
        di = distance(p, x[i], x2[i], use_transforms)
        w += (di / h.lengthscales[i]) ** 2
    d = math.sqrt(w)
    return h.outputscale * float(matern52(d))


# --------------------------------------------------------------------------
# batched per-parameter squared distances
# --------------------------------------------------------------------------

def _numeric_coords(param: Parameter, values, use_transforms: bool) -> np.ndarray:
    lo, hi = param.numeric_bounds()
    v = np.asarray(values, float)
    if param.transform == "log" and use_transforms:
        v, lo, hi = np.log(v), math.log(lo), math.log(hi)
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def pairwise_sq_distances(space: SearchSpace, A, B,
                          use_transforms: bool = True) -> np.ndarray:
    """Per-parameter squared distances, shape ``(D, len(A), len(B))``.

    Entry ``[i, a, b]`` equals ``distance(param_i, A[a][i], B[b][i]) ** 2``.
    """
    q, n = len(A), len(B)
    out = np.empty((space.dimension, q, n))
    for i, p in enumerate(space.parameters):
        col_a = [cfg[i] for cfg in A]
        col_b = [cfg[i] for cfg in B]
        if p.is_numeric:
            ta = _numeric_coords(p, col_a, use_transforms)
            tb = _numeric_coords(p, col_b, use_transforms)
            diff = ta[:, None] - tb[None, :]
            out[i] = diff * diff
        elif p.kind == "categorical":
            codes = {v: k for k, v in enumerate(p.values)}
            ca = np.array([codes[v] for v in col_a])
            cb = np.array([codes[v] for v in col_b])
            out[i] = (ca[:, None] != cb[None, :]).astype(float)
        else:
            pa = np.asarray(col_a, int)
            pb = np.asarray(col_b, int)
            out[i] = _perm_sq_distances(p, pa, pb)
    return out


def _perm_sq_distances(param: Parameter, pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    m = param.size
    metric = param.permutation_metric
    mx = permutation_metric_max(metric, m)
    if metric == "spearman":
        raw = (np.einsum("ik,ik->i", pa, pa)[:, None]
               + np.einsum("ik,ik->i", pb, pb)[None, :]
               - 2.0 * pa @ pb.T)
    elif metric == "hamming":
        raw = (pa[:, None, :] != pb[None, :, :]).sum(-1).astype(float)
    elif metric == "kendall":
        iu, ju = np.triu_indices(m, 1)
        oa = (pa[:, iu] < pa[:, ju]).astype(float)
        ob = (pb[:, iu] < pb[:, ju]).astype(float)
        raw = oa.sum(1)[:, None] + ob.sum(1)[None, :] - 2.0 * oa @ ob.T
    else:  # naive indicator
        raw = (~(pa[:, None, :] == pb[None, :, :]).all(-1)).astype(float)
    return np.maximum(raw, 0.0) / mx


def _weighted_sq_norm(sq_dists: np.ndarray, lengthscales) -> np.ndarray:
    inv = 1.0 / np.asarray(lengthscales, float) ** 2
    return np.einsum("kab,k->ab", sq_dists, inv)


# --------------------------------------------------------------------------
# lengthscale prior
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LengthscalePrior:
    """Gamma prior applied independently to every lengthscale.

    The default Gamma(shape=2, rate=2) has mode 0.5 on the normalized
    coordinate scale, zero density at 0, and long tails both ways; it keeps
    the fitted lengthscales away from the degenerate near-zero regime where
    the GP collapses into a lookup table.
    """

    shape: float = 2.0
    rate: float = 2.0

    def log_density(self, value: float) -> float:
        k, beta = self.shape, self.rate
        return (k * math.log(beta) + (k - 1.0) * math.log(value)
                - beta * value - float(gammaln(k)))

    def quantile(self, q: float) -> float:
        return float(gammaincinv(self.shape, q)) / self.rate


# --------------------------------------------------------------------------
# GP model
# --------------------------------------------------------------------------

def _standardize(y: np.ndarray):
    mu = float(np.mean(y))
    sd = float(np.std(y))
    if not np.isfinite(sd) or sd < 1e-12:
        sd = 1.0  # constant outputs degenerate gracefully
    return (y - mu) / sd, mu, sd


class GPModel:
    """Gaussian process over configurations with a cached Cholesky factorization.

    Training outputs are standardized to zero mean / unit variance; with
    ``log_objective`` the natural log is applied first, in which case
    predictions live in log-objective units (``objective_to_model`` maps an
    objective value onto the same scale).  Predictions are de-standardized.
    Immutable after construction; predictions are safe to call concurrently.
    """

    def __init__(self, space: SearchSpace, configs, y,
                 hyperparameters: GPHyperparameters, *,
                 log_objective: bool = False, use_transforms: bool = True):
        if len(configs) != len(y):
            raise SurrogateError("configs and outputs differ in length")
        if len(configs) < 1:
            raise SurrogateError("need at least one training point")
        self.space = space
        self.configs = list(configs)
        self.hyperparameters = hyperparameters
        self.log_objective = log_objective
        self.use_transforms = use_transforms
        y = np.asarray(y, float)
        if log_objective:
            if np.any(y <= 0):
                raise SurrogateError("log objective transform requires positive outputs")
            y = np.log(y)
        self.y_model = y
        self.z, self.y_mean, self.y_std = _standardize(y)
        self.noise = max(hyperparameters.noise_variance, NOISE_FLOOR)
        self._train_sq = pairwise_sq_distances(space, self.configs, self.configs,
                                               use_transforms)
        W = _weighted_sq_norm(self._train_sq, hyperparameters.lengthscales)
        K = hyperparameters.outputscale * matern52(np.sqrt(np.maximum(W, 0.0)))
        K[np.diag_indices_from(K)] += self.noise + JITTER
        try:
            self._cho = cho_factor(K, lower=True)
        except np.linalg.LinAlgError as exc:
            raise SurrogateError(f"Gram matrix not positive definite: {exc}") from exc
        self.alpha = cho_solve(self._cho, self.z)

    # -- units ---------------------------------------------------------------
    def objective_to_model(self, value: float) -> float:
        """Map an objective value onto the model's (possibly log) output scale."""
        if self.log_objective:
            if value <= 0:
                raise SurrogateError("log objective transform requires positive values")
            return math.log(value)
        return float(value)

    # -- prediction ----------------------------------------------------------
    def predict_batch(self, configs, include_noise: bool = False):
        """Posterior means and variances at many configurations (de-standardized)."""
        h = self.hyperparameters
        sq = pairwise_sq_distances(self.space, configs, self.configs,
                                   self.use_transforms)
        W = _weighted_sq_norm(sq, h.lengthscales)
        k_star = h.outputscale * matern52(np.sqrt(np.maximum(W, 0.0)))
        mean = k_star @ self.alpha
        v = solve_triangular(self._cho[0], k_star.T, lower=True)
        var = h.outputscale - np.einsum("ij,ij->j", v, v)
        var = np.maximum(var, 0.0)
        if include_noise:
            var = var + self.noise
        return self.y_mean + self.y_std * mean, (self.y_std ** 2) * var

    def predict(self, cfg, include_noise: bool = False):
        mean, var = self.predict_batch([cfg], include_noise)
        return float(mean[0]), float(var[0])


def gp_predict(model: GPModel, cfg, include_noise: bool = False):
    """Posterior (mean, variance) at one configuration, in de-standardized units."""
    return model.predict(cfg, include_noise)


# --------------------------------------------------------------------------
# marginal likelihood / posterior and its gradient
# --------------------------------------------------------------------------

_EYE_CACHE: dict = {}


def _eye(n: int) -> np.ndarray:
    if n not in _EYE_CACHE:
        _EYE_CACHE[n] = np.eye(n)
    return _EYE_CACHE[n]


_TRTRS = get_lapack_funcs("trtrs", dtype=np.float64)


def _lml_core(sq_dists, z, sigma, noise, lengthscales, want_grad=False,
              prior: LengthscalePrior | None = None):
    """Log marginal likelihood of standardized targets (optionally + prior, grad).

    Gradients are returned with respect to the logs of (sigma, noise, l_1..l_D).
    This is the fitter's hot path: raw LAPACK triangular solves, no checking.
    """
    n = len(z)
    noise = max(noise, NOISE_FLOOR)
    W = _weighted_sq_norm(sq_dists, lengthscales)
    d = np.sqrt(np.maximum(W, 0.0))
    E = np.exp(-SQRT5 * d)
    K = sigma * ((1.0 + SQRT5 * d + (5.0 / 3.0) * W) * E)
    Ky = K.copy()
    idx = np.arange(n)
    Ky[idx, idx] += noise + JITTER
    L = np.linalg.cholesky(Ky)
    u, _ = _TRTRS(L, z, lower=1)
    alpha, _ = _TRTRS(L, u, lower=1, trans=1)
    lml = (-0.5 * float(z @ alpha)
           - float(np.log(L[idx, idx]).sum())
           - 0.5 * n * math.log(2.0 * math.pi))
    value = lml
    ls = np.asarray(lengthscales, float)
    if prior is not None:
        k, beta = prior.shape, prior.rate
        value += float(len(ls) * (k * math.log(beta) - gammaln(k))
                       + (k - 1.0) * np.log(ls).sum() - beta * ls.sum())
    if not want_grad:
        return value
    Linv, _ = _TRTRS(L, _eye(n), lower=1)
    M = np.outer(alpha, alpha) - Linv.T @ Linv           # alpha alpha^T - Ky^-1
    grad = np.empty(2 + len(ls))
    grad[0] = 0.5 * float(np.einsum("ij,ij->", M, K))          # d/dlog sigma
    grad[1] = 0.5 * noise * float(np.einsum("ii->", M))        # d/dlog noise
    # dK/dW = -(5/6) sigma (1 + sqrt5 d) E, finite at d == 0; the -2/l^2 factor
    # from dW/dlog l flips the sign
    MG = M * ((1.0 + SQRT5 * d) * E)
    scale = (5.0 / 6.0) * sigma
    for i, l in enumerate(ls):
        g = (scale / (l * l)) * float(np.einsum("ij,ij->", MG, sq_dists[i]))
        if prior is not None:
            g += (prior.shape - 1.0) - prior.rate * l
        grad[2 + i] = g
    return value, grad


def log_marginal_posterior(space: SearchSpace, configs, y, h: GPHyperparameters,
                           prior: LengthscalePrior | None = None,
                           use_transforms: bool = True) -> float:
    """Log marginal likelihood of ``y`` under ``(K + noise I)`` plus the prior term.

    Operates on ``y`` exactly as given (no standardization or log transform).
    Raises :class:`SurrogateError` when the Gram matrix is numerically
    indefinite, which the fitter treats as a rejected candidate.
    """
    sq = pairwise_sq_distances(space, configs, configs, use_transforms)
    try:
        return float(_lml_core(sq, np.asarray(y, float), h.outputscale,
                               h.noise_variance, h.lengthscales, prior=prior))
    except np.linalg.LinAlgError as exc:
        raise SurrogateError(f"Gram matrix not positive definite: {exc}") from exc


def _batched_coarse_lml(sq_dists, z, thetas):
    """LML for many hyperparameter candidates at once; -inf where factorization fails.

    ``thetas`` has rows ``(log sigma, log noise, log l_1 .. log l_D)``.
    """
    n = len(z)
    c = thetas.shape[0]
    sigma = np.exp(thetas[:, 0])
    noise = np.maximum(np.exp(thetas[:, 1]), NOISE_FLOOR)
    inv_sq = np.exp(-2.0 * thetas[:, 2:])                      # (c, D)
    W = np.einsum("kab,ck->cab", sq_dists, inv_sq)
    d = np.sqrt(np.maximum(W, 0.0))
    K = sigma[:, None, None] * (1.0 + SQRT5 * d + (5.0 / 3.0) * W) * np.exp(-SQRT5 * d)
    idx = np.arange(n)
    K[:, idx, idx] += noise[:, None] + JITTER
    out = np.full(c, -np.inf)
    try:
        L = np.linalg.cholesky(K)
        ok = np.arange(c)
    except np.linalg.LinAlgError:
        oks, mats = [], []
        for i in range(c):
            try:
                mats.append(np.linalg.cholesky(K[i]))
                oks.append(i)
            except np.linalg.LinAlgError:
                continue
        if not oks:
            return out
        ok = np.array(oks)
        L = np.stack(mats)
    zcol = np.broadcast_to(z[:, None], (len(ok), n, 1))
    u = np.linalg.solve(L, np.ascontiguousarray(zcol))[..., 0]
    quad = np.einsum("ci,ci->c", u, u)
    logdet = 2.0 * np.log(L[:, idx, idx]).sum(1)
    out[ok] = -0.5 * quad - 0.5 * logdet - 0.5 * n * math.log(2.0 * math.pi)
    return out


def _prior_term(thetas, prior: LengthscalePrior | None):
    if prior is None:
        return np.zeros(thetas.shape[0])
    ls = np.exp(thetas[:, 2:])
    k, beta = prior.shape, prior.rate
    dens = (k * math.log(beta) + (k - 1.0) * np.log(ls) - beta * ls
            - float(gammaln(k)))
    return dens.sum(1)


def _search_boxes(dim: int, prior: LengthscalePrior | None):
    """Log-space bounds for (sigma, noise, lengthscales)."""
    ref = prior if prior is not None else LengthscalePrior()
    l_lo, l_hi = ref.quantile(0.001), ref.quantile(0.999)
    lo = np.array([math.log(0.05), math.log(NOISE_FLOOR)] + [math.log(l_lo)] * dim)
    hi = np.array([math.log(20.0), math.log(0.25)] + [math.log(l_hi)] * dim)
    return lo, hi


def gp_fit(space: SearchSpace, configs, y, rng: np.random.Generator,
           prior: LengthscalePrior | None = LengthscalePrior(),
           log_objective="auto", use_transforms: bool = True,
           advanced: bool = True) -> GPModel:
    """Fit GP hyperparameters by multistart MAP ascent.

    Samples ``N_CANDIDATES`` settings log-uniformly inside prior-plausible
    boxes, keeps the ``N_TOP`` best by log marginal posterior, then refines
    each with L-BFGS-B on the log-hyperparameters (analytic gradients) up to
    ``MAX_OPT_ITERS`` iterations; the overall best wins, ties resolved by
    candidate index.  With ``advanced=False`` the refinement step is skipped
    and the best sampled candidate is used directly.
    """
    if len(configs) < 2:
        raise SurrogateError("need at least 2 feasible records to fit a GP")
    y = np.asarray(y, float)
    if log_objective == "auto":
        log_objective = bool(np.all(y > 0))
    elif log_objective and np.any(y <= 0):
        raise SurrogateError("log objective transform requires positive outputs")
    y_model = np.log(y) if log_objective else y
    z, _, _ = _standardize(y_model)
    sq = pairwise_sq_distances(space, configs, configs, use_transforms)

    dim = space.dimension
    lo, hi = _search_boxes(dim, prior)
    thetas = rng.uniform(lo, hi, size=(N_CANDIDATES, 2 + dim))
    scores = _batched_coarse_lml(sq, z, thetas) + _prior_term(thetas, prior)
    if not np.any(np.isfinite(scores)):
        raise SurrogateError("all hyperparameter candidates failed numerically")
    order = np.argsort(-scores, kind="stable")[:N_TOP]

    def objective(theta):
        try:
            value, grad = _lml_core(sq, z, math.exp(theta[0]), math.exp(theta[1]),
                                    np.exp(theta[2:]), want_grad=True, prior=prior)
        except np.linalg.LinAlgError:
            return np.inf, np.zeros_like(theta)
        return -value, -grad

    best_theta, best_value = None, -np.inf
    for idx in order:
        if not np.isfinite(scores[idx]):
            continue
        theta, value = thetas[idx], scores[idx]
        if advanced:
            res = minimize(objective, theta, jac=True, method="L-BFGS-B",
                           bounds=list(zip(lo, hi)),
                           options={"maxiter": MAX_OPT_ITERS, "ftol": OPT_TOL})
            if np.isfinite(res.fun) and -res.fun > value:
                theta, value = res.x, -res.fun
        if value > best_value:
            best_theta, best_value = theta, value

    if best_theta is None:
        raise SurrogateError("all hyperparameter candidates failed numerically")
    h = GPHyperparameters(outputscale=float(math.exp(best_theta[0])),
                          noise_variance=float(math.exp(best_theta[1])),
                          lengthscales=tuple(float(v) for v in np.exp(best_theta[2:])))
    model = GPModel(space, configs, y, h, log_objective=log_objective,
                    use_transforms=use_transforms)
    model.map_value = float(best_value)
    model.start_values = scores
    return model
