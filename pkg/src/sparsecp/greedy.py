"""Greedy construction of sparse canonical models.

``sparse_rank_one`` fits a single rank-one correction by alternating over
dimensions; each inner problem is a univariate regression on the design
whose rows carry the product of the other factors, solved by the
configured backend (lasso path with leave-one-out selection, ridge with
k-fold CV, or plain OLS). ``greedy_fit`` stacks corrections and, after
each one, re-optimizes the term coefficients alpha; ``select_rank`` picks
the rank by k-fold cross validation and refits on all data.
"""

from dataclasses import dataclass, field

import numpy as np

from .bases import TensorBasis, constant_coefficients, eval_matrix
from .errors import ConstantResponse, DegenerateFactor, RankDeficient
from .linalg import as_vector, solve_least_squares
from .solvers import lasso_loo, ridge_cv
from .tensor import CanonicalModel, RankOneTerm, normalize_term, term_sparsity, term_values

REGULARIZATIONS = ("l1", "l2", "ols")
UPDATE_MODES = ("l1", "ols", "none")

# A factor whose design response has norm below this (relative to the
# incoming residual) counts as collapsed.
_ZERO_FACTOR_RTOL = 1e-13


@dataclass
class AlsConfig:
    """Settings for one alternating-least-squares rank-one fit.

    ``regularization``: "l1" (lasso path + LOO), "l2" (ridge + k-fold CV)
    or "ols". Factors start from seeded random unit vectors by default;
    ``init="constant"`` starts every factor at the flat function instead,
    which is fully deterministic but stalls on targets whose conditional
    means are constant (the alternating solves then see no signal).
    Sweeps stop when the fitted sample vector stagnates within
    ``stagnation_tol`` (relative) or after ``max_sweeps``; setting
    ``residual_target`` instead keeps sweeping while the residual norm
    exceeds it (the literal inner stopping rule, which need not terminate
    before ``max_sweeps``).
    """

    regularization: str = "l1"
    max_sweeps: int = 50
    stagnation_tol: float = 1e-12
    seed: int = 0
    init: str = "random"
    restarts: int = 3
    residual_target: float | None = None
    ridge_folds: int = 5

    def __post_init__(self):
        if self.regularization not in REGULARIZATIONS:
            raise ValueError(f"regularization must be one of {REGULARIZATIONS}")
        if self.init not in ("random", "constant"):
            raise ValueError("init must be 'random' or 'constant'")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.stagnation_tol <= 0:
            raise ValueError("stagnation_tol must be > 0")


@dataclass
class GreedyConfig:
    """Settings for the greedy rank-M construction."""

    max_rank: int = 5
    als: AlsConfig = field(default_factory=AlsConfig)
    update: str = "l1"
    cv_folds: int = 3

    def __post_init__(self):
        if self.max_rank < 1:
            raise ValueError("max_rank must be >= 1")
        if self.update not in UPDATE_MODES:
            raise ValueError(f"update must be one of {UPDATE_MODES}")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2 when rank selection is used")


@dataclass
class FitReport:
    """Per-rank diagnostics of a greedy fit."""

    per_rank_empirical_error: list = field(default_factory=list)
    cv_errors: list | None = None
    selected_rank: int | None = None
    sweeps_used: list = field(default_factory=list)
    sparsity: list = field(default_factory=list)
    stopped_early: bool = False


def _solve_inner(phi: np.ndarray, z: np.ndarray, basis_k, cfg: AlsConfig) -> np.ndarray:
    """One inner regression; returns a coefficient vector of phi's width."""
    if cfg.regularization == "l1":
        try:
            return lasso_loo(phi, z).coefficients
        except ConstantResponse:
            # constant residual: best constant multiple of the flat function
            col = phi @ constant_coefficients(basis_k)
            denom = float(col @ col)
            scale = float(col @ z) / denom if denom > 0 else 0.0
            return scale * constant_coefficients(basis_k)
    norms = np.linalg.norm(phi, axis=0)
    keep = np.flatnonzero(norms > 1e-12 * max(norms.max(initial=0.0), 1e-300))
    coef = np.zeros(phi.shape[1])
    if keep.size == 0:
        return coef
    sub = phi[:, keep]
    if cfg.regularization == "l2":
        coef[keep], _ = ridge_cv(sub, z, folds=min(cfg.ridge_folds, z.shape[0]))
        return coef
    try:
        coef[keep] = solve_least_squares(sub, z)
    except RankDeficient:
        coef[keep] = np.linalg.lstsq(sub, z, rcond=None)[0]
    return coef


def _initial_factors(basis: TensorBasis, rng: np.random.Generator | None):
    if rng is None:
        return [constant_coefficients(b) for b in basis.factors]
    factors = []
    for b in basis.factors:
        f = rng.standard_normal(b.dim)
        factors.append(f / np.linalg.norm(f))
    return factors


def sparse_rank_one(residual, points, basis: TensorBasis, cfg: AlsConfig):
    """Fit one normalized rank-one term to the residual samples.

    Alternates over dimensions; dimension j is regressed on the design
    whose rows are scaled by the product of the current other-dimension
    factor values. The alternating solves are restarted from up to
    ``cfg.restarts`` seeded initializations (the nonconvex fit has poor
    local minima) and the lowest-residual term wins; further restarts are
    skipped once a restart reproduces the residual to near machine
    precision. Returns ``(RankOneTerm, sweeps_used)``.

    Raises
    ------
    DegenerateFactor
        If the residual is zero or every restart collapses a factor to
        all zeros.
    """
    z = as_vector(residual)
    coords = getattr(points, "points", points)
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    if z.shape[0] != coords.shape[0]:
        raise ValueError("residual length does not match sample count")
    if z.shape[0] < 2:
        raise ValueError("need at least two samples")
    z_scale = np.linalg.norm(z)
    if z_scale == 0.0:
        raise DegenerateFactor("residual is identically zero")
    basis_rows = [eval_matrix(b, coords[:, k]) for k, b in enumerate(basis.factors)]
    rng = np.random.default_rng(cfg.seed)
    if cfg.restarts == 1 or z.shape[0] < 10:
        use_rng = None if cfg.init == "constant" else rng
        try:
            term, sweeps, _ = _als_sweeps(z, basis_rows, basis, cfg, rng=use_rng)
        except DegenerateFactor:
            term, sweeps, _ = _als_sweeps(z, basis_rows, basis, cfg, rng=rng)
        return term, sweeps

    # Restarts are compared on a deterministic holdout: the sample
    # residual alone rewards dense overfitted local minima over sparse
    # terms that generalize.
    hold = np.arange(z.shape[0]) % 5 == 4
    train_rows = [rows[~hold] for rows in basis_rows]
    hold_rows = [rows[hold] for rows in basis_rows]
    z_train, z_hold = z[~hold], z[hold]
    best = None
    for attempt in range(cfg.restarts):
        use_rng = None if (attempt == 0 and cfg.init == "constant") else rng
        try:
            term, _, train_resid = _als_sweeps(z_train, train_rows, basis, cfg, rng=use_rng)
        except DegenerateFactor:
            continue
        w_train = _factor_product(train_rows, term.factors)
        w_hold = _factor_product(hold_rows, term.factors)
        denom = float(w_train @ w_train)
        alpha = float(w_train @ z_train) / denom if denom > 0 else 0.0
        score = float(np.linalg.norm(z_hold - alpha * w_hold))
        if best is None or score < best[1]:
            best = (term, score)
        if score <= 1e-11 * z_scale and train_resid <= 1e-11 * np.linalg.norm(z_train):
            break
    if best is None:
        raise DegenerateFactor("every restart collapsed to a zero factor")
    # re-polish the winning trajectory on all samples
    term, sweeps, _ = _als_sweeps(z, basis_rows, basis, cfg, rng=None,
                                  init_factors=[f.copy() for f in best[0].factors])
    return term, sweeps


def _factor_product(basis_rows, factors) -> np.ndarray:
    out = np.ones(basis_rows[0].shape[0])
    for rows, f in zip(basis_rows, factors):
        out = out * (rows @ f)
    return out


def _als_sweeps(z, basis_rows, basis, cfg: AlsConfig, rng, init_factors=None):
    d = basis.ndim
    z_scale = np.linalg.norm(z)
    factors = init_factors if init_factors is not None else _initial_factors(basis, rng)
    values = [rows @ f for rows, f in zip(basis_rows, factors)]
    fitted_prev = None
    sweeps = 0
    for sweep in range(cfg.max_sweeps):
        sweeps = sweep + 1
        for j in range(d):
            weight = np.ones(z.shape[0])
            for k in range(d):
                if k != j:
                    weight = weight * values[k]
            phi = basis_rows[j] * weight[:, None]
            coef = _solve_inner(phi, z, basis.factors[j], cfg)
            response = basis_rows[j] @ coef
            if np.linalg.norm(coef) == 0.0 or (
                np.linalg.norm(response * weight) < _ZERO_FACTOR_RTOL * z_scale
            ):
                raise DegenerateFactor(f"factor {j} collapsed during sweep {sweeps}")
            factors[j] = coef
            values[j] = response
        fitted = np.ones(z.shape[0])
        for k in range(d):
            fitted = fitted * values[k]
        if fitted_prev is not None:
            if cfg.residual_target is not None:
                if np.linalg.norm(z - fitted) <= cfg.residual_target:
                    break
            elif np.linalg.norm(fitted - fitted_prev) <= cfg.stagnation_tol * np.linalg.norm(fitted):
                break
        fitted_prev = fitted
    term, _ = normalize_term(factors)
    return term, sweeps, float(np.linalg.norm(z - fitted))


def update_coefficients(terms, basis: TensorBasis, points, z, mode: str,
                        prev_alphas=None) -> np.ndarray:
    """Re-optimize the m term coefficients alpha on the full samples.

    ``mode`` "l1" runs the lasso path with LOO selection on the term-value
    matrix (entries of alpha may come back exactly zero, lowering the
    effective rank), "ols" refits densely, and "none" keeps
    ``prev_alphas`` and appends the new term's optimal scalar against the
    residual they leave.
    """
    if mode not in UPDATE_MODES:
        raise ValueError(f"mode must be one of {UPDATE_MODES}")
    z = as_vector(z)
    if not terms:
        raise ValueError("need at least one term")
    if prev_alphas is None:
        prev_alphas = np.zeros(len(terms) - 1)
    prev_alphas = as_vector(prev_alphas)
    if mode == "none" and prev_alphas.shape[0] != len(terms) - 1:
        raise ValueError("mode 'none' needs the previous m-1 coefficients")
    w = term_values(terms, basis, points)
    return _update_alphas(w, z, mode, prev_alphas)


def _update_alphas(w: np.ndarray, z: np.ndarray, mode: str, prev_alphas: np.ndarray) -> np.ndarray:
    m = w.shape[1]
    if mode == "l1":
        return lasso_loo(w, z).coefficients
    if mode == "ols":
        norms = np.linalg.norm(w, axis=0)
        keep = np.flatnonzero(norms > 1e-12 * max(norms.max(initial=0.0), 1e-300))
        alphas = np.zeros(m)
        if keep.size:
            try:
                alphas[keep] = solve_least_squares(w[:, keep], z)
            except RankDeficient:
                alphas[keep] = np.linalg.lstsq(w[:, keep], z, rcond=None)[0]
        return alphas
    alphas = np.zeros(m)
    alphas[: m - 1] = prev_alphas
    col = w[:, m - 1]
    resid = z - w[:, : m - 1] @ prev_alphas
    denom = float(col @ col)
    alphas[m - 1] = float(col @ resid) / denom if denom > 0 else 0.0
    return alphas


def greedy_fit(points, z, basis: TensorBasis, cfg: GreedyConfig):
    """Greedy rank-one corrections with per-rank coefficient updates.

    Returns ``(models, report)`` where ``models[m-1]`` is the rank-m
    canonical model u_m (m = 1..M, fewer if a correction degenerates) and
    the report carries empirical errors, sweep counts and per-term
    sparsity ratios.
    """
    z = as_vector(z)
    coords = getattr(points, "points", points)
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    z_norm = np.linalg.norm(z)
    report = FitReport()
    models = []
    terms = []
    alphas = np.zeros(0)
    w = np.zeros((z.shape[0], 0))
    fitted = np.zeros(z.shape[0])
    for m in range(1, cfg.max_rank + 1):
        residual = z - fitted
        try:
            term, sweeps = sparse_rank_one(residual, coords, basis, cfg.als)
        except DegenerateFactor:
            report.stopped_early = True
            break
        terms.append(term)
        w = np.hstack([w, term_values([term], basis, coords)])
        alphas = _update_alphas(w, z, cfg.update, alphas)
        models.append(CanonicalModel(basis, tuple(terms), alphas.copy()))
        fitted = w @ alphas
        err = np.linalg.norm(z - fitted) / z_norm if z_norm > 0 else 0.0
        report.per_rank_empirical_error.append(float(err))
        report.sweeps_used.append(sweeps)
        report.sparsity.append(term_sparsity(term))
    return models, report


def _cv_folds(q: int, folds: int, seed: int):
    """Round-robin fold assignment over a seeded shuffle of the samples."""
    order = np.random.default_rng(seed).permutation(q)
    assignment = np.empty(q, dtype=int)
    assignment[order] = np.arange(q) % folds
    return assignment


def cv_rank_errors(points, z, basis: TensorBasis, cfg: GreedyConfig) -> np.ndarray:
    """k-fold mean squared validation error per rank m = 1..M.

    Each fold is fit on the remaining samples; a fold whose greedy run
    stopped before rank m is scored with its deepest available model.
    """
    z = as_vector(z)
    coords = getattr(points, "points", points)
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    q = z.shape[0]
    if q < 2 * cfg.cv_folds:
        raise ValueError(f"need Q >= {2 * cfg.cv_folds} samples for {cfg.cv_folds} folds")
    assignment = _cv_folds(q, cfg.cv_folds, cfg.als.seed)
    scores = np.zeros((cfg.cv_folds, cfg.max_rank))
    for f in range(cfg.cv_folds):
        hold = assignment == f
        models, _ = greedy_fit(coords[~hold], z[~hold], basis, cfg)
        z_val = z[hold]
        for m in range(1, cfg.max_rank + 1):
            if models:
                model = models[min(m, len(models)) - 1]
                pred = _model_values(model, coords[hold])
            else:
                pred = np.zeros(z_val.shape[0])
            scores[f, m - 1] = float(np.mean((z_val - pred) ** 2))
    return scores.mean(axis=0)


def pick_rank(cv_errors) -> int:
    """Smallest rank within a 1e-9 relative band of the minimal CV error.

    CV errors that agree to nine digits are estimation noise, not signal,
    so near-ties resolve toward the lower rank.
    """
    cv_errors = np.asarray(cv_errors, dtype=float)
    best = float(cv_errors.min())
    return int(np.flatnonzero(cv_errors <= best * (1.0 + 1e-9))[0]) + 1


def select_rank(points, z, basis: TensorBasis, cfg: GreedyConfig):
    """k-fold cross-validated rank selection, then a full-data refit.

    Returns ``(m_op, model, report)`` where the report also carries the
    full-data empirical errors and the per-rank CV errors.
    """
    cv_errors = cv_rank_errors(points, z, basis, cfg)
    m_op = pick_rank(cv_errors)
    models, report = greedy_fit(points, z, basis, cfg)
    report.cv_errors = [float(e) for e in cv_errors]
    report.selected_rank = m_op
    if not models:
        return m_op, CanonicalModel(basis), report
    model = models[min(m_op, len(models)) - 1]
    return m_op, model, report


def _model_values(model: CanonicalModel, coords) -> np.ndarray:
    if model.rank == 0:
        return np.zeros(np.atleast_2d(coords).shape[0])
    return term_values(model.terms, model.basis, coords) @ model.alphas
