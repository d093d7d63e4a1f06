"""Regression backends: OLS, ridge with k-fold CV, and the lasso path.

The lasso path follows the homotopy form of least angle regression with
the lasso modification (variables drop when a coefficient crosses zero).
The objective is ``||z - Phi v||_2^2 + lambda ||v||_1`` with no 1/2 and no
1/Q factor, so the stationarity conditions read ``|phi_i^T r| = lambda/2``
on the active set and ``<= lambda/2`` off it.

Columns are rescaled to unit Euclidean norm before tracing the path (the
equiangular geometry assumes it, and alternating-least-squares designs are
far from normalized); reported ``lam`` values and the KKT certificate
refer to that unit-norm problem, while step coefficients are returned in
the caller's original column scaling.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllStepsInvalid,
    ConstantResponse,
    DegenerateColumn,
    RankDeficient,
)
from .linalg import as_matrix, as_vector, hat_diagonal, solve_least_squares

# Relative floor below which a path lambda counts as zero.
_LAM_FLOOR = 1e-14
# Hat-matrix leverages above 1 - _LEVERAGE_TOL invalidate a step.
_LEVERAGE_TOL = 1e-10
# sigma(z) below 1e-14 * max(1, |z|_inf) means a constant response.
_CONSTANT_RTOL = 1e-14


@dataclass
class PathStep:
    """One breakpoint of the lasso regularization path.

    ``coefficients`` are in the original column scaling; ``lam`` is the
    penalty of the internally normalized problem at this breakpoint;
    ``loo_error`` is filled by ``loo_select`` (inf marks skipped steps).
    """

    coefficients: np.ndarray
    active_set: list
    lam: float
    loo_error: float | None = None


@dataclass
class RegularizationPath:
    """Lasso path breakpoints in order of decreasing penalty."""

    steps: list
    column_norms: np.ndarray

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)


@dataclass
class SelectedSolution:
    """Leave-one-out winner of a path, refit by OLS on its active set."""

    coefficients: np.ndarray
    active_set: list
    loo_error: float
    step_index: int


def ols(phi, z) -> np.ndarray:
    """Ordinary least squares; delegates to the QR solver."""
    return solve_least_squares(phi, z)


def _ridge_solve(phi: np.ndarray, z: np.ndarray, lam: float) -> np.ndarray:
    """Minimize ||z - Phi v||^2 + lam ||v||^2 via the augmented system."""
    if lam < 0:
        raise ValueError("ridge penalty must be >= 0")
    if lam == 0.0:
        try:
            return solve_least_squares(phi, z)
        except RankDeficient:
            return np.linalg.lstsq(phi, z, rcond=None)[0]
    p = phi.shape[1]
    aug = np.vstack([phi, math.sqrt(lam) * np.eye(p)])
    rhs = np.concatenate([z, np.zeros(p)])
    return solve_least_squares(aug, rhs)


def default_ridge_grid(phi) -> np.ndarray:
    """10 log-spaced penalties in [1e-8, 1e2] times the Gram infinity norm."""
    phi = as_matrix(phi)
    scale = np.linalg.norm(phi.T @ phi, np.inf)
    if scale == 0.0:
        scale = 1.0
    return np.logspace(-8.0, 2.0, 10) * scale


def ridge_cv(phi, z, lambda_grid=None, folds: int = 5):
    """Ridge regression with the penalty chosen by k-fold cross validation.

    Folds are assigned round-robin by sample index (sample q goes to fold
    q mod k), which keeps the selection deterministic. Returns the
    coefficients refit on all data at the winning penalty and that penalty.
    """
    phi = as_matrix(phi)
    z = as_vector(z)
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if lambda_grid is None:
        lambda_grid = default_ridge_grid(phi)
    lambda_grid = [float(l) for l in lambda_grid]
    if not lambda_grid or any(l < 0 for l in lambda_grid):
        raise ValueError("lambda_grid must be nonempty with penalties >= 0")
    q = z.shape[0]
    fold_of = np.arange(q) % folds
    scores = []
    for lam in lambda_grid:
        mse = 0.0
        for f in range(folds):
            train = fold_of != f
            coef = _ridge_solve(phi[train], z[train], lam)
            resid = z[~train] - phi[~train] @ coef
            mse += float(np.mean(resid**2))
        scores.append(mse / folds)
    best = int(np.argmin(scores))
    chosen = lambda_grid[best]
    return _ridge_solve(phi, z, chosen), chosen


def lars_lasso_path(phi, z, max_steps: int | None = None) -> RegularizationPath:
    """Trace the lasso regularization path with the LARS homotopy.

    Emits breakpoints in order of decreasing penalty, starting from the
    all-zero solution. Stops when the penalty reaches zero, the active set
    reaches ``min(Q - 1, P)``, or ``max_steps`` events have been
    processed (default ``3 * min(Q - 1, P)``).

    Raises
    ------
    DegenerateColumn
        If a column of ``phi`` has (numerically) zero Euclidean norm.
    """
    phi = as_matrix(phi)
    z = as_vector(z)
    q, p = phi.shape
    if z.shape[0] != q:
        raise ValueError("phi and z row counts differ")
    if p < 1:
        raise ValueError("need at least one column")
    norms = np.linalg.norm(phi, axis=0)
    largest = norms.max(initial=0.0)
    if largest == 0.0 or norms.min() <= 1e-12 * largest:
        j = int(np.argmin(norms))
        raise DegenerateColumn(f"column {j} has norm {norms[j]:.3e}")
    x = phi / norms
    cap = min(q - 1, p)
    if max_steps is None:
        max_steps = 3 * cap
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")

    v = np.zeros(p)  # coefficients of the unit-norm problem
    corr = x.T @ z
    lam = 2.0 * np.max(np.abs(corr))
    steps = [PathStep(np.zeros(p), [], float(lam))]
    if lam <= _LAM_FLOOR:
        return RegularizationPath(steps, norms)
    lam_floor = _LAM_FLOOR * lam

    active: list[int] = []
    signs: dict[int, float] = {}
    blocked: set[int] = set()

    def record(current_lam: float):
        support = [j for j in active if v[j] != 0.0]
        step = PathStep((v / norms).copy(), support, float(current_lam))
        if steps and np.sum(np.abs(v)) <= np.sum(np.abs(steps[-1].coefficients * norms)):
            steps[-1] = step  # zero-length segment: keep the later state
        else:
            steps.append(step)

    events = 0
    while events < max_steps:
        events += 1
        if not active:
            corr = x.T @ z - (x.T @ (x @ v))
            candidates = [j for j in range(p) if j not in blocked]
            if not candidates:
                break
            j_star = max(candidates, key=lambda j: (abs(corr[j]), -j))
            if abs(corr[j_star]) <= lam_floor:
                break
            # with nothing active the solution stays at zero while the
            # penalty falls to the next join
            lam = min(lam, 2.0 * abs(corr[j_star]))
            active.append(j_star)
            signs[j_star] = 1.0 if corr[j_star] >= 0 else -1.0
            blocked.clear()
            continue

        idx = np.array(active)
        s_vec = np.array([signs[j] for j in active])
        g_aa = x[:, idx].T @ x[:, idx]
        try:
            chol = np.linalg.cholesky(g_aa)
        except np.linalg.LinAlgError:
            break  # active set became numerically dependent
        half_dir = np.linalg.solve(chol.T, np.linalg.solve(chol, s_vec)) / 2.0
        fit_dir = x[:, idx] @ half_dir
        resid = z - x[:, idx] @ v[idx]
        corr = x.T @ resid
        along = x.T @ fit_dir

        # earliest event along the segment v_A(t) = v_A + t * half_dir,
        # lam(t) = lam - t, for t in (0, lam]
        t_best = lam  # default: run to lam = 0
        kind, j_star = "end", -1
        for j in range(p):
            if j in signs or j in blocked:
                continue
            for target, denom in (
                (lam / 2.0 - corr[j], 0.5 - along[j]),
                (lam / 2.0 + corr[j], 0.5 + along[j]),
            ):
                if denom <= 0.0:
                    continue
                t = target / denom
                if -1e-9 * lam <= t < t_best:
                    t_best, kind, j_star = max(t, 0.0), "join", j
        for pos, j in enumerate(active):
            if half_dir[pos] == 0.0:
                continue
            t = -v[j] / half_dir[pos]
            if 0.0 < t < t_best:
                t_best, kind, j_star = t, "drop", j

        v[idx] += t_best * half_dir
        lam -= t_best

        if kind == "join":
            record(lam)
            if len(active) >= cap:
                break
            try_idx = np.append(idx, j_star)
            g_try = x[:, try_idx].T @ x[:, try_idx]
            try:
                chol_try = np.linalg.cholesky(g_try)
                diag = np.diag(chol_try)
                if diag.min() < 1e-10 * diag.max():
                    raise np.linalg.LinAlgError
            except np.linalg.LinAlgError:
                blocked.add(j_star)
                continue
            c_after = corr[j_star] - t_best * along[j_star]
            active.append(j_star)
            signs[j_star] = 1.0 if c_after >= 0 else -1.0
            blocked.clear()
        elif kind == "drop":
            v[j_star] = 0.0
            active.remove(j_star)
            del signs[j_star]
            record(lam)
            blocked = {j_star}
        else:
            record(0.0)
            break
        if lam <= lam_floor:
            if kind != "end":
                record(0.0)
            break
    return RegularizationPath(steps, norms)


def loo_select(path: RegularizationPath, phi, z) -> SelectedSolution:
    """Pick the path step with the smallest fast leave-one-out error.

    Every step is refit by OLS on its active set; with leverages h_q from
    the hat-matrix diagonal, the error is
    ``mean(((z_q - pred_q) / ((1 - h_q) * sigma(z)))^2)`` where sigma is
    the empirical standard deviation of z. Steps whose active set has Q or
    more columns, whose leverage touches 1, or whose refit is rank
    deficient are skipped (marked with an infinite error).

    Raises
    ------
    ConstantResponse
        If sigma(z) vanishes relative to ``max(1, |z|_inf)``.
    AllStepsInvalid
        If every step was skipped.
    """
    phi = as_matrix(phi)
    z = as_vector(z)
    q, p = phi.shape
    sigma = float(np.std(z, ddof=1)) if q > 1 else 0.0
    if sigma < _CONSTANT_RTOL * max(1.0, np.max(np.abs(z), initial=0.0)):
        raise ConstantResponse(f"empirical std {sigma:.3e} is numerically zero")
    best = None
    best_coef = None
    for j, step in enumerate(path.steps):
        active = list(step.active_set)
        if len(active) >= q:
            step.loo_error = math.inf
            continue
        if active:
            sub = phi[:, active]
            try:
                refit = solve_least_squares(sub, z)
            except RankDeficient:
                step.loo_error = math.inf
                continue
            leverage = hat_diagonal(sub)
            if leverage.max() > 1.0 - _LEVERAGE_TOL:
                step.loo_error = math.inf
                continue
            pred = sub @ refit
        else:
            refit = np.zeros(0)
            leverage = np.zeros(q)
            pred = np.zeros(q)
        err = float(np.mean(((z - pred) / ((1.0 - leverage) * sigma)) ** 2))
        step.loo_error = err
        if best is None or err < path.steps[best].loo_error:
            best = j
            best_coef = refit
    if best is None:
        raise AllStepsInvalid("no path step admits a leave-one-out error")
    chosen = path.steps[best]
    coefficients = np.zeros(p)
    coefficients[list(chosen.active_set)] = best_coef
    return SelectedSolution(
        coefficients=coefficients,
        active_set=list(chosen.active_set),
        loo_error=float(chosen.loo_error),
        step_index=best,
    )


def lasso_loo(phi, z, max_steps: int | None = None) -> SelectedSolution:
    """Lasso path plus leave-one-out selection in one call.

    Zero-norm columns (samples never hit their support) are excluded from
    the path and come back as zero coefficients, so alternating-least-
    squares designs can be passed as-is.
    """
    phi = as_matrix(phi)
    z = as_vector(z)
    norms = np.linalg.norm(phi, axis=0)
    keep = np.flatnonzero(norms > 1e-12 * max(norms.max(initial=0.0), 1e-300))
    if keep.size == 0:
        path = RegularizationPath([PathStep(np.zeros(0), [], 0.0)], norms)
        selected = loo_select(path, phi[:, :0], z)
        return SelectedSolution(np.zeros(phi.shape[1]), [], selected.loo_error, 0)
    path = lars_lasso_path(phi[:, keep], z, max_steps=max_steps)
    selected = loo_select(path, phi[:, keep], z)
    coefficients = np.zeros(phi.shape[1])
    coefficients[keep] = selected.coefficients
    active = [int(keep[j]) for j in selected.active_set]
    return SelectedSolution(coefficients, active, selected.loo_error, selected.step_index)
