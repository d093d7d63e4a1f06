"""Orthonormal univariate bases on intervals with uniform measure.

Three families are supported, all orthonormal with respect to the uniform
probability measure on their interval:

* ``legendre``: rescaled Legendre polynomials up to a given degree.
* ``piecewise_legendre``: Legendre polynomials rescaled onto each cell of
  a uniform partition; every basis function is supported on one cell.
* ``multiwavelet``: a multi-resolution hierarchy of piecewise polynomials.
  Level 0 holds the global Legendre polynomials; each finer level adds the
  orthonormal complement of the twice-coarser piecewise-polynomial space,
  built by Gram-Schmidt with one re-orthogonalization pass.

Pieces are half-open ``[a_i, a_{i+1})`` with the last piece closed, so
evaluation is right-continuous at breakpoints.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfDomain

# Absolute slack accepted outside the interval before OutOfDomain.
DOMAIN_SLACK = 1e-12

# Residual norm below which a Gram-Schmidt candidate is dropped as
# dependent on the accumulated basis (candidates start at unit norm).
_GS_DROP_TOL = 1e-8


@dataclass(frozen=True)
class Interval:
    """Closed interval [lower, upper] carrying the uniform measure."""

    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"need lower < upper, got [{self.lower}, {self.upper}]")

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass
class UnivariateBasis:
    """One orthonormal function family on an interval.

    Use the ``legendre_basis`` / ``piecewise_legendre_basis`` /
    ``multiwavelet_basis`` constructors rather than instantiating directly.
    """

    kind: str               # "legendre" | "piecewise_legendre" | "multiwavelet"
    degree: int
    interval: Interval
    pieces: int = 1         # uniform partition cells (piecewise kind)
    levels: int = 0         # resolution levels (multiwavelet kind)
    # multiwavelet coefficient columns in the finest piecewise basis
    _coeffs: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        if self.kind == "legendre":
            return self.degree + 1
        if self.kind == "piecewise_legendre":
            return self.pieces * (self.degree + 1)
        return (self.degree + 1) * 2 ** self.levels

    @property
    def smooth_pieces(self) -> int:
        """Number of cells on which every basis function is a polynomial."""
        if self.kind == "legendre":
            return 1
        if self.kind == "piecewise_legendre":
            return self.pieces
        return 2 ** self.levels

    def descriptor(self) -> dict:
        """JSON-ready description sufficient to rebuild the basis."""
        out = {
            "kind": self.kind,
            "degree": self.degree,
            "interval": [self.interval.lower, self.interval.upper],
        }
        if self.kind == "piecewise_legendre":
            out["pieces"] = self.pieces
        elif self.kind == "multiwavelet":
            out["levels"] = self.levels
        return out


def legendre_basis(degree: int, interval=(-1.0, 1.0)) -> UnivariateBasis:
    """Orthonormal Legendre polynomials of degree 0..p on an interval."""
    if degree < 0:
        raise ValueError("degree must be >= 0")
    return UnivariateBasis("legendre", degree, _as_interval(interval))


def piecewise_legendre_basis(degree: int, pieces: int, interval=(0.0, 1.0)) -> UnivariateBasis:
    """Piecewise Legendre polynomials on a uniform partition.

    Basis functions are indexed piece-major: the p+1 functions supported on
    the first cell come first. Each has unit L2 norm under the uniform
    probability measure on the whole interval.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    if pieces < 1:
        raise ValueError("pieces must be >= 1")
    return UnivariateBasis("piecewise_legendre", degree, _as_interval(interval), pieces=pieces)


def multiwavelet_basis(degree: int, levels: int, interval=(0.0, 1.0)) -> UnivariateBasis:
    """Piecewise-polynomial multiwavelets of degree p with L resolution levels.

    Dimension (p+1) * 2**L. The first p+1 functions are the global Legendre
    polynomials (so the first one is the constant 1); level-l wavelets span
    the orthogonal complement of the 2**l-cell piecewise space inside the
    2**(l+1)-cell one and are supported on single cells of the level-l
    partition.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    if levels < 0:
        raise ValueError("levels must be >= 0")
    basis = UnivariateBasis("multiwavelet", degree, _as_interval(interval), levels=levels)
    basis._coeffs = _multiwavelet_coefficients(degree, levels)
    return basis


def basis_from_descriptor(doc: dict) -> UnivariateBasis:
    """Inverse of ``UnivariateBasis.descriptor``."""
    kind = doc.get("kind")
    interval = tuple(doc.get("interval", ()))
    degree = doc.get("degree")
    if kind == "legendre":
        return legendre_basis(degree, interval)
    if kind == "piecewise_legendre":
        return piecewise_legendre_basis(degree, doc["pieces"], interval)
    if kind == "multiwavelet":
        return multiwavelet_basis(degree, doc["levels"], interval)
    raise ValueError(f"unknown basis kind {kind!r}")


@dataclass
class TensorBasis:
    """Tensorization of one univariate basis per input dimension."""

    factors: tuple

    def __post_init__(self):
        self.factors = tuple(self.factors)
        if not self.factors:
            raise ValueError("need at least one dimension")

    @property
    def ndim(self) -> int:
        return len(self.factors)

    @property
    def dims(self) -> tuple:
        """Per-dimension basis sizes n_k."""
        return tuple(b.dim for b in self.factors)

    @property
    def full_dimension(self) -> int:
        """Product of the n_k (reported only, never materialized)."""
        return int(np.prod([b.dim for b in self.factors], dtype=object))


def _as_interval(interval) -> Interval:
    if isinstance(interval, Interval):
        return interval
    lo, hi = interval
    return Interval(float(lo), float(hi))


def _clip_to_domain(basis: UnivariateBasis, ys: np.ndarray) -> np.ndarray:
    lo, hi = basis.interval.lower, basis.interval.upper
    below = ys < lo - DOMAIN_SLACK
    above = ys > hi + DOMAIN_SLACK
    if np.any(below) or np.any(above):
        bad = ys[below | above][0]
        raise OutOfDomain(f"point {bad!r} outside [{lo}, {hi}]")
    return np.clip(ys, lo, hi)


def _normalized_legendre_rows(ts: np.ndarray, degree: int) -> np.ndarray:
    """Rows of sqrt(2j+1) P_j(t) for t in [-1, 1]."""
    vander = np.polynomial.legendre.legvander(ts, degree)
    return vander * np.sqrt(2.0 * np.arange(degree + 1) + 1.0)


def _piece_index(basis: UnivariateBasis, ys: np.ndarray, pieces: int) -> np.ndarray:
    lo = basis.interval.lower
    rel = (ys - lo) / basis.interval.width * pieces
    return np.clip(np.floor(rel).astype(int), 0, pieces - 1)


def _piecewise_rows(ys: np.ndarray, basis: UnivariateBasis, pieces: int) -> np.ndarray:
    """Evaluation matrix of the piece-supported Legendre family."""
    p = basis.degree
    lo = basis.interval.lower
    h = basis.interval.width / pieces
    idx = _piece_index(basis, ys, pieces)
    # map each point into [-1, 1] on its own piece
    local = (ys - (lo + idx * h)) / h * 2.0 - 1.0
    local = np.clip(local, -1.0, 1.0)
    blocks = _normalized_legendre_rows(local, p) * np.sqrt(pieces)
    out = np.zeros((ys.size, pieces * (p + 1)))
    cols = idx[:, None] * (p + 1) + np.arange(p + 1)[None, :]
    np.put_along_axis(out, cols, blocks, axis=1)
    return out


def eval_matrix(basis: UnivariateBasis, ys) -> np.ndarray:
    """Evaluate all basis functions at many points: rows phi(y_q)."""
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    ys = _clip_to_domain(basis, ys)
    if basis.kind == "legendre":
        lo = basis.interval.lower
        ts = (ys - lo) / basis.interval.width * 2.0 - 1.0
        return _normalized_legendre_rows(np.clip(ts, -1.0, 1.0), basis.degree)
    if basis.kind == "piecewise_legendre":
        return _piecewise_rows(ys, basis, basis.pieces)
    fine = _piecewise_rows(ys, basis, 2 ** basis.levels)
    return fine @ basis._coeffs


def eval_univariate(basis: UnivariateBasis, y: float) -> np.ndarray:
    """Vector (phi_1(y), ..., phi_n(y)) for one point."""
    return eval_matrix(basis, [float(y)])[0]


def constant_coefficients(basis: UnivariateBasis) -> np.ndarray:
    """Coefficient vector of the constant function 1 (unit Euclidean norm)."""
    c = np.zeros(basis.dim)
    if basis.kind == "piecewise_legendre":
        c[:: basis.degree + 1] = 1.0 / np.sqrt(basis.pieces)
    else:
        c[0] = 1.0
    return c


def _gauss_nodes_weights(basis: UnivariateBasis, quad_order: int):
    """Composite Gauss-Legendre rule over the smooth pieces.

    Weights are normalized so that summing f(nodes) * weights approximates
    the mean of f under the uniform probability measure.
    """
    pieces = basis.smooth_pieces
    lo = basis.interval.lower
    h = basis.interval.width / pieces
    t, w = np.polynomial.legendre.leggauss(quad_order)
    nodes = lo + (np.arange(pieces)[:, None] + (t[None, :] + 1.0) / 2.0) * h
    weights = np.tile(w / 2.0 / pieces, pieces)
    return nodes.ravel(), weights


def gram_matrix(basis: UnivariateBasis, quad_order: int | None = None) -> np.ndarray:
    """Gram matrix of the basis under the uniform probability measure.

    Integrals are computed with a composite Gauss-Legendre rule of
    ``quad_order`` points per smooth piece (default p+1, exact for the
    degree-2p products). Orthonormal bases return the identity up to
    quadrature roundoff.
    """
    if quad_order is None:
        quad_order = basis.degree + 1
    if quad_order < basis.degree + 1:
        raise ValueError("quad_order must be at least degree + 1")
    nodes, weights = _gauss_nodes_weights(basis, quad_order)
    b = eval_matrix(basis, nodes)
    return b.T @ (weights[:, None] * b)


def design_matrix(basis: TensorBasis, points, dim: int, factor_values=None) -> np.ndarray:
    """One-dimension design matrix for the alternating least-squares step.

    Row q is phi^(dim)(y_q[dim]) scaled by the product over the other
    dimensions of ``factor_values[k][q]``. Without ``factor_values`` all
    other-dimension products are 1.

    Parameters
    ----------
    points : (Q, d) array_like or SampleSet
        Sample coordinates.
    dim : int
        Zero-based dimension whose basis spans the columns.
    factor_values : sequence of (Q,) arrays, optional
        Current factor-function values per dimension; entry ``dim`` is
        ignored.
    """
    coords = getattr(points, "points", points)
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    if coords.shape[1] != basis.ndim:
        raise ValueError(
            f"points have {coords.shape[1]} coordinates but basis has {basis.ndim}"
        )
    if not 0 <= dim < basis.ndim:
        raise ValueError(f"dim {dim} out of range for {basis.ndim} dimensions")
    phi = eval_matrix(basis.factors[dim], coords[:, dim])
    if factor_values is None:
        return phi
    scale = np.ones(coords.shape[0])
    for k, values in enumerate(factor_values):
        if k == dim:
            continue
        scale = scale * np.asarray(values, dtype=float)
    return phi * scale[:, None]


def _multiwavelet_coefficients(degree: int, levels: int) -> np.ndarray:
    """Columns: multiwavelet functions in the finest piecewise basis.

    The finest reference basis is piecewise Legendre on 2**levels cells of
    [0, 1]; since it is orthonormal, all inner products reduce to dot
    products of coefficient vectors and Gram-Schmidt never needs explicit
    quadrature beyond the projections computed here.
    """
    p = degree
    n_fine = (p + 1) * 2 ** levels
    fine = piecewise_legendre_basis(p, 2 ** levels, (0.0, 1.0))
    # evaluation of the fine basis at its own composite Gauss nodes
    nodes, weights = _gauss_nodes_weights(fine, p + 1)
    fine_rows = eval_matrix(fine, nodes)

    def project(coarse_pieces: int) -> np.ndarray:
        """Fine-basis coefficients of each coarse piecewise function."""
        coarse = piecewise_legendre_basis(p, coarse_pieces, (0.0, 1.0))
        rows = eval_matrix(coarse, nodes)
        return fine_rows.T @ (weights[:, None] * rows)

    accepted = [project(1)]  # level-0 scaling functions, exact in fine coords
    for level in range(levels):
        candidates = project(2 ** (level + 1))
        basis_so_far = np.hstack(accepted)
        kept = []
        for cand in candidates.T:
            r = cand.copy()
            for _ in range(2):  # re-orthogonalize: one pass loses digits
                r -= basis_so_far @ (basis_so_far.T @ r)
                if kept:
                    w = np.column_stack(kept)
                    r -= w @ (w.T @ r)
            norm = np.linalg.norm(r)
            if norm > _GS_DROP_TOL:
                kept.append(r / norm)
        expected = (p + 1) * 2 ** level
        if len(kept) != expected:
            raise RuntimeError(
                f"wavelet level {level}: kept {len(kept)} of {expected} functions"
            )
        accepted.append(np.column_stack(kept))
    coeffs = np.hstack(accepted)
    assert coeffs.shape == (n_fine, n_fine)
    return coeffs
