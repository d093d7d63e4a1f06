"""Canonical low-rank model: rank-one terms, evaluation, diagnostics.

A model is ``u(y) = sum_i alpha_i prod_k w_i^(k)(y_k)`` where each factor
``w_i^(k)`` is stored as its coefficient vector in the k-th univariate
basis. Stored factors are normalized: unit Euclidean norm with the
largest-magnitude entry positive, so alpha carries all magnitude and sign
and serialized models are unique.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .bases import TensorBasis, basis_from_descriptor, eval_matrix
from .errors import DegenerateFactor, EmptyModel, MalformedDocument
from .linalg import as_vector

MODEL_FORMAT = "sparsecp-model/1"


@dataclass
class RankOneTerm:
    """Product of univariate functions, one coefficient vector per dimension."""

    factors: tuple

    def __post_init__(self):
        self.factors = tuple(np.asarray(f, dtype=float) for f in self.factors)

    @property
    def ndim(self) -> int:
        return len(self.factors)


def normalize_term(factors) -> tuple:
    """Return (normalized RankOneTerm, scale) with scale = product of norms.

    Each factor is rescaled to unit Euclidean norm and its sign flipped so
    the largest-magnitude entry is positive; the removed magnitude and sign
    are returned as a single scalar.

    Raises
    ------
    DegenerateFactor
        If any factor is identically zero.
    """
    scale = 1.0
    normalized = []
    for k, f in enumerate(factors):
        f = np.asarray(f, dtype=float)
        norm = np.linalg.norm(f)
        if norm == 0.0:
            raise DegenerateFactor(f"factor {k} is identically zero")
        f = f / norm
        sign = 1.0 if f[np.argmax(np.abs(f))] >= 0 else -1.0
        normalized.append(sign * f)
        scale *= norm * sign
    return RankOneTerm(tuple(normalized)), scale


@dataclass
class CanonicalModel:
    """m-term canonical expansion over a tensor basis; m = 0 is the zero function."""

    basis: TensorBasis
    terms: tuple = ()
    alphas: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.terms = tuple(self.terms)
        self.alphas = np.asarray(self.alphas, dtype=float)
        if len(self.terms) != self.alphas.shape[0]:
            raise ValueError(
                f"{len(self.terms)} terms but {self.alphas.shape[0]} coefficients"
            )
        for i, term in enumerate(self.terms):
            if term.ndim != self.basis.ndim:
                raise ValueError(f"term {i} has {term.ndim} factors, basis {self.basis.ndim}")
            for k, f in enumerate(term.factors):
                if f.shape[0] != self.basis.factors[k].dim:
                    raise ValueError(
                        f"term {i} factor {k} has length {f.shape[0]}, "
                        f"basis dimension {self.basis.factors[k].dim}"
                    )

    @property
    def rank(self) -> int:
        return len(self.terms)

    @property
    def effective_rank(self) -> int:
        return int(np.count_nonzero(self.alphas))


def evaluate(model: CanonicalModel, y) -> float:
    """Value of the model at one point."""
    y = np.asarray(y, dtype=float).reshape(-1)
    return float(evaluate_batch(model, y[None, :])[0])


def evaluate_batch(model: CanonicalModel, points) -> np.ndarray:
    """Values at Q points; basis evaluations are shared across terms."""
    coords = getattr(points, "points", points)
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    if coords.shape[1] != model.basis.ndim:
        raise ValueError(
            f"points have {coords.shape[1]} coordinates, model has {model.basis.ndim}"
        )
    q = coords.shape[0]
    if model.rank == 0:
        return np.zeros(q)
    prod = np.ones((q, model.rank))
    for k, basis_k in enumerate(model.basis.factors):
        rows = eval_matrix(basis_k, coords[:, k])          # Q x n_k
        w_k = np.column_stack([t.factors[k] for t in model.terms])
        prod *= rows @ w_k
    return prod @ model.alphas


def term_values(terms, basis: TensorBasis, points) -> np.ndarray:
    """Q x m matrix of rank-one term values at the sample points."""
    coords = getattr(points, "points", points)
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    prod = np.ones((coords.shape[0], len(terms)))
    for k, basis_k in enumerate(basis.factors):
        rows = eval_matrix(basis_k, coords[:, k])
        w_k = np.column_stack([t.factors[k] for t in terms])
        prod *= rows @ w_k
    return prod


def term_sparsity(term: RankOneTerm) -> float:
    """Nonzero fraction of one term's parameters (exact-zero count)."""
    nonzero = sum(int(np.count_nonzero(f)) for f in term.factors)
    total = sum(f.shape[0] for f in term.factors)
    return nonzero / total


def sparsity_ratios(model: CanonicalModel):
    """Total and per-dimension nonzero-parameter ratios.

    Entries are counted against literal zero: the l1 path produces exact
    zeros, while OLS or ridge factors honestly report a ratio of 1.

    Returns
    -------
    (total, per_dimension) where ``total`` is the nonzero fraction over
    all m * sum(n_k) factor parameters and ``per_dimension[k]`` the
    fraction over the m * n_k parameters of dimension k.
    """
    if model.rank == 0:
        raise EmptyModel("sparsity ratios need at least one term")
    dims = model.basis.dims
    counts = np.zeros(len(dims))
    for term in model.terms:
        for k, f in enumerate(term.factors):
            counts[k] += np.count_nonzero(f)
    per_dimension = counts / (model.rank * np.asarray(dims, dtype=float))
    total = counts.sum() / (model.rank * sum(dims))
    return float(total), [float(r) for r in per_dimension]


def serialize(model: CanonicalModel) -> str:
    """Model as a JSON text document; factors stored as index/value pairs."""
    doc = {
        "format": MODEL_FORMAT,
        "bases": [b.descriptor() for b in model.basis.factors],
        "alphas": [float(a) for a in model.alphas],
        "terms": [
            [
                {
                    "indices": np.flatnonzero(f).tolist(),
                    "values": f[np.flatnonzero(f)].tolist(),
                    "length": int(f.shape[0]),
                }
                for f in term.factors
            ]
            for term in model.terms
        ],
    }
    return json.dumps(doc, indent=1)


def _need(doc: dict, key: str, where: str):
    if not isinstance(doc, dict) or key not in doc:
        raise MalformedDocument(f"missing {key!r} at {where}")
    return doc[key]


def deserialize(text: str) -> CanonicalModel:
    """Inverse of ``serialize``; raises MalformedDocument with a location."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"not valid JSON: {exc}") from exc
    if _need(doc, "format", "$") != MODEL_FORMAT:
        raise MalformedDocument(f"unsupported format {doc.get('format')!r} at $.format")
    try:
        bases = [basis_from_descriptor(d) for d in _need(doc, "bases", "$")]
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedDocument(f"bad basis descriptor at $.bases: {exc}") from exc
    basis = TensorBasis(bases)
    alphas = _need(doc, "alphas", "$")
    raw_terms = _need(doc, "terms", "$")
    if len(alphas) != len(raw_terms):
        raise MalformedDocument(
            f"{len(alphas)} alphas but {len(raw_terms)} terms at $.terms"
        )
    terms = []
    for i, raw in enumerate(raw_terms):
        where = f"$.terms[{i}]"
        if len(raw) != basis.ndim:
            raise MalformedDocument(f"{len(raw)} factors for {basis.ndim} dimensions at {where}")
        factors = []
        for k, fac in enumerate(raw):
            here = f"{where}[{k}]"
            length = _need(fac, "length", here)
            indices = _need(fac, "indices", here)
            values = _need(fac, "values", here)
            if length != basis.factors[k].dim:
                raise MalformedDocument(
                    f"factor length {length} does not match basis dimension "
                    f"{basis.factors[k].dim} at {here}"
                )
            if len(indices) != len(values):
                raise MalformedDocument(f"indices/values length mismatch at {here}")
            f = np.zeros(length)
            try:
                f[indices] = values
            except (IndexError, ValueError) as exc:
                raise MalformedDocument(f"bad sparse entries at {here}: {exc}") from exc
            factors.append(as_vector(f))
        terms.append(RankOneTerm(tuple(factors)))
    try:
        alphas = as_vector(np.asarray(alphas, dtype=float))
    except (ValueError, TypeError) as exc:
        raise MalformedDocument(f"bad alphas at $.alphas: {exc}") from exc
    return CanonicalModel(basis, tuple(terms), alphas)
