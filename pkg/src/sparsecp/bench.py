"""Benchmark functions, seeded sampling, and repetition studies.

Sample sets are drawn with numpy's PCG64 generator
(``np.random.Generator(np.random.PCG64(seed)).uniform(...)``), so a seed
pins the exact point set across platforms.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .bases import Interval
from .errors import MalformedDocument, OutOfDomain, SparsecpError, ZeroDenominator
from .greedy import GreedyConfig, greedy_fit, select_rank
from .tensor import CanonicalModel, evaluate_batch

# Offset separating validation seeds from training seeds.
VALIDATION_SEED_OFFSET = 1_000_000


@dataclass
class BenchmarkFunction:
    """A named analytic target on a box domain."""

    name: str
    dimension: int
    domain: tuple
    _fn: callable = field(repr=False, compare=False, default=None)

    def __call__(self, coords: np.ndarray) -> np.ndarray:
        return self._fn(np.atleast_2d(np.asarray(coords, dtype=float)))


@dataclass
class SampleSet:
    """Q sample points with optional evaluations."""

    points: np.ndarray
    seed: int | None = None
    evaluations: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        if self.evaluations is not None:
            self.evaluations = np.asarray(self.evaluations, dtype=float)
            if self.evaluations.shape[0] != self.points.shape[0]:
                raise ValueError("evaluations length does not match point count")

    @property
    def q(self) -> int:
        return self.points.shape[0]


def crenel(x) -> np.ndarray:
    """Periodic 0/1 step: 1 on [0, 1/6) + 2n/6, 0 on [1/6, 2/6) + 2n/6."""
    x = np.asarray(x, dtype=float)
    cell = np.clip(np.floor(x * 6.0).astype(int), 0, 5)
    return np.where(cell % 2 == 0, 1.0, 0.0)


def _friedman(c: np.ndarray) -> np.ndarray:
    return (
        10.0 * np.sin(np.pi * c[:, 0] * c[:, 1])
        + 20.0 * (c[:, 2] - 0.5) ** 2
        + 10.0 * c[:, 3]
        + 5.0 * c[:, 4]
    )


def _checkerboard(c: np.ndarray) -> np.ndarray:
    c1, c2 = crenel(c[:, 0]), crenel(c[:, 1])
    return c1 * (1.0 - c2) + (1.0 - c1) * c2


def _rastrigin(c: np.ndarray) -> np.ndarray:
    return 20.0 + np.sum(c**2 - 10.0 * np.cos(2.0 * np.pi * c), axis=1)


_BENCHMARKS = {
    "friedman": (5, (0.0, 1.0), _friedman),
    "checkerboard": (2, (0.0, 1.0), _checkerboard),
    "rastrigin": (2, (-4.0, 4.0), _rastrigin),
}


def benchmark(name: str) -> BenchmarkFunction:
    """Look up one of the named analytic benchmarks."""
    if name not in _BENCHMARKS:
        raise ValueError(f"unknown benchmark {name!r}; choose from {sorted(_BENCHMARKS)}")
    d, box, fn = _BENCHMARKS[name]
    domain = tuple(Interval(*box) for _ in range(d))
    return BenchmarkFunction(name, d, domain, fn)


def _check_domain(f: BenchmarkFunction, coords: np.ndarray):
    for k, iv in enumerate(f.domain):
        col = coords[:, k]
        if np.any(col < iv.lower - 1e-12) or np.any(col > iv.upper + 1e-12):
            raise OutOfDomain(f"coordinate {k} outside [{iv.lower}, {iv.upper}]")


def evaluate_benchmark(f: BenchmarkFunction, y) -> float:
    """Exact value of the benchmark at one point."""
    coords = np.atleast_2d(np.asarray(y, dtype=float))
    if coords.shape[1] != f.dimension:
        raise ValueError(f"{f.name} expects {f.dimension} coordinates")
    _check_domain(f, coords)
    return float(f(coords)[0])


def sample_uniform(f_or_domain, q: int, seed: int) -> SampleSet:
    """Q i.i.d. uniform points on the domain from the seeded PCG64 stream."""
    domain = getattr(f_or_domain, "domain", f_or_domain)
    lows = np.array([iv.lower for iv in domain])
    highs = np.array([iv.upper for iv in domain])
    rng = np.random.Generator(np.random.PCG64(seed))
    points = rng.uniform(lows, highs, size=(q, len(domain)))
    return SampleSet(points, seed=seed)


def evaluated_samples(f: BenchmarkFunction, q: int, seed: int) -> SampleSet:
    """Seeded sample set with the benchmark evaluated at every point."""
    s = sample_uniform(f, q, seed)
    s.evaluations = f(s.points)
    return s


def relative_error(model: CanonicalModel, f: BenchmarkFunction, q_prime: int = 1000,
                   seed: int = VALIDATION_SEED_OFFSET) -> float:
    """Monte-Carlo relative error ||u_m - u|| / ||u|| on a fresh sample."""
    if q_prime < 1:
        raise ValueError("q_prime must be >= 1")
    s = sample_uniform(f, q_prime, seed)
    truth = f(s.points)
    denom = np.linalg.norm(truth)
    if denom == 0.0:
        raise ZeroDenominator("reference function norm vanishes on the validation sample")
    return float(np.linalg.norm(evaluate_batch(model, s.points) - truth) / denom)


def sample_rule(c: float, d: int, m: int, p: int, alpha: int) -> int:
    """Sample-size rule Q = ceil(c * d * m * (p+1)**alpha)."""
    if c <= 0 or d < 1 or m < 1 or p < 0 or alpha not in (1, 2):
        raise ValueError("need c > 0, d >= 1, m >= 1, p >= 0, alpha in {1, 2}")
    return math.ceil(c * d * m * (p + 1) ** alpha)


@dataclass
class RepetitionSummary:
    """Aggregate of independent fit repetitions."""

    errors: list
    seeds: list
    failures: list          # (seed, message) pairs
    mean_error: float
    min_error: float
    max_error: float
    selected_ranks: list


def repetition_study(f: BenchmarkFunction, basis, q: int, cfg: GreedyConfig,
                     seeds, rank: int | None = None,
                     q_prime: int = 1000) -> RepetitionSummary:
    """Repeat a fit over independently seeded sample sets and aggregate.

    With ``rank`` given, the rank-``rank`` model from the greedy sequence
    is scored; otherwise the rank is selected by cross validation. Each
    repetition validates on its own fresh sample (training seed plus
    ``VALIDATION_SEED_OFFSET``). Failed repetitions are recorded, not
    fatal.
    """
    errors, used, failures, ranks = [], [], [], []
    for seed in seeds:
        try:
            run_cfg = replace(cfg, als=replace(cfg.als, seed=seed))
            sample = evaluated_samples(f, q, seed)
            if rank is None:
                m_op, model, _ = select_rank(sample, sample.evaluations, basis, run_cfg)
            else:
                models, _ = greedy_fit(sample, sample.evaluations, basis, run_cfg)
                if not models:
                    raise SparsecpError("greedy fit produced no terms")
                model = models[min(rank, len(models)) - 1]
                m_op = model.rank
            err = relative_error(model, f, q_prime, seed + VALIDATION_SEED_OFFSET)
            errors.append(err)
            used.append(seed)
            ranks.append(m_op)
        except SparsecpError as exc:
            failures.append((seed, str(exc)))
    if errors:
        mean_err, min_err, max_err = (
            float(np.mean(errors)), float(np.min(errors)), float(np.max(errors)))
    else:
        mean_err = min_err = max_err = float("nan")
    return RepetitionSummary(errors, used, failures, mean_err, min_err, max_err, ranks)


def read_sample_csv(path) -> SampleSet:
    """Load a sample table with header ``x1,...,xd,y``.

    Rejects a malformed header, rows with the wrong arity, and entries
    that fail to parse as decimal numbers.
    """
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedDocument(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        d = len(header) - 1
        expected = [f"x{i + 1}" for i in range(d)] + ["y"]
        if d < 1 or header != expected:
            raise MalformedDocument(
                f"{path}: header must be x1,...,xd,y, got {','.join(header)}"
            )
        points, values = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise MalformedDocument(
                    f"{path}:{lineno}: expected {d + 1} fields, got {len(row)}"
                )
            try:
                numbers = [float(cell) for cell in row]
            except ValueError as exc:
                raise MalformedDocument(f"{path}:{lineno}: {exc}") from exc
            points.append(numbers[:d])
            values.append(numbers[d])
    if not points:
        raise MalformedDocument(f"{path}: no data rows")
    return SampleSet(np.array(points), evaluations=np.array(values))
