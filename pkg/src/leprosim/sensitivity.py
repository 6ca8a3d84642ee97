"""Global sensitivity machinery: stratified sampling, rank correlations
and conditional-expectation indices.

The workflow mirrors standard ODE-model GSA practice: draw a latin
hypercube over uncertain rates, push every draw through the simulator,
then attribute output variation to inputs with Spearman/partial rank
correlations (monotone trends) or conditional-expectation correlation
indices (everything else).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .analysis import reproduction_number
from .errors import DivergenceError, DomainError, EstimatorError
from .model import SimulationConfig, integrate_batch
from .params import ParameterSet

#: uncertain-rate ranges used by the demo scenarios (the bacterial
#: clearance range is stored normalized, lo < hi)
SENSITIVITY_RANGES = (
    ("gamma", 0.0538, 0.0763),
    ("mu1", 0.0305, 0.0405),
    ("delta", 0.2263, 0.3099),
    ("alpha", 0.0538, 0.0763),
    ("y", 0.0001, 0.0005),
)


@dataclass(frozen=True)
class ParameterRange:
    name: str
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo < 0:
            raise DomainError(f"{self.name}: bounds must be >= 0")
        if not self.lo < self.hi:
            raise DomainError(
                f"{self.name}: degenerate range [{self.lo}, {self.hi}]")

    @classmethod
    def normalized(cls, name, a, b) -> "ParameterRange":
        """Build with bounds sorted; tolerates reversed (max, min) input."""
        return cls(name, min(a, b), max(a, b))


def default_ranges() -> list[ParameterRange]:
    return [ParameterRange(n, lo, hi) for n, lo, hi in SENSITIVITY_RANGES]


@dataclass
class SampleMatrix:
    values: np.ndarray  # (n_samples, n_params)
    seed: int
    ranges: list[ParameterRange]

    @property
    def names(self) -> list[str]:
        return [r.name for r in self.ranges]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]


def lhs_sample(ranges, n: int, seed: int) -> SampleMatrix:
    """Latin hypercube over the given ranges.

    Each column gets exactly one draw per equal-width stratum of
    [lo, hi); strata orders are permuted independently per column.
    The same seed reproduces the matrix bit for bit.
    """
    ranges = list(ranges)
    if not ranges:
        raise DomainError("need at least one parameter range")
    if n < 2:
        raise DomainError("need n >= 2 samples")
    rng = np.random.default_rng(seed)
    out = np.empty((n, len(ranges)))
    for j, r in enumerate(ranges):
        u = (np.arange(n) + rng.random(n)) / n
        out[:, j] = r.lo + (r.hi - r.lo) * rng.permutation(u)
    return SampleMatrix(values=out, seed=seed, ranges=ranges)


@dataclass
class EnsembleResult:
    """States probed at fixed times for every sample.

    outputs has shape (n_samples, n_probes, 3); rows whose integration
    produced non-finite values are nan-filled and listed in `failed`.
    """

    probe_times: np.ndarray
    outputs: np.ndarray
    failed: list[int] = field(default_factory=list)


def run_ensemble(samples: SampleMatrix, base: ParameterSet,
                 sim: SimulationConfig, probe_times) -> EnsembleResult:
    """Integrate the model once per sample row and record probed states.

    Sampled parameters override the base set; probes snap to the nearest
    grid point.
    """
    probe_times = np.asarray(probe_times, dtype=float)
    if probe_times.size and (probe_times.min() < sim.t0 - 1e-12
                             or probe_times.max() > sim.tf + 1e-12):
        raise DomainError("probe times must lie within [t0, tf]")
    n = samples.values.shape[0] if samples.values.size else 0
    idx = np.clip(np.round((probe_times - sim.t0) / sim.step).astype(int),
                  0, None)
    outputs = np.full((n, len(probe_times), 3), np.nan)
    failed: list[int] = []
    names = samples.names
    for row in range(n):
        overrides = dict(zip(names, samples.values[row]))
        p = base.with_updates(**overrides)
        try:
            path = integrate_batch(p, np.asarray([sim.initial]),
                                   sim.t0, sim.tf, sim.step)
        except (DivergenceError, DomainError):
            failed.append(row)
            continue
        outputs[row] = path[idx, 0, :]
    return EnsembleResult(probe_times=probe_times, outputs=outputs,
                          failed=failed)


def _ranks(v: np.ndarray) -> np.ndarray:
    return rankdata(v, method="average")


def srcc(x, y) -> float:
    """Spearman rank correlation (average ranks on ties)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 3:
        raise DomainError("srcc needs two equal-length vectors of >= 3 points")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        raise EstimatorError("correlation is undefined for a constant vector")
    rx, ry = _ranks(x), _ranks(y)
    return float(np.corrcoef(rx, ry)[0, 1])


def _residual(target: np.ndarray, design: np.ndarray) -> np.ndarray:
    """Residual of target after least-squares fit on design (with intercept)."""
    a = np.column_stack([np.ones(len(target)), design]) if design.size \
        else np.ones((len(target), 1))
    coef, *_ = np.linalg.lstsq(a, target, rcond=None)
    return target - a @ coef


def prcc(x_matrix, y, target: int) -> float:
    """Partial rank correlation of one column with the output.

    Rank-transform everything, regress both the target column and the
    output on the remaining columns, and correlate the two residuals.
    With no remaining columns this reduces exactly to `srcc`.
    """
    x_matrix = np.atleast_2d(np.asarray(x_matrix, dtype=float))
    y = np.asarray(y, dtype=float)
    n, p = x_matrix.shape
    if len(y) != n:
        raise DomainError("output length must match the sample count")
    if n < p + 3:
        raise DomainError(f"need at least {p + 3} samples for {p} parameters")
    if not 0 <= target < p:
        raise DomainError(f"target column {target} out of range")
    for j in range(p):
        if np.ptp(x_matrix[:, j]) == 0.0:
            raise EstimatorError(f"column {j} is constant")
    if np.ptp(y) == 0.0:
        raise EstimatorError("output vector is constant")

    ranks = np.column_stack([_ranks(x_matrix[:, j]) for j in range(p)])
    ry = _ranks(y)
    rest = np.delete(np.arange(p), target)
    design = ranks[:, rest]
    if rest.size:
        full = np.column_stack([np.ones(n), design])
        if np.linalg.matrix_rank(full) < full.shape[1]:
            bad = _collinear_columns(design, rest)
            raise EstimatorError(f"regression design is rank deficient; "
                                 f"collinear columns: {bad}")
    rx = _residual(ranks[:, target], design)
    re = _residual(ry, design)
    denom = np.sqrt((rx @ rx) * (re @ re))
    if denom == 0.0:
        raise EstimatorError("residuals are degenerate")
    return float((rx @ re) / denom)


def _collinear_columns(design: np.ndarray, labels) -> list[int]:
    """Columns whose removal restores full rank (reported by original index)."""
    n = design.shape[1]
    full_rank = np.linalg.matrix_rank(np.column_stack([np.ones(len(design)),
                                                       design]))
    bad = []
    for j in range(n):
        reduced = np.delete(design, j, axis=1)
        r = np.linalg.matrix_rank(np.column_stack([np.ones(len(design)),
                                                   reduced]))
        if r == full_rank:
            bad.append(int(labels[j]))
    return bad or [int(v) for v in labels]


@dataclass(frozen=True)
class SobolResult:
    target: str
    params: tuple[str, ...]
    index: float


def _bin_means_1d(x: np.ndarray, y: np.ndarray, bins: int) -> np.ndarray:
    order = np.argsort(x, kind="stable")
    mean_vec = np.empty_like(y)
    for chunk in np.array_split(order, bins):
        if chunk.size == 0:
            raise EstimatorError("empty bin; use fewer bins")
        mean_vec[chunk] = y[chunk].mean()
    return mean_vec


def _bin_means_2d(x1, x2, y, bins: int) -> np.ndarray:
    def cells(x):
        edges = np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1])
        return np.searchsorted(edges, x, side="right")

    cell = cells(x1) * bins + cells(x2)
    mean_vec = np.empty_like(y)
    filled = np.unique(cell)
    if len(filled) < bins * bins:
        raise EstimatorError("empty bin in the 2d grid; use fewer bins")
    for c in filled:
        idx = cell == c
        mean_vec[idx] = y[idx].mean()
    return mean_vec


def sobol_index(x, y, bins: int, target: str = "Y",
                names: tuple[str, ...] = ("x",)) -> SobolResult:
    """Correlation-form first-order index: corr(Y, E(Y | x)).

    E(Y|x) is estimated by replacing each output with its equal-count-bin
    conditional mean (a bins x bins grid when x is a pair of vectors).
    Note the plain estimator is nonnegative by construction, since the bin
    means are computed from the very outputs they are correlated with; a
    signed variant for reporting trend direction lives in `r0_sensitivity`.
    """
    y = np.asarray(y, dtype=float)
    if bins < 2:
        raise DomainError("need bins >= 2")
    if isinstance(x, (tuple, list)) and len(x) == 2 \
            and np.ndim(x[0]) == 1 and len(np.asarray(x[0])) > 2:
        x1 = np.asarray(x[0], dtype=float)
        x2 = np.asarray(x[1], dtype=float)
        if len(y) < 5 * bins * bins:
            raise DomainError("need an average of >= 5 samples per 2d bin")
        mean_vec = _bin_means_2d(x1, x2, y, bins)
    else:
        xv = np.asarray(x, dtype=float)
        if len(y) < 5 * bins:
            raise DomainError("need an average of >= 5 samples per bin")
        mean_vec = _bin_means_1d(xv, y, bins)
    if np.ptp(y) == 0.0 or np.ptp(mean_vec) == 0.0:
        raise EstimatorError("index undefined: constant output or "
                             "constant conditional mean")
    idx = float(np.corrcoef(y, mean_vec)[0, 1])
    return SobolResult(target=target, params=tuple(names), index=idx)


def _trend_sign(x: np.ndarray, y: np.ndarray) -> float:
    s = srcc(x, y)
    return -1.0 if s < 0 else 1.0


def r0_sensitivity(samples: SampleMatrix, base: ParameterSet,
                   singles=None, pairs=None,
                   bins_single: int | None = None,
                   bins_pair: int | None = None,
                   signed: bool = True) -> list[SobolResult]:
    """Conditional-expectation indices with the reproduction number as output.

    Single-parameter indices carry the sign of the parameter's monotone
    trend on the output (via Spearman), so inversely acting rates report
    negative values; pair indices are left unsigned.  Pass signed=False
    for the raw estimator everywhere.
    """
    n = samples.values.shape[0]
    names = samples.names
    if singles is None:
        singles = list(names)
    if pairs is None:
        pairs = [(a, b) for k, a in enumerate(names) for b in names[k + 1:]]
    if bins_single is None:
        bins_single = max(2, int(round(np.sqrt(n))))
    if bins_pair is None:
        bins_pair = max(2, int(round(n ** 0.25)))

    y = np.empty(n)
    for row in range(n):
        p = base.with_updates(**dict(zip(names, samples.values[row])))
        y[row] = reproduction_number(p)

    out: list[SobolResult] = []
    for name in singles:
        x = samples.column(name)
        res = sobol_index(x, y, bins_single, target="R0", names=(name,))
        if signed:
            res = SobolResult(res.target, res.params,
                              _trend_sign(x, y) * res.index)
        out.append(res)
    for a, b in pairs:
        out.append(sobol_index((samples.column(a), samples.column(b)), y,
                               bins_pair, target="R0", names=(a, b)))
    return out


def coefficient_series(samples: SampleMatrix, ensemble: EnsembleResult,
                       param: str, output: str,
                       method: str = "srcc") -> np.ndarray:
    """SRCC or PRCC of one parameter against one output over probe times.

    Failed ensemble rows are excluded pairwise.  Returns rows (t, coef).
    """
    comp = {"S": 0, "I": 1, "B": 2}[output]
    j = samples.names.index(param)
    keep = np.setdiff1d(np.arange(samples.values.shape[0]),
                        np.asarray(ensemble.failed, dtype=int))
    xs = samples.values[keep]
    series = np.empty((len(ensemble.probe_times), 2))
    for k, t in enumerate(ensemble.probe_times):
        yv = ensemble.outputs[keep, k, comp]
        if method == "srcc":
            c = srcc(xs[:, j], yv)
        elif method == "prcc":
            c = prcc(xs, yv, j)
        else:
            raise DomainError(f"unknown method {method!r}")
        series[k] = (t, c)
    return series


def write_scatter_csv(x, y, path, header="param_value,output_value") -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for a, b in zip(x, y):
            fh.write(f"{a:.17g},{b:.17g}\n")


def write_series_csv(series: np.ndarray, path) -> None:
    with open(path, "w") as fh:
        fh.write("t,coefficient\n")
        for t, c in series:
            fh.write(f"{t:.17g},{c:.17g}\n")


def write_sobol_csv(results, path) -> None:
    with open(path, "w") as fh:
        fh.write("target,params,index\n")
        for r in results:
            fh.write(f"{r.target},{'+'.join(r.params)},{r.index:.17g}\n")
