"""
Permutation-sampling Shapley attribution of a model's regression output

For each sampled feature ordering the scorer is evaluated on the chain of
hybrids that switch features from the baseline to the explained sample one
at a time; consecutive differences are the marginal contributions.
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from alphaforge.errors import ConfigError, GridCapacityError, NumericalError
from alphaforge.factor_set import STRUCTURE_TAGS, alias_of

logger = logging.getLogger(__name__)

DEFAULT_GRID = (8, 5)
GRID_COLUMNS = ("row", "col", "factor", "alias", "value")
BASELINES = ("validation_mean", "zero")
PERMUTATION_BATCH = 256


def shapley_mc(scorer, x, baseline, n_permutations=2048, seed=0):
    """
    phi_i = mean over sampled orderings of f(hybrid with i switched on) - f(hybrid before i)

    `scorer` maps an (n, F) array to n outputs and must be deterministic.
    `seed` is anything numpy's PCG64 accepts (an int or a SeedSequence).
    """
    if n_permutations < 1:
        raise ConfigError("n_permutations must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    n_features = len(x)
    rng = np.random.Generator(np.random.PCG64(seed))
    steps = np.arange(n_features + 1)
    phi = np.zeros(n_features)

    for start in range(0, n_permutations, PERMUTATION_BATCH):
        count = min(PERMUTATION_BATCH, n_permutations - start)
        orders = rng.permuted(np.tile(np.arange(n_features), (count, 1)), axis=1)
        position = np.argsort(orders, axis=1)
        switched = position[:, None, :] < steps[None, :, None]
        hybrids = np.where(switched, x, baseline).reshape(-1, n_features)
        values = np.asarray(scorer(hybrids), dtype=np.float64).reshape(count, n_features + 1)
        if not np.all(np.isfinite(values)):
            bad = hybrids[np.flatnonzero(~np.isfinite(values.reshape(-1)))[0]]
            raise NumericalError(
                f"model output is not finite for hybrid input {np.array2string(bad, precision=6)}")
        np.add.at(phi, orders, np.diff(values, axis=1))

    return phi / n_permutations


@dataclass
class AttributionResult:
    factor_names: tuple
    phi: np.ndarray
    base_value: float
    f_x: np.ndarray

    @property
    def signed_mean(self):
        return self.phi.mean(axis=0)

    @property
    def mean_abs(self):
        return np.abs(self.phi).mean(axis=0)

    @property
    def efficiency_gap(self):
        """Largest |sum(phi) - (f(x) - f(b))| over the explained samples"""
        return float(np.max(np.abs(self.phi.sum(axis=1) - (self.f_x - self.base_value))))


def attribute(scorer, X, baseline, factor_names, n_permutations=2048, seed=0):
    """Shapley vectors for every row of X, each row drawing from its own spawned seed"""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    baseline = np.asarray(baseline, dtype=np.float64)
    seeds = np.random.SeedSequence(seed).spawn(len(X))
    phi = np.vstack([shapley_mc(scorer, x, baseline, n_permutations, s) for x, s in zip(X, seeds)])
    base_value = float(np.asarray(scorer(baseline[None, :]), dtype=np.float64).reshape(-1)[0])
    f_x = np.asarray(scorer(X), dtype=np.float64).reshape(-1)
    result = AttributionResult(tuple(factor_names), phi, base_value, f_x)
    logger.info("Attributed %d samples over %d factors (%d orderings each), efficiency gap %.3g",
                len(X), len(factor_names), n_permutations, result.efficiency_gap)
    return result


def baseline_vector(validation_X, kind="validation_mean"):
    validation_X = np.asarray(validation_X, dtype=np.float64)
    if kind == "zero":
        return np.zeros(validation_X.shape[1])
    if kind == "validation_mean":
        if len(validation_X) == 0:
            raise ConfigError("baseline = validation_mean needs a non-empty validation split")
        return validation_X.mean(axis=0)
    raise ConfigError(f"baseline must be one of {', '.join(BASELINES)}, got {kind}")


def sample_rows(n_rows, n_samples, seed):
    """Sorted row indices of the samples to explain; every row when n_samples >= n_rows"""
    if n_samples >= n_rows:
        return np.arange(n_rows)
    rng = np.random.Generator(np.random.PCG64(seed))
    return np.sort(rng.choice(n_rows, size=n_samples, replace=False))


def parse_grid(text, n_factors):
    """'auto' or 'RxC' -> (rows, cols); auto keeps 8x5 while it fits and grows rows otherwise"""
    text = str(text).strip().lower()
    if text == "auto":
        rows, cols = DEFAULT_GRID
        return max(rows, math.ceil(n_factors / cols)), cols
    try:
        rows, cols = (int(part) for part in text.split("x"))
    except ValueError:
        raise ConfigError(f"grid must be 'auto' or ROWSxCOLS, got {text}") from None
    if rows < 1 or cols < 1:
        raise ConfigError(f"grid dimensions must be positive, got {text}")
    return rows, cols


def heatmap_grid(factor_names, values, rows=8, cols=5):
    """Row-major layout of per-factor values in factor-file order; unused cells are empty"""
    n = len(factor_names)
    if n > rows * cols:
        raise GridCapacityError(
            f"{n} factors do not fit a {rows}x{cols} grid; use --grid {math.ceil(n / cols)}x{cols}")
    cells = []
    for i in range(rows * cols):
        row, col = divmod(i, cols)
        if i < n:
            name = factor_names[i]
            cells.append({"row": row, "col": col, "factor": name, "alias": alias_of(name) or "",
                          "value": float(values[i])})
        else:
            cells.append({"row": row, "col": col, "factor": "", "alias": "", "value": np.nan})
    return pd.DataFrame(cells, columns=list(GRID_COLUMNS))


def grid_matrix(grid, rows, cols):
    matrix = np.full((rows, cols), np.nan)
    matrix[grid["row"].to_numpy(), grid["col"].to_numpy()] = grid["value"].to_numpy(dtype=np.float64)
    return matrix


def structure_aggregate(result, factor_set):
    """Mean signed and mean absolute attribution per behavioural-structure tag"""
    tags = factor_set.tags()
    signed = result.signed_mean
    magnitude = result.mean_abs
    rows = []
    for tag in STRUCTURE_TAGS:
        idx = [i for i, name in enumerate(result.factor_names) if tags.get(name) == tag]
        rows.append({
            "structure": tag,
            "n_factors": len(idx),
            "signed_mean": float(signed[idx].mean()) if idx else np.nan,
            "mean_abs": float(magnitude[idx].mean()) if idx else np.nan,
        })
    return pd.DataFrame(rows, columns=["structure", "n_factors", "signed_mean", "mean_abs"])


def write_frame(frame, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n", float_format="%.17g")
    logger.info("Wrote %s", path)
    return path
