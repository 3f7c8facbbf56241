"""Streaming moment accumulation, jackknife errors and result assembly.

Trajectories are processed in batches.  For every batch the accumulator
stores one immutable row holding the trajectory count, the count of
negative corrected-intensity products, and the sum and sum of squares of
twenty tracked scalars:

    columns 0..7    the eight corrected port intensities
                    (order of modes.PORT_LABELS)
    columns 8..19   per analyzer pair (order of bell.PAIR_LABELS):
                    num  = (I1+ - I1-)(I2+ - I2-)
                    den  = (I1+ + I1-)(I2+ + I2-)
                    coin = I1+ I2+

All products are formed per trajectory *after* the half-photon
correction, so each summand is already the small corrected quantity and
no large-term cancellation happens at finalization time.  Within a batch
numpy's pairwise summation is used; across batches totals are combined
with math.fsum over rows sorted by batch index.  Results therefore do
not depend on how batches were distributed over workers or in which
order accumulators were merged, which makes parallel runs byte-identical
to serial ones.

Standard errors for the CHSH and Clauser-Horne values come from a
delete-one jackknife over at most twenty consecutive groups of batch
rows; closed error formulas for single means are provided separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from statistics import NormalDist
from typing import Callable, Iterable, Sequence

import numpy as np

from .bell import (CH_SINGLES_PORTS, PAIR_LABELS, PAIR_PORTS, chsh_value,
                   clauser_horne_value, correlation_from_sums)
from .errors import EstimationError
from .modes import PORT_LABELS

COLUMN_LABELS: tuple[str, ...] = PORT_LABELS + tuple(
    f"{kind}_{label}" for label in PAIR_LABELS for kind in ("num", "den", "coin"))
COLUMN_INDEX = {name: i for i, name in enumerate(COLUMN_LABELS)}
N_COLUMNS = len(COLUMN_LABELS)

# default number of groups for jackknife re-binning (batch size n/20)
JACKKNIFE_GROUPS = 20


def tracked_scalars(ports: np.ndarray) -> np.ndarray:
    """Per-trajectory values of the twenty tracked columns.

    ``ports`` has shape (n, 8) with corrected port intensities in
    modes.PORT_LABELS order; the result has shape (n, 20).
    """
    ports = np.atleast_2d(np.asarray(ports, dtype=float))
    if ports.shape[1] != len(PORT_LABELS):
        raise ValueError(f"expected {len(PORT_LABELS)} port columns, "
                         f"got {ports.shape[1]}")
    out = np.empty((ports.shape[0], N_COLUMNS))
    out[:, :len(PORT_LABELS)] = ports
    col = len(PORT_LABELS)
    for label in PAIR_LABELS:
        p_plus, p_minus, q_plus, q_minus = PAIR_PORTS[label]
        d1 = ports[:, p_plus] - ports[:, p_minus]
        n1 = ports[:, p_plus] + ports[:, p_minus]
        d2 = ports[:, q_plus] - ports[:, q_minus]
        n2 = ports[:, q_plus] + ports[:, q_minus]
        out[:, col] = d1 * d2
        out[:, col + 1] = n1 * n2
        out[:, col + 2] = ports[:, p_plus] * ports[:, q_plus]
        col += 3
    return out


def negative_product_count(ports: np.ndarray) -> int:
    """Trajectories whose corrected pixel totals have a negative product.

    Pixel totals are taken at the first analyzer-angle pair (t1, t2); a
    negative product is the phase-space signature that no local
    intensity model can reproduce the correlations.
    """
    ports = np.atleast_2d(np.asarray(ports, dtype=float))
    p_plus, p_minus, q_plus, q_minus = PAIR_PORTS["11"]
    n1 = ports[:, p_plus] + ports[:, p_minus]
    n2 = ports[:, q_plus] + ports[:, q_minus]
    return int(np.count_nonzero(n1 * n2 < 0.0))


@dataclass(frozen=True)
class BatchMoments:
    """Immutable per-batch summary: counts plus Σx and Σx² per column."""

    batch_index: int
    count: int
    negative_count: int
    sums: np.ndarray
    sum_squares: np.ndarray


@dataclass(frozen=True)
class Totals:
    count: int
    negative_count: int
    sums: np.ndarray
    sum_squares: np.ndarray

    def mean(self, column: str) -> float:
        return self.sums[COLUMN_INDEX[column]] / self.count

    def mean_stderr(self, column: str) -> float:
        """Standard error of one column mean from its sample variance."""
        i = COLUMN_INDEX[column]
        m = self.sums[i] / self.count
        var = self.sum_squares[i] / self.count - m * m
        return math.sqrt(max(var, 0.0) / self.count)


class MomentAccumulator:
    """Mergeable streaming sums over trajectory batches.

    Each batch index may be used exactly once across all accumulators
    that will ever be merged; the finalized totals are computed over rows
    sorted by that index, so they are independent of update and merge
    order.  ``config_key`` guards against merging accumulators produced
    under different run configurations.
    """

    def __init__(self, config_key=None):
        self.config_key = config_key
        self._rows: dict[int, BatchMoments] = {}

    # -- accumulation --------------------------------------------------

    def update(self, ports: np.ndarray, batch_index: int | None = None) -> None:
        """Add one batch (or a single trajectory) of port intensities."""
        ports = np.atleast_2d(np.asarray(ports, dtype=float))
        if batch_index is None:
            batch_index = max(self._rows, default=-1) + 1
        if batch_index in self._rows:
            raise ValueError(f"batch index {batch_index} already accumulated")
        values = tracked_scalars(ports)
        self._rows[batch_index] = BatchMoments(
            batch_index=int(batch_index),
            count=ports.shape[0],
            negative_count=negative_product_count(ports),
            sums=values.sum(axis=0),
            sum_squares=(values * values).sum(axis=0),
        )

    # -- merging -------------------------------------------------------

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        """Combine two accumulators into a new one."""
        if self.config_key != other.config_key:
            raise ValueError(
                f"cannot merge accumulators with different configurations: "
                f"{self.config_key!r} vs {other.config_key!r}")
        overlap = self._rows.keys() & other._rows.keys()
        if overlap:
            raise ValueError(f"batch indices accumulated twice: {sorted(overlap)}")
        out = MomentAccumulator(self.config_key)
        out._rows = {**self._rows, **other._rows}
        return out

    @classmethod
    def merged(cls, accumulators: Iterable["MomentAccumulator"]) -> "MomentAccumulator":
        accumulators = list(accumulators)
        if not accumulators:
            return cls()
        result = accumulators[0]
        for acc in accumulators[1:]:
            result = result.merge(acc)
        return result

    # -- finalization --------------------------------------------------

    @property
    def count(self) -> int:
        return sum(row.count for row in self._rows.values())

    @property
    def negative_count(self) -> int:
        return sum(row.negative_count for row in self._rows.values())

    @property
    def n_batches(self) -> int:
        return len(self._rows)

    def sorted_rows(self) -> list[BatchMoments]:
        return [self._rows[k] for k in sorted(self._rows)]

    def totals(self) -> Totals:
        rows = self.sorted_rows()
        if not rows:
            raise EstimationError("no trajectories accumulated")
        sums = np.array([math.fsum(r.sums[i] for r in rows)
                         for i in range(N_COLUMNS)])
        sqs = np.array([math.fsum(r.sum_squares[i] for r in rows)
                        for i in range(N_COLUMNS)])
        return Totals(count=sum(r.count for r in rows),
                      negative_count=sum(r.negative_count for r in rows),
                      sums=sums, sum_squares=sqs)

    def prefix(self, n_batches: int) -> "MomentAccumulator":
        """Accumulator restricted to the first ``n_batches`` batch rows."""
        out = MomentAccumulator(self.config_key)
        for key in sorted(self._rows)[:n_batches]:
            out._rows[key] = self._rows[key]
        return out

    # -- jackknife -----------------------------------------------------

    def jackknife_stderr(self, statistic: Callable[[np.ndarray, int], float],
                         n_groups: int = JACKKNIFE_GROUPS) -> float:
        """Delete-one jackknife standard error of ``statistic``.

        ``statistic(sums, count)`` maps column sums over any trajectory
        subset to the estimate of interest.  Batch rows are re-binned
        into at most ``n_groups`` consecutive groups; each group is left
        out in turn and the statistic recomputed on the rest.
        """
        rows = self.sorted_rows()
        if len(rows) < 2:
            raise EstimationError(
                "jackknife needs at least two batches of trajectories")
        k = min(n_groups, len(rows))
        bounds = [len(rows) * j // k for j in range(k + 1)]
        groups = [rows[bounds[j]:bounds[j + 1]] for j in range(k)]
        estimates = []
        for j in range(k):
            kept = [row for g in range(k) if g != j for row in groups[g]]
            sums = np.array([math.fsum(r.sums[i] for r in kept)
                             for i in range(N_COLUMNS)])
            count = sum(r.count for r in kept)
            estimates.append(statistic(sums, count))
        estimates = np.asarray(estimates)
        spread = float(((estimates - estimates.mean()) ** 2).sum())
        return math.sqrt((k - 1) / k * spread)


# ----------------------------------------------------------------------
# statistics over column sums
# ----------------------------------------------------------------------

def chsh_from_sums(sums: np.ndarray, count: int) -> float:
    """CHSH combination from accumulated column sums."""
    correlations = [
        correlation_from_sums(sums[COLUMN_INDEX[f"num_{label}"]] / count,
                              sums[COLUMN_INDEX[f"den_{label}"]] / count)
        for label in PAIR_LABELS]
    return chsh_value(*correlations)


def ch_from_sums(sums: np.ndarray, count: int) -> float:
    """Clauser-Horne ratio from accumulated column sums."""
    coincidences = [sums[COLUMN_INDEX[f"coin_{label}"]] / count
                    for label in PAIR_LABELS]
    single1 = sums[COLUMN_INDEX[PORT_LABELS[CH_SINGLES_PORTS[0]]]] / count
    single2 = sums[COLUMN_INDEX[PORT_LABELS[CH_SINGLES_PORTS[1]]]] / count
    return clauser_horne_value(*coincidences, single1, single2)


def stderr_mean(mean_uncorrected: float, n: int) -> float:
    """Closed-form standard error of a corrected two-port pixel mean.

    Each port's symmetric intensity is vacuum-dominated with standard
    deviation close to its own mean, so the error of the corrected mean
    over n trajectories is mean_uncorrected * sqrt(2) / sqrt(n).
    """
    if n < 1:
        raise ValueError(f"need at least one trajectory, got n={n}")
    return float(mean_uncorrected) * math.sqrt(2.0) / math.sqrt(n)


def confidence_interval(estimate: float, stderr: float,
                        level: float = 0.95) -> tuple[float, float]:
    """Normal-approximation confidence interval estimate ± z·stderr."""
    if stderr < 0:
        raise ValueError(f"stderr must be >= 0, got {stderr}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must lie in (0, 1), got {level}")
    z = NormalDist().inv_cdf(0.5 * (1.0 + level))
    return (estimate - z * stderr, estimate + z * stderr)


# ----------------------------------------------------------------------
# result assembly
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class BellResult:
    """Point estimates and errors from one accumulated ensemble."""

    correlations: dict[str, float]
    chsh: float
    chsh_stderr: float
    ch_ratio: float
    ch_stderr: float
    negative_fraction: float
    n_trajectories: int


def bell_estimate(acc: MomentAccumulator,
                  n_groups: int = JACKKNIFE_GROUPS) -> BellResult:
    """Estimate the Bell quantities and jackknife errors from sums."""
    totals = acc.totals()
    correlations = {
        label: correlation_from_sums(
            totals.sums[COLUMN_INDEX[f"num_{label}"]] / totals.count,
            totals.sums[COLUMN_INDEX[f"den_{label}"]] / totals.count)
        for label in PAIR_LABELS}
    chsh = chsh_value(*(correlations[k] for k in PAIR_LABELS))
    ch = ch_from_sums(totals.sums, totals.count)
    return BellResult(
        correlations=correlations,
        chsh=chsh,
        chsh_stderr=acc.jackknife_stderr(chsh_from_sums, n_groups),
        ch_ratio=ch,
        ch_stderr=acc.jackknife_stderr(ch_from_sums, n_groups),
        negative_fraction=totals.negative_count / totals.count,
        n_trajectories=totals.count,
    )


def convergence_series(snapshots: Sequence[MomentAccumulator]) -> list[dict]:
    """Rows (n, chsh, ch, stderrs, negative_fraction) per snapshot.

    Snapshots must be prefixes of one growing ensemble, e.g. built with
    MomentAccumulator.prefix at increasing batch counts.  Prefixes too
    small to estimate (sign-degenerate denominators) are skipped: the
    series is a diagnostic and must not fail a run whose full-ensemble
    estimate is sound.
    """
    rows = []
    for snap in snapshots:
        try:
            result = bell_estimate(snap)
        except EstimationError:
            continue
        rows.append({
            "n": result.n_trajectories,
            "chsh": result.chsh,
            "ch": result.ch_ratio,
            "chsh_stderr": result.chsh_stderr,
            "ch_stderr": result.ch_stderr,
            "negative_fraction": result.negative_fraction,
        })
    return rows
