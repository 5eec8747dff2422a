"""Core domain types for segmented linear regression.

A dataset is a response vector ``y`` and a ``T x q`` matrix of per-time
regressor rows.  A partition is an ordered tuple of break times splitting
``1..T`` into ``m + 1`` segments; every regression coefficient switches at
each break (pure structural change), so the stacked design matrix is block
diagonal with one ``q``-wide block per segment.

Time indices are 1-based in the public interface.  A break at time ``b``
means segment ``p`` ends at ``b`` and segment ``p + 1`` starts at ``b + 1``;
with the boundary conventions ``T_0 = 0`` and ``T_{m+1} = T``, segment ``p``
covers times ``T_{p-1} + 1 .. T_p``.  All types are immutable after
construction and all operations are pure, so everything here is safe to
share across threads.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InvalidPartition, RestrictionRankDeficient
from .linalg import RANK_RTOL


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class RegressionData:
    """Observed response and regressor rows.

    Parameters
    ----------
    y : np.ndarray, shape (T,)
        Response vector.
    z : np.ndarray, shape (T, q)
        Regressor row for each time; include a constant column explicitly
        if the model has an intercept.
    """

    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        y = _readonly(np.asarray(self.y, dtype=float).reshape(-1))
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z.reshape(-1, 1)
        z = _readonly(z)
        if y.shape[0] != z.shape[0]:
            raise DimensionMismatch(
                f"y has {y.shape[0]} rows but z has {z.shape[0]}"
            )
        if y.shape[0] < 2:
            raise DimensionMismatch("need at least two observations")
        if z.shape[1] < 1:
            raise DimensionMismatch("need at least one regressor column")
        if not (np.isfinite(y).all() and np.isfinite(z).all()):
            raise DimensionMismatch("non-finite values in y or z")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]

    @property
    def n_regressors(self) -> int:
        return self.z.shape[1]


@dataclass(frozen=True)
class Partition:
    """Ordered break times ``(T_1, ..., T_m)`` with ``1 <= T_1 < ... < T_m < T``.

    An empty tuple means no breaks (a single segment).  Validity against a
    specific sample size is checked by :meth:`validate_for`, since the
    partition itself does not carry ``T``.
    """

    breaks: tuple[int, ...]

    def __post_init__(self):
        breaks = tuple(int(b) for b in self.breaks)
        if any(b < 1 for b in breaks):
            raise InvalidPartition(f"break times must be >= 1, got {breaks}")
        if any(b >= c for b, c in zip(breaks, breaks[1:])):
            raise InvalidPartition(f"break times must be strictly increasing: {breaks}")
        object.__setattr__(self, "breaks", breaks)

    @property
    def m(self) -> int:
        return len(self.breaks)

    @property
    def n_segments(self) -> int:
        return len(self.breaks) + 1

    def validate_for(self, n_obs: int) -> None:
        """Raise ``InvalidPartition`` unless every break lies in ``1..T-1``."""
        if self.breaks and self.breaks[-1] >= n_obs:
            raise InvalidPartition(
                f"last break {self.breaks[-1]} must be < T = {n_obs}"
            )

    def bounds(self, n_obs: int) -> tuple[int, ...]:
        """Segment boundaries ``(0, T_1, ..., T_m, T)``."""
        self.validate_for(n_obs)
        return (0, *self.breaks, n_obs)

    def segments(self, n_obs: int) -> list[tuple[int, int]]:
        """0-based half-open ``[start, end)`` index ranges, one per segment."""
        b = self.bounds(n_obs)
        return [(b[p], b[p + 1]) for p in range(self.n_segments)]


@dataclass(frozen=True)
class Restriction:
    """Linear hypothesis ``matrix @ delta = rhs`` on the stacked coefficients.

    ``matrix`` must have full row rank; rank is verified numerically at
    construction (smallest singular value above ``RANK_RTOL`` times the
    largest).
    """

    matrix: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        if mat.ndim != 2:
            raise DimensionMismatch("restriction matrix must be 2-D")
        rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        if rhs.shape[0] != mat.shape[0]:
            raise DimensionMismatch(
                f"restriction has {mat.shape[0]} rows but rhs has {rhs.shape[0]}"
            )
        if mat.shape[0] > mat.shape[1]:
            raise RestrictionRankDeficient(
                f"more restrictions ({mat.shape[0]}) than coefficients ({mat.shape[1]})"
            )
        sv = np.linalg.svd(mat, compute_uv=False)
        if sv[-1] <= RANK_RTOL * sv[0]:
            raise RestrictionRankDeficient("restriction matrix is row rank deficient")
        object.__setattr__(self, "matrix", _readonly(mat))
        object.__setattr__(self, "rhs", _readonly(rhs))

    @property
    def k(self) -> int:
        """Number of (independent) restriction rows."""
        return self.matrix.shape[0]

    @property
    def n_coefs(self) -> int:
        return self.matrix.shape[1]

    def check_dims(self, n_coefs: int) -> None:
        if self.n_coefs != n_coefs:
            raise DimensionMismatch(
                f"restriction has {self.n_coefs} columns, model has {n_coefs} coefficients"
            )


@dataclass(frozen=True)
class SegmentedDesign:
    """Block-diagonal stacked design for a dataset under a partition.

    Row ``t`` carries the regressor row of time ``t`` in the column block of
    the segment containing ``t`` and zeros elsewhere, so ``zbar.T @ zbar``
    is block diagonal with one segment Gram matrix per block.
    """

    zbar: np.ndarray
    partition: Partition

    @property
    def n_obs(self) -> int:
        return self.zbar.shape[0]

    @property
    def n_coefs(self) -> int:
        return self.zbar.shape[1]

    @property
    def seg_width(self) -> int:
        return self.zbar.shape[1] // self.partition.n_segments

    def segment_block(self, p: int) -> np.ndarray:
        """Nonzero rows of segment ``p``'s column block (its raw regressors)."""
        s, e = self.partition.segments(self.n_obs)[p]
        q = self.seg_width
        return self.zbar[s:e, p * q:(p + 1) * q]


def build_design(data: RegressionData, partition: Partition) -> SegmentedDesign:
    """Assemble the block-diagonal design matrix for ``data`` under ``partition``.

    Parameters
    ----------
    data : RegressionData
    partition : Partition
        Breaks must satisfy ``1 <= T_1 < ... < T_m < T``.

    Returns
    -------
    SegmentedDesign

    Raises
    ------
    InvalidPartition
        If a break time is out of range for ``data``.
    """
    t_total, q = data.n_obs, data.n_regressors
    partition.validate_for(t_total)
    zbar = np.zeros((t_total, partition.n_segments * q))
    for p, (s, e) in enumerate(partition.segments(t_total)):
        zbar[s:e, p * q:(p + 1) * q] = data.z[s:e]
    return SegmentedDesign(zbar=_readonly(zbar), partition=partition)


def validate_segment_rank(design: SegmentedDesign) -> bool:
    """True iff every segment Gram matrix is numerically nonsingular.

    A segment passes when the smallest singular value of its regressor block
    exceeds ``RANK_RTOL`` times the largest (an empty or short segment with
    fewer rows than columns always fails).
    """
    q = design.seg_width
    for p in range(design.partition.n_segments):
        block = design.segment_block(p)
        if block.shape[0] < q:
            return False
        sv = np.linalg.svd(block, compute_uv=False)
        if sv.size == 0 or sv[-1] <= RANK_RTOL * sv[0]:
            return False
    return True


# ---------------------------------------------------------------------------
# CSV ingestion.  Schema: header "t,y,z1,...,zq"; rows sorted by t ascending
# with t = 1..T contiguous; decimal floats; UTF-8.


def read_series_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Read a series file, returning ``(t, y, z)``.

    ``z`` is None when the file carries only ``t`` and ``y`` columns (callers
    that synthesize regressors from ``t``, such as trend-basis expansion,
    accept that form; :func:`load_regression_csv` does not).
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DimensionMismatch(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header[:2] != ["t", "y"]:
            raise DimensionMismatch(f"{path}: header must start with 't,y'")
        zcols = header[2:]
        expected = [f"z{i + 1}" for i in range(len(zcols))]
        if zcols != expected:
            raise DimensionMismatch(
                f"{path}: regressor columns must be named z1..z{len(zcols)}"
            )
        rows = [row for row in reader if row]
    t = np.array([float(r[0]) for r in rows])
    y = np.array([float(r[1]) for r in rows])
    if not np.array_equal(t, np.arange(1, len(rows) + 1)):
        raise DimensionMismatch(f"{path}: t must be contiguous 1..T")
    z = None
    if zcols:
        z = np.array([[float(v) for v in r[2:]] for r in rows])
        if z.shape[1] != len(zcols):
            raise DimensionMismatch(f"{path}: ragged rows")
    return t, y, z


def load_regression_csv(path) -> RegressionData:
    """Load a full ``t,y,z1,...,zq`` file into a :class:`RegressionData`."""
    _, y, z = read_series_csv(path)
    if z is None:
        raise DimensionMismatch(f"{path}: no regressor columns (expected z1..zq)")
    return RegressionData(y=y, z=z)


def write_regression_csv(path, data: RegressionData) -> None:
    """Write ``data`` in the ``t,y,z1,...,zq`` schema."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "y"] + [f"z{i + 1}" for i in range(data.n_regressors)])
        for i in range(data.n_obs):
            writer.writerow(
                [i + 1, repr(float(data.y[i]))]
                + [repr(float(v)) for v in data.z[i]]
            )
