"""Synthetic dataset generators and a delimited-file loader.

Each of the four example posteriors has a generator here, deterministic
under its seed.  Datasets can be echoed to a canonical CSV whose sha256
checksum is recorded in run metadata, so a run archive pins down exactly
which data it saw.
"""

from __future__ import annotations

import hashlib
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import DecompositionError


@dataclass
class Dataset:
    """Feature rows with optional labels and a provenance record.

    ``provenance`` is either a synthetic descriptor (generator name and
    seed) or the source file path plus its checksum.
    """

    features: np.ndarray
    labels: Optional[np.ndarray] = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        if self.features.shape[0] < 1:
            raise ValueError("dataset needs at least one row")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape[0] != self.features.shape[0]:
                raise ValueError("labels and features disagree on row count")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def to_canonical_csv(self) -> str:
        """Deterministic CSV text: header then one row per record."""
        buf = io.StringIO()
        cols = [f"x{j}" for j in range(self.dim)]
        if self.labels is not None:
            cols.append("label")
        buf.write(",".join(cols) + "\n")
        for i in range(self.n_rows):
            cells = [format(v, ".17g") for v in self.features[i]]
            if self.labels is not None:
                cells.append(format(float(self.labels[i]), ".17g"))
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    def checksum(self) -> str:
        return hashlib.sha256(self.to_canonical_csv().encode()).hexdigest()

    def write_canonical_csv(self, path) -> str:
        """Write the canonical CSV; returns its sha256 checksum."""
        text = self.to_canonical_csv()
        Path(path).write_text(text)
        return hashlib.sha256(text.encode()).hexdigest()


def gen_gaussian_dataset(seed, n: int, mean, precision) -> Dataset:
    """N iid draws from the normal law with the given mean and precision."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    precision = np.atleast_2d(np.asarray(precision, dtype=float))
    d = mean.shape[0]
    if precision.shape != (d, d):
        raise ValueError("mean and precision dimensions disagree")
    try:
        chol_prec = np.linalg.cholesky(precision)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"precision is not positive definite: {exc}") from exc
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, d))
    # x = mean + L^-T z has covariance (L L^T)^-1 = precision^-1
    draws = mean + np.linalg.solve(chol_prec.T, z.T).T
    return Dataset(
        features=draws,
        provenance={"generator": "gaussian", "seed": int(seed), "n": int(n)},
    )


def gen_ica_sources(seed, m: int = 3, n: int = 1000):
    """Independent sources, a random mixing matrix, and the mixed signals.

    Source row 0 is Laplace(0, 1); rows 1..m-1 follow the density
    (1/4) sech^2(y/2), sampled by the inverse CDF y = log(u / (1 - u))
    (this is the standard logistic distribution).  The mixing matrix has
    iid standard normal entries, redrawn until its condition number is
    below 10.  Returns (sources, mixed, mixing) with sources and mixed
    of shape (m, n) and mixed = mixing @ sources exactly.
    """
    if m < 2:
        raise ValueError("need at least two sources")
    rng = np.random.default_rng(seed)
    sources = np.empty((m, n))
    sources[0] = rng.laplace(0.0, 1.0, size=n)
    u = rng.random((m - 1, n))
    sources[1:] = np.log(u / (1.0 - u))
    while True:
        mixing = rng.standard_normal((m, m))
        if np.linalg.cond(mixing) < 10.0:
            break
    return sources, mixing @ sources, mixing


def gen_logistic_dataset(seed, n: int, d: int, weight_scale: float = 1.0) -> Dataset:
    """Synthetic logistic-regression data: Gaussian features, Bernoulli labels.

    A ground-truth weight vector is drawn from N(0, weight_scale^2 I)
    and labels follow Bernoulli(sigmoid(x . w)).  Stands in for the
    benchmark credit dataset so tests never depend on an external file.
    """
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((n, d))
    w_true = weight_scale * rng.standard_normal(d)
    prob = 1.0 / (1.0 + np.exp(-features @ w_true))
    labels = (rng.random(n) < prob).astype(float)
    return Dataset(
        features=features,
        labels=labels,
        provenance={"generator": "logistic", "seed": int(seed), "n": int(n), "d": int(d)},
    )


@dataclass(frozen=True)
class Schema:
    """Column layout for a delimited text file.

    ``label_column`` indexes the label among the raw columns; when
    ``feature_columns`` is None every other column is a feature.  Labels
    are mapped to {0, 1} via ``label_map`` (defaults to mapping the two
    distinct values in sorted order).  Features are standardized per
    column unless disabled, and an intercept column of ones can be
    appended afterwards.
    """

    label_column: Optional[int] = None
    feature_columns: Optional[Sequence[int]] = None
    standardize: bool = True
    add_intercept: bool = False
    label_map: Optional[dict] = None
    delimiter: Optional[str] = None


class ParseError(ValueError):
    """A delimited file failed to parse; carries line and column."""

    def __init__(self, path, line: int, column: int, message: str):
        self.line = line
        self.column = column
        super().__init__(f"{path}:{line}:{column}: {message}")


def load_delimited_dataset(path, schema: Schema) -> Dataset:
    """Parse a comma- or whitespace-delimited numeric file.

    The delimiter is taken from the schema or sniffed from the first
    data line.  Row widths must be uniform and within the schema's
    column indices; violations are reported with line and column.
    """
    path = Path(path)
    raw_text = path.read_text()
    rows = []
    width = None
    for lineno, line in enumerate(raw_text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        delim = schema.delimiter
        if delim is None:
            delim = "," if "," in line else None
        cells = line.split(delim)
        if width is None:
            width = len(cells)
        elif len(cells) != width:
            raise ParseError(path, lineno, len(cells), f"expected {width} columns, found {len(cells)}")
        parsed = []
        for colno, cell in enumerate(cells, start=1):
            try:
                parsed.append(float(cell))
            except ValueError:
                raise ParseError(path, lineno, colno, f"not numeric: {cell!r}") from None
        rows.append(parsed)
    if not rows:
        raise ParseError(path, 1, 1, "file holds no data rows")
    raw = np.asarray(rows)

    if schema.label_column is not None and not -raw.shape[1] <= schema.label_column < raw.shape[1]:
        raise ValueError(f"label column {schema.label_column} outside {raw.shape[1]} columns")
    feat_cols = schema.feature_columns
    if feat_cols is None:
        feat_cols = [j for j in range(raw.shape[1]) if j != schema.label_column % raw.shape[1]] \
            if schema.label_column is not None else list(range(raw.shape[1]))
    for j in feat_cols:
        if not 0 <= j < raw.shape[1]:
            raise ValueError(f"feature column {j} outside {raw.shape[1]} columns")
    features = raw[:, list(feat_cols)]

    labels = None
    if schema.label_column is not None:
        labels = raw[:, schema.label_column]
        mapping = schema.label_map
        if mapping is None:
            values = np.unique(labels)
            if values.shape[0] != 2:
                raise ValueError(f"expected two label values, found {values.shape[0]}")
            mapping = {values[0]: 0.0, values[1]: 1.0}
        try:
            labels = np.asarray([mapping[v] for v in labels], dtype=float)
        except KeyError as exc:
            raise ValueError(f"label value {exc.args[0]!r} missing from label_map") from None

    if schema.standardize:
        mu = features.mean(axis=0)
        sd = features.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        features = (features - mu) / sd
    if schema.add_intercept:
        features = np.hstack([features, np.ones((features.shape[0], 1))])

    return Dataset(
        features=features,
        labels=labels,
        provenance={
            "path": str(path),
            "checksum": hashlib.sha256(raw_text.encode()).hexdigest(),
        },
    )
