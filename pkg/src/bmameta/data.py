"""Study-level data handling: ingestion, effect-size helpers, reporting transforms.

A :class:`Dataset` is an ordered, immutable collection of study records
(effect estimate, standard error, optional cluster label, covariates).
Two effect-size helpers are provided (Fisher's z from correlations, log
odds ratio from a reported OR with confidence interval) together with the
monotone transforms used when reporting results on a different scale.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import ndtri


class DataError(ValueError):
    """Raised when input data violate the dataset contract."""


class Measure(str, enum.Enum):
    """Supported effect-size measures.

    Default prior profiles exist for SMD, LOGOR and FISHERS_Z; LOGRR,
    RISK_DIFFERENCE and LOGHR are reachable through the medicine catalog
    only, and UNSPECIFIED forces fully custom priors.
    """

    SMD = "smd"
    LOGOR = "logor"
    LOGRR = "logrr"
    RISK_DIFFERENCE = "rd"
    LOGHR = "loghr"
    FISHERS_Z = "fishers_z"
    UNSPECIFIED = "unspecified"


class CovariateKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"


class Transform(str, enum.Enum):
    """Monotone reporting transforms; quantiles map through them endpoint-wise."""

    IDENTITY = "identity"
    FISHERS_Z_TO_R = "fishers_z_to_r"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class StudyRecord:
    """One effect estimate with its standard error and metadata.

    ``se`` must be strictly positive and finite, ``y`` finite.  Covariate
    values are floats (continuous) or strings (categorical levels).
    """

    id: str
    y: float
    se: float
    cluster: str | None = None
    covariates: Mapping[str, float | str] = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.y):
            raise DataError(f"study {self.id!r}: non-finite effect {self.y!r}")
        if not (math.isfinite(self.se) and self.se > 0):
            raise DataError(f"study {self.id!r}: standard error must be finite and > 0, got {self.se!r}")


@dataclass(frozen=True)
class Dataset:
    """Ordered study records plus per-covariate kind declarations."""

    records: tuple[StudyRecord, ...]
    measure: Measure = Measure.UNSPECIFIED
    covariate_kinds: Mapping[str, CovariateKind] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.records) == 0:
            raise DataError("dataset needs at least one record")
        names = set(self.covariate_kinds)
        clustered = [r.cluster is not None for r in self.records]
        if any(clustered) and not all(clustered):
            missing = next(i for i, c in enumerate(clustered) if not c)
            raise DataError(f"row {missing + 1}: cluster label missing while other rows carry one")
        for i, rec in enumerate(self.records):
            if set(rec.covariates) != names:
                raise DataError(f"row {i + 1}: covariates {sorted(rec.covariates)} do not match declared {sorted(names)}")
            for name, kind in self.covariate_kinds.items():
                value = rec.covariates[name]
                if kind is CovariateKind.CONTINUOUS and not isinstance(value, float):
                    raise DataError(f"row {i + 1}: covariate {name!r} declared continuous but holds {value!r}")

    def __len__(self):
        return len(self.records)

    @property
    def y(self) -> np.ndarray:
        return np.array([r.y for r in self.records], dtype=float)

    @property
    def se(self) -> np.ndarray:
        return np.array([r.se for r in self.records], dtype=float)

    @property
    def clusters(self) -> tuple[str, ...] | None:
        if self.records[0].cluster is None:
            return None
        return tuple(r.cluster for r in self.records)

    def covariate_levels(self, name: str) -> tuple[str, ...]:
        """Observed levels of a categorical covariate, in first-appearance order."""
        if self.covariate_kinds.get(name) is not CovariateKind.CATEGORICAL:
            raise DataError(f"covariate {name!r} is not categorical")
        seen: dict[str, None] = {}
        for r in self.records:
            seen.setdefault(str(r.covariates[name]), None)
        return tuple(seen)

    def covariate_values(self, name: str) -> np.ndarray:
        if name not in self.covariate_kinds:
            raise DataError(f"unknown covariate {name!r}")
        return np.array([r.covariates[name] for r in self.records])

    def to_json(self) -> dict:
        return {
            "measure": self.measure.value,
            "covariate_kinds": {k: v.value for k, v in self.covariate_kinds.items()},
            "records": [
                {
                    "id": r.id,
                    "y": r.y,
                    "se": r.se,
                    "cluster": r.cluster,
                    "covariates": dict(r.covariates),
                }
                for r in self.records
            ],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Dataset":
        kinds = {k: CovariateKind(v) for k, v in doc.get("covariate_kinds", {}).items()}
        records = []
        for rec in doc["records"]:
            covs = {
                name: float(value) if kinds[name] is CovariateKind.CONTINUOUS else str(value)
                for name, value in rec.get("covariates", {}).items()
            }
            records.append(
                StudyRecord(
                    id=str(rec["id"]),
                    y=float(rec["y"]),
                    se=float(rec["se"]),
                    cluster=rec.get("cluster"),
                    covariates=covs,
                )
            )
        return cls(records=tuple(records), measure=Measure(doc["measure"]), covariate_kinds=kinds)


def _parse_float(raw: str, column: str, row: int) -> float:
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise DataError(f"row {row}: column {column!r} value {raw!r} is not numeric") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}: column {column!r} value {raw!r} is not finite")
    return value


def load_csv(
    path,
    schema: Mapping[str, object],
    measure: Measure = Measure.UNSPECIFIED,
) -> Dataset:
    """Load a Dataset from a comma-separated file.

    Parameters
    ----------
    path : str or pathlib.Path
        CSV file: first row is the header, UTF-8, ``.`` decimal separator.
    schema : mapping
        Column mapping with keys ``effect`` and ``se`` (required), ``label``
        and ``cluster`` (optional column names), and ``covariates`` (either a
        list of column names, letting the kind be inferred from the values,
        or a name -> ``"continuous"``/``"categorical"`` mapping to override
        the inference).
    measure : Measure
        Effect-size measure the effect column is expressed in.

    Raises
    ------
    DataError
        Missing columns, non-numeric or non-finite values, non-positive
        standard errors, or an incomplete cluster column; messages carry the
        1-based data row number.
    """
    schema = dict(schema)
    effect_col = schema.get("effect")
    se_col = schema.get("se")
    if not effect_col:
        raise DataError("no effect-size column mapped")
    if not se_col:
        raise DataError("no standard-error column mapped")
    label_col = schema.get("label")
    cluster_col = schema.get("cluster")
    cov_spec = schema.get("covariates", [])
    if isinstance(cov_spec, Mapping):
        cov_cols = list(cov_spec)
        kind_override = {k: CovariateKind(v) for k, v in cov_spec.items() if v is not None}
    else:
        cov_cols = list(cov_spec)
        kind_override = {}

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [effect_col, se_col] + [c for c in (label_col, cluster_col) if c] + cov_cols
        for col in needed:
            if col not in header:
                raise DataError(f"column {col!r} not present in {sorted(header)}")
        raw_rows = list(reader)
    if not raw_rows:
        raise DataError("dataset needs at least one record")

    # Kind inference: a covariate column is continuous iff every cell parses
    # as a finite float; empty cells are rejected outright.
    kinds: dict[str, CovariateKind] = {}
    for col in cov_cols:
        for i, row in enumerate(raw_rows):
            if row.get(col) is None or str(row[col]).strip() == "":
                raise DataError(f"row {i + 1}: missing value for covariate {col!r}")
        if col in kind_override:
            kinds[col] = kind_override[col]
            continue
        numeric = True
        for row in raw_rows:
            try:
                v = float(row[col])
                if not math.isfinite(v):
                    numeric = False
            except ValueError:
                numeric = False
            if not numeric:
                break
        kinds[col] = CovariateKind.CONTINUOUS if numeric else CovariateKind.CATEGORICAL

    records = []
    for i, row in enumerate(raw_rows, start=1):
        y = _parse_float(row[effect_col], effect_col, i)
        se = _parse_float(row[se_col], se_col, i)
        if se <= 0:
            raise DataError(f"row {i}: standard error must be > 0, got {se}")
        cluster = None
        if cluster_col:
            cluster = (row[cluster_col] or "").strip()
            if not cluster:
                raise DataError(f"row {i}: empty cluster label")
        covs: dict[str, float | str] = {}
        for col in cov_cols:
            if kinds[col] is CovariateKind.CONTINUOUS:
                covs[col] = _parse_float(row[col], col, i)
            else:
                covs[col] = str(row[col]).strip()
        label = (row[label_col].strip() if label_col and row.get(label_col) else f"study {i}")
        records.append(StudyRecord(id=label, y=y, se=se, cluster=cluster, covariates=covs))

    return Dataset(records=tuple(records), measure=measure, covariate_kinds=kinds)


def fishers_z(r: float, n: int) -> tuple[float, float]:
    """Fisher's z transform of a correlation with its standard error.

    ``z = atanh(r)`` and ``se = 1 / sqrt(n - 3)``; requires ``|r| < 1`` and
    an integer sample size ``n >= 4`` (the boundary ``n = 4`` gives se 1).
    """
    if not (isinstance(n, (int, np.integer)) and n >= 4):
        raise DataError(f"sample size must be an integer >= 4, got {n!r}")
    if not (abs(r) < 1):
        raise DataError(f"correlation must lie strictly inside (-1, 1), got {r!r}")
    return math.atanh(r), 1.0 / math.sqrt(n - 3)


def logor_from_ci(or_: float, lo: float, hi: float, level: float = 0.95) -> tuple[float, float]:
    """Log odds ratio and standard error back-computed from a reported CI.

    ``logor = ln(or)`` and ``se = (ln hi - ln lo) / (2 q)`` with ``q`` the
    standard-normal quantile at ``(1 + level) / 2``.  The interval must
    satisfy ``0 < lo < or < hi``.
    """
    if not (0.0 < level < 1.0):
        raise DataError(f"coverage level must lie in (0, 1), got {level!r}")
    if not (0 < lo < or_ < hi):
        raise DataError(f"need 0 < lo < or < hi, got lo={lo!r}, or={or_!r}, hi={hi!r}")
    q = float(ndtri((1.0 + level) / 2.0))
    return math.log(or_), (math.log(hi) - math.log(lo)) / (2.0 * q)


def apply_transform(transform: Transform, values):
    """Apply a reporting transform elementwise.

    All three transforms are strictly increasing, so credible-interval
    endpoints and quantiles may be transformed endpoint-wise.
    """
    arr = np.asarray(values, dtype=float)
    if transform is Transform.IDENTITY:
        out = arr
    elif transform is Transform.FISHERS_Z_TO_R:
        out = np.tanh(arr)
    elif transform is Transform.EXPONENTIAL:
        out = np.exp(arr)
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown transform {transform!r}")
    if np.isscalar(values) or np.ndim(values) == 0:
        return float(out)
    return out


def quantile(draws, q):
    """Order-statistic (inverted-CDF) quantile.

    Interpolation-free so that monotone transforms commute with quantiles
    exactly: ``quantile(t(D), q) == t(quantile(D, q))``.
    """
    return np.quantile(np.asarray(draws, dtype=float), q, method="inverted_cdf")


def bundled_dataset_path(name: str) -> str:
    """Filesystem path of one of the packaged example datasets.

    Available: ``cohen1981``, ``hasselblad1992``, ``konstantopoulos2011``.
    See ``datasets/PROVENANCE.md`` for how these files were produced.
    """
    from importlib import resources

    res = resources.files("bmameta").joinpath(f"datasets/{name}.csv")
    if not res.is_file():
        available = ", ".join(sorted(p.name[:-4] for p in resources.files("bmameta").joinpath("datasets").iterdir() if p.name.endswith(".csv")))
        raise DataError(f"no bundled dataset {name!r}; available: {available}")
    return str(res)


def save_json(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataset.to_json(), fh, indent=1, sort_keys=True)


def load_json(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return Dataset.from_json(json.load(fh))
