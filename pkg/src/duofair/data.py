"""Dataset containers, benchmark loaders, splits, and synthetic instances.

Everything downstream consumes the :class:`Dataset` container: a standardized
float feature matrix plus binary sensitive-group and label vectors. Loaders
for the tabular benchmarks normalize their raw CSV conventions into that
shape; :func:`make_synthetic` draws a logistic-model instance with a
controllable amount of group disparity; :func:`split` produces deterministic
train/test partitions re-standardized on the training side.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from ._stats import sigmoid
from .errors import DataError, DimensionError, GroupError, SchemaError, SplitError

DATASET_NAMES = ("adult", "bank", "lsac", "compas")

_SD_FLOOR = 1e-12
_CORR_LIMIT = 0.999

# Reserved column names in the interchange CSV format.
_SENSITIVE_COL = "sensitive"
_LABEL_COL = "label"
_MASK_COL = "is_test"


@dataclass(frozen=True)
class Standardizer:
    """Per-column affine map x -> (x - mean) / sd.

    `mean`/`sd` always describe the transform from the *original* (raw,
    already-encoded) columns to the current feature values, so composed
    standardizations stay traceable back to raw units.
    """

    mean: np.ndarray
    sd: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).copy()
        sd = np.asarray(self.sd, dtype=np.float64).copy()
        if mean.shape != sd.shape or mean.ndim != 1:
            raise DimensionError("standardizer mean/sd must be matching 1-D arrays")
        if np.any(sd <= 0) or not np.all(np.isfinite(mean)) or not np.all(np.isfinite(sd)):
            raise DataError("standardizer statistics must be finite with positive sd")
        mean.setflags(write=False)
        sd.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sd", sd)

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        """Stats of X (population sd). Constant columns get sd 1 so they are
        centered but not rescaled."""
        X = np.asarray(X, dtype=np.float64)
        mean = X.mean(axis=0)
        sd = X.std(axis=0)
        sd = np.where(sd < _SD_FLOOR, 1.0, sd)
        return cls(mean=mean, sd=sd)

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.mean.shape[0]:
            raise DimensionError(
                f"standardizer has {self.mean.shape[0]} columns, input has {X.shape[-1]}"
            )
        return (X - self.mean) / self.sd

    def then(self, other: "Standardizer") -> "Standardizer":
        """Composition: first self, then `other` on self's output."""
        return Standardizer(
            mean=self.mean + self.sd * other.mean,
            sd=self.sd * other.sd,
        )

    def select(self, idx: Sequence[int]) -> "Standardizer":
        idx = np.asarray(idx, dtype=int)
        return Standardizer(mean=self.mean[idx], sd=self.sd[idx])


def _frozen_array(a, dtype) -> np.ndarray:
    out = np.ascontiguousarray(np.asarray(a, dtype=dtype))
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Dataset:
    """Immutable preprocessed dataset.

    features       : (n, p) float64, standardized columns
    sensitive      : (n,) int8 in {0, 1}
    labels         : (n,) int8 in {0, 1}
    feature_names  : length-p column names
    standardizer   : transform raw-encoded columns -> `features`
    test_mask      : optional (n,) bool marking an official held-out part
    meta           : JSON-able provenance (mappings, drop counts, generator...)
    """

    features: np.ndarray
    sensitive: np.ndarray
    labels: np.ndarray
    feature_names: tuple
    standardizer: Standardizer
    test_mask: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        X = _frozen_array(self.features, np.float64)
        if X.ndim != 2:
            raise DimensionError(f"features must be 2-D, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain non-finite values")
        z = _frozen_array(self.sensitive, np.int8)
        y = _frozen_array(self.labels, np.int8)
        n = X.shape[0]
        if z.shape != (n,) or y.shape != (n,):
            raise DimensionError("sensitive/labels must be 1-D arrays matching features rows")
        for name, v in (("sensitive", z), ("labels", y)):
            bad = np.setdiff1d(np.unique(v), [0, 1])
            if bad.size:
                raise SchemaError(f"{name} must be coded 0/1, found {bad.tolist()}")
        if n == 0:
            raise DataError("dataset has no rows")
        if not (np.any(z == 0) and np.any(z == 1)):
            raise GroupError("both sensitive groups must be non-empty")
        names = tuple(str(c) for c in self.feature_names)
        if len(names) != X.shape[1]:
            raise DimensionError(
                f"{len(names)} feature names for {X.shape[1]} columns"
            )
        mask = self.test_mask
        if mask is not None:
            mask = _frozen_array(mask, bool)
            if mask.shape != (n,):
                raise DimensionError("test_mask length must match rows")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "sensitive", z)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)
        object.__setattr__(self, "test_mask", mask)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def group_sizes(self) -> tuple:
        return int(np.sum(self.sensitive == 0)), int(np.sum(self.sensitive == 1))

    def subset(self, idx: np.ndarray, meta_update: Mapping | None = None) -> "Dataset":
        """New Dataset restricted to rows `idx` (keeps the standardizer)."""
        meta = dict(self.meta)
        if meta_update:
            meta.update(meta_update)
        return Dataset(
            features=self.features[idx],
            sensitive=self.sensitive[idx],
            labels=self.labels[idx],
            feature_names=self.feature_names,
            standardizer=self.standardizer,
            test_mask=None if self.test_mask is None else self.test_mask[idx],
            meta=meta,
        )

    def with_labels(self, labels: np.ndarray, meta_update: Mapping | None = None) -> "Dataset":
        """New Dataset with replaced labels (used by label repair)."""
        meta = dict(self.meta)
        if meta_update:
            meta.update(meta_update)
        return Dataset(
            features=self.features,
            sensitive=self.sensitive,
            labels=labels,
            feature_names=self.feature_names,
            standardizer=self.standardizer,
            test_mask=self.test_mask,
            meta=meta,
        )


@dataclass(frozen=True)
class SplitSpec:
    """How to partition a dataset into train/test.

    mode 'random_ratio' draws `repeats` independent shuffled splits at the
    given train fraction; mode 'fixed_test_file' uses the dataset's official
    test_mask and ignores ratio/repeats.
    """

    mode: str = "random_ratio"
    ratio: float = 0.8
    repeats: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("random_ratio", "fixed_test_file"):
            raise SplitError(f"unknown split mode {self.mode!r}")
        if not (0.0 < self.ratio < 1.0):
            raise SplitError("split ratio must be strictly between 0 and 1")
        if self.repeats < 1:
            raise SplitError("repeats must be >= 1")
        if self.seed < 0:
            raise SplitError("seed must be non-negative")


def _restandardize(ds: Dataset, rows_train: np.ndarray, rows_test: np.ndarray,
                   split_info: dict) -> tuple:
    stats = Standardizer.fit(ds.features[rows_train])
    composed = ds.standardizer.then(stats)

    def build(rows, part):
        info = dict(split_info, part=part)
        meta = dict(ds.meta)
        meta["split"] = info
        return Dataset(
            features=stats.apply(ds.features[rows]),
            sensitive=ds.sensitive[rows],
            labels=ds.labels[rows],
            feature_names=ds.feature_names,
            standardizer=composed,
            test_mask=None,
            meta=meta,
        )

    return build(rows_train, "train"), build(rows_test, "test")


def split(ds: Dataset, spec: SplitSpec, repeat_index: int = 0) -> tuple:
    """Deterministic train/test partition.

    Returns (train, test), each re-standardized with statistics of the
    training side. Identical inputs give byte-identical outputs. A random
    split that leaves either side without both sensitive groups is redrawn
    (bounded); persistent failure raises SplitError.
    """
    if not (0 <= repeat_index < max(spec.repeats, 1)):
        raise SplitError(
            f"repeat_index {repeat_index} out of range for {spec.repeats} repeats"
        )
    if spec.mode == "fixed_test_file":
        if ds.test_mask is None:
            raise SplitError("dataset has no official test part; use random_ratio")
        rows_test = np.flatnonzero(ds.test_mask)
        rows_train = np.flatnonzero(~ds.test_mask)
        if rows_test.size == 0 or rows_train.size == 0:
            raise SplitError("official split has an empty side")
        info = {"mode": spec.mode}
        return _restandardize(ds, rows_train, rows_test, info)

    n = ds.n
    n_train = int(round(spec.ratio * n))
    if not (1 <= n_train <= n - 1):
        raise SplitError(f"ratio {spec.ratio} leaves an empty side for n={n}")
    rng = np.random.default_rng([spec.seed, repeat_index])
    z = ds.sensitive
    for _ in range(100):
        perm = rng.permutation(n)
        tr, te = perm[:n_train], perm[n_train:]
        ok = all(
            np.any(z[part] == g) for part in (tr, te) for g in (0, 1)
        )
        if ok:
            info = {"mode": spec.mode, "ratio": spec.ratio,
                    "seed": spec.seed, "repeat_index": repeat_index}
            return _restandardize(ds, np.sort(tr), np.sort(te), info)
    raise SplitError("could not draw a split keeping both groups on both sides")


# ---------------------------------------------------------------------------
# synthetic instances


def make_synthetic(n: int, p: int, group_gap: float, seed: int) -> Dataset:
    """Logistic-model instance with a tunable group disparity.

    A unit-norm direction w generates both the labels and the disparity:
    group 1's Gaussian features are shifted by group_gap along w, and labels
    are Bernoulli of sigmoid(x @ w). The Bayes score of group 1 is therefore
    shifted upward by group_gap while the generating rule stays a plain
    linear-logistic function of the features, so trained models can both
    reproduce and repair the disparity. group_gap = 0 gives a symmetric,
    demographically neutral instance. The generating coefficients (in
    standardized feature coordinates) are stored in meta['generator'] so
    tests can evaluate the ground-truth rule.
    """
    if n < 4:
        raise DataError("need at least 4 rows")
    if p < 1:
        raise DataError("need at least 1 feature")
    rng = np.random.default_rng(seed)
    z = rng.integers(0, 2, size=n).astype(np.int8)
    # keep both groups present regardless of the draw
    if not np.any(z == 0):
        z[0] = 0
    if not np.any(z == 1):
        z[0] = 1
    w = rng.standard_normal(p)
    w = w / np.linalg.norm(w)
    X = rng.standard_normal((n, p)) + group_gap * np.outer(z, w)
    raw_score = X @ w
    y = (rng.random(n) < sigmoid(raw_score)).astype(np.int8)

    stats = Standardizer.fit(X)
    feats = stats.apply(X)
    # generating rule re-expressed on the standardized columns
    true_w = w * stats.sd
    true_b = float(stats.mean @ w)
    meta = {
        "dataset": "synthetic",
        "generator": {
            "weights": [float(v) for v in true_w],
            "bias": true_b,
            "group_gap": float(group_gap),
            "seed": int(seed),
        },
    }
    return Dataset(
        features=feats,
        sensitive=z,
        labels=y,
        feature_names=tuple(f"x{j}" for j in range(p)),
        standardizer=stats,
        meta=meta,
    )


def generator_scores(ds: Dataset) -> np.ndarray:
    """Ground-truth Bayes scores of a synthetic dataset's generating rule."""
    gen = ds.meta.get("generator")
    if gen is None:
        raise DataError("dataset carries no generator metadata")
    w = np.asarray(gen["weights"], dtype=np.float64)
    return ds.features @ w + gen["bias"]


# ---------------------------------------------------------------------------
# benchmark loaders

_ADULT_COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "income",
]

_COMPAS_FEATURES = ["sex", "age", "age_cat", "juv_fel_count", "priors_count",
                    "c_charge_degree"]


def _strip_strings(df: pd.DataFrame) -> pd.DataFrame:
    out = df.copy()
    for c in out.columns:
        if out[c].dtype == object:
            out[c] = out[c].str.strip()
    return out


def _binary_from_values(series: pd.Series, ones: set, name: str,
                        known: set | None = None) -> np.ndarray:
    """Map a column to {0,1} with `ones` -> 1; unknown values raise."""
    if pd.api.types.is_numeric_dtype(series):
        vals = series.to_numpy()
        uniq = set(np.unique(vals[~pd.isna(vals)]).tolist())
        if not uniq <= {0, 1, 0.0, 1.0}:
            raise SchemaError(f"column {name!r} is numeric but not 0/1 coded")
        return (vals > 0.5).astype(np.int8)
    vals = series.astype(str).str.strip()
    if known is not None:
        unexpected = set(vals.unique()) - known
        if unexpected:
            raise SchemaError(
                f"column {name!r} has unexpected values {sorted(unexpected)}"
            )
    return vals.isin(ones).to_numpy().astype(np.int8)


def _require_columns(df: pd.DataFrame, cols: Sequence[str], where: str):
    missing = [c for c in cols if c not in df.columns]
    if missing:
        raise SchemaError(f"{where}: missing required columns {missing}")


def _one_hot_levels(parts: list, col: str) -> list:
    levels = set()
    for df in parts:
        levels.update(df[col].dropna().astype(str).str.strip().unique())
    return sorted(levels)


def _assemble(parts: list, labels: list, sensitive: list, name: str,
              meta_extra: dict) -> Dataset:
    """Shared tail of every loader: encode, prune, standardize, concatenate.

    `parts[0]` is the fit part (training side of an official split, or the
    whole data when there is a single part). Categorical columns are one-hot
    encoded over the union of levels with the first (sorted) level dropped;
    all columns are standardized with fit-part statistics; near-constant and
    near-duplicate columns (|r| > 0.999 against an earlier kept column) are
    removed.
    """
    columns = list(parts[0].columns)
    for df in parts[1:]:
        if list(df.columns) != columns:
            raise SchemaError("parts of an official split disagree on columns")

    col_names: list = []
    col_arrays = [[] for _ in parts]
    for col in columns:
        if all(pd.api.types.is_numeric_dtype(df[col]) for df in parts):
            col_names.append(col)
            for k, df in enumerate(parts):
                col_arrays[k].append(df[col].to_numpy(dtype=np.float64))
        else:
            levels = _one_hot_levels(parts, col)
            if len(levels) < 2:
                continue  # single-valued category carries nothing
            for lvl in levels[1:]:
                col_names.append(f"{col}={lvl}")
                for k, df in enumerate(parts):
                    vals = df[col].astype(str).str.strip().to_numpy()
                    col_arrays[k].append((vals == lvl).astype(np.float64))

    mats = [np.column_stack(arrs) for arrs in col_arrays]
    fit = mats[0]

    # degenerate columns (constant on the fit part)
    sd = fit.std(axis=0)
    keep = sd >= _SD_FLOOR
    dropped_degenerate = [c for c, k in zip(col_names, keep) if not k]
    mats = [m[:, keep] for m in mats]
    col_names = [c for c, k in zip(col_names, keep) if k]
    fit = mats[0]

    stats = Standardizer.fit(fit)
    fit_std = stats.apply(fit)

    # near-duplicate columns, judged left to right on the fit part
    nfit = fit_std.shape[0]
    corr = (fit_std.T @ fit_std) / nfit
    kept_idx: list = []
    dropped_corr: list = []
    for j in range(len(col_names)):
        dup_of = None
        for k in kept_idx:
            if abs(corr[j, k]) > _CORR_LIMIT:
                dup_of = k
                break
        if dup_of is None:
            kept_idx.append(j)
        else:
            dropped_corr.append((col_names[j], col_names[dup_of]))
    kept_idx_arr = np.asarray(kept_idx, dtype=int)
    stats = stats.select(kept_idx_arr)
    col_names = [col_names[j] for j in kept_idx]
    mats = [stats.apply(m[:, kept_idx_arr]) for m in mats]

    features = np.concatenate(mats, axis=0)
    z = np.concatenate(sensitive)
    y = np.concatenate(labels)
    mask = None
    if len(parts) == 2:
        mask = np.concatenate([
            np.zeros(mats[0].shape[0], dtype=bool),
            np.ones(mats[1].shape[0], dtype=bool),
        ])
    meta = {
        "dataset": name,
        "part_sizes": [int(m.shape[0]) for m in mats],
        "dropped_columns": {
            "degenerate": dropped_degenerate,
            "near_duplicate": dropped_corr,
        },
    }
    meta.update(meta_extra)
    return Dataset(
        features=features,
        sensitive=z,
        labels=y,
        feature_names=tuple(col_names),
        standardizer=stats,
        test_mask=mask,
        meta=meta,
    )


def _drop_na_rows(df: pd.DataFrame) -> tuple:
    kept = df.dropna()
    return kept.reset_index(drop=True), len(df) - len(kept)


def _load_adult(path: Path) -> Dataset:
    """Census income data: official train/test pair or a single CSV.

    A directory is searched for the classic headerless pair
    (adult.data, adult.test) or a headered (train.csv, test.csv). '?' field
    marks are kept as an ordinary category level, so the official row counts
    are preserved; only genuinely empty fields drop a row.
    """
    paths: list
    headered: bool
    if path.is_dir():
        if (path / "adult.data").exists() and (path / "adult.test").exists():
            paths = [path / "adult.data", path / "adult.test"]
            headered = False
        elif (path / "train.csv").exists() and (path / "test.csv").exists():
            paths = [path / "train.csv", path / "test.csv"]
            headered = True
        else:
            raise DataError(
                f"{path}: expected adult.data + adult.test or train.csv + test.csv"
            )
    elif path.exists():
        paths = [path]
        headered = True
    else:
        raise DataError(f"{path}: no such file or directory")

    frames = []
    for k, fp in enumerate(paths):
        kw: dict = dict(skipinitialspace=True)
        if not headered:
            kw.update(header=None, names=_ADULT_COLUMNS)
            if k == 1:
                kw.update(skiprows=1)  # the test file opens with a comment line
        df = _strip_strings(pd.read_csv(fp, **kw))
        _require_columns(df, ["sex", "income"], str(fp))
        frames.append(df)

    dropped = 0
    parts, labels, sens = [], [], []
    for df in frames:
        df, d = _drop_na_rows(df)
        dropped += d
        lab = df["income"].astype(str).str.strip().str.rstrip(".")
        labels.append(_binary_from_values(lab, {">50K"}, "income",
                                          known={">50K", "<=50K"}))
        sens.append(_binary_from_values(df["sex"], {"Male"}, "sex",
                                        known={"Male", "Female"}))
        parts.append(df.drop(columns=["sex", "income"]))
    return _assemble(parts, labels, sens, "adult", {
        "dropped_rows": dropped,
        "sensitive_mapping": "sex: Male -> 1, Female -> 0",
        "label_mapping": "income: >50K -> 1",
    })


def _sniff_sep(fp: Path) -> str:
    head = fp.open("r", encoding="utf-8", errors="replace").readline()
    return ";" if head.count(";") > head.count(",") else ","


def _load_bank(path: Path) -> Dataset:
    """Bank marketing data. The sensitive group is derived from age
    (25..60 inclusive -> group 0, everyone else -> group 1) and the age
    column is consumed by that mapping rather than used as a feature."""
    fp = path / "bank.csv" if path.is_dir() else path
    if not fp.exists():
        raise DataError(f"{fp}: no such file")
    df = _strip_strings(pd.read_csv(fp, sep=_sniff_sep(fp)))
    _require_columns(df, ["age", "y"], str(fp))
    df, dropped = _drop_na_rows(df)
    age = df["age"].to_numpy(dtype=np.float64)
    z = np.where((age >= 25) & (age <= 60), 0, 1).astype(np.int8)
    y = _binary_from_values(df["y"], {"yes"}, "y", known={"yes", "no"})
    feats = df.drop(columns=["age", "y"])
    return _assemble([feats], [y], [z], "bank", {
        "dropped_rows": dropped,
        "sensitive_mapping": "age in [25, 60] -> 0, otherwise -> 1",
        "label_mapping": "y: yes -> 1",
    })


def _load_lsac(path: Path) -> Dataset:
    """Law school cohort data: bar passage as the label, race as the
    sensitive attribute (White -> 1)."""
    fp = path / "lsac.csv" if path.is_dir() else path
    if not fp.exists():
        raise DataError(f"{fp}: no such file")
    df = _strip_strings(pd.read_csv(fp))
    _require_columns(df, ["race", "pass_bar"], str(fp))
    df, dropped = _drop_na_rows(df)
    y = _binary_from_values(df["pass_bar"], {"1", "Passed", "passed", "yes"},
                            "pass_bar")
    if pd.api.types.is_numeric_dtype(df["race"]):
        z = _binary_from_values(df["race"], set(), "race")
    else:
        vals = df["race"].astype(str).str.strip()
        z = vals.isin({"White", "white", "Caucasian"}).to_numpy().astype(np.int8)
    feats = df.drop(columns=["race", "pass_bar"])
    return _assemble([feats], [y], [z], "lsac", {
        "dropped_rows": dropped,
        "sensitive_mapping": "race: White -> 1, other -> 0",
        "label_mapping": "pass_bar: 1 -> 1",
    })


def _load_compas(path: Path) -> Dataset:
    """Recidivism screening data (two-years table).

    Standard filter: screening within 30 days of arrest, known recidivism
    flag, ordinary charges, scored cases. The label is the screening score
    level (Low -> 0, Medium/High -> 1); race Caucasian -> group 1. Features
    are the demographic and criminal-history columns."""
    fp = path / "compas.csv" if path.is_dir() else path
    if not fp.exists():
        raise DataError(f"{fp}: no such file")
    df = _strip_strings(pd.read_csv(fp))
    _require_columns(
        df,
        _COMPAS_FEATURES + ["race", "score_text", "days_b_screening_arrest",
                            "is_recid"],
        str(fp),
    )
    n_raw = len(df)
    keep = (
        (df["days_b_screening_arrest"] <= 30)
        & (df["days_b_screening_arrest"] >= -30)
        & (df["is_recid"] != -1)
        & (df["c_charge_degree"] != "O")
        & (df["score_text"] != "N/A")
    )
    df = df.loc[keep].reset_index(drop=True)
    cols = _COMPAS_FEATURES + ["race", "score_text"]
    df = df[cols]
    df, dropped = _drop_na_rows(df)
    y = (df["score_text"].astype(str).str.strip() != "Low").to_numpy().astype(np.int8)
    z = df["race"].astype(str).str.strip().eq("Caucasian").to_numpy().astype(np.int8)
    feats = df.drop(columns=["race", "score_text"])
    return _assemble([feats], [y], [z], "compas", {
        "dropped_rows": int(n_raw - len(df)),
        "filtered_rows": int(n_raw - keep.sum()),
        "na_rows": dropped,
        "sensitive_mapping": "race: Caucasian -> 1, other -> 0",
        "label_mapping": "score_text: Medium/High -> 1, Low -> 0",
    })


_LOADERS = {
    "adult": _load_adult,
    "bank": _load_bank,
    "lsac": _load_lsac,
    "compas": _load_compas,
}


def load_dataset(name: str, path: str | Path) -> Dataset:
    """Load one of the named benchmarks from `path` (file or directory)."""
    if name not in _LOADERS:
        raise DataError(f"unknown dataset {name!r}; known: {DATASET_NAMES}")
    return _LOADERS[name](Path(path))


# ---------------------------------------------------------------------------
# interchange format: CSV + JSON sidecar


def sidecar_path(csv_path: str | Path) -> Path:
    return Path(f"{csv_path}.meta.json")


def save_dataset(ds: Dataset, csv_path: str | Path) -> Path:
    """Write a Dataset as CSV plus a JSON sidecar; round-trips bit-exactly.

    Feature values are written with 17 significant digits, which is enough
    to reproduce every float64 exactly on read-back.
    """
    csv_path = Path(csv_path)
    for reserved in (_SENSITIVE_COL, _LABEL_COL, _MASK_COL):
        if reserved in ds.feature_names:
            raise SchemaError(f"feature name {reserved!r} collides with a reserved column")
    df = pd.DataFrame(np.asarray(ds.features), columns=list(ds.feature_names))
    df[_SENSITIVE_COL] = ds.sensitive.astype(int)
    df[_LABEL_COL] = ds.labels.astype(int)
    if ds.test_mask is not None:
        df[_MASK_COL] = ds.test_mask.astype(int)
    df.to_csv(csv_path, index=False, float_format="%.17g")
    side = {
        "feature_names": list(ds.feature_names),
        "sensitive_column": _SENSITIVE_COL,
        "label_column": _LABEL_COL,
        "standardizer": {
            "mean": [float(v) for v in ds.standardizer.mean],
            "sd": [float(v) for v in ds.standardizer.sd],
        },
        "has_test_mask": ds.test_mask is not None,
        "meta": ds.meta,
    }
    out = sidecar_path(csv_path)
    out.write_text(json.dumps(side, indent=2))
    return out


def load_saved_dataset(csv_path: str | Path) -> Dataset:
    """Read back a Dataset written by :func:`save_dataset`."""
    csv_path = Path(csv_path)
    side_fp = sidecar_path(csv_path)
    if not csv_path.exists() or not side_fp.exists():
        raise DataError(f"{csv_path}: CSV or its .meta.json sidecar is missing")
    side = json.loads(side_fp.read_text())
    df = pd.read_csv(csv_path, float_precision="round_trip")
    names = side["feature_names"]
    _require_columns(df, names + [side["sensitive_column"], side["label_column"]],
                     str(csv_path))
    mask = None
    if side.get("has_test_mask"):
        _require_columns(df, [_MASK_COL], str(csv_path))
        mask = df[_MASK_COL].to_numpy().astype(bool)
    return Dataset(
        features=df[names].to_numpy(dtype=np.float64),
        sensitive=df[side["sensitive_column"]].to_numpy(),
        labels=df[side["label_column"]].to_numpy(),
        feature_names=tuple(names),
        standardizer=Standardizer(
            mean=np.asarray(side["standardizer"]["mean"], dtype=np.float64),
            sd=np.asarray(side["standardizer"]["sd"], dtype=np.float64),
        ),
        test_mask=mask,
        meta=side.get("meta", {}),
    )
