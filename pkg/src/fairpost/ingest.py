"""Load scored, labelled rows from CSV and recalibrate them per group.

Recalibration replaces each row's score by the positive fraction of its
(group, bucket) cell, stored as an exact fraction, so the dataset is
groupwise calibrated with zero residual.  Two profile families come out:

* the *calibrated* family, a PMF over each group's calibrated scores; these
  supports generally differ between groups;
* the *bucket* family, keyed by shared bucket positions ``(j + 1) / K`` with
  each group's calibrated score attached.  It is nice whenever every group
  populates every bucket, and is what threshold and deferral constructions
  operate on.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .errors import (BucketTooSmall, EmptyAfterFilter, EmptyGroup, InputError,
                     MissingColumn, UnparsableRow)
from .profiles import AccuracyProfile, ProfileFamily

MISSING = {"", "na", "nan", "null", "none"}


@dataclass(frozen=True)
class IngestConfig:
    score_col: str = "decile_score"
    label_col: str = "two_year_recid"
    group_col: str = "race"
    groups: tuple | None = None
    bucket: object = "identity"      # "identity", "decile", or increasing edge list
    min_bucket_count: int = 1
    max_bad_rows: int = 0

    def __post_init__(self):
        if isinstance(self.bucket, str):
            if self.bucket not in ("identity", "decile"):
                raise InputError(f"unknown bucketing rule {self.bucket!r}")
        else:
            edges = [float(e) for e in self.bucket]
            if not edges or any(b <= a for a, b in zip(edges, edges[1:])):
                raise InputError("bucket edges must be nonempty and strictly increasing")
            object.__setattr__(self, "bucket", tuple(edges))
        if self.groups is not None:
            object.__setattr__(self, "groups", tuple(self.groups))
        if self.min_bucket_count < 0 or self.max_bad_rows < 0:
            raise InputError("counts must be nonnegative")


@dataclass(frozen=True)
class ScoredDataset:
    raw_scores: tuple
    groups: tuple
    labels: tuple
    group_order: tuple
    buckets: tuple = None             # bucket index per row
    n_buckets: int = 0
    calibrated: tuple = None          # Fraction per row after recalibration
    dropped_labels: int = 0
    bad_rows: tuple = field(default_factory=tuple)

    def __len__(self):
        return len(self.labels)

    @property
    def group_counts(self):
        c = Counter(self.groups)
        return {g: c[g] for g in self.group_order}

    @property
    def scores(self):
        return self.calibrated if self.calibrated is not None else self.raw_scores

    def bucket_key(self, j):
        return Fraction(j + 1, self.n_buckets)

    def keys(self, axis="calibrated"):
        """Per-row score as seen by a rule: ``calibrated``, ``bucket`` or ``raw``."""
        if axis == "raw":
            return self.raw_scores
        if axis == "calibrated":
            if self.calibrated is None:
                raise InputError("dataset has not been recalibrated")
            return self.calibrated
        if axis == "bucket":
            if self.buckets is None:
                raise InputError("dataset has no bucket assignment")
            return tuple(self.bucket_key(j) for j in self.buckets)
        raise InputError(f"unknown score axis {axis!r}")

    def base_rates(self):
        pos = Counter(g for g, y in zip(self.groups, self.labels) if y)
        return {g: Fraction(pos[g], n) for g, n in self.group_counts.items()}

    def to_jsonl(self, fh):
        for i in range(len(self)):
            doc = {"raw_score": self.raw_scores[i], "group": self.groups[i],
                   "label": self.labels[i]}
            if self.buckets is not None:
                doc["bucket"] = self.buckets[i]
            if self.calibrated is not None:
                doc["calibrated"] = float(self.calibrated[i])
            fh.write(json.dumps(doc) + "\n")


def _parse_label(text):
    t = text.strip().lower()
    if t in ("1", "1.0", "true", "yes"):
        return 1
    if t in ("0", "0.0", "false", "no"):
        return 0
    raise ValueError(f"label {text!r} is not 0/1")


def _parse_score(text):
    x = float(text)
    if not math.isfinite(x):
        raise ValueError(f"score {text!r} is not finite")
    return x


def load_csv(path, config=None):
    """Parse a headed CSV file into a :class:`ScoredDataset` (file order kept)."""
    config = config or IngestConfig()
    wanted = set(config.groups) if config.groups else None
    raw, groups, labels, bad = [], [], [], []
    dropped = 0
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        for col in (config.score_col, config.label_col, config.group_col):
            if col not in header:
                raise MissingColumn(col, header)
        si, li, gi = (header.index(c) for c in (config.score_col, config.label_col,
                                                 config.group_col))
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                bad.append((line, f"expected {len(header)} fields, got {len(row)}"))
                continue
            g = row[gi].strip()
            if not g:
                bad.append((line, "missing group"))
                continue
            if wanted is not None and g not in wanted:
                continue
            if row[li].strip().lower() in MISSING:
                dropped += 1
                continue
            try:
                y = _parse_label(row[li])
                s = _parse_score(row[si])
            except ValueError as exc:
                bad.append((line, str(exc)))
                continue
            raw.append(s)
            groups.append(g)
            labels.append(y)
    if len(bad) > config.max_bad_rows:
        raise UnparsableRow(bad)
    if not labels:
        raise EmptyAfterFilter("no rows left after filtering")
    if config.groups:
        order = tuple(config.groups)
        present = set(groups)
        missing = [g for g in order if g not in present]
        if missing:
            raise EmptyGroup(f"no rows for group(s) {', '.join(missing)}")
    else:
        order = tuple(dict.fromkeys(groups))
    ds = ScoredDataset(tuple(raw), tuple(groups), tuple(labels), order,
                       dropped_labels=dropped, bad_rows=tuple(bad))
    return assign_buckets(ds, config)


def assign_buckets(dataset, config):
    """Attach bucket indices; empty buckets are removed from the axis."""
    raw = np.array(dataset.raw_scores, dtype=float)
    if config.bucket == "identity":
        levels = np.unique(raw)
        idx = np.searchsorted(levels, raw)
    else:
        if config.bucket == "decile":
            edges = np.unique(np.quantile(raw, np.linspace(0.1, 0.9, 9)))
        else:
            edges = np.array(config.bucket)
        idx = np.searchsorted(edges, raw, side="right")
    used = np.unique(idx)
    dense = np.searchsorted(used, idx)
    return replace(dataset, buckets=tuple(int(j) for j in dense), n_buckets=int(used.size))


@dataclass(frozen=True)
class Recalibration:
    dataset: ScoredDataset
    calibrated: ProfileFamily
    bucketed: ProfileFamily

    def __iter__(self):
        return iter((self.dataset, self.calibrated, self.bucketed))


def recalibrate(dataset, config=None):
    """Replace scores by per-(group, bucket) positive fractions."""
    config = config or IngestConfig()
    if dataset.buckets is None:
        dataset = assign_buckets(dataset, config)
    cells = Counter(zip(dataset.groups, dataset.buckets))
    pos = Counter((g, b) for g, b, y in zip(dataset.groups, dataset.buckets, dataset.labels) if y)
    if config.min_bucket_count > 0:
        small = [(g, b + 1, cells[(g, b)]) for g in dataset.group_order
                 for b in range(dataset.n_buckets) if cells[(g, b)] < config.min_bucket_count]
        if small:
            raise BucketTooSmall(small, config.min_bucket_count)
    rate = {key: Fraction(pos[key], n) for key, n in cells.items()}
    calibrated = tuple(rate[(g, b)] for g, b in zip(dataset.groups, dataset.buckets))
    out = replace(dataset, calibrated=calibrated)

    counts = out.group_counts
    cal_profiles, bucket_profiles = [], []
    for g in out.group_order:
        n = counts[g]
        by_score = Counter(s for h, s in zip(out.groups, calibrated) if h == g)
        cal_profiles.append(AccuracyProfile(g, {s: Fraction(c, n) for s, c in by_score.items()}))
        mass = {out.bucket_key(b): Fraction(cells[(g, b)], n)
                for b in range(out.n_buckets) if cells[(g, b)]}
        values = {out.bucket_key(b): rate[(g, b)] for b in range(out.n_buckets) if cells[(g, b)]}
        bucket_profiles.append(AccuracyProfile(g, mass, values))
    return Recalibration(out, ProfileFamily(cal_profiles), ProfileFamily(bucket_profiles))


def dataset_from_counts(counts, order=None):
    """Synthetic dataset from ``{group: {score: (rows, positives)}}``."""
    raw, groups, labels = [], [], []
    for g, cells in counts.items():
        for s, (n, k) in sorted(cells.items()):
            if not 0 <= k <= n:
                raise InputError(f"invalid cell ({n}, {k}) for group {g!r}")
            raw.extend([float(s)] * n)
            groups.extend([g] * n)
            labels.extend([1] * k + [0] * (n - k))
    return ScoredDataset(tuple(raw), tuple(groups), tuple(labels),
                         tuple(order or counts))
