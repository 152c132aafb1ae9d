"""Accuracy profiles: per-group probability mass functions over calibrated scores.

An accuracy profile (AP) is the PMF of a groupwise-calibrated soft
classifier's output on one group.  Because the classifier is calibrated, the
joint law of (score, label) in that group is fully determined by the AP:
``Pr[Y=1, S=s] = s * P(s)``.

Scores are snapped onto a decimal grid when a profile is built so that PMF
keys compare exactly.  Profiles whose masses are all :class:`fractions.Fraction`
(or ``int``) stay in exact rational arithmetic and are not snapped.

A profile may also carry *attached values*: the support keys then act as
ordered bucket labels and each key carries its own calibrated score.  This is
the bucket-support mode used for empirical data, where recalibrated scores
differ between groups but the bucket axis is shared.
"""

from __future__ import annotations

import json
import math
import os
from collections.abc import Mapping
from dataclasses import dataclass
from fractions import Fraction
from numbers import Number

from .errors import EmptyCommonSupport, EmptyGroup, InputError

DEFAULT_GRID = 1e-6
MASS_TOL = 1e-12


def default_grid():
    """Score grid spacing, overridable through ``FAIRPOST_GRID``."""
    raw = os.environ.get("FAIRPOST_GRID")
    if not raw:
        return DEFAULT_GRID
    grid = float(raw)
    if not 0 < grid <= 1:
        raise InputError(f"FAIRPOST_GRID must lie in (0, 1], got {raw!r}")
    return grid


def snap(value, grid=None):
    """Round a float score onto the grid; Fractions pass through unchanged."""
    if isinstance(value, Fraction):
        if not 0 <= value <= 1:
            raise InputError(f"score {value} outside [0, 1]")
        return value
    grid = default_grid() if grid is None else grid
    x = float(value)
    if math.isnan(x) or x < -grid / 2 or x > 1 + grid / 2:
        raise InputError(f"score {value!r} outside [0, 1]")
    k = round(x / grid)
    # the second round() canonicalizes k*grid so equal k gives an identical float
    return min(1.0, max(0.0, round(k * grid, 12)))


def exact_score(x):
    """Fraction for a score; floats go through their shortest decimal repr."""
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


def is_exact(x):
    return isinstance(x, (Fraction, int)) and not isinstance(x, bool)


def psum(values):
    """Sum probabilities: exact for Fractions, correctly rounded for floats."""
    values = list(values)
    if all(is_exact(v) for v in values):
        return sum(values, Fraction(0))
    return math.fsum(float(v) for v in values)


class AccuracyProfile:
    """Finite PMF over scores for one group.

    ``mass`` is a mapping (or iterable of pairs) from score to probability.
    Zero-mass entries are dropped, so the keys of the result are exactly the
    support.  Pass ``normalize=True`` to rescale arbitrary nonnegative weights.
    """

    __slots__ = ("group", "_scores", "_probs", "_values", "exact")

    def __init__(self, group, mass, values=None, *, grid=None, normalize=False):
        items = mass.items() if isinstance(mass, Mapping) else mass
        raw = list(items)
        exact = bool(raw) and all(is_exact(p) for _, p in raw)
        merged = {}
        for s, p in raw:
            if p < 0:
                raise InputError(f"negative mass {p!r} at score {s!r}")
            key = snap(exact_score(s) if exact else s, grid)
            merged[key] = merged.get(key, 0) + (p if exact else float(p))
        merged = {s: p for s, p in merged.items() if p > 0}
        if not merged:
            raise InputError(f"profile for group {group!r} has empty support")
        total = psum(merged.values())
        if normalize:
            merged = {s: p / total for s, p in merged.items()}
        elif exact and total != 1:
            raise InputError(f"masses for group {group!r} sum to {total}, not 1")
        elif not exact:
            if abs(total - 1.0) > MASS_TOL:
                raise InputError(f"masses for group {group!r} sum to {total!r}, not 1")
            merged = {s: p / total for s, p in merged.items()}

        self.group = group
        self.exact = exact
        self._scores = tuple(sorted(merged))
        self._probs = tuple(merged[s] for s in self._scores)
        if values is None:
            self._values = self._scores
        else:
            lookup = dict(values.items() if isinstance(values, Mapping) else values)
            snapped = {snap(exact_score(k) if exact else k, grid): v for k, v in lookup.items()}
            try:
                vals = tuple(snapped[s] for s in self._scores)
            except KeyError as exc:
                raise InputError(f"no attached value for support key {exc.args[0]!r}") from None
            for v in vals:
                if not 0 <= v <= 1:
                    raise InputError(f"attached value {v!r} outside [0, 1]")
            self._values = vals

    @classmethod
    def _raw(cls, group, scores, probs, values, exact):
        obj = cls.__new__(cls)
        obj.group = group
        obj.exact = exact
        obj._scores = tuple(scores)
        obj._probs = tuple(probs)
        obj._values = tuple(values)
        return obj

    # -- mapping-like access --------------------------------------------------

    @property
    def support(self):
        return self._scores

    @property
    def probs(self):
        return self._probs

    @property
    def values(self):
        """Calibrated score attached to each support key (the key itself by default)."""
        return self._values

    @property
    def mass(self):
        return dict(zip(self._scores, self._probs))

    @property
    def bucketed(self):
        return self._values != self._scores

    def items(self):
        return zip(self._scores, self._probs)

    def triples(self):
        """Iterate ``(key, probability, calibrated value)``."""
        return zip(self._scores, self._probs, self._values)

    def p(self, score):
        try:
            return self._probs[self._scores.index(score)]
        except ValueError:
            return 0

    def value(self, score):
        return self._values[self._scores.index(score)]

    def value_map(self):
        return dict(zip(self._scores, self._values))

    def __len__(self):
        return len(self._scores)

    def __contains__(self, score):
        return score in self._scores

    def __eq__(self, other):
        if not isinstance(other, AccuracyProfile):
            return NotImplemented
        return (self.group, self._scores, self._probs, self._values) == (
            other.group, other._scores, other._probs, other._values)

    def __hash__(self):
        return hash((self.group, self._scores, self._probs, self._values))

    def __repr__(self):
        body = ", ".join(f"{s}: {p:.6g}" if not self.exact else f"{s}: {p}"
                         for s, p in self.items())
        return f"AccuracyProfile({self.group!r}, {{{body}}})"

    def with_group(self, group):
        return AccuracyProfile._raw(group, self._scores, self._probs, self._values, self.exact)

    def with_mass(self, mass, group=None):
        """New profile with the same attached values but different masses."""
        vmap = self.value_map()
        kept = {s: p for s, p in mass.items() if p > 0}
        return AccuracyProfile._raw(
            self.group if group is None else group,
            sorted(kept), [kept[s] for s in sorted(kept)],
            [vmap[s] for s in sorted(kept)], self.exact)


class ProfileFamily(Mapping):
    """Accuracy profiles for a partition of the population into groups."""

    def __init__(self, profiles):
        if isinstance(profiles, Mapping):
            profiles = [ap if ap.group == g else ap.with_group(g) for g, ap in profiles.items()]
        self._profiles = {}
        for ap in profiles:
            if ap.group in self._profiles:
                raise InputError(f"duplicate group {ap.group!r}")
            self._profiles[ap.group] = ap
        if not self._profiles:
            raise InputError("a profile family needs at least one group")

    def __getitem__(self, group):
        return self._profiles[group]

    def __iter__(self):
        return iter(self._profiles)

    def __len__(self):
        return len(self._profiles)

    @property
    def groups(self):
        return tuple(self._profiles)

    def __repr__(self):
        return f"ProfileFamily({list(self._profiles.values())!r})"


@dataclass(frozen=True)
class CalibratedJoint:
    """Joint law of (score, label) per group under calibration.

    In analytic mode the label distribution is induced by the profile,
    ``Pr[Y=1, S=s] = value(s) * P(s)``.  In empirical mode it is backed by a
    recalibrated dataset and the cell probabilities are row frequencies.
    """

    family: ProfileFamily
    dataset: object = None

    @property
    def analytic(self):
        return self.dataset is None

    def cell(self, group, score):
        """``(Pr[Y=1, S=score], Pr[Y=0, S=score])`` within ``group``."""
        if self.analytic:
            ap = self.family[group]
            if score not in ap:
                return 0, 0
            p, v = ap.p(score), ap.value(score)
            return v * p, (1 - v) * p
        rows = [y for g, s, y in zip(self.dataset.groups, self.dataset.keys(), self.dataset.labels)
                if g == group and s == score]
        n = self.dataset.group_counts[group]
        pos = sum(rows)
        return pos / n, (len(rows) - pos) / n

    def positive_rate(self, group, score):
        pos, neg = self.cell(group, score)
        return pos / (pos + neg)


# -- operations -----------------------------------------------------------------

def base_rate(ap):
    """Expected calibrated score, which under calibration is the base rate."""
    return psum(p * v for _, p, v in ap.triples())


def tv_distance(a, b):
    """Total variation distance between two PMFs over the union of supports."""
    keys = set(a.support) | set(b.support)
    return psum(abs(a.p(s) - b.p(s)) for s in sorted(keys)) / 2


def common_mass(family):
    """Unnormalized pointwise minimum over the common support, and its total."""
    profiles = list(family.values())
    common = set(profiles[0].support)
    for ap in profiles[1:]:
        common &= set(ap.support)
    if not common:
        raise EmptyCommonSupport(
            f"groups {', '.join(map(str, family.groups))} share no score")
    mins = {s: min(ap.p(s) for ap in profiles) for s in sorted(common)}
    return mins, psum(mins.values())


def pointwise_min_normalized(family, group="*"):
    """PMF proportional to the pointwise minimum of the family's profiles.

    Attached values are taken from the first profile; in bucket mode the
    result is only meaningful as a distribution over bucket keys.
    """
    mins, total = common_mass(family)
    first = next(iter(family.values()))
    return first.with_mass({s: m / total for s, m in mins.items()}, group=group)


def is_nice(family):
    """True iff every group's profile has the same support."""
    supports = {ap.support for ap in family.values()}
    return len(supports) == 1


def strictly_dominates(a, b, tol=MASS_TOL):
    """First-order stochastic dominance of ``a`` over ``b``, strict somewhere."""
    keys = sorted(set(a.support) | set(b.support))
    fa = fb = 0
    strict = False
    for s in keys:
        fa += a.p(s)
        fb += b.p(s)
        if fa > fb + tol:
            return False
        if fa < fb - tol:
            strict = True
    return strict


def reflect(ap, group=None):
    """Mirror a profile through s -> 1 - s (keys and attached values)."""
    one = Fraction(1) if ap.exact else 1.0
    triples = sorted(((snap(one - s), p, one - v) for s, p, v in ap.triples()))
    return AccuracyProfile._raw(
        ap.group if group is None else group,
        [t[0] for t in triples], [t[1] for t in triples],
        [t[0] for t in triples] if not ap.bucketed else [snap(t[2]) for t in triples],
        ap.exact)


# -- calibration report -----------------------------------------------------------

@dataclass(frozen=True)
class CalibrationCell:
    group: str
    score: float
    rows: int
    positives: int
    deviation: float
    flagged: bool

    @property
    def rate(self):
        return self.positives / self.rows


@dataclass(frozen=True)
class CalibrationReport:
    cells: tuple
    tolerance: float

    @property
    def flagged(self):
        return [c for c in self.cells if c.flagged]

    @property
    def max_deviation(self):
        return max((c.deviation for c in self.cells), default=0.0)

    @property
    def ok(self):
        return not self.flagged


def validate_calibration(dataset, tolerance=1e-9):
    """Compare each (group, score) bucket's positive rate with its score.

    ``dataset`` needs ``groups``, ``labels``, ``scores`` and ``group_order``.
    """
    counts = {}
    for g, s, y in zip(dataset.groups, dataset.scores, dataset.labels):
        n, k = counts.get((g, s), (0, 0))
        counts[(g, s)] = (n + 1, k + y)
    present = {g for g, _ in counts}
    for g in dataset.group_order:
        if g not in present:
            raise EmptyGroup(f"group {g!r} has no rows")
    cells = []
    for (g, s), (n, k) in sorted(counts.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
        dev = abs(Fraction(k, n) - Fraction(s)) if isinstance(s, Fraction) else abs(k / n - s)
        cells.append(CalibrationCell(g, s, n, k, float(dev), float(dev) > tolerance))
    return CalibrationReport(tuple(cells), tolerance)


# -- serialization ------------------------------------------------------------------

def profile_to_dict(ap):
    mass = []
    for s, p, v in ap.triples():
        entry = {"score": float(s), "p": float(p)}
        if ap.bucketed:
            entry["value"] = float(v)
        mass.append(entry)
    return {"group": ap.group, "mass": mass}


def profile_from_dict(doc, grid=None):
    entries = doc["mass"]
    values = None
    if entries and all("value" in e for e in entries):
        values = {e["score"]: e["value"] for e in entries}
    return AccuracyProfile(doc["group"], [(e["score"], e["p"]) for e in entries],
                           values, grid=grid, normalize=True)


def family_to_json(family, **kwargs):
    return json.dumps([profile_to_dict(ap) for ap in family.values()], **kwargs)


def family_from_json(text, grid=None):
    doc = json.loads(text)
    if isinstance(doc, dict):
        doc = [doc]
    return ProfileFamily([profile_from_dict(d, grid) for d in doc])


def uniform(group, scores, exact=False):
    """Uniform profile over ``scores``."""
    scores = list(scores)
    w = Fraction(1, len(scores)) if exact else 1.0 / len(scores)
    return AccuracyProfile(group, [(s, w) for s in scores])


def from_weights(group, weights, exact=False):
    """Profile proportional to nonnegative ``weights`` (mapping score -> weight)."""
    items = weights.items() if isinstance(weights, Mapping) else weights
    items = [(s, w) for s, w in items]
    if exact:
        total = sum(Fraction(w) for _, w in items)
        return AccuracyProfile(group, [(exact_score(s), Fraction(w) / total) for s, w in items])
    return AccuracyProfile(group, items, normalize=True)


def as_number(x):
    return x if isinstance(x, Number) else float(x)
