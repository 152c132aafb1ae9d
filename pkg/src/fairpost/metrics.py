"""Group statistics of hard (optionally deferring) classifiers.

A hard rule maps a score (and group) to a distribution over
{Negative, Positive, Defer}.  Statistics are exact expectations over the
score distribution and the rule's randomness.  A statistic whose
conditioning event has probability zero is ``None``.

Both the analytic path (accuracy profile, calibration-induced labels) and
the empirical path (labelled rows) reduce to the same weighted-cell
computation: a list of ``(weight, Pr[Y=1 | cell], outcome)``.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import asdict, dataclass, fields
from fractions import Fraction

import numpy as np

from .errors import EmptyGroup, InputError, MissingStatistic
from .profiles import is_exact, psum

ZERO_TOL = 1e-14
SUM_TOL = 1e-12


class Prediction(enum.Enum):
    NEGATIVE = 0
    POSITIVE = 1
    DEFER = "defer"


class _Deferred:
    """Marker for an upstream deferral fed into a hard rule."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "DEFERRED"


DEFERRED = _Deferred()


@dataclass(frozen=True)
class Outcome:
    """Probabilities of each prediction for one (score, group) input."""

    neg: float = 0
    pos: float = 0
    defer: float = 0

    def __post_init__(self):
        for name in ("neg", "pos", "defer"):
            x = getattr(self, name)
            if x < -SUM_TOL or x > 1 + SUM_TOL:
                raise InputError(f"outcome probability {name}={x!r} outside [0, 1]")
            if x < 0:
                object.__setattr__(self, name, type(x)(0))
        total = self.neg + self.pos + self.defer
        if total != 1 and abs(total - 1) > SUM_TOL:
            raise InputError(f"outcome probabilities sum to {total!r}")

    @classmethod
    def of(cls, prediction):
        one = {Prediction.NEGATIVE: "neg", Prediction.POSITIVE: "pos", Prediction.DEFER: "defer"}
        return cls(**{one[prediction]: 1})

    def prob(self, prediction):
        return {Prediction.NEGATIVE: self.neg, Prediction.POSITIVE: self.pos,
                Prediction.DEFER: self.defer}[prediction]

    def sample(self, u):
        """Map a uniform draw ``u`` in [0, 1) to a prediction."""
        if u < self.neg:
            return Prediction.NEGATIVE
        if u < self.neg + self.pos:
            return Prediction.POSITIVE
        return Prediction.DEFER

    def close_to(self, other, tol=SUM_TOL):
        return (abs(self.neg - other.neg) <= tol and abs(self.pos - other.pos) <= tol
                and abs(self.defer - other.defer) <= tol)


ALWAYS_NEGATIVE = Outcome(neg=1)
ALWAYS_POSITIVE = Outcome(pos=1)
ALWAYS_DEFER = Outcome(defer=1)


class HardRule:
    """Base class for hard post-processors.

    Subclasses implement :meth:`decide` for real scores.  An incoming
    deferral is routed through :meth:`on_defer`, which defers by default.
    """

    def decide(self, score, group):
        raise NotImplementedError

    def on_defer(self, group):
        return ALWAYS_DEFER

    def outcome(self, score, group=None):
        if score is DEFERRED:
            return self.on_defer(group)
        return self.decide(score, group)

    def propagates_defer(self, groups=(None,)):
        return all(self.on_defer(g) == ALWAYS_DEFER for g in groups)

    def is_group_blind(self, groups, scores):
        groups = list(groups)
        for s in list(scores) + [DEFERRED]:
            ref = self.outcome(s, groups[0])
            if any(not self.outcome(s, g).close_to(ref) for g in groups[1:]):
                return False
        return True


class ConstantRule(HardRule):
    def __init__(self, outcome, defer_outcome=ALWAYS_DEFER):
        self._outcome = outcome
        self._defer = defer_outcome

    def decide(self, score, group):
        return self._outcome

    def on_defer(self, group):
        return self._defer

    def __repr__(self):
        return f"ConstantRule({self._outcome!r})"


class BlindRule(HardRule):
    """Group-blind rule given by a function of the score alone."""

    def __init__(self, fn, defer_outcome=ALWAYS_DEFER):
        self._fn = fn
        self._defer = defer_outcome

    def decide(self, score, group):
        return self._fn(score)

    def on_defer(self, group):
        return self._defer


class TableRule(HardRule):
    """Rule given by explicit per-group tables ``{group: {score: Outcome}}``.

    A table keyed by ``None`` applies to every group.  Scores missing from the
    table fall back to ``default`` (an error if none is given).
    """

    def __init__(self, table, default=None, defer_outcome=ALWAYS_DEFER):
        self._table = {g: dict(t) for g, t in table.items()}
        self._default = default
        self._defer = defer_outcome

    def decide(self, score, group):
        t = self._table.get(group, self._table.get(None))
        if t is not None and score in t:
            return t[score]
        if self._default is None:
            raise InputError(f"rule has no outcome for score {score!r} in group {group!r}")
        return self._default

    def on_defer(self, group):
        return self._defer


always_positive = ConstantRule(ALWAYS_POSITIVE)
always_negative = ConstantRule(ALWAYS_NEGATIVE)
always_defer = ConstantRule(ALWAYS_DEFER)


@dataclass(frozen=True)
class GroupStats:
    base_rate: float | None = None
    ppv: float | None = None
    npv: float | None = None
    fpr: float | None = None
    fnr: float | None = None
    cfpr: float | None = None
    cfnr: float | None = None
    ufpr: float | None = None
    ufnr: float | None = None
    tn_based_error: float | None = None
    defer_rate: float | None = None
    positive_rate: float | None = None
    negative_rate: float | None = None

    def to_dict(self):
        return {k: float(v) for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, doc):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in doc.items() if k in names})


STAT_FIELDS = tuple(f.name for f in fields(GroupStats))


def _ratio(num, den):
    if isinstance(den, Fraction) or (is_exact(den) and is_exact(num)):
        return None if den == 0 else Fraction(num) / den
    if den <= ZERO_TOL:
        return None
    return min(1.0, max(0.0, num / den))


def stats_from_cells(cells):
    """Statistics from ``(weight, positive_fraction, Outcome)`` cells.

    Weights must sum to one.  ``positive_fraction`` is Pr[Y=1] within the
    cell (the calibrated score analytically, the 0/1 label empirically).
    """
    pos_terms, neg_terms, def_terms = [], [], []
    tp_t, fp_t, tn_t, fn_t, dp_t, dn_t, br_t = [], [], [], [], [], [], []
    for w, v, o in cells:
        a, b = w * v, w * (1 - v)
        pos_terms.append(w * o.pos)
        neg_terms.append(w * o.neg)
        def_terms.append(w * o.defer)
        br_t.append(a)
        tp_t.append(a * o.pos)
        fp_t.append(b * o.pos)
        tn_t.append(b * o.neg)
        fn_t.append(a * o.neg)
        dp_t.append(a * o.defer)
        dn_t.append(b * o.defer)
    w_pos, w_neg, w_def = psum(pos_terms), psum(neg_terms), psum(def_terms)
    tp, fp, tn, fn = psum(tp_t), psum(fp_t), psum(tn_t), psum(fn_t)
    dp, dn = psum(dp_t), psum(dn_t)
    br = psum(br_t)
    y0 = psum((fp, tn, dn))
    y1 = psum((tp, fn, dp))
    fpr = _ratio(fp, y0)
    fnr = _ratio(fn, y1)
    return GroupStats(
        base_rate=br,
        ppv=_ratio(tp, w_pos),
        npv=_ratio(tn, w_neg),
        fpr=fpr,
        fnr=fnr,
        cfpr=_ratio(fp, fp + tn),
        cfnr=_ratio(fn, fn + tp),
        ufpr=fpr,
        ufnr=fnr,
        tn_based_error=None if (r := _ratio(tn, y0)) is None else 1 - r,
        defer_rate=w_def,
        positive_rate=w_pos,
        negative_rate=w_neg,
    )


def stats_analytic(ap, rule, group=None):
    """Exact statistics of ``rule`` applied to a calibrated profile."""
    group = ap.group if group is None else group
    return stats_from_cells((p, v, rule.outcome(s, group)) for s, p, v in ap.triples())


def stats_family(family, rule):
    return {g: stats_analytic(ap, rule, g) for g, ap in family.items()}


def stats_empirical(dataset, rule, mode="expectation", seed=None, axis="calibrated"):
    """Per-group statistics of ``rule`` evaluated on labelled rows.

    ``mode="expectation"`` weights each row by the rule's outcome
    probabilities; ``mode="sampled"`` draws one prediction per row from a
    generator seeded with ``seed``.  ``axis`` selects which score the rule
    sees (see :meth:`ScoredDataset.keys`).
    """
    if mode not in ("expectation", "sampled"):
        raise InputError(f"unknown evaluation mode {mode!r}")
    if mode == "sampled" and seed is None:
        raise InputError("sampled mode requires an explicit seed")
    keys = dataset.keys(axis)
    by_group = {g: [] for g in dataset.group_order}
    for g, s, y in zip(dataset.groups, keys, dataset.labels):
        by_group[g].append((s, y))
    rng = np.random.default_rng(seed) if mode == "sampled" else None
    out = {}
    for g, rows in by_group.items():
        if not rows:
            raise EmptyGroup(f"group {g!r} has no rows")
        w = 1.0 / len(rows)
        cells = []
        for s, y in rows:
            o = rule.outcome(s, g)
            if rng is not None:
                o = Outcome.of(o.sample(rng.random()))
            cells.append((w, y, o))
        out[g] = stats_from_cells(cells)
    return out


def check_convex_combination(stats, defer_tol=SUM_TOL):
    """Residual of ``BR = PPV * theta + (1 - NPV) * (1 - theta)``."""
    if stats.ppv is None or stats.npv is None:
        raise MissingStatistic("PPV and NPV must both be defined")
    if stats.defer_rate is None or stats.defer_rate > defer_tol:
        raise MissingStatistic("identity requires a rule that never defers")
    theta = stats.positive_rate
    return abs(stats.base_rate - (stats.ppv * theta + (1 - stats.npv) * (1 - theta)))


@dataclass(frozen=True)
class EqualizationReport:
    ok: bool
    gaps: dict
    undefined: tuple
    tolerance: float

    def __bool__(self):
        return self.ok

    def to_dict(self):
        return {"ok": self.ok, "tolerance": self.tolerance,
                "gaps": {k: (float(v) if math.isfinite(v) else None) for k, v in self.gaps.items()},
                "simultaneously_undefined": list(self.undefined)}


def assert_equalized(stats_by_group, fields=("ppv", "npv"), tolerance=1e-9):
    """Check that each field agrees across groups within ``tolerance``.

    A field undefined in every group counts as equalized (gap 0); a field
    defined in some groups only has gap ``inf``.
    """
    gaps, undefined = {}, []
    for f in fields:
        vals = [getattr(s, f) for s in stats_by_group.values()]
        present = [v for v in vals if v is not None]
        if not present:
            gaps[f] = 0.0
            undefined.append(f)
        elif len(present) < len(vals):
            gaps[f] = math.inf
        else:
            gaps[f] = float(max(present) - min(present))
    ok = all(gap <= tolerance for gap in gaps.values())
    return EqualizationReport(ok, gaps, tuple(undefined), tolerance)


def stats_to_json(stats_by_group, **kwargs):
    return json.dumps({str(g): s.to_dict() for g, s in stats_by_group.items()}, **kwargs)


def stats_to_csv(stats_by_group, fh=None):
    """Write one row per group; returns the text when ``fh`` is None."""
    buf = io.StringIO() if fh is None else fh
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("group",) + STAT_FIELDS)
    for g, s in stats_by_group.items():
        row = [getattr(s, f) for f in STAT_FIELDS]
        writer.writerow([g] + ["" if v is None else repr(float(v)) for v in row])
    return buf.getvalue() if fh is None else None
