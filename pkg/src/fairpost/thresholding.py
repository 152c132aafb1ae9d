"""Threshold post-processors and searches that equalize PPV and/or NPV.

A single-threshold rule predicts Positive above its threshold, Negative
below, and Positive with probability ``r`` on the threshold itself.  A
deferring rule has a lower threshold ``tau0`` (Negative side, probability
``r0`` of Negative on it) and an upper threshold ``tau1`` (Positive side,
probability ``r1``), deferring everything strictly between.

Thresholds compare against profile support keys, so in bucket-support mode
they are bucket positions while the PPV/NPV arithmetic uses each bucket's
calibrated value.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

from .errors import (DivisionDegenerate, InvalidRule, NotNice, RepairLimitExceeded,
                     SupportTooSmall, TargetOutOfRange)
from .metrics import ALWAYS_DEFER, HardRule, Outcome
from .profiles import AccuracyProfile, base_rate, is_nice, psum, strictly_dominates

R_TOL = 1e-12


def _per_group(value):
    return dict(value) if isinstance(value, dict) else {None: value}


def _lookup(table, group):
    if group in table:
        return table[group]
    if None in table:
        return table[None]
    raise InvalidRule(f"rule has no parameters for group {group!r}")


def _check_prob(name, x):
    if not 0 <= x <= 1:
        raise InvalidRule(f"{name}={x!r} outside [0, 1]")


@dataclass(frozen=True)
class ThresholdRule:
    """Per-group ``(tau, r)``.  Scalars make a group-blind rule."""

    tau: dict
    r: dict

    def __init__(self, tau, r):
        object.__setattr__(self, "tau", _per_group(tau))
        object.__setattr__(self, "r", _per_group(r))
        if set(self.tau) != set(self.r):
            raise InvalidRule("tau and r must cover the same groups")
        for g in self.tau:
            _check_prob(f"tau[{g}]", self.tau[g])
            _check_prob(f"r[{g}]", self.r[g])

    def params(self, group):
        return _lookup(self.tau, group), _lookup(self.r, group)

    @property
    def groups(self):
        return tuple(self.tau)

    def to_dicts(self):
        return [{"group": g, "tau": float(self.tau[g]), "r": float(self.r[g])} for g in self.tau]

    def to_json(self, **kwargs):
        return json.dumps(self.to_dicts(), **kwargs)


@dataclass(frozen=True)
class DeferringThresholdRule:
    """Per-group ``(tau0, tau1, r0, r1)`` with ``tau0 <= tau1``."""

    tau0: dict
    tau1: dict
    r0: dict
    r1: dict

    def __init__(self, tau0, tau1, r0, r1):
        for name, val in (("tau0", tau0), ("tau1", tau1), ("r0", r0), ("r1", r1)):
            object.__setattr__(self, name, _per_group(val))
        keys = set(self.tau0)
        if not (keys == set(self.tau1) == set(self.r0) == set(self.r1)):
            raise InvalidRule("all four parameters must cover the same groups")
        for g in keys:
            t0, t1, a, b = self.tau0[g], self.tau1[g], self.r0[g], self.r1[g]
            for name, x in (("tau0", t0), ("tau1", t1), ("r0", a), ("r1", b)):
                _check_prob(f"{name}[{g}]", x)
            if t0 > t1:
                raise InvalidRule(f"group {g!r}: tau0={t0} exceeds tau1={t1}")
            if t0 == t1 and a + b > 1 + R_TOL:
                raise InvalidRule(f"group {g!r}: merged thresholds need r0 + r1 <= 1, got {a + b}")

    def params(self, group):
        return (_lookup(self.tau0, group), _lookup(self.tau1, group),
                _lookup(self.r0, group), _lookup(self.r1, group))

    @property
    def groups(self):
        return tuple(self.tau0)

    def to_dicts(self):
        return [{"group": g, "tau0": float(self.tau0[g]), "tau1": float(self.tau1[g]),
                 "r0": float(self.r0[g]), "r1": float(self.r1[g])} for g in self.tau0]

    def to_json(self, **kwargs):
        return json.dumps(self.to_dicts(), **kwargs)


class _ThresholdHard(HardRule):
    def __init__(self, rule):
        self.rule = rule

    def decide(self, score, group):
        tau, r = self.rule.params(group)
        if score > tau:
            return Outcome(pos=1)
        if score < tau:
            return Outcome(neg=1)
        return Outcome(pos=r, neg=1 - r)

    def __repr__(self):
        return f"apply_threshold({self.rule!r})"


class _DeferringHard(HardRule):
    def __init__(self, rule):
        self.rule = rule

    def decide(self, score, group):
        t0, t1, r0, r1 = self.rule.params(group)
        if score > t1:
            return Outcome(pos=1)
        if score < t0:
            return Outcome(neg=1)
        if t0 < score < t1:
            return ALWAYS_DEFER
        if t0 == t1:
            return Outcome(pos=r1, neg=r0, defer=1 - r0 - r1)
        if score == t1:
            return Outcome(pos=r1, defer=1 - r1)
        return Outcome(neg=r0, defer=1 - r0)

    def __repr__(self):
        return f"apply_deferring_threshold({self.rule!r})"


def apply_threshold(rule):
    return _ThresholdHard(rule)


def apply_deferring_threshold(rule):
    if not isinstance(rule, DeferringThresholdRule):
        raise InvalidRule(f"expected a DeferringThresholdRule, got {type(rule).__name__}")
    return _DeferringHard(rule)


# -- closed-form PPV / NPV of a single threshold ---------------------------------

def _tail(ap, tau, above):
    """(mass, calibrated-mass) strictly above (or below) ``tau``."""
    if above:
        sel = [(p, v) for s, p, v in ap.triples() if s > tau]
        return psum(p for p, _ in sel), psum(p * v for p, v in sel)
    sel = [(p, v) for s, p, v in ap.triples() if s < tau]
    return psum(p for p, _ in sel), psum(p * (1 - v) for p, v in sel)


def ppv_at(ap, tau, r):
    """PPV of the rule positive above ``tau`` and w.p. ``r`` at ``tau``."""
    t, w = _tail(ap, tau, above=True)
    pt = ap.p(tau)
    vt = ap.value(tau) if pt else 0
    den = t + r * pt
    return None if den == 0 else (w + r * vt * pt) / den


def npv_at(ap, tau, r0):
    """NPV of the rule negative below ``tau`` and w.p. ``r0`` at ``tau``."""
    t, w = _tail(ap, tau, above=False)
    pt = ap.p(tau)
    vt = ap.value(tau) if pt else 0
    den = t + r0 * pt
    return None if den == 0 else (w + r0 * (1 - vt) * pt) / den


def _clip_unit(r):
    if -R_TOL <= r < 0:
        return type(r)(0)
    if 1 < r <= 1 + R_TOL:
        return type(r)(1)
    return r


def _solve_linear(t, w, pt, vt, target):
    """Solve ``(w + x*vt*pt) / (t + x*pt) = target`` for ``x`` in [0, 1]."""
    gap = vt - target
    if gap == 0 or (not isinstance(gap, Fraction) and abs(gap) <= 1e-15):
        if t == 0:
            return type(pt)(1)
        resid = w - target * t
        if resid == 0 or (not isinstance(resid, Fraction) and abs(resid) <= 1e-15):
            return type(pt)(1)
        raise DivisionDegenerate(
            f"score value equals target {target} but the tail mean differs")
    x = _clip_unit((target * t - w) / (pt * gap))
    if not 0 <= x <= 1 or t + x * pt == 0:
        return None
    return x


def solve_tail_randomization(ap, tau, target_ppv):
    """Randomization at ``tau`` that makes the PPV equal ``target_ppv``.

    Returns ``None`` when no ``r`` in [0, 1] works at this threshold.
    """
    if tau not in ap:
        raise InvalidRule(f"threshold {tau} is not in the support")
    t, w = _tail(ap, tau, above=True)
    return _solve_linear(t, w, ap.p(tau), ap.value(tau), target_ppv)


def solve_npv_randomization(ap, tau, target_npv):
    """Probability of *Positive* at ``tau`` that makes the NPV equal ``target_npv``.

    Mirror of :func:`solve_tail_randomization`: the rule is Negative below
    ``tau`` and Negative w.p. ``1 - r`` at ``tau``.
    """
    if tau not in ap:
        raise InvalidRule(f"threshold {tau} is not in the support")
    t, w = _tail(ap, tau, above=False)
    u = _solve_linear(t, w, ap.p(tau), 1 - ap.value(tau), target_npv)
    return None if u is None else 1 - u


def fit_ppv(ap, target):
    """Largest threshold (with its randomization) reaching PPV ``target``."""
    for tau in reversed(ap.support):
        try:
            r = solve_tail_randomization(ap, tau, target)
        except DivisionDegenerate:
            continue
        if r is not None:
            return tau, r
    return None


def fit_npv(ap, target):
    """Smallest threshold reaching NPV ``target``; returns ``(tau, r)``
    with ``r`` the probability of Positive at ``tau``."""
    for tau in ap.support:
        try:
            r = solve_npv_randomization(ap, tau, target)
        except DivisionDegenerate:
            continue
        if r is not None:
            return tau, r
    return None


# -- trivial equalizers --------------------------------------------------------------

def _require_nice(family):
    if not is_nice(family):
        raise NotNice("groups do not share a common score support")


def _require_support(family, k=2):
    for g, ap in family.items():
        if len(ap) < k:
            raise SupportTooSmall(f"group {g!r} has {len(ap)} support point(s); need {k}")


def trivial_ppv_equalizer(family, r=1):
    if not 0 < r <= 1:
        raise InvalidRule("randomization must be positive")
    _require_nice(family)
    return ThresholdRule({g: ap.support[-1] for g, ap in family.items()},
                         {g: r for g in family})


def trivial_npv_equalizer(family, r=0):
    if not 0 <= r < 1:
        raise InvalidRule("randomization must be below 1")
    _require_nice(family)
    return ThresholdRule({g: ap.support[0] for g, ap in family.items()},
                         {g: r for g in family})


def trivial_deferring_equalizer(family, r0=1, r1=1):
    if r0 <= 0 or r1 <= 0:
        raise InvalidRule("both randomizations must be positive")
    _require_nice(family)
    return DeferringThresholdRule(
        {g: ap.support[0] for g, ap in family.items()},
        {g: ap.support[-1] for g, ap in family.items()},
        {g: r0 for g in family}, {g: r1 for g in family})


# -- equalizing searches -------------------------------------------------------------

def ppv_range(family):
    """Open interval of PPV targets reachable by non-trivial thresholds in every group."""
    lo = max(base_rate(ap) for ap in family.values())
    hi = min(ap.values[-1] for ap in family.values())
    return lo, hi


def npv_range(family):
    lo = max(1 - base_rate(ap) for ap in family.values())
    hi = min(1 - ap.values[0] for ap in family.values())
    return lo, hi


def equalize_ppv(family, target):
    """Per-group thresholds giving every group PPV ``target``."""
    _require_nice(family)
    _require_support(family)
    lo, hi = ppv_range(family)
    if not lo < target < hi:
        raise TargetOutOfRange(f"PPV target {target} outside ({float(lo):.6g}, {float(hi):.6g})")
    taus, rs = {}, {}
    for g, ap in family.items():
        fit = fit_ppv(ap, target)
        if fit is None:
            raise TargetOutOfRange(f"no threshold reaches PPV {target} in group {g!r}")
        taus[g], rs[g] = fit
    return ThresholdRule(taus, rs)


def equalize_npv(family, target):
    """Per-group thresholds giving every group NPV ``target``."""
    _require_nice(family)
    _require_support(family)
    lo, hi = npv_range(family)
    if not lo < target < hi:
        raise TargetOutOfRange(f"NPV target {target} outside ({float(lo):.6g}, {float(hi):.6g})")
    taus, rs = {}, {}
    for g, ap in family.items():
        fit = fit_npv(ap, target)
        if fit is None:
            raise TargetOutOfRange(f"no threshold reaches NPV {target} in group {g!r}")
        taus[g], rs[g] = fit
    return ThresholdRule(taus, rs)


@dataclass
class _Sides:
    tau0: object
    r0: object
    tau1: object
    r1: object

    def violates(self):
        return self.tau0 > self.tau1 or (self.tau0 == self.tau1 and self.r0 + self.r1 > 1 + R_TOL)


def _nearest_support(ap, x):
    # ties go to the lower score because support is ascending and min() keeps the first
    return min(ap.support, key=lambda s: abs(s - x))


def _refit(ap, sides, ppv, npv, group):
    cur_ppv = ppv_at(ap, sides.tau1, sides.r1)
    if cur_ppv is None or abs(cur_ppv - ppv) > R_TOL:
        fit = fit_ppv(ap, ppv)
        if fit is None:
            raise TargetOutOfRange(f"group {group!r} cannot reach repaired PPV {float(ppv):.6g}")
        sides.tau1, sides.r1 = fit
    cur_npv = npv_at(ap, sides.tau0, sides.r0)
    if cur_npv is None or abs(cur_npv - npv) > R_TOL:
        fit = fit_npv(ap, npv)
        if fit is None:
            raise TargetOutOfRange(f"group {group!r} cannot reach repaired NPV {float(npv):.6g}")
        sides.tau0, sides.r0 = fit[0], 1 - fit[1]


def equalize_ppv_npv_deferring(family, ppv_target, npv_target, *, trace=None):
    """Deferring thresholds equalizing both PPV and NPV across groups.

    The PPV side and the NPV side are first fitted independently.  Any group
    whose lower threshold then sits above its upper one is repaired by
    merging both thresholds at the support point nearest their midpoint;
    every other group is re-fitted to the repaired group's (weakly higher)
    PPV and NPV.  At most ``2 * len(family)`` repairs are attempted.

    ``trace``, if a list, receives one dict per phase-1 fit and per repair.
    """
    _require_nice(family)
    _require_support(family)
    pos = equalize_ppv(family, ppv_target)
    neg = equalize_npv(family, npv_target)
    sides = {g: _Sides(neg.tau[g], 1 - neg.r[g], pos.tau[g], pos.r[g]) for g in family}
    if trace is not None:
        for g, sd in sides.items():
            trace.append({"event": "fit", "group": g, "tau0": sd.tau0, "r0": sd.r0,
                          "tau1": sd.tau1, "r1": sd.r1})

    limit = 2 * len(family)
    repairs = 0
    while True:
        bad = [g for g, sd in sides.items() if sd.violates()]
        if not bad:
            break
        if repairs >= limit:
            raise RepairLimitExceeded(f"thresholds still overlap after {repairs} repairs")
        repairs += 1
        g = bad[0]
        ap, sd = family[g], sides[g]
        moved0 = moved1 = False
        if sd.tau0 > sd.tau1:
            t = _nearest_support(ap, (sd.tau0 + sd.tau1) / 2)
            moved0, moved1 = t != sd.tau0, t != sd.tau1
            sd.tau0 = sd.tau1 = t
        if sd.r0 + sd.r1 > 1:
            if not moved0:
                sd.r1 = 1 - sd.r0
            elif not moved1:
                sd.r0 = 1 - sd.r1
            else:
                share = sd.r0 / (sd.r0 + sd.r1)
                sd.r0, sd.r1 = share, 1 - share
        new_ppv = ppv_at(ap, sd.tau1, sd.r1)
        new_npv = npv_at(ap, sd.tau0, sd.r0)
        if new_ppv is None or new_npv is None:
            raise TargetOutOfRange(f"repair of group {g!r} left a prediction class empty")
        if trace is not None:
            trace.append({"event": "repair", "group": g, "round": repairs,
                          "tau0": sd.tau0, "r0": sd.r0, "tau1": sd.tau1, "r1": sd.r1,
                          "ppv": new_ppv, "npv": new_npv})
        for other, osd in sides.items():
            if other != g:
                _refit(family[other], osd, new_ppv, new_npv, other)

    return DeferringThresholdRule(
        {g: sd.tau0 for g, sd in sides.items()}, {g: sd.tau1 for g, sd in sides.items()},
        {g: sd.r0 for g, sd in sides.items()}, {g: sd.r1 for g, sd in sides.items()})


# -- ordering diagnostics --------------------------------------------------------------

def positive_conditioned(ap, hard, group=None):
    """Distribution of calibrated values among Positive predictions (None if empty)."""
    group = ap.group if group is None else group
    mass = {}
    for s, p, v in ap.triples():
        w = p * hard.outcome(s, group).pos
        if w > 0:
            mass[v] = mass.get(v, 0) + w
    total = psum(mass.values())
    if total == 0:
        return None
    return AccuracyProfile(group, {v: w / total for v, w in mass.items()},
                           normalize=not isinstance(total, Fraction))


def left_of(rule, a, b):
    """True when group ``a``'s threshold is more lenient than ``b``'s.

    More lenient means a lower threshold, or the same threshold with a larger
    probability of Positive on it.
    """
    ta, ra = rule.params(a)
    tb, rb = rule.params(b)
    return ta < tb or (ta == tb and ra > rb)


@dataclass(frozen=True)
class DominanceEntry:
    dominant: str
    dominated: str
    ppv_dominant: float
    ppv_dominated: float

    @property
    def holds(self):
        return self.ppv_dominated < self.ppv_dominant


@dataclass(frozen=True)
class DominanceReport:
    entries: tuple = field(default_factory=tuple)

    @property
    def ok(self):
        return all(e.holds for e in self.entries)

    def __bool__(self):
        return self.ok


def check_dominance_gap(family, rule):
    """For each ordered group pair whose Positive-conditioned distributions are
    strictly stochastically ordered, record both PPVs."""
    hard = apply_threshold(rule) if isinstance(rule, ThresholdRule) else rule
    cond = {g: positive_conditioned(ap, hard, g) for g, ap in family.items()}
    entries = []
    for a in family:
        for b in family:
            if a == b or cond[a] is None or cond[b] is None:
                continue
            if strictly_dominates(cond[a], cond[b]):
                            entries.append(DominanceEntry(a, b, base_rate(cond[a]), base_rate(cond[b])))
    return DominanceReport(tuple(entries))
