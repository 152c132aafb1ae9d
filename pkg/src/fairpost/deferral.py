"""Deferral policies that reshape a group's conditional accuracy profile.

A policy defers on each score ``s`` with probability ``q(s)``, independently
of the label.  The retained scores then follow ``p(s) (1 - q(s)) / (1 - delta)``
where ``delta`` is the total deferred mass.  Any target profile whose support
lies inside the group's support can be reached this way; the construction
here uses the least possible deferral mass.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

from .errors import AllDeferred, DoesNotPropagateDefer, NotGroupBlind, SupportViolation
from .metrics import DEFERRED, HardRule, Outcome
from .profiles import common_mass, is_exact, psum


@dataclass(frozen=True)
class DeferralPolicy:
    group: str
    q: dict
    delta: float

    def __post_init__(self):
        for s, x in self.q.items():
            if not 0 <= x <= 1:
                raise ValueError(f"deferral probability {x!r} at score {s!r} outside [0, 1]")

    def at(self, score):
        return self.q.get(score, 0)

    def to_dict(self):
        return {"group": self.group, "delta": float(self.delta),
                "q": [{"score": float(s), "p": float(x)} for s, x in sorted(self.q.items())]}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["group"], {e["score"]: e["p"] for e in doc["q"]}, doc["delta"])


def null_policy(ap):
    zero = 0 if ap.exact else 0.0
    return DeferralPolicy(ap.group, {s: zero for s in ap.support}, zero)


def deferred_mass(ap, policy):
    return psum(p * policy.at(s) for s, p in ap.items())


def conditional_ap(ap, policy):
    """Profile of retained scores under ``policy``."""
    delta = deferred_mass(ap, policy)
    if delta >= 1 or (not is_exact(delta) and 1 - delta <= 1e-14):
        raise AllDeferred(f"policy defers on all of group {ap.group!r}")
    kept = {s: p * (1 - policy.at(s)) / (1 - delta) for s, p in ap.items()}
    return ap.with_mass(kept)


def build_policy_to_target(ap, target):
    """Minimal-mass policy whose conditional profile is ``target``."""
    missing = [s for s in target.support if s not in ap]
    if missing:
        raise SupportViolation(
            f"target scores {missing[:5]} not in the support of group {ap.group!r}")
    ratio = min(ap.p(s) / target.p(s) for s in target.support)
    delta = 1 - ratio
    q = {}
    for s, p in ap.items():
        if s in target:
            x = 1 - target.p(s) * ratio / p
            if not is_exact(x):
                x = min(1.0, max(0.0, x))
            q[s] = x
        else:
            q[s] = type(delta)(1)
    return DeferralPolicy(ap.group, q, delta)


def strategy_match_group(family, anchor):
    """Defer only outside ``anchor`` so every group's conditional profile matches it."""
    target = family[anchor]
    out = {}
    for g, ap in family.items():
        out[g] = null_policy(ap) if g == anchor else build_policy_to_target(ap, target)
    return out


def strategy_pointwise_min(family):
    """Keep exactly the pointwise minimum of all profiles in every group.

    Each group defers ``p(s) - min_g p_g(s)`` at every score, so all groups
    defer the same total mass (one minus the common mass) and share the
    normalized pointwise minimum as conditional profile.  When some group
    sits strictly above the minimum everywhere this defers more than
    :func:`build_policy_to_target` would for that group; equal deferral
    rates are the point of this strategy.
    """
    mins, total = common_mass(family)
    out = {}
    for g, ap in family.items():
        one = 1 if ap.exact else 1.0
        q = {}
        for s, p in ap.items():
            x = one - mins[s] / p if s in mins else one
            q[s] = x if is_exact(x) else min(1.0, max(0.0, x))
        out[g] = DeferralPolicy(g, q, one - total)
    return out


class ComposedRule(HardRule):
    """Defer with the policy's probability, otherwise apply a group-blind rule."""

    def __init__(self, policies, blind_rule):
        self.policies = dict(policies)
        self.blind_rule = blind_rule

    def decide(self, score, group):
        q = self.policies[group].at(score)
        o = self.blind_rule.outcome(score, group)
        keep = 1 - q
        return Outcome(neg=keep * o.neg, pos=keep * o.pos, defer=q + keep * o.defer)


def compose_with_blind_rule(policies, blind_rule, scores=None):
    """Compose per-group deferral with a single hard rule shared by all groups.

    ``scores`` (default: every score named by a policy) are the inputs on
    which group blindness is checked.
    """
    groups = list(policies)
    if scores is None:
        scores = sorted({s for pol in policies.values() for s in pol.q})
    if not blind_rule.is_group_blind(groups, scores):
        raise NotGroupBlind("the hard rule treats groups differently")
    if any(not blind_rule.outcome(DEFERRED, g) == Outcome(defer=1) for g in groups):
        raise DoesNotPropagateDefer("the hard rule must defer on a deferred input")
    return ComposedRule(policies, blind_rule)


def total_deferral(family, policies, weights=None):
    """Fraction deferred over the combined population.

    ``weights`` gives each group's share of the population (default equal).
    """
    if weights is None:
        weights = {g: 1 / len(family) for g in family}
    total = sum(weights.values())
    return psum(weights[g] / total * deferred_mass(family[g], policies[g]) for g in family)


def policies_to_json(policies, **kwargs):
    return json.dumps([p.to_dict() for p in policies.values()], **kwargs)


def deferral_rows(family, policies):
    """Rows ``(group, score, mass, deferred_mass, retained_mass)``."""
    for g, ap in family.items():
        pol = policies[g]
        for s, p in ap.items():
            d = p * pol.at(s)
            yield g, float(s), float(p), float(d), float(p - d)


def deferrals_to_csv(family, policies, fh=None):
    buf = io.StringIO() if fh is None else fh
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("group", "score", "mass", "deferred_mass", "retained_mass"))
    for row in deferral_rows(family, policies):
        writer.writerow(row)
    return buf.getvalue() if fh is None else None


def conditional_profile_gap(family, policies):
    """Max absolute gap between any two groups' conditional profiles."""
    conds = [conditional_ap(ap, policies[g]) for g, ap in family.items()]
    keys = sorted({s for c in conds for s in c.support})
    return max((max(c.p(s) for c in conds) - min(c.p(s) for c in conds) for s in keys),
               default=0)

