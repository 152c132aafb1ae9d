"""Brute-force ground truth for the constructions in this package.

Statistics are recomputed from the explicit joint law of
(score, label, prediction), and possibility / impossibility statements are
checked by exhaustive sweeps over discretized post-processors.  Each
``verify_*`` function returns a :class:`ClaimReport`; :func:`run_suite`
runs a named selection of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import InputError, SupportViolation
from .metrics import GroupStats, Prediction
from .profiles import AccuracyProfile, ProfileFamily, is_exact

ZERO_TOL = 1e-14

# Instance constants for the two-group constructions below.  Any choice keeping
# the profiles positive (and, for the PPV/NPV instance, symmetric) works.
PARABOLA_A = 1.0
PARABOLA_B = 0.2
DECREASING_A = 1.01

# Regression baseline for verify_ppv_npv_impossibility at the default grid.
PPV_NPV_DELTA_GOLDEN = 0.03124235873978387


@dataclass(frozen=True)
class GridSpec:
    resolution: float = 1e-3
    taus: tuple | None = None
    deferring: bool = False

    def __post_init__(self):
        if not 0 < self.resolution <= 1:
            raise InputError(f"grid resolution {self.resolution} outside (0, 1]")

    @property
    def r_values(self):
        n = int(round(1 / self.resolution))
        return np.linspace(0.0, 1.0, n + 1)

    def to_dict(self):
        return {"resolution": self.resolution,
                "taus": None if self.taus is None else [float(t) for t in self.taus],
                "deferring": self.deferring}


@dataclass
class ClaimReport:
    claim: str
    verdict: bool
    params: dict = field(default_factory=dict)
    grid: dict | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self):
        doc = {"claim": self.claim, "verdict": "pass" if self.verdict else "fail",
               "params": _jsonable(self.params)}
        if self.grid is not None:
            doc["grid"] = self.grid
        doc.update(_jsonable(self.details))
        return doc


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (Fraction, np.floating)):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


# -- first-principles statistics ----------------------------------------------------

def _div(num, den):
    if isinstance(den, Fraction) or (is_exact(num) and is_exact(den)):
        return None if den == 0 else Fraction(num) / den
    return None if den <= ZERO_TOL else min(1.0, max(0.0, num / den))


def _total(xs):
    xs = list(xs)
    if all(is_exact(x) for x in xs):
        return sum(xs, Fraction(0))
    return math.fsum(float(x) for x in xs)


def joint_enumerate_stats(ap, rule, group=None):
    """Statistics from ``Pr[S=s, Y=y, Yhat=yhat] = P(s) Pr[y | s] rule(s)(yhat)``."""
    group = ap.group if group is None else group
    preds = (Prediction.NEGATIVE, Prediction.POSITIVE, Prediction.DEFER)
    cells = {(y, d): [] for y in (0, 1) for d in preds}
    for s, p, v in ap.triples():
        o = rule.outcome(s, group)
        for y in (0, 1):
            py = v if y == 1 else 1 - v
            for d in preds:
                cells[(y, d)].append(p * py * o.prob(d))
    J = {k: _total(xs) for k, xs in cells.items()}
    N, P, D = preds
    y1 = _total(J[(1, d)] for d in preds)
    y0 = _total(J[(0, d)] for d in preds)
    said1 = J[(0, P)] + J[(1, P)]
    said0 = J[(0, N)] + J[(1, N)]
    fpr = _div(J[(0, P)], y0)
    fnr = _div(J[(1, N)], y1)
    spec = _div(J[(0, N)], y0)
    return GroupStats(
        base_rate=y1,
        ppv=_div(J[(1, P)], said1),
        npv=_div(J[(0, N)], said0),
        fpr=fpr, fnr=fnr,
        cfpr=_div(J[(0, P)], J[(0, P)] + J[(0, N)]),
        cfnr=_div(J[(1, N)], J[(1, N)] + J[(1, P)]),
        ufpr=fpr, ufnr=fnr,
        tn_based_error=None if spec is None else 1 - spec,
        defer_rate=J[(0, D)] + J[(1, D)],
        positive_rate=said1,
        negative_rate=said0,
    )


# -- vectorized single-threshold sweeps ------------------------------------------------

def threshold_table(ap, r_values):
    """PPV and NPV of every single-threshold rule ``(tau, r)`` on the grid.

    Returns ``(taus, ppv, npv)`` with arrays of shape ``(len(support), len(r))``;
    undefined entries are NaN.
    """
    s = np.array([float(x) for x in ap.support])
    p = np.array([float(x) for x in ap.probs])
    v = np.array([float(x) for x in ap.values])
    r = np.asarray(r_values, dtype=float)[None, :]
    above = (np.cumsum(p[::-1])[::-1] - p)[:, None]
    above_w = (np.cumsum((p * v)[::-1])[::-1] - p * v)[:, None]
    below = (np.cumsum(p) - p)[:, None]
    below_w = (np.cumsum(p * (1 - v)) - p * (1 - v))[:, None]
    pt, vt = p[:, None], v[:, None]
    pos = above + r * pt
    neg = below + (1 - r) * pt
    with np.errstate(invalid="ignore", divide="ignore"):
        ppv = np.where(pos > ZERO_TOL, (above_w + r * vt * pt) / pos, np.nan)
        npv = np.where(neg > ZERO_TOL, (below_w + (1 - r) * (1 - vt) * pt) / neg, np.nan)
    return s, ppv, npv


def edge_only_masks(n_scores, r_values):
    """Rules whose Positive set is only the top score, and whose Negative set
    is only the bottom score.

    These are the equalizers that exist for every shared support; the same
    rule can appear under two labels, e.g. ``(second-highest, r=0)`` and
    ``(top, r=1)``.
    """
    r = np.asarray(r_values, dtype=float)
    top_only = np.zeros((n_scores, r.size), dtype=bool)
    bottom_only = np.zeros_like(top_only)
    top_only[-1, r > 0] = True
    bottom_only[0, r < 1] = True
    if n_scores > 1:
        top_only[-2, r == 0] = True
        bottom_only[1, r == 1] = True
    return top_only, bottom_only


def _grid_profile(group, scores, weights):
    w = np.asarray(weights, dtype=float)
    return AccuracyProfile(group, list(zip(scores, w / w.sum())))


def ppv_npv_instance(a=PARABOLA_A, b=PARABOLA_B, control=False):
    """Uniform profile against a centred parabola on {0.1, ..., 0.9}."""
    scores = [k / 10 for k in range(1, 10)]
    g1 = _grid_profile("g1", scores, np.ones(9))
    if control:
        return ProfileFamily([g1, g1.with_group("g2")])
    weights = [b - a * (s - 0.5) ** 2 for s in scores]
    if min(weights) <= 0:
        raise InputError("parabola constants must keep every mass positive")
    return ProfileFamily([g1, _grid_profile("g2", scores, weights)])


def group_blind_instance():
    """Uniform profile against one proportional to the score on {0.1, ..., 1.0}."""
    scores = [k / 10 for k in range(1, 11)]
    return ProfileFamily([_grid_profile("g1", scores, np.ones(10)),
                          _grid_profile("g2", scores, scores)])


def social_instance(a=DECREASING_A):
    """Decreasing against increasing profile on {0.01, ..., 1.00}.

    Score 0 is left out: its mass under the increasing profile is zero, and
    keeping both supports identical requires dropping it from both.
    """
    scores = [k / 100 for k in range(1, 101)]
    return ProfileFamily([_grid_profile("g1", scores, [a - s for s in scores]),
                          _grid_profile("g2", scores, scores)])


def discretize_density(group, density, step=1e-4):
    """Profile proportional to ``density`` on the grid ``{0, step, ..., 1}``."""
    n = int(round(1 / step))
    xs = np.arange(n + 1) / n
    w = np.array([density(x) for x in xs], dtype=float)
    keep = w > 0
    return _grid_profile(group, [round(float(x), 12) for x in xs[keep]], w[keep])


def _min_linf(a, b, chunk=256):
    """Smallest L-infinity distance between rows of ``a`` and rows of ``b``."""
    best, where = math.inf, (None, None)
    for start in range(0, len(a), chunk):
        block = a[start:start + chunk]
        d = np.abs(block[:, None, :] - b[None, :, :]).max(axis=2)
        i, j = np.unravel_index(np.argmin(d), d.shape)
        if d[i, j] < best:
            best, where = float(d[i, j]), (start + int(i), int(j))
    return best, where


# -- impossibility checks -----------------------------------------------------------------

def _outcome_grid(resolution):
    r = GridSpec(resolution).r_values
    pos, neg = np.meshgrid(r, r, indexing="ij")
    keep = pos + neg <= 1 + 1e-12
    return pos[keep], neg[keep]


def _set_gap(x, y):
    x, y = np.unique(x), np.unique(y)
    if not x.size or not y.size:
        return None
    idx = np.clip(np.searchsorted(y, x), 1, len(y) - 1) if len(y) > 1 else np.zeros(len(x), int)
    cand = np.abs(x - y[idx])
    if len(y) > 1:
        cand = np.minimum(cand, np.abs(x - y[idx - 1]))
    return float(cand.min())


def verify_constant_score_impossibility(br1, br2, grid=None):
    """Two groups each with a single score equal to its base rate.

    Every randomized post-processor on the grid (probabilities of Positive,
    Negative, and deferral at the single score) is enumerated per group.
    """
    if br1 == br2:
        raise InputError("the base rates must differ")
    grid = grid or GridSpec(resolution=1e-2)
    pos, neg = _outcome_grid(grid.resolution)
    per_group = []
    for br in (br1, br2):
        ap = AccuracyProfile("g", {br: 1.0})
        v = float(ap.values[0])
        with np.errstate(invalid="ignore", divide="ignore"):
            ppv = np.where(pos > 0, v * pos / pos, np.nan)
            npv = np.where(neg > 0, (1 - v) * neg / neg, np.nan)
        per_group.append((ppv, npv))
    (ppv1, npv1), (ppv2, npv2) = per_group
    ppv_gap = _set_gap(ppv1[~np.isnan(ppv1)], ppv2[~np.isnan(ppv2)])
    npv_gap = _set_gap(npv1[~np.isnan(npv1)], npv2[~np.isnan(npv2)])
    expected = abs(br1 - br2)
    ok = (ppv_gap is not None and abs(ppv_gap - expected) <= 1e-12
          and npv_gap is not None and abs(npv_gap - expected) <= 1e-12)
    vacuous = int(np.isnan(ppv1).sum() + np.isnan(ppv2).sum())
    return ClaimReport("constant-score", ok, {"br1": br1, "br2": br2}, grid.to_dict(),
                       {"ppv_min_gap": ppv_gap, "npv_min_gap": npv_gap,
                        "expected_gap": expected, "rules_per_group": int(pos.size),
                        "vacuous_rules": vacuous})


def verify_group_blind_threshold_impossibility(metric="ppv", grid=None, family=None):
    """Every non-trivial group-blind threshold leaves a strict gap.

    For PPV the excluded rules are those only ever predicting Positive at the
    top score (which equalize PPV) and the one never predicting Positive.  For
    NPV the mirror image is excluded.
    """
    if metric not in ("ppv", "npv"):
        raise InputError(f"metric must be 'ppv' or 'npv', got {metric!r}")
    grid = grid or GridSpec()
    family = family or group_blind_instance()
    r = grid.r_values
    (s, ppv1, npv1), (_, ppv2, npv2) = (threshold_table(ap, r) for ap in family.values())
    top_only, bottom_only = edge_only_masks(len(s), r)
    if metric == "ppv":
        excluded = top_only
        a, b = ppv2, ppv1            # higher-scoring group should have the larger PPV
        trivial_a, trivial_b = ppv1[top_only], ppv2[top_only]
    else:
        excluded = bottom_only
        a, b = npv1, npv2            # lower-scoring group should have the larger NPV
        trivial_a, trivial_b = npv1[bottom_only], npv2[bottom_only]
    defined = ~np.isnan(a) & ~np.isnan(b) & ~excluded
    gaps = (a - b)[defined]
    trivial_equal = bool(np.allclose(trivial_a, trivial_b, atol=1e-12, rtol=0))
    ok = bool(gaps.size) and bool((gaps > 0).all()) and trivial_equal
    worst = np.unravel_index(np.argmin(np.where(defined, a - b, np.inf)), a.shape)
    return ClaimReport(
        f"group-blind-{metric}", ok,
        {"support": [float(x) for x in s],
         "profiles": {g: [float(x) for x in ap.probs] for g, ap in family.items()}},
        grid.to_dict(),
        {"checked_rules": int(defined.sum()), "min_gap": float(gaps.min()) if gaps.size else None,
         "closest_rule": {"tau": float(s[worst[0]]), "r": float(r[worst[1]])},
         "trivial_family_equal": trivial_equal})


def verify_ppv_npv_impossibility(grid=None, a=PARABOLA_A, b=PARABOLA_B, control=False):
    """Smallest ``max(|PPV gap|, |NPV gap|)`` over all group-aware thresholds.

    Skipped: rules where either statistic is undefined, and rules predicting
    Positive only on the top score or Negative only on the bottom score.
    Those pin PPV (or NPV) to the same extreme value in every group, after
    which the other statistic can always be matched.
    """
    grid = grid or GridSpec()
    family = ppv_npv_instance(a, b, control)
    r = grid.r_values
    pts, labels = [], []
    for ap in family.values():
        s, ppv, npv = threshold_table(ap, r)
        top_only, bottom_only = edge_only_masks(len(s), r)
        ok = ~np.isnan(ppv) & ~np.isnan(npv) & ~top_only & ~bottom_only
        ti, ri = np.nonzero(ok)
        pts.append(np.column_stack([ppv[ok], npv[ok]]))
        labels.append((s[ti], r[ri]))
    delta, (i, j) = _min_linf(pts[0], pts[1])
    witness = {"g1": {"tau": float(labels[0][0][i]), "r": float(labels[0][1][i]),
                      "ppv": float(pts[0][i, 0]), "npv": float(pts[0][i, 1])},
               "g2": {"tau": float(labels[1][0][j]), "r": float(labels[1][1][j]),
                      "ppv": float(pts[1][j, 0]), "npv": float(pts[1][j, 1])}}
    verdict = delta == 0 if control else delta > 0
    return ClaimReport("ppv-npv-threshold", bool(verdict),
                       {"a": a, "b": b, "control": control}, grid.to_dict(),
                       {"delta_star": delta, "closest_pair": witness})


def verify_delta_minimality(ap, target, q_grid_resolution=0.01, match_tol=1e-9):
    """Grid search over deferral vectors for cheaper ways to reach ``target``.

    Returns a report whose verdict is true when no grid policy deferring less
    than the closed-form minimum (minus one grid step of slack) reproduces
    ``target`` within ``match_tol``.
    """
    from .deferral import build_policy_to_target

    if len(ap) > 3:
        raise InputError("brute force limited to supports of size <= 3")
    try:
        policy = build_policy_to_target(ap, target)
    except SupportViolation as exc:
        return ClaimReport("deferral-minimality", True, {}, None,
                           {"vacuous": True, "reason": str(exc)})
    p = np.array([float(x) for x in ap.probs])
    t = np.array([float(target.p(s)) for s in ap.support])
    axis = GridSpec(q_grid_resolution).r_values
    Q = np.stack(np.meshgrid(*([axis] * len(p)), indexing="ij"), axis=-1).reshape(-1, len(p))
    kept = p[None, :] * (1 - Q)
    mass = kept.sum(axis=1)
    live = mass > ZERO_TOL
    cond = kept[live] / mass[live, None]
    dist = np.abs(cond - t[None, :]).max(axis=1)
    delta = 1 - mass[live]
    closed = float(policy.delta)
    cheaper = delta < closed - q_grid_resolution
    best_below = float(dist[cheaper].min()) if cheaper.any() else math.inf
    near = dist <= 2 * q_grid_resolution
    best_near = float(delta[near].min()) if near.any() else None
    ok = best_below > match_tol
    return ClaimReport("deferral-minimality", bool(ok),
                       {"ap": [float(x) for x in ap.probs], "target": [float(x) for x in t]},
                       {"resolution": q_grid_resolution},
                       {"closed_form_delta": closed, "min_distance_if_cheaper": best_below,
                        "cheapest_near_match": best_near})


# -- constructive confirmations --------------------------------------------------------------

def random_nice_family(rng, n_groups, k, exact=False):
    """Random family sharing ``k`` distinct scores with positive masses."""
    if exact:
        scores = sorted({Fraction(int(x), 1000) for x in rng.choice(1001, size=k, replace=False)})
        profiles = []
        for i in range(n_groups):
            w = [Fraction(int(x)) for x in rng.integers(1, 100, size=len(scores))]
            tot = sum(w)
            profiles.append(AccuracyProfile(f"g{i + 1}", {s: x / tot for s, x in zip(scores, w)}))
        return ProfileFamily(profiles)
    scores = np.sort(rng.choice(np.arange(1001), size=k, replace=False)) / 1000
    profiles = []
    for i in range(n_groups):
        w = rng.uniform(0.05, 1.0, size=k)
        profiles.append(AccuracyProfile(f"g{i + 1}", list(zip(scores, w / w.sum()))))
    return ProfileFamily(profiles)


def _confirm_rule(family, hard, fields, tol):
    stats = {g: joint_enumerate_stats(ap, hard, g) for g, ap in family.items()}
    gaps = {}
    for f in fields:
        vals = [getattr(st, f) for st in stats.values()]
        if any(v is None for v in vals):
            gaps[f] = math.inf
        else:
            gaps[f] = float(max(vals) - min(vals))
    return all(g <= tol for g in gaps.values()), gaps, stats


def _confirm_trivial(kind, rng, instances):
    from . import thresholding as th
    results = []
    for fam in instances:
        if kind == "ppv":
            rule = th.trivial_ppv_equalizer(fam, r=float(rng.uniform(0.1, 1)))
            ok, gaps, st = _confirm_rule(fam, th.apply_threshold(rule), ["ppv"], 1e-12)
            expect = float(next(iter(fam.values())).support[-1])
            ok = ok and all(abs(float(s.ppv) - expect) <= 1e-12 for s in st.values())
        elif kind == "npv":
            rule = th.trivial_npv_equalizer(fam, r=float(rng.uniform(0, 0.9)))
            ok, gaps, st = _confirm_rule(fam, th.apply_threshold(rule), ["npv"], 1e-12)
            expect = 1 - float(next(iter(fam.values())).support[0])
            ok = ok and all(abs(float(s.npv) - expect) <= 1e-12 for s in st.values())
        else:
            rule = th.trivial_deferring_equalizer(fam, float(rng.uniform(0.1, 1)),
                                                  float(rng.uniform(0.1, 1)))
            ok, gaps, st = _confirm_rule(fam, th.apply_deferring_threshold(rule),
                                         ["ppv", "npv"], 1e-12)
        results.append({"ok": bool(ok), "gaps": gaps})
    return results


def _random_targets(rng, family, ranges):
    out = []
    for lo, hi in ranges:
        lo, hi = float(lo), float(hi)
        out.append(lo + (hi - lo) * float(rng.uniform(0.05, 0.95)))
    return out


def _confirm_search(kind, rng, instances, tol=1e-9):
    from . import thresholding as th
    results = []
    for fam in instances:
        if kind == "ppv":
            (target,) = _random_targets(rng, fam, [th.ppv_range(fam)])
            rule = th.equalize_ppv(fam, target)
            ok, gaps, st = _confirm_rule(fam, th.apply_threshold(rule), ["ppv"], tol)
            ok = ok and all(abs(float(s.ppv) - target) <= tol for s in st.values())
            results.append({"ok": bool(ok), "target": target, "gaps": gaps})
        elif kind == "npv":
            (target,) = _random_targets(rng, fam, [th.npv_range(fam)])
            rule = th.equalize_npv(fam, target)
            ok, gaps, st = _confirm_rule(fam, th.apply_threshold(rule), ["npv"], tol)
            ok = ok and all(abs(float(s.npv) - target) <= tol for s in st.values())
            results.append({"ok": bool(ok), "target": target, "gaps": gaps})
        else:
            pt, nt = _random_targets(rng, fam, [th.ppv_range(fam), th.npv_range(fam)])
            trace = []
            rule = th.equalize_ppv_npv_deferring(fam, pt, nt, trace=trace)
            ok, gaps, _ = _confirm_rule(fam, th.apply_deferring_threshold(rule),
                                        ["ppv", "npv"], tol)
            repairs = sum(1 for e in trace if e["event"] == "repair")
            results.append({"ok": bool(ok and repairs <= 2 * len(fam)),
                            "targets": [pt, nt], "repairs": repairs, "gaps": gaps})
    return results


def _instances(rng, n=3, k_range=(2, 12), groups=(2, 4)):
    return [random_nice_family(rng, int(rng.integers(groups[0], groups[1] + 1)),
                               int(rng.integers(k_range[0], k_range[1] + 1)))
            for _ in range(n)]


def _claim_trivial(kind, seed):
    rng = np.random.default_rng(seed)
    inst = [ppv_npv_instance()] + _instances(rng)
    res = _confirm_trivial(kind, rng, inst)
    name = {"ppv": "trivial-ppv", "npv": "trivial-npv", "defer": "trivial-deferring"}[kind]
    return ClaimReport(name, all(r["ok"] for r in res), {"seed": seed, "instances": len(inst)},
                       None, {"results": res})


def _claim_search(kind, seed):
    rng = np.random.default_rng(seed)
    inst = [social_instance() if kind == "ppv" else ppv_npv_instance()] + _instances(rng)
    res = _confirm_search(kind, rng, inst)
    name = {"ppv": "ppv-threshold-search", "npv": "npv-threshold-search",
            "defer": "deferring-ppv-npv-search"}[kind]
    return ClaimReport(name, all(r["ok"] for r in res), {"seed": seed, "instances": len(inst)},
                       None, {"results": res})


def verify_social_example(target=0.77):
    """Equalizing PPV on the decreasing/increasing instance puts the
    higher-scoring group at a more lenient threshold."""
    from . import thresholding as th
    fam = social_instance()
    rule = th.equalize_ppv(fam, target)
    lenient = th.left_of(rule, "g2", "g1")
    ok, gaps, _ = _confirm_rule(fam, th.apply_threshold(rule), ["ppv"], 1e-9)
    blind = th.check_dominance_gap(fam, th.ThresholdRule(rule.tau["g1"], rule.r["g1"]))
    return ClaimReport("social-unsat", bool(ok and lenient and blind.ok and blind.entries),
                       {"a": DECREASING_A, "target": target}, None,
                       {"rule": rule.to_dicts(), "g2_more_lenient": lenient, "gaps": gaps})


def verify_deferral_to_target(seed=0, n=3):
    from .deferral import build_policy_to_target, conditional_ap
    F = Fraction
    base = AccuracyProfile("g", {F(0): F(1, 3), F(1, 2): F(1, 3), F(1): F(1, 3)})
    target = AccuracyProfile("*", {F(0): F(1, 2), F(1): F(1, 2)})
    pairs = [(base, target)]
    rng = np.random.default_rng(seed)
    for _ in range(n):
        fam = random_nice_family(rng, 2, int(rng.integers(2, 10)), exact=True)
        a, t = fam.values()
        pairs.append((a, t))
    results = []
    for a, t in pairs:
        pol = build_policy_to_target(a, t)
        cond = conditional_ap(a, pol)
        results.append({"exact": cond.mass == t.mass, "delta": pol.delta})
    mini = verify_delta_minimality(base, target)
    return ClaimReport("deferral-to-target", all(r["exact"] for r in results) and mini.verdict,
                       {"seed": seed}, None,
                       {"results": results, "minimality": mini.to_dict()})


def double_threshold_family(step=1e-4):
    return ProfileFamily([discretize_density("g1", lambda s: 1.0, step),
                          discretize_density("g2", lambda s: 6 * s * (1 - s), step)])


def double_threshold_rule(step=1e-4):
    from .profiles import snap
    from .thresholding import DeferringThresholdRule
    low = snap((5 - math.sqrt(7)) / 6, step)
    high = snap(1 - (5 - math.sqrt(7)) / 6, step)
    return DeferringThresholdRule({"g1": 0.5, "g2": low}, {"g1": 0.5, "g2": high},
                                  {"g1": 0.5, "g2": 0.5}, {"g1": 0.5, "g2": 0.5})


def verify_double_threshold_example(step=1e-4, tol=1e-3):
    from .thresholding import apply_deferring_threshold
    fam, rule = double_threshold_family(step), double_threshold_rule(step)
    hard = apply_deferring_threshold(rule)
    stats = {g: joint_enumerate_stats(ap, hard, g) for g, ap in fam.items()}
    expect = {"ppv": 0.75, "npv": 0.75, "cfpr": 0.25, "cfnr": 0.25}
    errs = {g: {f: abs(float(getattr(st, f)) - v) for f, v in expect.items()}
            for g, st in stats.items()}
    ok = all(e <= tol for d in errs.values() for e in d.values())
    return ClaimReport("double-threshold-example", ok, {"step": step, "tolerance": tol}, None,
                       {"stats": {g: st.to_dict() for g, st in stats.items()}, "errors": errs})


def verify_mass_averaging_example():
    from .mass_averaging import apply_kernel, calibration_residual, equalize_by_mass_averaging
    fam = ProfileFamily([AccuracyProfile("g1", {0.0: 1 / 3, 0.5: 1 / 3, 1.0: 1 / 3}),
                         AccuracyProfile("g2", {0.0: 0.5, 1.0: 0.5})])
    sol = equalize_by_mass_averaging(fam)
    out = apply_kernel(fam, sol.kernel)
    m1, m2 = sol.kernel["g1"].matrix, sol.kernel["g2"].matrix
    expect2 = np.array([[2 / 3, 1 / 3, 0], [0, 1 / 3, 2 / 3]])
    moved = float(0.5 * m2[0, 1] + 0.5 * m2[1, 1])
    ok = (np.allclose(m1, np.eye(3), atol=1e-9) and np.allclose(m2, expect2, atol=1e-9)
          and all(abs(out[g].p(s) - 1 / 3) <= 1e-9 for g in out for s in (0.0, 0.5, 1.0))
          and calibration_residual(fam, sol.kernel) <= 1e-9 and abs(moved - 1 / 3) <= 1e-9)
    return ClaimReport("mass-averaging-example", bool(ok), {}, None,
                       {"kernel_g1": m1.tolist(), "kernel_g2": m2.tolist(),
                        "moved_mass": moved, "cost": sol.cost})


def _random_blind_rule(rng, deferring):
    from .metrics import BlindRule, Outcome
    cut = float(rng.uniform(0, 1))
    width = float(rng.uniform(0, 0.3)) if deferring else 0.0
    def fn(s):
        s = float(s)
        if s > cut + width:
            return Outcome(pos=1)
        if s < cut:
            return Outcome(neg=1)
        return Outcome(defer=1) if deferring else Outcome(pos=0.5, neg=0.5)
    return BlindRule(fn)


def verify_equal_profiles_blind(seed=0, n=20):
    """Identical profiles plus a group-blind rule equalize all four statistics."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        fam = random_nice_family(rng, 1, int(rng.integers(1, 12)))
        ap = next(iter(fam.values()))
        fam = ProfileFamily([ap.with_group(f"g{i}") for i in range(int(rng.integers(2, 5)))])
        ok, gaps, _ = _confirm_rule(fam, _random_blind_rule(rng, False),
                                    ["ppv", "npv", "fpr", "fnr"], 1e-12)
        worst = max([worst] + [g for g in gaps.values() if math.isfinite(g)])
    return ClaimReport("equal-profiles-blind", worst <= 1e-12, {"seed": seed, "instances": n},
                       None, {"max_gap": worst})


def verify_equal_conditional_profiles_blind(seed=0, n=20):
    """Deferral to a shared conditional profile plus a blind deferring rule."""
    from .deferral import compose_with_blind_rule, strategy_pointwise_min
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        fam = random_nice_family(rng, int(rng.integers(2, 4)), int(rng.integers(2, 12)))
        pols = strategy_pointwise_min(fam)
        hard = compose_with_blind_rule(pols, _random_blind_rule(rng, True))
        _, gaps, _ = _confirm_rule(fam, hard, ["ppv", "npv", "cfpr", "cfnr"], 1e-12)
        worst = max([worst] + [g for g in gaps.values() if math.isfinite(g)])
    return ClaimReport("equal-conditional-profiles-blind", worst <= 1e-12,
                       {"seed": seed, "instances": n}, None, {"max_gap": worst})


def _constant_score(metric):
    rep = verify_constant_score_impossibility(0.3, 0.6)
    rep.claim = f"constant-score-{metric}"
    key = f"{metric}_min_gap"
    rep.verdict = rep.details[key] is not None and abs(rep.details[key] - 0.3) <= 1e-12
    return rep


def _ppv_npv(grid):
    rep = verify_ppv_npv_impossibility(grid)
    if PPV_NPV_DELTA_GOLDEN is not None and grid.resolution == GridSpec().resolution:
        rep.details["golden"] = PPV_NPV_DELTA_GOLDEN
        if abs(rep.details["delta_star"] - PPV_NPV_DELTA_GOLDEN) > 1e-9:
            rep.verdict = False
    return rep


CLAIMS = {
    "constant-score-ppv": lambda grid, seed: _constant_score("ppv"),
    "constant-score-npv": lambda grid, seed: _constant_score("npv"),
    "group-blind-ppv": lambda grid, seed: verify_group_blind_threshold_impossibility("ppv", grid),
    "group-blind-npv": lambda grid, seed: verify_group_blind_threshold_impossibility("npv", grid),
    "ppv-npv-threshold": lambda grid, seed: _ppv_npv(grid),
    "trivial-ppv": lambda grid, seed: _claim_trivial("ppv", seed),
    "trivial-npv": lambda grid, seed: _claim_trivial("npv", seed),
    "trivial-deferring": lambda grid, seed: _claim_trivial("defer", seed),
    "ppv-threshold-search": lambda grid, seed: _claim_search("ppv", seed),
    "npv-threshold-search": lambda grid, seed: _claim_search("npv", seed),
    "deferring-ppv-npv-search": lambda grid, seed: _claim_search("defer", seed),
    "social-unsat": lambda grid, seed: verify_social_example(),
    "deferral-to-target": lambda grid, seed: verify_deferral_to_target(seed),
    "double-threshold-example": lambda grid, seed: verify_double_threshold_example(),
    "mass-averaging-example": lambda grid, seed: verify_mass_averaging_example(),
    "equal-profiles-blind": lambda grid, seed: verify_equal_profiles_blind(seed),
    "equal-conditional-profiles-blind":
        lambda grid, seed: verify_equal_conditional_profiles_blind(seed),
}


def run_suite(claims=None, grid=None, seed=0):
    """Run the named claims (all when ``claims`` is None or contains ``"all"``)."""
    grid = grid or GridSpec()
    if not claims or "all" in claims:
        claims = list(CLAIMS)
    unknown = [c for c in claims if c not in CLAIMS]
    if unknown:
        raise InputError(f"unknown claim id(s): {', '.join(unknown)}; "
                         f"choose from {', '.join(CLAIMS)}")
    return [CLAIMS[c](grid, seed) for c in claims]

