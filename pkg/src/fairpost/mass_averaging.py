"""Equalize accuracy profiles without deferral by averaging score mass.

Each group gets a row-stochastic kernel moving score ``s`` to output score
``s'``.  The kernels must produce one shared output profile that is still
calibrated: every output score must equal the mean of the input scores sent
to it.  That forces equal base rates.  Among feasible kernels the one with
least expected ``|s - s'|`` movement is chosen, which keeps the identity when
profiles already agree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import NumericalFailure, UnequalBaseRates
from .profiles import AccuracyProfile, ProfileFamily, base_rate, snap
from .simplex import solve

CHECK_TOL = 1e-9


@dataclass(frozen=True)
class KernelMatrix:
    inputs: tuple
    outputs: tuple
    matrix: np.ndarray

    def to_dict(self, group):
        return {"group": group, "inputs": [float(s) for s in self.inputs],
                "outputs": [float(s) for s in self.outputs],
                "matrix": [[float(x) for x in row] for row in self.matrix]}


@dataclass(frozen=True)
class TransitionKernel:
    groups: dict

    def __getitem__(self, group):
        return self.groups[group]

    def to_json(self, **kwargs):
        return json.dumps([k.to_dict(g) for g, k in self.groups.items()], **kwargs)

    @classmethod
    def from_json(cls, text):
        return cls({d["group"]: KernelMatrix(tuple(d["inputs"]), tuple(d["outputs"]),
                                             np.array(d["matrix"], dtype=float))
                    for d in json.loads(text)})


def identity_kernel(family):
    out = {}
    for g, ap in family.items():
        vals = tuple(float(v) for v in ap.values)
        out[g] = KernelMatrix(vals, vals, np.eye(len(vals)))
    return TransitionKernel(out)


@dataclass(frozen=True)
class MassAveragingLP:
    groups: tuple
    inputs: dict          # group -> (scores, masses) on the calibrated value axis
    outputs: tuple
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @property
    def n_variables(self):
        return self.c.size

    def block(self, group):
        """Slice of the variable vector holding ``group``'s kernel."""
        start = 0
        for g in self.groups:
            size = len(self.inputs[g][0]) * len(self.outputs)
            if g == group:
                return slice(start, start + size)
            start += size
        raise KeyError(group)


@dataclass(frozen=True)
class MassAveragingSolution:
    kernel: TransitionKernel
    target: AccuracyProfile
    cost: float


def _value_axis(ap):
    merged = {}
    for _, p, v in ap.triples():
        merged[float(v)] = merged.get(float(v), 0.0) + float(p)
    scores = tuple(sorted(merged))
    return scores, np.array([merged[s] for s in scores])


def build_lp(family, output_support=None, tolerance=1e-9):
    """Assemble the linear program for ``family``.

    ``output_support`` defaults to the union of all groups' calibrated scores.
    """
    rates = [float(base_rate(ap)) for ap in family.values()]
    gap = max(rates) - min(rates)
    if gap > tolerance:
        raise UnequalBaseRates(gap, tolerance)
    inputs = {g: _value_axis(ap) for g, ap in family.items()}
    if output_support is None:
        outputs = tuple(sorted({s for sc, _ in inputs.values() for s in sc}))
    else:
        outputs = tuple(sorted({snap(s) for s in output_support}))
    if not outputs:
        raise ValueError("output support must be nonempty")
    out = np.array(outputs)
    k2 = len(outputs)
    sizes = [len(inputs[g][0]) * k2 for g in family]
    n = sum(sizes) + k2
    star = slice(n - k2, n)
    rows, rhs = [], []
    cost = np.zeros(n)
    start = 0
    for g, size in zip(family, sizes):
        scores, probs = inputs[g]
        sc = np.array(scores)
        k1 = len(scores)
        # row-stochastic
        for i in range(k1):
            row = np.zeros(n)
            row[start + i * k2:start + (i + 1) * k2] = 1.0
            rows.append(row)
            rhs.append(1.0)
        for j in range(k2):
            idx = start + np.arange(k1) * k2 + j
            # output mass matches the shared target
            row = np.zeros(n)
            row[idx] = probs
            row[star.start + j] = -1.0
            rows.append(row)
            rhs.append(0.0)
            # output score j is the mean of what is sent there
            row = np.zeros(n)
            row[idx] = sc * probs
            row[star.start + j] = -out[j]
            rows.append(row)
            rhs.append(0.0)
        cost[start:start + size] = (probs[:, None] * np.abs(sc[:, None] - out[None, :])).ravel()
        start += size
    return MassAveragingLP(tuple(family), inputs, outputs, np.array(rows), np.array(rhs), cost)


def solve_lp(lp):
    """Optimal kernels and shared target profile for ``lp``."""
    res = solve(lp.c, lp.A, lp.b)
    resid = np.abs(lp.A @ res.x - lp.b).max(initial=0.0)
    if resid > CHECK_TOL:
        raise NumericalFailure(f"constraint residual {resid:.3g} after solve")
    k2 = len(lp.outputs)
    kernels = {}
    for g in lp.groups:
        k1 = len(lp.inputs[g][0])
        mat = res.x[lp.block(g)].reshape(k1, k2)
        mat = mat / mat.sum(axis=1, keepdims=True)
        kernels[g] = KernelMatrix(lp.inputs[g][0], lp.outputs, mat)
    star = res.x[-k2:]
    target = AccuracyProfile("*", [(s, p) for s, p in zip(lp.outputs, star) if p > 1e-15],
                             normalize=True)
    return MassAveragingSolution(TransitionKernel(kernels), target, res.objective)


def equalize_by_mass_averaging(family, output_support=None, tolerance=1e-9):
    return solve_lp(build_lp(family, output_support, tolerance))


def apply_kernel(family, kernel):
    """Push each group's profile through its kernel."""
    out = []
    for g, ap in family.items():
        km = kernel[g]
        scores, probs = _value_axis(ap)
        idx = [km.inputs.index(s) for s in scores]
        mass = probs @ km.matrix[idx]
        out.append(AccuracyProfile(g, [(s, p) for s, p in zip(km.outputs, mass) if p > 0],
                                   normalize=True))
    return ProfileFamily(out)


def transport_cost(family, kernel):
    """Expected ``|s - s'|`` moved, recomputed from the kernel."""
    total = 0.0
    for g, ap in family.items():
        km = kernel[g]
        scores, probs = _value_axis(ap)
        dist = np.abs(np.array(km.inputs)[:, None] - np.array(km.outputs)[None, :])
        idx = [km.inputs.index(s) for s in scores]
        total += float(probs @ (km.matrix[idx] * dist[idx]).sum(axis=1))
    return total


def calibration_residual(family, kernel):
    """Max over groups and output scores of ``|sum s p M - s' sum p M|``."""
    worst = 0.0
    for g, ap in family.items():
        km = kernel[g]
        scores, probs = _value_axis(ap)
        idx = [km.inputs.index(s) for s in scores]
        sent = probs[:, None] * km.matrix[idx]
        lhs = (np.array(scores)[:, None] * sent).sum(axis=0)
        rhs = np.array(km.outputs) * sent.sum(axis=0)
        worst = max(worst, float(np.abs(lhs - rhs).max(initial=0.0)))
    return worst
