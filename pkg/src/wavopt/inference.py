"""Control-as-inference utilities: reward-to-optimality operators,
variational transport steps, and trajectory posteriors.

A *reward operator family* F_r maps an optimality probability p in
(0, 1] to a reward value in [r_min, r_max].  Two stock constructions:

* ``affine_family``  - F(p) = r_min + (r_max - r_min) p
* ``log_family``     - F(p) = r_max + c log p with c chosen so that
  F(eps) = r_min at the probability floor eps = 1e-6 (the classical
  exponential-of-reward model, inverted)

``check_conditions`` verifies the two properties every admissible family
needs: strict monotonicity on the probability domain and coverage of the
full reward range.  ``optimality_likelihood`` inverts the operator,
clipping out-of-range rewards (recorded, never silent) and flooring the
returned probability at 1e-9 so downstream log-posteriors stay finite.

``variational_step`` performs one backtracking gradient descent step on
the k-th power of the sliced distance between a candidate measure and a
target, moving atom positions only; the gradient flows through each
defining function by the chain rule.  For two unit point masses at q and
p with a linear slice and k = 2 the gradient has magnitude 2|q - p| and
points away from p, so the step moves q toward p.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .cmdp import TabularCmdp
from .measures import (
    DefiningFunction,
    DiscreteMeasure,
    OneDMeasure,
    SliceParameterSet,
    one_d_measure,
    project,
)
from .ot import wasserstein_1d, wasserstein_1d_power_grad

__all__ = [
    "LIKELIHOOD_FLOOR",
    "PROBABILITY_FLOOR",
    "RATIO_CAP",
    "RewardOperatorFamily",
    "affine_family",
    "log_family",
    "ConditionsReport",
    "check_conditions",
    "optimality_likelihood",
    "greedy_by_operator",
    "VariationalStepResult",
    "variational_step",
    "sliced_power_objective",
    "sample_actions",
    "InterpretationFactor",
    "decompose_interpretation",
    "PosteriorResult",
    "trajectory_posterior",
]

PROBABILITY_FLOOR = 1e-6
LIKELIHOOD_FLOOR = 1e-9
# p(traj|factor) is a probability: displayed values cap at 1, flagged
RATIO_CAP = 1.0


# -- reward operator families -------------------------------------------------


@dataclass(eq=False)
class RewardOperatorFamily:
    """Monotone map from optimality probability to reward.

    ``fn`` maps probabilities to rewards; ``inv`` is the analytic
    inverse when available (otherwise bisection on [p_floor, 1] is
    used).  Both must accept numpy arrays.
    """

    name: str
    r_min: float
    r_max: float
    fn: Callable[[np.ndarray], np.ndarray]
    inv: Optional[Callable[[np.ndarray], np.ndarray]] = None
    p_floor: float = PROBABILITY_FLOOR

    def __post_init__(self) -> None:
        if not self.r_max > self.r_min:
            raise ValueError("reward range must have r_max > r_min")
        if not 0.0 < self.p_floor < 1.0:
            raise ValueError("probability floor must lie in (0, 1)")

    @property
    def span(self) -> float:
        return self.r_max - self.r_min

    def __call__(self, p) -> np.ndarray:
        return self.fn(np.asarray(p, dtype=float))

    def inverse(self, r) -> np.ndarray:
        """Probability p with F(p) = r, for r inside the reward range."""
        r = np.asarray(r, dtype=float)
        if self.inv is not None:
            return np.clip(self.inv(r), 0.0, 1.0)
        # bisection; F is strictly increasing on [p_floor, 1]
        lo = np.full(r.shape, self.p_floor)
        hi = np.ones(r.shape)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            below = self.fn(mid) < r
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)


def affine_family(r_min: float, r_max: float) -> RewardOperatorFamily:
    span = r_max - r_min
    return RewardOperatorFamily(
        name="affine",
        r_min=r_min,
        r_max=r_max,
        fn=lambda p: r_min + span * np.asarray(p, dtype=float),
        inv=lambda r: (np.asarray(r, dtype=float) - r_min) / span,
    )


def log_family(r_min: float, r_max: float, eps: float = PROBABILITY_FLOOR) -> RewardOperatorFamily:
    # F(1) = r_max and F(eps) = r_min: c = span / (-log eps)
    span = r_max - r_min
    c = span / (-math.log(eps))
    return RewardOperatorFamily(
        name="log",
        r_min=r_min,
        r_max=r_max,
        fn=lambda p: r_max + c * np.log(np.asarray(p, dtype=float)),
        inv=lambda r: np.exp((np.asarray(r, dtype=float) - r_max) / c),
        p_floor=eps,
    )


@dataclass
class ConditionsReport:
    """Admissibility check for a reward operator family."""

    strictly_monotone: bool
    reaches_min: bool
    reaches_max: bool
    min_attained: float
    max_attained: float
    grid_size: int

    def passed(self) -> bool:
        return self.strictly_monotone and self.reaches_min and self.reaches_max


def check_conditions(family: RewardOperatorFamily, grid_size: int = 201, tol: float = 1e-9) -> ConditionsReport:
    """Strict monotonicity on a probability grid plus reward-range coverage.

    The low end of the range is checked with the value at the floor and
    its linear extrapolation toward p = 0 (``2 F(eps) - F(2 eps)``), so
    families that attain r_min only in the p -> 0 limit still pass.
    """
    eps = family.p_floor
    grid = np.linspace(eps, 1.0, grid_size)
    vals = family(grid)
    monotone = bool(np.all(np.diff(vals) > 0.0))
    extrap = 2.0 * float(family(eps)) - float(family(2.0 * eps))
    lo = min(float(vals[0]), extrap)
    hi = float(vals[-1])
    return ConditionsReport(
        strictly_monotone=monotone,
        reaches_min=lo <= family.r_min + tol,
        reaches_max=hi >= family.r_max - tol,
        min_attained=lo,
        max_attained=hi,
        grid_size=grid_size,
    )


def optimality_likelihood(family: RewardOperatorFamily, reward):
    """Invert the operator: reward -> optimality probability.

    Rewards outside [r_min, r_max] are clipped to the range first and
    the clip is reported; the returned probability is floored at 1e-9.
    Returns ``(p, clipped)`` with scalar in / scalar out semantics.
    """
    r = np.asarray(reward, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    clipped = (r < family.r_min) | (r > family.r_max)
    r_in = np.clip(r, family.r_min, family.r_max)
    p = np.maximum(family.inverse(r_in), LIKELIHOOD_FLOOR)
    if scalar:
        return float(p[0]), bool(clipped[0])
    return p, clipped


def greedy_by_operator(family: RewardOperatorFamily, probabilities) -> int:
    """Index of the largest operator value; ties break to the lowest index.

    For any strictly increasing family this equals the argmax of the
    probabilities themselves, which is what makes operator-based action
    selection invariant across admissible families.
    """
    vals = family(np.asarray(probabilities, dtype=float))
    return int(np.argmax(vals))


# -- variational transport step ------------------------------------------------


def _positive_part(measure: DiscreteMeasure):
    keep = measure.weights > 0.0
    return measure.atoms[keep], measure.weights[keep] / measure.weights[keep].sum(), keep


def _project_keep_order(atoms: np.ndarray, weights: np.ndarray, f: DefiningFunction, offset: float):
    """Slice projection that remembers the sort permutation (no merging)."""
    vals = f.evaluate(atoms) - offset
    order = np.argsort(vals, kind="stable")
    return OneDMeasure(vals[order], weights[order]), order


def sliced_power_objective(
    atoms: np.ndarray,
    weights: np.ndarray,
    target_projections: Sequence[OneDMeasure],
    slices: SliceParameterSet,
    k: float,
) -> float:
    """Mean over slices of W_k^k between the projected atoms and targets."""
    total = 0.0
    for (f, offset), targ in zip(slices, target_projections):
        proj, _ = _project_keep_order(atoms, weights, f, offset)
        total += wasserstein_1d(proj, targ, k) ** k
    return total / len(target_projections)


@dataclass
class VariationalStepResult:
    measure: DiscreteMeasure
    objective_before: float
    objective_after: float
    step_used: float
    halvings: int
    gradient: np.ndarray


def variational_step(
    q: DiscreteMeasure,
    p: DiscreteMeasure,
    slices: SliceParameterSet,
    k: float = 2.0,
    step_size: float = 0.1,
    max_halvings: int = 30,
) -> VariationalStepResult:
    """One descent step on the sliced transport cost, moving q's atoms.

    The objective is the mean over slices of W_k^k between the sliced
    measures (the k-th power of the sliced distance, so minimizers
    coincide).  Atom weights stay fixed; zero-weight atoms do not move.
    The step backtracks by halving until the objective strictly
    decreases; if no decrease is found the original measure is returned
    with step 0.
    """
    if math.isinf(k):
        raise ValueError("variational step requires finite k")
    if len(slices) == 0:
        raise ValueError("need at least one slice")
    atoms0, w_pos, keep = _positive_part(q)
    n_slices = len(slices)

    targets = [project(p, f, offset) for f, offset in slices]

    grad_pos = np.zeros_like(atoms0)
    before = 0.0
    for (f, offset), targ in zip(slices, targets):
        proj, order = _project_keep_order(atoms0, w_pos, f, offset)
        wk, g_sorted = wasserstein_1d_power_grad(proj, targ, k)
        before += wk
        g_orig = np.zeros(atoms0.shape[0])
        g_orig[order] = g_sorted
        grad_pos += g_orig[:, None] * f.gradient(atoms0)
    before /= n_slices
    grad_pos /= n_slices

    full_grad = np.zeros_like(q.atoms)
    full_grad[keep] = grad_pos

    if not np.any(grad_pos):
        return VariationalStepResult(q, before, before, 0.0, 0, full_grad)

    step = float(step_size)
    halvings = 0
    while True:
        candidate = atoms0 - step * grad_pos
        after = sliced_power_objective(candidate, w_pos, targets, slices, k)
        if after < before:
            break
        if halvings >= max_halvings:
            return VariationalStepResult(q, before, before, 0.0, halvings, full_grad)
        step *= 0.5
        halvings += 1

    new_atoms = q.atoms.copy()
    new_atoms[keep] = candidate
    moved = DiscreteMeasure(new_atoms, q.weights.copy())
    return VariationalStepResult(moved, before, after, step, halvings, full_grad)


# -- sampling and interpretation -----------------------------------------------


def sample_actions(positions, weights, n: int, rng) -> np.ndarray:
    """Draw n samples from a discrete measure on R.

    Zero-weight atoms are removed (and coincident atoms merged) before
    inverse-CDF sampling, so impossible actions are never emitted.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    m = one_d_measure(positions, weights)
    cum = m.cumulative()
    u = rng.random(n)
    idx = np.searchsorted(cum, u, side="right")
    return m.positions[idx]


@dataclass
class InterpretationFactor:
    """How much more (or less) likely the trajectory is than one factor.

    ``ratio`` is the raw quotient used for exact reconstruction;
    ``capped_ratio`` is clamped to RATIO_CAP for display, with ``capped``
    recording when clamping (or a zero denominator) occurred.
    """

    name: str
    probability: float
    ratio: float
    capped_ratio: float
    capped: bool

    def reconstruct(self) -> float:
        return self.ratio * self.probability


def decompose_interpretation(
    p_trajectory: float,
    factor_probabilities,
    names: Optional[Sequence[str]] = None,
    cap: float = RATIO_CAP,
) -> list[InterpretationFactor]:
    """Per-factor likelihood ratios p(traj) / p(factor).

    The raw ratio reconstructs the trajectory probability exactly
    (``ratio * probability == p_trajectory`` up to one rounding).
    The quotient of two estimated probabilities can exceed 1; the
    displayed value is capped there with a flag rather than silently
    clipped, since p(traj|factor) is itself a probability.  Factor
    probabilities must be strictly positive.
    """
    probs = np.asarray(factor_probabilities, dtype=float)
    if names is None:
        names = [f"factor_{i}" for i in range(probs.size)]
    if len(names) != probs.size:
        raise ValueError("one name per factor required")
    if np.any(probs <= 0.0):
        raise ValueError("factor probabilities must be > 0")
    out = []
    for name, pi in zip(names, probs):
        pi = float(pi)
        ratio = p_trajectory / pi
        capped = ratio > cap
        out.append(InterpretationFactor(name, pi, ratio, min(ratio, cap), capped))
    return out


# -- trajectory posterior -------------------------------------------------------


@dataclass
class PosteriorResult:
    log_posterior: float
    finite: bool
    clipped_steps: int


def trajectory_posterior(
    cmdp: TabularCmdp,
    policy: np.ndarray,
    states: Sequence[int],
    actions: Sequence[int],
    family: RewardOperatorFamily,
    theta_log_prior: float = 0.0,
) -> PosteriorResult:
    """Log joint of a trajectory under the optimality model.

    Sums the optimality log-likelihood of each reward (via the inverted
    operator, floored at 1e-9), the initial-state log-probability, the
    policy log-probabilities, the transition log-probabilities, and an
    optional parameter log-prior.  A zero-probability initial state,
    action, or transition makes the posterior -inf with ``finite`` False;
    likelihood clipping is counted but never kills the posterior.
    """
    states = list(states)
    actions = list(actions)
    if len(states) != len(actions) + 1:
        raise ValueError("need one more state than actions")
    policy = np.asarray(policy, dtype=float)

    lp = float(theta_log_prior)
    finite = True
    clipped_steps = 0

    p0 = float(cmdp.initial_dist[states[0]])
    if p0 > 0.0:
        lp += math.log(p0)
    else:
        finite = False

    for t, a in enumerate(actions):
        s, s_next = states[t], states[t + 1]
        lik, was_clipped = optimality_likelihood(family, float(cmdp.rewards[s, a]))
        clipped_steps += int(was_clipped)
        lp += math.log(lik)

        pi = float(policy[s, a])
        if pi > 0.0:
            lp += math.log(pi)
        else:
            finite = False

        pt = float(cmdp.transitions[s, a, s_next])
        if pt > 0.0:
            lp += math.log(pt)
        else:
            finite = False

    return PosteriorResult(lp if finite else -math.inf, finite, clipped_steps)
