"""Exact finite-horizon solving over the reachable belief tree.

The attacker maximizes expected cumulative reward by depth-limited
expectimax with belief memoization. At every belief the attacker may also
stop (walk away), worth zero: an action is taken only when its expected
value is non-negative. Ties between equally valued actions break toward
the lowest action index.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import CapacityError, InconsistentObservation, ModelError
from .types import Belief, Pomdp, Support, support_key


def _obs_prob(pomdp: Pomdp, s2: int, a: int, o: int) -> float:
    for label, p in pomdp.observation_probs[(s2, a)]:
        if label == o:
            return p
    return 0.0


def _update_sparse(pomdp: Pomdp, support: Support, a: int, o: int) -> tuple[Support, float]:
    """Unnormalized Bayes step; returns (normalized belief, total mass)."""
    new: dict[int, float] = {}
    for s in sorted(support):
        bs = support[s]
        for s2, p in pomdp.transitions[(s, a)]:
            w = bs * p
            if w <= 0.0:
                continue
            z = _obs_prob(pomdp, s2, a, o)
            if z <= 0.0:
                continue
            new[s2] = new.get(s2, 0.0) + w * z
    mass = sum(new[s] for s in sorted(new))
    if mass <= 0.0:
        return {}, 0.0
    return {s: w / mass for s, w in sorted(new.items())}, mass


def belief_update(pomdp: Pomdp, belief: Belief, a: int, o: int) -> Belief:
    """b'(s') = w * Z(o|s',a) * sum_s T(s,a,s') b(s); raises
    InconsistentObservation when the observation has zero mass."""
    if not 0 <= a < len(pomdp.actions):
        raise ModelError(f"action index {a} out of range")
    if not 0 <= o < len(pomdp.observations):
        raise ModelError(f"observation index {o} out of range")
    support = {i: p for i, p in enumerate(belief.probs) if p > 0.0}
    updated, mass = _update_sparse(pomdp, support, a, o)
    if mass <= 0.0:
        raise InconsistentObservation(
            f"observation {pomdp.observations[o]} impossible after action "
            f"{pomdp.actions[a].id}"
        )
    vec = [0.0] * len(pomdp.states)
    for s, p in updated.items():
        vec[s] = p
    return Belief(tuple(vec))


def _successors(pomdp: Pomdp, support: Support, a: int) -> list[tuple[int, float, Support]]:
    """Per-observation (obs index, mass, normalized child belief)."""
    acc: dict[int, dict[int, float]] = {}
    for s in sorted(support):
        bs = support[s]
        for s2, p in pomdp.transitions[(s, a)]:
            w = bs * p
            if w <= 0.0:
                continue
            for o, z in pomdp.observation_probs[(s2, a)]:
                if z <= 0.0:
                    continue
                bucket = acc.setdefault(o, {})
                bucket[s2] = bucket.get(s2, 0.0) + w * z
    out = []
    for o in sorted(acc):
        dist = acc[o]
        mass = sum(dist[s] for s in sorted(dist))
        if mass <= 0.0:
            continue
        child = {s: w / mass for s, w in sorted(dist.items())}
        out.append((o, mass, child))
    return out


@dataclass
class Policy:
    """Action choice per (belief, steps-left); None means stop."""

    actions: dict[tuple, int | None]
    values: dict[tuple, float]
    horizon: int

    def action_for(self, support: Support, steps_left: int) -> int | None:
        key = (support_key(support), steps_left)
        if key not in self.actions:
            raise ModelError("policy is not defined at this belief")
        return self.actions[key]


@dataclass
class SolveResult:
    policy: Policy
    value: float
    reachable_beliefs: int
    horizon: int
    sweeps: int = 1


def value_iteration(
    pomdp: Pomdp,
    epsilon: float | None = None,
    horizon: int | None = None,
    belief_cap: int = 500_000,
) -> SolveResult:
    """Solve for the attacker-optimal policy.

    Finite horizon (discount 1 or no epsilon): exact expectimax to the
    model's horizon. With discount < 1 and an epsilon, the horizon deepens
    until V(b0) moves less than epsilon between sweeps.
    """
    expected: dict[tuple[int, int], float] = {
        key: pomdp.expected_reward(*key) for key in pomdp.transitions
    }
    values: dict[tuple, float] = {}
    chosen: dict[tuple, int | None] = {}

    def solve(support: Support, depth: int) -> float:
        key = (support_key(support), depth)
        if key in values:
            return values[key]
        if len(values) >= belief_cap:
            raise CapacityError("reachable belief tree above cap", len(values))
        if depth == 0:
            values[key] = 0.0
            chosen[key] = None
            return 0.0
        offered = sorted(
            {a for s in support for a in pomdp.applicable.get(s, ())}
        )
        best_q: float | None = None
        best_a: int | None = None
        for a in offered:
            q = sum(support[s] * expected[(s, a)] for s in sorted(support))
            for _, mass, child in _successors(pomdp, support, a):
                q += pomdp.discount * mass * solve(child, depth - 1)
            if best_q is None or q > best_q:
                best_q = q
                best_a = a
        if best_q is None or best_q < 0.0:
            values[key] = 0.0
            chosen[key] = None
        else:
            values[key] = best_q
            chosen[key] = best_a
        return values[key]

    b0 = pomdp.b0_support()
    if epsilon is not None and pomdp.discount < 1.0:
        previous = 0.0
        depth = 0
        while True:
            depth += 1
            value = solve(b0, depth)
            if depth > 1 and abs(value - previous) < epsilon:
                break
            if depth >= 10_000:
                break
            previous = value
        used = depth
    else:
        used = horizon if horizon is not None else pomdp.horizon
        value = solve(b0, used)

    policy = Policy(actions=chosen, values=values, horizon=used)
    return SolveResult(
        policy=policy,
        value=value,
        reachable_beliefs=len(values),
        horizon=used,
        sweeps=used,
    )


def milestone_probabilities(
    pomdp: Pomdp, policy: Policy, horizon: int | None = None
) -> dict[int, float]:
    """Exact probability, per TTP step, that the step's milestone flag is
    ever reached when the attacker follows `policy` from the initial belief."""
    steps = sorted(pomdp.milestones)
    flags = [pomdp.milestones[s] for s in steps]
    flag_in_state = [
        tuple(flag in state.flags for flag in flags) for state in pomdp.states
    ]
    memo: dict[tuple, tuple[float, ...]] = {}

    def walk(support: Support, depth: int) -> tuple[float, ...]:
        key = (support_key(support), depth)
        if key in memo:
            return memo[key]
        zeros = tuple(0.0 for _ in flags)
        if depth == 0:
            memo[key] = zeros
            return zeros
        action_key = (support_key(support), depth)
        a = policy.actions.get(action_key)
        if a is None:
            memo[key] = zeros
            return zeros
        inflow = [0.0] * len(flags)
        for s in sorted(support):
            bs = support[s]
            here = flag_in_state[s]
            for s2, p in pomdp.transitions[(s, a)]:
                there = flag_in_state[s2]
                for i in range(len(flags)):
                    if there[i] and not here[i]:
                        inflow[i] += bs * p
        total = list(inflow)
        for _, mass, child in _successors(pomdp, support, a):
            sub = walk(child, depth - 1)
            for i in range(len(flags)):
                total[i] += mass * sub[i]
        result = tuple(min(1.0, max(0.0, v)) for v in total)
        memo[key] = result
        return result

    depth = horizon if horizon is not None else policy.horizon
    probs = walk(pomdp.b0_support(), depth)
    return {step: probs[i] for i, step in enumerate(steps)}
