"""Pipeline orchestration: validated inputs -> per-flow models -> solved
policies -> simulated/exact probabilities -> campaign result.

Two probability series are produced per run. The "assumed" series combines
raw threat-intel base rates straight through the flow DAG; the "validated"
series runs the attacker emulation (solver and/or Monte Carlo) first and
combines the resulting milestone probabilities.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from . import __version__
from .attack_flow import AttackFlow
from .attack_tree import success_probability
from .errors import CapacityError, ModelError
from .index import CampaignResult, FlowResult, campaign_cri, flow_cri
from .ingest import ValidatedInputs
from .netmodel import NetworkModel
from .pomdp import (
    BuildConfig,
    build_pomdp,
    complexity_report,
    milestone_probabilities,
    value_iteration,
)
from .simulate import SimulationSummary, estimate_expected_reward
from .threat_intel import TiTable

logger = logging.getLogger(__name__)

MODES = ("exact", "simulate", "both")


@dataclass
class EngineConfig:
    mode: str = "exact"
    episodes: int = 10_000
    seed: int = 0
    horizon: int | None = None
    naive_check: bool = False
    max_path_len: int = 12
    campaign_id: str = "campaign"
    provenance: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ModelError(f"unknown mode {self.mode!r}")
        if self.mode in ("simulate", "both") and self.episodes < 1:
            raise ModelError("episodes must be >= 1 when simulating")


@dataclass
class FlowReport:
    flow_id: str
    result: FlowResult
    p_n_exact: dict[int, float] | None
    p_n_simulated: dict[int, float] | None
    p_n_intervals: dict[int, tuple[float, float]] | None
    solver_value: float | None
    simulation: SimulationSummary | None
    normalized_reward: float | None
    naive_check: str | None = None


@dataclass
class RunOutput:
    campaign: CampaignResult
    assumed: CampaignResult
    flow_reports: list[FlowReport]
    complexity: dict


def assumed_p_n(flow: AttackFlow, net: NetworkModel, ti: TiTable) -> dict[int, float]:
    """Base-rate probability per TTP node, before any emulation: the best
    p_success_base across asset classes present in the network (attack-tree
    nodes combine leaf base rates through their gates)."""
    classes = sorted({n.asset_class for n in net.nodes.values()})
    out: dict[int, float] = {}
    for node in flow.nodes:
        base = 0.0
        found = False
        for asset_class in classes:
            rec = ti.lookup(node.technique_id, asset_class)
            if rec is not None:
                base = max(base, rec.p_success_base)
                found = True
        if not found:
            out[node.step] = 0.0
            continue
        tree = flow.trees.get(node.attack_tree_id) if node.attack_tree_id else None
        if tree is None:
            out[node.step] = base
        else:
            out[node.step] = success_probability(
                tree,
                lambda leaf: leaf.param("p_success") if leaf.param("p_success") is not None else base,
            )
    return out


def _normalized_reward(pomdp, value: float) -> float | None:
    rewards = list(pomdp.branch_rewards.values())
    if not rewards:
        return None
    lo = pomdp.horizon * min(min(rewards), 0.0)
    hi = pomdp.horizon * max(max(rewards), 0.0)
    if hi <= lo:
        return None
    return min(1.0, max(0.0, (value - lo) / (hi - lo)))


def _naive_check(flow, net, ti, build_cfg, reduced, reduced_value) -> str:
    naive_cfg = BuildConfig(
        mode="naive",
        horizon=build_cfg.horizon,
        discount=build_cfg.discount,
        max_path_len=build_cfg.max_path_len,
    )
    try:
        naive = build_pomdp(flow, net, ti, naive_cfg)
    except CapacityError as exc:
        return f"skipped: {exc}"
    reduced_set = set(reduced.states)
    naive_reachable = _reachable_under(naive)
    if naive_reachable != reduced_set:
        raise ModelError(
            f"flow {flow.id}: naive reachable set ({len(naive_reachable)}) differs "
            f"from reduced state set ({len(reduced_set)})"
        )
    naive_value = value_iteration(naive).value
    if abs(naive_value - reduced_value) > 1e-9:
        raise ModelError(
            f"flow {flow.id}: naive value {naive_value} != reduced {reduced_value}"
        )
    return "ok"


def _reachable_under(pomdp) -> set:
    seen = {i for i, p in enumerate(pomdp.initial_belief) if p > 0.0}
    frontier = list(seen)
    while frontier:
        s = frontier.pop()
        for a in pomdp.applicable.get(s, ()):
            for s2, p in pomdp.transitions[(s, a)]:
                if p > 0.0 and s2 not in seen:
                    seen.add(s2)
                    frontier.append(s2)
    return {pomdp.states[i] for i in seen}


def run_campaign(inputs: ValidatedInputs, cfg: EngineConfig | None = None) -> RunOutput:
    """Run the full pipeline over every flow and aggregate the campaign."""
    cfg = cfg or EngineConfig()
    net = inputs.network
    build_cfg = BuildConfig(mode="reduced", horizon=cfg.horizon, max_path_len=cfg.max_path_len)

    flow_reports: list[FlowReport] = []
    assumed_results: list[FlowResult] = []
    for flow in inputs.flows:
        logger.info("building model for flow %s", flow.id)
        pomdp = build_pomdp(flow, net, inputs.ti, build_cfg)
        solved = value_iteration(pomdp)
        logger.info(
            "flow %s: %d states, %d actions, %d reachable beliefs, V*=%.6f",
            flow.id, len(pomdp.states), len(pomdp.actions),
            solved.reachable_beliefs, solved.value,
        )

        p_exact = None
        p_sim = None
        intervals = None
        summary = None
        if cfg.mode in ("exact", "both"):
            p_exact = milestone_probabilities(pomdp, solved.policy)
        if cfg.mode in ("simulate", "both"):
            summary = estimate_expected_reward(pomdp, solved.policy, cfg.episodes, cfg.seed)
            p_sim = summary.p_n_estimates
            intervals = summary.p_n_intervals

        if p_exact is not None:
            p_used, method = p_exact, "exact"
            reward = solved.value
        else:
            assert summary is not None
            p_used, method = p_sim, "simulated"
            reward = summary.mean_reward

        naive_note = None
        if cfg.naive_check:
            naive_note = _naive_check(flow, net, inputs.ti, build_cfg, pomdp, solved.value)

        result = FlowResult(
            flow_id=flow.id,
            p_n=p_used,
            q_flow=flow_cri(flow, p_used),
            expected_attacker_reward=reward,
            method=method,
        )
        flow_reports.append(
            FlowReport(
                flow_id=flow.id,
                result=result,
                p_n_exact=p_exact,
                p_n_simulated=p_sim,
                p_n_intervals=intervals,
                solver_value=solved.value,
                simulation=summary,
                normalized_reward=_normalized_reward(pomdp, reward),
                naive_check=naive_note,
            )
        )

        base = assumed_p_n(flow, net, inputs.ti)
        assumed_results.append(
            FlowResult(
                flow_id=flow.id,
                p_n=base,
                q_flow=flow_cri(flow, base),
                expected_attacker_reward=0.0,
                method="exact",
            )
        )

    provenance = dict(cfg.provenance)
    provenance.update(
        {
            "engine_version": __version__,
            "mode": cfg.mode,
            "seed": str(cfg.seed),
            "episodes": str(cfg.episodes if cfg.mode in ("simulate", "both") else 0),
            "horizon": str(cfg.horizon if cfg.horizon is not None else "auto"),
            "inputs_digest": inputs.digest(),
        }
    )
    campaign = campaign_cri(
        [fr.result for fr in flow_reports], cfg.campaign_id, provenance
    )
    assumed = campaign_cri(assumed_results, cfg.campaign_id, dict(provenance, series="assumed"))
    complexity = complexity_report(net, inputs.flows, inputs.ti, build_cfg).as_dict()
    return RunOutput(
        campaign=campaign,
        assumed=assumed,
        flow_reports=flow_reports,
        complexity=complexity,
    )
