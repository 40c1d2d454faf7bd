"""Scenario driver: honest user against an adversarial scheduler.

A run alternates honest outputs and scheduler choices, mirrors every step
into a coherent BitMLx run, and checks all invariants at every prefix.
When the scheduler stops (or the step budget runs out) the run is
liquidated with honest actions only and the payouts of both levels are
compared.  All per-state work is memoized, so campaigns over many seeds
share the cost of common prefixes.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .analysis.coherence import CoherentMirror, check_coherence_config
from .analysis.liquidation import liquidate, x_liquidate
from .analysis.payout import SecurityVerdict, payout_sheet_is, payout_sheet_x, security
from .analysis.properties import (
    Violation,
    money_preservation,
    money_preservation_x,
    no_honest_compensation,
    record_move,
    round_based,
    timeout_consistency,
)
from .errors import BitmlxError, IncoherentInput, Stuck
from .isem import Act, ISConfig, ISSemantics
from .strategy import ChoicePolicy, CompiledStrategy, XStrategy, allowed_actions, campaign_adversary
from .surface import parse_advertisement, pretty_print
from .syntax import Advertisement
from .xsem import Universe, XConfig

DEFAULT_BUDGET = 200


@dataclass(frozen=True)
class Scenario:
    advertisement: Advertisement
    honest: str
    policy: ChoicePolicy = field(default_factory=ChoicePolicy)
    policy_text: str = "left"
    delta: int = 10
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.budget <= 0:
            raise ValueError("the step budget must be positive")
        if self.honest not in self.advertisement.participants:
            raise ValueError(f"{self.honest} is not a participant")

    def header(self) -> dict:
        return {
            "type": "scenario",
            "source": pretty_print(self.advertisement),
            "honest": self.honest,
            "policy": self.policy_text,
            "delta": self.delta,
            "t0": self.advertisement.pre.t0,
            "budget": self.budget,
        }

    @classmethod
    def from_header(cls, doc: dict) -> "Scenario":
        adv = parse_advertisement(doc["source"])
        return cls(adv, doc["honest"], ChoicePolicy.parse(doc["policy"]), doc["policy"], doc["delta"], doc["budget"])


@dataclass(frozen=True)
class LeafResult:
    """Outcome of liquidating a run end: the extension, its first violation, and the security check."""

    actions: tuple
    violation: Violation | None
    security: SecurityVerdict | None
    final: ISConfig | None
    xfinal: XConfig | None


@dataclass
class RunResult:
    actions: list
    liquidation: tuple
    violation: Violation | None
    security: SecurityVerdict | None
    final: ISConfig | None
    xfinal: XConfig | None
    xactions: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.violation is None and self.security is not None and self.security.ok

    def verdicts(self) -> dict:
        v = self.violation
        return {
            "ok": self.ok,
            "violation": None if v is None else v.to_json(),
            "security": None if self.security is None else self.security.to_json(),
            "steps": len(self.actions),
            "liquidation_steps": len(self.liquidation),
        }


class Engine:
    """Semantics, strategies, and memo tables for one scenario."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        adv = scenario.advertisement
        self.universe = Universe([adv])
        self.sem = ISSemantics(self.universe, scenario.delta, honest=frozenset({scenario.honest}))
        self.xs = XStrategy(self.universe, scenario.honest, scenario.policy)
        self.strategy = CompiledStrategy(self.xs, self.sem)
        self.mirror = CoherentMirror(self.sem, scenario.honest)
        self.honest = scenario.honest
        self._state_checks: dict = {}
        self._allowed: dict = {}
        self._leaves: dict = {}
        self._moves: dict = {}

    def initial(self) -> tuple:
        return self.sem.initial(), XConfig(), frozenset()

    # --- per-state work ------------------------------------------------------------

    def check_state(self, conf: ISConfig, xconf: XConfig) -> Violation | None:
        key = (conf, xconf)
        if key in self._state_checks:
            return self._state_checks[key]
        u, d, a = self.universe, self.scenario.delta, self.honest
        v = (
            money_preservation(conf, u)
            or timeout_consistency(conf, u, d)
            or round_based(conf, u, d, a)
            or no_honest_compensation(conf, a)
            or money_preservation_x(xconf, u)
        )
        if v is None:
            c = check_coherence_config(u, xconf, conf, a)
            if not c.ok:
                v = Violation("coherence", c.clause, c.detail)
        self._state_checks[key] = v
        return v

    def options(self, conf: ISConfig, xconf: XConfig) -> tuple[frozenset, list]:
        key = (conf, xconf)
        hit = self._allowed.get(key)
        if hit is None:
            out = self.strategy(conf, xconf)
            hit = (out, allowed_actions(self.sem, conf, self.honest, out))
            self._allowed[key] = hit
        return hit

    def move(self, state: tuple, a: Act) -> tuple[tuple, Violation | None]:
        key = (state, a)
        hit = self._moves.get(key)
        if hit is None:
            conf, xconf, hist = state
            nxt = self.sem.step(conf, a)
            try:
                xnxt, _ = self.mirror.advance(xconf, conf, a, nxt)
            except IncoherentInput as e:
                hit = ((nxt, xconf, hist), Violation("coherence", "mirror", str(e)))
            else:
                hist2, v = record_move(hist, a)
                hit = ((nxt, xnxt, hist2), v or self.check_state(nxt, xnxt))
            self._moves[key] = hit
        return hit

    def leaf(self, state: tuple) -> LeafResult:
        hit = self._leaves.get(state)
        if hit is None:
            hit = self._leaf(state)
            self._leaves[state] = hit
        return hit

    def _leaf(self, state: tuple) -> LeafResult:
        conf, xconf, hist = state
        try:
            configs, xconfs, acts = liquidate(self.sem, self.strategy, self.mirror, conf, xconf)
        except BitmlxError as e:
            return LeafResult((), Violation("liquidity", type(e).__name__, str(e)), None, conf, xconf)
        for i, (c, x, a) in enumerate(zip(configs, xconfs, acts)):
            hist, v = record_move(hist, a)
            v = v or self.check_state(c, x)
            if v is not None:
                return LeafResult(tuple(acts), Violation(v.invariant, v.clause, v.detail, i), None, c, x)
        final = configs[-1] if configs else conf
        xfinal = xconfs[-1] if xconfs else xconf
        if not payout_sheet_is(self.universe, final).balanced():
            return LeafResult(tuple(acts), Violation("money_preservation", "payout", "sheet unbalanced"), None, final, xfinal)
        xdone, _ = x_liquidate(self.xs, xfinal)
        return LeafResult(tuple(acts), None, security(self.universe, final, xdone, self.honest), final, xdone)

    # --- drivers ------------------------------------------------------------------

    def run(self, adversary, record: bool = True) -> RunResult:
        state = self.initial()
        v = self.check_state(state[0], state[1])
        actions: list = []
        for i in range(self.scenario.budget):
            if v is not None:
                break
            conf, xconf, _ = state
            out, allowed = self.options(conf, xconf)
            if not allowed:
                break
            try:
                a = adversary.choose(allowed, out, conf)
            except Stuck:
                break
            state, v = self.move(state, a)
            actions.append(a)
            if v is not None:
                v = Violation(v.invariant, v.clause, v.detail, i + 1)
        if v is not None:
            return RunResult(actions, (), v, None, state[0], state[1])
        leaf = self.leaf(state)
        lv = leaf.violation
        if lv is not None:
            lv = Violation(lv.invariant, lv.clause, lv.detail, len(actions) + 1 + (lv.index or 0))
        return RunResult(actions, leaf.actions, lv, leaf.security, leaf.final, leaf.xfinal)

    def replay(self, actions: Iterable[Act]) -> RunResult:
        return self.run(_Replay(list(actions)))


class _Replay:
    """Scheduler that plays back a recorded action list."""

    def __init__(self, actions: list):
        self.actions = actions
        self.i = 0

    def choose(self, allowed, honest_out, conf):
        if self.i >= len(self.actions):
            raise Stuck("end of trace")
        a = self.actions[self.i]
        self.i += 1
        if a not in allowed:
            raise IncoherentInput(f"recorded action {a} is not allowed here")
        return a


@dataclass
class CampaignReport:
    runs: int = 0
    failures: list = field(default_factory=list)  # (seed, RunResult)
    states: int = 0

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {
            "runs": self.runs,
            "failures": [{"seed": s, **r.verdicts()} for s, r in self.failures[:20]],
            "failure_count": len(self.failures),
            "states": self.states,
            "ok": self.ok,
        }


def campaign(engine: Engine, seeds: Iterable[int]) -> CampaignReport:
    report = CampaignReport()
    for seed in seeds:
        res = engine.run(campaign_adversary(seed))
        report.runs += 1
        if not res.ok:
            report.failures.append((seed, res))
    report.states = len(engine._state_checks)
    return report


@dataclass
class ExhaustiveReport:
    states: int = 0
    leaves: int = 0
    violation: Violation | None = None
    witness: tuple = ()
    insecure: SecurityVerdict | None = None

    @property
    def ok(self) -> bool:
        return self.violation is None and self.insecure is None

    def to_json(self) -> dict:
        return {
            "states": self.states,
            "leaves": self.leaves,
            "ok": self.ok,
            "violation": None if self.violation is None else self.violation.to_json(),
            "witness": [a.to_json() for a in self.witness],
            "security": None if self.insecure is None else self.insecure.to_json(),
        }


def exhaustive(engine: Engine, rounds: int = 3) -> ExhaustiveReport:
    """Every conforming schedule while the clock stays within ``rounds`` rounds of the start time."""
    adv = engine.scenario.advertisement
    horizon = adv.pre.t0 + 2 * engine.scenario.delta * rounds
    report = ExhaustiveReport()
    start = engine.initial()
    seen = {start}
    v0 = engine.check_state(start[0], start[1])
    if v0 is not None:
        report.violation = v0
        return report
    stack = [(start, ())]
    while stack:
        state, path = stack.pop()
        report.states += 1
        conf, xconf, _ = state
        _, allowed = engine.options(conf, xconf)
        moves = [a for a in allowed if not (a.kind == "delay" and conf.t + a.arg > horizon)]
        if not moves:
            report.leaves += 1
            leaf = engine.leaf(state)
            if leaf.violation is not None or not leaf.security.ok:
                report.violation = leaf.violation
                report.insecure = None if leaf.violation else leaf.security
                report.witness = path
                return report
            continue
        for a in moves:
            nxt, v = engine.move(state, a)
            if v is not None:
                report.violation = v
                report.witness = path + (a,)
                return report
            if nxt not in seen:
                seen.add(nxt)
                stack.append((nxt, path + (a,)))
    return report


# --- traces -------------------------------------------------------------------------


def write_trace(path: str | Path, scenario: Scenario, result: RunResult, adversary: str) -> None:
    with open(path, "w") as fh:
        head = scenario.header()
        head["adversary"] = adversary
        fh.write(json.dumps(head) + "\n")
        for i, a in enumerate(result.actions):
            fh.write(json.dumps({"type": "action", "step": i, "phase": "run", "action": a.to_json()}) + "\n")
        for i, a in enumerate(result.liquidation):
            fh.write(json.dumps({"type": "action", "step": i, "phase": "liquidation", "action": a.to_json()}) + "\n")
        fh.write(json.dumps({"type": "verdicts", **result.verdicts()}) + "\n")


def read_trace(path: str | Path) -> tuple[Scenario, list, dict | None]:
    scenario, actions, verdicts = None, [], None
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            if doc["type"] == "scenario":
                scenario = Scenario.from_header(doc)
            elif doc["type"] == "action" and doc["phase"] == "run":
                actions.append(Act.from_json(doc["action"]))
            elif doc["type"] == "verdicts":
                verdicts = doc
    if scenario is None:
        raise ValueError(f"{path}: no scenario header")
    return scenario, actions, verdicts
