"""Honest strategies and schedulers."""

import pytest

from bitmlx import corpus_path
from bitmlx.errors import InvalidBaseStrategy, Stuck
from bitmlx.isem import COMPENSATED, ASSIGNED, Act
from bitmlx.strategy import (
    CONSENT,
    ChoicePolicy,
    RandomAdversary,
    ScriptedAdversary,
    XStrategy,
    allowed_actions,
    check_x_strategy_output,
    load_script,
    partial_move_bob,
)
from bitmlx.surface import parse_file
from bitmlx.syntax import Label
from bitmlx.xsem import Universe, XAdvertise, XCommit, XInit, XMove, XRevealSecret, XRun, XSign

from helpers import K0, drive, engine, swap_init

SWAP = parse_file(corpus_path("swap"))


def x_initialized(adv, lengths=()):
    u = Universe([adv])
    run = XRun(u).extend(XAdvertise("k0"))
    for a in adv.participants:
        own = dict(lengths)
        run = run.extend(XCommit(a, "k0", tuple((s, own.get(s, 0)) for s in adv.pre.secrets_of(a))))
    for a in adv.participants:
        run = run.extend(XSign(a, "k0"))
    return run.extend(XInit("k0"))


class TestChoicePolicy:
    def test_defaults(self):
        assert ChoicePolicy.parse("left").intent(K0, {}) == "left"
        assert ChoicePolicy.parse("skip").intent(K0, {}) == "skip"

    def test_override_and_lengths(self):
        p = ChoicePolicy.parse("skip; [k0,L]=left; x=1")
        assert p.intent(Label("k0", "L"), {}) == "left"
        assert p.intent(K0, {}) == "skip"
        assert p.length_of("x") == 1 and p.length_of("y") == 0

    def test_conditional_rule(self):
        p = ChoicePolicy.parse("skip; [k0] if |y| = 1 then left")
        assert p.intent(K0, {"y": 1}) == "left"
        assert p.intent(K0, {"y": 0}) == "skip"
        assert p.intent(K0, {}) == "skip"  # unbound secrets make the rule inapplicable

    @pytest.mark.parametrize("text", ["sideways", "[k0]=maybe", "x=one"])
    def test_rejects(self, text):
        with pytest.raises(ValueError):
            ChoicePolicy.parse(text)


class TestXStrategy:
    def test_pay_when_left(self):
        run = x_initialized(SWAP)
        xs = XStrategy(run.universe, "A", ChoicePolicy.parse("left"))
        assert xs(run.last) == {XMove("dwithdraw", K0)}

    def test_skip(self):
        run = x_initialized(SWAP)
        xs = XStrategy(run.universe, "A", ChoicePolicy.parse("skip"))
        assert xs(run.last) == {XMove("skip", K0)}

    def test_reveals_own_secret_first(self):
        """The coin toss needs A's secret; A reveals it before the move can happen."""
        adv = parse_file(corpus_path("donate_agreed"))
        run = x_initialized(adv, {"x": 1})
        xs = XStrategy(run.universe, "A", ChoicePolicy.parse("left; x=1"))
        assert xs(run.last) == {XRevealSecret("A", "x")}
        run = run.extend(XRevealSecret("A", "x"))
        assert xs(run.last) == {XMove("reveal", K0)}

    def test_output_is_valid(self):
        run = x_initialized(SWAP)
        xs = XStrategy(run.universe, "A")
        check_x_strategy_output(xs, run.last, xs(run.last))

    def test_invalid_outputs(self):
        run = x_initialized(SWAP)
        xs = XStrategy(run.universe, "A")
        with pytest.raises(InvalidBaseStrategy, match="not enabled"):
            check_x_strategy_output(xs, run.last, {XMove("cwithdraw", K0)})
        with pytest.raises(InvalidBaseStrategy, match="two moves"):
            check_x_strategy_output(xs, run.last, {XMove("dwithdraw", K0), XMove("skip", K0)})


class TestCompiledStrategy:
    def test_reveals_step_secret(self):
        """Right after init the honest user commits to Pay by revealing its step secret."""
        eng = engine()
        (conf, xconf, _), v = drive(eng, swap_init())
        assert v is None and conf.t < 10 + 20
        out, _ = eng.options(conf, xconf)
        assert out == {Act("revealStep", K0.child("L"), who="A")}

    def test_slashes_lagging_chain(self):
        """B moved on BTC only; once DGC times out A slashes it with B's step secret."""
        eng = engine()
        acts = swap_init() + [
            Act("revealStep", K0.child("L"), who="B"),
            Act("ileft", K0, "BTC"),
            Act("dwithdraw", K0, "BTC"),
        ]
        state, v = drive(eng, acts)
        assert v is None
        conf, xconf, _ = state
        t = conf.record("DGC", K0).time
        state, v = drive(eng, acts + [Act("delay", arg=t - conf.t), Act("iright", K0, "DGC")])
        assert v is None
        out, _ = eng.options(state[0], state[1])
        assert Act("slash", K0, "DGC", "B") in out

    def test_waits_for_next_deadline(self):
        """With nothing to do, the honest user waits exactly until the nearest deadline."""
        eng = engine(policy="skip")
        (conf, xconf, hist), _ = drive(eng, swap_init())
        deadline = conf.record("BTC", K0).time
        state, v = eng.move((conf, xconf, hist), Act("delay", arg=deadline - 7 - conf.t))
        out, _ = eng.options(state[0], state[1])
        assert out == {Act("delay", arg=7)}


class TestAdversaries:
    def test_conformance(self):
        """Consent actions only appear when the honest user offers them."""
        eng = engine()
        (conf, xconf, _), _ = drive(eng, swap_init())
        out, allowed = eng.options(conf, xconf)
        for a in allowed:
            if a.kind in CONSENT:
                assert a in out
        assert set(out) <= set(allowed)

    def test_dishonest_commit_lengths(self):
        eng = engine("donate_agreed", policy="left; x=1")
        state, _ = drive(eng, [Act("advertise", K0)])
        allowed = allowed_actions(eng.sem, state[0], "A", frozenset())
        commits = {a.arg for a in allowed if a.kind == "commit" and a.who == "B"}
        assert commits == {(("y", 0),), (("y", 1),), (("y", None),)}

    def test_random_is_reproducible(self):
        eng = engine()
        a = eng.run(RandomAdversary(7))
        b = eng.run(RandomAdversary(7))
        assert a.actions == b.actions

    def test_partial_move_bob(self):
        """B reveals its step secret at the deadline and moves on BTC only; A is compensated on DGC.

        A must not want Pay itself: an honest left intent reveals A's own step
        secret early and A then finishes the move on every chain.
        """
        eng = engine(policy="skip")
        res = eng.run(ScriptedAdversary(partial_move_bob(t_reveal=30)))
        assert res.ok
        kinds = {(r.chain, r.status.kind, r.status.who) for r in res.final.records}
        assert ("DGC", COMPENSATED, "B") in kinds
        assert all(k == ASSIGNED for c, k, _ in kinds if c == "BTC")
        played = [a.kind for a in res.actions]
        assert played.index("dwithdraw") < played.index("iright") < played.index("slash")

    def test_partial_move_needs_reluctant_victim(self):
        """When A wants Pay, A replicates B's move on DGC and nobody is compensated."""
        res = engine(policy="left").run(ScriptedAdversary(partial_move_bob(t_reveal=30)))
        assert res.ok
        assert all(r.status.kind == ASSIGNED for r in res.final.records)

    def test_script_from_json(self):
        script = load_script([{"kind": "commit", "label": "[k0]", "who": "B"}, {"kind": "ileft", "label": "[k0]", "chain": "BTC", "after": 5}])
        assert script[0].action == Act("commit", K0, who="B")
        assert script[1].after == 5

    def test_script_stuck(self):
        eng = engine()
        adv = ScriptedAdversary((load_script([{"kind": "slash", "label": "[k0]", "chain": "BTC", "who": "B"}])[0],))
        with pytest.raises(Stuck):
            adv.choose([], frozenset(), eng.initial()[0])
