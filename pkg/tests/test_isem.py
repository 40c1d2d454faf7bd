"""Timed intermediate semantics."""

import pytest
from hypothesis import given, settings, strategies as st

from bitmlx import corpus_path
from bitmlx.analysis.payout import payout_sheet_is
from bitmlx.errors import NonPositiveDelay, NotEnabled
from bitmlx.isem import (
    ASSIGNED,
    CHOICE,
    COMPENSATED,
    LEFT,
    RIGHT,
    SLASHED,
    STIP_CHOICE,
    STIP_REFUNDED,
    Act,
    ISConfig,
    ISRun,
    ISSemantics,
    chain_money,
    expected_time,
    round_depth,
)
from bitmlx.surface import parse_file
from bitmlx.syntax import Label, terminal
from bitmlx.xsem import Universe, refund_label

SWAP = parse_file(corpus_path("swap"))
K0 = Label("k0")
DELTA = 10


def published(adv=SWAP, delta=DELTA) -> ISRun:
    """Advertise, commit, authorize and publish on every chain."""
    sem = ISSemantics(Universe([adv]), delta)
    run = ISRun.start(sem).extend(Act("advertise", K0))
    for a in adv.participants:
        run = run.extend(Act("commit", K0, who=a, arg=tuple((s, 0) for s in adv.pre.secrets_of(a))))
    for c in adv.chains:
        for a in adv.participants:
            run = run.extend(Act("authInit", K0, c, a))
        run = run.extend(Act("publish", K0, c))
    return run


def initialized(adv=SWAP) -> ISRun:
    run = published(adv)
    for a in adv.participants:
        run = run.extend(Act("revealInit", K0, who=a))
    run = run.extend(Act("revealStep", K0, who=adv.participants[0]))
    for c in adv.chains:
        run = run.extend(Act("init", K0, c))
    return run


def status(conf, chain, label, stip=None):
    r = conf.record(chain, label, stip)
    return None if r is None else r.status


class TestStipulation:
    def test_publish_creates_stip_choice(self):
        run = published()
        r = run.last.record("BTC", K0)
        assert r.status.kind == STIP_CHOICE and r.balance == 1 and r.time == SWAP.pre.t0

    def test_init_enabled_on_both_chains(self):
        """All init secrets plus one stipulation step secret enable init everywhere, before t0."""
        run = published()
        for a in "AB":
            run = run.extend(Act("revealInit", K0, who=a))
        run = run.extend(Act("revealStep", K0, who="A"))
        assert run.last.t < SWAP.pre.t0
        en = run.sem.enabled(run.last)
        assert {Act("init", K0, "BTC"), Act("init", K0, "DGC")} <= en

    def test_init_needs_every_init_secret(self):
        run = published().extend(Act("revealInit", K0, who="A")).extend(Act("revealStep", K0, who="A"))
        assert Act("init", K0, "BTC") not in run.sem.enabled(run.last)

    def test_init_sets_round_one_deadline(self):
        run = initialized()
        r = run.last.record("BTC", K0)
        assert r.status.kind == CHOICE and r.time == SWAP.pre.t0 + 2 * DELTA

    def test_timeout_then_abort(self):
        """Without init, the stipulation times out and refunds the deposits."""
        run = published()
        run = run.extend(Act("delay", arg=SWAP.pre.t0))
        run = run.extend(Act("sright", K0, "BTC")).extend(Act("delay", arg=DELTA)).extend(Act("abort", K0, "BTC"))
        refunds = {(r.label, r.balance, r.status.who) for r in run.last.records if r.status.kind == STIP_REFUNDED}
        assert refunds == {(refund_label("k0", 1), 1, "A"), (refund_label("k0", 2), 0, "B")}

    def test_double_spend_blocks_publish(self):
        sem = ISSemantics(Universe([SWAP]), DELTA)
        r = ISRun.start(sem).extend(Act("advertise", K0))
        r = r.extend(Act("doubleSpend", K0, "BTC", "A"))
        for a in "AB":
            r = r.extend(Act("commit", K0, who=a, arg=()))
        for a in "AB":
            r = r.extend(Act("authInit", K0, "BTC", a))
        assert Act("publish", K0, "BTC") not in sem.enabled(r.last)


class TestContractMoves:
    def test_iright_after_deadline(self):
        run = initialized()
        en = run.sem.enabled(run.last)
        assert Act("iright", K0, "BTC") not in en
        run = run.extend(Act("delay", arg=run.last.record("BTC", K0).time - run.last.t))
        assert Act("iright", K0, "BTC") in run.sem.enabled(run.last)

    def test_left_then_withdraw(self):
        """B gets the coin on BTC; A's zero share is recorded too."""
        run = initialized().extend(Act("revealStep", K0.child("L"), who="B"))
        run = run.extend(Act("ileft", K0, "BTC"))
        assert status(run.last, "BTC", K0).kind == LEFT
        run = run.extend(Act("dwithdraw", K0, "BTC"))
        node = K0.child("L")
        got = {(r.label, r.balance, r.status.who) for r in run.last.records if r.chain == "BTC"}
        assert got == {(node.child(terminal(1)), 0, "A"), (node.child(terminal(2)), 1, "B")}
        assert all(r.status.kind == ASSIGNED for r in run.last.records if r.chain == "BTC")

    def test_slash_and_compensate(self):
        """B's step secret lets anybody slash DGC after it timed out; A is then credited everything."""
        run = initialized().extend(Act("revealStep", K0.child("L"), who="B"))
        run = run.extend(Act("ileft", K0, "BTC")).extend(Act("dwithdraw", K0, "BTC"))
        t = run.last.record("DGC", K0).time
        run = run.extend(Act("delay", arg=t - run.last.t)).extend(Act("iright", K0, "DGC"))
        assert status(run.last, "DGC", K0).kind == RIGHT
        run = run.extend(Act("slash", K0, "DGC", "B"))
        assert status(run.last, "DGC", K0).kind == SLASHED
        run = run.extend(Act("compensate", K0, "DGC", "B"))
        assert status(run.last, "DGC", K0).kind == COMPENSATED
        sheet = payout_sheet_is(run.sem.universe, run.last)
        assert sheet.payout("A", "DGC") == 1 and sheet.payout("B", "DGC") == 0

    def test_right_advances_label(self):
        run = initialized()
        run = run.extend(Act("delay", arg=run.last.record("BTC", K0).time - run.last.t))
        run = run.extend(Act("iright", K0, "BTC")).extend(Act("delay", arg=DELTA))
        run = run.extend(Act("right", K0, "BTC"))
        r = run.last.record("BTC", K0.child("R"))
        assert r.status.kind == CHOICE
        assert r.time == expected_time(SWAP.pre.t0, DELTA, r)

    def test_disabled_action(self):
        with pytest.raises(NotEnabled):
            initialized().extend(Act("dwithdraw", K0, "BTC"))


class TestDelay:
    def test_advance(self):
        sem = ISSemantics(Universe([]), DELTA)
        assert sem.delay(ISConfig(t=0), 10).t == 10

    @pytest.mark.parametrize("amount", [0, -3])
    def test_non_positive(self, amount):
        sem = ISSemantics(Universe([]), DELTA)
        with pytest.raises(NonPositiveDelay):
            sem.delay(ISConfig(), amount)

    def test_empty_configuration(self):
        """With nothing advertised only time can pass."""
        sem = ISSemantics(Universe([]), DELTA)
        assert sem.enabled(ISConfig()) == {Act("delay")}


class TestDeadlines:
    def test_round_depth(self):
        assert round_depth(K0) == 1
        assert round_depth(K0.child("L").child(1)) == 2

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(0, 50), max_size=25))
    def test_random_walk_keeps_deadlines(self, picks):
        """Any walk from an initialized swap keeps every deadline on the round grid and the coins in place."""
        run = initialized()
        for p in picks:
            en = sorted(run.sem.enabled(run.last), key=str)
            a = en[p % len(en)]
            if a.kind == "delay":
                a = a._replace(arg=1 + p % DELTA)
            if a.kind == "commit":
                continue
            run = run.extend(a)
            for r in run.last.records:
                if r.status.kind in (CHOICE, LEFT, RIGHT, SLASHED):
                    assert r.time == expected_time(SWAP.pre.t0, DELTA, r)
            for c in SWAP.chains:
                assert chain_money(run.last, c, "k0") == SWAP.pre.total(c)
