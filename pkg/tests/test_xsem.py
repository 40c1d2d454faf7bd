"""Untimed BitMLx semantics."""

import pytest

from bitmlx import corpus_path
from bitmlx.errors import NotEnabled
from bitmlx.surface import parse_file
from bitmlx.syntax import Balance, Label
from bitmlx.xsem import (
    Universe,
    XAbort,
    XAdvertise,
    XAuth,
    XCommit,
    XConfig,
    XInit,
    XMove,
    XRevealSecret,
    XRun,
    XSign,
    refund_label,
    x_enabled,
    x_inputs,
    x_money,
    x_step,
)

SWAP = parse_file(corpus_path("swap"))
K0 = Label("k0")


def stipulated(adv, lengths=None) -> XRun:
    """Advertise, commit, sign and initialize with every participant cooperating."""
    u = Universe([adv])
    run = XRun(u).extend(XAdvertise(adv.root))
    for a in adv.participants:
        own = tuple((s, (lengths or {}).get(s, 0)) for s in adv.pre.secrets_of(a))
        run = run.extend(XCommit(a, adv.root, own))
    for a in adv.participants:
        run = run.extend(XSign(a, adv.root))
    return run.extend(XInit(adv.root))


def assigned(conf):
    return {(who, bal) for who, bal, _ in conf.assigned}


class TestEnabled:
    def test_active_swap(self):
        """Pay needs nothing, so both the left move and the skip are enabled."""
        run = stipulated(SWAP)
        moves = {a for a in x_enabled(run.universe, run.last) if isinstance(a, XMove)}
        assert moves == {XMove("dwithdraw", K0), XMove("skip", K0)}

    def test_reveal_waits_for_secret(self):
        """An unrevealed secret disables the left move but not the skip."""
        adv = parse_file(corpus_path("donate_agreed"))
        run = stipulated(adv, {"x": 1})
        en = x_enabled(run.universe, run.last)
        assert XMove("reveal", K0) not in en
        assert XMove("skip", K0) in en
        assert XRevealSecret("A", "x") in en
        run = run.extend(XRevealSecret("A", "x"))
        assert XMove("reveal", K0) in x_enabled(run.universe, run.last)

    def test_dishonest_withheld_secret(self):
        """A commitment without a length can never be revealed."""
        adv = parse_file(corpus_path("donate_agreed"))
        u = Universe([adv])
        conf = x_step(u, x_step(u, XConfig(), XAdvertise("k0")), XCommit("B", "k0", (("y", None),)))
        assert XRevealSecret("B", "y") not in x_enabled(u, conf)

    def test_auth_required(self):
        adv = parse_file(corpus_path("donate"))
        run = stipulated(adv)
        en = x_enabled(run.universe, run.last)
        assert XMove("dwithdraw", K0) not in en
        assert XAuth("B", K0) in en
        run = run.extend(XAuth("B", K0))
        assert XMove("dwithdraw", K0) in x_enabled(run.universe, run.last)

    def test_assigned_only(self):
        run = stipulated(SWAP).extend(XMove("dwithdraw", K0))
        assert x_enabled(run.universe, run.last) == set()

    def test_step_rejects_disabled(self):
        u = Universe([SWAP])
        with pytest.raises(NotEnabled):
            x_step(u, XConfig(), XInit("k0"))


class TestSteps:
    def test_pay(self):
        """Pay gives A the DGC and B the BTC."""
        run = stipulated(SWAP).extend(XMove("dwithdraw", K0))
        assert assigned(run.last) == {
            ("A", Balance({"BTC": 0, "DGC": 1})),
            ("B", Balance({"BTC": 1, "DGC": 0})),
        }
        assert run.last.active == frozenset()

    def test_skip_then_abort_branch(self):
        run = stipulated(SWAP).extend(XMove("skip", K0)).extend(XMove("cwithdraw", K0.child("R")))
        assert assigned(run.last) == {
            ("A", Balance({"BTC": 1, "DGC": 0})),
            ("B", Balance({"BTC": 0, "DGC": 1})),
        }

    def test_abort_refunds(self):
        u = Universe([SWAP])
        conf = x_step(u, x_step(u, XConfig(), XAdvertise("k0")), XAbort("k0"))
        assert {(w, b, k) for w, b, k in conf.assigned} == {
            ("A", Balance({"BTC": 1, "DGC": 0}), refund_label("k0", 1)),
            ("B", Balance({"BTC": 0, "DGC": 1}), refund_label("k0", 2)),
        }
        assert XAdvertise("k0") not in x_enabled(u, conf)


class TestMoney:
    """Active plus assigned funds equal what entered the contracts."""

    def test_initialized(self):
        run = stipulated(SWAP)
        active, done = x_money(run.last, SWAP.chains)
        assert active == Balance({"BTC": 1, "DGC": 1}) and done == Balance({"BTC": 0, "DGC": 0})

    def test_after_pay(self):
        run = stipulated(SWAP).extend(XMove("dwithdraw", K0))
        active, done = x_money(run.last, SWAP.chains)
        assert active == Balance({"BTC": 0, "DGC": 0}) and done == Balance({"BTC": 1, "DGC": 1})

    @pytest.mark.parametrize("name", ["swap", "donate", "loan"])
    def test_all_short_runs(self, name):
        """Every run of at most six steps after initialization conserves funds."""
        adv = parse_file(corpus_path(name))
        start = stipulated(adv)
        u = start.universe
        frontier, seen = [start.last], {start.last}
        for _ in range(6):
            nxt = []
            for conf in frontier:
                active, done = x_money(conf, adv.chains)
                assert active + done == x_inputs(u, conf, adv.chains)
                for a in x_enabled(u, conf):
                    c2 = x_step(u, conf, a)
                    if c2 not in seen:
                        seen.add(c2)
                        nxt.append(c2)
            frontier = nxt
        assert len(seen) > 1
