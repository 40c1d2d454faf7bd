"""Frontiers, coherence, payouts, liquidation, invariant checkers and rendering."""

import pytest

from helpers import K0, drive, engine, swap_init
from test_isem import initialized

from bitmlx.analysis import (
    build_coherent_xrun,
    check_coherence,
    check_coherence_config,
    frontier_is,
    frontier_x,
    is_antichain,
    join_frontiers,
    liquidate,
    liquidated,
    money_preservation,
    non_divergence,
    payout_sheet_is,
    render_bitml,
    round_based,
    round_status_at,
    scan,
    stip_status_es,
    stip_status_is,
    stip_status_x,
    timeout_consistency,
)
from bitmlx.analysis.frontiers import ABORTED, ADVERTISED, DOUBLE_SPENT, INITIALIZED
from bitmlx.analysis.render import residue
from bitmlx.isem import Act
from bitmlx.xsem import XConfig, XMove

L = K0.child("L")
DELTA = 10
U = initialized().sem.universe


def lockstep():
    """Swap run where both chains take the left option and pay out together."""
    run = initialized()
    for a in (
        Act("revealStep", L, who="A"),
        Act("ileft", K0, "BTC"),
        Act("ileft", K0, "DGC"),
        Act("dwithdraw", K0, "BTC"),
        Act("dwithdraw", K0, "DGC"),
    ):
        run = run.extend(a)
    return run


def replace_record(conf, old, new):
    return conf._replace(records=(conf.records - {old}) | {new})


class TestFrontiers:
    def test_after_init(self):
        assert frontier_is(initialized().last, "BTC") == {K0}

    def test_after_withdraw_are_leaves(self):
        f = frontier_is(lockstep().last, "DGC")
        assert f == {L.child("L_1"), L.child("L_2")}
        assert is_antichain(f)

    def test_empty_join(self):
        assert join_frontiers() == frozenset()

    def test_join_keeps_deepest(self):
        assert join_frontiers({K0}, {L}) == {L}

    def test_published_only_has_empty_frontier(self):
        eng = engine()
        state, v = drive(eng, swap_init()[:8])
        assert v is None
        assert frontier_is(state[0], "DGC") == frozenset()
        assert frontier_x(state[1]) == frozenset()


class TestRoundStatus:
    @pytest.mark.parametrize("t, want", [(5, (0, 0)), (15, (0, 1)), (25, (1, 0)), (35, (1, 1))])
    def test_phases(self, t, want):
        assert tuple(round_status_at(t, 0, DELTA)) == want


class TestStipulationStatus:
    def test_advertised_then_initialized(self):
        eng = engine()
        state, _ = drive(eng, swap_init()[:9])
        assert stip_status_es(eng.universe, state[0], "k0") == ADVERTISED
        state, _ = drive(eng, swap_init())
        assert stip_status_es(eng.universe, state[0], "k0") == INITIALIZED
        assert stip_status_x(state[1], "k0") == INITIALIZED

    def test_double_spend_aborts_everywhere(self):
        """Spending a deposit before its chain publishes aborts the whole stipulation."""
        eng = engine()
        state, v = drive(eng, swap_init()[:8] + [Act("doubleSpend", K0, "DGC", who="B")])
        assert v is None
        conf, xconf, _ = state
        assert stip_status_is(eng.universe, conf, "k0", "DGC") == DOUBLE_SPENT
        assert stip_status_es(eng.universe, conf, "k0") == ABORTED
        assert stip_status_x(xconf, "k0") == ABORTED


class TestCoherence:
    def test_lockstep_mirror(self):
        run = lockstep()
        xrun = build_coherent_xrun(run, "A")
        assert xrun.actions[-1] == XMove("dwithdraw", K0)
        assert check_coherence(xrun, run, "A")

    def test_every_prefix_coherent(self):
        run = lockstep()
        for n in range(len(run) + 1):
            prefix = run.prefix(n)
            assert check_coherence(build_coherent_xrun(prefix, "A"), prefix, "A")

    def test_stale_x_run_is_incoherent(self):
        run = lockstep()
        verdict = check_coherence_config(run.sem.universe, XConfig(), run.last, "A")
        assert not verdict
        assert verdict.clause == "frontier"


class TestPayout:
    def test_swap_nets(self):
        sheet = payout_sheet_is(U, lockstep().last)
        assert sheet.balanced()
        assert (sheet.net("A", "BTC"), sheet.net("A", "DGC")) == (-1, 1)
        assert (sheet.net("B", "BTC"), sheet.net("B", "DGC")) == (1, -1)

    def test_stalled_swap_refunds_everyone(self):
        eng = engine()
        state, _ = drive(eng, swap_init()[:9])
        leaf = eng.leaf(state)
        assert leaf.violation is None and leaf.security.ok
        assert liquidated(leaf.final)
        sheet = payout_sheet_is(eng.universe, leaf.final)
        assert all(sheet.net(a, c) == 0 for a in "AB" for c in ("BTC", "DGC"))


class TestLiquidation:
    def test_liquidated_run_is_fixed_point(self):
        eng = engine()
        state, _ = drive(eng, swap_init()[:9])
        leaf = eng.leaf(state)
        assert liquidate(eng.sem, eng.strategy, eng.mirror, leaf.final, leaf.xfinal) == ([], [], [])

    def test_after_init_pays_out(self):
        eng = engine()
        state, _ = drive(eng, swap_init())
        leaf = eng.leaf(state)
        assert leaf.violation is None
        assert {r.status.kind for r in leaf.final.records} == {"Assigned"}


class TestNegativeControls:
    """Each checker rejects a hand-corrupted configuration."""

    def test_money_leak(self):
        conf = lockstep().last
        r = next(r for r in conf.records if r.chain == "BTC" and r.balance == 1)
        bad = replace_record(conf, r, r._replace(balance=2))
        assert money_preservation(conf, U) is None
        assert money_preservation(bad, U).invariant == "money_preservation"

    def test_wrong_record_time(self):
        conf = initialized().last
        r = conf.record("BTC", K0)
        assert timeout_consistency(conf, U, DELTA) is None
        bad = replace_record(conf, r, r._replace(time=r.time + 1))
        assert timeout_consistency(bad, U, DELTA).invariant == "timeout_consistency"

    def test_honest_secret_during_compensation(self):
        """Revealing the honest step secret while the choice is still open at its deadline is flagged."""
        run = initialized().extend(Act("revealStep", L, who="A"))
        assert round_based(run.last, U, DELTA, "A") is None
        run = run.extend(Act("delay", arg=30 - run.last.t))
        v = round_based(run.last, U, DELTA, "A")
        assert v is not None and v.clause == "active.compensation.b"

    def test_divergent_moves(self):
        acts = [Act("dwithdraw", K0, "BTC"), Act("right", K0, "DGC")]
        v = non_divergence(acts)
        assert v is not None and v.index == 2
        assert non_divergence([Act("dwithdraw", K0, "BTC"), Act("dwithdraw", K0, "DGC")]) is None

    def test_scan_reports_index(self):
        run = lockstep()
        configs = list(run.configs)
        i = len(configs) - 2
        r = next(iter(configs[i].records))
        assert scan(money_preservation, configs, U) is None
        configs[i] = replace_record(configs[i], r, r._replace(balance=r.balance + 5))
        assert scan(money_preservation, configs, U).index == i


class TestRender:
    def test_choice_shows_both_gates(self):
        text = render_bitml(U, initialized().last)
        assert "after 40" in text and "after 50" in text

    def test_assigned_residue(self):
        conf = lockstep().last
        r = next(r for r in conf.records if r.chain == "DGC" and r.status.who == "A")
        assert residue(U, r, DELTA).startswith("withdraw A (1")

    def test_left_residue_drops_the_guard(self):
        run = initialized().extend(Act("revealStep", L, who="A")).extend(Act("ileft", K0, "BTC"))
        r = run.last.record("BTC", K0)
        assert r.status.kind == "Left"
        body = residue(U, r, DELTA)
        assert "reveal" not in str(body)
