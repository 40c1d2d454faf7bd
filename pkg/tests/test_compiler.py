"""Compilation to per-chain BitML contracts."""

from dataclasses import replace

import pytest
from hypothesis import HealthCheck, given, settings

from bitmlx import corpus_path
from bitmlx.compiler import (
    collateral_for,
    compile_advertisement,
    compile_compensation,
    compile_guarded,
    compile_out,
    compile_refund,
    compile_toplevel,
    compiled_to_json,
    count_nodes,
    initial_settings,
    nodes,
    render_choice,
)
from bitmlx.errors import NotWellFormed
from bitmlx.surface import parse_advertisement, parse_file
from bitmlx.syntax import (
    Auth,
    BAfter,
    BAuth,
    BChoice,
    BReveal,
    BSplit,
    BTau,
    BWithdraw,
    Balance,
    Label,
    PriorityChoice,
    Split,
    StepSecret,
    Withdraw,
)

from generators import advertisements, read_compiled

SWAP = parse_file(corpus_path("swap"))
K0 = Label("k0")
THREE = parse_advertisement(
    "participants A, B, C; chains BTC;\n"
    "deposit A: 2 BTC; deposit B: 0 BTC; deposit C: 0 BTC;\n"
    "contract withdraw(2 BTC -> B);"
)
THREE_SPLIT = parse_advertisement(
    "participants A, B, C; chains BTC; deposit A: 2 BTC; deposit B: 0 BTC; deposit C: 0 BTC;"
    "contract split(2 BTC -> withdraw(2 BTC -> C)) >> withdraw(2 BTC -> A);"
)


def btc(v: int) -> Balance:
    return Balance({"BTC": v})


class TestNodes:
    """Labels that carry step secrets."""

    def test_swap(self):
        assert nodes(SWAP.contract, K0) == {Label("k0", "L")}

    def testBWithdraw(self):
        assert nodes(Withdraw((("A", btc(1)),)), K0) == set()

    def test_split_with_inner_choice(self):
        w = Withdraw((("A", btc(1)),))
        inner = PriorityChoice(w, w)
        c = PriorityChoice(Split(((btc(1), inner),)), w)
        assert nodes(c, K0) == {Label("k0", "L"), Label("k0", "L", 1, "L")}


class TestSettings:
    def test_swap_btc(self):
        """Two users, balance 1, no collateral, step secrets at the root and at Pay."""
        o = initial_settings(SWAP, "BTC", 10)
        assert (o.participants, o.balance, o.collateral, o.current_time, o.current_label) == (
            ("A", "B"), 1, 0, 10, K0
        )
        want = {StepSecret(a, k) for a in "AB" for k in (K0, Label("k0", "L"))}
        assert o.step_secrets == want

    def test_three_party_collateral(self):
        """Three users and 2 coins on the chain lock 2 coins of collateral each."""
        assert initial_settings(THREE, "BTC").collateral == 2
        assert collateral_for(3, 2) == 2

    def test_single_chain(self):
        o = initial_settings(THREE, "BTC")
        assert len(THREE.chains) == 1 and o.balance == 2


class TestOut:
    """Payout of a withdraw on one chain."""

    def test_pay_btc(self):
        o = initial_settings(SWAP, "BTC")
        assert compile_out(SWAP.contract.left.assignments, o, "BTC") == [(1, "B")]

    def test_collateral_topped_up(self):
        """With n=3 and c=1, everybody also recovers their collateral."""
        adv = parse_advertisement(
            "participants A, B, C; chains BTC; deposit A: 1 BTC; deposit B: 0 BTC; deposit C: 0 BTC;"
            "contract withdraw(1 BTC -> B);"
        )
        o = initial_settings(adv, "BTC")
        assert compile_out(adv.contract.assignments, o, "BTC") == [(1, "A"), (2, "B"), (1, "C")]

    def test_all_zero(self):
        o = replace(initial_settings(SWAP, "BTC"), collateral=0)
        assert compile_out((("A", btc(0)),), o, "BTC") == []


class TestRefund:
    def test_swap(self):
        """A gets its BTC back, B its DGC."""
        assert render_choice(compile_refund(SWAP, initial_settings(SWAP, "BTC"), "BTC")) == "split[1 -> withdraw A]"
        assert render_choice(compile_refund(SWAP, initial_settings(SWAP, "DGC"), "DGC")) == "split[1 -> withdraw B]"

    def test_three_party(self):
        """Deposits (2,0,0) with collateral 2 refund 4, 2 and 2."""
        out = render_choice(compile_refund(THREE, initial_settings(THREE, "BTC"), "BTC"))
        assert out == "split[4 -> withdraw A, 2 -> withdraw B, 2 -> withdraw C]"


class TestGuarded:
    def test_pay_on_btc(self):
        """Pay compiles to one step-secret reveal per user, both paying B."""
        o = replace(initial_settings(SWAP, "BTC"), current_label=Label("k0", "L"))
        got = render_choice(compile_guarded(SWAP.contract.left, o, "BTC"))
        assert got == "reveal s^A_[k0,L] . split[1 -> withdraw B] + reveal s^B_[k0,L] . split[1 -> withdraw B]"

    def test_split_top_up(self):
        """A branch of 2 coins among 3 users carries 2 + 3*2 = 8."""
        o = replace(initial_settings(THREE_SPLIT, "BTC"), current_label=Label("k0", "L"))
        clause, _, _ = compile_guarded(THREE_SPLIT.contract.left, o, "BTC").branches
        (split,) = clause.continuation.branches
        assert [v for v, _ in split.branches] == [8]

    def test_auth_prefixes_every_summand(self):
        o = replace(initial_settings(SWAP, "BTC"), current_label=Label("k0", "L"))
        d = Auth(("B",), Split(((Balance({"BTC": 1, "DGC": 1}), SWAP.contract.right),)))
        out = compile_guarded(d, o, "BTC").branches
        assert len(out) == 2
        assert all(isinstance(g, BAuth) and g.signers == ("B",) for g in out)


class TestCompensation:
    def test_swap_btc(self):
        """Either user's revealed step secret sends the coin to the other one."""
        o = replace(initial_settings(SWAP, "BTC"), current_label=Label("k0", "L"))
        got = render_choice(compile_compensation(o, "BTC"))
        assert got == "reveal s^A_[k0,L] . split[1 -> withdraw B] + reveal s^B_[k0,L] . split[1 -> withdraw A]"

    def test_three_party_shares(self):
        """Held balance 8 goes as 4 and 4 to the two others."""
        o = replace(initial_settings(THREE_SPLIT, "BTC"), current_label=Label("k0", "L"))
        assert o.held == 8
        clauses = compile_compensation(o, "BTC").branches
        assert len(clauses) == 3
        for clause in clauses:
            (split,) = clause.continuation.branches
            assert [v for v, _ in split.branches] == [4, 4]

    def test_zero_balance_prunes(self):
        o = replace(initial_settings(SWAP, "BTC"), balance=0)
        assert compile_compensation(o, "BTC").branches == ()


class TestTopLevel:
    def test_swap_shape(self):
        """Pay, then after t+d compensation, then after t+2d the Abort branch."""
        o = initial_settings(SWAP, "BTC", 10)
        c = compile_toplevel(SWAP.contract, o, "BTC")
        *pay, gate = c.branches
        assert len(pay) == 2 and all(isinstance(g, BReveal) for g in pay)
        assert isinstance(gate, BAfter) and gate.time == 20
        *comp, second = gate.inner.continuation.branches
        assert len(comp) == 2
        assert isinstance(second, BAfter) and second.time == 30
        assert render_choice(second.inner.continuation) == "split[1 -> withdraw A]"

    def test_loneBWithdraw(self):
        adv = parse_advertisement("participants A; chains BTC; deposit A: 1 BTC; contract withdraw(1 BTC -> A);")
        o = initial_settings(adv, "BTC")
        assert compile_toplevel(adv.contract, o, "BTC") == BChoice((BSplit(((1, BChoice((BWithdraw("A"),))),)),))

    def test_nested_gates_two_deltas_apart(self):
        """Each nesting level shifts both gates by 2d."""
        w = SWAP.contract.right
        c = PriorityChoice(SWAP.contract.left, PriorityChoice(SWAP.contract.left, w))
        o = initial_settings(SWAP, "BTC", 10)
        gates = []
        node = compile_toplevel(c, o, "BTC")
        while True:
            gate = node.branches[-1]
            if not isinstance(gate, BAfter):
                break
            second = gate.inner.continuation.branches[-1]
            gates.append((gate.time, second.time))
            node = second.inner.continuation
        assert gates == [(20, 30), (40, 50)]


class TestAdvertisement:
    def test_swap_preconditions(self):
        """Only A puts coins on BTC; B appears with an explicit zero."""
        out = compile_advertisement(SWAP)
        assert [(d.participant, d.amount) for d in out["BTC"].deposits] == [("A", 1), ("B", 0)]
        assert set(out.chains) == {"BTC", "DGC"}

    def test_exchange_collateral(self):
        out = compile_advertisement(parse_file(corpus_path("exchange")))
        assert out["BTC"].settings.collateral == 10
        assert out["DGC"].settings.collateral == 100

    def test_ill_formed(self):
        bad = replace(SWAP, contract=Withdraw((("A", btc(5)),)))
        with pytest.raises(NotWellFormed):
            compile_advertisement(bad)

    def test_stipulation_guard(self):
        """Each start clause reveals every init secret plus one root step secret, then refund after two gates."""
        c = compile_advertisement(SWAP)["BTC"].contract
        *starts, gate = c.branches
        assert [tuple(map(str, g.secrets)) for g in starts] == [
            ("IS^A_k0", "IS^B_k0", "s^A_[k0]"),
            ("IS^A_k0", "IS^B_k0", "s^B_[k0]"),
        ]
        assert gate.time == 20
        second = gate.inner.continuation.branches[-1]
        assert second.time == 30
        assert render_choice(second.inner.continuation) == "split[1 -> withdraw A]"

    def test_deterministic(self):
        a = compiled_to_json(compile_advertisement(SWAP), with_counts=True)
        b = compiled_to_json(compile_advertisement(SWAP), with_counts=True)
        assert a == b

    def test_counts(self):
        counts = count_nodes(compile_advertisement(SWAP)["BTC"].contract)
        assert counts["after"] == 6 and counts["tau"] == 6
        assert counts["total"] == sum(v for k, v in counts.items() if k != "total")


class TestOracle:
    """The independent reader agrees with the compiler and catches tampering."""

    @settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(advertisements(max_depth=4))
    def test_laws_hold(self, adv):
        out = compile_advertisement(adv, 10)
        for chain, co in out.chains.items():
            rep = read_compiled(co.contract, adv, chain, 10)
            assert rep.timelock == [] and rep.conservation == [] and rep.compensation == []

    def test_detects_shifted_gate(self):
        c = compile_advertisement(SWAP)["BTC"].contract
        *starts, gate = c.branches
        tampered = BChoice((*starts, BAfter(gate.time + 1, gate.inner)))
        assert read_compiled(tampered, SWAP, "BTC", 10).timelock

    def test_detects_leaky_split(self):
        c = compile_advertisement(SWAP)["BTC"].contract
        first = c.branches[0]
        pay = first.continuation.branches[0]
        leaky = BReveal(pay.secrets, pay.predicate, BChoice((BSplit(((2, BChoice((BWithdraw("B"),))),)),)))
        cont = BChoice((leaky, *first.continuation.branches[1:]))
        tampered = BChoice((BReveal(first.secrets, first.predicate, cont), *c.branches[1:]))
        assert read_compiled(tampered, SWAP, "BTC", 10).conservation

    def test_detects_unfair_compensation(self):
        adv = THREE
        c = compile_advertisement(adv)["BTC"].contract
        *starts, gate = c.branches
        *comp, second = gate.inner.continuation.branches
        clause = comp[0]
        (split,) = clause.continuation.branches
        (v1, w1), (v2, w2) = split.branches
        skewed = BReveal(clause.secrets, clause.predicate, BChoice((BSplit(((v1 + 1, w1), (v2 - 1, w2))),)))
        tampered = BChoice((*starts, BAfter(gate.time, BTau(BChoice((skewed, *comp[1:], second))))))
        assert read_compiled(tampered, adv, "BTC", 10).compensation
