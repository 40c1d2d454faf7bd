"""Rendering an intermediate configuration as the BitML configuration it stands for.

Each record becomes the residue of its compiled contract: the full compiled
choice while undecided, the part after the step-secret reveal once the left
move is committed, the timeout branch after skipping, and plain payouts
once settled.
"""

from __future__ import annotations

from dataclasses import replace

from ..compiler import (
    BChoice,
    CompilerSettings,
    collateral_for,
    compile_compensation,
    compile_guarded,
    compile_refund,
    compile_stipulation,
    compile_toplevel,
    initial_settings,
    pretty_bitml,
)
from ..isem import (
    ASSIGNED,
    CHOICE,
    COMPENSATED,
    LEFT,
    RIGHT,
    SLASHED,
    STIP_CHOICE,
    STIP_COMPENSATED,
    STIP_REFUNDED,
    STIP_RIGHT,
    STIP_SLASHED,
    ISConfig,
    Record,
)
from ..syntax import BAfter, BAuth, BReveal, BSplit, BTau, BWithdraw, Label
from ..xsem import Universe


def settings_at(u: Universe, r: Record, delta: int) -> CompilerSettings:
    adv = u[r.label.root]
    base = initial_settings(adv, r.chain, delta)
    return replace(
        base,
        balance=r.balance,
        collateral=collateral_for(base.n, r.balance),
        current_time=r.time,
        current_label=r.label,
    )


def _pay_others(omega: CompilerSettings, cheater: str) -> BChoice:
    share = omega.held // (omega.n - 1) if omega.n > 1 else 0
    return BChoice((BSplit(tuple((share, BChoice((BWithdraw(a),))) for a in omega.participants if a != cheater and share > 0)),))


def residue(u: Universe, r: Record, delta: int) -> BChoice | str:
    """The BitML contract (or settled payout text) a record stands for."""
    adv = u[r.label.root]
    kind, who = r.status.kind, r.status.who
    if kind in (STIP_CHOICE, STIP_RIGHT, STIP_SLASHED):
        omega = initial_settings(adv, r.chain, delta)
        run = replace(omega, current_time=omega.current_time + 2 * delta)
        if kind == STIP_CHOICE:
            return compile_stipulation(adv, omega, r.chain)
        if kind == STIP_RIGHT:
            refund = compile_refund(adv, run, r.chain)
            return BChoice((*compile_compensation(run, r.chain).branches, BAfter(run.current_time, BTau(refund))))
        return _pay_others(run, who)
    omega = settings_at(u, r, delta)
    if kind == ASSIGNED:
        return f"withdraw {who} ({r.balance} + collateral {collateral_for(omega.n, r.balance)} each)"
    if kind == STIP_REFUNDED:
        extra = collateral_for(omega.n, adv.pre.total(r.chain))
        return f"refund {who} ({r.balance + extra})"
    if kind in (COMPENSATED, STIP_COMPENSATED):
        held = omega.held if kind == COMPENSATED else initial_settings(adv, r.chain, delta).held
        return f"compensated: {held} paid to everyone but {who}"
    c = u.contract_at(r.label)
    if kind == CHOICE:
        return compile_toplevel(c, omega, r.chain)
    node_omega = replace(omega, current_label=r.label.child("L"))
    if kind == LEFT:
        left = compile_guarded(c.left, node_omega, r.chain)
        g = left.branches[0]
        while isinstance(g, BAuth):
            g = g.inner
        return g.continuation if isinstance(g, BReveal) else BChoice((g,))
    if kind == RIGHT:
        right = compile_toplevel(c, replace(omega, current_time=r.time - delta), r.chain)
        tau = right.branches[-1]
        return tau.inner.continuation
    if kind == SLASHED:
        return _pay_others(node_omega, who)
    raise ValueError(f"unknown status {r.status}")


def render_bitml(u: Universe, conf: ISConfig, delta: int = 10) -> str:
    lines = [f"time {conf.t}"]
    for root, chain in sorted(conf.ads):
        lines.append(f"advertisement {root} on {chain}")
    for who, chain, name, amount in sorted(conf.deposits):
        lines.append(f"deposit <{who}, {amount}> {name} on {chain}")
    for a, s, n in sorted(conf.revealed, key=str):
        lines.append(f"revealed {a}:{s} length {n}")
    for a, k in sorted(conf.step_revealed, key=str):
        lines.append(f"revealed s^{a}_{k}")
    for a, root in sorted(conf.init_revealed):
        lines.append(f"revealed IS^{a}_{root}")
    for a, k, c in sorted(conf.control_auths, key=str):
        lines.append(f"authorized {a} at {k} on {c}")
    for r in sorted(conf.records, key=lambda r: (r.chain, str(r.label), str(r.status))):
        body = residue(u, r, delta)
        head = f"{r.chain} {r.label} [{r.status}, time {r.time}, balance {r.balance}]"
        if isinstance(body, str):
            lines.append(f"{head}: {body}")
        else:
            lines.append(head + ":")
            lines.append(pretty_bitml(body, 4))
    return "\n".join(lines)
