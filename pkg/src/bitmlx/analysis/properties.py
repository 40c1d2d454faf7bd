"""State and run invariants of the intermediate semantics under an honest user.

Each checker has a configuration-level form returning the first violated
clause (or ``None``) and a run-level form that scans every prefix.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..isem import (
    ASSIGNED,
    CHOICE,
    COMPENSATED,
    LEFT,
    SLASHED,
    STIP_CHOICE,
    STIP_COMPENSATED,
    STIP_REFUNDED,
    STIP_RIGHT,
    STIP_SLASHED,
    TERMINAL_KINDS,
    ISConfig,
    expected_time,
    round_depth,
)
from ..syntax import Label, PriorityChoice
from ..xsem import Universe, XConfig, x_inputs, x_money
from .frontiers import DOUBLE_SPENT, round_status_at, stip_status_is
from .coherence import finished_init_auths

MOVE_KINDS = ("dwithdraw", "cwithdraw", "reveal", "split", "right")
CHEATED = frozenset({SLASHED, COMPENSATED, STIP_SLASHED, STIP_COMPENSATED})


@dataclass(frozen=True)
class Violation:
    invariant: str
    clause: str
    detail: str
    index: int | None = None

    def to_json(self) -> dict:
        out = {"invariant": self.invariant, "clause": self.clause, "detail": self.detail}
        if self.index is not None:
            out["index"] = self.index
        return out


def _at(v: Violation | None, i: int) -> Violation | None:
    return None if v is None else Violation(v.invariant, v.clause, v.detail, i)


def scan(check, configs, *args) -> Violation | None:
    """First violation of a configuration checker along a run."""
    for i, conf in enumerate(configs):
        v = check(conf, *args)
        if v is not None:
            return _at(v, i)
    return None


# --- money -------------------------------------------------------------------------


def money_preservation(conf: ISConfig, u: Universe) -> Violation | None:
    """Per chain and root: the logical balances of all records add up to the published total."""
    sums: dict[tuple, int] = {}
    for r in conf.records:
        key = (r.label.root, r.chain)
        sums[key] = sums.get(key, 0) + r.balance
    for root, chain in conf.published | set(sums):
        want = u[root].pre.total(chain) if (root, chain) in conf.published else 0
        got = sums.get((root, chain), 0)
        if got != want:
            return Violation("money_preservation", "per-root", f"{root} on {chain}: records hold {got}, inputs {want}")
    return None


def money_preservation_x(conf: XConfig, u: Universe) -> Violation | None:
    chains = sorted({c for adv in u for c in adv.chains})
    active, assigned = x_money(conf, chains)
    inputs = x_inputs(u, conf, chains)
    for c in chains:
        if active[c] + assigned[c] != inputs[c]:
            return Violation("money_preservation_x", "total", f"{c}: {active[c]} + {assigned[c]} != {inputs[c]}")
    return None


# --- timeouts ----------------------------------------------------------------------


def timeout_consistency(conf: ISConfig, u: Universe, delta: int) -> Violation | None:
    for r in conf.records:
        if r.status.kind in TERMINAL_KINDS:
            continue
        want = expected_time(u[r.label.root].pre.t0, delta, r)
        if r.time != want:
            return Violation("timeout_consistency", str(r.status), f"{r.label} on {r.chain}: time {r.time}, expected {want}")
    return None


# --- honest compensation -----------------------------------------------------------


def no_honest_compensation(conf: ISConfig, honest: str) -> Violation | None:
    for r in conf.records:
        if r.status.kind in CHEATED and r.status.who == honest:
            return Violation("no_honest_compensation", r.status.kind, f"{r.label} on {r.chain} is {r.status}")
    return None


# --- non-divergence ----------------------------------------------------------------


def record_move(history: frozenset, act) -> tuple[frozenset, Violation | None]:
    """Add a move to the per-label move history; report a second, different move."""
    if act.kind not in MOVE_KINDS:
        return history, None
    for label, kind in history:
        if label == act.label and kind != act.kind:
            return history, Violation(
                "non_divergence", "moves", f"{act.label}: {kind} and {act.kind} on different chains"
            )
    return history | {(act.label, act.kind)}, None


def non_divergence(actions) -> Violation | None:
    history: frozenset = frozenset()
    for i, a in enumerate(actions):
        history, v = record_move(history, a)
        if v is not None:
            return _at(v, i + 1)
    return None


# --- round-based execution ---------------------------------------------------------


class _View:
    """Lookups shared by the round-based clauses for one configuration."""

    def __init__(self, conf: ISConfig, u: Universe):
        self.conf = conf
        self.u = u
        self.nonstip = [r for r in conf.records if not r.status.stip]

    def under(self, label: Label, strict: bool = True) -> bool:
        return any(
            label.is_strict_ancestor_of(r.label) or (not strict and r.label == label) for r in self.nonstip
        )

    def desc_root(self, root: str) -> bool:
        return any(r.label.root == root for r in self.nonstip)

    def step_owners(self, label: Label) -> frozenset:
        return self.conf.step_secret_owners(label)

    def init_owners(self, root: str) -> frozenset:
        return frozenset(a for a, r in self.conf.init_revealed if r == root)


def round_based(conf: ISConfig, u: Universe, delta: int, honest: str) -> Violation | None:
    view = _View(conf, u)
    t = conf.t

    def bad(clause: str, detail: str) -> Violation:
        return Violation("round_based", clause, detail)

    for root, chain in sorted(conf.ads):
        adv = u[root]
        if honest not in adv.participants:
            continue
        t0, k0 = adv.pre.t0, Label(root)
        if t < t0 + delta:
            if honest in view.step_owners(k0):
                return bad("ad.publishing.a", f"{root}: honest stipulation step secret revealed")
            if honest in view.init_owners(root):
                return bad("ad.publishing.b", f"{root}: honest init secret revealed")
            if view.desc_root(root):
                return bad("ad.publishing.c", f"{root}: contract running while still advertised on {chain}")
        elif stip_status_is(u, conf, root, chain) != DOUBLE_SPENT:
            return bad("ad.invalidated", f"{root} on {chain} still publishable at {t}")

    for r in sorted(conf.records, key=lambda r: (r.chain, str(r.label), str(r.status))):
        adv = u[r.label.root]
        if honest not in adv.participants:
            continue
        t0 = adv.pre.t0
        kind, who = r.status.kind, r.status.who
        where = f"{r.label} on {r.chain} ({r.status}) at {t}"
        if r.status.stip:
            root = r.label.root
            k0 = Label(root)
            users = frozenset(adv.participants)
            desc = view.desc_root(root)
            honest_step = honest in view.step_owners(k0)
            if t < t0:
                if kind != STIP_CHOICE:
                    return bad("stip.initialization.a", where)
                if honest in view.init_owners(root) and finished_init_auths(u, conf, root) != users:
                    return bad("stip.initialization.b", where)
                if (desc or honest_step) and view.init_owners(root) != users:
                    return bad("stip.initialization.c", where)
            elif t < t0 + delta:
                if kind in (STIP_SLASHED, STIP_COMPENSATED) and who == honest:
                    return bad("stip.compensation.a", where)
                if honest_step:
                    return bad("stip.compensation.b", where)
                if desc and (view.init_owners(root) != users or not (view.step_owners(k0) - {honest})):
                    return bad("stip.compensation.c", where)
            elif t < t0 + 2 * delta:
                settled = (kind in (STIP_SLASHED, STIP_COMPENSATED) and who != honest) or kind in (STIP_RIGHT, STIP_REFUNDED)
                if not settled:
                    return bad("stip.refund.a", where)
                if honest_step:
                    return bad("stip.refund.b", where)
                if desc:
                    return bad("stip.refund.c", where)
            elif t > t0 + 2 * delta:
                if not ((kind == STIP_COMPENSATED and who != honest) or kind == STIP_REFUNDED):
                    return bad("stip.finalized.a", where)
            continue

        depth = round_depth(r.label)
        rs = round_status_at(t, t0, delta)
        node = r.label.child("L")
        rdesc = view.under(r.label.child("R"), strict=False)
        ldesc = view.under(node, strict=False)
        assigned = kind == ASSIGNED
        honest_step = honest in view.step_owners(node)
        is_choice = not assigned and isinstance(u.contract_at(r.label), PriorityChoice)
        if depth > rs.r:
            if kind not in (CHOICE, LEFT, ASSIGNED):
                return bad("active.ahead.a", where)
            if rdesc:
                return bad("active.ahead.b", where)
        elif depth == rs.r and rs.p == 0:
            if kind in (SLASHED, COMPENSATED) and who == honest:
                return bad("active.compensation.a", where)
            if not assigned and honest_step:
                return bad("active.compensation.b", where)
            if rdesc:
                return bad("active.compensation.c", where)
            if is_choice and (kind == LEFT or view.under(r.label)) and not (view.step_owners(node) - {honest}):
                return bad("active.compensation.d", where)
        elif depth == rs.r:
            if kind in (CHOICE, LEFT) or (kind in (SLASHED, COMPENSATED) and who == honest):
                return bad("active.skipping.a", where)
            if not assigned and honest_step:
                return bad("active.skipping.b", where)
            if ldesc and (rdesc or not (kind == COMPENSATED and who != honest)):
                return bad("active.skipping.c", where)
        else:
            if not (assigned or (kind == COMPENSATED and who != honest)):
                return bad("active.finalized.a", where)
            if ldesc and rdesc:
                return bad("active.finalized.b", where)
    return None
