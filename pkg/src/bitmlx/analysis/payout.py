"""Payout sheets and the security comparison between both levels.

Intermediate payouts count coins actually handed out on each chain,
collateral included.  Compensations are credited to the non-cheaters in
equal shares of the held funds, which is what the compiled compensation
clause pays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..isem import ASSIGNED, COMPENSATED, SLASHED, STIP_COMPENSATED, STIP_REFUNDED, STIP_SLASHED, TERMINAL_KINDS, ISConfig
from ..xsem import Universe, XConfig

PAID_TO_OTHERS = frozenset({SLASHED, COMPENSATED, STIP_SLASHED, STIP_COMPENSATED})


@dataclass
class PayoutSheet:
    """Per (participant, chain): assigned payouts, compensation credit, inputs."""

    level: str
    assigned: dict = field(default_factory=dict)
    credit: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    active: dict = field(default_factory=dict)  # chain -> funds still held by running contracts

    def _add(self, table: dict, who: str, chain: str, v: int) -> None:
        table[(who, chain)] = table.get((who, chain), 0) + v

    def payout(self, who: str, chain: str) -> int:
        return self.assigned.get((who, chain), 0) + self.credit.get((who, chain), 0)

    def net(self, who: str, chain: str) -> int:
        return self.payout(who, chain) - self.inputs.get((who, chain), 0)

    def chains(self) -> list[str]:
        keys = set(self.assigned) | set(self.credit) | set(self.inputs)
        return sorted({c for _, c in keys} | set(self.active))

    def participants(self) -> list[str]:
        keys = set(self.assigned) | set(self.credit) | set(self.inputs)
        return sorted({w for w, _ in keys})

    def balanced(self) -> bool:
        """Money preservation: everything paid out or still held equals everything put in."""
        for c in self.chains():
            out = sum(v for (w, ch), v in self.assigned.items() if ch == c)
            out += sum(v for (w, ch), v in self.credit.items() if ch == c)
            out += self.active.get(c, 0)
            inp = sum(v for (w, ch), v in self.inputs.items() if ch == c)
            if out != inp:
                return False
        return True

    def to_json(self) -> dict:
        rows = []
        for w in self.participants():
            for c in self.chains():
                rows.append({
                    "participant": w,
                    "chain": c,
                    "assigned": self.assigned.get((w, c), 0),
                    "credit": self.credit.get((w, c), 0),
                    "inputs": self.inputs.get((w, c), 0),
                    "net": self.net(w, c),
                })
        return {"level": self.level, "rows": rows, "active": dict(self.active), "balanced": self.balanced()}


def payout_sheet_is(u: Universe, conf: ISConfig) -> PayoutSheet:
    sheet = PayoutSheet("is")
    for root, chain in conf.published:
        adv = u[root]
        extra = adv.pre.total(chain) * max(len(adv.participants) - 2, 0)
        for d in adv.pre.deposits:
            sheet._add(sheet.inputs, d.participant, chain, d.balance[chain] + extra)
    for r in conf.records:
        adv = u[r.label.root]
        parts = adv.participants
        n = len(parts)
        kind, who = r.status.kind, r.status.who
        if kind == ASSIGNED:
            sheet._add(sheet.assigned, who, r.chain, r.balance)
            for p in parts:
                sheet._add(sheet.assigned, p, r.chain, max(n - 2, 0) * r.balance)
        elif kind == STIP_REFUNDED:
            sheet._add(sheet.assigned, who, r.chain, r.balance + max(n - 2, 0) * adv.pre.total(r.chain))
        elif kind in PAID_TO_OTHERS:
            held = r.balance + n * max(n - 2, 0) * r.balance
            others = [p for p in parts if p != who]
            for p in others:
                sheet._add(sheet.credit, p, r.chain, held // len(others))
        elif kind not in TERMINAL_KINDS:
            held = r.balance + n * max(n - 2, 0) * r.balance
            sheet.active[r.chain] = sheet.active.get(r.chain, 0) + held
    return sheet


def payout_sheet_x(u: Universe, conf: XConfig) -> PayoutSheet:
    sheet = PayoutSheet("x")
    for root in conf.initialized | conf.aborted:
        adv = u[root]
        for d in adv.pre.deposits:
            for c in adv.chains:
                sheet._add(sheet.inputs, d.participant, c, d.balance[c])
    for who, bal, _ in conf.assigned:
        for c, v in bal:
            sheet._add(sheet.assigned, who, c, v)
    for _, bal in conf.active:
        for c, v in bal:
            sheet.active[c] = sheet.active.get(c, 0) + v
    return sheet


@dataclass(frozen=True)
class SecurityVerdict:
    ok: bool
    rows: tuple = ()  # (chain, is_net, x_net)

    def to_json(self) -> dict:
        return {"ok": self.ok, "rows": [{"chain": c, "is_net": a, "x_net": b} for c, a, b in self.rows]}


def security(u: Universe, conf: ISConfig, xconf: XConfig, honest: str) -> SecurityVerdict:
    """Per chain: the honest user's intermediate net is at least its BitMLx net."""
    s_is = payout_sheet_is(u, conf)
    s_x = payout_sheet_x(u, xconf)
    chains = sorted({c for adv in u for c in adv.chains})
    rows = tuple((c, s_is.net(honest, c), s_x.net(honest, c)) for c in chains)
    return SecurityVerdict(all(a >= b for _, a, b in rows), rows)
