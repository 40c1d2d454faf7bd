"""Well-formedness judgment for advertisements.

Walks the contract with the balance each node governs and collects every
violation instead of stopping at the first one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .syntax import (
    Advertisement,
    Auth,
    Balance,
    Contract,
    Guarded,
    Label,
    PriorityChoice,
    Reveal,
    Split,
    Withdraw,
    balance_sum,
    predicate_secrets,
)

RULES = ("WF-PChoice", "WF-Withdraw", "WFG-Split", "WFG-Reveal", "WFG-AuthOp", "WFG-Withdraw")


@dataclass(frozen=True)
class Violation:
    rule: str
    label: Label
    message: str

    def to_json(self) -> dict:
        return {"rule": self.rule, "label": str(self.label), "message": self.message}


@dataclass(frozen=True)
class WfReport:
    violations: tuple[Violation, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"ok": self.ok, "violations": [v.to_json() for v in self.violations]}


class _Checker:
    def __init__(self, adv: Advertisement):
        self.pre = adv.pre
        self.chains = adv.chains
        self.participants = set(adv.participants)
        self.committed = {s for _, s in adv.pre.secrets}
        self.out: list[Violation] = []

    def report(self, rule: str, label: Label, message: str) -> None:
        self.out.append(Violation(rule, label, message))

    def same(self, a: Balance, b: Balance) -> bool:
        return all(a[c] == b[c] for c in self.chains)

    def check_assignments(self, rule: str, w: Withdraw, b: Balance, label: Label) -> None:
        for who, amount in w.assignments:
            if who not in self.participants:
                self.report(rule, label, f"{who} is not a participant of the preconditions")
            extra = set(amount.chains) - set(self.chains)
            if extra:
                self.report(rule, label, f"amounts on inactive chains {sorted(extra)}")
        total = balance_sum((a for _, a in w.assignments), self.chains)
        if not self.same(total, b):
            self.report(rule, label, f"withdraw distributes {total.on(self.chains)} but the contract holds {b.on(self.chains)}")

    def contract(self, c: Contract, b: Balance, label: Label) -> None:
        if isinstance(c, PriorityChoice):
            self.guarded(c.left, b, label.child("L"))
            self.contract(c.right, b, label.child("R"))
        elif isinstance(c, Withdraw):
            self.check_assignments("WF-Withdraw", c, b, label)
        else:
            self.report("WF-PChoice", label, f"expected a priority choice or a withdraw, found {type(c).__name__}")

    def guarded(self, d: Guarded, b: Balance, label: Label) -> None:
        if isinstance(d, Withdraw):
            self.check_assignments("WFG-Withdraw", d, b, label)
        elif isinstance(d, Split):
            total = balance_sum((bi for bi, _ in d.branches), self.chains)
            if not self.same(total, b):
                self.report("WFG-Split", label, f"split branches sum to {total.on(self.chains)} but the contract holds {b.on(self.chains)}")
            for i, (bi, ci) in enumerate(d.branches, start=1):
                self.contract(ci, bi, label.child(i))
        elif isinstance(d, Reveal):
            for s in d.secrets:
                if s not in self.committed:
                    self.report("WFG-Reveal", label, f"secret {s} is not committed in the preconditions")
            for s in set(predicate_secrets(d.predicate)):
                if s not in d.secrets and s not in self.committed:
                    self.report("WFG-Reveal", label, f"condition mentions unknown secret {s}")
            self.contract(d.continuation, b, label)
        elif isinstance(d, Auth):
            if isinstance(d.inner, Auth):
                self.report("WFG-AuthOp", label, "authorization wraps another authorization")
            for who in d.signers:
                if who not in self.participants:
                    self.report("WFG-AuthOp", label, f"signer {who} is not a participant of the preconditions")
            self.guarded(d.inner, b, label)
        else:
            self.report("WF-PChoice", label, f"expected a guarded contract, found {type(d).__name__}")


def check_well_formed(adv: Advertisement) -> WfReport:
    checker = _Checker(adv)
    total = Balance({c: adv.pre.total(c) for c in adv.chains})
    checker.contract(adv.contract, total, Label(adv.root))
    return WfReport(tuple(checker.out))
