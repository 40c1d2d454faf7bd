"""Untimed BitMLx semantics.

Configurations are immutable and hashable so that runs can share prefixes
and analyses can memoize per state.  The contract sitting at a label is not
stored in the configuration; it is looked up in the advertisement's label
index, which is possible because labels are structured child paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Union

from .errors import NotEnabled
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
    eval_predicate,
    strip_auth,
    terminal,
)
from .errors import UnboundSecret


class ContractIndex:
    """Label-indexed view of one advertisement's contract tree.

    ``contracts`` maps labels of top-level contracts (priority choices and
    final withdraws) and ``guarded`` maps labels of guarded options.  A
    reveal's continuation lives at the reveal's own label, in ``contracts``.
    """

    def __init__(self, adv: Advertisement):
        self.adv = adv
        self.contracts: dict[Label, Contract] = {}
        self.guarded: dict[Label, Guarded] = {}
        self._walk(adv.contract, Label(adv.root))

    def _walk(self, c: Contract, label: Label) -> None:
        self.contracts[label] = c
        if isinstance(c, PriorityChoice):
            self._walk_guarded(c.left, label.child("L"))
            self._walk(c.right, label.child("R"))

    def _walk_guarded(self, d: Guarded, label: Label) -> None:
        self.guarded[label] = d
        _, inner = strip_auth(d)
        if isinstance(inner, Split):
            for i, (_, ci) in enumerate(inner.branches, start=1):
                self._walk(ci, label.child(i))
        elif isinstance(inner, Reveal):
            self._walk(inner.continuation, label)

    def contract(self, label: Label) -> Contract:
        return self.contracts[label]

    def option(self, label: Label) -> Guarded:
        """Guarded option of the priority choice at ``label``."""
        return self.guarded[label.child("L")]

    def depth_bound(self) -> int:
        return max((k.depth for k in self.contracts), default=0)


class Universe:
    """The advertisements a run may use, keyed by stipulation identifier."""

    def __init__(self, ads: Iterable[Advertisement]):
        self.ads: dict[str, Advertisement] = {}
        self.index: dict[str, ContractIndex] = {}
        for adv in ads:
            if adv.root in self.ads:
                raise ValueError(f"duplicate stipulation identifier {adv.root}")
            self.ads[adv.root] = adv
            self.index[adv.root] = ContractIndex(adv)

    def __getitem__(self, root: str) -> Advertisement:
        return self.ads[root]

    def __iter__(self):
        return iter(self.ads.values())

    def contract_at(self, label: Label) -> Contract:
        return self.index[label.root].contract(label)

    def option_at(self, label: Label) -> Guarded:
        return self.index[label.root].option(label)


def refund_label(root: str, i: int) -> Label:
    """Label of the i-th refund produced by an abort (never produced by a contract move)."""
    return Label(root, "R", terminal(i))


# --- actions ---------------------------------------------------------------------


class XAdvertise(NamedTuple):
    root: str

    def __str__(self):
        return f"advertise({self.root})"


class XCommit(NamedTuple):
    participant: str
    root: str
    lengths: tuple = ()  # ((secret, length or None), ...)

    def __str__(self):
        return f"commit({self.participant}, {self.root})"


class XSign(NamedTuple):
    participant: str
    root: str

    def __str__(self):
        return f"sign({self.participant}, {self.root})"


class XInit(NamedTuple):
    root: str

    def __str__(self):
        return f"initialize({self.root})"


class XAbort(NamedTuple):
    root: str

    def __str__(self):
        return f"abort({self.root})"


MOVES = ("dwithdraw", "split", "reveal", "cwithdraw", "skip")


class XMove(NamedTuple):
    kind: str
    label: Label

    def __str__(self):
        return f"{self.kind}({self.label})"


class XAuth(NamedTuple):
    participant: str
    label: Label

    def __str__(self):
        return f"auth({self.participant}, {self.label})"


class XRevealSecret(NamedTuple):
    participant: str
    name: str

    def __str__(self):
        return f"revealSecret({self.participant}, {self.name})"


XAction = Union[XAdvertise, XCommit, XSign, XInit, XAbort, XMove, XAuth, XRevealSecret]


# Named tuples compare as plain tuples, so advertise(k0), initialize(k0) and
# abort(k0) would be equal and collapse inside sets.  Actions compare by type too.
def _action_eq(self, other):
    return type(self) is type(other) and tuple.__eq__(self, other)


def _action_ne(self, other):
    return not _action_eq(self, other)


def _action_hash(self):
    return hash((type(self).__name__, *self))


for _cls in (XAdvertise, XCommit, XSign, XInit, XAbort, XMove, XAuth, XRevealSecret):
    _cls.__eq__, _cls.__ne__, _cls.__hash__ = _action_eq, _action_ne, _action_hash


# --- configurations --------------------------------------------------------------


class XConfig(NamedTuple):
    ads: frozenset = frozenset()  # advertised roots
    active: frozenset = frozenset()  # (label, balance)
    assigned: frozenset = frozenset()  # (participant, balance, label)
    commits: frozenset = frozenset()  # (participant, secret, length or None)
    revealed: frozenset = frozenset()  # (participant, secret, length)
    auths: frozenset = frozenset()  # (participant, label)
    committed: frozenset = frozenset()  # (participant, root)
    signed: frozenset = frozenset()  # (participant, root)
    used: frozenset = frozenset()  # roots ever advertised
    initialized: frozenset = frozenset()
    aborted: frozenset = frozenset()

    def active_at(self, label: Label):
        for k, b in self.active:
            if k == label:
                return b
        return None

    def lengths(self) -> dict[str, int]:
        return {s: n for _, s, n in self.revealed}

    def authorized(self, label: Label) -> frozenset:
        return frozenset(a for a, k in self.auths if k == label)


def _assignments_out(w: Withdraw, base: Label) -> frozenset:
    return frozenset((who, bal, base.child(terminal(i))) for i, (who, bal) in enumerate(w.assignments, start=1))


def left_prerequisites(u: Universe, conf: XConfig, label: Label) -> tuple[set[str], set[str], bool]:
    """Missing signers, missing secrets, and whether the predicate holds once everything is revealed."""
    signers, inner = strip_auth(u.option_at(label))
    missing_auth = set(signers) - conf.authorized(label)
    missing_secrets: set[str] = set()
    pred_ok = True
    if isinstance(inner, Reveal):
        env = conf.lengths()
        missing_secrets = {s for s in inner.secrets if s not in env}
        if not missing_secrets:
            try:
                pred_ok = eval_predicate(inner.predicate, env)
            except UnboundSecret:
                pred_ok = False
    return missing_auth, missing_secrets, pred_ok


def left_kind(u: Universe, label: Label) -> str:
    _, inner = strip_auth(u.option_at(label))
    if isinstance(inner, Withdraw):
        return "dwithdraw"
    if isinstance(inner, Split):
        return "split"
    return "reveal"


def x_enabled(u: Universe, conf: XConfig) -> set:
    out: set = set()
    for adv in u:
        r = adv.root
        if r not in conf.used:
            out.add(XAdvertise(r))
        if r in conf.ads:
            done = {a for a, k in conf.committed if k == r}
            for a in adv.participants:
                if a not in done:
                    out.add(XCommit(a, r, tuple((s, 0) for s in adv.pre.secrets_of(a))))
            if done >= set(adv.participants):
                signed = {a for a, k in conf.signed if k == r}
                for a in adv.participants:
                    if a not in signed:
                        out.add(XSign(a, r))
                if signed >= set(adv.participants):
                    out.add(XInit(r))
            out.add(XAbort(r))
    for label, _ in conf.active:
        c = u.contract_at(label)
        if isinstance(c, Withdraw):
            out.add(XMove("cwithdraw", label))
            continue
        out.add(XMove("skip", label))
        miss_auth, miss_sec, ok = left_prerequisites(u, conf, label)
        if not miss_auth and not miss_sec and ok:
            out.add(XMove(left_kind(u, label), label))
        for a in miss_auth:
            out.add(XAuth(a, label))
    revealed = {(a, s) for a, s, _ in conf.revealed}
    for a, s, n in conf.commits:
        if n is not None and (a, s) not in revealed:
            out.add(XRevealSecret(a, s))
    return out


def x_is_enabled(u: Universe, conf: XConfig, action) -> bool:
    if isinstance(action, XCommit):
        return XCommit(action.participant, action.root, ()) in {
            XCommit(a.participant, a.root, ()) for a in x_enabled(u, conf) if isinstance(a, XCommit)
        }
    return action in x_enabled(u, conf)


def x_step(u: Universe, conf: XConfig, action) -> XConfig:
    if not x_is_enabled(u, conf, action):
        raise NotEnabled(action)
    if isinstance(action, XAdvertise):
        return conf._replace(ads=conf.ads | {action.root}, used=conf.used | {action.root})
    if isinstance(action, XCommit):
        adv = u[action.root]
        given = dict(action.lengths)
        entries = frozenset((action.participant, s, given.get(s, 0)) for s in adv.pre.secrets_of(action.participant))
        return conf._replace(
            commits=conf.commits | entries, committed=conf.committed | {(action.participant, action.root)}
        )
    if isinstance(action, XSign):
        return conf._replace(signed=conf.signed | {(action.participant, action.root)})
    if isinstance(action, XInit):
        adv = u[action.root]
        total = Balance({c: adv.pre.total(c) for c in adv.chains})
        return conf._replace(
            ads=conf.ads - {action.root},
            active=conf.active | {(Label(action.root), total)},
            initialized=conf.initialized | {action.root},
        )
    if isinstance(action, XAbort):
        adv = u[action.root]
        refunds = frozenset(
            (d.participant, d.balance.on(adv.chains), refund_label(adv.root, i))
            for i, d in enumerate(adv.pre.deposits, start=1)
        )
        return conf._replace(
            ads=conf.ads - {action.root}, assigned=conf.assigned | refunds, aborted=conf.aborted | {action.root}
        )
    if isinstance(action, XAuth):
        return conf._replace(auths=conf.auths | {(action.participant, action.label)})
    if isinstance(action, XRevealSecret):
        n = next(n for a, s, n in conf.commits if a == action.participant and s == action.name)
        return conf._replace(revealed=conf.revealed | {(action.participant, action.name, n)})
    # contract moves
    label = action.label
    b = conf.active_at(label)
    rest = conf.active - {(label, b)}
    c = u.contract_at(label)
    if action.kind == "cwithdraw":
        return conf._replace(active=rest, assigned=conf.assigned | _assignments_out(c, label))
    if action.kind == "skip":
        return conf._replace(active=rest | {(label.child("R"), b)})
    node = label.child("L")
    _, inner = strip_auth(c.left)
    if action.kind == "dwithdraw":
        return conf._replace(active=rest, assigned=conf.assigned | _assignments_out(inner, node))
    if action.kind == "split":
        children = frozenset((node.child(i), bi.on(b.chains)) for i, (bi, _) in enumerate(inner.branches, start=1))
        return conf._replace(active=rest | children)
    return conf._replace(active=rest | {(node, b)})


def x_money(conf: XConfig, chains: Iterable[str]) -> tuple[Balance, Balance]:
    chains = tuple(chains)
    active = balance_sum((b for _, b in conf.active), chains)
    assigned = balance_sum((b for _, b, _ in conf.assigned), chains)
    return active, assigned


def x_inputs(u: Universe, conf: XConfig, chains: Iterable[str]) -> Balance:
    """Funds that entered contracts: initialized advertisements plus aborted (refunded) ones."""
    chains = tuple(chains)
    return balance_sum(
        (Balance({c: u[r].pre.total(c) for c in chains}) for r in conf.initialized | conf.aborted), chains
    )


@dataclass(frozen=True)
class XRun:
    """Append-only x-run: ``configs[i+1]`` results from ``actions[i]``."""

    universe: Universe = field(compare=False)
    configs: tuple = (XConfig(),)
    actions: tuple = ()

    @property
    def last(self) -> XConfig:
        return self.configs[-1]

    def extend(self, action) -> "XRun":
        nxt = x_step(self.universe, self.last, action)
        return XRun(self.universe, self.configs + (nxt,), self.actions + (action,))

    def __len__(self) -> int:
        return len(self.actions)
