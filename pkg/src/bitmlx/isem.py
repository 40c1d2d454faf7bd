"""Timed intermediate semantics: one state machine per (chain, label).

A compiled contract is tracked per chain as a record with a status, a
logical balance and a deadline.  Priority choices move in two phases on
every chain: a step-secret reveal takes the contract to ``Left``, a timeout
to ``Right``; a ``Right`` contract can be slashed by anybody holding a
step secret that was revealed for the same node, possibly on another chain.

Step secrets of the option of the choice at ``k`` are keyed by ``k|L``;
the stipulation step secret is keyed by the root label.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .compiler import nodes
from .errors import NonPositiveDelay, NotEnabled, UnboundSecret
from .syntax import (
    Label,
    PriorityChoice,
    Reveal,
    Split,
    Withdraw,
    eval_predicate,
    strip_auth,
    terminal,
)
from .xsem import Universe, refund_label

DEFAULT_DELTA = 10

CHOICE, LEFT, RIGHT = "Choice", "Left", "Right"
SLASHED, COMPENSATED, ASSIGNED = "Slashed", "Compensated", "Assigned"
STIP_CHOICE, STIP_RIGHT = "StipChoice", "StipRight"
STIP_SLASHED, STIP_COMPENSATED, STIP_REFUNDED = "StipSlashed", "StipCompensated", "StipRefunded"

STIP_KINDS = frozenset({STIP_CHOICE, STIP_RIGHT, STIP_SLASHED, STIP_COMPENSATED, STIP_REFUNDED})
TERMINAL_KINDS = frozenset({ASSIGNED, SLASHED, COMPENSATED, STIP_REFUNDED, STIP_SLASHED, STIP_COMPENSATED})
#: statuses with no further move (slashed contracts still pay out their compensation)
FINAL_KINDS = TERMINAL_KINDS - {SLASHED, STIP_SLASHED}
#: statuses whose deadline is aligned with the round start (the rest are half a round later)
ALIGNED_KINDS = frozenset({CHOICE, LEFT, STIP_CHOICE})

#: allowed status transitions, used by the checkers
STATUS_GRAPH = {
    STIP_CHOICE: {CHOICE, STIP_RIGHT},
    STIP_RIGHT: {STIP_REFUNDED, STIP_SLASHED},
    STIP_SLASHED: {STIP_COMPENSATED},
    CHOICE: {LEFT, RIGHT, ASSIGNED, CHOICE},
    LEFT: {ASSIGNED, CHOICE},
    RIGHT: {CHOICE, SLASHED},
    SLASHED: {COMPENSATED},
}


class Status(NamedTuple):
    kind: str
    who: str | None = None

    def __str__(self) -> str:
        return f"{self.kind}({self.who})" if self.who else self.kind

    @property
    def terminal(self) -> bool:
        return self.kind in TERMINAL_KINDS

    @property
    def stip(self) -> bool:
        return self.kind in STIP_KINDS


class Record(NamedTuple):
    """State of one contract node on one chain."""

    chain: str
    label: Label
    balance: int
    status: Status
    time: int


class Act(NamedTuple):
    """An intermediate-semantics action; unused fields are ``None``."""

    kind: str
    label: Label | None = None
    chain: str | None = None
    who: str | None = None
    arg: object = None

    def __str__(self) -> str:
        parts = []
        if self.who is not None:
            parts.append(self.who)
        if self.label is not None:
            parts.append(str(self.label))
        if self.chain is not None:
            parts.append(self.chain)
        if self.arg is not None and self.kind != "commit":
            parts.append(str(self.arg))
        return f"{self.kind}({', '.join(parts)})"

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.label is not None:
            out["label"] = str(self.label)
        if self.chain is not None:
            out["chain"] = self.chain
        if self.who is not None:
            out["who"] = self.who
        if self.arg is not None:
            out["arg"] = [list(p) for p in self.arg] if self.kind == "commit" else self.arg
        return out

    @classmethod
    def from_json(cls, doc: dict) -> "Act":
        label = Label.parse(doc["label"]) if "label" in doc else None
        arg = doc.get("arg")
        if doc["kind"] == "commit" and arg is not None:
            arg = tuple((s, n) for s, n in arg)
        return cls(doc["kind"], label, doc.get("chain"), doc.get("who"), arg)


TIMED = frozenset({"iright", "right", "sright", "abort"})
MOVE_KINDS = frozenset({"dwithdraw", "cwithdraw", "reveal", "split", "right"})


class ISConfig(NamedTuple):
    t: int = 0
    ads: frozenset = frozenset()  # (root, chain) advertised and unpublished
    advertised: frozenset = frozenset()  # roots
    deposits: frozenset = frozenset()  # (participant, chain, name, amount)
    committed: frozenset = frozenset()  # (participant, root)
    commits: frozenset = frozenset()  # (participant, secret, length or None)
    revealed: frozenset = frozenset()  # (participant, secret, length)
    step_revealed: frozenset = frozenset()  # (participant, label)
    init_revealed: frozenset = frozenset()  # (participant, root)
    init_auths: frozenset = frozenset()  # (participant, root, chain)
    control_auths: frozenset = frozenset()  # (participant, label, chain)
    published: frozenset = frozenset()  # (root, chain)
    records: frozenset = frozenset()

    def record(self, chain: str, label: Label, stip: bool | None = None) -> Record | None:
        for r in self.records:
            if r.chain == chain and r.label == label and (stip is None or r.status.stip == stip):
                return r
        return None

    def lengths(self) -> dict[str, int]:
        return {s: n for _, s, n in self.revealed}

    def step_secret_owners(self, label: Label) -> frozenset:
        return frozenset(a for a, k in self.step_revealed if k == label)


def step_labels(u: Universe, root: str) -> frozenset:
    """Labels that carry step secrets for an advertisement, the root included."""
    r = Label(root)
    return frozenset(nodes(u[root].contract, r) | {r})


@dataclass
class ISSemantics:
    """Transition system over :class:`ISConfig` for a fixed universe of advertisements."""

    universe: Universe
    delta: int = DEFAULT_DELTA
    honest: frozenset = frozenset()
    _enabled_cache: dict = field(default_factory=dict, repr=False)
    _step_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._step_labels = {adv.root: step_labels(self.universe, adv.root) for adv in self.universe}

    # --- initial state ---------------------------------------------------------

    def required_deposit(self, root: str, participant: str, chain: str) -> int:
        adv = self.universe[root]
        n = len(adv.participants)
        return adv.pre.deposit_of(participant, chain) + adv.pre.total(chain) * max(n - 2, 0)

    def initial(self, t: int = 0) -> ISConfig:
        """Wallet deposits covering every advertisement's deposits plus collateral."""
        deps = set()
        for adv in self.universe:
            n = len(adv.participants)
            for d in adv.pre.deposits:
                for c in adv.chains:
                    deps.add((d.participant, c, d.name_on(c), d.balance[c] + adv.pre.total(c) * max(n - 2, 0)))
        return ISConfig(t=t, deposits=frozenset(deps))

    # --- helpers ---------------------------------------------------------------

    def _deposit_entries(self, root: str, chain: str) -> list[tuple]:
        adv = self.universe[root]
        n = len(adv.participants)
        return [
            (d.participant, chain, d.name_on(chain), d.balance[chain] + adv.pre.total(chain) * max(n - 2, 0))
            for d in adv.pre.deposits
        ]

    def _sigs_ok(self, conf: ISConfig, signers, label: Label, chain: str) -> bool:
        return all((a, label, chain) in conf.control_auths for a in signers)

    def _reveal_ok(self, conf: ISConfig, reveal: Reveal) -> bool:
        env = conf.lengths()
        if any(s not in env for s in reveal.secrets):
            return False
        try:
            return eval_predicate(reveal.predicate, env)
        except UnboundSecret:
            return False

    # --- enabled actions ---------------------------------------------------------

    def enabled(self, conf: ISConfig) -> frozenset:
        """All enabled actions; commits carry ``arg=None`` (lengths chosen by the committer) and
        ``Act('delay')`` stands for every positive delay."""
        cached = self._enabled_cache.get(conf)
        if cached is not None:
            return cached
        out = set(self._enabled(conf))
        out.add(Act("delay"))
        res = frozenset(out)
        self._enabled_cache[conf] = res
        return res

    def _enabled(self, conf: ISConfig):
        u = self.universe
        t = conf.t
        for adv in u:
            root = adv.root
            if root not in conf.advertised:
                if all(e in conf.deposits for c in adv.chains for e in self._deposit_entries(root, c)):
                    yield Act("advertise", Label(root))
                continue
            present = [c for c in adv.chains if (root, c) in conf.ads]
            committed = {a for a, r in conf.committed if r == root}
            if len(present) == len(adv.chains):
                for a in adv.participants:
                    if a not in committed:
                        yield Act("commit", Label(root), who=a)
            all_committed = committed >= set(adv.participants)
            for c in present:
                entries = self._deposit_entries(root, c)
                if all_committed:
                    for a in adv.participants:
                        if (a, root, c) not in conf.init_auths:
                            yield Act("authInit", Label(root), c, a)
                    if all((a, root, c) in conf.init_auths for a in adv.participants) and all(
                        e in conf.deposits for e in entries
                    ):
                        yield Act("publish", Label(root), c)
                for e in entries:
                    if e in conf.deposits:
                        yield Act("doubleSpend", Label(root), c, e[0])
            for a in committed:
                if (a, root) not in conf.init_revealed:
                    yield Act("revealInit", Label(root), who=a)
                for lab in self._step_labels[root]:
                    if (a, lab) not in conf.step_revealed:
                        yield Act("revealStep", lab, who=a)
        revealed = {(a, s) for a, s, _ in conf.revealed}
        for a, s, n in conf.commits:
            if n is not None and (a, s) not in revealed:
                yield Act("revealSecret", who=a, arg=s)
        for r in conf.records:
            yield from self._record_moves(conf, r, t)

    def _record_moves(self, conf: ISConfig, r: Record, t: int):
        kind = r.status.kind
        if kind in FINAL_KINDS:
            return
        label, chain = r.label, r.chain
        if kind == STIP_CHOICE:
            adv = self.universe[label.root]
            if conf.step_secret_owners(label) and all(
                (a, label.root) in conf.init_revealed for a in adv.participants
            ):
                yield Act("init", label, chain)
            if t >= r.time:
                yield Act("sright", label, chain)
            return
        if kind == STIP_RIGHT:
            if t >= r.time:
                yield Act("abort", label, chain)
            for a in conf.step_secret_owners(label):
                yield Act("sslash", label, chain, a)
            return
        if kind == STIP_SLASHED:
            yield Act("scompensate", label, chain, r.status.who)
            return
        if kind == SLASHED:
            yield Act("compensate", label, chain, r.status.who)
            return
        c = self.universe.contract_at(label)
        node = label.child("L")
        if kind == CHOICE:
            if isinstance(c, Withdraw):
                yield Act("cwithdraw", label, chain)
                return
            signers, inner = strip_auth(c.left)
            if conf.step_secret_owners(node) and self._sigs_ok(conf, signers, label, chain):
                if isinstance(inner, Reveal):
                    if self._reveal_ok(conf, inner):
                        yield Act("reveal", label, chain)
                else:
                    yield Act("ileft", label, chain)
            for a in signers:
                if (a, label, chain) not in conf.control_auths:
                    yield Act("authControl", label, chain, a)
            if t >= r.time:
                yield Act("iright", label, chain)
        elif kind == LEFT:
            _, inner = strip_auth(c.left)
            yield Act("dwithdraw" if isinstance(inner, Withdraw) else "split", label, chain)
        elif kind == RIGHT:
            if t >= r.time:
                yield Act("right", label, chain)
            for a in conf.step_secret_owners(node):
                yield Act("slash", label, chain, a)

    def is_enabled_action(self, conf: ISConfig, a: Act) -> bool:
        if a.kind == "delay":
            return isinstance(a.arg, int) and a.arg > 0
        if a.kind == "commit":
            if Act("commit", a.label, who=a.who) not in self.enabled(conf):
                return False
            lengths = dict(a.arg or ())
            own = self.universe[a.label.root].pre.secrets_of(a.who)
            if set(lengths) != set(own):
                return False
            if a.who in self.honest and any(n is None for n in lengths.values()):
                return False
            return all(n is None or (isinstance(n, int) and n >= 0) for n in lengths.values())
        return a in self.enabled(conf)

    # --- transitions -------------------------------------------------------------

    def step(self, conf: ISConfig, a: Act) -> ISConfig:
        key = (conf, a)
        cached = self._step_cache.get(key)
        if cached is not None:
            return cached
        if a.kind == "delay":
            if not isinstance(a.arg, int) or a.arg <= 0:
                raise NonPositiveDelay(a.arg)
            res = conf._replace(t=conf.t + a.arg)
        else:
            if not self.is_enabled_action(conf, a):
                raise NotEnabled(a)
            res = self._apply(conf, a)
        self._step_cache[key] = res
        return res

    def delay(self, conf: ISConfig, amount: int) -> ISConfig:
        return self.step(conf, Act("delay", arg=amount))

    def _apply(self, conf: ISConfig, a: Act) -> ISConfig:
        k = a.kind
        d = self.delta
        if k == "advertise":
            root = a.label.root
            return conf._replace(
                ads=conf.ads | {(root, c) for c in self.universe[root].chains},
                advertised=conf.advertised | {root},
            )
        if k == "commit":
            root = a.label.root
            entries = frozenset((a.who, s, n) for s, n in a.arg)
            return conf._replace(committed=conf.committed | {(a.who, root)}, commits=conf.commits | entries)
        if k == "authInit":
            return conf._replace(init_auths=conf.init_auths | {(a.who, a.label.root, a.chain)})
        if k == "publish":
            root = a.label.root
            adv = self.universe[root]
            rec = Record(a.chain, Label(root), adv.pre.total(a.chain), Status(STIP_CHOICE), adv.pre.t0)
            return conf._replace(
                ads=conf.ads - {(root, a.chain)},
                deposits=conf.deposits - set(self._deposit_entries(root, a.chain)),
                published=conf.published | {(root, a.chain)},
                records=conf.records | {rec},
            )
        if k == "doubleSpend":
            entry = next(e for e in self._deposit_entries(a.label.root, a.chain) if e[0] == a.who and e in conf.deposits)
            return conf._replace(deposits=conf.deposits - {entry})
        if k == "revealInit":
            return conf._replace(init_revealed=conf.init_revealed | {(a.who, a.label.root)})
        if k == "revealStep":
            return conf._replace(step_revealed=conf.step_revealed | {(a.who, a.label)})
        if k == "revealSecret":
            n = next(n for w, s, n in conf.commits if w == a.who and s == a.arg)
            return conf._replace(revealed=conf.revealed | {(a.who, a.arg, n)})
        if k == "authControl":
            return conf._replace(control_auths=conf.control_auths | {(a.who, a.label, a.chain)})

        stip = k in ("init", "sright", "abort", "sslash", "scompensate")
        r = conf.record(a.chain, a.label, stip=stip)
        rest = conf.records - {r}

        def put(*new: Record) -> ISConfig:
            return conf._replace(records=rest | set(new))

        if k == "init":
            return put(r._replace(status=Status(CHOICE), time=r.time + 2 * d))
        if k == "sright":
            return put(r._replace(status=Status(STIP_RIGHT), time=r.time + d))
        if k == "abort":
            adv = self.universe[a.label.root]
            return put(*(
                Record(a.chain, refund_label(adv.root, i), dep.balance[a.chain], Status(STIP_REFUNDED, dep.participant), r.time)
                for i, dep in enumerate(adv.pre.deposits, start=1)
            ))
        if k == "sslash":
            return put(r._replace(status=Status(STIP_SLASHED, a.who)))
        if k == "scompensate":
            return put(r._replace(status=Status(STIP_COMPENSATED, a.who)))
        if k == "ileft":
            return put(r._replace(status=Status(LEFT)))
        if k == "reveal":
            return put(r._replace(label=r.label.child("L"), time=r.time + 2 * d))
        if k == "iright":
            return put(r._replace(status=Status(RIGHT), time=r.time + d))
        if k == "right":
            return put(r._replace(label=r.label.child("R"), status=Status(CHOICE), time=r.time + d))
        if k == "slash":
            return put(r._replace(status=Status(SLASHED, a.who)))
        if k == "compensate":
            return put(r._replace(status=Status(COMPENSATED, a.who)))
        c = self.universe.contract_at(r.label)
        if k == "cwithdraw":
            return put(*_assigned(r, c, r.label))
        _, inner = strip_auth(c.left)
        node = r.label.child("L")
        if k == "dwithdraw":
            return put(*_assigned(r, inner, node))
        if k == "split":
            return put(*(
                Record(r.chain, node.child(i), bi[r.chain], Status(CHOICE), r.time + 2 * d)
                for i, (bi, _) in enumerate(inner.branches, start=1)
            ))
        raise NotEnabled(a)


def _assigned(r: Record, w: Withdraw, base: Label) -> list[Record]:
    return [
        Record(r.chain, base.child(terminal(i)), bal[r.chain], Status(ASSIGNED, who), r.time)
        for i, (who, bal) in enumerate(w.assignments, start=1)
    ]


@dataclass(frozen=True)
class ISRun:
    """Append-only intermediate run."""

    sem: ISSemantics = field(compare=False)
    configs: tuple = ()
    actions: tuple = ()

    @classmethod
    def start(cls, sem: ISSemantics, conf: ISConfig | None = None) -> "ISRun":
        return cls(sem, (conf if conf is not None else sem.initial(),), ())

    @property
    def last(self) -> ISConfig:
        return self.configs[-1]

    def extend(self, a: Act) -> "ISRun":
        return ISRun(self.sem, self.configs + (self.sem.step(self.last, a),), self.actions + (a,))

    def prefix(self, n: int) -> "ISRun":
        return ISRun(self.sem, self.configs[: n + 1], self.actions[:n])

    def __len__(self) -> int:
        return len(self.actions)


def round_depth(label: Label) -> int:
    """Round index of a live contract node (0 for the stipulation, 1 for the initialized root)."""
    return label.depth + 1


def expected_time(t0: int, delta: int, r: Record) -> int:
    depth = 0 if r.status.stip else round_depth(r.label)
    s = 0 if r.status.kind in ALIGNED_KINDS else 1
    return t0 + (2 * depth + s) * delta


def chain_money(conf: ISConfig, chain: str, root: str | None = None) -> int:
    return sum(r.balance for r in conf.records if r.chain == chain and (root is None or r.label.root == root))
