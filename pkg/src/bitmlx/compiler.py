"""Compilation of a BitMLx advertisement into one BitML contract per chain.

Every guarded option is compiled into a sum of reveals, one per participant,
each guarded by that participant's step secret for the option's label.  A
priority choice ``D >> C`` becomes::

    D' + after(t+d): tau(Comp + after(t+2d): tau(C'))

where ``Comp`` pays the funds to the others as soon as someone presents the
step secret of a participant who moved on another chain.  Each participant
locks ``(n-2) * b`` extra coins per chain so compensations stay funded.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace

from .errors import NotWellFormed
from .syntax import (
    Advertisement,
    Auth,
    BAfter,
    BAuth,
    BChoice,
    BGuarded,
    BReveal,
    BSplit,
    BTau,
    BWithdraw,
    Contract,
    Guarded,
    InitSecret,
    Label,
    PriorityChoice,
    PTrue,
    Reveal,
    Split,
    StepSecret,
    Withdraw,
    predicate_secrets,
)
from .surface import print_predicate
from .wellformed import check_well_formed

DEFAULT_DELTA = 10


@dataclass(frozen=True)
class CompilerSettings:
    participants: tuple[str, ...]
    balance: int
    collateral: int
    current_time: int
    time_elapse: int
    current_label: Label
    step_secrets: frozenset[StepSecret] = field(repr=False)
    init_secrets: frozenset[InitSecret] = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.participants)

    @property
    def held(self) -> int:
        """Coins the compiled contract actually governs: the balance plus every collateral."""
        return self.balance + self.n * self.collateral


def collateral_for(n: int, balance: int) -> int:
    return max(n - 2, 0) * balance


def nodes(c: Contract, label: Label) -> set[Label]:
    """Labels of guarded options, i.e. the nodes that carry step secrets."""
    if isinstance(c, PriorityChoice):
        return nodes_guarded(c.left, label.child("L")) | nodes(c.right, label.child("R"))
    return set()


def nodes_guarded(d: Guarded, label: Label) -> set[Label]:
    if isinstance(d, Split):
        out = {label}
        for i, (_, ci) in enumerate(d.branches, start=1):
            out |= nodes(ci, label.child(i))
        return out
    if isinstance(d, Reveal):
        return {label} | nodes(d.continuation, label)
    if isinstance(d, Auth):
        return nodes_guarded(d.inner, label)
    return {label}


def initial_settings(adv: Advertisement, chain: str, delta: int = DEFAULT_DELTA) -> CompilerSettings:
    parts = adv.participants
    b = adv.pre.total(chain)
    root = Label(adv.root)
    labels = nodes(adv.contract, root) | {root}
    return CompilerSettings(
        participants=parts,
        balance=b,
        collateral=collateral_for(len(parts), b),
        current_time=adv.pre.t0,
        time_elapse=delta,
        current_label=root,
        step_secrets=frozenset(StepSecret(a, k) for a in parts for k in labels),
        init_secrets=frozenset(InitSecret(a, adv.root) for a in parts),
    )


def _step_secrets_here(omega: CompilerSettings) -> list[StepSecret]:
    return [
        StepSecret(a, omega.current_label)
        for a in omega.participants
        if StepSecret(a, omega.current_label) in omega.step_secrets
    ]


def _split(amounts: list[tuple[int, str]]) -> BSplit:
    """Split into withdraws, dropping zero shares."""
    return BSplit(tuple((v, BChoice((BWithdraw(a),))) for v, a in amounts if v > 0))


def compile_out(assignments, omega: CompilerSettings, chain: str) -> list[tuple[int, str]]:
    """Per-participant payout on ``chain``: assigned amount plus collateral, zeros pruned."""
    assigned: dict[str, int] = {}
    for who, bal in assignments:
        assigned[who] = assigned.get(who, 0) + bal[chain]
    out = [(assigned.get(a, 0) + omega.collateral, a) for a in omega.participants]
    return [(v, a) for v, a in out if v > 0]


def compile_toplevel(c: Contract, omega: CompilerSettings, chain: str) -> BChoice:
    if isinstance(c, Withdraw):
        return BChoice((_split(compile_out(c.assignments, omega, chain)),))
    t, d = omega.current_time, omega.time_elapse
    here = omega.current_label
    omega_d = replace(omega, current_time=t + 2 * d, current_label=here.child("L"))
    omega_c = replace(omega, current_time=t + 2 * d, current_label=here.child("R"))
    left = compile_guarded(c.left, omega_d, chain)
    skip = BAfter(
        t + d,
        BTau(BChoice((*compile_compensation(omega_d, chain).branches,
                      BAfter(t + 2 * d, BTau(compile_toplevel(c.right, omega_c, chain)))))),
    )
    return BChoice((*left.branches, skip))


def compile_guarded(d: Guarded, omega: CompilerSettings, chain: str) -> BChoice:
    if isinstance(d, Withdraw):
        body = _split(compile_out(d.assignments, omega, chain))
        return BChoice(tuple(BReveal((s,), PTrue(), BChoice((body,))) for s in _step_secrets_here(omega)))
    if isinstance(d, Split):
        n = omega.n
        children = []
        for i, (bal, ci) in enumerate(d.branches, start=1):
            b_i = bal[chain]
            c_i = collateral_for(n, b_i)
            mu = b_i + n * c_i
            if mu == 0:
                continue
            omega_i = replace(omega, balance=b_i, collateral=c_i, current_label=omega.current_label.child(i))
            children.append((mu, compile_toplevel(ci, omega_i, chain)))
        body = BSplit(tuple(children))
        return BChoice(tuple(BReveal((s,), PTrue(), BChoice((body,))) for s in _step_secrets_here(omega)))
    if isinstance(d, Auth):
        inner = compile_guarded(d.inner, omega, chain)
        return BChoice(tuple(BAuth(tuple(d.signers), g) for g in inner.branches))
    if isinstance(d, Reveal):
        cont = compile_toplevel(d.continuation, omega, chain)
        return BChoice(
            tuple(BReveal((*d.secrets, s), d.predicate, cont) for s in _step_secrets_here(omega))
        )
    raise TypeError(f"not a guarded contract: {d!r}")


def compile_compensation(omega: CompilerSettings, chain: str) -> BChoice:
    """One clause per participant: their step secret releases the held funds to everybody else."""
    clauses = []
    others_count = omega.n - 1
    share = omega.held // others_count if others_count else 0
    for s in _step_secrets_here(omega):
        others = [(share, a) for a in omega.participants if a != s.owner]
        body = _split(others)
        if body.branches:
            clauses.append(BReveal((s,), PTrue(), BChoice((body,))))
    return BChoice(tuple(clauses))


def compile_refund(adv: Advertisement, omega: CompilerSettings, chain: str) -> BChoice:
    refunds = tuple((d.participant, d.balance) for d in adv.pre.deposits)
    return BChoice((_split(compile_out(refunds, omega, chain)),))


def compile_stipulation(adv: Advertisement, omega: CompilerSettings, chain: str) -> BChoice:
    """Start guard: all init secrets plus one stipulation step secret, else compensation then refund."""
    t, d = omega.current_time, omega.time_elapse
    init = tuple(sorted(omega.init_secrets, key=lambda s: adv.participants.index(s.owner)))
    omega_run = replace(omega, current_time=t + 2 * d)
    body = compile_toplevel(adv.contract, omega_run, chain)
    start = [BReveal((*init, s), PTrue(), body) for s in _step_secrets_here(omega)]
    refund = compile_refund(adv, omega_run, chain)
    skip = BAfter(
        t + d,
        BTau(BChoice((*compile_compensation(omega_run, chain).branches,
                      BAfter(t + 2 * d, BTau(refund))))),
    )
    return BChoice((*start, skip))


@dataclass(frozen=True)
class BitmlDeposit:
    participant: str
    amount: int
    name: str


@dataclass(frozen=True)
class ChainOutput:
    chain: str
    settings: CompilerSettings
    deposits: tuple[BitmlDeposit, ...]
    secrets: tuple[tuple[str, str], ...]
    contract: BChoice


@dataclass(frozen=True)
class CompiledAdvertisement:
    advertisement: Advertisement
    chains: dict
    shared_secrets: tuple

    def __getitem__(self, chain: str) -> ChainOutput:
        return self.chains[chain]


def compile_preconditions(adv: Advertisement, omega: CompilerSettings, chain: str) -> tuple[BitmlDeposit, ...]:
    return tuple(
        BitmlDeposit(d.participant, d.balance[chain] + omega.collateral, d.name_on(chain)) for d in adv.pre.deposits
    )


def global_secrets(adv: Advertisement) -> tuple:
    root = Label(adv.root)
    labels = sorted(nodes(adv.contract, root) | {root}, key=lambda k: (len(k), str(k)))
    step = [StepSecret(a, k) for k in labels for a in adv.participants]
    init = [InitSecret(a, adv.root) for a in adv.participants]
    return (*step, *init)


def compile_advertisement(adv: Advertisement, delta: int = DEFAULT_DELTA) -> CompiledAdvertisement:
    report = check_well_formed(adv)
    if not report.ok:
        raise NotWellFormed(report)
    outputs = {}
    for chain in adv.chains:
        omega = initial_settings(adv, chain, delta)
        outputs[chain] = ChainOutput(
            chain,
            omega,
            compile_preconditions(adv, omega, chain),
            adv.pre.secrets,
            compile_stipulation(adv, omega, chain),
        )
    return CompiledAdvertisement(adv, outputs, global_secrets(adv))


# --- inspection ------------------------------------------------------------------


def iter_guarded(c: BChoice):
    """Every guarded node of a compiled contract, outermost first."""
    for g in c.branches:
        yield from _iter_g(g)


def _iter_g(g: BGuarded):
    yield g
    if isinstance(g, (BReveal, BTau)):
        yield from iter_guarded(g.continuation)
    elif isinstance(g, BSplit):
        for _, sub in g.branches:
            yield from iter_guarded(sub)
    elif isinstance(g, (BAuth, BAfter)):
        yield from _iter_g(g.inner)


def count_nodes(c: BChoice) -> dict[str, int]:
    tally = Counter({"reveal": 0, "split": 0, "withdraw": 0, "tau": 0, "after": 0, "auth": 0})
    for g in iter_guarded(c):
        if isinstance(g, BReveal):
            tally["reveal"] += 1
        elif isinstance(g, BSplit):
            tally["split"] += 1
        elif isinstance(g, BWithdraw):
            tally["withdraw"] += 1
        elif isinstance(g, BTau):
            tally["tau"] += 1
        elif isinstance(g, BAfter):
            tally["after"] += 1
        elif isinstance(g, BAuth):
            tally["auth"] += 1
    out = dict(tally)
    out["total"] = sum(tally.values())
    return out


def _secret(s) -> str:
    return str(s)


def contract_to_json(c: BChoice):
    return [_guarded_json(g) for g in c.branches]


def _guarded_json(g: BGuarded) -> dict:
    if isinstance(g, BReveal):
        out = {"reveal": [_secret(s) for s in g.secrets]}
        if not isinstance(g.predicate, PTrue):
            out["if"] = print_predicate(g.predicate)
        out["then"] = contract_to_json(g.continuation)
        return out
    if isinstance(g, BTau):
        return {"tau": contract_to_json(g.continuation)}
    if isinstance(g, BSplit):
        return {"split": [{"amount": v, "then": contract_to_json(sub)} for v, sub in g.branches]}
    if isinstance(g, BAuth):
        return {"auth": list(g.signers), "then": _guarded_json(g.inner)}
    if isinstance(g, BAfter):
        return {"after": g.time, "then": _guarded_json(g.inner)}
    if isinstance(g, BWithdraw):
        return {"withdraw": g.participant}
    raise TypeError(f"not a BitML guarded contract: {g!r}")


def compiled_to_json(out: CompiledAdvertisement, chains=None, with_counts: bool = False) -> dict:
    doc = {}
    for chain, co in out.chains.items():
        if chains and chain not in chains:
            continue
        entry = {
            "preconditions": {
                "deposits": [{"participant": d.participant, "amount": d.amount, "name": d.name} for d in co.deposits],
                "secrets": [{"participant": a, "name": s} for a, s in co.secrets],
                "collateral": co.settings.collateral,
            },
            "contract": contract_to_json(co.contract),
            "secrets": [_secret(s) for s in out.shared_secrets],
        }
        if with_counts:
            entry["counts"] = count_nodes(co.contract)
        doc[chain] = entry
    return doc


def pretty_bitml(c: BChoice, indent: int = 0) -> str:
    """Indented human-readable rendering of a compiled contract."""
    lines: list[str] = []
    _pretty_choice(c, indent, lines)
    return "\n".join(lines)


def _pretty_choice(c: BChoice, indent: int, lines: list[str]) -> None:
    for i, g in enumerate(c.branches):
        _pretty_guarded(g, indent, lines, "+ " if i else "  ")


def _pretty_guarded(g: BGuarded, indent: int, lines: list[str], lead: str, prefix: str = "") -> None:
    pad = " " * indent + lead + prefix
    if isinstance(g, BAuth):
        _pretty_guarded(g.inner, indent, lines, lead, prefix + f"{', '.join(g.signers)}: ")
    elif isinstance(g, BAfter):
        _pretty_guarded(g.inner, indent, lines, lead, prefix + f"after {g.time}: ")
    elif isinstance(g, BWithdraw):
        lines.append(pad + f"withdraw {g.participant}")
    elif isinstance(g, BTau):
        lines.append(pad + "tau .")
        _pretty_choice(g.continuation, indent + 4, lines)
    elif isinstance(g, BReveal):
        cond = "" if isinstance(g.predicate, PTrue) else f" if {print_predicate(g.predicate)}"
        lines.append(pad + f"reveal {' '.join(map(str, g.secrets))}{cond} .")
        _pretty_choice(g.continuation, indent + 4, lines)
    elif isinstance(g, BSplit):
        lines.append(pad + "split")
        for v, sub in g.branches:
            lines.append(" " * (indent + 4) + f"{v} ->")
            _pretty_choice(sub, indent + 8, lines)


def render_clause(g: BGuarded) -> str:
    """One-line rendering such as ``reveal s^A_[k0,L] . split[1 -> withdraw B]``."""
    if isinstance(g, BReveal):
        secrets = " ".join(str(s) for s in g.secrets) or "[]"
        return f"reveal {secrets} . {render_choice(g.continuation)}"
    if isinstance(g, BTau):
        return f"tau . ({render_choice(g.continuation)})"
    if isinstance(g, BSplit):
        return "split[" + ", ".join(f"{v} -> {render_choice(sub)}" for v, sub in g.branches) + "]"
    if isinstance(g, BAuth):
        return f"{', '.join(g.signers)}: {render_clause(g.inner)}"
    if isinstance(g, BAfter):
        return f"after {g.time}: {render_clause(g.inner)}"
    return f"withdraw {g.participant}"


def render_choice(c: BChoice) -> str:
    return " + ".join(render_clause(g) for g in c.branches)


def referenced_secrets(c: BChoice) -> set:
    out = set()
    for g in iter_guarded(c):
        if isinstance(g, BReveal):
            out |= set(g.secrets)
            out |= set(predicate_secrets(g.predicate))
    return out
