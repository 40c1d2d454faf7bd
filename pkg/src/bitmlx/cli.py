"""Command-line front end.

Exit codes: 0 when everything passes, 1 for input errors (unparsable or
ill-formed contracts, bad options), 2 when a property check fails.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import CORPUS, corpus_path
from .analysis.payout import payout_sheet_is, payout_sheet_x
from .compiler import DEFAULT_DELTA, compile_advertisement, compiled_to_json, count_nodes, pretty_bitml
from .errors import BitmlxError, NotWellFormed, ParseError
from .simulate import DEFAULT_BUDGET, Engine, Scenario, campaign, exhaustive, read_trace, write_trace
from .strategy import DEEP_PROFILE, ChoicePolicy, RandomAdversary, ScriptedAdversary, load_script, partial_move_bob
from .surface import parse_file
from .wellformed import check_well_formed

EXIT_OK, EXIT_INPUT, EXIT_VIOLATION = 0, 1, 2

INVARIANTS = (
    "money_preservation",
    "money_preservation_x",
    "timeout_consistency",
    "round_based",
    "no_honest_compensation",
    "non_divergence",
    "coherence",
    "liquidity",
    "security",
)


class InputError(click.ClickException):
    exit_code = EXIT_INPUT


def _load(path: str):
    """Parse a contract file; bundled corpus names such as ``swap`` are accepted too."""
    p = Path(path)
    if not p.exists() and path in CORPUS:
        p = Path(str(corpus_path(path)))
    try:
        return parse_file(p)
    except FileNotFoundError:
        raise InputError(f"no such file: {path}")
    except ParseError as e:
        raise InputError(str(e))


def _emit(doc, out: str | None) -> None:
    text = json.dumps(doc, indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        click.echo(text)


@click.group()
@click.version_option(package_name="artifact")
def main() -> None:
    """Parse, compile, simulate and verify cross-chain BitMLx contracts."""


@main.command()
@click.argument("file")
def check(file: str) -> None:
    """Check well-formedness and print the report as JSON."""
    report = check_well_formed(_load(file))
    click.echo(json.dumps(report.to_json(), indent=2))
    sys.exit(EXIT_OK if report.ok else EXIT_INPUT)


@main.command(name="compile")
@click.argument("file")
@click.option("--chain", "chains", multiple=True, help="Restrict output to these chains.")
@click.option("--count-nodes", "with_counts", is_flag=True, help="Report compiled node counts per chain.")
@click.option("--delta", type=click.IntRange(min=1), default=DEFAULT_DELTA, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="Emit the compiled contracts as JSON.")
@click.option("--out", type=click.Path(dir_okay=False), help="Write output to this file.")
def compile_cmd(file: str, chains, with_counts: bool, delta: int, as_json: bool, out: str | None) -> None:
    """Compile to one BitML contract per chain."""
    adv = _load(file)
    unknown = set(chains) - set(adv.chains)
    if unknown:
        raise InputError(f"unknown chains: {', '.join(sorted(unknown))}")
    try:
        compiled = compile_advertisement(adv, delta)
    except NotWellFormed as e:
        click.echo(json.dumps(e.report.to_json(), indent=2))
        sys.exit(EXIT_INPUT)
    if as_json:
        _emit(compiled_to_json(compiled, chains or None, with_counts=with_counts), out)
        return
    parts = []
    for chain, co in compiled.chains.items():
        if chains and chain not in chains:
            continue
        parts.append(f"== {chain} ==")
        deps = ", ".join(f"<{d.participant}, {d.amount}> {d.name}" for d in co.deposits)
        parts.append(f"deposits: {deps}")
        parts.append(pretty_bitml(co.contract))
        if with_counts:
            parts.append("counts: " + json.dumps(count_nodes(co.contract)))
    text = "\n".join(parts)
    if out:
        Path(out).write_text(text + "\n")
    else:
        click.echo(text)


def _adversary(scheme: str, scenario: Scenario):
    """``random:<seed>[:deep]``, ``script:<file>`` (or ``script:partial-move-bob``), ``exhaustive:<rounds>``."""
    kind, _, rest = scheme.partition(":")
    if kind == "random":
        seed, _, profile = rest.partition(":")
        try:
            s = int(seed or 0)
        except ValueError:
            raise InputError(f"bad seed in {scheme!r}")
        if profile not in ("", "deep"):
            raise InputError(f"unknown random profile {profile!r}")
        return ("random", s, DEEP_PROFILE if profile == "deep" else ())
    if kind == "script":
        if rest == "partial-move-bob":
            # the cheater reveals its step secret only once the root choice times out
            adv = scenario.advertisement
            cheater = next(p for p in adv.participants if p != scenario.honest)
            t = adv.pre.t0 + 2 * scenario.delta
            return ("script", partial_move_bob(adv.root, cheater, t_reveal=t), None)
        try:
            return ("script", load_script(json.loads(Path(rest).read_text())), None)
        except (OSError, ValueError, KeyError) as e:
            raise InputError(f"cannot load script {rest!r}: {e}")
    if kind == "exhaustive":
        try:
            return ("exhaustive", int(rest or 3), None)
        except ValueError:
            raise InputError(f"bad round bound in {scheme!r}")
    raise InputError(f"unknown adversary {scheme!r}")


def _invariant_table(violation: dict | None, security: dict | None) -> dict:
    table = {name: "pass" for name in INVARIANTS}
    if violation is not None:
        table[violation["invariant"]] = "fail"
    if security is not None and not security["ok"]:
        table["security"] = "fail"
    return table


@main.command()
@click.argument("file", required=False)
@click.option("--honest", help="Honest participant (default: the first one).")
@click.option("--policy", default="left", show_default=True, help="Choice policy, e.g. 'skip; [k0,L]=left; x=1'.")
@click.option("--delta", type=click.IntRange(min=1), default=DEFAULT_DELTA, show_default=True)
@click.option("--t0", type=int, help="Override the start time of the contract.")
@click.option("--adversary", default="random:0", show_default=True,
              help="random:<seed>[:deep] | script:<file>|script:partial-move-bob | exhaustive:<rounds>")
@click.option("--campaign", "runs", type=click.IntRange(min=1), help="Run this many seeds starting at the given one.")
@click.option("--budget", type=click.IntRange(min=1), default=DEFAULT_BUDGET, show_default=True)
@click.option("--replay", type=click.Path(exists=True, dir_okay=False), help="Re-run a recorded trace.")
@click.option("--out", type=click.Path(file_okay=False), help="Directory for the trace and the report.")
@click.option("--json", "as_json", is_flag=True, help="Print the full report as JSON.")
def simulate(file, honest, policy, delta, t0, adversary, runs, budget, replay, out, as_json) -> None:
    """Run the honest compiled strategy against an adversary and check every invariant."""
    if replay:
        scenario, actions, _ = read_trace(replay)
        engine = Engine(scenario)
        result = engine.replay(actions)
        scheme = "replay"
    else:
        if file is None:
            raise InputError("a contract file is required unless --replay is given")
        adv = _load(file)
        if t0 is not None:
            adv = adv.with_timing(t0=t0)
        try:
            pol = ChoicePolicy.parse(policy)
            scenario = Scenario(adv, honest or adv.participants[0], pol, policy, delta, budget)
        except ValueError as e:
            raise InputError(str(e))
        engine = Engine(scenario)
        kind, arg, extra = _adversary(adversary, scenario)
        scheme = adversary
        if kind == "exhaustive":
            report = exhaustive(engine, arg)
            _finish({"mode": "exhaustive", **report.to_json()}, report.ok, out, as_json)
            return
        if runs:
            if kind != "random":
                raise InputError("--campaign needs a random adversary")
            rep = campaign(engine, range(arg, arg + runs))
            _finish({"mode": "campaign", **rep.to_json()}, rep.ok, out, as_json)
            return
        adversary_obj = RandomAdversary(arg, extra) if kind == "random" else ScriptedAdversary(arg)
        result = engine.run(adversary_obj)
    u = engine.universe
    doc = {
        "mode": "run",
        "adversary": scheme,
        **result.verdicts(),
        "invariants": _invariant_table(result.verdicts()["violation"], result.verdicts()["security"]),
        "payouts": {
            "is": payout_sheet_is(u, result.final).to_json() if result.final is not None else None,
            "x": payout_sheet_x(u, result.xfinal).to_json() if result.xfinal is not None else None,
        },
    }
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        write_trace(Path(out) / "trace.jsonl", engine.scenario, result, scheme)
    _finish(doc, result.ok, out, as_json)


def _finish(doc: dict, ok: bool, out: str | None, as_json: bool) -> None:
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "report.json").write_text(json.dumps(doc, indent=2) + "\n")
    if as_json:
        click.echo(json.dumps(doc, indent=2))
    else:
        click.echo(_summary(doc))
    sys.exit(EXIT_OK if ok else EXIT_VIOLATION)


def _summary(doc: dict) -> str:
    mode = doc["mode"]
    if mode == "campaign":
        return f"campaign: {doc['runs']} runs, {doc['failure_count']} failures, {doc['states']} states"
    if mode == "exhaustive":
        head = f"exhaustive: {doc['states']} states, {doc['leaves']} leaves"
        return head + (", all invariants hold" if doc["ok"] else f", violation {doc['violation'] or doc['security']}")
    lines = [f"{doc['steps']} steps, {doc['liquidation_steps']} liquidation steps"]
    for name, verdict in doc["invariants"].items():
        lines.append(f"  {name}: {verdict}")
    if doc["violation"]:
        lines.append(f"  first violation: {doc['violation']}")
    if doc["security"]:
        for row in doc["security"]["rows"]:
            lines.append(f"  {row['chain']}: intermediate net {row['is_net']}, BitMLx net {row['x_net']}")
    return "\n".join(lines)


@main.command()
@click.argument("trace", type=click.Path(exists=True, dir_okay=False))
@click.option("--json", "as_json", is_flag=True, help="Accepted for symmetry; the report is always JSON.")
def verify(trace: str, as_json: bool) -> None:
    """Re-check a recorded trace and compare with its recorded verdicts."""
    try:
        scenario, actions, recorded = read_trace(trace)
        result = Engine(scenario).replay(actions)
    except (ValueError, KeyError, BitmlxError) as e:
        raise InputError(f"cannot replay {trace}: {e}")
    verdicts = result.verdicts()
    same = recorded is None or all(recorded.get(k) == verdicts[k] for k in ("ok", "violation", "security"))
    doc = {
        **_invariant_table(verdicts["violation"], verdicts["security"]),
        "first_violation": verdicts["violation"],
        "matches_recorded": same,
    }
    click.echo(json.dumps(doc, indent=2))
    sys.exit(EXIT_OK if result.ok and same else EXIT_VIOLATION)


if __name__ == "__main__":
    main()
