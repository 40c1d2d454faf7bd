"""Shared drivers for semantics-level tests."""

from bitmlx import corpus_path
from bitmlx.isem import Act
from bitmlx.simulate import Engine, Scenario
from bitmlx.strategy import ChoicePolicy
from bitmlx.surface import parse_file
from bitmlx.syntax import Label

K0 = Label("k0")


def engine(name="swap", honest=None, policy="left", delta=10, budget=200) -> Engine:
    """Engine for a corpus contract; the honest user defaults to the first participant."""
    adv = parse_file(corpus_path(name))
    return Engine(Scenario(adv, honest or adv.participants[0], ChoicePolicy.parse(policy), policy, delta, budget))


def drive(eng: Engine, actions):
    """Apply actions from the initial state; returns the final (conf, xconf, history) and the first violation."""
    state = eng.initial()
    for a in actions:
        state, v = eng.move(state, a)
        if v is not None:
            return state, v
    return state, None


def swap_init(honest="A", other="B"):
    """Both users stipulate the swap cooperatively; the honest user's own actions included."""
    acts = [
        Act("advertise", K0),
        Act("commit", K0, who=honest, arg=()),
        Act("commit", K0, who=other, arg=()),
    ]
    for c in ("BTC", "DGC"):
        acts += [Act("authInit", K0, c, honest), Act("authInit", K0, c, other)]
    acts += [Act("publish", K0, "BTC"), Act("publish", K0, "DGC")]
    acts += [Act("revealInit", K0, who=honest), Act("revealInit", K0, who=other)]
    acts += [Act("revealStep", K0, who=honest), Act("init", K0, "BTC"), Act("init", K0, "DGC")]
    return acts
