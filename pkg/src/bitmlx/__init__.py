"""Cross-chain BitMLx contracts: parsing, compilation to per-chain BitML,
both execution semantics, honest strategies, and executable checkers."""

from importlib import resources

__version__ = "0.1.0"

CORPUS = ("swap", "donate", "donate_agreed", "exchange", "loan")


def corpus_path(name: str):
    """Path of a bundled example contract."""
    return resources.files(__package__).joinpath("corpus", f"{name}.bx")
