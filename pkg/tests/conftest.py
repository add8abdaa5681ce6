import sys
from fractions import Fraction
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rcprob.model import parse_model
from rcprob.props import parse_spec, DefinitionsDecl
from rcprob.build import instantiate, build_markov

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def srw_model():
    return parse_model((FIXTURES / "srw.rcm").read_text())


@pytest.fixture(scope="session")
def srw_spec():
    return parse_spec((FIXTURES / "srw.rcp").read_text())


@pytest.fixture(scope="session")
def srw_model_text():
    return (FIXTURES / "srw.rcm").read_text()


def make_srw(srw_model, srw_spec, *, maxdist=10, maxsteps=20, pl=Fraction(1, 2),
             defs="D_recharge", kind="dtmc", env=None):
    d = srw_spec.find(DefinitionsDecl, defs)
    closed = instantiate(srw_model,
                         {"MaxDist": maxdist, "MaxSteps": maxsteps, "Pl": pl},
                         d, env, kind, srw_spec)
    return closed, build_markov(closed)


@pytest.fixture(scope="session")
def srw_small(srw_model, srw_spec):
    """MaxDist=2, MaxSteps=4 instance: small enough for path enumeration."""
    return make_srw(srw_model, srw_spec, maxdist=2, maxsteps=4)


@pytest.fixture(scope="session")
def srw_default(srw_model, srw_spec):
    return make_srw(srw_model, srw_spec)


@pytest.fixture(scope="session")
def srw_mdp(srw_model, srw_spec):
    return make_srw(srw_model, srw_spec, kind="mdp")
