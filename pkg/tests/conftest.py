import dataclasses
import os
import sys

import pytest
from hypothesis import HealthCheck, settings

from artifact import lll
from artifact.core import AnalysisConstants, min_colors
from artifact.decomposition import GenParams, generate
from artifact.runtime import Runtime

sys.path.insert(0, os.path.dirname(__file__))

# Every event predicate is watched: reading outside its declared variables raises.
lll.STRICT_ACCESS = True

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def desk():
    return AnalysisConstants.desk().effective()


def make_runtime(params: GenParams, seed=0, consts=None, **kw):
    k = (consts or AnalysisConstants.desk()).effective()
    c = params.c or min_colors(params.delta)
    g, d = generate(dataclasses.replace(params, c=c), k)
    return Runtime(g, d, k, seed=seed, strict=True, num_colors=c, **kw)


@pytest.fixture
def small_params():
    """n=600, Delta=36 with two cliques per tier; a few seconds end to end at most."""
    return GenParams(n=600, delta=36, cliques_H=2, cliques_L=2, seed=3, cross_edges=4, fill_BH=12, fill_BL=12)
