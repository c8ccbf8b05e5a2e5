import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nsdbias.densela import ALL_NORMS
from nsdbias.harness import ProbeSchedule, execute_run, standard_optimizers
from nsdbias.maxmargin_ref import solve_all_references
from nsdbias.synthdata import Dataset, GenConfig, generate

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_dataset(points, labels, k=None) -> Dataset:
    x = np.asarray(points, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    return Dataset(x, y, int(k or y.max()))


@pytest.fixture
def toy():
    """k=2, d=1: x=+1 in class 1, x=-1 in class 2."""
    return make_dataset([[1.0], [-1.0]], [1, 2])


@pytest.fixture(scope="session")
def small_ds():
    return generate(GenConfig(k=4, d=6, n_per_class=8, sigma=0.1, seed=7))


@pytest.fixture(scope="session")
def default_ds():
    return generate(GenConfig())


@pytest.fixture(scope="session")
def default_refs(default_ds):
    return solve_all_references(default_ds)


@pytest.fixture(scope="session")
def default_runs(default_ds, default_refs):
    """Full-batch, mu = 0, 20k-step runs of the four optimizers."""
    probes = ProbeSchedule()
    return {cfg.norm: execute_run(default_ds, default_refs, cfg, probes)
            for cfg in standard_optimizers(norms=ALL_NORMS)}
