import numpy as np
import pytest

from blockdict import OracleSpec, gen_oracle_dict


@pytest.fixture(scope="session")
def oracle_068():
    """The 30x60 oracle with blocks of 3 and intra-block correlation 0.68."""
    return gen_oracle_dict(OracleSpec(m=30, n_atoms=60, block_size=3, target_intra_corr=0.68, seed=7))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_dictionary(rng, m, n):
    a = rng.standard_normal((m, n))
    return a / np.linalg.norm(a, axis=0)


def block_orthonormal(rng, m, sizes):
    """Dictionary whose blocks are mutually orthogonal with orthonormal atoms."""
    q, _ = np.linalg.qr(rng.standard_normal((m, sum(sizes))))
    return q


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
