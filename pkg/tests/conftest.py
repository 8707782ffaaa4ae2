import numpy as np
import pytest

from dissim.cases import consensus_network, oscillator_ring
from dissim.hybrid_model import AuxiliarySystem, JumpDiffusionSystem
from dissim.storage import StorageCertificate


@pytest.fixture(scope="session")
def consensus():
    return consensus_network()


@pytest.fixture(scope="session")
def ring():
    return oscillator_ring()


def member(case, i=0):
    """``(sys, abs_sys, cert)`` of subsystem ``i``."""
    return (case.net.subsystems[i], case.builds[i].abs_sys,
            case.net.certs[i])


def random_instance(rng, n=3, nh=2, l=2, jumps=False, noise=False):
    """Random linear jump-free pair with a dynamic supply rate; every
    matrix is drawn so that the dimensions are generic."""
    g = rng.standard_normal
    F = g((n, n))
    sys = JumpDiffusionSystem(
        A=g((n, n)), B=g((n, 2)), C1=g((1, n)), C2=g((1, n)), D=g((n, 1)),
        G=g(n) if noise else None, R=[g(n)] if jumps else None,
        lam=[1.5] if jumps else None)
    abs_sys = JumpDiffusionSystem(
        A=g((nh, nh)), B=g((nh, 1)), C1=g((1, nh)), C2=g((1, nh)),
        D=g((nh, 1)))
    aux = AuxiliarySystem(-np.eye(l) + 0.1 * g((l, l)), g((l, 2)), g((2, l)),
                          g((2, 2)), 1) if l else AuxiliarySystem.static(1, 1)
    Lam = np.eye(l) + 0.1 * np.diag(rng.uniform(size=l)) if l else None
    cert = StorageCertificate(
        Mhat=F @ F.T + np.eye(n), K=g((2, n)), X=np.diag([1.0, -1.0]),
        L1=np.zeros((2, 0)), Z=sys.D, W=np.eye(1), What=np.eye(1),
        H=np.eye(1), L2=np.zeros((2, 0)), Q=g((2, nh)), P=g((n, nh)),
        aux=aux, kappa_hat=1.0, kappa_bar=1.0 if l else 0.0, Lambda=Lam)
    return sys, abs_sys, cert


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
