"""Shared helpers for the test suite."""

import numpy as np

from wsee.netgen import SystemConfig

# verdict lines from the acceptance tests, echoed after the run
ACCEPTANCE_VERDICTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)


def make_cfg(L, mu=4.0, pc=1.0, weights=None, **kw):
    return SystemConfig(num_bs=1, num_users=L, amp_inefficiency=mu,
                        static_power=pc, weights=weights, **kw)


def random_csi(rng, L, diag_scale=1.0):
    """Random positive CSI matrix with dominant diagonal, log-uniform spread."""
    H = 10.0 ** rng.uniform(-2, 0, size=(L, L))
    H[np.diag_indices(L)] = diag_scale * 10.0 ** rng.uniform(0, 2, size=L)
    return H
