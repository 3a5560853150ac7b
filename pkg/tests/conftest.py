import numpy as np
import pytest

from fshar import data, nn, transfer

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, printed at the end of the run."""

    def record(number, title, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        ACCEPTANCE_LINES.append((number, f"[{status}] criterion {number:2d}: {title} {detail}".rstrip()))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_source():
    """Source network trained on 4 synthetic classes plus the matching target pool."""
    batch = data.synth_generate(7, 20, T=8, C=2, noise_sd=0.3, seed=1)
    src, pool = data.split_domains(batch, data.SplitSpec(range(4), range(4, 7)))
    model = transfer.train_source(
        src, nn.TrainConfig(epochs=30), seed=0, sizes=dict(lstm_hidden=8, fc1=8, fc2=6)
    )
    return model, src, pool
