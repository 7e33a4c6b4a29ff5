import pytest

from consmax import _kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT compilation happens once here so timed tests stay honest
    _kernels.warmup()
