import os

import pytest


@pytest.fixture(scope="module", autouse=True)
def _no_env_overrides():
    # keep ambient ANOMFORGE_* variables from shifting resolved configs;
    # module-scoped so it wraps module-scoped pipeline fixtures too
    with pytest.MonkeyPatch.context() as mp:
        for name in [n for n in os.environ if n.startswith("ANOMFORGE_")]:
            mp.delenv(name)
        yield
