import numpy as np
import pytest

from meshchan.config import ScenarioConfig
from meshchan.network import CostModel
from meshchan.optimal import AllocationProblem, Mode
from meshchan.routing import backhaul_hops, compute_routes
from meshchan.topology import build_from_positions
from meshchan.traffic import Flow


@pytest.fixture
def small_config():
    # 4 APs, 8 clients, short horizon: a full run takes well under a second
    return ScenarioConfig(n_aps=4, n_clients=8, ap_spacing=200.0, arena_w=600.0, arena_h=600.0,
                          horizon=8.0, warmup=2.0).validate()


def coupled_instance(seed: int, max_links: int = 6, max_channels: int = 3):
    """Seeded coupled allocation problem: 2..max_links decision links on a random layout.

    About a third of the instances carry background noise on one channel, which
    makes channel labels non-interchangeable.
    """
    rng = np.random.default_rng([seed, 99])
    target = int(rng.integers(2, max_links + 1))
    while True:
        n = int(rng.integers(5, 9))
        pos = [tuple(p) for p in rng.uniform(0, 500, size=(n, 2))]
        try:
            top = build_from_positions(pos, [], backhaul_range=250.0, radios=2, n_channels=12)
        except ValueError:
            continue
        if len(top.backhaul_links) >= target:
            break
    model = CostModel(top)
    pairs = [(int(a), int(b)) for a, b in rng.permutation([(i, j) for i in range(n)
                                                           for j in range(n) if i != j])]
    paths, links = [], set()
    for a, b in pairs:
        r = compute_routes(top, {}, [Flow(0, a, b)], model)[0]
        if r is None:
            continue
        p = tuple(l for _, _, l in backhaul_hops(top, r))
        if not p or p in paths or len(links | set(p)) > target:
            continue
        paths.append(p)
        links |= set(p)
        if len(links) == target:
            break
    k = int(rng.integers(2, max_channels + 1))
    channels = tuple(top.backhaul_channels[:k])
    if rng.random() < 1 / 3:
        top.external_dbm = {channels[int(rng.integers(k))]: float(rng.uniform(-90, -75))}
        model = CostModel(top)
    return AllocationProblem(paths, channels, Mode.COUPLED, model=model)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
