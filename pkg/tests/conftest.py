import time
from dataclasses import dataclass
from pathlib import Path

import pytest

from maskcyclegan import toydata
from maskcyclegan.data import DatasetSpec
from maskcyclegan.training import TrainConfig, fit

SMOKE_ITERATIONS = 500
SMOKE_SEED = 1234


def smoke_config(data_root: Path, out_dir: Path) -> TrainConfig:
    """500-iteration desk-scale run on the 32x32 two-domain digit set."""
    return TrainConfig(
        dataset=DatasetSpec.from_layout(data_root, resolution=32),
        iterations=SMOKE_ITERATIONS,
        seed=SMOKE_SEED,
        base_width=32,
        out_dir=str(out_dir),
    )


@dataclass
class SmokeRuns:
    data_root: Path
    run1: Path
    run2: Path
    checkpoint: Path
    wall_seconds: float


@pytest.fixture(scope="session")
def accept_dataset(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("accept-data")
    toydata.make_dataset(root, n_train=500, n_test=100, size=32, seed=11)
    return root


@pytest.fixture(scope="session")
def smoke_runs(accept_dataset, tmp_path_factory) -> SmokeRuns:
    """Two identically seeded full smoke runs; the first is timed."""
    out = tmp_path_factory.mktemp("smoke")
    started = time.time()
    final = fit(smoke_config(accept_dataset, out / "run1"))
    wall = time.time() - started
    fit(smoke_config(accept_dataset, out / "run2"))
    return SmokeRuns(
        data_root=accept_dataset,
        run1=out / "run1",
        run2=out / "run2",
        checkpoint=final,
        wall_seconds=wall,
    )
