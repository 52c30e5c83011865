import os
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[1]


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False,
        help="run tests marked slow (multi-hour sweeps)",
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running experiment-scale test")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def data_dir() -> Path:
    return Path(os.environ.get("KURAMOTO_GNN_DATA", REPO_ROOT / "data"))


def cora_bundle_path():
    """Path of the citation-network bundle, or None when not provided.

    The dataset is not redistributed with this repository; see README.md
    for the one-time conversion recipe that produces data/cora/.
    """
    path = data_dir() / "cora"
    return path if (path / "meta.json").is_file() else None


def require_cora():
    path = cora_bundle_path()
    if path is None:
        pytest.skip(
            "citation-network bundle not present (expected at data/cora; "
            "see README.md for how to build it)"
        )
    return path
