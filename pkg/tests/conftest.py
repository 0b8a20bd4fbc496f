import numpy as np
import pytest

from walkclip.datamodel import Dataset, GeoCoord, LocationRecord

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_dataset(seed: int, n_groups: int = 8, copies: int = 1, dims=(3, 2, 4)) -> Dataset:
    """Small dataset with arbitrary-looking floats, for serialization tests."""
    rng = np.random.default_rng(seed)
    recs = []
    for g in range(n_groups):
        coord = GeoCoord(float(rng.uniform(-90, 90)), float(rng.uniform(-180, 180)))
        score = float(rng.uniform(0, 100))
        for c in range(int(rng.integers(1, copies + 2))):
            recs.append(
                LocationRecord(
                    f"r{g}_{c}",
                    f"g{g}",
                    coord,
                    rng.standard_normal(dims[0]) * 10 ** rng.uniform(-5, 5),
                    rng.standard_normal(dims[1]),
                    rng.standard_normal(dims[2]),
                    score,
                )
            )
    return Dataset(tuple(recs), dims)


def rel_error(analytic, numeric) -> float:
    a = np.asarray(analytic, dtype=float).ravel()
    f = np.asarray(numeric, dtype=float).ravel()
    return float(np.max(np.abs(a - f) / np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-8)))


def norm_rel_error(analytic, numeric) -> float:
    """||a - f|| / max(||a||, ||f||); immune to round-off on near-zero entries."""
    a = np.asarray(analytic, dtype=float).ravel()
    f = np.asarray(numeric, dtype=float).ravel()
    return float(np.linalg.norm(a - f) / max(np.linalg.norm(a), np.linalg.norm(f), 1e-12))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
