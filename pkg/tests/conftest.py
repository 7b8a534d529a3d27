"""
Общие фикстуры тестов
"""

import pytest

from app.levy_models import load_model
from app.resolvent import QuadratureEngine
from app.simulation import SimConfig


@pytest.fixture(autouse=True)
def quiet_environment(monkeypatch, tmp_path):
    """Без файла логов и журнала в рабочем каталоге"""
    monkeypatch.setenv("LOG_FILE", "")
    monkeypatch.setattr("app.config.DATABASE_PATH", str(tmp_path / "ledger.db"))


@pytest.fixture(scope="session")
def engine():
    return QuadratureEngine()


@pytest.fixture(scope="session")
def bm():
    return load_model("bm")


@pytest.fixture(scope="session")
def stable_sym():
    return load_model("stable-sym-1.5")


@pytest.fixture(scope="session")
def stable_asym():
    return load_model("stable-asym-1.5")


@pytest.fixture(scope="session")
def kou():
    return load_model("kou")


@pytest.fixture(scope="session")
def drifted():
    return load_model("bm-drift")


@pytest.fixture
def small_sim():
    """Уменьшенный ансамбль для Монте-Карло тестов"""
    return SimConfig(dt=2.5e-4, horizon=1.0, n_paths=4000, seed=12345, batch_size=1000, workers=2)
