"""テスト全体で使用するフィクスチャ。"""

import tempfile
from pathlib import Path
from typing import Iterator

import pytest

import src.utils.config as config_module
from src.utils.config import AppConfig


@pytest.fixture
def home(monkeypatch: pytest.MonkeyPatch) -> Iterator[Path]:
    """一時ディレクトリをホームとして使用する。"""
    with tempfile.TemporaryDirectory() as tmpdir:
        monkeypatch.setenv("IBSE_HOME", tmpdir)
        config_module._CONFIG = None
        yield Path(tmpdir).resolve()
        config_module._CONFIG = None


@pytest.fixture
def config(home: Path) -> AppConfig:
    return AppConfig(home=str(home))
