import os
from pathlib import Path
from typing import Optional

from src.types import PathLike

HOME_ENV_VAR = "IBSE_HOME"
DEFAULT_HOME_DIRNAME = ".ibse"
CONFIG_FILENAME = "config.json"
LOG_FILENAME = "ibse.log"


def get_default_home() -> Path:
    """
    既定のホームディレクトリを取得する。
    環境変数IBSE_HOMEが設定されていればそれを、なければ~/.ibseを返す。

    Returns:
        Path: ホームディレクトリのパス
    """
    override = os.environ.get(HOME_ENV_VAR)
    if override:
        return Path(override).expanduser()
    return Path.home() / DEFAULT_HOME_DIRNAME


def resolve_home(explicit: Optional[PathLike] = None) -> Path:
    """
    ホームディレクトリを決定する。明示された値が最優先。

    Args:
        explicit: 明示されたホームディレクトリ

    Returns:
        Path: 絶対パスに変換したホームディレクトリ
    """
    home = Path(explicit).expanduser() if explicit else get_default_home()
    return home.resolve()
