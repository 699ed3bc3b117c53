import logging
import sys
from typing import TYPE_CHECKING, List

from src.utils.paths import LOG_FILENAME

if TYPE_CHECKING:
    from src.utils.config import AppConfig

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"


def reconfigure_logging(config: "AppConfig", verbose: bool = False) -> None:
    """
    設定に基づいてロギング設定を構成する。

    コマンド実行時に最初に呼び出されます。
    既存のハンドラがあれば削除し、設定に基づいて新しいハンドラを追加します。
    標準出力は結果の出力に使うため、コンソールへのログは標準エラーに出します。

    Args:
        config: 設定オブジェクト
        verbose: Trueの場合は設定によらずDEBUGレベル
    """
    formatter = logging.Formatter(LOG_FORMAT)

    # ルートロガーを取得
    root_logger = logging.getLogger()

    # 既存のハンドラをすべて削除
    for handler in root_logger.handlers[:]:
        handler.close()
        root_logger.removeHandler(handler)

    log_level = (
        logging.DEBUG if verbose or config.enable_verbose_log else logging.WARNING
    )
    root_logger.setLevel(log_level)

    handlers: List[logging.Handler] = []

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    handlers.append(console_handler)

    # ファイルハンドラ（設定で有効な場合のみ）
    if config.enable_log_file:
        config.home_path.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(
            config.home_path / LOG_FILENAME, encoding="utf-8"
        )
        file_handler.setFormatter(formatter)
        handlers.append(file_handler)

    for handler in handlers:
        root_logger.addHandler(handler)
