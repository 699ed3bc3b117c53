"""アプリケーションのメインモジュール。

コマンドライン引数を解析してサブコマンドを実行し、例外を終了コードに変換します。
"""

import logging
import sys
from typing import List, Optional

from src.cli import build_parser, dispatch
from src.errors import EXIT_GENERAL, EXIT_OK, IbseError
from src.utils.config import AppConfig, get_config
from src.utils.logging_config import reconfigure_logging


def main(argv: Optional[List[str]] = None) -> int:
    """アプリケーションのエントリーポイント。

    Args:
        argv: コマンドライン引数（省略時はsys.argv）

    Returns:
        終了コード
    """
    args = build_parser().parse_args(argv)

    # 設定を読み込み、ログ設定を構成
    config = AppConfig(home=args.home) if args.home else get_config()
    # 引数による上書きはこの実行の間だけ有効
    config.apply_overrides(
        store_root=args.store, ledger_path=args.ledger, engine=args.engine
    )
    reconfigure_logging(config, verbose=args.verbose)

    logger = logging.getLogger(__name__)
    try:
        dispatch(args, config)
    except IbseError as e:
        logger.debug("コマンドが失敗しました", exc_info=True)
        print(f"エラー: {e}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.error(f"予期しないエラーが発生しました: {e}", exc_info=True)
        print(f"エラー: {e}", file=sys.stderr)
        return EXIT_GENERAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
