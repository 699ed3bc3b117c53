"""CLIモジュールパッケージ

ibseコマンドの引数解析とサブコマンドの実装を提供する
モジュールのコレクション。
"""

from src.cli.commands import dispatch
from src.cli.parser import build_parser

__all__ = ["build_parser", "dispatch"]
