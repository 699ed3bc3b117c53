"""コマンドライン引数の解析モジュール。"""

import argparse
import re

from src.services.benchmark import DEFAULT_SIZES
from src.version import __version__

_SIZE_PATTERN = re.compile(r"^(\d+)([KkMm]?)$")
_SIZE_UNITS = {"": 1, "k": 1024, "m": 1024 * 1024}


def parse_size(text: str) -> int:
    """サイズ指定（例: 100K, 10M, 4096）をバイト数に変換します。

    KとMは2進接頭辞（1024, 1024*1024）として扱います。

    Raises:
        argparse.ArgumentTypeError: 形式が不正な場合
    """
    match = _SIZE_PATTERN.match(text.strip())
    if match is None:
        raise argparse.ArgumentTypeError(f"不正なサイズ指定です: {text!r}")
    return int(match.group(1)) * _SIZE_UNITS[match.group(2).lower()]


def build_parser() -> argparse.ArgumentParser:
    """ibseコマンドの引数パーサーを作成します。"""
    parser = argparse.ArgumentParser(
        prog="ibse",
        description="ID付き自己暗号化でファイルを暗号化・保存・復元します",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--home", help="ホームディレクトリ（既定: $IBSE_HOME または ~/.ibse）")
    parser.add_argument("--store", help="チャンクストアのディレクトリ")
    parser.add_argument("--ledger", help="台帳ファイルのパス")
    parser.add_argument(
        "--engine", choices=["native", "sandbox"], help="暗号化の実行経路"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="詳細ログを出力する")

    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True

    init = subparsers.add_parser("init", help="ウォレットを初期化してIDを表示する")
    init.add_argument("identity", nargs="?", help="使用するIDの上書き")

    add = subparsers.add_parser("add", help="ファイルを暗号化して保存・登録する")
    add.add_argument("file", help="暗号化するファイル")
    add.add_argument("key_output_path", help="データマップの出力先")

    get = subparsers.add_parser("get", help="アセットのファイルを復元する")
    get.add_argument("block", help="アセットID")
    get.add_argument("key", help="データマップのパス")
    get.add_argument("destination", help="出力先")

    subparsers.add_parser("ls", help="アセットの一覧を表示する")

    rm = subparsers.add_parser("rm", help="アセットを台帳から削除する")
    rm.add_argument("block", help="アセットID")

    verify = subparsers.add_parser("verify", help="アセットのチャンクを検証する")
    verify.add_argument("block", help="アセットID")

    bench = subparsers.add_parser("bench", help="暗号化時間を計測する")
    bench.add_argument(
        "--sizes",
        nargs="+",
        type=parse_size,
        default=list(DEFAULT_SIZES),
        help="ファイルサイズ（例: 100K 1M 10M）",
    )
    bench.add_argument("--runs", type=int, default=None, help="サイズごとの計測回数")
    bench.add_argument("--seed", type=int, default=None, help="コーパスの乱数シード")
    bench.add_argument("--out", default="report.csv", help="CSVの出力先")
    bench.add_argument(
        "--abi", action="store_true", help="サンドボックス経由の計測も行う"
    )
    return parser

