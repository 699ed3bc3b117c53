"""ibseのサブコマンドを実装するモジュール。

結果（ID・アセットID・一覧）は標準出力に、診断メッセージはログとして標準エラーに出力します。
"""

import argparse
import logging
import sys
import tempfile
from pathlib import Path
from typing import List, Optional, Sequence, TextIO

from src.errors import IntegrityError
from src.services.benchmark import (
    BenchReport,
    PathKind,
    fit_and_report,
    gen_corpus,
    run_bench,
)
from src.services.sandbox import DEFAULT_MAX_PAGES
from src.services.workflow import IbseClient, VerifyReport
from src.types import PathLike
from src.utils.config import AppConfig

logger = logging.getLogger(__name__)

OWNER_PREFIX_LENGTH = 16


def cmd_init(
    client: IbseClient,
    identity_override: Optional[str] = None,
    out: Optional[TextIO] = None,
) -> str:
    """ウォレットを初期化し、有効なIDを表示します。"""
    out = out or sys.stdout
    identity = client.init_identity(identity_override)
    print(identity, file=out)
    return identity


def cmd_add(
    client: IbseClient,
    file: PathLike,
    key_output_path: PathLike,
    out: Optional[TextIO] = None,
) -> str:
    """ファイルを登録し、アセットIDを最終行に表示します。"""
    out = out or sys.stdout
    asset = client.add_file(file, key_output_path)
    logger.info(f"データマップを出力しました: {key_output_path}")
    print(asset.id, file=out)
    return asset.id


def cmd_get(
    client: IbseClient, block: str, key: PathLike, destination: PathLike
) -> None:
    """アセットのファイルを復元します。"""
    client.get_file(block, key, destination)


def cmd_ls(client: IbseClient, out: Optional[TextIO] = None) -> List[str]:
    """アセットをID順に1行ずつ表示します。"""
    out = out or sys.stdout
    lines = [
        f"{a.id}  {a.owner[:OWNER_PREFIX_LENGTH]}  {len(a.cids)}"
        for a in client.list_assets()
    ]
    for line in lines:
        print(line, file=out)
    return lines


def cmd_rm(client: IbseClient, block: str) -> None:
    """アセットを台帳から削除します。"""
    client.remove_asset(block)


def cmd_verify(
    client: IbseClient, block: str, out: Optional[TextIO] = None
) -> VerifyReport:
    """アセットのチャンクを検証して結果を表示します。

    Raises:
        IntegrityError: 欠損または破損したチャンクがある場合
    """
    out = out or sys.stdout
    report = client.verify_asset(block)
    for cid, state in report.chunks:
        print(f"{cid}  {state}", file=out)
    if not report.ok:
        raise IntegrityError(f"アセット{block}のチャンクに問題があります")
    return report


def cmd_bench(
    sizes: Sequence[int],
    runs: int,
    out: PathLike,
    abi: bool = False,
    seed: int = 0,
    work_dir: Optional[PathLike] = None,
    max_pages: Optional[int] = None,
    stdout: Optional[TextIO] = None,
) -> BenchReport:
    """コーパスを生成して計測し、CSVレポートを出力します。"""
    stdout = stdout or sys.stdout
    with tempfile.TemporaryDirectory(prefix="ibse-bench-") as tmp:
        corpus_dir = Path(work_dir) if work_dir is not None else Path(tmp)
        corpus = gen_corpus(sizes, seed, corpus_dir)

        records = run_bench(corpus, runs, PathKind.NATIVE)
        if abi:
            records += run_bench(
                corpus, runs, PathKind.ABI, max_pages=max_pages or DEFAULT_MAX_PAGES
            )

    report = fit_and_report(records, out)
    for kind, fit in report.fits.items():
        print(
            f"{kind.value}: slope={fit.slope:.3e} s/B, "
            f"intercept={fit.intercept:.6f} s, R^2={fit.r_squared:.4f}",
            file=stdout,
        )
    for size, pct in sorted(report.overhead_pct.items()):
        print(f"overhead {size}: {pct:.2f}%", file=stdout)
    if report.overhead_trend_downward is not None:
        print(f"overhead trend downward: {report.overhead_trend_downward}", file=stdout)
    print(str(report.csv_path), file=stdout)
    return report


def dispatch(args: argparse.Namespace, config: AppConfig) -> None:
    """解析済みの引数に応じてサブコマンドを実行します。"""
    if args.command == "bench":
        cmd_bench(
            sizes=args.sizes,
            runs=args.runs if args.runs is not None else config.bench_runs,
            out=args.out,
            abi=args.abi,
            seed=args.seed if args.seed is not None else config.bench_seed,
            max_pages=config.sandbox_max_pages,
        )
        return

    client = IbseClient(config)
    if args.command == "init":
        cmd_init(client, args.identity)
    elif args.command == "add":
        cmd_add(client, args.file, args.key_output_path)
    elif args.command == "get":
        cmd_get(client, args.block, args.key, args.destination)
    elif args.command == "ls":
        cmd_ls(client)
    elif args.command == "rm":
        cmd_rm(client, args.block)
    elif args.command == "verify":
        cmd_verify(client, args.block)
    else:
        raise ValueError(f"未知のコマンドです: {args.command}")
