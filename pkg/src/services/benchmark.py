"""暗号化処理のベンチマークを行うモジュール。

ファイルサイズごとの暗号化時間を計測し、サイズと時間の線形回帰、
ネイティブ実行に対するサンドボックス実行のオーバーヘッドを求めてCSVに出力します。
"""

import csv
import logging
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from src.errors import InputTooSmall, InsufficientData, StorageFailure
from src.services.data_map import serialize_datamap
from src.services.sandbox import DATA_MAP_FILENAME, DEFAULT_MAX_PAGES
from src.services.sandbox_host import SandboxWrapper, encrypt_file
from src.services.self_encryption import MIN_INPUT_SIZE, self_encrypt
from src.types import PathLike

logger = logging.getLogger(__name__)

KIB = 1024
MIB = 1024 * 1024

# 100KB〜100MBの10サイズ
DEFAULT_SIZES: List[int] = [
    100 * KIB,
    250 * KIB,
    500 * KIB,
    750 * KIB,
    1 * MIB,
    10 * MIB,
    25 * MIB,
    50 * MIB,
    75 * MIB,
    100 * MIB,
]

DEFAULT_RUNS = 10
MIN_FIT_SIZES = 3
CSV_COLUMNS = ["size_bytes", "path_kind", "runs", "mean_s", "stddev_s", "overhead_pct"]

# 計測用の固定ID
BENCH_IDENTITY = b"ibse-bench-identity"


class PathKind(Enum):
    """計測対象の実行経路。"""

    NATIVE = "native"
    ABI = "abi"


@dataclass(frozen=True)
class BenchRecord:
    """1サイズ分の計測結果。"""

    size_bytes: int
    path_kind: PathKind
    runs: int
    mean_s: float
    stddev_s: float


@dataclass(frozen=True)
class LinearFit:
    """平均時間とファイルサイズの線形回帰の結果。"""

    slope: float
    intercept: float
    r_squared: float


@dataclass
class BenchReport:
    """ベンチマークのレポート。"""

    fits: Dict[PathKind, LinearFit] = field(default_factory=dict)
    # サイズ -> オーバーヘッド（%）
    overhead_pct: Dict[int, float] = field(default_factory=dict)
    csv_path: Optional[Path] = None

    @property
    def overhead_trend_downward(self) -> Optional[bool]:
        """最小サイズのオーバーヘッドが最大サイズより大きいか。両経路がない場合はNone。"""
        if len(self.overhead_pct) < 2:
            return None
        sizes = sorted(self.overhead_pct)
        return self.overhead_pct[sizes[0]] > self.overhead_pct[sizes[-1]]


def gen_corpus(sizes: Sequence[int], seed: int, directory: PathLike) -> List[Path]:
    """指定サイズの擬似乱数ファイルを生成します。

    同じseedとサイズからは常に同じ内容が生成されます。

    Args:
        sizes: ファイルサイズ（バイト）のリスト
        seed: 乱数シード
        directory: 出力ディレクトリ

    Returns:
        生成したファイルのパス（sizesと同じ順）

    Raises:
        ValueError: sizesが空の場合
        InputTooSmall: 3バイト未満のサイズが含まれる場合
        StorageFailure: 書き込みに失敗した場合
    """
    if not sizes:
        raise ValueError("サイズのリストが空です")
    for size in sizes:
        if size < MIN_INPUT_SIZE:
            raise InputTooSmall(f"ファイルサイズは{MIN_INPUT_SIZE}バイト以上が必要です: {size}")

    target = Path(directory)
    paths = []
    try:
        target.mkdir(parents=True, exist_ok=True)
        for size in sizes:
            rng = np.random.default_rng([seed, size])
            path = target / f"corpus_{size}.bin"
            path.write_bytes(rng.bytes(size))
            paths.append(path)
    except OSError as e:
        raise StorageFailure(f"コーパスの生成に失敗しました: {target}: {e}") from e

    logger.info(f"コーパスを生成しました: {len(paths)}ファイル ({target})")
    return paths


def _encrypt_to_directory(path: Path, identity: bytes, out_dir: Path) -> None:
    # サンドボックスのabi_encryptと同じ入出力をネイティブで行う
    data_map, blobs = self_encrypt(path.read_bytes(), identity)
    out_dir.mkdir(parents=True, exist_ok=True)
    for cid, blob in zip(data_map.cids, blobs):
        (out_dir / cid).write_bytes(blob)
    (out_dir / DATA_MAP_FILENAME).write_bytes(serialize_datamap(data_map))


def _time_native(path: Path, identity: bytes, out_dir: Path) -> float:
    start = time.perf_counter()
    _encrypt_to_directory(path, identity, out_dir)
    elapsed = time.perf_counter() - start
    shutil.rmtree(out_dir, ignore_errors=True)
    return elapsed


def _time_abi(wrapper: SandboxWrapper, path: Path, identity: bytes, out_dir: Path) -> float:
    start = time.perf_counter()
    encrypt_file(wrapper, path, identity, out_dir)
    elapsed = time.perf_counter() - start
    shutil.rmtree(out_dir, ignore_errors=True)
    return elapsed


def run_bench(
    corpus: Sequence[PathLike],
    runs_per_size: int = DEFAULT_RUNS,
    path_kind: PathKind = PathKind.NATIVE,
    identity: bytes = BENCH_IDENTITY,
    max_pages: int = DEFAULT_MAX_PAGES,
) -> List[BenchRecord]:
    """コーパスの各ファイルの暗号化時間を計測します。

    各サイズで1回のウォームアップを行い、その結果は捨てます。
    どちらの経路もファイルの読み込みから出力ディレクトリへのチャンクと
    データマップの書き出しまでを計測し、ストアや台帳への書き込みは含みません。

    Args:
        corpus: 計測するファイル
        runs_per_size: サイズごとの計測回数
        path_kind: 実行経路
        identity: 暗号化に使うID
        max_pages: サンドボックスの線形メモリの最大ページ数

    Returns:
        サイズごとの計測結果

    Raises:
        ValueError: runs_per_sizeが1未満の場合
    """
    if runs_per_size < 1:
        raise ValueError(f"計測回数は1以上が必要です: {runs_per_size}")

    records = []
    for entry in corpus:
        path = Path(entry)
        size = path.stat().st_size
        timings: List[float] = []

        out_dir = Path(tempfile.mkdtemp(prefix=".bench-", dir=path.parent))
        try:
            if path_kind is PathKind.NATIVE:
                _time_native(path, identity, out_dir)
                timings = [
                    _time_native(path, identity, out_dir) for _ in range(runs_per_size)
                ]
            else:
                # 各サイズで1つのサンドボックスを使い回す
                with SandboxWrapper(path.parent, max_pages=max_pages) as wrapper:
                    _time_abi(wrapper, path, identity, out_dir)
                    timings = [
                        _time_abi(wrapper, path, identity, out_dir)
                        for _ in range(runs_per_size)
                    ]
        finally:
            shutil.rmtree(out_dir, ignore_errors=True)

        samples = np.asarray(timings, dtype=np.float64)
        record = BenchRecord(
            size_bytes=size,
            path_kind=path_kind,
            runs=runs_per_size,
            mean_s=float(samples.mean()),
            stddev_s=float(samples.std(ddof=0)),
        )
        logger.info(
            f"計測完了: {size}バイト ({path_kind.value}) "
            f"平均 {record.mean_s:.6f}秒, 標準偏差 {record.stddev_s:.6f}秒"
        )
        records.append(record)
    return records


def linear_fit(sizes: Sequence[int], means: Sequence[float]) -> LinearFit:
    """最小二乗法で平均時間をサイズの一次式で近似します。"""
    x = np.asarray(sizes, dtype=np.float64)
    y = np.asarray(means, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    predicted = slope * x + intercept
    ss_res = float(np.sum((y - predicted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return LinearFit(float(slope), float(intercept), r_squared)


def fit_and_report(
    records: Sequence[BenchRecord], csv_path: Optional[PathLike] = None
) -> BenchReport:
    """計測結果から線形回帰とオーバーヘッドを求め、CSVに出力します。

    Args:
        records: 計測結果
        csv_path: CSVの出力先（省略時は出力しない）

    Returns:
        レポート

    Raises:
        InsufficientData: いずれかの経路のサイズ数が3未満の場合
        StorageFailure: CSVの書き込みに失敗した場合
    """
    by_kind: Dict[PathKind, Dict[int, BenchRecord]] = {}
    for record in records:
        by_kind.setdefault(record.path_kind, {})[record.size_bytes] = record
    if not by_kind:
        raise InsufficientData("計測結果がありません")

    report = BenchReport()
    for kind, entries in by_kind.items():
        if len(entries) < MIN_FIT_SIZES:
            raise InsufficientData(
                f"{kind.value}のサイズ数が不足しています: {len(entries)} < {MIN_FIT_SIZES}"
            )
        sizes = sorted(entries)
        report.fits[kind] = linear_fit(sizes, [entries[s].mean_s for s in sizes])
        logger.info(f"{kind.value}の決定係数: {report.fits[kind].r_squared:.4f}")

    native = by_kind.get(PathKind.NATIVE, {})
    abi = by_kind.get(PathKind.ABI, {})
    for size in sorted(set(native) & set(abi)):
        base = native[size].mean_s
        report.overhead_pct[size] = (abi[size].mean_s - base) / base * 100.0

    if csv_path is not None:
        report.csv_path = _write_csv(records, report.overhead_pct, Path(csv_path))
    return report


def _write_csv(
    records: Sequence[BenchRecord], overhead: Dict[int, float], path: Path
) -> Path:
    ordered = sorted(records, key=lambda r: (r.size_bytes, r.path_kind.value))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(CSV_COLUMNS)
            for r in ordered:
                pct = overhead.get(r.size_bytes) if r.path_kind is PathKind.ABI else None
                writer.writerow(
                    [
                        r.size_bytes,
                        r.path_kind.value,
                        r.runs,
                        f"{r.mean_s:.9f}",
                        f"{r.stddev_s:.9f}",
                        "" if pct is None else f"{pct:.2f}",
                    ]
                )
    except OSError as e:
        raise StorageFailure(f"CSVの書き込みに失敗しました: {path}: {e}") from e
    logger.info(f"レポートを書き込みました: {path}")
    return path
