"""データマップの直列化モジュール。

データマップを正準JSON（キー順固定・空白なし・UTF-8）で読み書きします。
データマップにはIDを含めません。
"""

import json
import logging
import re
from pathlib import Path
from typing import Any, List

from src.errors import (
    FileNotFound,
    InvalidMap,
    MalformedMap,
    StorageFailure,
    UnsupportedVersion,
)
from src.services.self_encryption import FORMAT_VERSION, ChunkRecord, DataMap
from src.types import PathLike

logger = logging.getLogger(__name__)

# 推奨拡張子
DATA_MAP_SUFFIX = ".idsemap"

_TOP_KEYS = ["version", "file_size", "chunks"]
_CHUNK_KEYS = ["index", "src_hash", "dst_hash", "src_size", "dst_size"]
_HEX_DIGEST = re.compile(r"^[0-9a-f]{64}$")


def serialize_datamap(data_map: DataMap) -> bytes:
    """データマップを正準JSONのバイト列に変換します。

    Raises:
        InvalidMap: データマップの不変条件が満たされない場合
    """
    if data_map.version != FORMAT_VERSION:
        raise InvalidMap(f"未対応のバージョンです: {data_map.version}")
    data_map.validate()

    document = {
        "version": data_map.version,
        "file_size": data_map.file_size,
        "chunks": [
            {
                "index": c.index,
                "src_hash": c.src_hash.hex(),
                "dst_hash": c.dst_hash.hex(),
                "src_size": c.src_size,
                "dst_size": c.dst_size,
            }
            for c in data_map.chunks
        ],
    }
    return json.dumps(document, separators=(",", ":"), ensure_ascii=True).encode(
        "utf-8"
    )


def _require_int(value: Any, name: str) -> int:
    # boolはintのサブクラスなので除外する
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedMap(f"{name}は整数である必要があります")
    return value


def _parse_digest(value: Any, name: str) -> bytes:
    if not isinstance(value, str):
        raise MalformedMap(f"{name}は文字列である必要があります")
    if not _HEX_DIGEST.match(value):
        raise InvalidMap(f"{name}は64文字の小文字16進数である必要があります")
    return bytes.fromhex(value)


def _parse_chunk(entry: Any) -> ChunkRecord:
    if not isinstance(entry, dict) or list(entry.keys()) != _CHUNK_KEYS:
        raise MalformedMap(f"チャンクのフィールドが不正です: {_CHUNK_KEYS}が必要です")
    return ChunkRecord(
        index=_require_int(entry["index"], "index"),
        src_hash=_parse_digest(entry["src_hash"], "src_hash"),
        dst_hash=_parse_digest(entry["dst_hash"], "dst_hash"),
        src_size=_require_int(entry["src_size"], "src_size"),
        dst_size=_require_int(entry["dst_size"], "dst_size"),
    )


def parse_datamap(raw: bytes) -> DataMap:
    """バイト列からデータマップを復元します。

    Raises:
        MalformedMap: 構文・構造が不正な場合
        UnsupportedVersion: バージョンが未対応の場合
        InvalidMap: 不変条件が満たされない場合
    """
    try:
        document = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedMap(f"データマップを解析できません: {e}") from e

    if not isinstance(document, dict):
        raise MalformedMap("データマップはJSONオブジェクトである必要があります")
    version = document.get("version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"未対応のバージョンです: {version!r}")
    if list(document.keys()) != _TOP_KEYS:
        raise MalformedMap(f"データマップのフィールドが不正です: {_TOP_KEYS}が必要です")

    entries = document["chunks"]
    if not isinstance(entries, list):
        raise MalformedMap("chunksは配列である必要があります")
    chunks: List[ChunkRecord] = [_parse_chunk(e) for e in entries]

    data_map = DataMap(
        version=version,
        file_size=_require_int(document["file_size"], "file_size"),
        chunks=tuple(chunks),
    )
    data_map.validate()
    return data_map


def write_datamap(data_map: DataMap, path: PathLike) -> Path:
    """データマップをファイルに書き込みます。

    Raises:
        StorageFailure: 書き込みに失敗した場合
    """
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(serialize_datamap(data_map))
    except OSError as e:
        raise StorageFailure(f"データマップの書き込みに失敗しました: {target}: {e}") from e
    logger.info(f"データマップを書き込みました: {target}")
    return target


def read_datamap(path: PathLike) -> DataMap:
    """ファイルからデータマップを読み込みます。

    Raises:
        FileNotFound: ファイルが存在しない場合
        StorageFailure: 読み込みに失敗した場合
    """
    source = Path(path)
    if not source.is_file():
        raise FileNotFound(f"データマップが見つかりません: {source}")
    try:
        raw = source.read_bytes()
    except OSError as e:
        raise StorageFailure(f"データマップの読み込みに失敗しました: {source}: {e}") from e
    return parse_datamap(raw)

