"""コンテンツアドレス型のチャンクストアを提供するモジュール。

暗号化チャンクをSHA-256の16進表記（CID）をキーとして保存・取得します。
メモリ上のストアと、1オブジェクト1ファイルのディレクトリストアがあります。
"""

import hashlib
import logging
import os
import re
import tempfile
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

from src.errors import ChunkNotFound, CorruptObject, StorageFailure
from src.types import CID, PathLike

logger = logging.getLogger(__name__)

_CID_PATTERN = re.compile(r"^[0-9a-f]{64}$")

BACKEND_MEMORY = "memory"
BACKEND_DIRECTORY = "directory"


def cid_of(blob: bytes) -> CID:
    """blobのCID（SHA-256の小文字16進表記）を返します。"""
    return CID(hashlib.sha256(blob).hexdigest())


def is_valid_cid(value: str) -> bool:
    """64文字の小文字16進文字列かどうかを返します。"""
    return bool(_CID_PATTERN.match(value))


class ChunkStore(ABC):
    """チャンクストアの抽象基底クラス。

    リモートのIPFSクライアントなどは、このクラスを継承して実装します。
    """

    @abstractmethod
    def _read(self, cid: CID) -> Optional[bytes]:
        """保存されたバイト列を返します。存在しない場合はNone。"""

    @abstractmethod
    def _write(self, cid: CID, blob: bytes) -> None:
        """blobをcidの名前で保存します。"""

    @abstractmethod
    def list_cids(self) -> List[CID]:
        """保存されているCIDをソートして返します。"""

    def put_chunk(self, blob: bytes) -> CID:
        """blobを保存してCIDを返します。同じ内容の再保存は何もしません。

        Raises:
            StorageFailure: 書き込みに失敗した場合
        """
        cid = cid_of(blob)
        if self.has_chunk(cid):
            logger.debug(f"チャンクは既に保存されています: {cid}")
            return cid
        self._write(cid, bytes(blob))
        logger.debug(f"チャンクを保存しました: {cid} ({len(blob)}バイト)")
        return cid

    def get_chunk(self, cid: str) -> bytes:
        """CIDに対応するblobを返します。読み出し時にダイジェストを検証します。

        Raises:
            ChunkNotFound: CIDが存在しない場合
            CorruptObject: 保存内容がCIDと一致しない場合
        """
        if not is_valid_cid(cid):
            raise ChunkNotFound(f"不正なCIDです: {cid!r}")
        blob = self._read(CID(cid))
        if blob is None:
            raise ChunkNotFound(f"チャンクが見つかりません: {cid}")
        if cid_of(blob) != cid:
            raise CorruptObject(f"チャンクが破損しています: {cid}")
        return blob

    def has_chunk(self, cid: str) -> bool:
        """get_chunkが成功する場合にTrueを返します。"""
        try:
            self.get_chunk(cid)
        except (ChunkNotFound, CorruptObject, StorageFailure):
            return False
        return True


class MemoryChunkStore(ChunkStore):
    """プロセス内のメモリに保存するチャンクストア。"""

    def __init__(self) -> None:
        self._objects: Dict[CID, bytes] = {}
        self._lock = threading.Lock()

    def _read(self, cid: CID) -> Optional[bytes]:
        with self._lock:
            return self._objects.get(cid)

    def _write(self, cid: CID, blob: bytes) -> None:
        with self._lock:
            self._objects[cid] = blob

    def list_cids(self) -> List[CID]:
        with self._lock:
            return sorted(self._objects)


class DirectoryChunkStore(ChunkStore):
    """ディレクトリに1オブジェクト1ファイル（ファイル名=CID）で保存するチャンクストア。"""

    def __init__(self, root: PathLike) -> None:
        self.root = Path(root)

    def _path(self, cid: CID) -> Path:
        return self.root / cid

    def _read(self, cid: CID) -> Optional[bytes]:
        path = self._path(cid)
        if not path.is_file():
            return None
        try:
            return path.read_bytes()
        except OSError as e:
            raise StorageFailure(f"チャンクの読み込みに失敗しました: {path}: {e}") from e

    def _write(self, cid: CID, blob: bytes) -> None:
        # 一時ファイルに書いてからリネームし、書きかけのオブジェクトを見せない
        tmp_name = None
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            with tempfile.NamedTemporaryFile(
                dir=self.root, prefix=".tmp-", delete=False
            ) as tmp:
                tmp_name = tmp.name
                tmp.write(blob)
                tmp.flush()
                os.fsync(tmp.fileno())
            os.replace(tmp_name, self._path(cid))
        except OSError as e:
            if tmp_name is not None and os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise StorageFailure(f"チャンクの書き込みに失敗しました: {cid}: {e}") from e

    def list_cids(self) -> List[CID]:
        if not self.root.is_dir():
            return []
        return sorted(CID(p.name) for p in self.root.iterdir() if is_valid_cid(p.name))


@dataclass(frozen=True)
class StoreBackend:
    """チャンクストアのバックエンド指定。"""

    kind: str = BACKEND_DIRECTORY
    root: Optional[Path] = None


def open_store(backend: StoreBackend) -> ChunkStore:
    """バックエンド指定からチャンクストアを生成します。

    Raises:
        ValueError: 未知の種類、またはディレクトリ指定がない場合
    """
    if backend.kind == BACKEND_MEMORY:
        return MemoryChunkStore()
    if backend.kind == BACKEND_DIRECTORY:
        if backend.root is None:
            raise ValueError("ディレクトリストアにはrootの指定が必要です")
        return DirectoryChunkStore(backend.root)
    raise ValueError(f"未知のストア種類です: {backend.kind}")
