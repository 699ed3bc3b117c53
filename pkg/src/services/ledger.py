"""台帳（ワールドステート）とウォレットを提供するモジュール。

スマートコントラクトのアセット（ID・Owner・CID）をアセットIDをキーとして管理し、
作成・読み取り・更新・削除の操作を提供します。ファイルを指定した場合は
正準JSONとしてアトミックに永続化します。
"""

import json
import logging
import os
import re
import tempfile
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey
from cryptography.hazmat.primitives.serialization import (
    Encoding,
    NoEncryption,
    PrivateFormat,
    PublicFormat,
)

from src.errors import (
    AlreadyExists,
    AssetNotFound,
    EmptyCids,
    InvalidAsset,
    StorageFailure,
)
from src.services.chunk_store import is_valid_cid
from src.types import PathLike

logger = logging.getLogger(__name__)

_HEX_PATTERN = re.compile(r"^(?:[0-9a-f]{2})+$")

WALLET_DIR = "wallet"
PRIVATE_KEY_FILE = "private.key"
PUBLIC_KEY_FILE = "public.key"


@dataclass
class Asset:
    """台帳上のアセット。"""

    id: str
    owner: str
    cids: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        """コントラクトのフィールド名（ID, Owner, CID）で辞書に変換します。"""
        return {"ID": self.id, "Owner": self.owner, "CID": list(self.cids)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Asset":
        return cls(id=data["ID"], owner=data["Owner"], cids=list(data["CID"]))


def _validate_asset_id(asset_id: str) -> None:
    try:
        parsed = uuid.UUID(asset_id)
    except (ValueError, TypeError) as e:
        raise InvalidAsset(f"アセットIDがUUIDではありません: {asset_id!r}") from e
    if parsed.version != 4:
        raise InvalidAsset(f"アセットIDがUUIDv4ではありません: {asset_id}")


def _validate_fields(owner: str, cids: Sequence[str]) -> None:
    if not _HEX_PATTERN.match(owner):
        raise InvalidAsset(f"Ownerは偶数長の小文字16進数である必要があります: {owner!r}")
    for cid in cids:
        if not is_valid_cid(cid):
            raise InvalidAsset(f"不正なCIDです: {cid!r}")


class Ledger:
    """ワールドステートを模した台帳。

    pathを指定しない場合はメモリ上のみで管理します。
    変更操作はロックで直列化されます。
    """

    def __init__(self, path: Optional[PathLike] = None) -> None:
        """台帳を初期化します。

        Args:
            path: 永続化先のJSONファイル（省略時はメモリのみ）
        """
        self.path = Path(path) if path is not None else None
        self._assets: Dict[str, Asset] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        assert self.path is not None
        try:
            document = json.loads(self.path.read_text(encoding="utf-8"))
            assets = {}
            for asset_id, record in document.items():
                asset = Asset.from_dict(record)
                _validate_asset_id(asset.id)
                _validate_fields(asset.owner, asset.cids)
                if asset.id != asset_id:
                    raise ValueError(f"キーとIDが一致しません: {asset_id}")
                assets[asset_id] = asset
            self._assets = assets
        except (
            OSError,
            ValueError,
            KeyError,
            TypeError,
            AttributeError,
            InvalidAsset,
        ) as e:
            raise StorageFailure(f"台帳の読み込みに失敗しました: {self.path}: {e}") from e
        logger.debug(f"台帳を読み込みました: {self.path} ({len(self._assets)}件)")

    def _persist(self) -> None:
        if self.path is None:
            return
        document = {k: self._assets[k].to_dict() for k in sorted(self._assets)}
        payload = json.dumps(document, separators=(",", ":"), sort_keys=True)
        tmp_name = None
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with tempfile.NamedTemporaryFile(
                "w",
                dir=self.path.parent,
                prefix=".ledger-",
                delete=False,
                encoding="utf-8",
            ) as tmp:
                tmp_name = tmp.name
                tmp.write(payload)
            os.replace(tmp_name, self.path)
        except OSError as e:
            if tmp_name is not None and os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise StorageFailure(f"台帳の保存に失敗しました: {self.path}: {e}") from e

    def create_asset(self, owner: str, cids: Sequence[str]) -> Asset:
        """新しいUUIDv4でアセットを作成します。

        Raises:
            EmptyCids: cidsが空の場合
            AlreadyExists: 生成したIDが既に存在する場合
        """
        if not cids:
            raise EmptyCids("CIDリストが空です")
        _validate_fields(owner, cids)

        asset = Asset(id=str(uuid.uuid4()), owner=owner, cids=list(cids))
        with self._lock:
            if asset.id in self._assets:
                raise AlreadyExists(f"アセットは既に存在します: {asset.id}")
            self._assets[asset.id] = asset
            try:
                self._persist()
            except StorageFailure:
                del self._assets[asset.id]
                raise
        logger.info(f"アセットを作成しました: {asset.id} ({len(asset.cids)}チャンク)")
        return Asset(asset.id, asset.owner, list(asset.cids))

    def read_asset(self, asset_id: str) -> Asset:
        """アセットを返します。

        Raises:
            AssetNotFound: アセットが存在しない場合
        """
        with self._lock:
            asset = self._assets.get(asset_id)
            if asset is None:
                raise AssetNotFound(f"アセット{asset_id}は存在しません")
            return Asset(asset.id, asset.owner, list(asset.cids))

    def asset_exists(self, asset_id: str) -> bool:
        with self._lock:
            return asset_id in self._assets

    def update_asset(self, asset_id: str, owner: str, cids: Sequence[str]) -> Asset:
        """アセットを丸ごと置き換えます。

        Raises:
            AssetNotFound: アセットが存在しない場合
        """
        _validate_fields(owner, cids)
        with self._lock:
            previous = self._assets.get(asset_id)
            if previous is None:
                raise AssetNotFound(f"アセット{asset_id}は存在しません")
            self._assets[asset_id] = Asset(asset_id, owner, list(cids))
            try:
                self._persist()
            except StorageFailure:
                self._assets[asset_id] = previous
                raise
        logger.info(f"アセットを更新しました: {asset_id}")
        return Asset(asset_id, owner, list(cids))

    def delete_asset(self, asset_id: str) -> None:
        """アセットを削除します。

        Raises:
            AssetNotFound: アセットが存在しない場合
        """
        with self._lock:
            previous = self._assets.pop(asset_id, None)
            if previous is None:
                raise AssetNotFound(f"アセット{asset_id}は存在しません")
            try:
                self._persist()
            except StorageFailure:
                self._assets[asset_id] = previous
                raise
        logger.info(f"アセットを削除しました: {asset_id}")

    def list_assets(self) -> List[Asset]:
        """全アセットをID順で返します。"""
        with self._lock:
            return [
                Asset(a.id, a.owner, list(a.cids))
                for _, a in sorted(self._assets.items())
            ]


@dataclass
class Wallet:
    """データ所有者の鍵ペア。"""

    private_key: Ed25519PrivateKey
    public_key: bytes

    @property
    def identity_hex(self) -> str:
        """公開鍵の小文字16進表記（64文字）。"""
        return self.public_key.hex()


def _public_bytes(private_key: Ed25519PrivateKey) -> bytes:
    return private_key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)


def init_wallet(home: PathLike) -> Wallet:
    """ウォレットを読み込みます。存在しない場合はEd25519鍵ペアを生成して保存します。

    Args:
        home: ホームディレクトリ

    Returns:
        ウォレット

    Raises:
        StorageFailure: 読み書きに失敗した場合、または鍵ペアが一致しない場合
    """
    wallet_dir = Path(home) / WALLET_DIR
    private_path = wallet_dir / PRIVATE_KEY_FILE
    public_path = wallet_dir / PUBLIC_KEY_FILE

    try:
        if private_path.is_file():
            private_key = Ed25519PrivateKey.from_private_bytes(private_path.read_bytes())
            public_key = _public_bytes(private_key)
            if public_path.is_file() and public_path.read_bytes() != public_key:
                raise StorageFailure(f"ウォレットの公開鍵が秘密鍵と一致しません: {wallet_dir}")
            logger.debug(f"ウォレットを読み込みました: {wallet_dir}")
            return Wallet(private_key=private_key, public_key=public_key)

        private_key = Ed25519PrivateKey.generate()
        public_key = _public_bytes(private_key)
        wallet_dir.mkdir(parents=True, exist_ok=True)
        private_path.write_bytes(
            private_key.private_bytes(Encoding.Raw, PrivateFormat.Raw, NoEncryption())
        )
        os.chmod(private_path, 0o600)
        public_path.write_bytes(public_key)
    except OSError as e:
        raise StorageFailure(f"ウォレットの初期化に失敗しました: {wallet_dir}: {e}") from e
    except ValueError as e:
        raise StorageFailure(f"ウォレットの鍵が不正です: {wallet_dir}: {e}") from e

    logger.info(f"ウォレットを作成しました: {wallet_dir}")
    return Wallet(private_key=private_key, public_key=public_key)
