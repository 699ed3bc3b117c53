"""暗号化・保存・登録と取得・復号の一連の処理を提供するモジュール。

addはファイルを自己暗号化してチャンクをストアに保存し、台帳にアセットを登録します。
getはアセットを解決してチャンクを取得し、データマップとIDで復号します。
"""

import logging
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from src.errors import (
    ChunkNotFound,
    CorruptObject,
    EmptyIdentity,
    FileNotFound,
    IntegrityError,
    StorageFailure,
)
from src.services.chunk_store import ChunkStore, StoreBackend, open_store
from src.services.data_map import read_datamap, write_datamap
from src.services.ledger import Asset, Ledger, Wallet, init_wallet
from src.services.sandbox_host import SandboxWrapper, decrypt_file, encrypt_file
from src.services.self_encryption import DataMap, self_decrypt, self_encrypt
from src.types import PathLike
from src.utils.config import ENGINE_SANDBOX, AppConfig

logger = logging.getLogger(__name__)

CHUNK_OK = "ok"
CHUNK_MISSING = "missing"
CHUNK_CORRUPT = "corrupt"


@dataclass(frozen=True)
class VerifyReport:
    """アセットのチャンク検証結果。"""

    asset_id: str
    # (CID, 状態) の組をアセットのCID順で保持
    chunks: Tuple[Tuple[str, str], ...]

    @property
    def ok(self) -> bool:
        return all(state == CHUNK_OK for _, state in self.chunks)


class IbseClient:
    """ホームディレクトリの設定・ウォレット・ストア・台帳を束ねるクライアント。"""

    def __init__(
        self,
        config: AppConfig,
        store: Optional[ChunkStore] = None,
        ledger: Optional[Ledger] = None,
    ) -> None:
        """クライアントを初期化します。

        Args:
            config: 設定
            store: チャンクストア（省略時は設定から生成）
            ledger: 台帳（省略時は設定のファイルを使用）
        """
        self.config = config
        self.store = store or open_store(
            StoreBackend(kind=config.store_backend, root=config.store_path)
        )
        self.ledger = ledger or Ledger(config.ledger_file)
        self._wallet: Optional[Wallet] = None

    @property
    def wallet(self) -> Wallet:
        """ウォレット。存在しない場合は作成されます。"""
        if self._wallet is None:
            self._wallet = init_wallet(self.config.home_path)
        return self._wallet

    @property
    def owner(self) -> str:
        """アセットのOwner（ウォレットの公開鍵の16進表記）。"""
        return self.wallet.identity_hex

    def encryption_identity(self) -> bytes:
        """暗号化・復号に使うIDのバイト列。"""
        if self.config.identity_override:
            return self.config.identity_override.encode("utf-8")
        return self.wallet.identity_hex.encode("ascii")

    def init_identity(self, identity_override: Optional[str] = None) -> str:
        """ウォレットを初期化し、有効なIDを返します。

        Args:
            identity_override: 指定した場合は設定に保存し、以後のIDとして使用

        Returns:
            有効なID

        Raises:
            EmptyIdentity: 空のIDが指定された場合
        """
        if identity_override == "":
            raise EmptyIdentity("空のIDは使用できません")
        wallet = self.wallet
        if identity_override is not None:
            self.config.identity_override = identity_override
            self.config.save()
            logger.info("IDの上書きを設定しました")
            return identity_override
        return self.config.identity_override or wallet.identity_hex

    # --- add ---

    def add_file(self, file: PathLike, key_output_path: PathLike) -> Asset:
        """ファイルを暗号化して保存し、アセットを登録します。

        Args:
            file: 暗号化するファイル
            key_output_path: データマップの出力先

        Returns:
            登録したアセット

        Raises:
            FileNotFound: ファイルが存在しない場合
            InputTooSmall: ファイルが3バイト未満の場合
            StorageFailure: 保存に失敗した場合
        """
        source = Path(file)
        if not source.is_file():
            raise FileNotFound(f"ファイルが見つかりません: {source}")
        identity = self.encryption_identity()

        if self.config.engine == ENGINE_SANDBOX:
            data_map, blobs = self._encrypt_in_sandbox(source, identity)
        else:
            data_map, blobs = self_encrypt(self._read(source), identity)

        for record, blob in zip(data_map.chunks, blobs):
            cid = self.store.put_chunk(blob)
            if cid != record.cid:
                raise IntegrityError(f"チャンク{record.index}のCIDが一致しません")
        write_datamap(data_map, key_output_path)

        asset = self.ledger.create_asset(self.owner, data_map.cids)
        logger.info(f"ファイルを登録しました: {source} -> {asset.id}")
        return asset

    def _read(self, source: Path) -> bytes:
        try:
            return source.read_bytes()
        except OSError as e:
            raise StorageFailure(f"ファイルの読み込みに失敗しました: {source}: {e}") from e

    def _sandbox(self, preopen_dir: Path) -> SandboxWrapper:
        return SandboxWrapper(
            preopen_dir,
            max_pages=self.config.sandbox_max_pages,
            inherit_stdout=self.config.inherit_sandbox_stdout,
        )

    def _encrypt_in_sandbox(
        self, source: Path, identity: bytes
    ) -> Tuple[DataMap, List[bytes]]:
        with tempfile.TemporaryDirectory(prefix="ibse-") as tmp:
            staging = Path(tmp)
            staged = staging / "input.bin"
            out_dir = staging / "out"
            try:
                shutil.copyfile(source, staged)
            except OSError as e:
                raise StorageFailure(f"ファイルの準備に失敗しました: {source}: {e}") from e

            with self._sandbox(staging) as wrapper:
                map_path = encrypt_file(wrapper, staged, identity, out_dir)
            data_map = read_datamap(map_path)
            blobs = [(out_dir / cid).read_bytes() for cid in data_map.cids]
        return data_map, blobs

    # --- get ---

    def get_file(
        self, asset_id: str, key_path: PathLike, destination: PathLike
    ) -> Path:
        """アセットのファイルを復号して書き出します。

        Args:
            asset_id: アセットID
            key_path: データマップのパス
            destination: 出力先

        Returns:
            出力先のパス

        Raises:
            AssetNotFound: アセットが存在しない場合
            ChunkNotFound: チャンクがストアにない場合
            IntegrityError: データマップとアセットが一致しない場合、またはチャンクが改ざんされている場合
            IdentityMismatch: IDが異なる場合
            MalformedMap: データマップが不正な場合
        """
        asset = self.ledger.read_asset(asset_id)
        data_map = read_datamap(key_path)
        if list(asset.cids) != list(data_map.cids):
            raise IntegrityError(
                f"データマップがアセット{asset_id}のCIDと一致しません"
            )
        blobs = [self.store.get_chunk(cid) for cid in asset.cids]
        identity = self.encryption_identity()

        target = Path(destination)
        if self.config.engine == ENGINE_SANDBOX:
            self._decrypt_in_sandbox(data_map, blobs, identity, target)
        else:
            restored = self_decrypt(data_map, blobs, identity)
            try:
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes(restored)
            except OSError as e:
                raise StorageFailure(f"ファイルの書き込みに失敗しました: {target}: {e}") from e

        logger.info(f"ファイルを復元しました: {asset_id} -> {target}")
        return target

    def _decrypt_in_sandbox(
        self, data_map: DataMap, blobs: Sequence[bytes], identity: bytes, target: Path
    ) -> None:
        with tempfile.TemporaryDirectory(prefix="ibse-") as tmp:
            staging = Path(tmp)
            chunks_dir = staging / "chunks"
            chunks_dir.mkdir()
            for cid, blob in zip(data_map.cids, blobs):
                (chunks_dir / cid).write_bytes(blob)
            map_path = write_datamap(data_map, staging / "map.idsemap")
            restored = staging / "restored.bin"

            with self._sandbox(staging) as wrapper:
                decrypt_file(wrapper, map_path, chunks_dir, identity, restored)
            try:
                target.parent.mkdir(parents=True, exist_ok=True)
                shutil.copyfile(restored, target)
            except OSError as e:
                raise StorageFailure(f"ファイルの書き込みに失敗しました: {target}: {e}") from e

    # --- ls / rm / verify ---

    def list_assets(self) -> List[Asset]:
        return self.ledger.list_assets()

    def remove_asset(self, asset_id: str) -> None:
        """アセットを台帳から削除します。チャンクはストアに残ります。"""
        self.ledger.delete_asset(asset_id)

    def verify_asset(self, asset_id: str) -> VerifyReport:
        """アセットの各チャンクがストアに存在し、改ざんされていないかを検証します。

        Raises:
            AssetNotFound: アセットが存在しない場合
        """
        asset = self.ledger.read_asset(asset_id)
        results = []
        for cid in asset.cids:
            try:
                self.store.get_chunk(cid)
                results.append((cid, CHUNK_OK))
            except ChunkNotFound:
                results.append((cid, CHUNK_MISSING))
            except CorruptObject:
                results.append((cid, CHUNK_CORRUPT))
        report = VerifyReport(asset_id, tuple(results))
        if not report.ok:
            logger.warning(f"アセット{asset_id}に欠損または破損したチャンクがあります")
        return report
