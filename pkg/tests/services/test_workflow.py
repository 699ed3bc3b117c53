"""暗号化・保存・登録と取得・復号の一連の処理のテストモジュール。"""

from pathlib import Path

import numpy as np
import pytest

from src.errors import (
    AssetNotFound,
    ChunkNotFound,
    EmptyIdentity,
    FileNotFound,
    IdentityMismatch,
    InputTooSmall,
    IntegrityError,
)
from src.services.chunk_store import DirectoryChunkStore
from src.services.data_map import read_datamap, serialize_datamap
from src.services.ledger import init_wallet
from src.services.workflow import CHUNK_CORRUPT, CHUNK_MISSING, CHUNK_OK, IbseClient
from src.utils.config import ENGINE_SANDBOX, AppConfig


MIB = 1024 * 1024

# ブロック境界・チャンク境界の前後と大きなファイル
ROUNDTRIP_SIZES = [3, 4, 15, 16, 17, 1024, MIB - 1, MIB, 3 * MIB + 1, 10_000_000]


def _write(path: Path, data: bytes) -> Path:
    path.write_bytes(data)
    return path


def _pattern_bytes(pattern: str, size: int) -> bytes:
    if pattern == "zeros":
        return bytes(size)
    if pattern == "ones":
        return b"\xff" * size
    return np.random.default_rng(size).bytes(size)


class TestAddGet:
    """addとgetのテスト"""

    @pytest.mark.parametrize("pattern", ["random", "zeros", "ones"])
    @pytest.mark.parametrize("size", ROUNDTRIP_SIZES)
    def test_roundtrip(
        self, config: AppConfig, home: Path, size: int, pattern: str
    ) -> None:
        """add後のgetで同じファイルに戻ることをテスト"""
        data = _pattern_bytes(pattern, size)
        client = IbseClient(config)
        asset = client.add_file(_write(home / "in.bin", data), home / "key.idsemap")
        restored = client.get_file(asset.id, home / "key.idsemap", home / "out.bin")
        assert restored.read_bytes() == data

    def test_asset_matches_data_map(self, config: AppConfig, home: Path) -> None:
        """アセットのCIDとOwnerをテスト"""
        client = IbseClient(config)
        asset = client.add_file(_write(home / "in.bin", b"x" * 100), home / "key.idsemap")
        data_map = read_datamap(home / "key.idsemap")
        assert asset.cids == data_map.cids
        assert asset.owner == init_wallet(home).identity_hex
        assert all(client.store.has_chunk(cid) for cid in asset.cids)

    def test_chunks_stored_under_home(self, config: AppConfig, home: Path) -> None:
        """既定ではホーム配下のストアに保存されることをテスト"""
        client = IbseClient(config)
        asset = client.add_file(_write(home / "in.bin", b"abcdef"), home / "key.idsemap")
        assert DirectoryChunkStore(home / "store").list_cids() == sorted(asset.cids)
        assert (home / "ledger.json").exists()

    def test_missing_file(self, config: AppConfig, home: Path) -> None:
        """存在しないファイルを検出することをテスト"""
        with pytest.raises(FileNotFound):
            IbseClient(config).add_file(home / "absent.bin", home / "key.idsemap")

    def test_too_small(self, config: AppConfig, home: Path) -> None:
        """3バイト未満のファイルを拒否することをテスト"""
        with pytest.raises(InputTooSmall):
            IbseClient(config).add_file(_write(home / "in.bin", b"ab"), home / "k")
        assert IbseClient(config).list_assets() == []

    def test_unknown_asset(self, config: AppConfig, home: Path) -> None:
        """存在しないアセットを検出することをテスト"""
        client = IbseClient(config)
        client.add_file(_write(home / "in.bin", b"abcdef"), home / "key.idsemap")
        with pytest.raises(AssetNotFound):
            client.get_file(
                "00000000-0000-4000-8000-000000000000", home / "key.idsemap", home / "o"
            )

    def test_map_of_other_file(self, config: AppConfig, home: Path) -> None:
        """別ファイルのデータマップでは復元できないことをテスト"""
        client = IbseClient(config)
        first = client.add_file(_write(home / "a.bin", b"first file"), home / "a.idsemap")
        client.add_file(_write(home / "b.bin", b"second file"), home / "b.idsemap")
        with pytest.raises(IntegrityError):
            client.get_file(first.id, home / "b.idsemap", home / "out.bin")

    def test_other_identity(self, config: AppConfig, home: Path) -> None:
        """別のIDではデータマップがあっても復元できないことをテスト"""
        client = IbseClient(config)
        asset = client.add_file(_write(home / "in.bin", b"confidential"), home / "k.idsemap")

        config.identity_override = "someone-else"
        with pytest.raises(IdentityMismatch):
            IbseClient(config).get_file(asset.id, home / "k.idsemap", home / "out.bin")

    def test_missing_chunk(self, config: AppConfig, home: Path) -> None:
        """ストアからチャンクが失われた場合を検出することをテスト"""
        client = IbseClient(config)
        asset = client.add_file(_write(home / "in.bin", b"abcdef"), home / "k.idsemap")
        (home / "store" / asset.cids[1]).unlink()
        with pytest.raises(ChunkNotFound):
            client.get_file(asset.id, home / "k.idsemap", home / "out.bin")

    def test_map_alone_is_not_enough(self, config: AppConfig, home: Path) -> None:
        """データマップがなければ復元できないことをテスト"""
        client = IbseClient(config)
        asset = client.add_file(_write(home / "in.bin", b"abcdef"), home / "k.idsemap")
        (home / "k.idsemap").unlink()
        with pytest.raises(FileNotFound):
            client.get_file(asset.id, home / "k.idsemap", home / "out.bin")


class TestSandboxEngine:
    """サンドボックス経由の処理のテスト"""

    def test_roundtrip(self, config: AppConfig, home: Path) -> None:
        """サンドボックス経由でadd・getできることをテスト"""
        config.engine = ENGINE_SANDBOX
        config.sandbox_max_pages = 256
        client = IbseClient(config)
        asset = client.add_file(_write(home / "in.bin", b"via sandbox" * 50), home / "k")
        client.get_file(asset.id, home / "k", home / "out.bin")
        assert (home / "out.bin").read_bytes() == b"via sandbox" * 50

    @pytest.mark.parametrize("pattern", ["random", "zeros", "ones"])
    @pytest.mark.parametrize("size", ROUNDTRIP_SIZES)
    def test_roundtrip_sizes(
        self, config: AppConfig, home: Path, size: int, pattern: str
    ) -> None:
        """境界付近のサイズでサンドボックス経由のadd・getができることをテスト"""
        data = _pattern_bytes(pattern, size)
        config.engine = ENGINE_SANDBOX
        config.sandbox_max_pages = 1024
        client = IbseClient(config)
        asset = client.add_file(_write(home / "in.bin", data), home / "k")
        restored = client.get_file(asset.id, home / "k", home / "out.bin")
        assert restored.read_bytes() == data

    def test_same_output_as_native(self, config: AppConfig, home: Path) -> None:
        """ネイティブと同じデータマップとチャンクになることをテスト"""
        data = np.random.default_rng(3).bytes(5000)
        _write(home / "in.bin", data)
        native = IbseClient(config).add_file(home / "in.bin", home / "native.idsemap")

        config.engine = ENGINE_SANDBOX
        config.sandbox_max_pages = 256
        sandbox = IbseClient(config).add_file(home / "in.bin", home / "sandbox.idsemap")

        assert native.cids == sandbox.cids
        assert serialize_datamap(read_datamap(home / "native.idsemap")) == serialize_datamap(
            read_datamap(home / "sandbox.idsemap")
        )

    def test_native_add_sandbox_get(self, config: AppConfig, home: Path) -> None:
        """ネイティブで追加したファイルをサンドボックスで復元できることをテスト"""
        asset = IbseClient(config).add_file(_write(home / "in.bin", b"mixed"), home / "k")
        config.engine = ENGINE_SANDBOX
        config.sandbox_max_pages = 256
        IbseClient(config).get_file(asset.id, home / "k", home / "out.bin")
        assert (home / "out.bin").read_bytes() == b"mixed"


class TestManageAssets:
    """ls・rm・verifyのテスト"""

    def test_list_and_remove(self, config: AppConfig, home: Path) -> None:
        """一覧と削除をテスト"""
        client = IbseClient(config)
        asset = client.add_file(_write(home / "in.bin", b"abcdef"), home / "k")
        assert [a.id for a in client.list_assets()] == [asset.id]
        client.remove_asset(asset.id)
        assert client.list_assets() == []
        # チャンクはストアに残る
        assert all(client.store.has_chunk(cid) for cid in asset.cids)

    def test_verify_ok(self, config: AppConfig, home: Path) -> None:
        """すべてのチャンクが正常な場合をテスト"""
        client = IbseClient(config)
        asset = client.add_file(_write(home / "in.bin", b"abcdef"), home / "k")
        report = client.verify_asset(asset.id)
        assert report.ok
        assert [state for _, state in report.chunks] == [CHUNK_OK] * 3

    def test_verify_problems(self, config: AppConfig, home: Path) -> None:
        """欠損と破損を検出することをテスト"""
        client = IbseClient(config)
        asset = client.add_file(_write(home / "in.bin", b"abcdefghi"), home / "k")
        (home / "store" / asset.cids[0]).unlink()
        (home / "store" / asset.cids[2]).write_bytes(b"tampered")
        report = client.verify_asset(asset.id)
        assert not report.ok
        assert [state for _, state in report.chunks] == [
            CHUNK_MISSING,
            CHUNK_OK,
            CHUNK_CORRUPT,
        ]


class TestIdentity:
    """IDの初期化のテスト"""

    def test_wallet_identity(self, config: AppConfig, home: Path) -> None:
        """ウォレットの公開鍵がIDになることをテスト"""
        client = IbseClient(config)
        identity = client.init_identity()
        assert identity == init_wallet(home).identity_hex
        assert client.encryption_identity() == identity.encode("ascii")

    def test_override(self, config: AppConfig, home: Path) -> None:
        """上書きしたIDが設定に保存されることをテスト"""
        assert IbseClient(config).init_identity("custom-id") == "custom-id"
        reloaded = AppConfig(home=str(home))
        assert reloaded.identity_override == "custom-id"
        assert IbseClient(reloaded).encryption_identity() == b"custom-id"

    def test_empty_override(self, config: AppConfig, home: Path) -> None:
        """空のIDの上書きを拒否し、設定を変えないことをテスト"""
        with pytest.raises(EmptyIdentity):
            IbseClient(config).init_identity("")
        assert AppConfig(home=str(home)).identity_override == ""
