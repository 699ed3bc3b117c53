"""データマップの直列化のテストモジュール。

正準JSONへの変換と、不正な入力の検出をテストします。
"""

import json
import tempfile
from pathlib import Path
from typing import Any, Dict

import pytest

from src.errors import (
    FileNotFound,
    InvalidMap,
    MalformedMap,
    StorageFailure,
    UnsupportedVersion,
)
from src.services.data_map import (
    parse_datamap,
    read_datamap,
    serialize_datamap,
    write_datamap,
)
from src.services.self_encryption import DataMap, self_encrypt


@pytest.fixture
def data_map() -> DataMap:
    result, _ = self_encrypt(b"data map fixture contents", b"owner")
    return result


def _document(data_map: DataMap) -> Dict[str, Any]:
    return json.loads(serialize_datamap(data_map))


def _encode(document: Any) -> bytes:
    return json.dumps(document, separators=(",", ":")).encode("utf-8")


class TestSerialize:
    """直列化のテスト"""

    def test_roundtrip(self, data_map: DataMap) -> None:
        """直列化したデータマップが元に戻ることをテスト"""
        assert parse_datamap(serialize_datamap(data_map)) == data_map

    def test_canonical_form(self, data_map: DataMap) -> None:
        """キー順が固定され空白を含まないことをテスト"""
        raw = serialize_datamap(data_map)
        assert b" " not in raw
        assert b"\n" not in raw
        document = json.loads(raw)
        assert list(document) == ["version", "file_size", "chunks"]
        assert list(document["chunks"][0]) == [
            "index",
            "src_hash",
            "dst_hash",
            "src_size",
            "dst_size",
        ]

    def test_reserialization_is_stable(self, data_map: DataMap) -> None:
        """再直列化でバイト列が変わらないことをテスト"""
        raw = serialize_datamap(data_map)
        assert serialize_datamap(parse_datamap(raw)) == raw

    def test_digests_are_lowercase_hex(self, data_map: DataMap) -> None:
        """ハッシュが小文字16進で出力されることをテスト"""
        chunk = _document(data_map)["chunks"][0]
        assert chunk["dst_hash"] == data_map.chunks[0].dst_hash.hex()
        assert chunk["src_hash"] == chunk["src_hash"].lower()

    def test_identity_not_included(self, data_map: DataMap) -> None:
        """IDがデータマップに含まれないことをテスト"""
        assert b"owner" not in serialize_datamap(data_map)

    def test_invalid_map_rejected(self, data_map: DataMap) -> None:
        """不変条件を満たさないデータマップを直列化しないことをテスト"""
        broken = DataMap(data_map.version, data_map.file_size, data_map.chunks[:2])
        with pytest.raises(InvalidMap):
            serialize_datamap(broken)


class TestParse:
    """解析と検証のテスト"""

    @pytest.mark.parametrize("raw", [b"", b"{", b"\xff\xfe", b"not json"])
    def test_syntax_error(self, raw: bytes) -> None:
        """構文エラーを検出することをテスト"""
        with pytest.raises(MalformedMap):
            parse_datamap(raw)

    def test_not_an_object(self) -> None:
        """オブジェクト以外を拒否することをテスト"""
        with pytest.raises(MalformedMap):
            parse_datamap(b"[]")

    def test_unsupported_version(self, data_map: DataMap) -> None:
        """未対応のバージョンを検出することをテスト"""
        document = _document(data_map)
        document["version"] = "idse-v2"
        with pytest.raises(UnsupportedVersion):
            parse_datamap(_encode(document))

    def test_missing_key(self, data_map: DataMap) -> None:
        """必須フィールドの欠落を検出することをテスト"""
        document = _document(data_map)
        del document["file_size"]
        with pytest.raises(MalformedMap):
            parse_datamap(_encode(document))

    def test_extra_chunk_key(self, data_map: DataMap) -> None:
        """余分なフィールドを検出することをテスト"""
        document = _document(data_map)
        document["chunks"][0]["identity"] = "owner"
        with pytest.raises(MalformedMap):
            parse_datamap(_encode(document))

    def test_wrong_type(self, data_map: DataMap) -> None:
        """型の誤りを検出することをテスト"""
        document = _document(data_map)
        document["chunks"][0]["src_size"] = "9"
        with pytest.raises(MalformedMap):
            parse_datamap(_encode(document))

    def test_bool_is_not_int(self, data_map: DataMap) -> None:
        """真偽値を整数として受け付けないことをテスト"""
        document = _document(data_map)
        document["chunks"][0]["index"] = False
        with pytest.raises(MalformedMap):
            parse_datamap(_encode(document))

    def test_short_digest(self, data_map: DataMap) -> None:
        """32バイトでないハッシュを検出することをテスト"""
        document = _document(data_map)
        document["chunks"][1]["dst_hash"] = "ab" * 16
        with pytest.raises(InvalidMap):
            parse_datamap(_encode(document))

    def test_uppercase_digest(self, data_map: DataMap) -> None:
        """大文字の16進を受け付けないことをテスト"""
        document = _document(data_map)
        document["chunks"][1]["dst_hash"] = document["chunks"][1]["dst_hash"].upper()
        with pytest.raises(InvalidMap):
            parse_datamap(_encode(document))

    def test_wrong_file_size(self, data_map: DataMap) -> None:
        """ファイルサイズの不一致を検出することをテスト"""
        document = _document(data_map)
        document["file_size"] += 1
        with pytest.raises(InvalidMap):
            parse_datamap(_encode(document))

    def test_index_order(self, data_map: DataMap) -> None:
        """チャンクの順序の誤りを検出することをテスト"""
        document = _document(data_map)
        document["chunks"].reverse()
        with pytest.raises(InvalidMap):
            parse_datamap(_encode(document))

    def test_too_few_chunks(self, data_map: DataMap) -> None:
        """チャンク数が3未満のデータマップを検出することをテスト"""
        document = _document(data_map)
        document["chunks"] = document["chunks"][:2]
        with pytest.raises(InvalidMap):
            parse_datamap(_encode(document))

    def test_wrong_dst_size(self, data_map: DataMap) -> None:
        """暗号化後サイズの不一致を検出することをテスト"""
        document = _document(data_map)
        document["chunks"][0]["dst_size"] += 16
        with pytest.raises(InvalidMap):
            parse_datamap(_encode(document))


class TestFiles:
    """ファイル入出力のテスト"""

    def test_write_and_read(self, data_map: DataMap) -> None:
        """書き込んだデータマップを読み込めることをテスト"""
        with tempfile.TemporaryDirectory() as tmpdir:
            path = write_datamap(data_map, Path(tmpdir) / "nested" / "file.idsemap")
            assert path.exists()
            assert read_datamap(path) == data_map

    def test_read_missing(self) -> None:
        """存在しないファイルを検出することをテスト"""
        with tempfile.TemporaryDirectory() as tmpdir:
            with pytest.raises(FileNotFound):
                read_datamap(Path(tmpdir) / "missing.idsemap")

    def test_write_failure(self, data_map: DataMap) -> None:
        """書き込めない場所への書き込みを検出することをテスト"""
        with tempfile.TemporaryDirectory() as tmpdir:
            blocker = Path(tmpdir) / "blocker"
            blocker.write_bytes(b"")
            with pytest.raises(StorageFailure):
                write_datamap(data_map, blocker / "file.idsemap")
