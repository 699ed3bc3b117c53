"""サンドボックスのホスト側ラッパーのテストモジュール。

引数の受け渡し、戻り値の種類、終了時の解放、およびネイティブ実行との一致をテストします。
"""

import tempfile
from pathlib import Path
from typing import Iterator

import numpy as np
import pytest
import wasmtime

from src.errors import (
    EmptyIdentity,
    FileNotFound,
    IdentityMismatch,
    InputTooSmall,
    InvalidFree,
    InvocationError,
    KindMismatch,
    UnknownFunction,
)
from src.services.data_map import serialize_datamap
from src.services.sandbox import (
    DATA_MAP_FILENAME,
    HEAP_BASE,
    STATUS_IO_FAILURE,
    ReturnKind,
)
from src.services.sandbox_host import (
    OutInt,
    SandboxWrapper,
    chunk_count,
    decrypt_file,
    encrypt_file,
)
from src.services.self_encryption import FORMAT_VERSION, self_encrypt

FIRST_PAYLOAD = HEAP_BASE + 16
GOLDEN_SMALL_MAP = Path(__file__).parent / "data" / "golden_small.idsemap"


@pytest.fixture
def workdir() -> Iterator[Path]:
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def wrapper(workdir: Path) -> Iterator[SandboxWrapper]:
    with SandboxWrapper(workdir, max_pages=256) as instance:
        yield instance


class TestInvoke:
    """関数呼び出しのテスト"""

    def test_allocate(self, wrapper: SandboxWrapper) -> None:
        """整数の戻り値を受け取れることをテスト"""
        result = wrapper.invoke("abi_allocate", ReturnKind.INTEGER, [16])
        assert isinstance(result, int)
        assert result != 0

    def test_unit(self, wrapper: SandboxWrapper) -> None:
        """戻り値なしの関数でNoneが返ることをテスト"""
        address = wrapper.invoke("abi_allocate", ReturnKind.INTEGER, [16])
        assert isinstance(address, int)
        assert wrapper.invoke("abi_deallocate", ReturnKind.UNIT, [address, 16]) is None

    def test_unknown_function(self, wrapper: SandboxWrapper) -> None:
        """未知の関数を拒否することをテスト"""
        with pytest.raises(UnknownFunction):
            wrapper.invoke("abi_format_disk", ReturnKind.INTEGER, [])

    def test_kind_mismatch(self, wrapper: SandboxWrapper) -> None:
        """宣言と異なる戻り値の種類を拒否することをテスト"""
        with pytest.raises(KindMismatch):
            wrapper.invoke("abi_allocate", ReturnKind.BYTE_STRING_ADDRESS, [16])

    def test_argument_count(self, wrapper: SandboxWrapper) -> None:
        """引数の数の誤りを拒否することをテスト"""
        with pytest.raises(InvocationError):
            wrapper.invoke("abi_allocate", ReturnKind.INTEGER, [])

    def test_echo_string(self, wrapper: SandboxWrapper) -> None:
        """文字列引数がそのまま返ることをテスト"""
        assert wrapper.invoke("abi_echo", ReturnKind.BYTE_STRING_ADDRESS, ["往復"]) == "往復"

    def test_echo_bytes(self, wrapper: SandboxWrapper) -> None:
        """バイト列引数を受け渡せることをテスト"""
        assert wrapper.invoke("abi_echo", ReturnKind.BYTE_STRING_ADDRESS, [b"raw"]) == "raw"

    def test_version(self, wrapper: SandboxWrapper) -> None:
        """静的データの文字列を読み出せることをテスト"""
        assert wrapper.invoke("abi_version", ReturnKind.BYTE_STRING_ADDRESS) == FORMAT_VERSION

    def test_embedded_zero_byte(self, wrapper: SandboxWrapper) -> None:
        """ゼロバイトを含む引数を拒否することをテスト"""
        with pytest.raises(InvocationError):
            wrapper.invoke("abi_echo", ReturnKind.BYTE_STRING_ADDRESS, [b"a\x00b"])

    def test_trap_becomes_invocation_error(self, wrapper: SandboxWrapper) -> None:
        """トラップが呼び出しエラーとして通知されることをテスト"""
        with pytest.raises(InvocationError) as excinfo:
            wrapper.invoke("abi_deallocate", ReturnKind.UNIT, [4096, 16])
        assert isinstance(excinfo.value.__cause__, InvalidFree)
        assert isinstance(excinfo.value.__cause__.__cause__, wasmtime.Trap)

    def test_non_utf8_path_argument(self, wrapper: SandboxWrapper) -> None:
        """UTF-8でないパス引数がステータス4になることをテスト"""
        status = wrapper.invoke(
            "abi_encrypt", ReturnKind.INTEGER, [b"/\xff\xfe.bin", b"owner", "/out"]
        )
        assert status == STATUS_IO_FAILURE

    def test_non_utf8_return_value(self, wrapper: SandboxWrapper) -> None:
        """UTF-8でない戻り値の文字列が呼び出しエラーになることをテスト"""
        with pytest.raises(InvocationError):
            wrapper.invoke("abi_echo", ReturnKind.BYTE_STRING_ADDRESS, [b"\xff\xfe"])

    def test_out_parameter(self, wrapper: SandboxWrapper, workdir: Path) -> None:
        """数値出力引数に結果が入ることをテスト"""
        (workdir / "file.bin").write_bytes(bytes(3 * 1024 * 1024 + 1))
        out = OutInt()
        status = wrapper.invoke("abi_chunk_count", ReturnKind.INTEGER, ["/file.bin", out])
        assert status == 0
        assert out.value == 4

    def test_closed_wrapper(self, workdir: Path) -> None:
        """終了後の呼び出しを拒否することをテスト"""
        wrapper = SandboxWrapper(workdir, max_pages=16)
        wrapper.shutdown()
        with pytest.raises(InvocationError):
            wrapper.invoke("abi_version", ReturnKind.BYTE_STRING_ADDRESS)


class TestAllocationLog:
    """引数用の領域の記録と解放のテスト"""

    def test_arguments_are_logged(self, wrapper: SandboxWrapper) -> None:
        """文字列引数ごとに領域が記録されることをテスト"""
        wrapper.invoke("abi_echo", ReturnKind.BYTE_STRING_ADDRESS, ["one"])
        wrapper.invoke("abi_echo", ReturnKind.BYTE_STRING_ADDRESS, ["two"])
        assert len(wrapper.allocations) == 2
        assert wrapper.allocations.entries[0].size == 4

    def test_shutdown_releases_everything(self, workdir: Path) -> None:
        """終了時にすべての領域が解放されることをテスト"""
        wrapper = SandboxWrapper(workdir, max_pages=16)
        for text in ["a", "bb", "ccc"]:
            wrapper.invoke("abi_echo", ReturnKind.BYTE_STRING_ADDRESS, [text])
        wrapper.invoke("abi_chunk_count", ReturnKind.INTEGER, ["/absent", OutInt()])
        assert wrapper.live_allocations() > 0

        wrapper.shutdown()
        assert len(wrapper.allocations) == 0
        assert wrapper.module.abi_live_allocations() == 0
        assert wrapper.module.abi_allocate(8) == FIRST_PAYLOAD

    def test_shutdown_is_idempotent(self, workdir: Path) -> None:
        """二度目の終了で何も起きないことをテスト"""
        wrapper = SandboxWrapper(workdir, max_pages=16)
        wrapper.invoke("abi_echo", ReturnKind.BYTE_STRING_ADDRESS, ["x"])
        wrapper.shutdown()
        wrapper.shutdown()
        assert wrapper.module.abi_allocate(8) == FIRST_PAYLOAD

    def test_context_manager(self, workdir: Path) -> None:
        """with文の終了で解放されることをテスト"""
        with SandboxWrapper(workdir, max_pages=16) as wrapper:
            wrapper.invoke("abi_echo", ReturnKind.BYTE_STRING_ADDRESS, ["x"])
        assert wrapper.module.abi_allocate(8) == FIRST_PAYLOAD


class TestFileHelpers:
    """暗号化・復号の補助関数のテスト"""

    def test_roundtrip(self, wrapper: SandboxWrapper, workdir: Path) -> None:
        """サンドボックス内で暗号化・復号できることをテスト"""
        data = b"sandboxed file" * 100
        (workdir / "input.bin").write_bytes(data)
        map_path = encrypt_file(wrapper, workdir / "input.bin", b"owner", workdir / "out")
        assert map_path == workdir / "out" / DATA_MAP_FILENAME

        restored = decrypt_file(
            wrapper, map_path, workdir / "out", b"owner", workdir / "restored.bin"
        )
        assert restored.read_bytes() == data

    def test_status_mapped_to_errors(self, wrapper: SandboxWrapper, workdir: Path) -> None:
        """エラーステータスが例外に変換されることをテスト"""
        with pytest.raises(FileNotFound):
            encrypt_file(wrapper, workdir / "absent.bin", b"owner", workdir / "out")

        (workdir / "tiny.bin").write_bytes(b"ab")
        with pytest.raises(InputTooSmall):
            encrypt_file(wrapper, workdir / "tiny.bin", b"owner", workdir / "out")

        (workdir / "input.bin").write_bytes(b"abcdef")
        with pytest.raises(EmptyIdentity):
            encrypt_file(wrapper, workdir / "input.bin", b"", workdir / "out")

    def test_wrong_identity(self, wrapper: SandboxWrapper, workdir: Path) -> None:
        """異なるIDでの復号が失敗することをテスト"""
        (workdir / "input.bin").write_bytes(b"private data")
        map_path = encrypt_file(wrapper, workdir / "input.bin", b"owner", workdir / "out")
        with pytest.raises(IdentityMismatch):
            decrypt_file(wrapper, map_path, workdir / "out", b"other", workdir / "r.bin")

    def test_path_outside_preopen_dir(self, wrapper: SandboxWrapper) -> None:
        """許可ディレクトリ外のパスを拒否することをテスト"""
        with tempfile.TemporaryDirectory() as other:
            with pytest.raises(InvocationError):
                encrypt_file(wrapper, Path(other) / "x.bin", b"owner", Path(other))

    def test_chunk_count(self, wrapper: SandboxWrapper, workdir: Path) -> None:
        """チャンク数を取得できることをテスト"""
        (workdir / "input.bin").write_bytes(bytes(100))
        assert chunk_count(wrapper, workdir / "input.bin") == 3


class TestNativeEquivalence:
    """ネイティブ実行との一致のテスト"""

    def test_fifty_random_pairs(self, workdir: Path) -> None:
        """50組のファイルとIDで出力がビット単位で一致することをテスト"""
        rng = np.random.default_rng(50)
        with SandboxWrapper(workdir, max_pages=256) as wrapper:
            for trial in range(50):
                data = rng.bytes(int(rng.integers(3, 20_000)))
                # ゼロバイトを含まないID
                length = int(rng.integers(1, 40))
                identity = bytes(int(b) for b in rng.integers(1, 256, size=length))
                source = workdir / f"file_{trial}.bin"
                source.write_bytes(data)
                out_dir = workdir / f"out_{trial}"

                map_path = encrypt_file(wrapper, source, identity, out_dir)
                data_map, blobs = self_encrypt(data, identity)

                assert map_path.read_bytes() == serialize_datamap(data_map)
                for cid, blob in zip(data_map.cids, blobs):
                    assert (out_dir / cid).read_bytes() == blob
            log = wrapper.allocations
        assert len(log) == 0
        assert wrapper.module.abi_allocate(8) == FIRST_PAYLOAD

    def test_golden_data_map(self, wrapper: SandboxWrapper, workdir: Path) -> None:
        """保存済みの小さなフィクスチャと同じデータマップを書き出すことをテスト"""
        source = workdir / "golden.bin"
        source.write_bytes(bytes(i % 251 for i in range(1000)))

        map_path = encrypt_file(wrapper, source, b"golden-identity", workdir / "out")

        assert map_path.read_bytes() == GOLDEN_SMALL_MAP.read_bytes()
