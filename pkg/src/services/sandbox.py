"""暗号化コアを組み込むサンドボックスモジュール。

ゲスト（guest.wat）をwasmtimeでインスタンス化し、平坦なインターフェースで公開します。
ゲストは自身の線形メモリとアロケータを持ち、引数はゼロ終端のバイト列のアドレスで受け取ります。
ホストはゲストに暗号プリミティブとファイルアクセスをインポートとして提供し、
ファイルアクセスは事前に許可されたディレクトリの中に限定されます。
"""

import logging
import struct
import sys
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Tuple

import wasmtime
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from src.errors import (
    DataMapError,
    EmptyIdentity,
    FileNotFound,
    IdentityMismatch,
    InputTooSmall,
    IntegrityError,
    InvalidFree,
    MalformedMap,
    OutOfMemory,
    SandboxTrap,
    StorageFailure,
)
from src.services.data_map import parse_datamap, serialize_datamap
from src.services.self_encryption import (
    AES_BLOCK_SIZE,
    FORMAT_VERSION,
    ChunkRecord,
    DataMap,
    chunk_hash,
)
from src.types import PathLike

logger = logging.getLogger(__name__)

PAGE_SIZE = 64 * 1024
DEFAULT_MAX_PAGES = 16384
# ゲストが宣言する線形メモリの上限
MAX_PAGES_LIMIT = 65535

# 静的データ領域とヒープの開始位置（0は無効なアドレス）
STATIC_DATA_BASE = 16
HEAP_BASE = 1024
BLOCK_HEADER_SIZE = 16
ALIGNMENT = 8

# 出力ディレクトリ内のデータマップのファイル名
DATA_MAP_FILENAME = "datamap.idsemap"

GUEST_SOURCE = Path(__file__).with_name("guest.wat")
HOST_MODULE = "host"

# ゲストとやり取りするチャンクレコード: 平文ハッシュ、暗号文ハッシュ、平文サイズ、暗号文サイズ
CHUNK_RECORD = struct.Struct("<32s32sII")

# ゲストが扱えるファイルサイズの上限
MAX_GUEST_FILE_SIZE = 0x7FFFFFFF

# ゲスト関数のステータスコード
STATUS_OK = 0
STATUS_MISSING_INPUT = 1
STATUS_INPUT_TOO_SMALL = 2
STATUS_EMPTY_IDENTITY = 3
STATUS_IO_FAILURE = 4
STATUS_OUT_OF_MEMORY = 5
STATUS_IDENTITY_MISMATCH = 6
STATUS_INTEGRITY_FAILURE = 7
STATUS_MALFORMED_MAP = 8


class ReturnKind(Enum):
    """ゲスト関数の戻り値の種類。"""

    UNIT = "unit"
    INTEGER = "integer"
    BYTE_STRING_ADDRESS = "byte_string_address"


# エクスポートごとの戻り値の宣言
EXPORT_KINDS: Dict[str, ReturnKind] = {
    "abi_allocate": ReturnKind.INTEGER,
    "abi_deallocate": ReturnKind.UNIT,
    "abi_encrypt": ReturnKind.INTEGER,
    "abi_decrypt": ReturnKind.INTEGER,
    "abi_chunk_count": ReturnKind.INTEGER,
    "abi_echo": ReturnKind.BYTE_STRING_ADDRESS,
    "abi_version": ReturnKind.BYTE_STRING_ADDRESS,
    "abi_live_allocations": ReturnKind.INTEGER,
    "abi_release_return_slot": ReturnKind.UNIT,
}

# 解放系のエクスポートで起きたトラップは不正な解放とみなす
_FREEING_EXPORTS = {"abi_deallocate", "abi_release_return_slot"}


class ExportedFunction(NamedTuple):
    """エクスポートされたゲスト関数。"""

    func: wasmtime.Func
    param_count: int
    return_kind: ReturnKind


class LinearMemory:
    """ゲストの線形メモリのビュー。範囲外アクセスはトラップになります。"""

    def __init__(self, store: Any, memory: wasmtime.Memory) -> None:
        # storeはStoreまたはホスト関数内のCaller
        self._store = store
        self._memory = memory

    @property
    def size(self) -> int:
        """現在のメモリサイズ（バイト）。"""
        return self._memory.data_len(self._store)

    @property
    def pages(self) -> int:
        return self._memory.size(self._store)

    def _check_bounds(self, offset: int, length: int) -> None:
        if offset < 0 or length < 0 or offset + length > self.size:
            raise SandboxTrap(
                f"範囲外のメモリアクセスです: offset={offset}, length={length}, size={self.size}"
            )

    def read(self, offset: int, length: int) -> bytes:
        self._check_bounds(offset, length)
        if length == 0:
            return b""
        return bytes(self._memory.read(self._store, offset, offset + length))

    def write(self, offset: int, data: bytes) -> None:
        self._check_bounds(offset, len(data))
        if data:
            self._memory.write(self._store, data, offset)

    def read_cstring(self, offset: int, window: int = 4096) -> bytes:
        """offsetからゼロバイトまでを読み出します（ゼロバイトは含まない）。

        Raises:
            SandboxTrap: メモリ末尾までゼロバイトがない場合
        """
        self._check_bounds(offset, 0)
        parts: List[bytes] = []
        position = offset
        while position < self.size:
            block = self.read(position, min(window, self.size - position))
            end = block.find(b"\x00")
            if end >= 0:
                parts.append(block[:end])
                return b"".join(parts)
            parts.append(block)
            position += len(block)
        raise SandboxTrap(f"ゼロ終端されていない文字列です: offset={offset}")


class _HostFailure(Exception):
    """ホスト関数が返すステータス。"""

    def __init__(self, status: int, message: str = "") -> None:
        super().__init__(message)
        self.status = status


def _u32(value: int) -> int:
    return value & 0xFFFFFFFF


def _aes_cbc(key: bytes, iv: bytes, data: bytes, encrypt: bool) -> bytes:
    # パディングはゲストが行う
    cipher = Cipher(algorithms.AES(key), modes.CBC(iv))
    context = cipher.encryptor() if encrypt else cipher.decryptor()
    return context.update(data) + context.finalize()


class GuestHost:
    """ゲストにインポートとして提供するホスト関数。

    すべてのホスト関数は成功時に0以上の値を、失敗時にステータスの符号を反転した値を返します。
    """

    def __init__(self, preopen_dir: Path, inherit_stdout: bool = False) -> None:
        self.preopen_dir = preopen_dir
        self.inherit_stdout = inherit_stdout

    def functions(self) -> Dict[str, Tuple[int, Callable[..., int]]]:
        """インポート名と (引数の数, 実装) の対応を返します。"""
        return {
            "path_size": (2, self.path_size),
            "path_is_dir": (2, self.path_is_dir),
            "file_read": (4, self.file_read),
            "file_write": (4, self.file_write),
            "sha256": (3, self.sha256),
            "aes_cbc_encrypt": (4, self.aes_cbc_encrypt),
            "aes_cbc_decrypt": (4, self.aes_cbc_decrypt),
            "datamap_encode": (5, self.datamap_encode),
            "datamap_decode": (4, self.datamap_decode),
            "stdout_write": (2, self.stdout_write),
        }

    def define(self, linker: wasmtime.Linker) -> None:
        """リンカにホスト関数を登録します。"""
        i32 = wasmtime.ValType.i32()
        for name, (param_count, func) in self.functions().items():
            linker.define_func(
                HOST_MODULE,
                name,
                wasmtime.FuncType([i32] * param_count, [i32]),
                self._guarded(name, func),
                access_caller=True,
            )

    def _guarded(self, name: str, func: Callable[..., int]) -> Callable[..., int]:
        def call(caller: wasmtime.Caller, *args: int) -> int:
            memory = LinearMemory(caller, caller["memory"])
            try:
                return func(memory, *(_u32(a) for a in args))
            except _HostFailure as e:
                if str(e):
                    logger.warning(f"{name}: {e}")
                return -e.status
            except (OSError, SandboxTrap, UnicodeDecodeError, ValueError) as e:
                logger.warning(f"ゲストの{name}呼び出しに失敗しました: {e}")
                return -STATUS_IO_FAILURE

        return call

    # --- パス ---

    def _resolve(self, memory: LinearMemory, dir_addr: int, name_addr: int) -> Path:
        # ゲストからは許可ディレクトリを "/" として見せる
        try:
            guest_path = memory.read_cstring(dir_addr).decode("utf-8")
            if name_addr:
                guest_path += "/" + memory.read_cstring(name_addr).decode("utf-8")
        except UnicodeDecodeError as e:
            raise _HostFailure(STATUS_IO_FAILURE, f"パスがUTF-8ではありません: {e}") from e
        resolved = (self.preopen_dir / guest_path.lstrip("/")).resolve()
        if not resolved.is_relative_to(self.preopen_dir):
            raise _HostFailure(STATUS_IO_FAILURE, f"許可されていないパスです: {guest_path}")
        return resolved

    def path_size(self, memory: LinearMemory, dir_addr: int, name_addr: int) -> int:
        path = self._resolve(memory, dir_addr, name_addr)
        if not path.is_file():
            raise _HostFailure(STATUS_MISSING_INPUT)
        size = path.stat().st_size
        if size > MAX_GUEST_FILE_SIZE:
            raise _HostFailure(STATUS_IO_FAILURE, f"ファイルが大きすぎます: {size}バイト")
        return size

    def path_is_dir(self, memory: LinearMemory, dir_addr: int, name_addr: int) -> int:
        if not self._resolve(memory, dir_addr, name_addr).is_dir():
            raise _HostFailure(STATUS_MISSING_INPUT)
        return STATUS_OK

    def file_read(
        self, memory: LinearMemory, dir_addr: int, name_addr: int, buf: int, length: int
    ) -> int:
        path = self._resolve(memory, dir_addr, name_addr)
        data = path.read_bytes()
        if len(data) != length:
            raise _HostFailure(STATUS_IO_FAILURE, f"ファイルサイズが変わりました: {path}")
        memory.write(buf, data)
        return STATUS_OK

    def file_write(
        self, memory: LinearMemory, dir_addr: int, name_addr: int, buf: int, length: int
    ) -> int:
        path = self._resolve(memory, dir_addr, name_addr)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(memory.read(buf, length))
        return STATUS_OK

    # --- 暗号プリミティブ ---

    def sha256(self, memory: LinearMemory, ptr: int, length: int, out: int) -> int:
        memory.write(out, chunk_hash(memory.read(ptr, length)))
        return STATUS_OK

    def _aes(
        self, memory: LinearMemory, buf: int, length: int, key: int, iv: int, encrypt: bool
    ) -> int:
        if length == 0 or length % AES_BLOCK_SIZE:
            raise _HostFailure(STATUS_IO_FAILURE, f"ブロック長の倍数ではありません: {length}")
        result = _aes_cbc(
            memory.read(key, 16), memory.read(iv, 16), memory.read(buf, length), encrypt
        )
        memory.write(buf, result)
        return STATUS_OK

    def aes_cbc_encrypt(
        self, memory: LinearMemory, buf: int, length: int, key: int, iv: int
    ) -> int:
        return self._aes(memory, buf, length, key, iv, encrypt=True)

    def aes_cbc_decrypt(
        self, memory: LinearMemory, buf: int, length: int, key: int, iv: int
    ) -> int:
        return self._aes(memory, buf, length, key, iv, encrypt=False)

    # --- データマップ ---

    def datamap_encode(
        self,
        memory: LinearMemory,
        records: int,
        count: int,
        file_size: int,
        out: int,
        capacity: int,
    ) -> int:
        chunks = []
        for index in range(count):
            src_hash, dst_hash, src_size, dst_size = CHUNK_RECORD.unpack(
                memory.read(records + index * CHUNK_RECORD.size, CHUNK_RECORD.size)
            )
            chunks.append(ChunkRecord(index, src_hash, dst_hash, src_size, dst_size))
        try:
            raw = serialize_datamap(DataMap(FORMAT_VERSION, file_size, tuple(chunks)))
        except DataMapError as e:
            raise _HostFailure(STATUS_IO_FAILURE, f"データマップを生成できません: {e}") from e
        if len(raw) > capacity:
            raise _HostFailure(STATUS_IO_FAILURE, "データマップの出力領域が不足しています")
        memory.write(out, raw)
        return len(raw)

    def datamap_decode(
        self, memory: LinearMemory, text: int, length: int, records: int, capacity: int
    ) -> int:
        try:
            data_map = parse_datamap(memory.read(text, length))
        except DataMapError as e:
            raise _HostFailure(STATUS_MALFORMED_MAP, str(e)) from e
        if len(data_map.chunks) > capacity or data_map.file_size > MAX_GUEST_FILE_SIZE:
            raise _HostFailure(STATUS_MALFORMED_MAP, "データマップが大きすぎます")
        for chunk in data_map.chunks:
            memory.write(
                records + chunk.index * CHUNK_RECORD.size,
                CHUNK_RECORD.pack(
                    chunk.src_hash, chunk.dst_hash, chunk.src_size, chunk.dst_size
                ),
            )
        return len(data_map.chunks)

    def stdout_write(self, memory: LinearMemory, ptr: int, length: int) -> int:
        if self.inherit_stdout:
            sys.stdout.write(memory.read(ptr, length).decode("utf-8", errors="replace"))
            sys.stdout.flush()
        return STATUS_OK


_compiled_guest: Optional[Tuple[wasmtime.Engine, wasmtime.Module]] = None


def compile_guest() -> Tuple[wasmtime.Engine, wasmtime.Module]:
    """ゲストをコンパイルします（プロセス内で一度だけ）。"""
    global _compiled_guest
    if _compiled_guest is None:
        engine = wasmtime.Engine()
        module = wasmtime.Module(engine, GUEST_SOURCE.read_text(encoding="utf-8"))
        _compiled_guest = (engine, module)
        logger.debug(f"ゲストをコンパイルしました: {GUEST_SOURCE.name}")
    return _compiled_guest


class GuestModule:
    """インスタンス化されたゲスト。

    ゲスト関数は整数引数（アドレスまたは値）のみを受け取り、整数を返します。
    """

    def __init__(
        self,
        preopen_dir: PathLike,
        max_pages: int = DEFAULT_MAX_PAGES,
        inherit_stdout: bool = False,
    ) -> None:
        """ゲストをインスタンス化します。

        Args:
            preopen_dir: ゲストからアクセスできるホストのディレクトリ
            max_pages: 線形メモリの最大ページ数
            inherit_stdout: ゲストの標準出力をホストに出力するか

        Raises:
            ValueError: max_pagesが範囲外の場合
        """
        if not 1 <= max_pages <= MAX_PAGES_LIMIT:
            raise ValueError(f"max_pagesは1〜{MAX_PAGES_LIMIT}の範囲で指定してください: {max_pages}")
        self.preopen_dir = Path(preopen_dir).resolve()
        self.max_pages = max_pages
        self.host = GuestHost(self.preopen_dir, inherit_stdout=inherit_stdout)

        engine, module = compile_guest()
        self._store = wasmtime.Store(engine)
        self._store.set_limits(memory_size=max_pages * PAGE_SIZE)
        linker = wasmtime.Linker(engine)
        self.host.define(linker)
        self._instance = linker.instantiate(self._store, module)

        exports = self._instance.exports(self._store)
        self.memory = LinearMemory(self._store, exports["memory"])
        self.exports: Dict[str, ExportedFunction] = {}
        for name, kind in EXPORT_KINDS.items():
            func = exports[name]
            assert isinstance(func, wasmtime.Func)
            self.exports[name] = ExportedFunction(
                func, len(func.type(self._store).params), kind
            )

    def call(self, name: str, *args: int) -> Optional[int]:
        """エクスポート関数を呼び出します。

        Raises:
            KeyError: エクスポートされていない関数の場合
            InvalidFree: 不正な解放によるトラップの場合
            SandboxTrap: その他のトラップの場合
        """
        export = self.exports[name]
        try:
            result = export.func(self._store, *(_as_i32(a) for a in args))
        except (wasmtime.Trap, wasmtime.WasmtimeError) as e:
            error_class = InvalidFree if name in _FREEING_EXPORTS else SandboxTrap
            raise error_class(f"{name}でトラップが発生しました: {e}") from e
        if result is None:
            return None
        return _u32(int(result))

    def abi_allocate(self, size: int) -> int:
        """領域を確保してアドレスを返します。失敗時は0を返します。"""
        return int(self.call("abi_allocate", size) or 0)

    def abi_deallocate(self, address: int, size: int) -> None:
        """領域を解放します。不正な解放はトラップになります。"""
        self.call("abi_deallocate", address, size)

    def abi_live_allocations(self) -> int:
        """ゲストが所有する領域を除いた確保済み領域の数を返します。"""
        return int(self.call("abi_live_allocations") or 0)

    def release_return_slot(self) -> None:
        """abi_echoの戻り値用スロットを解放します。"""
        self.call("abi_release_return_slot")


def _as_i32(value: int) -> int:
    if not -(2**31) <= value < 2**32:
        raise SandboxTrap(f"i32の範囲外の引数です: {value}")
    return value - 2**32 if value >= 2**31 else value


def status_to_error(status: int, context: str = "") -> Exception:
    """ゲスト関数のステータスコードを例外に変換します。"""
    message = f"{context}: ステータス {status}" if context else f"ステータス {status}"
    mapping = {
        STATUS_MISSING_INPUT: FileNotFound,
        STATUS_INPUT_TOO_SMALL: InputTooSmall,
        STATUS_EMPTY_IDENTITY: EmptyIdentity,
        STATUS_IO_FAILURE: StorageFailure,
        STATUS_OUT_OF_MEMORY: OutOfMemory,
        STATUS_IDENTITY_MISMATCH: IdentityMismatch,
        STATUS_INTEGRITY_FAILURE: IntegrityError,
        STATUS_MALFORMED_MAP: MalformedMap,
    }
    error_class = mapping.get(status, SandboxTrap)
    return error_class(message)
