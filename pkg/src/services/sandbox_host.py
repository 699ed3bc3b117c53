"""サンドボックスモジュールを呼び出すホスト側ラッパー。

引数の文字列をゲストのメモリに書き込み、そのアドレスを渡して関数を呼び出します。
引数用に確保した領域は記録され、shutdown時にまとめて解放されます。
"""

import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, List, NamedTuple, Optional, Sequence, Tuple, Union

import wasmtime

from src.errors import (
    InvocationError,
    KindMismatch,
    SandboxTrap,
    UnknownFunction,
)
from src.services.sandbox import (
    DATA_MAP_FILENAME,
    DEFAULT_MAX_PAGES,
    STATUS_OK,
    GuestModule,
    ReturnKind,
    status_to_error,
)
from src.types import PathLike

logger = logging.getLogger(__name__)

OUT_CELL_SIZE = 8


@dataclass
class OutInt:
    """数値出力引数。呼び出し後にvalueへ結果が入ります。"""

    value: Optional[int] = None


Argument = Union[int, bytes, str, OutInt]


class Allocation(NamedTuple):
    """引数用に確保したゲストメモリの領域。"""

    address: int
    size: int


@dataclass
class AllocationLog:
    """引数用に確保した領域の記録。"""

    entries: List[Allocation] = field(default_factory=list)

    def record(self, address: int, size: int) -> None:
        self.entries.append(Allocation(address, size))

    def drain(self) -> List[Allocation]:
        entries, self.entries = self.entries, []
        return entries

    def __len__(self) -> int:
        return len(self.entries)


class SandboxWrapper:
    """サンドボックスモジュールのホスト側ラッパー。

    with文で使用すると、終了時にshutdownが呼ばれます。
    """

    def __init__(
        self,
        preopen_dir: PathLike,
        max_pages: int = DEFAULT_MAX_PAGES,
        inherit_stdout: bool = False,
    ) -> None:
        """ラッパーを初期化します。

        Args:
            preopen_dir: ゲストに公開するディレクトリ
            max_pages: ゲストの線形メモリの最大ページ数
            inherit_stdout: ゲストの標準出力を引き継ぐか
        """
        self.preopen_dir = Path(preopen_dir)
        self.module = GuestModule(
            self.preopen_dir, max_pages=max_pages, inherit_stdout=inherit_stdout
        )
        self.allocations = AllocationLog()
        self._lock = threading.Lock()
        self._closed = False
        logger.debug(f"サンドボックスを起動しました: {self.preopen_dir}")

    def __enter__(self) -> "SandboxWrapper":
        return self

    def __exit__(self, *exc_info: Any) -> None:
        self.shutdown()

    def _copy_in(self, data: bytes) -> int:
        if b"\x00" in data:
            raise InvocationError("引数にゼロバイトを含めることはできません")
        payload = data + b"\x00"
        address = self.module.abi_allocate(len(payload))
        if address == 0:
            raise InvocationError(f"引数用のメモリを確保できません: {len(payload)}バイト")
        self.module.memory.write(address, payload)
        self.allocations.record(address, len(payload))
        return address

    def _marshal(self, args: Sequence[Argument]) -> Tuple[List[int], List[Tuple[OutInt, int]]]:
        raw: List[int] = []
        outputs: List[Tuple[OutInt, int]] = []
        for arg in args:
            if isinstance(arg, OutInt):
                address = self.module.abi_allocate(OUT_CELL_SIZE)
                if address == 0:
                    raise InvocationError("出力セルを確保できません")
                self.module.memory.write(address, bytes(OUT_CELL_SIZE))
                self.allocations.record(address, OUT_CELL_SIZE)
                outputs.append((arg, address))
                raw.append(address)
            elif isinstance(arg, bool):
                raise InvocationError("真偽値は引数に使用できません")
            elif isinstance(arg, int):
                raw.append(arg)
            elif isinstance(arg, str):
                raw.append(self._copy_in(arg.encode("utf-8")))
            elif isinstance(arg, (bytes, bytearray)):
                raw.append(self._copy_in(bytes(arg)))
            else:
                raise InvocationError(f"未対応の引数の型です: {type(arg).__name__}")
        return raw, outputs

    def invoke(
        self, name: str, return_kind: ReturnKind, args: Sequence[Argument] = ()
    ) -> Union[None, int, str]:
        """ゲスト関数を呼び出します。

        Args:
            name: エクスポート名
            return_kind: 期待する戻り値の種類
            args: 引数（整数、文字列、バイト列、またはOutInt）

        Returns:
            UNITはNone、INTEGERは整数、BYTE_STRING_ADDRESSは復号した文字列

        Raises:
            UnknownFunction: エクスポートされていない関数の場合
            KindMismatch: 戻り値の種類が宣言と異なる場合
            InvocationError: 引数の数が異なる場合、または呼び出しが失敗した場合
        """
        with self._lock:
            if self._closed:
                raise InvocationError("サンドボックスは終了しています")
            export = self.module.exports.get(name)
            if export is None:
                raise UnknownFunction(f"エクスポートされていない関数です: {name}")
            if export.return_kind is not return_kind:
                raise KindMismatch(
                    f"{name}の戻り値は{export.return_kind.value}です"
                    f"（要求: {return_kind.value}）"
                )
            if len(args) != export.param_count:
                raise InvocationError(
                    f"{name}の引数の数が違います: {len(args)} != {export.param_count}"
                )

            try:
                raw, outputs = self._marshal(args)
                result = self.module.call(name, *raw)
                for out, address in outputs:
                    out.value = int.from_bytes(
                        self.module.memory.read(address, OUT_CELL_SIZE), "little"
                    )
                if return_kind is ReturnKind.UNIT:
                    return None
                if return_kind is ReturnKind.INTEGER:
                    return int(result or 0)
                return self.module.memory.read_cstring(int(result or 0)).decode("utf-8")
            except (SandboxTrap, wasmtime.Trap, wasmtime.WasmtimeError) as e:
                raise InvocationError(f"{name}の実行中にトラップが発生しました: {e}") from e
            except UnicodeError as e:
                raise InvocationError(f"{name}の文字列がUTF-8ではありません: {e}") from e

    def live_allocations(self) -> int:
        """ゲスト内の確保済み領域の数を返します。"""
        value = self.invoke("abi_live_allocations", ReturnKind.INTEGER)
        assert isinstance(value, int)
        return value

    def shutdown(self) -> None:
        """引数用の領域を解放してサンドボックスを終了します。"""
        with self._lock:
            if self._closed:
                return
            for allocation in self.allocations.drain():
                self.module.abi_deallocate(allocation.address, allocation.size)
            self.module.release_return_slot()
            self._closed = True
        logger.debug(f"サンドボックスを終了しました: {self.preopen_dir}")


def _guest_path(wrapper: SandboxWrapper, path: PathLike) -> str:
    # ゲストからは許可ディレクトリを "/" として見せる
    resolved = Path(path).resolve()
    root = wrapper.preopen_dir.resolve()
    if not resolved.is_relative_to(root):
        raise InvocationError(f"許可ディレクトリ外のパスです: {path}")
    return "/" + resolved.relative_to(root).as_posix()


def encrypt_file(
    wrapper: SandboxWrapper, file_path: PathLike, identity: bytes, out_dir: PathLike
) -> Path:
    """サンドボックス内でファイルを暗号化し、データマップのパスを返します。

    Raises:
        IbseError: ゲストがエラーステータスを返した場合（ステータスに応じたサブクラス）
    """
    status = wrapper.invoke(
        "abi_encrypt",
        ReturnKind.INTEGER,
        [_guest_path(wrapper, file_path), identity, _guest_path(wrapper, out_dir)],
    )
    if status != STATUS_OK:
        raise status_to_error(int(status or 0), f"暗号化に失敗しました: {file_path}")
    return Path(out_dir) / DATA_MAP_FILENAME


def decrypt_file(
    wrapper: SandboxWrapper,
    map_path: PathLike,
    chunks_dir: PathLike,
    identity: bytes,
    out_path: PathLike,
) -> Path:
    """サンドボックス内でファイルを復号し、出力パスを返します。

    Raises:
        IbseError: ゲストがエラーステータスを返した場合（ステータスに応じたサブクラス）
    """
    status = wrapper.invoke(
        "abi_decrypt",
        ReturnKind.INTEGER,
        [
            _guest_path(wrapper, map_path),
            _guest_path(wrapper, chunks_dir),
            identity,
            _guest_path(wrapper, out_path),
        ],
    )
    if status != STATUS_OK:
        raise status_to_error(int(status or 0), f"復号に失敗しました: {map_path}")
    return Path(out_path)


def chunk_count(wrapper: SandboxWrapper, file_path: PathLike) -> int:
    """サンドボックス内でファイルのチャンク数を求めます。"""
    out = OutInt()
    status = wrapper.invoke(
        "abi_chunk_count", ReturnKind.INTEGER, [_guest_path(wrapper, file_path), out]
    )
    if status != STATUS_OK:
        raise status_to_error(int(status or 0), f"チャンク数を取得できません: {file_path}")
    assert out.value is not None
    return out.value
