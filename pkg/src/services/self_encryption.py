"""ID付き自己暗号化を行うモジュール。

ファイルを3つ以上のチャンクに分割し、各チャンクのハッシュとデータ所有者のIDから
AES-128の鍵を導出して暗号化し、ハッシュ由来のパッドでXOR難読化します。
暗号化結果はデータマップ（復号鍵）と暗号化チャンク群です。
"""

import hashlib
import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence, Tuple

import numpy as np
from cryptography.hazmat.primitives import padding
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from src.errors import (
    BadLength,
    CipherError,
    EmptyIdentity,
    EmptySource,
    IdentityMismatch,
    IndexOutOfRange,
    InputTooSmall,
    IntegrityError,
    InvalidMap,
    MalformedMap,
)
from src.services.siphash import siphash13_digest
from src.types import CID, Digest, Identity, IdentityLike

logger = logging.getLogger(__name__)

# データマップの形式タグ
FORMAT_VERSION = "idse-v1"

MAX_CHUNK_SIZE = 1024 * 1024
MIN_CHUNKS = 3
MIN_INPUT_SIZE = 3

AES_KEY_SIZE = 16
AES_BLOCK_SIZE = 16
HASH_SIZE = 32


@dataclass(frozen=True)
class ChunkRecord:
    """データマップ内の1チャンク分の記録。"""

    index: int
    src_hash: Digest
    dst_hash: Digest
    src_size: int
    dst_size: int

    @property
    def cid(self) -> CID:
        """保存される暗号化チャンクのCID。"""
        return CID(self.dst_hash.hex())


@dataclass(frozen=True)
class DataMap:
    """復号に必要なチャンク情報の一覧（データマップ）。"""

    version: str
    file_size: int
    chunks: Tuple[ChunkRecord, ...]

    @property
    def src_hashes(self) -> List[Digest]:
        return [c.src_hash for c in self.chunks]

    @property
    def cids(self) -> List[CID]:
        """チャンク順のCID一覧。"""
        return [c.cid for c in self.chunks]

    def validate(self) -> None:
        """データマップの不変条件を検証します。

        Raises:
            InvalidMap: 不変条件が満たされない場合
        """
        if len(self.chunks) < MIN_CHUNKS:
            raise InvalidMap(
                f"チャンク数が不足しています: {len(self.chunks)} < {MIN_CHUNKS}"
            )
        for expected_index, chunk in enumerate(self.chunks):
            if chunk.index != expected_index:
                raise InvalidMap(
                    f"チャンクインデックスが不正です: {chunk.index} (期待値 {expected_index})"
                )
            if len(chunk.src_hash) != HASH_SIZE or len(chunk.dst_hash) != HASH_SIZE:
                raise InvalidMap(f"チャンク{chunk.index}のハッシュ長が不正です")
            if chunk.src_size < 1:
                raise InvalidMap(f"チャンク{chunk.index}のサイズが不正です")
            if chunk.dst_size != encrypted_size(chunk.src_size):
                raise InvalidMap(
                    f"チャンク{chunk.index}の暗号化後サイズが不正です: {chunk.dst_size}"
                )
        total = sum(c.src_size for c in self.chunks)
        if total != self.file_size:
            raise InvalidMap(
                f"チャンクサイズの合計がファイルサイズと一致しません: {total} != {self.file_size}"
            )


class ChunkMaterial(NamedTuple):
    """1チャンクの暗号化に使う鍵素材。"""

    key: bytes
    iv: bytes
    pad_seed: bytes


def encrypted_size(src_size: int) -> int:
    """PKCS#7パディング後のサイズを返します。"""
    return (src_size // AES_BLOCK_SIZE + 1) * AES_BLOCK_SIZE


def to_identity(identity: IdentityLike) -> Identity:
    """IDをバイト列に正規化します。

    Raises:
        EmptyIdentity: IDが空の場合
    """
    raw = identity.encode("utf-8") if isinstance(identity, str) else bytes(identity)
    if not raw:
        raise EmptyIdentity("IDが空です")
    return raw


def chunk_sizes(length: int, max_chunk_size: int = MAX_CHUNK_SIZE) -> List[int]:
    """指定長のデータを分割したときの各チャンクサイズを返します。

    Args:
        length: データ長
        max_chunk_size: チャンクの最大サイズ

    Returns:
        チャンクサイズのリスト（先頭 length mod N 個が1バイト大きい）

    Raises:
        InputTooSmall: lengthが3未満の場合
    """
    if length < MIN_INPUT_SIZE:
        raise InputTooSmall(
            f"入力は{MIN_INPUT_SIZE}バイト以上必要です（{length}バイト）"
        )
    count = max(MIN_CHUNKS, math.ceil(length / max_chunk_size))
    base, remainder = divmod(length, count)
    return [base + 1] * remainder + [base] * (count - remainder)


def split_chunks(data: bytes, max_chunk_size: int = MAX_CHUNK_SIZE) -> List[bytes]:
    """データを3つ以上のチャンクに分割します。"""
    chunks = []
    offset = 0
    for size in chunk_sizes(len(data), max_chunk_size):
        chunks.append(bytes(data[offset : offset + size]))
        offset += size
    return chunks


def join_chunks(chunks: Sequence[bytes]) -> bytes:
    """チャンクをインデックス順に連結します。"""
    return b"".join(chunks)


def chunk_hash(chunk: bytes) -> Digest:
    """チャンクのSHA-256ダイジェストを返します。"""
    return hashlib.sha256(chunk).digest()


def identity_digest(identity: IdentityLike) -> bytes:
    """IDのSipHash-1-3ダイジェスト（ゼロ鍵、リトルエンディアン8バイト）を返します。

    Raises:
        EmptyIdentity: IDが空の場合
    """
    return siphash13_digest(to_identity(identity))


def cycle_bytes(src: bytes, out_len: int) -> bytes:
    """srcを繰り返してout_lenバイトのバイト列を生成します。

    Raises:
        EmptySource: srcが空の場合
    """
    if not src:
        raise EmptySource("循環元のバイト列が空です")
    if out_len < 0:
        raise ValueError(f"出力長が負です: {out_len}")
    return np.resize(np.frombuffer(src, dtype=np.uint8), out_len).tobytes()


def xor_bytes(left: bytes, right: bytes) -> bytes:
    """同じ長さの2つのバイト列のXORを返します。"""
    if len(left) != len(right):
        raise ValueError("XORするバイト列の長さが一致しません")
    return np.bitwise_xor(
        np.frombuffer(left, dtype=np.uint8), np.frombuffer(right, dtype=np.uint8)
    ).tobytes()


def _material_with_pad(index: int, hashes: Sequence[Digest], id_pad: bytes) -> ChunkMaterial:
    count = len(hashes)
    if count < MIN_CHUNKS:
        raise InputTooSmall(f"チャンクハッシュは{MIN_CHUNKS}個以上必要です")
    if not 0 <= index < count:
        raise IndexOutOfRange(f"チャンクインデックスが範囲外です: {index}")

    # 鍵とIVは1つ前のチャンク、パッドは自身と2つ前のチャンクのハッシュから
    key_source = hashes[(index + count - 1) % count]
    key = xor_bytes(key_source[:AES_KEY_SIZE], id_pad)
    iv = key_source[AES_KEY_SIZE:HASH_SIZE]
    pad_seed = hashes[index] + hashes[(index + count - 2) % count]
    return ChunkMaterial(key=key, iv=iv, pad_seed=pad_seed)


def identity_pad(identity: IdentityLike) -> bytes:
    """IDダイジェストを鍵長まで循環させたパッドを返します。"""
    return cycle_bytes(identity_digest(identity), AES_KEY_SIZE)


def derive_chunk_material(
    index: int, hashes: Sequence[Digest], identity: IdentityLike
) -> ChunkMaterial:
    """チャンクの鍵・IV・パッド元を導出します。

    Args:
        index: チャンクインデックス
        hashes: 全チャンクの平文ハッシュ
        identity: データ所有者のID

    Returns:
        鍵素材

    Raises:
        EmptyIdentity: IDが空の場合
        IndexOutOfRange: indexが範囲外の場合
    """
    return _material_with_pad(index, hashes, identity_pad(identity))


def encrypt_chunk(chunk: bytes, material: ChunkMaterial) -> bytes:
    """チャンクをAES-128-CBC-PKCS#7で暗号化し、パッドでXOR難読化します。"""
    if not chunk:
        raise InputTooSmall("空のチャンクは暗号化できません")

    padder = padding.PKCS7(AES_BLOCK_SIZE * 8).padder()
    padded = padder.update(chunk) + padder.finalize()
    encryptor = Cipher(algorithms.AES(material.key), modes.CBC(material.iv)).encryptor()
    ciphertext = encryptor.update(padded) + encryptor.finalize()

    return xor_bytes(ciphertext, cycle_bytes(material.pad_seed, len(ciphertext)))


def decrypt_chunk(blob: bytes, material: ChunkMaterial) -> bytes:
    """難読化を解除してAES-128-CBC-PKCS#7で復号します。

    Raises:
        BadLength: blobの長さが16の正の倍数でない場合
        CipherError: パディングが不正な場合（IDや鍵の誤りによることが多い）
    """
    if not blob or len(blob) % AES_BLOCK_SIZE:
        raise BadLength(f"暗号化チャンクの長さが不正です: {len(blob)}")

    ciphertext = xor_bytes(blob, cycle_bytes(material.pad_seed, len(blob)))
    decryptor = Cipher(algorithms.AES(material.key), modes.CBC(material.iv)).decryptor()
    padded = decryptor.update(ciphertext) + decryptor.finalize()

    unpadder = padding.PKCS7(AES_BLOCK_SIZE * 8).unpadder()
    try:
        return unpadder.update(padded) + unpadder.finalize()
    except ValueError as e:
        raise CipherError(f"復号に失敗しました: {e}") from e


def self_encrypt(data: bytes, identity: IdentityLike) -> Tuple[DataMap, List[bytes]]:
    """データをID付き自己暗号化します。

    Args:
        data: 平文データ（3バイト以上）
        identity: データ所有者のID

    Returns:
        データマップと暗号化チャンクのリスト（同じインデックス順）

    Raises:
        InputTooSmall: データが3バイト未満の場合
        EmptyIdentity: IDが空の場合
    """
    id_pad = identity_pad(identity)
    chunks = split_chunks(data)
    hashes = [chunk_hash(c) for c in chunks]

    records = []
    blobs = []
    for index, chunk in enumerate(chunks):
        blob = encrypt_chunk(chunk, _material_with_pad(index, hashes, id_pad))
        blobs.append(blob)
        records.append(
            ChunkRecord(
                index=index,
                src_hash=hashes[index],
                dst_hash=chunk_hash(blob),
                src_size=len(chunk),
                dst_size=len(blob),
            )
        )

    logger.debug(f"自己暗号化が完了しました: {len(data)}バイト, {len(chunks)}チャンク")
    return DataMap(FORMAT_VERSION, len(data), tuple(records)), blobs


def self_decrypt(
    data_map: DataMap, blobs: Sequence[bytes], identity: IdentityLike
) -> bytes:
    """データマップと暗号化チャンクから元のデータを復元します。

    Args:
        data_map: データマップ
        blobs: 暗号化チャンク（データマップと同じインデックス順）
        identity: データ所有者のID

    Returns:
        復元したデータ

    Raises:
        MalformedMap: データマップが不正、またはチャンク数が一致しない場合
        IntegrityError: 暗号化チャンクのハッシュが一致しない場合
        IdentityMismatch: IDが暗号化時と異なる場合
    """
    try:
        data_map.validate()
    except InvalidMap as e:
        raise MalformedMap(str(e)) from e
    if len(blobs) != len(data_map.chunks):
        raise MalformedMap(
            f"チャンク数がデータマップと一致しません: {len(blobs)} != {len(data_map.chunks)}"
        )

    id_pad = identity_pad(identity)
    hashes = data_map.src_hashes

    plains = []
    for record, blob in zip(data_map.chunks, blobs):
        if chunk_hash(blob) != record.dst_hash:
            raise IntegrityError(f"チャンク{record.index}が改ざんされています")

        material = _material_with_pad(record.index, hashes, id_pad)
        try:
            plain = decrypt_chunk(blob, material)
        except CipherError as e:
            raise IdentityMismatch(
                f"チャンク{record.index}を復号できません（IDが異なります）"
            ) from e
        if chunk_hash(plain) != record.src_hash:
            raise IdentityMismatch(
                f"チャンク{record.index}の復号結果が一致しません（IDが異なります）"
            )
        plains.append(plain)

    restored = join_chunks(plains)
    if len(restored) != data_map.file_size:
        raise MalformedMap("復元したデータのサイズがデータマップと一致しません")
    return restored
