"""SipHashを計算するモジュール。

ラウンド数を指定できるSipHash-c-dの実装を提供します。
IDのハッシュにはSipHash-1-3（ゼロ鍵）を使用します。
"""

import struct
from typing import Tuple

_MASK = 0xFFFFFFFFFFFFFFFF

KEY_SIZE = 16
DIGEST_SIZE = 8

# ID用の固定鍵（すべてゼロ）
ZERO_KEY = bytes(KEY_SIZE)


def _rotl(value: int, bits: int) -> int:
    return ((value << bits) | (value >> (64 - bits))) & _MASK


def _sipround(v0: int, v1: int, v2: int, v3: int) -> Tuple[int, int, int, int]:
    v0 = (v0 + v1) & _MASK
    v1 = _rotl(v1, 13)
    v1 ^= v0
    v0 = _rotl(v0, 32)
    v2 = (v2 + v3) & _MASK
    v3 = _rotl(v3, 16)
    v3 ^= v2
    v0 = (v0 + v3) & _MASK
    v3 = _rotl(v3, 21)
    v3 ^= v0
    v2 = (v2 + v1) & _MASK
    v1 = _rotl(v1, 17)
    v1 ^= v2
    v2 = _rotl(v2, 32)
    return v0, v1, v2, v3


def siphash(key: bytes, data: bytes, c_rounds: int = 1, d_rounds: int = 3) -> int:
    """SipHash-c-dで64ビットのハッシュ値を計算します。

    Args:
        key: 16バイトの鍵
        data: ハッシュ対象のデータ
        c_rounds: 圧縮ラウンド数
        d_rounds: 最終化ラウンド数

    Returns:
        64ビットの符号なし整数

    Raises:
        ValueError: 鍵の長さが16バイトでない場合
    """
    if len(key) != KEY_SIZE:
        raise ValueError(f"SipHashの鍵は{KEY_SIZE}バイトである必要があります")

    k0, k1 = struct.unpack("<QQ", key)
    v0 = 0x736F6D6570736575 ^ k0
    v1 = 0x646F72616E646F6D ^ k1
    v2 = 0x6C7967656E657261 ^ k0
    v3 = 0x7465646279746573 ^ k1

    tail = len(data) % 8
    end = len(data) - tail

    for offset in range(0, end, 8):
        m = int.from_bytes(data[offset : offset + 8], "little")
        v3 ^= m
        for _ in range(c_rounds):
            v0, v1, v2, v3 = _sipround(v0, v1, v2, v3)
        v0 ^= m

    # 最終ブロック: 残りのバイトと長さの下位8ビット
    m = ((len(data) & 0xFF) << 56) | int.from_bytes(data[end:], "little")
    v3 ^= m
    for _ in range(c_rounds):
        v0, v1, v2, v3 = _sipround(v0, v1, v2, v3)
    v0 ^= m

    v2 ^= 0xFF
    for _ in range(d_rounds):
        v0, v1, v2, v3 = _sipround(v0, v1, v2, v3)

    return v0 ^ v1 ^ v2 ^ v3


def siphash13_digest(data: bytes, key: bytes = ZERO_KEY) -> bytes:
    """SipHash-1-3の結果をリトルエンディアン8バイトで返します。"""
    return siphash(key, data, 1, 3).to_bytes(DIGEST_SIZE, "little")
