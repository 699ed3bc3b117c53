"""共通の型定義モジュール。

アプリケーション全体で使用される型定義を提供します。
"""

import os
from typing import NewType, Union

# 32バイトのSHA-256ダイジェスト
Digest = bytes

# データ所有者のID（1バイト以上のバイト列）
Identity = bytes

# IDとして受け付ける入力（文字列はUTF-8でエンコードされる）
IdentityLike = Union[bytes, str]

# チャンクのコンテンツ識別子（SHA-256の小文字16進表記、64文字）
CID = NewType("CID", str)

# パスとして受け付ける入力
PathLike = Union[str, "os.PathLike[str]"]
