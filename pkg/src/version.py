"""バージョン情報を管理するモジュール。

リリース時にpyproject.tomlのversionと合わせて更新します。
"""

__version__ = "0.1.0"
