"""例外定義モジュール。

アプリケーション全体で使用される例外クラスを提供します。
各例外はCLIの終了コード（exit_code）を持ち、src.mainで終了コードに変換されます。
"""

# 終了コード
EXIT_OK = 0
EXIT_GENERAL = 1
EXIT_USAGE = 2
EXIT_NOT_FOUND = 3
EXIT_CRYPTO = 4
EXIT_STORAGE = 5


class IbseError(Exception):
    """アプリケーション例外の基底クラス。"""

    exit_code = EXIT_GENERAL


# 入力・利用方法のエラー
class UsageError(IbseError):
    """不正な入力や引数によるエラー。"""

    exit_code = EXIT_USAGE


class InputTooSmall(UsageError):
    """入力データが3バイト未満の場合のエラー。"""


class EmptyIdentity(UsageError):
    """空のIDが指定された場合のエラー。"""


class EmptySource(UsageError):
    """空のバイト列を循環させようとした場合のエラー。"""


class IndexOutOfRange(UsageError):
    """チャンクインデックスが範囲外の場合のエラー。"""


class EmptyCids(UsageError):
    """CIDリストが空のアセットを作成しようとした場合のエラー。"""


class InvalidAsset(UsageError):
    """アセットのフィールドが不正な場合のエラー。"""


# 未検出エラー
class NotFoundError(IbseError):
    """対象が見つからない場合のエラー。"""

    exit_code = EXIT_NOT_FOUND


class FileNotFound(NotFoundError):
    """入力ファイルが存在しない場合のエラー。"""


class ChunkNotFound(NotFoundError):
    """チャンクストアに指定CIDのオブジェクトが存在しない場合のエラー。"""


class AssetNotFound(NotFoundError):
    """台帳に指定IDのアセットが存在しない場合のエラー。"""


# 暗号・整合性エラー
class CryptoError(IbseError):
    """暗号処理または整合性検証のエラー。"""

    exit_code = EXIT_CRYPTO


class BadLength(CryptoError):
    """暗号化チャンクの長さが16の倍数でない場合のエラー。"""


class CipherError(CryptoError):
    """AES復号時のパディング不正など、暗号処理の失敗。"""


class IntegrityError(CryptoError):
    """保存されたチャンクのハッシュがデータマップと一致しない場合のエラー。"""


class CorruptObject(IntegrityError):
    """ストア内のオブジェクトがCIDと一致しなくなった場合のエラー。"""


class IdentityMismatch(CryptoError):
    """暗号化時と異なるIDで復号しようとした場合のエラー。"""


class DataMapError(CryptoError):
    """データマップ関連エラーの基底クラス。"""


class MalformedMap(DataMapError):
    """データマップの構文・構造が不正な場合のエラー。"""


class UnsupportedVersion(DataMapError):
    """データマップのバージョンが未対応の場合のエラー。"""


class InvalidMap(DataMapError):
    """データマップの不変条件が満たされない場合のエラー。"""


# ストレージエラー
class StorageFailure(IbseError):
    """ファイルシステムへの読み書きに失敗した場合のエラー。"""

    exit_code = EXIT_STORAGE


class AlreadyExists(StorageFailure):
    """同じIDのアセットが既に存在する場合のエラー。"""


# サンドボックス関連エラー
class SandboxError(IbseError):
    """サンドボックス関連エラーの基底クラス。"""


class SandboxTrap(SandboxError):
    """ゲスト実行中のトラップ（範囲外アクセスなど）。"""


class OutOfMemory(SandboxTrap):
    """線形メモリの確保に失敗した場合のトラップ。"""


class InvalidFree(SandboxTrap):
    """未確保または解放済み領域の解放によるトラップ。"""


class InvocationError(SandboxError):
    """ホストからのゲスト関数呼び出しの失敗。"""


class UnknownFunction(InvocationError):
    """エクスポートされていない関数を呼び出した場合のエラー。"""


class KindMismatch(InvocationError):
    """宣言された戻り値の種類と要求された種類が異なる場合のエラー。"""


# ベンチマーク
class InsufficientData(IbseError):
    """線形回帰に必要なサイズ数が不足している場合のエラー。"""

    exit_code = EXIT_USAGE
