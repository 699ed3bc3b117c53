"""
設定を管理するモジュール。

ホームディレクトリ内のconfig.jsonで設定を管理し、ユーザーが容易に設定を変更できるようにします。
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, ClassVar, Dict, Optional

from src.utils.paths import CONFIG_FILENAME, resolve_home

# グローバル設定オブジェクト
_CONFIG: Optional["AppConfig"] = None

ENGINE_NATIVE = "native"
ENGINE_SANDBOX = "sandbox"


def get_config() -> "AppConfig":
    """
    グローバル設定オブジェクトを取得します。存在しない場合は新規作成します。

    Returns:
        AppConfig: 設定オブジェクト
    """
    global _CONFIG
    if _CONFIG is None:
        _CONFIG = AppConfig()
    return _CONFIG


@dataclass
class AppConfig:
    """
    設定を管理するデータクラス。

    homeを空にすると環境変数IBSE_HOME、次に~/.ibseを使用します。
    """

    # ホームディレクトリ（設定ファイルには保存しない）
    home: str = ""

    # ストレージ設定（空の場合はホーム配下の既定パス）
    store_root: str = ""
    ledger_path: str = ""
    store_backend: str = "directory"  # directory / memory

    # 暗号化設定
    engine: str = ENGINE_NATIVE  # native / sandbox
    identity_override: str = ""  # 空の場合はウォレットの公開鍵を使用

    # サンドボックス設定
    inherit_sandbox_stdout: bool = False
    sandbox_max_pages: int = 16384

    # ベンチマーク設定
    bench_runs: int = 10
    bench_seed: int = 0

    # ログ設定
    enable_log_file: bool = False  # ログファイル出力の有効/無効
    enable_verbose_log: bool = False  # 詳細ログ出力（True: DEBUG、False: WARNING）

    # コマンドライン引数による一時的な上書き前の値（設定ファイルには保存しない）
    _overrides: Dict[str, Any] = field(default_factory=dict, repr=False)

    # クラス変数
    _logger: ClassVar[logging.Logger] = logging.getLogger(__name__)

    def __post_init__(self) -> None:
        """初期化後の処理。設定ファイルがあれば読み込む。"""
        self.home = str(resolve_home(self.home or None))
        self.config_path = self.home_path / CONFIG_FILENAME

        if self.config_path.exists():
            self._load_from_file(self.config_path)
            self._logger.info(f"設定ファイルを読み込みました: {self.config_path}")
        else:
            # 設定ファイルが存在しない場合は作成する
            self.save()
            self._logger.info(
                f"デフォルト設定ファイルを作成しました: {self.config_path}"
            )

    @property
    def home_path(self) -> Path:
        return Path(self.home)

    @property
    def store_path(self) -> Path:
        """チャンクストアのディレクトリ。"""
        return Path(self.store_root) if self.store_root else self.home_path / "store"

    @property
    def ledger_file(self) -> Path:
        """台帳ファイルのパス。"""
        return Path(self.ledger_path) if self.ledger_path else self.home_path / "ledger.json"

    def apply_overrides(self, **overrides: Any) -> None:
        """この実行の間だけ有効な設定の上書きを適用します。

        上書きした値はsaveしても設定ファイルには書き込まれません。
        Noneまたは空文字列の値は無視します。

        Raises:
            ValueError: 存在しない設定項目の場合
        """
        for key, value in overrides.items():
            if key == "home" or key.startswith("_") or not hasattr(self, key):
                raise ValueError(f"上書きできない設定項目です: {key}")
            if value is None or value == "":
                continue
            self._overrides.setdefault(key, getattr(self, key))
            setattr(self, key, value)
            self._logger.debug(f"設定を上書きしました: {key}={value}")

    def _load_from_file(self, path: Path) -> None:
        """ファイルから設定を読み込みます。

        Args:
            path: 設定ファイルのパス
        """
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)

            # 有効なフィールドのみを設定
            for key, value in data.items():
                if key != "home" and not key.startswith("_") and hasattr(self, key):
                    setattr(self, key, value)
        except Exception as e:
            self._logger.error(f"設定ファイルの読み込みに失敗しました: {e}")

    def save(self, path: Optional[str] = None) -> None:
        """現在の設定をJSONファイルに保存します。

        Args:
            path: 保存先のパス（省略時はホームのconfig.json）
        """
        save_path = Path(path) if path else self.config_path

        try:
            save_path.parent.mkdir(parents=True, exist_ok=True)

            with open(save_path, "w", encoding="utf-8") as f:
                config_dict = {
                    k: v
                    for k, v in asdict(self).items()
                    if not k.startswith("_") and k != "home"
                }
                config_dict.update(self._overrides)
                json.dump(config_dict, f, indent=2, ensure_ascii=False)

            self._logger.info(f"設定を保存しました: {save_path}")
        except Exception as e:
            self._logger.error(f"設定の保存に失敗しました: {e}")

    @classmethod
    def load(cls, path: str, home: str = "") -> "AppConfig":
        """ファイルから設定を読み込んで新しいインスタンスを返します。

        Args:
            path: 設定ファイルのパス
            home: ホームディレクトリ

        Returns:
            AppConfig: 読み込んだ設定
        """
        config = cls(home=home)
        config._load_from_file(Path(path))
        return config
