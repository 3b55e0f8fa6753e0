"""
Django settings for the heat kernel certification project.

Django は Web 画面ではなく、管理コマンド（CLI）・実行履歴DB・ログ設定の土台として使う。
数値計算モジュール（heatkernels.network 等）は Django を setup しなくても import できる。
"""

import os
from pathlib import Path
from django.core.exceptions import ImproperlyConfigured

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


def _load_dotenv_if_exists() -> None:
    """
    簡易 .env ローダー（追加依存なし）
    - 形式: KEY=VALUE
    - 先頭/末尾の空白は除去
    - # から始まる行はコメントとして無視
    - 既に環境変数にあるKEYは上書きしない
    """

    # リポジトリの制約でドットファイルが作りにくい場合があるため、
    # `.env` だけでなく `env` も読む。
    for env_filename in (".env", "env"):
        env_path = BASE_DIR / env_filename
        if not env_path.exists():
            continue

        for raw_line in env_path.read_text(encoding="utf-8").splitlines():
            line = raw_line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, value = line.split("=", 1)
            key = key.strip()
            value = value.strip().strip('"').strip("'")
            if key and key not in os.environ:
                os.environ[key] = value


_load_dotenv_if_exists()


def _env_number(name: str, default: float | int) -> float | int:
    """
    HEATKERNELS_<NAME> 環境変数を数値として読む（default の型に合わせる）。
    """
    raw = os.getenv(f"HEATKERNELS_{name}", "").strip()
    if not raw:
        return default
    try:
        return int(float(raw)) if isinstance(default, int) else float(raw)
    except ValueError as exc:
        raise ImproperlyConfigured(f"HEATKERNELS_{name} は数値で指定してください（値: {raw!r}）") from exc


# CLI 専用なので秘密鍵は固定値でよい（セッション/署名は使わない）
SECRET_KEY = os.getenv("DJANGO_SECRET_KEY", "heatkernels-cli-only-not-a-secret")

DEBUG = os.getenv("DJANGO_DEBUG", "").strip().lower() in {"1", "true", "yes", "on"}

ALLOWED_HOSTS: list[str] = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'heatkernels',
]


# Database
# https://docs.djangoproject.com/en/5.2/ref/settings/#databases

# 既定は SQLite（db.sqlite3）。実験履歴（ExperimentRun）を共有したい場合のみ PostgreSQL を使う。
# - PostgreSQL を使う場合は `env` / `.env` に POSTGRES_PASSWORD を設定する
# - 強制的に PostgreSQL を使いたい場合は USE_POSTGRES=1 を設定する
USE_POSTGRES = os.getenv("USE_POSTGRES", "").strip().lower() in {"1", "true", "yes", "on"}
POSTGRES_PASSWORD = os.getenv("POSTGRES_PASSWORD", "").strip()

if USE_POSTGRES:
    if not POSTGRES_PASSWORD:
        raise ImproperlyConfigured(
            "USE_POSTGRES=1 が設定されていますが POSTGRES_PASSWORD が未設定です。"
            "env/.env または環境変数で POSTGRES_PASSWORD を設定してください。"
        )
    DATABASES = {
        "default": {
            "ENGINE": "django.db.backends.postgresql",
            "NAME": os.getenv("POSTGRES_DB", "heatkernels"),
            "USER": os.getenv("POSTGRES_USER", "postgres"),
            "PASSWORD": POSTGRES_PASSWORD,
            "HOST": os.getenv("POSTGRES_HOST", "127.0.0.1"),
            "PORT": os.getenv("POSTGRES_PORT", "5432"),
        }
    }
else:
    DATABASES = {
        "default": {
            "ENGINE": "django.db.backends.sqlite3",
            "NAME": BASE_DIR / "db.sqlite3",
        }
    }


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Logging
# 数値モジュールは logging.getLogger(__name__) を使うので "heatkernels" 配下でまとめて制御する

HEATKERNELS_LOG_LEVEL = os.getenv("HEATKERNELS_LOG_LEVEL", "INFO").strip().upper() or "INFO"

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {"format": "%(asctime)s %(levelname)s %(name)s: %(message)s"},
    },
    "handlers": {
        "console": {"class": "logging.StreamHandler", "formatter": "plain"},
    },
    "loggers": {
        "heatkernels": {"handlers": ["console"], "level": HEATKERNELS_LOG_LEVEL, "propagate": False},
    },
}


# 体積の基準曲線: midline（inf / sup 包絡線の幾何平均）か median
HEATKERNELS_VOLUME_REFERENCE_CURVE = os.getenv("HEATKERNELS_VOLUME_REFERENCE_CURVE", "midline").strip().lower() or "midline"
if HEATKERNELS_VOLUME_REFERENCE_CURVE not in {"midline", "median"}:
    raise ImproperlyConfigured(
        f"HEATKERNELS_VOLUME_REFERENCE_CURVE は midline か median を指定してください（値: {HEATKERNELS_VOLUME_REFERENCE_CURVE!r}）"
    )

# 数値計算パラメータ（heatkernels.conf が既定値とマージする）

HEATKERNELS = {
    "MAX_VERTICES": _env_number("MAX_VERTICES", 5000),
    "DENSE_SPECTRAL_LIMIT": _env_number("DENSE_SPECTRAL_LIMIT", 3000),
    "T_GRID_POINTS": _env_number("T_GRID_POINTS", 40),
    "EXPONENT_SLACK": _env_number("EXPONENT_SLACK", 0.05),
    "PROFILE_MAX_RADII": _env_number("PROFILE_MAX_RADII", 64),
    "WINDOW_TOP_FRACTION": _env_number("WINDOW_TOP_FRACTION", 0.2),
    "MIN_GRID_DECADES": _env_number("MIN_GRID_DECADES", 1.0),
    "CC_MAX_CONSTANT": _env_number("CC_MAX_CONSTANT", 4.0),
    "CHAIN_PROBE_MAX_N": _env_number("CHAIN_PROBE_MAX_N", 64),
    "HYPOTHESIS_MAX_SPREAD": _env_number("HYPOTHESIS_MAX_SPREAD", 50.0),
    "RESCOND_FLOOR": _env_number("RESCOND_FLOOR", 0.05),
    "KERNEL_NOISE_FLOOR": _env_number("KERNEL_NOISE_FLOOR", 1e-12),
    "SOLVER_RTOL": _env_number("SOLVER_RTOL", 1e-12),
    "CERT_CENTERS": _env_number("CERT_CENTERS", 8),
    "CERT_RADII": _env_number("CERT_RADII", 6),
    "CERT_PAIRS": _env_number("CERT_PAIRS", 400),
    "VOLUME_REFERENCE_CURVE": HEATKERNELS_VOLUME_REFERENCE_CURVE,
}


# Default primary key field type
# https://docs.djangoproject.com/en/5.2/ref/settings/#default-auto-field

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'
