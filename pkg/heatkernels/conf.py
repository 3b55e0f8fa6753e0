from __future__ import annotations

from typing import Any

# settings.HEATKERNELS が無い（Django 未設定で import された）場合の既定値
DEFAULTS: dict[str, Any] = {
    "MAX_VERTICES": 5000,
    "DENSE_SPECTRAL_LIMIT": 3000,
    "T_GRID_POINTS": 40,
    "EXPONENT_SLACK": 0.05,
    "PROFILE_MAX_RADII": 64,
    "WINDOW_TOP_FRACTION": 0.2,
    "MIN_GRID_DECADES": 1.0,
    "CC_MAX_CONSTANT": 4.0,
    "CHAIN_PROBE_MAX_N": 64,
    "HYPOTHESIS_MAX_SPREAD": 50.0,
    "RESCOND_FLOOR": 0.05,
    "KERNEL_NOISE_FLOOR": 1e-12,
    "SOLVER_RTOL": 1e-12,
    "CERT_CENTERS": 8,
    "CERT_RADII": 6,
    "CERT_PAIRS": 400,
    "VOLUME_REFERENCE_CURVE": "midline",
    "REPORT_SCHEMA_VERSION": "1.0",
}


def get(name: str) -> Any:
    """
    パラメータを取得する。
    - Django 設定済みなら settings.HEATKERNELS の値を優先
    - 未設定（テストやライブラリ単体利用）なら DEFAULTS
    """
    if name not in DEFAULTS:
        raise KeyError(f"unknown heatkernels setting: {name}")
    try:
        from django.conf import settings  # noqa: WPS433

        if settings.configured:
            return getattr(settings, "HEATKERNELS", {}).get(name, DEFAULTS[name])
    except ImportError:
        pass
    return DEFAULTS[name]
