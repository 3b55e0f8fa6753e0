from __future__ import annotations

import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Optional

from django.core.management.base import CommandError
from pydantic import ValidationError

from heatkernels.exceptions import ExitStatus, HeatKernelError
from heatkernels.schemas import ExperimentConfig, GeneratorSpec

logger = logging.getLogger("heatkernels.commands")


def read_text(path: str) -> str:
    p = Path(path)
    if not p.exists():
        raise CommandError(f"設定ファイルが見つかりません: {p}", returncode=int(ExitStatus.INVALID_INPUT))
    return p.read_text(encoding="utf-8")


def load_generator_spec(path: str) -> GeneratorSpec:
    with translate_errors():
        return GeneratorSpec.model_validate_json(read_text(path))


def load_experiment_config(path: str, **flags: Any) -> ExperimentConfig:
    """
    設定ファイルを読み、ファイルに書かれていない項目をフラグで補う。
    両方に値があって食い違う場合は設定ファイルを優先し、警告を出す。
    """
    with translate_errors():
        config = ExperimentConfig.model_validate_json(read_text(path))
    updates: dict[str, Any] = {}
    for name, value in flags.items():
        if value is None:
            continue
        current = getattr(config, name)
        if current is None or name not in config.model_fields_set:
            updates[name] = value
        elif current != value:
            logger.warning("--%s=%s は設定ファイルの値 %s と食い違うため無視します", name, value, current)
    return config.model_copy(update=updates) if updates else config


@contextmanager
def translate_errors() -> Iterator[None]:
    """HeatKernelError / 検証エラーを終了コード付きの CommandError にする。"""
    try:
        yield
    except HeatKernelError as exc:
        raise CommandError(f"{exc.reason}: {exc}", returncode=int(exc.exit_status)) from exc
    except ValidationError as exc:
        raise CommandError(f"invalid_input: {exc}", returncode=int(ExitStatus.INVALID_INPUT)) from exc
    except (ValueError, OSError) as exc:
        raise CommandError(f"invalid_input: {exc}", returncode=int(ExitStatus.INVALID_INPUT)) from exc


def output_dir(out: Optional[str], config: Optional[ExperimentConfig] = None) -> Path:
    target = out or (config.out if config is not None else None)
    if not target:
        raise CommandError("--out（または設定の out）を指定してください", returncode=int(ExitStatus.INVALID_INPUT))
    path = Path(target)
    path.mkdir(parents=True, exist_ok=True)
    return path
