from __future__ import annotations

import hashlib
import json
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

GeneratorFamily = Literal[
    "path",
    "star",
    "binary_tree",
    "tree",
    "sierpinski",
    "random_recursive_gasket",
    "gw_dendrite",
    "vicsek",
    "two_weighted_tree",
]

# family ごとに必須の項目
_REQUIRED: dict[str, tuple[str, ...]] = {
    "path": ("n",),
    "star": ("k",),
    "binary_tree": ("depth",),
    "tree": ("parents",),
    "sierpinski": ("level",),
    "random_recursive_gasket": ("level", "weights"),
    "gw_dendrite": ("size",),
    "vicsek": ("level",),
    "two_weighted_tree": ("depth",),
}


class GeneratorSpec(BaseModel):
    """
    回路網の生成指定（`gen` コマンドと ExperimentConfig.generator）。
    measure は記録用のラベルで、実際の規則は family が決める。
    """

    model_config = ConfigDict(extra="forbid")

    family: GeneratorFamily
    n: Optional[int] = Field(default=None, ge=2, le=5000)
    k: Optional[int] = Field(default=None, ge=1, le=4999)
    depth: Optional[int] = Field(default=None, ge=1, le=11)
    level: Optional[int] = Field(default=None, ge=0, le=6)
    size: Optional[int] = Field(default=None, ge=2, le=5000)
    parents: Optional[list[Optional[int]]] = None
    weights: Optional[list[float]] = None
    law: Optional[list[float]] = None
    seed: Optional[int] = Field(default=None, ge=0)
    measure: Literal["uniform", "self-similar", "per-cell random"] = "uniform"

    @model_validator(mode="after")
    def _check_required(self) -> "GeneratorSpec":
        missing = [name for name in _REQUIRED[self.family] if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.family} needs {', '.join(missing)}")
        return self

    @field_validator("weights", "law")
    @classmethod
    def _non_negative(cls, value: Optional[list[float]]) -> Optional[list[float]]:
        if value is not None and any(v < 0 for v in value):
            raise ValueError("weights must be non-negative")
        return value


class ExperimentConfig(BaseModel):
    """
    1回の実験（生成 → 解析 → 証明書）の指定。レポートにはこれをそのまま埋め込む。
    """

    model_config = ConfigDict(extra="forbid")

    name: str = "experiment"
    generator: GeneratorSpec
    mode: Literal["ondiag", "offdiag", "local", "fluct"] = "ondiag"
    family: Literal["uniform", "polynomial", "logarithmic"] = "uniform"
    window: Optional[tuple[float, float]] = None
    slack: float = Field(default=0.05, gt=0, lt=1)
    policy: Literal["margin", "closed-form"] = "margin"
    local_vertex: Optional[str] = None
    seed: Optional[int] = Field(default=None, ge=0)
    out: Optional[str] = None

    @field_validator("window")
    @classmethod
    def _ordered_window(cls, value: Optional[tuple[float, float]]) -> Optional[tuple[float, float]]:
        if value is not None and not 0 < value[0] < value[1]:
            raise ValueError("window must satisfy 0 < r_min < r_max")
        return value

    def canonical_json(self) -> str:
        """キー順を固定した JSON（ダイジェストとバンドル埋め込み用）。"""
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, ensure_ascii=False)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()
