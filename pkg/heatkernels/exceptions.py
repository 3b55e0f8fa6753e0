from __future__ import annotations

from enum import IntEnum
from typing import Any


class ExitStatus(IntEnum):
    """
    CLI の終了コード（run_experiment / 管理コマンド共通）。
    """

    OK = 0
    VIOLATED = 10
    INFEASIBLE_EXPONENTS = 11
    HYPOTHESES_NOT_MET = 12
    WINDOW_TOO_SMALL = 13
    INVALID_INPUT = 14
    NUMERICAL_INVARIANT = 15


class HeatKernelError(Exception):
    """
    heatkernels の例外の基底。
    exit_status / reason は CLI がそのまま終了コードと機械可読な理由に使う。
    """

    exit_status: ExitStatus = ExitStatus.INVALID_INPUT
    reason: str = "invalid_input"

    def as_dict(self) -> dict[str, Any]:
        return {"code": int(self.exit_status), "reason": self.reason, "detail": str(self)}


class NetworkValidationError(HeatKernelError, ValueError):
    """
    回路網の記述が不正（重み非正・辺の重複・自己ループ等）。item に問題の要素を入れる。
    """

    reason = "invalid_network"

    def __init__(self, message: str, *, item: Any = None) -> None:
        super().__init__(message if item is None else f"{message}: {item!r}")
        self.item = item


class DisconnectedNetworkError(NetworkValidationError):
    reason = "disconnected"


class OverlappingSetsError(HeatKernelError, ValueError):
    reason = "overlapping_sets"


class InvalidRadiusError(HeatKernelError, ValueError):
    reason = "invalid_radius"


class NoComplementError(HeatKernelError):
    """
    球が全頂点を含み、補集合が空（脱出抵抗・Green 核が定義できない）。
    """

    reason = "no_complement"


class OutsideBallError(HeatKernelError, ValueError):
    reason = "outside_ball"


class DenseLimitError(HeatKernelError):
    """
    密な固有値分解の上限を超えた（打ち切りはしない）。
    """

    reason = "dense_limit"


class FitError(HeatKernelError):
    reason = "fit_failure"


class ScalingViolationError(HeatKernelError):
    exit_status = ExitStatus.VIOLATED
    reason = "scaling_violation"

    def __init__(self, inequality: str, witness: dict[str, float]) -> None:
        super().__init__(f"{inequality} が成り立たない点があります: {witness}")
        self.inequality = inequality
        self.witness = witness


class InfeasibleExponentsError(HeatKernelError):
    exit_status = ExitStatus.INFEASIBLE_EXPONENTS
    reason = "infeasible_exponents"

    def __init__(self, inequality: str, detail: str = "") -> None:
        super().__init__(f"infeasible (b,eps): {inequality}" + (f" ({detail})" if detail else ""))
        self.inequality = inequality


class HypothesesNotMetError(HeatKernelError):
    exit_status = ExitStatus.HYPOTHESES_NOT_MET
    reason = "hypotheses_not_met"


class WindowTooSmallError(HeatKernelError):
    exit_status = ExitStatus.WINDOW_TOO_SMALL
    reason = "window_too_small"


class NumericalInvariantError(HeatKernelError, AssertionError):
    """
    数値計算の内部不変条件違反（ソルバのバグを示す）。
    """

    exit_status = ExitStatus.NUMERICAL_INVARIANT
    reason = "numerical_invariant"


class KernelEnergyViolation(NumericalInvariantError):
    reason = "kernel_energy_violation"
