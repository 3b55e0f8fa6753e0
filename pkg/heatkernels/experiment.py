from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd
from django.core.exceptions import AppRegistryNotReady, ImproperlyConfigured
from django.db import DatabaseError

from . import conf
from .bounds import (
    BoundCertificate,
    certify_exit_tail,
    certify_exit_times,
    certify_fluctuations,
    certify_local,
    certify_neardiag,
    certify_offdiag,
    certify_ondiag,
    derive_exponents,
    escape_profile,
    exit_samples,
)
from .exceptions import ExitStatus, HeatKernelError, HypothesesNotMetError
from .generators import generate
from .heat import diagonal_volume_check, kernel_energy_check, spectral_decompose, time_grid, ultracontractivity_profile
from .network import MeasuredNetwork
from .resistance import probe_chaining, resistance_metric
from .schemas import ExperimentConfig
from .volume import eval_scale, fit_model, scaling_checks, volume_profile

logger = logging.getLogger(__name__)

HYPOTHESES_NOT_MET = "hypotheses_not_met"


def jsonable(value: Any) -> Any:
    """
    numpy 型を Python 型に、非有限の浮動小数点を文字列（"inf" / "-inf" / "nan"）にする。
    """
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return value


def dump_json(payload: Any) -> str:
    return json.dumps(jsonable(payload), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


@dataclass
class ReportBundle:
    """
    1回の実験の成果物。payloads は JSON ファイル名 → 内容、tables は CSV 名 → DataFrame。
    時刻は含めない（同じ設定なら同じバイト列になる）。
    """

    config: ExperimentConfig
    payloads: dict[str, Any] = field(default_factory=dict)
    tables: dict[str, pd.DataFrame] = field(default_factory=dict)
    certificates: list[BoundCertificate] = field(default_factory=list)
    status: ExitStatus = ExitStatus.OK
    reason: str = "ok"

    @property
    def summary(self) -> dict[str, Any]:
        return self.payloads["summary.json"]

    @property
    def verdicts(self) -> dict[str, str]:
        return self.summary["verdicts"]


def _status_from_verdicts(verdicts: dict[str, str]) -> tuple[ExitStatus, str]:
    if any(v == "violated" for v in verdicts.values()):
        return ExitStatus.VIOLATED, "certificate_violated"
    if any(v == HYPOTHESES_NOT_MET for v in verdicts.values()):
        return ExitStatus.HYPOTHESES_NOT_MET, HYPOTHESES_NOT_MET
    return ExitStatus.OK, "ok"


def _local_vertex(net: MeasuredNetwork, config: ExperimentConfig, default: int) -> int:
    return net.index(config.local_vertex) if config.local_vertex is not None else default


def run_experiment(config: ExperimentConfig, out_dir: Optional[Path | str] = None) -> ReportBundle:
    """
    生成 → 抵抗距離 → 体積プロファイル → モデル → 指数 → 証明書 を実行し、バンドルを返す（out_dir があれば書き出す）。
    HeatKernelError は握りつぶさずに status/reason へ写し、途中までの成果物と一緒に返す。
    """
    bundle = ReportBundle(config=config)
    verdicts: dict[str, str] = {}
    metrics: dict[str, Any] = {"slopes": {}, "spreads": {}}
    try:
        _run(config, bundle, verdicts, metrics)
        status, reason = _status_from_verdicts(verdicts)
        detail = None
    except HeatKernelError as exc:
        logger.warning("experiment %s stopped: %s", config.name, exc)
        status, reason, detail = exc.exit_status, exc.reason, str(exc)

    bundle.status, bundle.reason = status, reason
    bundle.payloads["summary.json"] = jsonable(
        {
            "schema_version": conf.get("REPORT_SCHEMA_VERSION"),
            "config": config.model_dump(mode="json"),
            "config_digest": config.digest(),
            "status": {"code": int(status), "reason": reason, "detail": detail},
            "verdicts": verdicts,
            "metrics": metrics,
        }
    )
    logger.info("experiment %s finished: status=%d (%s) verdicts=%s", config.name, int(status), reason, verdicts)
    if out_dir is not None:
        emit_report(bundle, out_dir, "json")
        emit_report(bundle, out_dir, "csv")
    return bundle


def _certify(bundle: ReportBundle, verdicts: dict[str, str], cert: BoundCertificate) -> BoundCertificate:
    bundle.certificates.append(cert)
    bundle.payloads[f"certificates/{cert.bound_id}.json"] = jsonable(cert.as_dict())
    verdicts[cert.bound_id] = cert.verdict
    return cert


def _run(config: ExperimentConfig, bundle: ReportBundle, verdicts: dict[str, str], metrics: dict[str, Any]) -> None:
    net = generate(config.generator, seed=config.seed)
    bundle.payloads["network.json"] = net.to_dict()

    metric = resistance_metric(net)
    profile = volume_profile(net, metric)
    bundle.tables["profile"] = profile.to_frame()
    model = fit_model(profile, config.family, window=config.window)
    bundle.payloads["model.json"] = jsonable(model.as_dict())
    scaling = scaling_checks(model)
    bundle.payloads["scaling.json"] = jsonable(scaling.as_dict())
    metrics["alpha"] = model.alpha
    metrics["envelope_spread"] = float(model.spread(model.r_min))

    exps = derive_exponents(model, "offdiag" if config.mode == "offdiag" else "ondiag", config.slack, config.policy)
    bundle.payloads["exponents.json"] = jsonable(exps.as_dict())

    dec = spectral_decompose(net)
    scale = eval_scale(model)
    times = time_grid(scale)

    ondiag = _certify(bundle, verdicts, certify_ondiag(dec, model, exps, metric=metric, times=times))
    metrics["slopes"]["ondiag"] = ondiag.metrics["slope"]
    metrics["slopes"]["predicted"] = ondiag.metrics["predicted_slope"]
    metrics["spreads"]["ondiag"] = ondiag.metrics["spread"]

    samples = exit_samples(net, metric, model, times)
    exits = _certify(bundle, verdicts, certify_exit_times(net, metric, model, samples=samples))
    metrics["spreads"]["exit_times"] = exits.metrics["spread"]
    bundle.tables["exit_times"] = pd.DataFrame(
        [{"x": net.ids[s.x], "r": s.r, "E": s.mean} for s in samples], columns=["x", "r", "E"]
    )

    ultra = ultracontractivity_profile(dec, model, times=times, scale=scale)
    metrics["ultracontractivity"] = {"constant": ultra.constant, "variation": ultra.variation}
    diag_check = diagonal_volume_check(dec, profile)
    metrics["diagonal_volume"] = diag_check.as_dict()
    energy = [kernel_energy_check(dec, float(t), metric.center).as_dict() for t in times[:: max(1, times.size // 4)]]
    metrics["kernel_energy_max_ratio"] = max(e["ratio"] for e in energy)

    if config.mode == "offdiag":
        _certify(bundle, verdicts, certify_exit_tail(net, metric, model, exps, samples=samples, times=times))
        _certify(bundle, verdicts, certify_neardiag(dec, metric, model, exps, times=times))
        chaining = probe_chaining(metric)
        metrics["chaining"] = chaining.as_dict()
        off = _certify(bundle, verdicts, certify_offdiag(dec, metric, model, exps, chaining=chaining, times=times))
        metrics["slopes"]["offdiag_shape"] = off.metrics["shape_slope"]
        metrics["offdiag_shape_correlation"] = off.metrics["shape_correlation"]
    elif config.mode == "local":
        x = _local_vertex(net, config, metric.center)
        bundle.tables["escape"] = escape_profile(net, metric, model, x)
        try:
            _certify(bundle, verdicts, certify_local(dec, metric, profile, model, x, times=times))
        except HypothesesNotMetError as exc:
            verdicts["local"] = HYPOTHESES_NOT_MET
            metrics["local_hypotheses"] = str(exc)
    elif config.mode == "fluct":
        try:
            fluct = _certify(bundle, verdicts, certify_fluctuations(dec, profile, model, exps, times=times))
            metrics["spreads"]["fluctuation_separation"] = fluct.metrics["separation_range"][1]
        except HypothesesNotMetError as exc:
            verdicts["fluctuations"] = HYPOTHESES_NOT_MET
            metrics["fluctuation_hypotheses"] = str(exc)

    bundle.tables["certificates"] = certificate_table(bundle.certificates)


def certificate_table(certs: list[BoundCertificate]) -> pd.DataFrame:
    """証明書の定数・比の範囲を縦長の表にする（外部でのプロット用）。"""
    rows = []
    for cert in certs:
        for name, value in cert.constants.items():
            rows.append({"bound_id": cert.bound_id, "quantity": name, "value": value, "verdict": cert.verdict})
        rows.append({"bound_id": cert.bound_id, "quantity": "ratio_min", "value": cert.ratio_min, "verdict": cert.verdict})
        rows.append({"bound_id": cert.bound_id, "quantity": "ratio_max", "value": cert.ratio_max, "verdict": cert.verdict})
    return pd.DataFrame(rows, columns=["bound_id", "quantity", "value", "verdict"])


def emit_report(bundle: ReportBundle, out_dir: Path | str, fmt: str = "json") -> list[Path]:
    """
    json: payloads を1ファイルずつ（証明書は certificates/ 以下）
    csv: tables を tables/<name>.csv に
    """
    out = Path(out_dir)
    written: list[Path] = []
    if fmt == "json":
        for name in sorted(bundle.payloads):
            path = out / name
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(dump_json(bundle.payloads[name]), encoding="utf-8")
            written.append(path)
    elif fmt == "csv":
        (out / "tables").mkdir(parents=True, exist_ok=True)
        for name in sorted(bundle.tables):
            path = out / "tables" / f"{name}.csv"
            bundle.tables[name].to_csv(path, index=False, float_format="%.12g")
            written.append(path)
    else:
        raise ValueError(f"unknown report format: {fmt}")
    logger.debug("wrote %d %s files to %s", len(written), fmt, out)
    return written


def parse_report(out_dir: Path | str) -> dict[str, Any]:
    """emit_report(json) の逆。ファイル名（out_dir からの相対パス）→ 内容。"""
    out = Path(out_dir)
    payloads: dict[str, Any] = {}
    for path in sorted(out.rglob("*.json")):
        payloads[path.relative_to(out).as_posix()] = json.loads(path.read_text(encoding="utf-8"))
    return payloads


def load_bundle(out_dir: Path | str) -> ReportBundle:
    """書き出し済みバンドルを読み戻す（`report` コマンド・Streamlit 用）。"""
    out = Path(out_dir)
    payloads = parse_report(out)
    if "summary.json" not in payloads:
        raise FileNotFoundError(f"{out} has no summary.json")
    summary = payloads["summary.json"]
    config = ExperimentConfig.model_validate(summary["config"])
    tables = {p.stem: pd.read_csv(p) for p in sorted((out / "tables").glob("*.csv"))} if (out / "tables").exists() else {}
    status = summary.get("status") or {}
    return ReportBundle(
        config=config,
        payloads=payloads,
        tables=tables,
        status=ExitStatus(int(status.get("code", 0))),
        reason=str(status.get("reason", "ok")),
    )


def record_run(bundle: ReportBundle, out_dir: Optional[Path | str] = None) -> Optional[int]:
    """
    ExperimentRun に1行追加する。DB が使えない場合は警告を出して None（実験結果自体は有効）。
    """
    try:
        from .models import ExperimentRun  # noqa: WPS433

        run = ExperimentRun.objects.create(
            name=bundle.config.name,
            config=bundle.config.model_dump(mode="json"),
            config_digest=bundle.config.digest(),
            mode=bundle.config.mode,
            status_code=int(bundle.status),
            reason=bundle.reason,
            verdicts=bundle.summary.get("verdicts", {}),
            output_dir=str(out_dir or ""),
        )
        return int(run.pk)
    except (DatabaseError, ImproperlyConfigured, AppRegistryNotReady) as exc:
        logger.warning("could not record experiment run in the ledger: %s", exc)
        return None
