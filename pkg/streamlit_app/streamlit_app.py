from __future__ import annotations

from pathlib import Path
from typing import Any, Optional

import pandas as pd
import streamlit as st

# `streamlit run streamlit_app/streamlit_app.py` ではこのディレクトリが直下扱いになるため、
# 同一ディレクトリのモジュールとして import する。
from django_bootstrap import init_django

PAGES = ["実行履歴", "バンドル", "DB情報"]


def _inject_global_css() -> None:
    st.markdown(
        """
<style>
/* --- 横/縦に収まらない表はスクロールさせる --- */
.scroll-table {
  width: 100%;
  overflow-x: auto;
  overflow-y: auto;
  max-height: 70vh;
  border: 1px solid rgba(49, 51, 63, 0.2);
  border-radius: 8px;
}
.scroll-table table {
  width: max-content;
  min-width: 100%;
  border-collapse: collapse;
}
.scroll-table th, .scroll-table td {
  white-space: nowrap;
}
</style>
""",
        unsafe_allow_html=True,
    )


def _render_table(df: pd.DataFrame, *, max_rows: int = 500) -> None:
    if df.empty:
        st.info("データがありません。")
        return
    if len(df) > max_rows:
        st.caption(f"先頭 {max_rows} 行のみ表示（全 {len(df)} 行）")
        df = df.head(max_rows)
    html = df.to_html(index=False, float_format=lambda v: f"{v:.6g}", border=0)
    st.markdown(f'<div class="scroll-table">{html}</div>', unsafe_allow_html=True)


def _ledger_frame(limit: int, status: str) -> pd.DataFrame:
    from heatkernels.models import ExperimentRun

    qs = ExperimentRun.objects.all()
    if status == "ok":
        qs = qs.filter(status_code=0)
    elif status == "ng":
        qs = qs.exclude(status_code=0)
    rows = [
        {
            "ID": run.id,
            "実験名": run.name,
            "モード": run.mode,
            "終了コード": run.status_code,
            "理由": run.reason,
            "判定": ", ".join(f"{k}={v}" for k, v in sorted(run.verdicts.items())),
            "出力先": run.output_dir,
            "作成日時": run.created_at.strftime("%Y-%m-%d %H:%M:%S"),
        }
        for run in qs[:limit]
    ]
    return pd.DataFrame(rows)


def _page_ledger() -> None:
    st.subheader("実行履歴")
    c1, c2 = st.columns(2)
    with c1:
        status = st.selectbox(
            "状態",
            options=["", "ok", "ng"],
            format_func=lambda x: {"": "（全て）", "ok": "成功のみ", "ng": "失敗のみ"}[x],
        )
    with c2:
        limit = st.selectbox("表示件数", options=[10, 50, 200, 1000], index=1, format_func=lambda x: f"{x}件")
    _render_table(_ledger_frame(limit, status))


def _bundle_dirs_from_ledger() -> list[str]:
    from heatkernels.models import ExperimentRun

    dirs = ExperimentRun.objects.exclude(output_dir="").values_list("output_dir", flat=True).distinct()
    return sorted({d for d in dirs if Path(d).exists()})


def _verdict_frame(summary: dict[str, Any]) -> pd.DataFrame:
    return pd.DataFrame(
        [{"bound_id": k, "verdict": v} for k, v in sorted((summary.get("verdicts") or {}).items())]
    )


def _certificate_frame(payloads: dict[str, Any]) -> pd.DataFrame:
    rows = []
    for name, cert in sorted(payloads.items()):
        if not name.startswith("certificates/"):
            continue
        for key, value in (cert.get("constants") or {}).items():
            rows.append({"bound_id": cert.get("bound_id"), "定数": key, "値": value, "判定": cert.get("verdict")})
    return pd.DataFrame(rows)


def _page_bundle() -> None:
    from heatkernels.experiment import load_bundle

    st.subheader("バンドル")
    known = _bundle_dirs_from_ledger()
    picked: Optional[str] = None
    if known:
        picked = st.selectbox("実行履歴から選ぶ", options=[""] + known, format_func=lambda x: x or "（選択しない）")
    typed = st.text_input("またはディレクトリを入力", value="")
    target = typed.strip() or picked
    if not target:
        st.info("certify の出力ディレクトリを指定してください。")
        return

    try:
        bundle = load_bundle(target)
    except (FileNotFoundError, ValueError) as e:
        st.warning(f"バンドルを読み込めませんでした: {e}")
        return

    summary = bundle.summary
    status = summary.get("status") or {}
    if int(status.get("code", 0)) == 0:
        st.success(f"{bundle.config.name}: すべての証明書が成立")
    else:
        st.error(f"{bundle.config.name}: {status.get('reason')} (status {status.get('code')})")

    tab1, tab2, tab3, tab4 = st.tabs(["判定", "証明書", "モデル/指数", "表"])
    with tab1:
        _render_table(_verdict_frame(summary))
        st.json(summary.get("metrics") or {})
    with tab2:
        _render_table(_certificate_frame(bundle.payloads))
    with tab3:
        st.json(bundle.payloads.get("model.json") or {})
        st.json(bundle.payloads.get("exponents.json") or {})
    with tab4:
        if not bundle.tables:
            st.info("CSV テーブルがありません。`manage.py report --format csv` で出力できます。")
        for name, df in bundle.tables.items():
            st.markdown(f"**{name}**")
            _render_table(df)


def _get_db_info() -> dict[str, Any]:
    """
    現在のDB設定情報を取得する（表示用）。
    """
    from django.conf import settings

    default = settings.DATABASES.get("default", {})
    engine = str(default.get("ENGINE") or "")
    name = default.get("NAME")
    return {"engine": engine, "name": str(name)}


def _page_db_info() -> None:
    from heatkernels.models import ExperimentRun

    st.subheader("DB情報")
    info = _get_db_info()
    st.write(f"ENGINE: `{info['engine']}`")
    st.write(f"NAME: `{info['name']}`")
    st.write(f"実行履歴: {ExperimentRun.objects.count()} 件")


def main() -> None:
    st.set_page_config(page_title="Heat kernel certificates", layout="wide", initial_sidebar_state="expanded")
    _inject_global_css()
    init_django()

    with st.sidebar:
        st.markdown("### サイドバー")
        page = st.radio("ページ", options=PAGES, key="page_nav")

    if page == "実行履歴":
        _page_ledger()
        return
    if page == "バンドル":
        _page_bundle()
        return
    if page == "DB情報":
        _page_db_info()
        return


if __name__ == "__main__":
    main()
