from __future__ import annotations

from django.db import models


class ExperimentRun(models.Model):
    """
    実験の実行履歴（台帳）。

    バンドルのファイルには時刻を入れないので、いつ実行したかはここにだけ残る。
    """

    name = models.CharField("実験名", max_length=200)
    config = models.JSONField("設定")
    config_digest = models.CharField("設定ダイジェスト", max_length=64, db_index=True)
    mode = models.CharField("モード", max_length=20)
    status_code = models.PositiveSmallIntegerField("終了コード")
    reason = models.CharField("理由", max_length=50)
    verdicts = models.JSONField("判定", default=dict)
    output_dir = models.CharField("出力先", max_length=500, blank=True)
    created_at = models.DateTimeField("作成日時", auto_now_add=True)

    class Meta:
        verbose_name = "ExperimentRun"
        verbose_name_plural = "ExperimentRuns"
        ordering = ["-created_at", "-id"]

    def __str__(self) -> str:
        return f"{self.name} / {self.mode} / {self.status_code} ({self.reason})"

    @property
    def succeeded(self) -> bool:
        return self.status_code == 0
