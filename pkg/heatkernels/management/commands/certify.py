from __future__ import annotations

from django.core.management.base import BaseCommand, CommandError

from heatkernels.exceptions import ExitStatus
from heatkernels.experiment import record_run, run_experiment

from ._common import load_experiment_config, output_dir


class Command(BaseCommand):
    help = "実験を最後まで実行し、証明書バンドルを書き出して実行履歴に記録する"

    def add_arguments(self, parser) -> None:
        parser.add_argument("--config", required=True, help="ExperimentConfig の JSON ファイル")
        parser.add_argument("--out", default=None, help="出力ディレクトリ")
        parser.add_argument("--seed", type=int, default=None)
        parser.add_argument("--mode", choices=["ondiag", "offdiag", "local", "fluct"], default=None)

    def handle(self, *args, **options) -> None:
        config = load_experiment_config(
            options["config"], seed=options["seed"], out=options["out"], mode=options["mode"]
        )
        out = output_dir(config.out, config)
        bundle = run_experiment(config, out)
        record_run(bundle, out)

        for bound_id, verdict in sorted(bundle.verdicts.items()):
            self.stdout.write(f"{bound_id}: {verdict}")
        if bundle.status != ExitStatus.OK:
            raise CommandError(f"{bundle.reason} (status {int(bundle.status)})", returncode=int(bundle.status))
        self.stdout.write(self.style.SUCCESS(f"all certificates hold -> {out}"))
