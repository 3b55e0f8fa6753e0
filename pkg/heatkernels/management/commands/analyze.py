from __future__ import annotations

from django.core.management.base import BaseCommand

from heatkernels.bounds import escape_profile
from heatkernels.experiment import dump_json
from heatkernels.generators import generate
from heatkernels.network import save_network
from heatkernels.resistance import resistance_metric
from heatkernels.volume import fit_model, scaling_checks, volume_profile

from ._common import load_experiment_config, output_dir, translate_errors


class Command(BaseCommand):
    help = "回路網・抵抗距離・体積プロファイル・モデル・スケーリング検査を書き出す（証明書は作らない）"

    def add_arguments(self, parser) -> None:
        parser.add_argument("--config", required=True, help="ExperimentConfig の JSON ファイル")
        parser.add_argument("--out", default=None, help="出力ディレクトリ（設定の out より後）")
        parser.add_argument("--seed", type=int, default=None)

    def handle(self, *args, **options) -> None:
        config = load_experiment_config(options["config"], seed=options["seed"], out=options["out"])
        out = output_dir(config.out, config)
        with translate_errors():
            net = generate(config.generator, seed=config.seed)
            save_network(net, out / "network.json")
            metric = resistance_metric(net)
            metric.to_csv(out / "metric.csv")
            profile = volume_profile(net, metric)
            profile.to_csv(out / "profile.csv")
            model = fit_model(profile, config.family, window=config.window)
            (out / "model.json").write_text(dump_json(model.as_dict()), encoding="utf-8")
            report = scaling_checks(model)
            (out / "scaling.json").write_text(dump_json(report.as_dict()), encoding="utf-8")
            escape_profile(net, metric, model, metric.center).to_csv(out / "escape.csv", index=False, float_format="%.12g")

        self.stdout.write(
            self.style.SUCCESS(f"{net.name}: alpha={model.alpha:.4f} family={model.family} scaling={'ok' if report.all_hold else 'violated'}")
        )
        if not report.all_hold:
            with translate_errors():
                report.raise_for_violations()
