from __future__ import annotations

from django.core.management.base import BaseCommand

from heatkernels.generators import generate
from heatkernels.network import save_network

from ._common import load_generator_spec, output_dir, translate_errors


class Command(BaseCommand):
    help = "GeneratorSpec(JSON) から回路網を作り network.json に書き出す"

    def add_arguments(self, parser) -> None:
        parser.add_argument("--config", required=True, help="GeneratorSpec の JSON ファイル")
        parser.add_argument("--out", required=True, help="出力ディレクトリ")
        parser.add_argument("--seed", type=int, default=None, help="生成指定に seed が無いときに使う乱数シード")

    def handle(self, *args, **options) -> None:
        spec = load_generator_spec(options["config"])
        if spec.seed is not None and options["seed"] is not None and spec.seed != options["seed"]:
            self.stderr.write(self.style.WARNING(f"--seed は設定ファイルの seed={spec.seed} を優先するため無視します"))
        out = output_dir(options["out"])
        with translate_errors():
            net = generate(spec, seed=options["seed"])
            path = save_network(net, out / "network.json")
        self.stdout.write(self.style.SUCCESS(f"{net.name}: {net.n} vertices, {net.m} edges -> {path}"))
