from __future__ import annotations

from pathlib import Path

from django.core.management.base import BaseCommand

from heatkernels.experiment import dump_json, emit_report, load_bundle

from ._common import translate_errors


class Command(BaseCommand):
    help = "書き出し済みバンドルを json / csv で出し直す"

    def add_arguments(self, parser) -> None:
        parser.add_argument("--bundle", required=True, help="certify の出力ディレクトリ")
        parser.add_argument("--format", choices=["json", "csv"], default="json")
        parser.add_argument("--out", default=None, help="出力先（既定はバンドル自身）")

    def handle(self, *args, **options) -> None:
        with translate_errors():
            bundle = load_bundle(options["bundle"])
            out = Path(options["out"] or options["bundle"])
            written = emit_report(bundle, out, options["format"])
        if options["format"] == "json":
            self.stdout.write(dump_json(bundle.summary))
        self.stdout.write(self.style.SUCCESS(f"{len(written)} files -> {out}"))
