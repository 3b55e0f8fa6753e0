from __future__ import annotations

import json

import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from heatkernels.models import ExperimentRun
from heatkernels.network import load_network

PATH_CONFIG = {"name": "path-101", "generator": {"family": "path", "n": 101}}


def test_gen_writes_the_network(tmp_path, write_json):
    config = write_json("gen.json", {"family": "sierpinski", "level": 2})
    call_command("gen", config=str(config), out=str(tmp_path / "net"))
    net = load_network(tmp_path / "net" / "network.json")
    assert net.n == 15


def test_gen_rejects_an_invalid_spec(tmp_path, write_json):
    config = write_json("gen.json", {"family": "sierpinski"})
    with pytest.raises(CommandError) as info:
        call_command("gen", config=str(config), out=str(tmp_path / "net"))
    assert info.value.returncode == 14


def test_missing_config_file(tmp_path):
    with pytest.raises(CommandError) as info:
        call_command("gen", config=str(tmp_path / "nope.json"), out=str(tmp_path))
    assert info.value.returncode == 14


def test_analyze_writes_the_model(tmp_path, write_json):
    config = write_json("exp.json", PATH_CONFIG)
    out = tmp_path / "analysis"
    call_command("analyze", config=str(config), out=str(out))
    for name in ("network.json", "metric.csv", "profile.csv", "model.json", "scaling.json", "escape.csv"):
        assert (out / name).exists(), name
    model = json.loads((out / "model.json").read_text(encoding="utf-8"))
    assert model["family"] == "uniform"


def test_analyze_reports_a_narrow_grid(tmp_path, write_json):
    config = write_json("exp.json", {"name": "star", "generator": {"family": "star", "k": 6}})
    with pytest.raises(CommandError) as info:
        call_command("analyze", config=str(config), out=str(tmp_path / "star"))
    assert info.value.returncode == 14
    assert "fit_failure" in str(info.value)


@pytest.mark.django_db
def test_certify_records_the_run(tmp_path, write_json):
    config = write_json("exp.json", PATH_CONFIG)
    out = tmp_path / "bundle"
    call_command("certify", config=str(config), out=str(out))
    assert (out / "summary.json").exists()
    run = ExperimentRun.objects.get()
    assert run.status_code == 0
    assert run.output_dir == str(out)


@pytest.mark.django_db
def test_certify_mode_flag_fills_the_config(tmp_path, write_json):
    config = write_json("exp.json", PATH_CONFIG)
    call_command("certify", config=str(config), out=str(tmp_path / "b"), mode="fluct")
    assert ExperimentRun.objects.get().mode == "fluct"


@pytest.mark.django_db
def test_certify_exit_code_for_unmet_hypotheses(tmp_path, write_json, settings):
    settings.HEATKERNELS = {**settings.HEATKERNELS, "RESCOND_FLOOR": 0.99}
    config = write_json("exp.json", {**PATH_CONFIG, "mode": "local"})
    with pytest.raises(CommandError) as info:
        call_command("certify", config=str(config), out=str(tmp_path / "b"))
    assert info.value.returncode == 12
    assert ExperimentRun.objects.get().status_code == 12


@pytest.mark.django_db
def test_report_rewrites_the_bundle(tmp_path, write_json):
    config = write_json("exp.json", PATH_CONFIG)
    bundle = tmp_path / "bundle"
    call_command("certify", config=str(config), out=str(bundle))
    target = tmp_path / "copy"
    call_command("report", bundle=str(bundle), format="csv", out=str(target))
    assert (target / "tables" / "profile.csv").exists()
    call_command("report", bundle=str(bundle), format="json", out=str(target))
    assert (target / "summary.json").read_bytes() == (bundle / "summary.json").read_bytes()
