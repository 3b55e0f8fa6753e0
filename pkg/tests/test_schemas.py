from __future__ import annotations

import pytest
from pydantic import ValidationError

from heatkernels.schemas import ExperimentConfig, GeneratorSpec


def test_family_specific_fields_are_required():
    with pytest.raises(ValidationError, match="sierpinski needs level"):
        GeneratorSpec(family="sierpinski")


def test_unknown_fields_are_rejected():
    with pytest.raises(ValidationError):
        GeneratorSpec(family="path", n=5, colour="red")


def test_negative_weights_are_rejected():
    with pytest.raises(ValidationError):
        GeneratorSpec(family="random_recursive_gasket", level=2, weights=[1.0, -0.5])


def test_window_must_be_ordered():
    with pytest.raises(ValidationError):
        ExperimentConfig(generator={"family": "path", "n": 10}, window=(5.0, 2.0))


def test_digest_ignores_key_order():
    a = ExperimentConfig.model_validate_json('{"name": "x", "generator": {"family": "path", "n": 10}, "mode": "offdiag"}')
    b = ExperimentConfig.model_validate_json('{"mode": "offdiag", "generator": {"n": 10, "family": "path"}, "name": "x"}')
    assert a.digest() == b.digest()
    assert len(a.digest()) == 64


def test_digest_changes_with_the_config():
    a = ExperimentConfig(generator={"family": "path", "n": 10})
    b = ExperimentConfig(generator={"family": "path", "n": 11})
    assert a.digest() != b.digest()
