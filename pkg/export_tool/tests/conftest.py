"""Shared fixtures: one exported random-weight asset per session."""

import pytest

from export_tool.vgg import export_model

EXPORT_SEED = 20240612
INPUT_SIZE = 64


@pytest.fixture(scope="session")
def asset(tmp_path_factory):
    out = tmp_path_factory.mktemp("asset") / "vgg19_taps.onnx"
    return export_model(out, weights="random", seed=EXPORT_SEED,
                        input_size=(INPUT_SIZE, INPUT_SIZE))
