"""ONNX-asset backend: taps are named graph outputs of the model."""

from __future__ import annotations

import numpy as np

from .. import onnx_rt
from ..errors import ExtractorError
from .types import ExtractorConfig, FeatureMap


class OnnxFeatureExtractor:
    """Loads an ONNX asset once and serves per-image tap activations."""

    def __init__(self, cfg: ExtractorConfig):
        cfg.validate()
        self.model = onnx_rt.load_model(cfg.asset_path)
        available = self.model.output_names
        for tap in cfg.tap_layers:
            if tap not in available:
                raise ExtractorError(
                    f"model asset {cfg.asset_path} does not expose tap {tap!r} "
                    f"(outputs: {available})"
                )
        order = [available.index(t) for t in cfg.tap_layers]
        if order != sorted(order):
            raise ExtractorError("tap list must be strictly depth-ordered")
        if len(self.model.input_names) != 1:
            raise ExtractorError(
                f"expected a single-input model, got {self.model.input_names}"
            )
        self.input_name = self.model.input_names[0]
        self.taps = list(cfg.tap_layers)
        self.tap_depth = {t: i for i, t in enumerate(available)}

    def extract(self, tensor: np.ndarray) -> list[FeatureMap]:
        batch = tensor[None, ...].astype(np.float32)
        results = onnx_rt.run_model(self.model, {self.input_name: batch},
                                    outputs=self.taps)
        return [
            FeatureMap(layer_index=self.tap_depth[tap], values=results[tap][0])
            for tap in self.taps
        ]
