"""VGG-19 tap export and the torch-side reference path.

Taps are the last rectified activation before each of the five pooling
stages. In ``random`` weight mode the (seeded) weights are rescaled layer
by layer so every tap's activations have unit RMS on a calibration input;
that keeps float32 statistics well-conditioned for cross-runtime
comparison and for downstream clustering.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .onnx_writer import GraphBuilder

TAP_NAMES = ("tap0", "tap1", "tap2", "tap3", "tap4")
TAP_CHANNELS = (64, 128, 256, 512, 512)
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

# convs per stage in VGG-19's feature stack
_STAGE_CONVS = (2, 2, 4, 4, 4)


def build_features(weights: str = "random", seed: int = 0) -> nn.Sequential:
    """The 16-conv VGG-19 feature stack (through the last tapped ReLU)."""
    layers: list[nn.Module] = []
    in_ch = 3
    for stage, (n_convs, out_ch) in enumerate(zip(_STAGE_CONVS, TAP_CHANNELS)):
        for _ in range(n_convs):
            layers.append(nn.Conv2d(in_ch, out_ch, kernel_size=3, padding=1))
            layers.append(nn.ReLU(inplace=False))
            in_ch = out_ch
        if stage < len(_STAGE_CONVS) - 1:
            layers.append(nn.MaxPool2d(kernel_size=2, stride=2))
    model = nn.Sequential(*layers)
    model.eval()
    if weights == "pretrained":
        _load_pretrained(model)
    elif weights == "random":
        _init_random(model, seed)
    else:
        raise ValueError(f"unknown weight mode {weights!r}")
    return model


def _load_pretrained(model: nn.Sequential) -> None:
    try:
        from torchvision.models import VGG19_Weights, vgg19

        reference = vgg19(weights=VGG19_Weights.IMAGENET1K_V1).features
    except Exception as exc:
        raise RuntimeError(
            "pretrained VGG-19 weights are not obtainable here "
            f"({exc}); use --weights random --seed N for a reproducible "
            "untrained asset"
        ) from exc
    ours = [m for m in model if isinstance(m, nn.Conv2d)]
    theirs = [m for m in reference if isinstance(m, nn.Conv2d)]
    with torch.no_grad():
        for mine, ref in zip(ours, theirs):
            mine.weight.copy_(ref.weight)
            mine.bias.copy_(ref.bias)


def _init_random(model: nn.Sequential, seed: int) -> None:
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in model:
            if isinstance(module, nn.Conv2d):
                nn.init.kaiming_normal_(module.weight, generator=gen)
                module.bias.normal_(0.0, 0.01, generator=gen)
        # one-pass RMS calibration so activations stay O(1) at every depth
        x = torch.rand((1, 3, 64, 64),
                       generator=torch.Generator().manual_seed(seed + 1))
        for module in model:
            y = module(x)
            if isinstance(module, nn.Conv2d):
                rms = y.pow(2).mean().sqrt().clamp_min(1e-8)
                module.weight.div_(rms)
                module.bias.div_(rms)
                y = module(x)
            x = y


def tap_modules(model: nn.Sequential) -> list[int]:
    """Indices of the tapped ReLUs (last activation of each stage)."""
    taps: list[int] = []
    for i, module in enumerate(model):
        if isinstance(module, nn.ReLU):
            nxt = model[i + 1] if i + 1 < len(model) else None
            if nxt is None or isinstance(nxt, nn.MaxPool2d):
                taps.append(i)
    return taps


@dataclass
class ExportResult:
    asset_path: Path
    hash_path: Path
    sha256: str
    taps: list[str]
    tap_channels: list[int]


def export_model(
    out_path: str | Path,
    taps: list[str] | None = None,
    input_size: tuple[int, int] = (224, 224),
    weights: str = "random",
    seed: int = 0,
    opset: int = 13,
) -> ExportResult:
    """Write ``<out>.onnx`` plus the ``<out>.hash.json`` manifest."""
    tap_names = list(taps or TAP_NAMES)
    if tap_names != sorted(tap_names) or len(set(tap_names)) != len(tap_names):
        raise ValueError("taps must be strictly depth-ordered and unique")
    unknown = set(tap_names) - set(TAP_NAMES)
    if unknown:
        raise ValueError(f"unknown taps {sorted(unknown)}; "
                         f"available: {list(TAP_NAMES)}")
    model = build_features(weights=weights, seed=seed)
    tap_idx = tap_modules(model)

    builder = GraphBuilder("input", [1, 3, input_size[0], input_size[1]])
    current = "input"
    h, w = input_size
    tap_no = 0
    for i, module in enumerate(model):
        if isinstance(module, nn.Conv2d):
            current = builder.add_conv(
                current,
                module.weight.detach().numpy(),
                module.bias.detach().numpy(),
            )
        elif isinstance(module, nn.ReLU):
            name = None
            if i in tap_idx:
                name = TAP_NAMES[tap_no]
                tap_no += 1
            current = builder.add_relu(current, output=name)
            if name in tap_names:
                builder.mark_output(name, [1, TAP_CHANNELS[tap_no - 1], h, w])
        elif isinstance(module, nn.MaxPool2d):
            current = builder.add_maxpool(current)
            h, w = h // 2, w // 2

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_bytes(builder.serialize(opset=opset))
    digest = hashlib.sha256(out_path.read_bytes()).hexdigest()
    hash_path = out_path.with_suffix(out_path.suffix + ".hash.json")
    channels = [TAP_CHANNELS[TAP_NAMES.index(t)] for t in tap_names]
    hash_path.write_text(json.dumps({
        "sha256": digest,
        "taps": tap_names,
        "tap_channels": channels,
        "input_size": list(input_size),
        "opset": opset,
        "weights": (f"random:seed={seed}" if weights == "random"
                    else "pretrained:IMAGENET1K_V1"),
        "normalization": {"mean": list(IMAGENET_MEAN),
                          "std": list(IMAGENET_STD)},
    }, indent=2) + "\n")
    return ExportResult(asset_path=out_path, hash_path=hash_path,
                        sha256=digest, taps=tap_names, tap_channels=channels)


# ---------------------------------------------------------------------------
# reference forward pass (torch side of the cross-runtime parity check)

def preprocess_reference(image: np.ndarray, input_size: tuple[int, int],
                         mean=IMAGENET_MEAN, std=IMAGENET_STD) -> torch.Tensor:
    """Match the consumer pipeline: [0,1] scale, bilinear resize
    (half-pixel centers, no antialias), per-channel normalization."""
    arr = torch.from_numpy(np.array(image, copy=True)).float()
    if image.dtype == np.uint8:
        arr = arr / 255.0
    arr = arr.permute(2, 0, 1)[None]
    arr = torch.nn.functional.interpolate(
        arr, size=input_size, mode="bilinear", align_corners=False,
        antialias=False,
    )
    mean_t = torch.tensor(mean).view(1, 3, 1, 1)
    std_t = torch.tensor(std).view(1, 3, 1, 1)
    return (arr - mean_t) / std_t


@torch.no_grad()
def reference_style_vector(model: nn.Sequential, tensor: torch.Tensor,
                           taps: list[str] | None = None) -> np.ndarray:
    """Per-tap channel means and population variances, concatenated."""
    tap_names = list(taps or TAP_NAMES)
    tap_idx = tap_modules(model)
    wanted = {tap_idx[TAP_NAMES.index(t)]: t for t in tap_names}
    pieces: dict[str, np.ndarray] = {}
    x = tensor
    for i, module in enumerate(model):
        x = module(x)
        if i in wanted:
            acts = x[0].double()
            mu = acts.mean(dim=(1, 2))
            var = acts.var(dim=(1, 2), unbiased=False)
            pieces[wanted[i]] = torch.cat([mu, var]).numpy()
    return np.concatenate([pieces[t] for t in tap_names])
