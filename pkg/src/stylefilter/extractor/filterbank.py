"""Hermetic multi-octave filter bank backend.

A fixed, seed-free bank of twelve 7x7 filters applied per octave to the
luminance channel: one averaging (DC) filter, one Laplacian-of-Gaussian,
two diagonal Gaussian derivatives, and eight oriented even/odd Gabor
pairs at four orientations. Band-pass responses are rectified (absolute
value); the DC response is kept signed so its spatial mean tracks
brightness monotonically over the whole intensity range. Octaves are
chained by 2x mean-pooling the luminance.
"""

from __future__ import annotations

import re

import numpy as np
from scipy import ndimage

from ..errors import ExtractorError
from .types import FeatureMap

KERNEL_SIZE = 7
CHANNELS_PER_OCTAVE = 12
BANK_VERSION = "fb1"

_TAP_RE = re.compile(r"^octave(\d+)$")


def _kernels() -> np.ndarray:
    coords = np.arange(KERNEL_SIZE, dtype=np.float64) - (KERNEL_SIZE - 1) / 2
    x, y = np.meshgrid(coords, coords, indexing="xy")
    r2 = x**2 + y**2

    bank: list[np.ndarray] = []
    dc = np.ones((KERNEL_SIZE, KERNEL_SIZE))
    bank.append(dc / dc.sum())

    sigma = 1.0
    log = (r2 - 2 * sigma**2) * np.exp(-r2 / (2 * sigma**2))
    log -= log.mean()
    bank.append(log / np.linalg.norm(log))

    sigma = 1.5
    for u in ((x + y) / np.sqrt(2), (x - y) / np.sqrt(2)):
        deriv = -u * np.exp(-r2 / (2 * sigma**2))
        bank.append(deriv / np.linalg.norm(deriv))

    sigma, freq = 2.0, 0.25
    for theta in (0.0, np.pi / 4, np.pi / 2, 3 * np.pi / 4):
        u = x * np.cos(theta) + y * np.sin(theta)
        envelope = np.exp(-r2 / (2 * sigma**2))
        even = envelope * np.cos(2 * np.pi * freq * u)
        even -= even.mean()
        odd = envelope * np.sin(2 * np.pi * freq * u)
        bank.append(even / np.linalg.norm(even))
        bank.append(odd / np.linalg.norm(odd))

    assert len(bank) == CHANNELS_PER_OCTAVE
    return np.stack(bank).astype(np.float32)


KERNELS = _kernels()


def parse_octave_taps(tap_layers: list[str]) -> list[int]:
    octaves: list[int] = []
    for tap in tap_layers:
        m = _TAP_RE.match(tap)
        if not m:
            raise ExtractorError(
                f"filterbank backend: unknown tap {tap!r} (expected octave<N>)"
            )
        octaves.append(int(m.group(1)))
    if octaves != sorted(set(octaves)):
        raise ExtractorError("tap list must be strictly depth-ordered")
    return octaves


def _mean_pool2(signal: np.ndarray) -> np.ndarray:
    h, w = signal.shape
    if h < 2 or w < 2:
        raise ExtractorError("image too small for requested octave count")
    trimmed = signal[: (h // 2) * 2, : (w // 2) * 2]
    return trimmed.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))


def extract_feature_maps(tensor: np.ndarray, tap_layers: list[str]) -> list[FeatureMap]:
    """Run the bank over each requested octave of the luminance pyramid."""
    octaves = parse_octave_taps(tap_layers)
    luminance = tensor.mean(axis=0).astype(np.float32)
    maps: list[FeatureMap] = []
    level = luminance
    for octave in range(max(octaves) + 1):
        if octave in octaves:
            responses = np.empty(
                (CHANNELS_PER_OCTAVE, *level.shape), dtype=np.float32
            )
            for c in range(CHANNELS_PER_OCTAVE):
                resp = ndimage.correlate(level, KERNELS[c], mode="reflect")
                responses[c] = resp if c == 0 else np.abs(resp)
            maps.append(FeatureMap(layer_index=octave, values=responses))
        if octave < max(octaves):
            level = _mean_pool2(level)
    return maps
