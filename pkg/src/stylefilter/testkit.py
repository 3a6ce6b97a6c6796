"""Synthetic "factory" image generator.

Produces style-controlled domains (brightness, contrast, texture
frequency/orientation, shape mask, noise) so the whole pipeline can be
exercised without any proprietary data. Defect blobs are drawn from a
sub-seed shared by all factories, so style is the only systematic
inter-factory difference.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, ManifestError
from .manifest import Domain, ImageRecord, Manifest
from .util import derive_seed

SHAPES = ("arc", "rect", "trapezoid")
TEXTURE_AMPLITUDE = 0.04
_DEFECT_SALT = 0x5FDEFEC7


@dataclass
class FactorySpec:
    name: str
    background_level: float = 0.5
    contrast_gain: float = 1.0
    texture_frequency: float = 8.0
    texture_orientation: float = 0.0
    noise_sigma: float = 0.02
    shape: str = "arc"
    defect_rate: float = 0.3
    seed: int = 0

    def validate(self) -> None:
        if not self.name:
            raise ConfigError("factory name must be non-empty")
        if not 0.0 <= self.background_level <= 1.0:
            raise ConfigError(f"{self.name}: background_level must be in [0, 1]")
        if self.contrast_gain <= 0.0:
            raise ConfigError(f"{self.name}: contrast_gain must be > 0")
        if self.noise_sigma < 0.0:
            raise ConfigError(f"{self.name}: noise_sigma must be >= 0")
        if self.shape not in SHAPES:
            raise ConfigError(f"{self.name}: shape must be one of {SHAPES}")
        if not 0.0 <= self.defect_rate <= 1.0:
            raise ConfigError(f"{self.name}: defect_rate must be in [0, 1]")


@dataclass
class SynthDatasetSpec:
    factories: list[FactorySpec]
    target_factory: str
    images_per_factory: int = 100
    image_size: int = 256
    output_dir: str = "."
    seed: int = 0

    def validate(self) -> None:
        if not self.factories:
            raise ConfigError("at least one factory required")
        if self.images_per_factory < 1:
            raise ConfigError("images_per_factory must be >= 1")
        names = [f.name for f in self.factories]
        if len(set(names)) != len(names):
            raise ConfigError("factory names must be unique")
        for f in self.factories:
            f.validate()


def _shape_mask(size: int, shape: str) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    u = (xx + 0.5) / size
    v = (yy + 0.5) / size
    if shape == "rect":
        return ((u > 0.15) & (u < 0.85) & (v > 0.25) & (v < 0.75)).astype(np.float64)
    if shape == "trapezoid":
        half_width = 0.18 + 0.32 * v
        return ((v > 0.2) & (v < 0.8) & (np.abs(u - 0.5) < half_width)).astype(
            np.float64
        )
    # arc: annular band around a center below the frame
    r = np.hypot(u - 0.5, v - 1.1)
    return ((r > 0.45) & (r < 0.75) & (v < 0.75)).astype(np.float64)


def _render(spec: FactorySpec, index: int, size: int) -> np.ndarray:
    rng = np.random.default_rng(derive_seed(spec.seed, "image", index))
    yy, xx = np.mgrid[0:size, 0:size]
    u = xx / size
    v = yy / size
    theta = np.deg2rad(spec.texture_orientation)
    # stable per-factory phase with a small per-image jitter: keeps each
    # factory a coherent style cluster while individual images still differ
    base_phase = np.random.default_rng(
        derive_seed(spec.seed, "phase")).uniform(0.0, 2.0 * np.pi)
    phase = base_phase + rng.uniform(-0.3, 0.3)
    wave = np.sin(
        2.0 * np.pi * spec.texture_frequency * (u * np.cos(theta) + v * np.sin(theta))
        + phase
    )
    mask = _shape_mask(size, spec.shape)
    img = spec.background_level + spec.contrast_gain * TEXTURE_AMPLITUDE * wave * mask

    defect_rng = np.random.default_rng(derive_seed(_DEFECT_SALT, index))
    if defect_rng.random() < spec.defect_rate:
        # fixed-depth darkening so the blob perturbs every factory's
        # statistics by a comparable amount regardless of background level;
        # kept small so defects stay subordinate to factory style
        for _ in range(int(defect_rng.integers(1, 4))):
            cx, cy = defect_rng.uniform(0.2, 0.8, size=2)
            ax_ = defect_rng.uniform(0.012, 0.032)
            ay = defect_rng.uniform(0.012, 0.032)
            blob = ((u - cx) / ax_) ** 2 + ((v - cy) / ay) ** 2 < 1.0
            img = np.where(blob, np.clip(img - 0.12, 0.02, None), img)

    if spec.noise_sigma > 0:
        img = img + rng.normal(scale=spec.noise_sigma, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def render_image_float(spec: FactorySpec, index: int, size: int) -> np.ndarray:
    """One H x W x 3 float image in [0, 1], before any quantization."""
    gray = _render(spec, index, size).astype(np.float32)
    return np.repeat(gray[:, :, None], 3, axis=2)


def render_image(spec: FactorySpec, index: int, size: int) -> np.ndarray:
    """One H x W x 3 uint8 image, fully determined by (spec, index, size)."""
    gray = np.round(_render(spec, index, size) * 255.0).astype(np.uint8)
    return np.repeat(gray[:, :, None], 3, axis=2)


def generate_factory(
    spec: FactorySpec,
    n: int,
    size: int,
    out_dir: str | Path,
    domain: Domain = Domain.SOURCE,
) -> Manifest:
    """Write n PNGs under out_dir/<name>/ and return their manifest.

    Record paths are relative to ``out_dir``.
    """
    spec.validate()
    factory_dir = Path(out_dir) / spec.name
    factory_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(n):
        rel = f"{spec.name}/img_{i:05d}.png"
        Image.fromarray(render_image(spec, i, size)).save(Path(out_dir) / rel)
        records.append(
            ImageRecord(
                id=f"{domain.id_prefix}-{i:06d}",
                path=rel,
                domain=domain,
                class_tags=(spec.name,),
                width=size,
                height=size,
            )
        )
    return Manifest(domain=domain, records=tuple(records))


def generate_benchmark(spec: SynthDatasetSpec) -> tuple[Manifest, Manifest]:
    """Emit images plus a merged source manifest and a target manifest.

    The factory of origin rides along as a class tag: ground truth for
    tests, never consulted by the filter itself.
    """
    spec.validate()
    if len(spec.factories) < 2:
        raise ConfigError("benchmark needs at least 2 factories")
    names = [f.name for f in spec.factories]
    if spec.target_factory not in names:
        raise ConfigError(
            f"designated target factory {spec.target_factory!r} not in spec "
            f"(have {names})"
        )
    out = Path(spec.output_dir)
    images_dir = out / "images"
    manifests: dict[str, Manifest] = {}
    for fspec in spec.factories:
        if fspec.seed == 0:
            fspec.seed = derive_seed(spec.seed, "factory", fspec.name)
        domain = (
            Domain.TARGET if fspec.name == spec.target_factory else Domain.SOURCE
        )
        manifests[fspec.name] = generate_factory(
            fspec, spec.images_per_factory, spec.image_size, images_dir,
            domain=domain,
        )

    def _merge(domain: Domain, factory_names: list[str]) -> Manifest:
        merged = []
        for name in factory_names:
            for rec in manifests[name].records:
                merged.append(rec)
        merged.sort(key=lambda r: r.path)
        records = tuple(
            ImageRecord(
                id=f"{domain.id_prefix}-{i:06d}",
                path=f"images/{rec.path}",
                domain=domain,
                class_tags=rec.class_tags,
                width=rec.width,
                height=rec.height,
            )
            for i, rec in enumerate(merged)
        )
        if not records:
            raise ManifestError("empty domain in benchmark")
        return Manifest(domain=domain, records=records)

    source_names = [n for n in names if n != spec.target_factory]
    source = _merge(Domain.SOURCE, source_names)
    target = _merge(Domain.TARGET, [spec.target_factory])
    return source, target


def default_near_far_spec(output_dir: str | Path,
                          images_per_factory: int = 100) -> SynthDatasetSpec:
    """The stock benchmark: A and B share the target's style, C is far off."""
    return SynthDatasetSpec(
        factories=[
            FactorySpec(name="factoryA", background_level=0.5, contrast_gain=1.0,
                        texture_frequency=8, texture_orientation=0.0,
                        noise_sigma=0.02, shape="arc", defect_rate=0.3),
            FactorySpec(name="factoryB", background_level=0.5, contrast_gain=1.0,
                        texture_frequency=8, texture_orientation=30.0,
                        noise_sigma=0.02, shape="rect", defect_rate=0.3),
            FactorySpec(name="factoryC", background_level=0.9, contrast_gain=2.5,
                        texture_frequency=32, texture_orientation=60.0,
                        noise_sigma=0.02, shape="rect", defect_rate=0.3),
            FactorySpec(name="target", background_level=0.5, contrast_gain=1.0,
                        texture_frequency=8, texture_orientation=15.0,
                        noise_sigma=0.02, shape="arc", defect_rate=0.3),
        ],
        target_factory="target",
        images_per_factory=images_per_factory,
        image_size=256,
        output_dir=str(output_dir),
        seed=20240612,
    )


_FACTORY_PREFIX = "factory "

_DATASET_KEYS = {"output_dir", "images_per_factory", "image_size",
                 "target_factory", "seed"}
_FACTORY_KEYS = {"background_level", "contrast_gain", "texture_frequency",
                 "texture_orientation", "noise_sigma", "shape", "defect_rate",
                 "seed"}


def read_synth_spec(path: str | Path) -> SynthDatasetSpec:
    """Parse a key-value spec file: one [dataset] plus [factory <name>] sections."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot parse synth spec {path}: {exc}") from exc
    if "dataset" not in parser:
        raise ConfigError(f"{path}: missing [dataset] section")
    ds = parser["dataset"]
    unknown = set(ds) - _DATASET_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown dataset keys {sorted(unknown)}")
    factories = []
    for section in parser.sections():
        if section == "dataset":
            continue
        if not section.startswith(_FACTORY_PREFIX):
            raise ConfigError(f"{path}: unexpected section [{section}]")
        name = section[len(_FACTORY_PREFIX):].strip()
        sec = parser[section]
        unknown = set(sec) - _FACTORY_KEYS
        if unknown:
            raise ConfigError(
                f"{path}: unknown keys {sorted(unknown)} in [{section}]"
            )
        try:
            factories.append(
                FactorySpec(
                    name=name,
                    background_level=sec.getfloat("background_level", 0.5),
                    contrast_gain=sec.getfloat("contrast_gain", 1.0),
                    texture_frequency=sec.getfloat("texture_frequency", 8.0),
                    texture_orientation=sec.getfloat("texture_orientation", 0.0),
                    noise_sigma=sec.getfloat("noise_sigma", 0.02),
                    shape=sec.get("shape", "arc"),
                    defect_rate=sec.getfloat("defect_rate", 0.3),
                    seed=sec.getint("seed", 0),
                )
            )
        except ValueError as exc:
            raise ConfigError(f"{path}: bad value in [{section}]: {exc}") from exc
    try:
        spec = SynthDatasetSpec(
            factories=factories,
            target_factory=ds.get("target_factory", ""),
            images_per_factory=ds.getint("images_per_factory", 100),
            image_size=ds.getint("image_size", 256),
            output_dir=ds.get("output_dir", "."),
            seed=ds.getint("seed", 0),
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: bad value in [dataset]: {exc}") from exc
    spec.validate()
    if not spec.target_factory:
        raise ConfigError(f"{path}: [dataset] must name a target_factory")
    return spec


def write_synth_spec(spec: SynthDatasetSpec, path: str | Path) -> None:
    lines = [
        "[dataset]",
        f"output_dir = {spec.output_dir}",
        f"images_per_factory = {spec.images_per_factory}",
        f"image_size = {spec.image_size}",
        f"target_factory = {spec.target_factory}",
        f"seed = {spec.seed}",
    ]
    for f in spec.factories:
        lines += [
            "",
            f"[factory {f.name}]",
            f"background_level = {f.background_level}",
            f"contrast_gain = {f.contrast_gain}",
            f"texture_frequency = {f.texture_frequency}",
            f"texture_orientation = {f.texture_orientation}",
            f"noise_sigma = {f.noise_sigma}",
            f"shape = {f.shape}",
            f"defect_rate = {f.defect_rate}",
            f"seed = {f.seed}",
        ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
