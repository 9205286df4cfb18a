"""Model assembly: variants, spatial-spectral composition, accounting.

A model is one or two stacks of layers. Spatial-spectral (SS) variants
first run every band's flattened ``p*p`` window through the spatial stack
(one weight set shared by all bands, band axis folded into the batch),
compressing each band to a single value; the resulting length-``b``
vector goes through the spectral stack to produce two logits. Flat
variants apply a single stack to the flattened ``p*p*b`` patch.

Checkpoints are single files: an 8-byte little-endian header length, a
JSON header (config plus tensor names/shapes/offsets), then all parameter
tensors as little-endian float64. Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ContractError, MalformedHeaderError, TruncatedPayloadError
from .layers import init_params
from .spline import SplineGrid, make_grid

_MAGIC = b"SKAN0001"


class Variant(str, Enum):
    """The six network variants covered by the ablation grid."""

    MLP = "mlp"
    MLP_SS = "mlp-ss"
    KAN = "kan"
    KAN_ENC = "kan-enc"
    KAN_SS = "kan-ss"
    SPECTRAL_KAN = "spectral-kan"

    @property
    def spatial_spectral(self) -> bool:
        return self in (Variant.MLP_SS, Variant.KAN_SS, Variant.SPECTRAL_KAN)

    @property
    def layer_kind(self) -> str:
        if self in (Variant.MLP, Variant.MLP_SS):
            return "dense"
        if self in (Variant.KAN, Variant.KAN_SS):
            return "full"
        return "shared"


@dataclass
class ModelConfig:
    """Architecture description for any variant.

    ``spatial_nodes`` must run from ``patch_size**2`` down to 1 and
    ``spectral_nodes`` from ``bands`` down to 2. Flat (non-SS) variants
    derive their single node list as ``[p*p*bands] + spectral_nodes[1:]``.
    """

    variant: Variant = Variant.SPECTRAL_KAN
    patch_size: int = 5
    bands: int = 155
    spatial_nodes: list[int] = field(default_factory=lambda: [25, 16, 1])
    spectral_nodes: list[int] = field(default_factory=lambda: [155, 16, 2])
    grid: SplineGrid = field(default_factory=make_grid)

    def __post_init__(self):
        self.variant = Variant(self.variant)
        p, b = self.patch_size, self.bands
        if p < 1 or p % 2 == 0:
            raise ContractError(f"patch_size must be odd and positive, got {p}")
        if b < 1:
            raise ContractError(f"bands must be positive, got {b}")
        sp, sc = list(self.spatial_nodes), list(self.spectral_nodes)
        if len(sp) < 2 or sp[0] != p * p or sp[-1] != 1 or min(sp) < 1:
            raise ContractError(
                f"spatial nodes must run {p * p} -> ... -> 1, got {sp}")
        if len(sc) < 2 or sc[0] != b or sc[-1] != 2 or min(sc) < 1:
            raise ContractError(
                f"spectral nodes must run {b} -> ... -> 2, got {sc}")
        self.spatial_nodes, self.spectral_nodes = sp, sc

    @property
    def flat_nodes(self) -> list[int]:
        return [self.patch_size ** 2 * self.bands] + self.spectral_nodes[1:]


def _build_stack(kind: str, nodes: list[int], grid: SplineGrid, rng,
                 final_linear: bool):
    layers = []
    last = len(nodes) - 2
    for i, (d_in, d_out) in enumerate(zip(nodes, nodes[1:])):
        activate = not (final_linear and i == last)
        layers.append(init_params(kind, d_in, d_out, grid=grid, seed=rng,
                                  activate=activate))
    return layers


def build_model(config: ModelConfig, seed=0) -> "Model":
    """Deterministically initialize a model for the given config and seed."""
    rng = np.random.default_rng(seed)
    kind = config.variant.layer_kind
    if config.variant.spatial_spectral:
        # Dense stacks keep SiLU everywhere except the final logits layer.
        spatial = _build_stack(kind, config.spatial_nodes, config.grid, rng,
                               final_linear=False)
        spectral = _build_stack(kind, config.spectral_nodes, config.grid, rng,
                                final_linear=True)
        return Model(config, spatial, spectral)
    flat = _build_stack(kind, config.flat_nodes, config.grid, rng,
                        final_linear=True)
    return Model(config, [], flat)


@dataclass
class Model:
    """Layer stacks plus the config that shaped them.

    For flat variants ``spatial_stack`` is empty and ``spectral_stack``
    holds the single flat stack.
    """

    config: ModelConfig
    spatial_stack: list
    spectral_stack: list

    def _check_patches(self, patches) -> np.ndarray:
        patches = np.asarray(patches, dtype=np.float64)
        p, b = self.config.patch_size, self.config.bands
        if patches.ndim != 4 or patches.shape[1:] != (p, p, b):
            raise ContractError(
                f"expected patches of shape (n, {p}, {p}, {b}), got {patches.shape}")
        return patches

    def _band_rows(self, patches: np.ndarray) -> np.ndarray:
        # (n, p, p, b) -> (n*b, p*p): band-major rows of flattened windows.
        n = patches.shape[0]
        p, b = self.config.patch_size, self.config.bands
        return patches.transpose(0, 3, 1, 2).reshape(n * b, p * p)

    def spatial_features(self, patches) -> np.ndarray:
        """The per-band compressed vector fed to the spectral stack."""
        patches = self._check_patches(patches)
        if not self.config.variant.spatial_spectral:
            raise ContractError("flat variants have no spatial stage")
        n = patches.shape[0]
        x = self._band_rows(patches)
        for layer in self.spatial_stack:
            x, _ = layer.forward(x)
        return x.reshape(n, self.config.bands)

    def forward(self, patches) -> tuple[np.ndarray, list]:
        """Run a batch of patches to logits; also returns layer caches."""
        patches = self._check_patches(patches)
        n = patches.shape[0]
        caches = []
        if self.config.variant.spatial_spectral:
            x = self._band_rows(patches)
            for layer in self.spatial_stack:
                x, cache = layer.forward(x)
                caches.append(cache)
            x = x.reshape(n, self.config.bands)
        else:
            x = self._band_rows(patches).reshape(n, -1)
        for layer in self.spectral_stack:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, caches: list, grad_logits) -> list[np.ndarray]:
        """Gradients for every parameter tensor, in ``parameters()`` order."""
        n_spatial = len(self.spatial_stack)
        if len(caches) != n_spatial + len(self.spectral_stack):
            raise ContractError("cache list does not match the layer stacks")
        g = np.asarray(grad_logits, dtype=np.float64)
        rev: list[list[np.ndarray]] = []
        for layer, cache in zip(reversed(self.spectral_stack),
                                reversed(caches[n_spatial:])):
            g, grads = layer.backward(cache, g)
            rev.append(grads)
        if n_spatial:
            n = g.shape[0]
            g = g.reshape(n * self.config.bands, 1)
            for layer, cache in zip(reversed(self.spatial_stack),
                                    reversed(caches[:n_spatial])):
                g, grads = layer.backward(cache, g)
                rev.append(grads)
        flat: list[np.ndarray] = []
        for grads in reversed(rev):
            flat.extend(grads)
        return flat

    def layers(self) -> list:
        return list(self.spatial_stack) + list(self.spectral_stack)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers():
            out.extend(layer.params())
        return out

    def total_params(self) -> int:
        return sum(layer.param_count() for layer in self.layers())

    def total_flops(self) -> int:
        """Per-patch FLOP count under the fixed cost convention.

        The spatial stack runs once per band, so its per-row cost is
        multiplied by ``bands``.
        """
        spatial = sum(layer.flop_count() for layer in self.spatial_stack)
        spectral = sum(layer.flop_count() for layer in self.spectral_stack)
        return self.config.bands * spatial + spectral


def predict(model: Model, patches, batch_size: int = 512) -> np.ndarray:
    """Argmax class labels for a set of patches, evaluated in batches."""
    patches = np.asarray(patches, dtype=np.float64)
    out = np.empty(patches.shape[0], dtype=np.uint8)
    for start in range(0, patches.shape[0], batch_size):
        logits, _ = model.forward(patches[start:start + batch_size])
        out[start:start + batch_size] = np.argmax(logits, axis=1)
    return out


def _tensor_entries(model: Model):
    for stack_name, stack in (("spatial", model.spatial_stack),
                              ("spectral", model.spectral_stack)):
        for i, layer in enumerate(stack):
            for name, arr in zip(layer.param_names(), layer.params()):
                yield f"{stack_name}.{i}.{name}", arr


def _config_dict(config: ModelConfig) -> dict:
    return {
        "variant": config.variant.value,
        "patch_size": config.patch_size,
        "bands": config.bands,
        "spatial_nodes": config.spatial_nodes,
        "spectral_nodes": config.spectral_nodes,
        "spline": {
            "degree": config.grid.degree,
            "grid_size": config.grid.grid_size,
            "domain": [config.grid.lo, config.grid.hi],
        },
    }


def _config_from_dict(d: dict) -> ModelConfig:
    try:
        spline = d["spline"]
        grid = make_grid(int(spline["degree"]), int(spline["grid_size"]),
                         float(spline["domain"][0]), float(spline["domain"][1]))
        return ModelConfig(
            variant=Variant(d["variant"]),
            patch_size=int(d["patch_size"]),
            bands=int(d["bands"]),
            spatial_nodes=[int(v) for v in d["spatial_nodes"]],
            spectral_nodes=[int(v) for v in d["spectral_nodes"]],
            grid=grid,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedHeaderError(f"invalid checkpoint config: {exc}") from exc


def save_checkpoint(model: Model, path) -> None:
    """Write the model to a single self-describing file."""
    tensors = {}
    offset = 0
    payload = []
    for name, arr in _tensor_entries(model):
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        tensors[name] = {"shape": list(arr.shape), "offset": offset,
                         "nbytes": len(data)}
        payload.append(data)
        offset += len(data)
    header = json.dumps({"config": _config_dict(model.config),
                         "dtype": "f8le", "tensors": tensors},
                        sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for chunk in payload:
            fh.write(chunk)


def load_checkpoint(path) -> Model:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    blob = Path(path).read_bytes()
    if len(blob) < len(_MAGIC) + 8 or blob[:len(_MAGIC)] != _MAGIC:
        raise MalformedHeaderError(f"{path}: not a model checkpoint")
    (hlen,) = struct.unpack_from("<Q", blob, len(_MAGIC))
    start = len(_MAGIC) + 8
    if start + hlen > len(blob):
        raise TruncatedPayloadError(f"{path}: header extends past end of file")
    try:
        header = json.loads(blob[start:start + hlen].decode())
        tensors = header["tensors"]
    except (ValueError, KeyError) as exc:
        raise MalformedHeaderError(f"{path}: unreadable header: {exc}") from exc
    try:
        config = _config_from_dict(header["config"])
        model = build_model(config, seed=0)
    except ContractError as exc:
        raise MalformedHeaderError(f"{path}: {exc}") from exc
    body = blob[start + hlen:]
    seen = set()
    for name, arr in _tensor_entries(model):
        try:
            entry = tensors[name]
            shape, off, nbytes = entry["shape"], entry["offset"], entry["nbytes"]
        except (KeyError, TypeError) as exc:
            raise MalformedHeaderError(f"{path}: missing tensor {name!r}") from exc
        if tuple(shape) != arr.shape:
            raise MalformedHeaderError(
                f"{path}: tensor {name!r} has shape {shape}, expected {list(arr.shape)}")
        if off + nbytes > len(body):
            raise TruncatedPayloadError(f"{path}: payload truncated at {name!r}")
        arr[...] = np.frombuffer(body[off:off + nbytes], dtype="<f8").reshape(arr.shape)
        seen.add(name)
    extra = set(tensors) - seen
    if extra:
        raise MalformedHeaderError(f"{path}: unexpected tensors {sorted(extra)}")
    return model
