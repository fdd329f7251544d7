"""Weight bundles: seeded initialization, manifest+blob file format, lookup.

A bundle on disk is two files: a human-readable manifest (one line per
array: path, shape, byte offset) and a sidecar ``<path>.bin`` blob of
little-endian float32 values in manifest order. Round-trips are bit
exact.

Because some layer widths depend on the run configuration (the number of
reference frames changes the stacked-similarity and concatenated-proxy
channel counts), parameter paths encode those widths and a
:class:`WeightStore` in seeded mode synthesizes any requested array on
demand. An array's values depend only on (seed, path), never on what was
requested before.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError
from .rng import derive_seed, generator

MANIFEST_HEADER = "proxyvos-weights v1"
_PATH_RE = re.compile(r"^[A-Za-z0-9_][A-Za-z0-9_/.\-]*$")

# top-level namespaces the inference pipeline knows how to consume
PIPELINE_NAMESPACES = ("encoder/", "proto/", "cal/")


@dataclass(frozen=True)
class ParamSpec:
    """Declared parameter array: path, shape, and the fan-in that scales its init."""

    path: str
    shape: tuple[int, ...]
    fan_in: int

    def __post_init__(self):
        if not _PATH_RE.match(self.path):
            raise ConfigError(f"bad parameter path: {self.path!r}")
        if len(self.shape) == 0 or any(d < 1 for d in self.shape):
            raise ConfigError(f"bad shape {self.shape} for {self.path}")
        if self.fan_in < 1:
            raise ConfigError(f"fan_in must be positive for {self.path}")


def synthesize_array(seed: int, spec: ParamSpec) -> np.ndarray:
    """Fill one array i.i.d. uniform on (-a, a), a = sqrt(6 / fan_in).

    Keyed by (seed, path) so synthesis order is irrelevant.
    """
    a = float(np.sqrt(6.0 / spec.fan_in))
    rng = generator(derive_seed(seed, "param", spec.path))
    count = int(np.prod(spec.shape))
    vals = (2.0 * rng.random(count) - 1.0) * a
    return vals.reshape(spec.shape).astype(np.float32)


class WeightBundle:
    """Named float32 arrays keyed by parameter path."""

    def __init__(self, arrays: dict[str, np.ndarray] | None = None):
        self._arrays: dict[str, np.ndarray] = {}
        if arrays:
            for path, arr in arrays.items():
                self.add(path, arr)

    def add(self, path: str, arr: np.ndarray) -> None:
        if not _PATH_RE.match(path):
            raise ConfigError(f"bad parameter path: {path!r}")
        if path in self._arrays:
            raise ConfigError(f"duplicate parameter path: {path}")
        self._arrays[path] = np.ascontiguousarray(arr, dtype=np.float32)

    def __contains__(self, path: str) -> bool:
        return path in self._arrays

    def __len__(self) -> int:
        return len(self._arrays)

    def paths(self) -> list[str]:
        return sorted(self._arrays)

    def get(self, path: str) -> np.ndarray:
        return self._arrays[path]

    def save(self, path: str | Path) -> None:
        """Write the manifest to `path` and the blob to `path`.bin, sorted by path."""
        manifest_path = Path(path)
        blob_path = Path(str(path) + ".bin")
        lines = [MANIFEST_HEADER]
        chunks = []
        offset = 0
        for name in self.paths():
            arr = self._arrays[name]
            raw = arr.astype("<f4").tobytes()
            lines.append(f"{name} {','.join(str(d) for d in arr.shape)} {offset}")
            chunks.append(raw)
            offset += len(raw)
        manifest_path.write_text("\n".join(lines) + "\n")
        blob_path.write_bytes(b"".join(chunks))

    @classmethod
    def load(cls, path: str | Path) -> "WeightBundle":
        manifest_path = Path(path)
        blob_path = Path(str(path) + ".bin")
        try:
            text = manifest_path.read_text()
            blob = blob_path.read_bytes()
        except OSError as exc:
            raise FormatError(f"cannot read weight files at {path}: {exc}") from exc
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != MANIFEST_HEADER:
            raise FormatError(f"{manifest_path}: not a weight manifest")
        bundle = cls()
        expected_offset = 0
        for ln in lines[1:]:
            fields = ln.split()
            if len(fields) != 3:
                raise FormatError(f"{manifest_path}: malformed line {ln!r}")
            name, shape_s, offset_s = fields
            if not _PATH_RE.match(name):
                raise FormatError(f"{manifest_path}: bad parameter path {name!r}")
            try:
                shape = tuple(int(d) for d in shape_s.split(","))
                offset = int(offset_s)
            except ValueError as exc:
                raise FormatError(f"{manifest_path}: malformed line {ln!r}") from exc
            if any(d < 1 for d in shape):
                raise FormatError(f"{manifest_path}: bad shape for {name}")
            if offset != expected_offset:
                raise FormatError(f"{manifest_path}: offset {offset} for {name}, expected {expected_offset}")
            nbytes = int(np.prod(shape)) * 4
            if offset + nbytes > len(blob):
                raise FormatError(f"{manifest_path}: blob too short for {name}")
            arr = np.frombuffer(blob, dtype="<f4", count=int(np.prod(shape)), offset=offset)
            bundle.add(name, arr.reshape(shape))
            expected_offset = offset + nbytes
        if expected_offset != len(blob):
            raise FormatError(f"{manifest_path}: blob has {len(blob) - expected_offset} trailing bytes")
        return bundle


def init_weights(seed: int, table: list[ParamSpec]) -> WeightBundle:
    """Build a full bundle for a declared parameter table, seeded and reproducible."""
    if not table:
        raise ConfigError("parameter table is empty")
    seen = set()
    for spec in table:
        if spec.path in seen:
            raise ConfigError(f"duplicate parameter path: {spec.path}")
        seen.add(spec.path)
    bundle = WeightBundle()
    for spec in sorted(table, key=lambda s: s.path):
        bundle.add(spec.path, synthesize_array(seed, spec))
    return bundle


def load_weights(path: str | Path) -> WeightBundle:
    """Load a pipeline weight bundle, rejecting paths outside known namespaces."""
    bundle = WeightBundle.load(path)
    for name in bundle.paths():
        if not name.startswith(PIPELINE_NAMESPACES):
            raise FormatError(f"unknown parameter path: {name}")
    return bundle


class WeightStore:
    """Resolves parameter arrays from a fixed bundle or by seeded synthesis.

    Exactly one source is active: `bundle` (file mode, missing arrays are a
    configuration error) or `seed` (arrays are synthesized on demand).
    """

    def __init__(self, *, bundle: WeightBundle | None = None, seed: int | None = None):
        if (bundle is None) == (seed is None):
            raise ConfigError("weight store needs exactly one of bundle or seed")
        self._bundle = bundle
        self._seed = seed
        self._cache: dict[str, np.ndarray] = {}

    @property
    def seeded(self) -> bool:
        return self._seed is not None

    def get(self, spec: ParamSpec) -> np.ndarray:
        if self._bundle is not None:
            if spec.path not in self._bundle:
                raise ConfigError(
                    f"missing weight array {spec.path!r} "
                    f"(shape {spec.shape}); re-run with seeded weights or "
                    f"regenerate the bundle"
                )
            arr = self._bundle.get(spec.path)
            if arr.shape != spec.shape:
                raise ConfigError(
                    f"weight array {spec.path!r} has shape {arr.shape}, expected {spec.shape}"
                )
            return arr
        cached = self._cache.get(spec.path)
        if cached is None:
            cached = synthesize_array(self._seed, spec)
            self._cache[spec.path] = cached
        return cached
