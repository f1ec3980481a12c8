"""File formats: CGRD complex grids, strict JSON configs, reports and model checkpoints.

CGRD layout (all little-endian)::

    b"CGRD" | u16 version=1 | u16 ndims | u64 dims[ndims] | u8 dtype | payload

``dtype`` is 0 for float32 and 1 for float64 scalars; the payload holds
interleaved (real, imag) pairs in row-major order with the slowest axis
first.
"""

import dataclasses
import hashlib
import json
import math
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CGRD"
VERSION = 1
_DTYPES = {0: np.dtype("<c8"), 1: np.dtype("<c16")}
_FLAGS = {np.dtype("<c8"): 0, np.dtype("<c16"): 1}


class CgridError(OSError):
    """Missing, truncated or malformed CGRD file."""


class ConfigError(ValueError):
    """JSON configuration that violates its schema."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


# --- CGRD ----------------------------------------------------------------------

def write_cgrid(path, array, precision=None):
    """Write a (complex or real) array; real input is stored with zero imaginary part.

    ``precision`` is "float32" or "float64"; by default it follows the input.
    """
    arr = np.asarray(array)
    if precision is None:
        precision = "float32" if arr.dtype in (np.float32, np.complex64) else "float64"
    dt = np.dtype("<c8") if precision == "float32" else np.dtype("<c16")
    data = np.ascontiguousarray(arr, dtype=dt)
    header = MAGIC + struct.pack("<HH", VERSION, data.ndim)
    header += struct.pack(f"<{data.ndim}Q", *data.shape)
    header += struct.pack("<B", _FLAGS[dt])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def read_cgrid(path):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CgridError(f"{path}: cannot read ({exc.strerror})") from exc
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise CgridError(f"{path}: not a CGRD file (bad magic)")
    version, ndims = struct.unpack_from("<HH", raw, 4)
    if version != VERSION:
        raise CgridError(f"{path}: unsupported CGRD version {version}")
    off = 8
    if len(raw) < off + 8 * ndims + 1:
        raise CgridError(f"{path}: truncated header")
    dims = struct.unpack_from(f"<{ndims}Q", raw, off)
    off += 8 * ndims
    flag = raw[off]
    off += 1
    if flag not in _DTYPES:
        raise CgridError(f"{path}: unknown scalar flag {flag}")
    dt = _DTYPES[flag]
    expected = math.prod(dims) * dt.itemsize
    if len(raw) - off != expected:
        raise CgridError(f"{path}: payload has {len(raw) - off} bytes, expected {expected}")
    return np.frombuffer(raw, dtype=dt, offset=off).reshape(dims).copy()


# --- JSON configs --------------------------------------------------------------

def config_from_dict(cls, data, section=None):
    """Build dataclass ``cls`` from ``data``, rejecting unknown or ill-typed fields."""
    where = f"{section}." if section else ""
    if not isinstance(data, dict):
        raise ConfigError(f"{section or 'config'} must be a JSON object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key in data:
        if key not in fields:
            raise ConfigError(f"unknown field {where}{key}", f"{where}{key}")
    kwargs = {}
    for key, value in data.items():
        default = fields[key].default
        kwargs[key] = _coerce(value, default, f"{where}{key}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section or 'config'}: {exc}") from exc


def _coerce(value, default, name):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"field {name} must be a boolean", name)
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"field {name} must be an integer", name)
        return value
    if isinstance(default, float) or default is None:
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"field {name} must be a number", name)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"field {name} must be a string", name)
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or len(value) != len(default):
            raise ConfigError(f"field {name} must be a list of {len(default)} numbers", name)
        return tuple(_coerce(v, d, name) for v, d in zip(value, default))
    return value


def load_config(cls, path, section=None):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise CgridError(f"{path}: cannot read config ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    return config_from_dict(cls, data, section)


def config_dict(cfg):
    d = dataclasses.asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def config_hash(cfg):
    """SHA-256 of the canonical JSON form of a config dataclass or dict."""
    d = cfg if isinstance(cfg, dict) else config_dict(cfg)
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except OSError as exc:
        raise CgridError(f"{path}: cannot read ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise CgridError(f"{path}: corrupt JSON ({exc.msg})") from exc


# --- reports --------------------------------------------------------------------

@dataclasses.dataclass
class ReconReport:
    method: str
    snr_db: list
    seconds: list
    config_hash: str
    seed: int = 0
    extra: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if len(self.snr_db) < 1:
            raise ValueError("report needs at least one sample")

    @property
    def mean_snr_db(self):
        return float(np.mean(self.snr_db))

    @property
    def mean_seconds(self):
        return float(np.mean(self.seconds)) if self.seconds else None

    def to_dict(self):
        return {
            "method": self.method,
            "snr_db": [float(s) for s in self.snr_db],
            "mean_snr_db": self.mean_snr_db,
            "seconds": [float(s) for s in self.seconds],
            "mean_seconds": self.mean_seconds,
            "config_hash": self.config_hash,
            "seed": self.seed,
            **self.extra,
        }


# --- model checkpoints ------------------------------------------------------------

def save_model(directory, params, train_cfg=None, train_log=None):
    """Write one CGRD file per tensor plus ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    tensors = {}
    nets = [("dk", params.kspace)] + ([("di", params.image)] if params.hybrid else [])
    for tag, den in nets:
        for i, layer in enumerate(den.layers):
            for kind in ("kernel", "bias"):
                name = f"{tag}.{i}.{kind}"
                fname = f"{name}.cgrid"
                write_cgrid(d / fname, getattr(layer, kind))
                tensors[name] = fname
    manifest = {
        "format": "calibless-model",
        "version": 1,
        "arch": "hybrid" if params.hybrid else "kspace",
        "coils": params.coils,
        "unrolls": params.unrolls,
        "width": params.kspace.width,
        "kernel_size": params.kspace.kernel_size,
        "log_beta_k": params.log_beta_k,
        "log_beta_i": params.log_beta_i,
        "beta_k": params.beta_k,
        "beta_i": params.beta_i,
        "train_beta": params.train_beta,
        "tensors": tensors,
    }
    if train_cfg is not None:
        manifest["seed"] = train_cfg.seed
        manifest["train_config"] = config_dict(train_cfg)
        manifest["train_config_hash"] = config_hash(train_cfg)
    write_json(d / "manifest.json", manifest)
    if train_log is not None:
        write_json(d / "train_log.json", train_log.to_dict())


def load_model(directory):
    from .net import N_LAYERS, ConvLayer, DenoiserParams, NetParams

    d = Path(directory)
    manifest = read_json(d / "manifest.json")
    if manifest.get("format") != "calibless-model":
        raise CgridError(f"{d / 'manifest.json'}: not a model manifest")

    def denoiser(tag):
        layers = []
        for i in range(N_LAYERS):
            parts = {}
            for kind in ("kernel", "bias"):
                name = f"{tag}.{i}.{kind}"
                if name not in manifest["tensors"]:
                    raise CgridError(f"{d}: manifest lacks tensor {name}")
                arr = read_cgrid(d / manifest["tensors"][name])
                real_dtype = np.float32 if arr.dtype == np.complex64 else np.float64
                parts[kind] = np.ascontiguousarray(arr.real, dtype=real_dtype)
            layers.append(ConvLayer(parts["kernel"], parts["bias"]))
        return DenoiserParams(layers)

    image = denoiser("di") if manifest["arch"] == "hybrid" else None
    return NetParams(denoiser("dk"), image, float(manifest["log_beta_k"]),
                     float(manifest["log_beta_i"]), int(manifest["unrolls"]),
                     bool(manifest.get("train_beta", True))), manifest


def thread_limit():
    """Thread count requested through ``CALIBLESS_NUM_THREADS`` (None if unset)."""
    v = os.environ.get("CALIBLESS_NUM_THREADS")
    if not v:
        return None
    try:
        n = int(v)
    except ValueError as exc:
        raise ConfigError(f"CALIBLESS_NUM_THREADS must be an integer, got {v!r}") from exc
    if n < 1:
        raise ConfigError("CALIBLESS_NUM_THREADS must be >= 1")
    return n


# --- simulated data directories ----------------------------------------------------

DATA_FILES = {
    "image": "image.cgrid",
    "sens": "sens.cgrid",
    "mask": "mask.cgrid",
    "kspace": "kspace.cgrid",
    "b": "b.cgrid",
}


def save_dataset(directory, data, sim_cfg=None):
    """Write every array of a :class:`~calibless.dataset.Dataset` plus a manifest.

    The mask is stored as a complex 0/1 grid.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for key, fname in DATA_FILES.items():
        arr = getattr(data, key)
        write_cgrid(d / fname, arr.astype(np.complex128) if key == "mask" else arr)
    manifest = {"format": "calibless-data", "version": 1, "samples": len(data),
                "files": DATA_FILES}
    if sim_cfg is not None:
        manifest["config"] = config_dict(sim_cfg)
        manifest["config_hash"] = config_hash(sim_cfg)
        manifest["seed"] = sim_cfg.seed
    write_json(d / "manifest.json", manifest)


def load_dataset(directory):
    from .dataset import Dataset

    d = Path(directory)
    manifest = read_json(d / "manifest.json")
    if manifest.get("format") != "calibless-data":
        raise CgridError(f"{d / 'manifest.json'}: not a data manifest")
    arrays = {key: read_cgrid(d / fname) for key, fname in manifest["files"].items()}
    mask = arrays["mask"]
    if not np.all((mask == 0) | (mask == 1)):
        raise CgridError(f"{d / manifest['files']['mask']}: mask entries must be 0 or 1")
    return Dataset(arrays["image"], arrays["sens"], mask.real.astype(bool),
                   arrays["kspace"], arrays["b"]), manifest
