"""File formats: the PLF1 tensor container, PPM/PGM images, checkpoints.

PLF1 layout (all integers little-endian)::

    b"PLF1" | u8 rank | u32 dim * rank | u8 dtype tag | payload (row-major)

dtype tags: 0 = float32, 1 = float64, 2 = uint16 (label maps).
"""

import hashlib
import json
import os
import shutil
import struct
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

MAGIC = b"PLF1"
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<u2")}
TAGS = {v: k for k, v in DTYPES.items()}


class FormatError(ValueError):
    pass


def encode_tensor(arr):
    arr = np.asarray(arr)
    dt = arr.dtype.newbyteorder("<")
    if dt not in TAGS:
        raise TypeError(f"unsupported dtype {arr.dtype}; use float32, float64 or uint16")
    if arr.ndim > 255:
        raise ValueError("rank above 255 cannot be encoded")
    head = MAGIC + struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    head += struct.pack("<B", TAGS[dt])
    return head + np.ascontiguousarray(arr, dtype=dt).tobytes()


def decode_tensor(buf, name="<buffer>"):
    if len(buf) < 6 or buf[:4] != MAGIC:
        raise FormatError(f"{name}: bad magic bytes, not a PLF1 tensor file")
    rank = buf[4]
    off = 5 + 4 * rank
    if len(buf) < off + 1:
        raise FormatError(f"{name}: truncated header")
    shape = struct.unpack(f"<{rank}I", buf[5:off])
    tag = buf[off]
    if tag not in DTYPES:
        raise FormatError(f"{name}: unknown dtype tag {tag}")
    dt = DTYPES[tag]
    payload = buf[off + 1:]
    expected = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    if len(payload) != expected:
        raise FormatError(f"{name}: payload is {len(payload)} bytes, header implies {expected}")
    return np.frombuffer(payload, dtype=dt).reshape(shape).copy()


def write_tensor(path, arr):
    atomic_write(path, encode_tensor(arr))


def read_tensor(path):
    path = Path(path)
    return decode_tensor(path.read_bytes(), str(path))


def write_labels(path, labels):
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > np.iinfo(np.uint16).max):
        raise ValueError("label values do not fit in uint16")
    write_tensor(path, labels.astype(np.uint16))


def read_labels(path):
    arr = read_tensor(path)
    if arr.dtype != np.uint16:
        raise FormatError(f"{path}: expected a uint16 label map, found {arr.dtype}")
    return arr.astype(np.int64)


def atomic_write(path, data):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data if isinstance(data, bytes) else data.encode())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


# Distinct, colour-blind friendly-ish palette; cycles for more classes.
PALETTE = np.array([
    [34, 139, 34], [220, 20, 60], [139, 90, 43], [154, 205, 50],
    [70, 130, 180], [255, 215, 0], [128, 0, 128], [0, 206, 209],
], dtype=np.uint8)
IGNORE_COLOR = np.array([0, 0, 0], dtype=np.uint8)


def ppm_bytes(rgb):
    rgb = np.asarray(rgb, np.uint8)
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes()


def pgm_bytes(gray):
    gray = np.asarray(gray, np.uint8)
    h, w = gray.shape
    return f"P5\n{w} {h}\n255\n".encode() + gray.tobytes()


def label_palette_image(labels, ignore_index=255):
    labels = np.asarray(labels)
    rgb = PALETTE[np.where(labels == ignore_index, 0, labels) % len(PALETTE)]
    rgb[labels == ignore_index] = IGNORE_COLOR
    return rgb


def write_label_ppm(path, labels):
    atomic_write(path, ppm_bytes(label_palette_image(labels)))


def write_weight_pgm(path, weight):
    """Grayscale of a (H, W[, 1]) map in [0, 1]; darker means lower weight."""
    w = np.asarray(weight, np.float64)
    if w.ndim == 3:
        w = w[..., 0]
    atomic_write(path, pgm_bytes(np.clip(np.rint(w * 255.0), 0, 255)))


def read_pnm(path):
    """Minimal P5/P6 reader (no comments), for tests and inspection."""
    data = Path(path).read_bytes()
    parts = data.split(b"\n", 3)
    kind, dims, maxval, body = parts
    w, h = (int(v) for v in dims.split())
    if int(maxval) != 255:
        raise FormatError(f"{path}: only maxval 255 supported")
    if kind == b"P6":
        return np.frombuffer(body, np.uint8).reshape(h, w, 3)
    if kind == b"P5":
        return np.frombuffer(body, np.uint8).reshape(h, w)
    raise FormatError(f"{path}: unsupported PNM kind {kind!r}")


def config_hash(obj):
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def save_checkpoint(directory, model, step, config, bank=None):
    """Parameters as PLF1 files plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, arr in model.params.items():
        files[name] = f"{name}.plf"
        write_tensor(directory / files[name], np.asarray(arr, np.float64))
    shadow = getattr(model, "shadow", None)
    if shadow is not None:
        for name, arr in shadow.items():
            files[f"shadow.{name}"] = f"shadow.{name}.plf"
            write_tensor(directory / files[f"shadow.{name}"], np.asarray(arr, np.float64))
    if bank is not None:
        files["prototypes"] = "prototypes.plf"
        write_tensor(directory / "prototypes.plf", bank.to_array())
    manifest = {
        "step": int(step),
        "config_hash": config_hash(config),
        "config": config,
        "branch_w": model.branch_w,
        "files": files,
    }
    write_json(directory / "manifest.json", manifest)
    return manifest


def load_checkpoint(directory):
    from .model import PARAM_NAMES, ToyModel
    from .prototypes import PrototypeBank

    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    files = manifest["files"]
    model = ToyModel({k: read_tensor(directory / files[k]) for k in PARAM_NAMES}, manifest["branch_w"])
    if "prototypes" in files:
        model.bank = PrototypeBank.from_array(read_tensor(directory / files["prototypes"]))
    return model, manifest


@contextmanager
def staged_outputs(directory):
    """Yield a temp directory whose contents move into ``directory`` only on
    success, so failed commands leave no partial files behind."""
    directory = Path(directory)
    directory.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(dir=directory.parent, prefix=f".{directory.name}."))
    try:
        yield stage
    except BaseException:
        _rmtree(stage)
        raise
    directory.mkdir(parents=True, exist_ok=True)
    for item in sorted(stage.rglob("*")):
        rel = item.relative_to(stage)
        dest = directory / rel
        if item.is_dir():
            dest.mkdir(parents=True, exist_ok=True)
        else:
            dest.parent.mkdir(parents=True, exist_ok=True)
            os.replace(item, dest)
    _rmtree(stage)


def _rmtree(path):
    shutil.rmtree(path, ignore_errors=True)
