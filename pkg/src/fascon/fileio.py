"""PGM images, JSON model archives, batch files and CSV output."""
import json
import math
import sys
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, PgmParseError

FORMAT_VERSION = 1
BATCH_MAGIC = "fascon-batch"
MODEL_MAGIC = "fascon-model"

_WHITESPACE = b" \t\n\r\v\f"


# -- PGM -------------------------------------------------------------------

def _header_tokens(data, count, pos):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens = []
    while len(tokens) < count:
        while pos < len(data) and data[pos] in _WHITESPACE:
            pos += 1
        if pos >= len(data):
            raise PgmParseError("truncated header", pos)
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos] not in _WHITESPACE and data[pos:pos + 1] != b"#":
            pos += 1
        tok = data[start:pos]
        if not tok.isdigit():
            raise PgmParseError(f"expected a decimal integer, got {tok!r}", start)
        tokens.append(int(tok))
    return tokens, pos


def parse_pgm(data):
    """Decode P2/P5 bytes into a float image with values in [0, 1]."""
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise PgmParseError(f"unsupported magic {magic!r}", 0)
    (width, height, maxval), pos = _header_tokens(data, 3, 2)
    if width < 1 or height < 1:
        raise PgmParseError("image dimensions must be positive", pos)
    if not 0 < maxval <= 65535:
        raise PgmParseError(f"maxval {maxval} outside 1..65535", pos)
    count = width * height
    if magic == b"P5":
        if pos >= len(data) or data[pos] not in _WHITESPACE:
            raise PgmParseError("missing whitespace after maxval", pos)
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        if len(data) - pos < need:
            raise PgmParseError(f"truncated raster: need {need} bytes, have {len(data) - pos}", pos)
        raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos).astype(np.int64)
    else:
        values, _ = _header_tokens(data, count, pos) if count else ([], pos)
        raw = np.array(values, dtype=np.int64)
    if np.any(raw > maxval):
        raise PgmParseError("sample exceeds maxval", pos)
    return raw.reshape(height, width) / float(maxval)


def read_pgm(path):
    try:
        data = Path(path).read_bytes()
    except IsADirectoryError as exc:
        raise InvalidInputError(f"{path} is a directory") from exc
    return parse_pgm(data)


def quantize(image, maxval=255):
    """Map values in [0, 1] to integers, rounding half up. Returns (ints, clipped fraction)."""
    img = np.asarray(image, dtype=np.float64)
    if not np.all(np.isfinite(img)):
        raise InvalidInputError("image contains non-finite values")
    clipped = float(np.mean((img < 0) | (img > 1))) if img.size else 0.0
    ints = np.floor(np.clip(img, 0.0, 1.0) * maxval + 0.5).astype(np.int64)
    return ints, clipped


def write_pgm(image, path, maxval=255, ascii=False):
    """Write a 2-D image with values in [0, 1] as PGM (P5 unless ``ascii``).

    Values outside [0, 1] are clipped and the clipped fraction is reported
    on stderr. Returns the clipped fraction.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise InvalidInputError(f"expected a 2-D image, got shape {img.shape}")
    if not 0 < maxval <= 65535:
        raise InvalidInputError("maxval must lie in 1..65535")
    ints, clipped = quantize(img, maxval)
    if clipped:
        print(f"write_pgm: clipped {clipped:.6f} of pixels in {path}", file=sys.stderr)
    height, width = img.shape
    if ascii:
        rows = "\n".join(" ".join(str(v) for v in row) for row in ints)
        payload = f"P2\n{width} {height}\n{maxval}\n{rows}\n".encode("ascii")
    else:
        dtype = ">u2" if maxval > 255 else "u1"
        payload = f"P5\n{width} {height}\n{maxval}\n".encode("ascii") + ints.astype(dtype).tobytes()
    Path(path).write_bytes(payload)
    return clipped


# -- JSON helpers ----------------------------------------------------------

def _encode(obj):
    # python floats serialize with repr, the shortest string that round-trips exactly
    if isinstance(obj, np.ndarray):
        if not np.all(np.isfinite(obj)):
            raise InvalidInputError("archives cannot store non-finite numbers")
        return {"__array__": True, "dtype": "float64", "shape": list(obj.shape),
                "data": [float(x) for x in obj.ravel()]}
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        raise InvalidInputError("archives cannot store non-finite numbers")
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if obj.get("__array__"):
            return np.array(obj["data"], dtype=np.float64).reshape(obj["shape"])
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def dumps(obj):
    return json.dumps(_encode(obj), indent=1, sort_keys=True, allow_nan=False) + "\n"


# -- model archives --------------------------------------------------------

def model_to_archive(model, config=None, created=None):
    """Build the archive dictionary for any of the three model types."""
    from .cd import MixtureExpertSet
    from .pseudolikelihood import PlModel
    from .simple import StudentTExpertSet

    if isinstance(model, StudentTExpertSet):
        method = "simple"
        params = {"weights": model.weights, "k": float(model.k)}
    elif isinstance(model, PlModel):
        method = "pl"
        params = {"weights": model.weights, "k": float(model.k), "levels": model.space.levels}
    elif isinstance(model, MixtureExpertSet):
        method = "cd"
        params = model.params()
    else:
        raise InvalidInputError(f"cannot archive {type(model).__name__}")
    n, m = (model.n, model.m)
    return {
        "format": MODEL_MAGIC,
        "format_version": FORMAT_VERSION,
        "method": method,
        "n": n,
        "m": m,
        "params": params,
        "config": config or {},
        "created": created,
    }


def archive_to_model(doc):
    from .cd import MixtureExpertSet
    from .pseudolikelihood import PlModel, QuantizedSpace
    from .simple import StudentTExpertSet

    if doc.get("format") != MODEL_MAGIC:
        raise InvalidInputError("not a model archive")
    if doc.get("format_version") != FORMAT_VERSION:
        raise InvalidInputError(f"unsupported archive version {doc.get('format_version')!r}")
    p = doc["params"]
    method = doc["method"]
    if method == "simple":
        return StudentTExpertSet(p["weights"], p["k"])
    if method == "pl":
        return PlModel(p["weights"].reshape(doc["m"], doc["n"]), QuantizedSpace(p["levels"]), p["k"])
    if method == "cd":
        return MixtureExpertSet(p["lam"], p["mix"], p["log_var1"], p["log_var0"])
    raise InvalidInputError(f"unknown method tag {method!r}")


def save_model(model, path, config=None, created=None):
    Path(path).write_text(dumps(model_to_archive(model, config, created)))


def load_archive(path):
    return _decode(json.loads(Path(path).read_text()))


def load_model(path):
    """Return ``(model, archive_dict)``."""
    doc = load_archive(path)
    return archive_to_model(doc), doc


# -- batch files -----------------------------------------------------------

def save_batch(values, path, meta=None, binary=True):
    """Write a (count, n) array: JSON header line plus an optional raw payload.

    With ``binary`` the values follow the header line as little-endian
    float64; otherwise they are stored inline in the JSON.
    """
    values = np.atleast_2d(np.asarray(values, dtype=np.float64))
    header = {
        "format": BATCH_MAGIC,
        "format_version": FORMAT_VERSION,
        "count": int(values.shape[0]),
        "n": int(values.shape[1]),
        "meta": meta or {},
    }
    if binary:
        header["payload"] = {"dtype": "<f8", "nbytes": int(values.size * 8)}
        text = json.dumps(_encode(header), sort_keys=True, allow_nan=False)
        Path(path).write_bytes(text.encode("utf-8") + b"\n" + values.astype("<f8").tobytes())
    else:
        header["values"] = values
        text = json.dumps(_encode(header), sort_keys=True, allow_nan=False)
        Path(path).write_bytes(text.encode("utf-8") + b"\n")


def load_batch(path):
    """Return ``(values, meta)`` from a batch file."""
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise InvalidInputError(f"{path}: missing header line")
    try:
        header = _decode(json.loads(raw[:nl].decode("utf-8")))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"{path}: malformed batch header") from exc
    if header.get("format") != BATCH_MAGIC:
        raise InvalidInputError(f"{path}: not a batch file")
    count, n = header["count"], header["n"]
    if "payload" in header:
        body = raw[nl + 1:]
        if len(body) != count * n * 8:
            raise InvalidInputError(f"{path}: payload has {len(body)} bytes, expected {count * n * 8}")
        values = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(count, n)
    else:
        values = np.asarray(header["values"], dtype=np.float64).reshape(count, n)
    return values, header.get("meta", {})


# -- CSV -------------------------------------------------------------------

def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, columns, rows):
    lines = [",".join(columns)]
    lines += [",".join(_fmt(x) for x in row) for row in rows]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
