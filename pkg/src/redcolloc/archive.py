"""Binary model archive.

Layout::

    b"RCMODEL\\n"                      magic, 8 bytes
    u64 length, manifest (UTF-8 JSON)  human-readable metadata
    u64 CRC-64 of the manifest bytes
    sections, in manifest order:
        u64 rows, u64 cols, rows*cols float64   (column-major)

All integers and floats are little-endian. The manifest lists each
section with its shape and the CRC-64/WE of its header and payload.
"""
import json
import struct

import crcmod.predefined
import numpy as np

from .exceptions import ArchiveIntegrityError, ArchiveVersionError
from .problem import ParameterDomain
from .reduced import NonlinearReducedModel, ReducedModel

MAGIC = b"RCMODEL\n"
FORMAT_VERSION = 1
crc64 = crcmod.predefined.mkCrcFun("crc-64-we")

_LINEAR_SECTIONS = ("basis", "selected_mu", "r_factor", "point_blocks", "point_rhs")
_BURGERS_SECTIONS = ("basis", "selected_mu", "A", "B", "L2R", "forcing_base", "forcing_slope", "r_factor")


def _section_bytes(arr):
    arr = np.atleast_2d(np.asarray(arr, dtype=float))
    if arr.ndim != 2:
        raise ValueError("sections must be 2D")
    rows, cols = arr.shape
    return struct.pack("<QQ", rows, cols) + np.asfortranarray(arr).astype("<f8").tobytes(order="F")


def _sections(model):
    if isinstance(model, NonlinearReducedModel):
        secs = {k: getattr(model, k) for k in _BURGERS_SECTIONS}
        secs["forcing_base"] = model.forcing_base[:, None]
        secs["forcing_slope"] = model.forcing_slope[:, None]
        return secs
    secs = {k: getattr(model, k) for k in _LINEAR_SECTIONS[:3]}
    if model.method == "ercm":
        T, N, _ = model.point_blocks.shape
        secs["point_blocks"] = model.point_blocks.reshape(T * N, N)
        secs["point_rhs"] = model.point_rhs
    return secs


def manifest_for(model, extra=None):
    nonlinear = isinstance(model, NonlinearReducedModel)
    m = {
        "format_version": FORMAT_VERSION,
        "kind": "burgers" if nonlinear else "linear",
        "problem": model.problem_name,
        "method": model.method,
        "precond": model.precond,
        "d": model.domain.dim,
        "nx": int(model.nx),
        "N": int(model.N),
        "domain": {"lower": list(model.domain.lower), "upper": list(model.domain.upper)},
        "selected_mu": np.asarray(model.selected_mu).tolist(),
        "reduced_points": [int(p) for p in model.reduced_points],
    }
    if not nonlinear:
        m["n_op_terms"] = int(model.n_op_terms)
        m["n_rhs_terms"] = int(model.n_rhs_terms)
    if extra:
        m["problem_options"] = dict(extra)
    return m


def save_model(model, path, problem_options=None):
    """Write ``model`` to ``path``.

    ``problem_options`` (JSON-serializable) records how to rebuild the
    full-order problem, e.g. ``{"rhs_spec": "manufactured"}``.
    """
    manifest = manifest_for(model, problem_options)
    payloads = []
    manifest["sections"] = []
    for name, arr in _sections(model).items():
        b = _section_bytes(arr)
        rows, cols = struct.unpack("<QQ", b[:16])
        manifest["sections"].append({"name": name, "rows": rows, "cols": cols, "crc64": f"{crc64(b):016x}"})
        payloads.append(b)
    text = json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(text)))
        fh.write(text)
        fh.write(struct.pack("<Q", crc64(text)))
        for b in payloads:
            fh.write(b)
    return path


def _read_manifest(buf):
    if buf[:8] != MAGIC:
        raise ArchiveIntegrityError("not a model archive (bad magic)")
    try:
        (n,) = struct.unpack_from("<Q", buf, 8)
        text = bytes(buf[16 : 16 + n])
        (crc,) = struct.unpack_from("<Q", buf, 16 + n)
    except struct.error as exc:
        raise ArchiveIntegrityError(f"truncated archive header: {exc}") from None
    if len(text) != n or crc != crc64(text):
        raise ArchiveIntegrityError("manifest checksum mismatch")
    try:
        manifest = json.loads(text.decode("utf-8"))
    except ValueError as exc:
        raise ArchiveIntegrityError(f"unreadable manifest: {exc}") from None
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ArchiveVersionError(
            f"archive format version {version} is not supported (this build reads version {FORMAT_VERSION})")
    return manifest, 24 + n


def read_manifest(path):
    with open(path, "rb") as fh:
        return _read_manifest(fh.read())[0]


def _read_sections(buf, manifest, offset):
    out = {}
    for sec in manifest["sections"]:
        rows, cols = sec["rows"], sec["cols"]
        end = offset + 16 + 8 * rows * cols
        chunk = bytes(buf[offset:end])
        if len(chunk) != end - offset or struct.unpack("<QQ", chunk[:16]) != (rows, cols):
            raise ArchiveIntegrityError(f"section {sec['name']!r} is truncated or has a bad header")
        if f"{crc64(chunk):016x}" != sec["crc64"]:
            raise ArchiveIntegrityError(f"section {sec['name']!r} checksum mismatch")
        arr = np.frombuffer(chunk[16:], dtype="<f8").reshape((rows, cols), order="F")
        out[sec["name"]] = np.ascontiguousarray(arr, dtype=float)
        offset = end
    if offset != len(buf):
        raise ArchiveIntegrityError("trailing bytes after the last section")
    return out


def load_model(path):
    """Read and verify an archive written by :func:`save_model`."""
    with open(path, "rb") as fh:
        buf = fh.read()
    manifest, offset = _read_manifest(buf)
    s = _read_sections(buf, manifest, offset)
    domain = ParameterDomain(manifest["domain"]["lower"], manifest["domain"]["upper"])
    pts = np.array(manifest["reduced_points"], dtype=np.int64)
    if manifest["kind"] == "burgers":
        return NonlinearReducedModel(manifest["problem"], domain, manifest["nx"], s["basis"], s["selected_mu"],
                                     pts, s["A"], s["B"], s["L2R"], s["forcing_base"].ravel(),
                                     s["forcing_slope"].ravel(), s["r_factor"], manifest["method"],
                                     manifest["precond"])
    model = ReducedModel(manifest["method"], manifest["problem"], manifest["precond"], domain, manifest["nx"],
                         manifest["n_op_terms"], manifest["n_rhs_terms"], s["basis"], s["selected_mu"],
                         s["r_factor"], pts)
    if model.method == "ercm":
        N = model.N
        model.point_blocks = np.ascontiguousarray(s["point_blocks"].reshape(-1, N, N))
        model.point_rhs = s["point_rhs"]
    return model
