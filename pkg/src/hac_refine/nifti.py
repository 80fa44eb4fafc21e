"""Minimal NIfTI-1 reader/writer and bounding-box CSV ingestion.

Supports the single-file layout (magic ``n+1\\0``), plain or gzip
streams, datatypes uint8/int16/int32/float32/float64, and axis-aligned
orientations only: permutation/flip affines are resolved into the
package's x,y,z axis order at load, anything oblique is rejected loudly.
Files are written as float32 with an axis-aligned sform, so write->read
round trips are bit-exact for float32 data.
"""

import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadMagicError,
    InvertedBoxError,
    IoFailureError,
    MalformedRowError,
    TruncatedFileError,
    UnsupportedDatatypeError,
    UnsupportedOrientationError,
)
from .grid import GridMeta, Volume3

HEADER_SIZE = 348
_DTYPES = {2: "u1", 4: "i2", 8: "i4", 16: "f4", 64: "f8"}
_BBOX_HEADER = "PatientID,x1,y1,z1,x2,y2,z2"

# fraction of the dominant entry above which an affine column counts as oblique
_OBLIQUE_TOL = 1e-3


@dataclass(frozen=True)
class BBoxMM:
    """World-space mm bounding box for one patient."""

    patient_id: str
    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lo)
        hi = tuple(float(x) for x in self.hi)
        if any(l >= h for l, h in zip(lo, hi)):
            raise InvertedBoxError(f"{self.patient_id}: box lo {lo} not < hi {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)


def _open_maybe_gzip(path, mode):
    raw = open(path, mode)
    if "r" in mode:
        head = raw.read(2)
        raw.seek(0)
        if head == b"\x1f\x8b":
            return gzip.GzipFile(fileobj=raw)
    return raw


def _read_exact(stream, count, path, what):
    """Read ``count`` bytes, mapping stream failures into the taxonomy."""
    try:
        blob = stream.read(count)
    except EOFError as exc:  # gzip stream cut short
        raise TruncatedFileError(f"{path}: stream ends inside {what}") from exc
    except OSError as exc:
        raise IoFailureError(f"cannot read {path}: {exc}") from exc
    if len(blob) < count:
        raise TruncatedFileError(
            f"{path}: {what} is {len(blob)} of {count} bytes"
        )
    return blob


def _quaternion_matrix(b, c, d, qfac):
    a2 = 1.0 - (b * b + c * c + d * d)
    a = np.sqrt(a2) if a2 > 0.0 else 0.0
    rot = np.array(
        [
            [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
            [2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b)],
            [2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - b * b - c * c],
        ]
    )
    rot[:, 2] *= qfac
    return rot


def _resolve_orientation(direction, translation, data, spacing):
    """Rearrange data so the affine becomes diagonal-positive.

    ``direction`` columns give the world step per voxel axis. Only signed
    permutation structures are accepted.
    """
    perm = [-1, -1, -1]  # world axis w -> voxel axis
    for j in range(3):
        col = direction[:, j]
        w = int(np.argmax(np.abs(col)))
        dominant = abs(col[w])
        if dominant == 0.0:
            raise UnsupportedOrientationError("degenerate affine column")
        others = np.abs(np.delete(col, w))
        if np.any(others > _OBLIQUE_TOL * dominant):
            raise UnsupportedOrientationError(
                f"oblique orientation: column {j} of {direction.tolist()}"
            )
        if perm[w] != -1:
            raise UnsupportedOrientationError("affine is not a permutation")
        perm[w] = j

    data = np.transpose(data, perm)
    spacing = tuple(spacing[perm[w]] for w in range(3))
    origin = list(translation)
    for w in range(3):
        step = direction[w, perm[w]]
        if step < 0.0:
            data = np.flip(data, axis=w)
            origin[w] = translation[w] + step * (data.shape[w] - 1)
    return data, spacing, tuple(origin)


def read_nifti(path) -> Volume3:
    """Read a single-file NIfTI-1 volume (.nii or .nii.gz)."""
    try:
        stream = _open_maybe_gzip(path, "rb")
    except OSError as exc:
        raise IoFailureError(f"cannot open {path}: {exc}") from exc
    with stream:
        header = _read_exact(stream, HEADER_SIZE, path, "header")

        magic = header[344:348]
        if magic == b"ni1\x00":
            raise BadMagicError(f"{path}: two-file NIfTI-1 (.hdr/.img) is unsupported")
        if magic != b"n+1\x00":
            raise BadMagicError(f"{path}: magic {magic!r} is not 'n+1'")

        for bo in ("<", ">"):
            if struct.unpack_from(bo + "i", header, 0)[0] == HEADER_SIZE:
                break
        else:
            raise BadMagicError(f"{path}: sizeof_hdr is not 348 in either byte order")

        dim = struct.unpack_from(bo + "8h", header, 40)
        ndim = dim[0]
        if not 1 <= ndim <= 7:
            raise BadMagicError(f"{path}: dim[0]={ndim} out of range")
        if ndim < 3 or any(d > 1 for d in dim[4 : 1 + ndim]):
            raise UnsupportedDatatypeError(
                f"{path}: only single-frame 3-D payloads supported, dim={dim}"
            )
        shape = tuple(int(d) for d in dim[1:4])

        datatype = struct.unpack_from(bo + "h", header, 70)[0]
        if datatype not in _DTYPES:
            raise UnsupportedDatatypeError(f"{path}: datatype code {datatype}")

        pixdim = struct.unpack_from(bo + "8f", header, 76)
        spacing = pixdim[1:4]
        if any(not np.isfinite(s) or s <= 0.0 for s in spacing):
            raise BadMagicError(f"{path}: non-positive pixdim {spacing}")

        vox_offset = int(struct.unpack_from(bo + "f", header, 108)[0])
        if vox_offset < HEADER_SIZE:
            raise BadMagicError(f"{path}: vox_offset {vox_offset} < 348")
        scl_slope, scl_inter = struct.unpack_from(bo + "2f", header, 112)
        qform_code, sform_code = struct.unpack_from(bo + "2h", header, 252)

        skip = vox_offset - HEADER_SIZE
        if skip:
            _read_exact(stream, skip, path, "vox_offset gap")

        count = int(np.prod(shape))
        dtype = np.dtype(bo + _DTYPES[datatype])
        payload = _read_exact(stream, count * dtype.itemsize, path, "payload")
        data = np.frombuffer(payload, dtype=dtype).reshape(shape, order="F")
        data = data.astype(np.float64)

        inter = float(scl_inter) if np.isfinite(scl_inter) else 0.0
        if np.isfinite(scl_slope) and scl_slope != 0.0 and (scl_slope != 1.0 or inter != 0.0):
            data = data * float(scl_slope) + inter

        if sform_code > 0:
            srow = np.array(
                [
                    struct.unpack_from(bo + "4f", header, 280),
                    struct.unpack_from(bo + "4f", header, 296),
                    struct.unpack_from(bo + "4f", header, 312),
                ],
                dtype=np.float64,
            )
            direction, translation = srow[:, :3], srow[:, 3]
        elif qform_code > 0:
            b, c, d = struct.unpack_from(bo + "3f", header, 256)
            qoffset = struct.unpack_from(bo + "3f", header, 268)
            qfac = -1.0 if pixdim[0] < 0 else 1.0
            rot = _quaternion_matrix(float(b), float(c), float(d), qfac)
            direction = rot * np.asarray(spacing, dtype=np.float64)
            translation = np.asarray(qoffset, dtype=np.float64)
        else:
            direction = np.diag(np.asarray(spacing, dtype=np.float64))
            translation = np.zeros(3)

        data, spacing, origin = _resolve_orientation(
            direction, translation, data, tuple(float(s) for s in spacing)
        )
        return Volume3(GridMeta(data.shape, spacing, origin), data)


def write_nifti(v: Volume3, path) -> None:
    """Write a float32 single-file NIfTI-1 with an axis-aligned sform."""
    header = bytearray(HEADER_SIZE)
    struct.pack_into("<i", header, 0, HEADER_SIZE)
    struct.pack_into("<8h", header, 40, 3, *v.meta.shape, 1, 1, 1, 1)
    struct.pack_into("<2h", header, 70, 16, 32)  # float32
    struct.pack_into("<8f", header, 76, 1.0, *v.meta.spacing, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", header, 108, 352.0)  # vox_offset
    struct.pack_into("<2f", header, 112, 1.0, 0.0)  # scl_slope/inter
    header[123] = 2  # spatial units: mm
    struct.pack_into("<80s", header, 148, b"hac-refine")
    struct.pack_into("<2h", header, 252, 0, 1)  # qform off, sform on
    sx, sy, sz = v.meta.spacing
    ox, oy, oz = v.meta.origin
    struct.pack_into("<4f", header, 280, sx, 0.0, 0.0, ox)
    struct.pack_into("<4f", header, 296, 0.0, sy, 0.0, oy)
    struct.pack_into("<4f", header, 312, 0.0, 0.0, sz, oz)
    struct.pack_into("<4s", header, 344, b"n+1\x00")

    blob = bytes(header) + b"\x00" * 4 + v.data.astype(np.float32).tobytes(order="F")
    try:
        with open(path, "wb") as raw:
            if str(path).endswith(".gz"):
                # filename="" and mtime=0 keep the gzip bytes reproducible
                with gzip.GzipFile(filename="", fileobj=raw, mode="wb", mtime=0) as out:
                    out.write(blob)
            else:
                raw.write(blob)
    except OSError as exc:
        raise IoFailureError(f"cannot write {path}: {exc}") from exc


def read_bbox_csv(path):
    """Parse the per-case bounding-box table.

    Expected UTF-8 CSV with header ``PatientID,x1,y1,z1,x2,y2,z2`` and mm
    coordinates; returns BBoxMM rows in file order.
    """
    try:
        with open(path, "r", encoding="utf-8-sig") as fh:
            lines = [ln.strip() for ln in fh]
    except OSError as exc:
        raise IoFailureError(f"cannot read {path}: {exc}") from exc
    lines = [ln for ln in lines if ln]
    if not lines or lines[0].replace(" ", "") != _BBOX_HEADER:
        got = lines[0] if lines else "<empty file>"
        raise MalformedRowError(f"{path}: expected header {_BBOX_HEADER!r}, got {got!r}")
    boxes = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 7:
            raise MalformedRowError(f"{path}:{lineno}: expected 7 columns, got {len(fields)}")
        try:
            coords = [float(x) for x in fields[1:]]
        except ValueError as exc:
            raise MalformedRowError(f"{path}:{lineno}: non-numeric coordinate") from exc
        boxes.append(BBoxMM(fields[0], tuple(coords[:3]), tuple(coords[3:])))
    return boxes
