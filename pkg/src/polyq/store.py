"""On-disk formats: mesh JSON, spectrum archives and canonical JSON.

Archives are written with fixed zip timestamps so that identical data gives
identical bytes.
"""
from __future__ import annotations

import hashlib
import io
import json
import zipfile

import numpy as np

from .fem import Spectrum, StiffnessMassSystem, assemble
from .geometry import RationalPolygon, polygon_from_dict
from .mesh import TriangleMesh

_EPOCH = (1980, 1, 1, 0, 0, 0)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        fh.write(canonical_json(obj))


def digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def save_arrays(path, **arrays) -> None:
    """np.savez replacement with reproducible bytes."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]),
                                      allow_pickle=False)
            info = zipfile.ZipInfo(f"{name}.npy", date_time=_EPOCH)
            info.external_attr = 0o644 << 16
            zf.writestr(info, buf.getvalue())


def save_spectrum(path, spectrum: Spectrum, polygon: RationalPolygon | None = None) -> None:
    mesh = spectrum.mesh
    extra = {}
    if polygon is not None:
        extra["polygon"] = np.frombuffer(json.dumps(polygon.to_dict()).encode(), dtype=np.uint8)
    save_arrays(
        path,
        eigenvalues=spectrum.eigenvalues,
        coefficients=spectrum.coefficients,
        residuals=spectrum.residuals,
        nodes=mesh.nodes,
        triangles=mesh.triangles.astype(np.int64),
        boundary_nodes=np.asarray(mesh.boundary_nodes, dtype=np.int64),
        mesh_info=np.array([mesh.h, mesh.level, spectrum.orthonormality_error, spectrum.seed]),
        **extra,
    )


def load_spectrum(path) -> tuple[Spectrum, RationalPolygon | None]:
    with np.load(path, allow_pickle=False) as z:
        h, level, ortho, seed = z["mesh_info"]
        mesh = TriangleMesh(z["nodes"], z["triangles"], z["boundary_nodes"], float(h), int(level))
        system: StiffnessMassSystem = assemble(mesh)
        spec = Spectrum(z["eigenvalues"], z["coefficients"], system, z["residuals"],
                        float(ortho), int(seed))
        poly = None
        if "polygon" in z.files:
            poly = polygon_from_dict(json.loads(bytes(z["polygon"]).decode()))
    return spec, poly
