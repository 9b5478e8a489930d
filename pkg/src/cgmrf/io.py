"""Serialization: Matrix Market for sparse matrices, CSV for vectors and
meshes, JSON sidecars for metadata.

Directory layouts
-----------------
Gmrf:            Q.mtx, mu.csv (or mu_c.csv), nullspace.mtx (optional), meta.json
ConstraintBasis: T.mtx, H.csv (row,col,value triplets), basis.json
Mesh:            nodes.csv, triangles.csv, mesh.json
SpdeModel:       mesh files plus C.mtx, G.mtx, Q.mtx, model.json
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.io import mmread, mmwrite

from .basis import BlockFactor, ConstraintBasis
from .gmrf import Gmrf
from .sparse_linalg import NullSpaceBasis, as_csc
from .spde import Mesh, SpdeModel

__all__ = [
    "write_mtx", "read_mtx", "write_vector", "read_vector",
    "save_gmrf", "load_gmrf", "save_basis", "load_basis",
    "save_mesh", "load_mesh", "save_spde_model", "load_spde_model",
    "read_locations_csv",
]


def write_mtx(path, M, symmetric: bool = False):
    M = as_csc(M)
    mmwrite(str(path), M, symmetry="symmetric" if symmetric else "general")


def read_mtx(path) -> sp.csc_matrix:
    return as_csc(mmread(str(path)))


def write_vector(path, v):
    """Vector as plain CSV, or as a single-column Matrix Market file when the
    path ends in .mtx."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if str(path).endswith(".mtx"):
        mmwrite(str(path), sp.csc_matrix(v[:, None]))
    else:
        np.savetxt(str(path), v, fmt="%.17g")


def read_vector(path) -> np.ndarray:
    if str(path).endswith(".mtx"):
        return np.asarray(mmread(str(path)).todense()).reshape(-1)
    v = np.loadtxt(str(path), dtype=np.float64)
    return np.atleast_1d(v)


def save_gmrf(directory, g: Gmrf):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_mtx(d / "Q.mtx", g.Q, symmetric=True)
    meta = {"n": g.n, "s": g.s, "parametrization": g.parametrization}
    if g.parametrization == "natural":
        write_vector(d / "mu.csv", g.mu)
    else:
        write_vector(d / "mu_c.csv", g.mu_c)
    if g.nullspace is not None and g.nullspace.s:
        mmwrite(str(d / "nullspace.mtx"), sp.csc_matrix(g.nullspace.E))
    (d / "meta.json").write_text(json.dumps(meta, indent=1))


def load_gmrf(directory) -> Gmrf:
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text())
    Q = read_mtx(d / "Q.mtx")
    ns = None
    if (d / "nullspace.mtx").exists():
        ns = NullSpaceBasis(np.asarray(mmread(str(d / "nullspace.mtx")).todense()))
    if meta["parametrization"] == "natural":
        return Gmrf(Q=Q, mu=read_vector(d / "mu.csv"), nullspace=ns)
    return Gmrf(Q=Q, mu_c=read_vector(d / "mu_c.csv"), nullspace=ns)


def save_basis(directory, cb: ConstraintBasis):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_mtx(d / "T.mtx", cb.T)
    Hc = cb.H.tocoo()
    with open(d / "H.csv", "w") as fh:
        fh.write("row,col,value\n")
        for r, c, v in zip(Hc.row, Hc.col, Hc.data):
            fh.write(f"{r},{c},{v:.17g}\n")
    blocks = [{
        "rows": blk.rows.tolist(), "cols": blk.cols.tolist(),
        "c_pos": blk.c_pos.tolist(), "u_pos": blk.u_pos.tolist(),
        "U": blk.U.tolist(), "S": blk.S.tolist(),
    } for blk in cb.blocks]
    sidecar = {"k": cb.k, "n": cb.n, "method": cb.method,
               "c_idx": [0, cb.k], "u_idx": [cb.k, cb.n], "blocks": blocks}
    if cb.bstar is not None:
        sidecar["bstar"] = cb.bstar.tolist()
    (d / "basis.json").write_text(json.dumps(sidecar))


def load_basis(directory) -> ConstraintBasis:
    d = Path(directory)
    side = json.loads((d / "basis.json").read_text())
    T = read_mtx(d / "T.mtx")
    k, n = side["k"], side["n"]
    rows, cols, vals = [], [], []
    with open(d / "H.csv") as fh:
        next(fh)
        for line in fh:
            r, c, v = line.strip().split(",")
            rows.append(int(r)); cols.append(int(c)); vals.append(float(v))
    H = sp.coo_matrix((vals, (rows, cols)), shape=(k, k)).tocsc()
    blocks = [BlockFactor(
        rows=np.asarray(b["rows"], dtype=np.int64),
        cols=np.asarray(b["cols"], dtype=np.int64),
        c_pos=np.asarray(b["c_pos"], dtype=np.int64),
        u_pos=np.asarray(b["u_pos"], dtype=np.int64),
        U=np.asarray(b["U"], dtype=np.float64),
        S=np.asarray(b["S"], dtype=np.float64)) for b in side["blocks"]]
    bstar = np.asarray(side["bstar"]) if "bstar" in side else None
    return ConstraintBasis(T=T, k=k, n=n, H=H, blocks=blocks,
                           method=side["method"], bstar=bstar)


def save_mesh(directory, mesh: Mesh):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    np.savetxt(d / "nodes.csv", mesh.nodes, fmt="%.17g", delimiter=",",
               header="x,y", comments="")
    np.savetxt(d / "triangles.csv", mesh.triangles, fmt="%d", delimiter=",",
               header="v0,v1,v2", comments="")
    (d / "mesh.json").write_text(json.dumps(
        {"nx": mesh.nx, "ny": mesh.ny, "bounds": list(mesh.bounds)}))


def load_mesh(directory) -> Mesh:
    d = Path(directory)
    meta = json.loads((d / "mesh.json").read_text())
    nodes = np.loadtxt(d / "nodes.csv", delimiter=",", skiprows=1)
    triangles = np.loadtxt(d / "triangles.csv", delimiter=",", skiprows=1,
                           dtype=np.int64)
    return Mesh(nodes=np.atleast_2d(nodes), triangles=np.atleast_2d(triangles),
                nx=meta["nx"], ny=meta["ny"], bounds=tuple(meta["bounds"]))


def save_spde_model(directory, model: SpdeModel):
    d = Path(directory)
    save_mesh(d, model.mesh)
    write_mtx(d / "C.mtx", model.C, symmetric=True)
    write_mtx(d / "G.mtx", model.G, symmetric=True)
    write_mtx(d / "Q.mtx", model.Q, symmetric=True)
    (d / "model.json").write_text(json.dumps(
        {"kappa2": model.kappa2, "phi": model.phi, "alpha": model.alpha}))


def load_spde_model(directory) -> SpdeModel:
    d = Path(directory)
    meta = json.loads((d / "model.json").read_text())
    return SpdeModel(mesh=load_mesh(d), kappa2=meta["kappa2"], phi=meta["phi"],
                     alpha=meta["alpha"], C=read_mtx(d / "C.mtx"),
                     G=read_mtx(d / "G.mtx"), Q=read_mtx(d / "Q.mtx"))


def read_locations_csv(path):
    """Locations from CSV with columns x, y and optionally value.

    A non-numeric first line is treated as a header.  Returns (points,
    values-or-None).
    """
    path = Path(path)
    with open(path) as fh:
        first = fh.readline()
    skip = 0
    try:
        [float(tok) for tok in first.replace(",", " ").split()]
    except ValueError:
        skip = 1
    data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    pts = data[:, :2]
    vals = data[:, 2] if data.shape[1] > 2 else None
    return pts, vals
