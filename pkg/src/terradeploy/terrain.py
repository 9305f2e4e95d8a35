"""Gaussian-mixture terrain: evaluation, heightmap ingestion and fitting."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._accel import get_backend


class HeightmapError(ValueError):
    """Malformed heightmap input. ``row``/``col`` are 0-based when known."""

    def __init__(self, message, row=None, col=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if col is not None:
            loc.append(f"col {col}")
        if loc:
            message = f"{message} (at {', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.col = col


@dataclass(frozen=True)
class GaussianBump:
    h: float
    mux: float
    muy: float
    sigx: float
    sigy: float

    def __post_init__(self):
        if not (self.sigx > 0 and self.sigy > 0):
            raise ValueError(f"bump spreads must be positive, got {self.sigx}, {self.sigy}")
        if not math.isfinite(self.h):
            raise ValueError("bump height must be finite")


@dataclass(frozen=True)
class TerrainModel:
    """Terrain elevation as ``base + sum_i h_i * exp(-dx_i^2/2 - dy_i^2/2)``.

    ``params`` is the (G, 5) array ``[h, mux, muy, sigx, sigy]`` used by the
    kernels; it is built once at construction.
    """

    components: tuple = ()
    base: float = 0.0
    params: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        comps = tuple(c if isinstance(c, GaussianBump) else GaussianBump(*c) for c in self.components)
        object.__setattr__(self, "components", comps)
        arr = np.array([[c.h, c.mux, c.muy, c.sigx, c.sigy] for c in comps], dtype=np.float64)
        arr = arr.reshape(len(comps), 5)
        arr.setflags(write=False)
        object.__setattr__(self, "params", arr)
        object.__setattr__(self, "base", float(self.base))

    @classmethod
    def from_params(cls, params, base=0.0):
        params = np.asarray(params, dtype=np.float64).reshape(-1, 5)
        return cls(tuple(GaussianBump(*map(float, row)) for row in params), base)

    @property
    def n_components(self):
        return len(self.components)

    def elevation(self, x, y, backend=None):
        return elevation(self, x, y, backend=backend)

    def max_abs_relief(self):
        """Upper bound on ``|elevation - base|``."""
        return float(np.abs(self.params[:, 0]).sum())

    def to_json(self) -> str:
        return model_to_json(self)


def elevation(model: TerrainModel, x, y, backend=None):
    """Evaluate terrain height at ``(x, y)``; scalars in, float out, arrays broadcast."""
    kern = get_backend(backend)
    xa, ya = np.broadcast_arrays(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
    out = kern.elevation(model.params, model.base, xa.ravel(), ya.ravel()).reshape(xa.shape)
    if out.ndim == 0:
        return float(out)
    return out


# --------------------------------------------------------------------------- JSON


def _num(v):
    return format(float(v), ".17g")


def model_to_json(model: TerrainModel) -> str:
    comps = ",\n    ".join(
        "{" + f'"h": {_num(c.h)}, "mux": {_num(c.mux)}, "muy": {_num(c.muy)}, '
        f'"sigx": {_num(c.sigx)}, "sigy": {_num(c.sigy)}' + "}"
        for c in model.components
    )
    body = f"\n    {comps}\n  " if comps else ""
    return f'{{\n  "base": {_num(model.base)},\n  "components": [{body}]\n}}\n'


def model_from_dict(d) -> TerrainModel:
    try:
        comps = tuple(
            GaussianBump(float(c["h"]), float(c["mux"]), float(c["muy"]), float(c["sigx"]), float(c["sigy"]))
            for c in d.get("components", [])
        )
        return TerrainModel(comps, float(d.get("base", 0.0)))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"bad terrain model object: {exc}") from exc


def model_from_json(text: str) -> TerrainModel:
    return model_from_dict(json.loads(text))


def load_model(path) -> TerrainModel:
    with open(path) as fh:
        return model_from_json(fh.read())


def save_model(model: TerrainModel, path):
    with open(path, "w") as fh:
        fh.write(model_to_json(model))


# --------------------------------------------------------------------------- grids


@dataclass(frozen=True)
class HeightGrid:
    """Row-major elevation samples. Row 0 is the northern (top) row, as in ESRI ASCII."""

    origin_x: float
    origin_y: float
    cell_size: float
    n_rows: int
    n_cols: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        if vals.size != self.n_rows * self.n_cols:
            raise ValueError(f"expected {self.n_rows * self.n_cols} values, got {vals.size}")
        if vals.size == 0:
            raise ValueError("empty grid")
        if not np.all(np.isfinite(vals)):
            raise ValueError("grid contains non-finite values")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def array(self):
        return self.values.reshape(self.n_rows, self.n_cols)

    def cell_centers(self):
        """Return (xs, ys): column-center x coordinates and row-center y coordinates."""
        xs = self.origin_x + (np.arange(self.n_cols) + 0.5) * self.cell_size
        ys = self.origin_y + (self.n_rows - 1 - np.arange(self.n_rows) + 0.5) * self.cell_size
        return xs, ys

    @classmethod
    def from_model(cls, model, origin_x, origin_y, cell_size, n_rows, n_cols):
        g = cls(origin_x, origin_y, cell_size, n_rows, n_cols, np.zeros(n_rows * n_cols))
        xs, ys = g.cell_centers()
        X, Y = np.meshgrid(xs, ys)
        return cls(origin_x, origin_y, cell_size, n_rows, n_cols, elevation(model, X, Y).ravel())


def _parse_float(tok, row, col):
    try:
        v = float(tok)
    except ValueError:
        raise HeightmapError(f"non-numeric cell {tok!r}", row, col) from None
    if not math.isfinite(v):
        raise HeightmapError(f"non-finite cell {tok!r}", row, col)
    return v


def _read_esri(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = {}
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        key = parts[0].lower()
        if key[0].isdigit() or key[0] in "+-.":
            break
        if len(parts) != 2:
            raise HeightmapError(f"malformed header line {lines[i]!r}", i)
        header[key] = parts[1]
        i += 1
    # xllcenter/yllcenter variants shift by half a cell
    for k in ("ncols", "nrows", "cellsize"):
        if k not in header:
            raise HeightmapError(f"missing header key {k!r}")
    try:
        n_cols = int(header["ncols"])
        n_rows = int(header["nrows"])
        cell = float(header["cellsize"])
        if "xllcorner" in header:
            x0 = float(header["xllcorner"])
        else:
            x0 = float(header.get("xllcenter", 0.0)) - 0.5 * cell
        if "yllcorner" in header:
            y0 = float(header["yllcorner"])
        else:
            y0 = float(header.get("yllcenter", 0.0)) - 0.5 * cell
        nodata = float(header["nodata_value"]) if "nodata_value" in header else None
    except ValueError as exc:
        raise HeightmapError(f"malformed header value: {exc}") from None
    if n_rows <= 0 or n_cols <= 0:
        raise HeightmapError("empty grid")
    if cell <= 0:
        raise HeightmapError("cellsize must be positive")
    data_lines = lines[i:]
    if len(data_lines) != n_rows:
        raise HeightmapError(f"expected {n_rows} data rows, found {len(data_lines)}", min(len(data_lines), n_rows))
    vals = np.empty(n_rows * n_cols)
    for r, ln in enumerate(data_lines):
        toks = ln.split()
        if len(toks) != n_cols:
            raise HeightmapError(f"ragged row: expected {n_cols} values, found {len(toks)}", r)
        for c, tok in enumerate(toks):
            v = _parse_float(tok, r, c)
            if nodata is not None and v == nodata:
                raise HeightmapError("NODATA cell not supported", r, c)
            vals[r * n_cols + c] = v
    return HeightGrid(x0, y0, cell, n_rows, n_cols, vals)


def _read_csv(text, cell_size, origin):
    rows = [r for r in csv.reader(io.StringIO(text)) if any(tok.strip() for tok in r)]
    if not rows:
        raise HeightmapError("empty grid")
    n_cols = len(rows[0])
    vals = np.empty(len(rows) * n_cols)
    for r, row in enumerate(rows):
        if len(row) != n_cols:
            raise HeightmapError(f"ragged row: expected {n_cols} values, found {len(row)}", r)
        for c, tok in enumerate(row):
            vals[r * n_cols + c] = _parse_float(tok.strip(), r, c)
    return HeightGrid(float(origin[0]), float(origin[1]), float(cell_size), len(rows), n_cols, vals)


def load_heightmap(source, fmt="esri_ascii", cell_size=1.0, origin=(0.0, 0.0)) -> HeightGrid:
    """Parse a heightmap from a text/byte stream, bytes, or str.

    CSV carries no georeferencing, so ``cell_size`` and ``origin`` (lower-left
    corner) are taken from the arguments; first CSV line is the top row.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if fmt in ("esri_ascii", "asc", "esri"):
        return _read_esri(source)
    if fmt == "csv":
        return _read_csv(source, cell_size, origin)
    raise ValueError(f"unknown heightmap format {fmt!r}")


def load_heightmap_file(path, fmt=None, **kw) -> HeightGrid:
    if fmt is None:
        fmt = "csv" if str(path).lower().endswith(".csv") else "esri_ascii"
    with open(path, "rb") as fh:
        return load_heightmap(fh, fmt, **kw)


def write_esri_ascii(grid: HeightGrid) -> str:
    out = [
        f"ncols {grid.n_cols}",
        f"nrows {grid.n_rows}",
        f"xllcorner {_num(grid.origin_x)}",
        f"yllcorner {_num(grid.origin_y)}",
        f"cellsize {_num(grid.cell_size)}",
    ]
    for row in grid.array:
        out.append(" ".join(_num(v) for v in row))
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------- fitting


@dataclass
class FitConfig:
    """Settings for :func:`fit_gaussians`.

    Bumps are inserted one at a time where a matched filter over ``scales``
    (in grid cells) promises the largest drop in squared error; after every
    insertion all parameters are refined jointly by least squares.
    """

    scales: tuple = (1.0, 2.0, 4.0, 8.0, 16.0)
    max_nfev: int = 400
    tol: float = 1e-10


def _bump_stack(P, xs, ys):
    ux = (xs[None, :] - P[:, 1:2]) / P[:, 3:4]
    uy = (ys[None, :] - P[:, 2:3]) / P[:, 4:5]
    return ux, uy, np.exp(-0.5 * ux * ux), np.exp(-0.5 * uy * uy)


def _render(P, base, xs, ys):
    if P.shape[0] == 0:
        return np.full((ys.size, xs.size), base)
    _, _, gx, gy = _bump_stack(P, xs, ys)
    return base + np.einsum("k,ki,kj->ij", P[:, 0], gy, gx)


def _polish(P, base, z, xs, ys, cfg):
    """Joint least squares over all bumps and the base; sigmas live in log space."""
    from scipy.optimize import least_squares

    G = P.shape[0]

    def unpack(v):
        Q = v[:-1].reshape(G, 5).copy()
        Q[:, 3:] = np.exp(Q[:, 3:])
        return Q, v[-1]

    def resid(v):
        Q, b = unpack(v)
        return (_render(Q, b, xs, ys) - z).ravel()

    def jac(v):
        Q, _ = unpack(v)
        ux, uy, gx, gy = _bump_stack(Q, xs, ys)
        J = np.empty((z.size, v.size))
        for k in range(G):
            S = np.outer(gy[k], gx[k])
            hS = Q[k, 0] * S
            J[:, 5 * k] = S.ravel()
            J[:, 5 * k + 1] = (hS * (ux[k] / Q[k, 3])[None, :]).ravel()
            J[:, 5 * k + 2] = (hS * (uy[k] / Q[k, 4])[:, None]).ravel()
            J[:, 5 * k + 3] = (hS * (ux[k] ** 2)[None, :]).ravel()
            J[:, 5 * k + 4] = (hS * (uy[k] ** 2)[:, None]).ravel()
        J[:, -1] = 1.0
        return J

    v0 = np.concatenate([np.column_stack([P[:, :3], np.log(P[:, 3:])]).ravel(), [base]])
    method = "lm" if z.size >= v0.size else "trf"
    r = least_squares(resid, v0, jac=jac, method=method, xtol=cfg.tol, ftol=cfg.tol, gtol=cfg.tol,
                      max_nfev=cfg.max_nfev)
    Q, b = unpack(r.x)
    # keep the refined answer only when it improves the fit
    if np.sum(r.fun ** 2) <= np.sum(resid(v0) ** 2) and np.all(np.isfinite(Q)):
        return Q, float(b)
    return P, base


def fit_gaussians(grid: HeightGrid, n_components: int, config: FitConfig | None = None, seed: int = 0):
    """Fit ``n_components`` Gaussian bumps to a grid by greedy matched-filter seeding and least squares.

    Returns ``(model, rmse)``. The procedure is deterministic; ``seed`` only
    breaks exact ties between equally scored seed cells.
    """
    from scipy.ndimage import gaussian_filter

    if n_components < 1:
        raise ValueError("need at least one component")
    cfg = config or FitConfig()
    z = grid.array.astype(np.float64)
    xs, ys = grid.cell_centers()
    tie_jitter = np.random.default_rng(seed).random(z.shape) * 1e-12
    scales = [s for s in cfg.scales if s <= max(z.shape)] or [min(cfg.scales)]
    P = np.zeros((0, 5))
    base = float(np.median(z))
    for _ in range(n_components):
        r = z - _render(P, base, xs, ys)
        best = None
        for s in scales:
            gf = gaussian_filter(r, s, mode="constant")
            # squared-error drop of the best-height atom of width s at each cell
            score = 4.0 * math.pi * s * s * gf * gf
            i = np.unravel_index(int(np.argmax(score + tie_jitter)), score.shape)
            if best is None or score[i] > best[0]:
                best = (score[i], 2.0 * gf[i], xs[i[1]], ys[i[0]], s * grid.cell_size)
        if not best[0] > 0.0:
            sig = scales[0] * grid.cell_size
            P = np.vstack([P, [0.0, xs[xs.size // 2], ys[ys.size // 2], sig, sig]])
            continue
        P = np.vstack([P, [best[1], best[2], best[3], best[4], best[4]]])
        P, base = _polish(P, base, z, xs, ys, cfg)

    model = TerrainModel.from_params(P, base)
    return model, grid_rmse(model, grid)


def grid_rmse(model: TerrainModel, grid: HeightGrid) -> float:
    xs, ys = grid.cell_centers()
    X, Y = np.meshgrid(xs, ys)
    r = elevation(model, X, Y) - grid.array
    return float(np.sqrt(np.mean(r * r)))


def random_model(rng, n, extent, h_range=(50.0, 400.0), sigma_range=(150.0, 600.0), base=0.0,
                 min_separation=0.0, max_tries=10000) -> TerrainModel:
    """Draw ``n`` positive bumps inside ``extent = (xmin, xmax, ymin, ymax)``.

    ``min_separation`` rejection-samples centers apart from each other.
    """
    xmin, xmax, ymin, ymax = extent
    rows = []
    tries = 0
    while len(rows) < n:
        tries += 1
        if tries > max_tries:
            raise RuntimeError("could not place bumps with the requested separation")
        mx, my = rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)
        if any(math.hypot(mx - r[1], my - r[2]) < min_separation for r in rows):
            continue
        rows.append([rng.uniform(*h_range), mx, my, rng.uniform(*sigma_range), rng.uniform(*sigma_range)])
    return TerrainModel.from_params(np.array(rows).reshape(-1, 5), base)


__all__: Sequence[str] = [
    "GaussianBump", "TerrainModel", "HeightGrid", "HeightmapError", "FitConfig",
    "elevation", "load_heightmap", "load_heightmap_file", "write_esri_ascii",
    "fit_gaussians", "grid_rmse", "model_to_json", "model_from_json", "model_from_dict",
    "load_model", "save_model", "random_model",
]
