"""Additive Cousin data on box covers and their splitting.

Every box of the cover, and every overlap, is represented by the nodes of
one global grid lying inside it.  A datum assigns a homogeneous solution
u_ab (a < b) to each nonempty overlap; ``split`` returns homogeneous u_a
with u_b - u_a = u_ab.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .algebra import RatFun, parse
from .errors import BadParams, CoverGap, GlueDefect, MissingA3, ParseError
from .solver import (Grid, GridField, discretize_P, field_from_functions, solve_level)
from .system import OperatorSystem, ensure_c


@dataclass
class Patch:
    """Global-grid nodes inside a box, viewed as a grid of their own."""

    index: np.ndarray  # global flat indices, in sub-grid order
    grid: Grid | None
    shape: tuple

    @property
    def empty(self) -> bool:
        return self.index.size == 0


def _patch(global_grid: Grid, box) -> Patch:
    axes = global_grid.axes()
    sel = []
    eps = 1e-12 * max(1.0, max(abs(v) for b in global_grid.box for v in b))
    for (lo, hi), ax in zip(box, axes):
        sel.append(np.nonzero((ax >= lo - eps) & (ax <= hi + eps))[0])
    if any(s.size == 0 for s in sel):
        return Patch(np.zeros(0, dtype=int), None, ())
    shape = tuple(s.size for s in sel)
    strides = np.cumprod((1,) + global_grid.N[:-1])
    mesh = np.meshgrid(*sel, indexing="ij")
    flat = sum(m.ravel(order="F") * st for m, st in zip(mesh, strides))
    sub_box = tuple((axes[i][s[0]], axes[i][s[-1]]) for i, s in enumerate(sel))
    try:
        grid = Grid(sub_box, shape)
    except BadParams:
        grid = None
    return Patch(flat.astype(int), grid, shape)


def _intersect(a, b):
    box = tuple((max(x[0], y[0]), min(x[1], y[1])) for x, y in zip(a, b))
    return None if any(lo > hi for lo, hi in box) else box


@dataclass
class Cover:
    boxes: list
    grid: Grid

    def __post_init__(self):
        self.boxes = [tuple((float(lo), float(hi)) for lo, hi in b) for b in self.boxes]
        if not self.boxes:
            raise BadParams("cover needs at least one box")
        for b in self.boxes:
            if len(b) != self.grid.n:
                raise BadParams("cover box dimension differs from the grid")
            for (lo, hi), (glo, ghi) in zip(b, self.grid.box):
                if lo >= hi or lo < glo - 1e-12 or hi > ghi + 1e-12:
                    raise BadParams(f"cover box {b} is not inside the global box")
        self.patches = [_patch(self.grid, b) for b in self.boxes]
        for a, p in enumerate(self.patches):
            if p.grid is None:
                raise BadParams(f"cover box {a} holds fewer than 8 nodes per axis")
        covered = np.zeros(self.grid.size, dtype=bool)
        for p in self.patches:
            covered[p.index] = True
        if not covered.all():
            raise CoverGap(f"{int((~covered).sum())} grid nodes lie in no cover box")
        self.overlaps = {}
        for a, b in combinations(range(len(self.boxes)), 2):
            box = _intersect(self.boxes[a], self.boxes[b])
            if box is not None:
                p = _patch(self.grid, box)
                if not p.empty:
                    self.overlaps[(a, b)] = (box, p)

    def __len__(self):
        return len(self.boxes)

    def overlap(self, a: int, b: int) -> Patch | None:
        hit = self.overlaps.get((min(a, b), max(a, b)))
        return hit[1] if hit else None


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


def _ramp_widths(cover: Cover) -> list:
    """Per-axis overlap width: the thinnest overlap extent along that axis."""
    widths = []
    for i in range(cover.grid.n):
        ext = [box[i][1] - box[i][0] for box, _ in cover.overlaps.values()
               if box[i][1] - box[i][0] > 0]
        full = cover.grid.box[i][1] - cover.grid.box[i][0]
        widths.append(min(ext) if ext else full)
    return widths


def partition_of_unity(cover: Cover) -> list:
    """Real nonnegative h_a (global-grid arrays) summing to one.

    Each ramp occupies the middle half of the overlap band, so h_a is
    locally constant near every box edge and one-sided edge stencils never
    see it vary.
    """
    X = cover.grid.points()
    widths = _ramp_widths(cover)
    raw = []
    for box, patch in zip(cover.boxes, cover.patches):
        psi = np.zeros(cover.grid.size)
        vals = np.ones(patch.index.size)
        Xp = X[patch.index]
        for i, (lo, hi) in enumerate(box):
            glo, ghi = cover.grid.box[i]
            w = widths[i]
            if lo > glo + 1e-12:
                vals = vals * _smoothstep((Xp[:, i] - lo - w / 4) / (w / 2))
            if hi < ghi - 1e-12:
                vals = vals * _smoothstep((hi - w / 4 - Xp[:, i]) / (w / 2))
        psi[patch.index] = vals
        raw.append(psi)
    total = np.sum(raw, axis=0)
    if np.any(total <= 0.0):
        k = int(np.argmin(total))
        raise CoverGap(f"partition of unity vanishes at node {X[k].tolist()}")
    return [psi / total for psi in raw]


# ---------------------------------------------------------------------------
# data


@dataclass
class CousinDatum:
    """u[(a, b)] for a < b: complex values on the overlap patch, sub-grid order."""

    values: dict = field(default_factory=dict)

    def get(self, cover: Cover, a: int, b: int) -> np.ndarray | None:
        """u_ab on the overlap, with u_ba = -u_ab; None when there is no overlap."""
        if a == b:
            p = cover.patches[a]
            return np.zeros(p.index.size, dtype=complex)
        patch = cover.overlap(a, b)
        if patch is None:
            return None
        v = self.values.get((min(a, b), max(a, b)))
        if v is None:
            v = np.zeros(patch.index.size, dtype=complex)
        return v if a < b else -v


def datum_from_functions(cover: Cover, funcs: Mapping) -> CousinDatum:
    vals = {}
    for (a, b), f in funcs.items():
        patch = cover.overlap(a, b)
        if patch is None:
            raise BadParams(f"boxes {a} and {b} do not overlap")
        vals[(min(a, b), max(a, b))] = field_from_functions(0, {(): f}, patch.grid).component(())
    return CousinDatum(vals)


def _global(cover: Cover, patch: Patch, v: np.ndarray) -> np.ndarray:
    out = np.full(cover.grid.size, np.nan, dtype=complex)
    out[patch.index] = v
    return out


def _level1(sys: OperatorSystem, grid: Grid, v: np.ndarray) -> np.ndarray:
    """Discrete P_1 v stacked over j = 1..r."""
    return discretize_P(sys, 1, grid) @ v


@dataclass
class DatumReport:
    passed: bool
    homogeneity: dict
    cocycle: dict
    failures: list

    def to_dict(self) -> dict:
        return {"pass": self.passed, "homogeneity": self.homogeneity,
                "cocycle": self.cocycle, "failures": self.failures}


def verify_datum(sys: OperatorSystem, cover: Cover, datum: CousinDatum,
                 tol: float = 1e-2) -> DatumReport:
    sys = ensure_c(sys)
    hom, coc, fails = {}, {}, []
    for (a, b), (_, patch) in sorted(cover.overlaps.items()):
        u = datum.get(cover, a, b)
        if patch.grid is None:
            hom[f"{a}-{b}"] = None
            continue
        val = float(np.abs(_level1(sys, patch.grid, u)).max(initial=0.0))
        hom[f"{a}-{b}"] = val
        if val > tol:
            fails.append({"kind": "homogeneity", "pair": [a, b], "value": val})
    for a, b, c in combinations(range(len(cover)), 3):
        pab, pbc, pac = cover.overlap(a, b), cover.overlap(b, c), cover.overlap(a, c)
        if pab is None or pbc is None or pac is None:
            continue
        s = (_global(cover, pab, datum.get(cover, a, b)) + _global(cover, pbc, datum.get(cover, b, c))
             + _global(cover, pac, datum.get(cover, c, a)))
        s = s[~np.isnan(s)]
        if s.size == 0:
            continue
        val = float(np.abs(s).max())
        coc[f"{a}-{b}-{c}"] = val
        if val > tol:
            fails.append({"kind": "cocycle", "triple": [a, b, c], "value": val})
    return DatumReport(not fails, hom, coc, fails)


# ---------------------------------------------------------------------------
# splitting


def cut_edge_mask(cover: Cover, a: int) -> np.ndarray:
    """Patch nodes on an edge of box a that lies inside the global box.

    Those nodes belong to the boundary of the open set, and the one-sided
    closure there amplifies the odd-even mode that centred differences
    cannot see.  Homogeneity is reported with and without them.
    """
    patch = cover.patches[a]
    X = cover.grid.points()[patch.index]
    h = cover.grid.h
    mask = np.zeros(patch.index.size, dtype=bool)
    for i, ((lo, hi), (glo, ghi)) in enumerate(zip(cover.boxes[a], cover.grid.box)):
        first, last = patch.grid.box[i]
        if lo > glo + 1e-12:
            mask |= np.abs(X[:, i] - first) < 0.5 * h[i]
        if hi < ghi - 1e-12:
            mask |= np.abs(X[:, i] - last) < 0.5 * h[i]
    return mask


@dataclass
class SplitResult:
    u: list                 # per box, values on the box patch
    w: list
    v: np.ndarray           # global correction
    report: dict


def split(sys: OperatorSystem, cover: Cover, datum: CousinDatum, phi: RatFun | None = None,
          tol: float = 1e-2, solver_tol: float = 1e-8, maxit: int | None = None,
          check_convexity: bool = True) -> SplitResult:
    """Partition-of-unity splitting corrected by one global level-1 solve.

    ``tol`` bounds the datum checks and the overlap agreement of the patched
    right-hand side; ``solver_tol`` is handed to the least-squares solver.
    """
    sys = ensure_c(sys)
    warnings = []
    check = verify_datum(sys, cover, datum, tol)
    if not check.passed:
        warnings.append("datum check failed")
    if check_convexity and phi is not None:
        from .qform import pconvexity_scan
        try:
            scan = pconvexity_scan(sys, phi, cover.grid.box, 8, 1)
            if not scan.p_convex:
                warnings.append("weight is not P-convex on the sampled grid")
        except MissingA3:
            warnings.append("convexity not checked: (A3) fails")
    hs = partition_of_unity(cover)
    m = cover.grid.size
    r = sys.r
    w_list, g_parts = [], []
    for a, patch in enumerate(cover.patches):
        w = np.zeros(patch.index.size, dtype=complex)
        for c in range(len(cover)):
            u_ca = datum.get(cover, c, a)
            if u_ca is None:
                continue
            full = _global(cover, cover.overlap(c, a) if c != a else patch, u_ca)
            hc = hs[c][patch.index]
            vals = full[patch.index]
            use = hc > 0
            w[use] += hc[use] * vals[use]
        w_list.append(w)
        g_parts.append(_level1(sys, patch.grid, w).reshape(r, -1))
    # blend the local right-hand sides with the partition of unity
    g = np.zeros((r, m), dtype=complex)
    glue = glue_closed = 0.0
    for a, patch in enumerate(cover.patches):
        g[:, patch.index] += hs[a][patch.index] * g_parts[a]
    for (a, b), (_, patch) in cover.overlaps.items():
        pa, pb = cover.patches[a], cover.patches[b]
        ga = np.full((r, m), np.nan, dtype=complex)
        gb = np.full((r, m), np.nan, dtype=complex)
        ga[:, pa.index] = g_parts[a]
        gb[:, pb.index] = g_parts[b]
        diff = np.abs(ga[:, patch.index] - gb[:, patch.index])
        # only nodes where the blend mixes both patches enter g
        mixed = (hs[a][patch.index] > 0) & (hs[b][patch.index] > 0)
        glue = max(glue, float(diff[:, mixed].max(initial=0.0)))
        glue_closed = max(glue_closed, float(diff.max(initial=0.0)))
    if glue > 10 * tol:
        raise GlueDefect(f"patched right-hand side disagrees by {glue:.3e} on an overlap")
    rhs = GridField(1, cover.grid, {(j,): g[j - 1] for j in range(1, r + 1)})
    sol = solve_level(sys, 1, rhs, phi, cover.grid, solver_tol, maxit)
    v = sol.u.component(())
    u_list = [w - v[patch.index] for w, patch in zip(w_list, cover.patches)]

    defect, scale = 0.0, 0.0
    for (a, b), (_, patch) in cover.overlaps.items():
        ua = _global(cover, cover.patches[a], u_list[a])[patch.index]
        ub = _global(cover, cover.patches[b], u_list[b])[patch.index]
        uab = datum.get(cover, a, b)
        defect = max(defect, float(np.abs((ub - ua) - uab).max(initial=0.0)))
        scale = max(scale, float(np.abs(uab).max(initial=0.0)))
    homog = []
    for a, (u, patch) in enumerate(zip(u_list, cover.patches)):
        res = np.abs(_level1(sys, patch.grid, u)).reshape(r, -1)
        vol = float(np.prod(patch.grid.h))
        inner = res[:, ~cut_edge_mask(cover, a)]
        homog.append({"l2": float(np.sqrt(vol * np.sum(inner ** 2))),
                      "max": float(inner.max(initial=0.0)),
                      "l2_closed": float(np.sqrt(vol * np.sum(res ** 2))),
                      "max_closed": float(res.max(initial=0.0))})
    rel = defect / scale if scale else defect
    report = {
        "datum": check.to_dict(),
        "glue_mismatch": glue,
        "glue_mismatch_closed": glue_closed,
        "solver": sol.report(),
        "splitting_defect": defect,
        "relative_splitting_defect": rel,
        "homogeneity": homog,
        "warnings": warnings,
    }
    return SplitResult(u_list, w_list, v, report)


# ---------------------------------------------------------------------------
# configuration files


def _field_entry(entry, patch: Patch, varnames, base: Path, where: str) -> np.ndarray:
    if isinstance(entry, Mapping) and "expr" in entry:
        f = parse(str(entry["expr"]), varnames)
        return field_from_functions(0, {(): f}, patch.grid).component(())
    if isinstance(entry, str):
        fld = GridField.load(base / entry)
        v = fld.component(())
        if v.size != patch.index.size:
            raise BadParams(f"{where}: field has {v.size} values, overlap has {patch.index.size}")
        return v
    raise BadParams(f"{where}: datum entries are a field-file path or {{\"expr\": ...}}")


def load_config(path):
    """(system, cover, datum, phi) from a cousin configuration file."""
    from .system import load_system
    path = Path(path)
    text = path.read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", len(text[:exc.pos].encode()), str(path)) from None
    if not isinstance(cfg, Mapping):
        raise BadParams("cousin config must be a JSON object")
    for k in ("system", "grid", "cover", "datum"):
        if k not in cfg:
            raise BadParams(f"cousin config is missing {k!r}")
    sys = load_system(path.parent / cfg["system"])
    grid = Grid.from_dict(cfg["grid"])
    cover = Cover(cfg["cover"], grid)
    vals = {}
    for k, entry in cfg["datum"].items():
        try:
            a, b = (int(t) for t in k.split("-"))
        except ValueError:
            raise BadParams(f"datum key {k!r} must look like 'a-b'") from None
        patch = cover.overlap(a, b)
        if patch is None:
            raise BadParams(f"datum key {k!r}: boxes do not overlap")
        v = _field_entry(entry, patch, sys.varnames, path.parent, f"datum {k}")
        vals[(min(a, b), max(a, b))] = v if a < b else -v
    phi = parse(cfg["weight"], sys.varnames) if cfg.get("weight") else None
    return sys, cover, CousinDatum(vals), phi
