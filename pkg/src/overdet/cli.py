"""Command-line front end.

Every command prints a JSON run report (and writes it to ``--json-out``).
Exit codes: 0 when every requested check passes, 1 when a check fails,
2 when the input could not be read.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import random
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import RatFun, parse
from .errors import InputError, MissingC, OverdetError, ParseError
from .multiindex import Cochain, enumerate_indices
from .system import (builtin, check_A1, check_A2, check_A3, check_pole_free, check_rank,
                     dump_system, ensure_c, load_system, random_involutive,
                     solve_structure_constants)

SCHEMA_VERSION = "1.0"


def report_schema() -> dict:
    """The JSON schema every run report validates against."""
    from importlib import resources
    return json.loads(resources.files("overdet").joinpath("report_schema.json").read_text())


class _Run:
    def __init__(self, args):
        self.args = args
        self.inputs: dict = {}
        self.results: dict = {}
        self.timings: dict = {}
        self.failed = False
        self._t0 = None

    def digest(self, role: str, path) -> Path:
        p = Path(path)
        try:
            data = p.read_bytes()
        except OSError as exc:
            raise InputError(f"cannot read {role} file {path}: {exc.strerror}") from None
        self.inputs[role] = {"path": str(path), "sha256": hashlib.sha256(data).hexdigest()}
        return p

    def timed(self, label, fn, *a, **kw):
        t = time.perf_counter()
        out = fn(*a, **kw)
        if self.args.timings:
            self.timings[label] = round(time.perf_counter() - t, 6)
        return out


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _load_system(run: _Run, path):
    run.digest("system", path)
    try:
        return load_system(path)
    except ParseError as exc:
        if exc.source is None:
            exc.source = str(path)
        raise


def _a1_report(sys_):
    """(A1) report; a missing solution becomes a failing report, not an error."""
    try:
        rep = check_A1(sys_)
    except MissingC:
        sol = solve_structure_constants(sys_)
        from .system import CheckReport
        return CheckReport("A1", False, sol.witness, {"c_solved": False}), sys_
    if rep.passed and sys_.c is None:
        sys_ = ensure_c(sys_)
    return rep, sys_


# ---------------------------------------------------------------------------
# commands


def cmd_check(run: _Run):
    a = run.args
    sys_ = _load_system(run, a.system)
    wanted = [k for k in ("a1", "a2", "a3", "pole") if getattr(a, k)]
    modes = []
    if a.rank:
        modes = ["include_zero_order", "principal_only"] if a.rank == "all" else [a.rank]
    if not wanted and not modes:
        wanted = ["pole", "a1", "a2", "a3"]
        modes = ["include_zero_order", "principal_only"]
    checks = []
    if "pole" in wanted:
        checks.append(run.timed("pole_free", check_pole_free, sys_).to_dict())
    if "a1" in wanted or "a2" in wanted:
        rep, sys_c = run.timed("A1", _a1_report, sys_)
        if "a1" in wanted:
            checks.append(rep.to_dict())
        if "a2" in wanted:
            if sys_c.c is None:
                checks.append({"assumption": "A2", "pass": False,
                               "witness": {"reason": "no structure constants"}, "details": {}})
            else:
                checks.append(run.timed("A2", check_A2, sys_c).to_dict())
    if "a3" in wanted:
        res = run.timed("A3", check_A3, sys_)
        d = res.report(sys_).to_dict()
        if res.passed:
            d["details"] = {"d": [[[sys_.fmt(x) for x in col] for col in row] for row in res.d],
                            "e": [[[sys_.fmt(x) for x in col] for col in row] for row in res.e]}
        checks.append(d)
    for mode in modes:
        checks.append(run.timed(f"rank_{mode}", check_rank, sys_, mode, a.seed).to_dict())
    run.results["checks"] = checks
    run.failed = not all(c["pass"] for c in checks)


def _levels(sys_, q):
    if q is None:
        return list(range(1, sys_.r + 1))
    if not 1 <= q <= sys_.r:
        raise InputError(f"--q must lie in 1..{sys_.r}")
    return [q]


def cmd_complex(run: _Run):
    from .complex import build_matrix, verify_adjoint, verify_complex
    a = run.args
    sys_ = _load_system(run, a.system)
    rep, sys_c = _a1_report(sys_)
    checks = [rep.to_dict()]
    if sys_c.c is None:
        run.results["checks"] = checks
        run.failed = True
        return
    checks.append(check_A2(sys_c).to_dict())
    proofs = []
    for q in _levels(sys_c, a.q):
        proofs.append(run.timed(f"complex_q{q}", verify_complex, sys_c, q,
                                threads=a.threads).to_dict())
        if a.adjoint:
            proofs.append(run.timed(f"adjoint_q{q}", verify_adjoint, sys_c, q).to_dict())
    run.results["checks"] = checks
    run.results["proofs"] = proofs
    if a.matrices:
        run.results["matrices"] = {str(q): build_matrix(sys_c, q).to_dict(sys_c.varnames)
                                   for q in _levels(sys_c, a.q)}
    run.failed = not all(c["pass"] for c in checks + proofs)


def random_cochain(rng: random.Random, sys_, q: int, max_deg: int = 2) -> Cochain:
    """Cochain with sparse random Gaussian-integer polynomial components."""
    from .algebra import GaussRat, Poly
    comps = {}
    for J in enumerate_indices(sys_.r, q):
        terms = {}
        for _ in range(rng.randint(1, 3)):
            exp = [0] * sys_.n
            for _ in range(rng.randint(0, max_deg)):
                exp[rng.randrange(sys_.n)] += 1
            terms[tuple(exp)] = GaussRat(rng.randint(-3, 3), rng.randint(-3, 3))
        comps[J] = RatFun(Poly(sys_.n, terms))
    return Cochain(q, sys_.r, sys_.n, comps)


def cmd_adjoint(run: _Run):
    from .complex import divergence, divergence_certificate, verify_adjoint
    a = run.args
    sys_ = _load_system(run, a.system)
    sys_ = ensure_c(sys_)
    rng = random.Random(a.seed)
    proofs = []
    for q in _levels(sys_, a.q):
        proofs.append(run.timed(f"adjoint_q{q}", verify_adjoint, sys_, q).to_dict())
        ok = True
        for _ in range(a.pairs):
            g = random_cochain(rng, sys_, q - 1)
            f = random_cochain(rng, sys_, q)
            lhs, V = divergence_certificate(sys_, q, g, f)
            if lhs != divergence(V):
                ok = False
                break
        proofs.append({"kind": "divergence_certificate", "q": q, "pass": ok,
                       "checked": a.pairs, "witness": None if ok else {"q": q},
                       "details": {}})
    run.results["proofs"] = proofs
    run.failed = not all(p["pass"] for p in proofs)


def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_qform(run: _Run):
    from .qform import eigen_hermitian, numeric_rank, pconvexity_scan, qform_matrix
    a = run.args
    sys_ = _load_system(run, a.system)
    phi = parse(a.phi, sys_.varnames)
    q = a.q
    if not 1 <= q <= sys_.r:
        raise InputError(f"--q must lie in 1..{sys_.r}")
    if a.point is not None:
        x = _floats(a.point)
        if len(x) != sys_.n:
            raise InputError(f"--point needs {sys_.n} coordinates")
        H = qform_matrix(sys_, phi, x, a.source).H
        eigs = eigen_hermitian(H)
        rank = numeric_rank(eigs)
        rho = float(np.abs(eigs).max(initial=0.0))
        psd = bool(eigs[0] >= -1e-9 * max(rho, 1.0))
        run.results["samples"] = [{"point": x, "eigenvalues": eigs.tolist(), "psd": psd,
                                   "rank": rank}]
        ok = psd and rank >= sys_.r - q + 1
        run.results["aggregate"] = {"min_eigenvalue": float(eigs[0]), "psd": psd,
                                    "rank_condition": ok, "q": q}
    else:
        crit = _floats(a.critical_point) if a.critical_point else None
        rep = run.timed("scan", pconvexity_scan, sys_, phi, None, a.grid, q, source=a.source,
                        critical_point=crit, threads=a.threads)
        run.results.update(rep.to_dict(with_samples=not a.no_samples))
        ok = rep.rank_condition
    run.failed = not ok


def cmd_solve(run: _Run):
    from .solver import Grid, GridField, solve_level
    a = run.args
    sys_ = ensure_c(_load_system(run, a.system))
    run.digest("rhs", a.rhs)
    f = GridField.load(a.rhs)
    if f.q != a.q:
        raise InputError(f"right-hand side has degree {f.q}, --q is {a.q}")
    if a.grid is not None and any(N != a.grid for N in f.grid.N):
        raise InputError(f"--grid {a.grid} does not match the right-hand side grid {f.grid.N}")
    phi = parse(a.weight, sys_.varnames) if a.weight else None
    sol = run.timed("solve", solve_level, sys_, a.q, f, phi, f.grid, a.tol or 1e-8, a.maxit)
    run.results["solve"] = sol.report()
    if a.out:
        sol.u.dump(a.out)
        run.results["output"] = str(a.out)
    run.failed = not (sol.lsq.converged and sol.compatible)


def cmd_eta(run: _Run):
    from .solver import Grid, solve_eta
    a = run.args
    sys_ = ensure_c(_load_system(run, a.system))
    grid = Grid(sys_.box, a.grid)
    sol = run.timed("eta", solve_eta, sys_, grid, a.tol or 1e-8, a.maxit)
    run.results["solve"] = sol.report()
    if a.out:
        sol.u.dump(a.out)
        run.results["output"] = str(a.out)
    run.failed = not sol.lsq.converged


def cmd_cousin(run: _Run):
    from .cousin import load_config, split
    from .solver import GridField
    a = run.args
    path = run.digest("config", a.config)
    cfg = json.loads(path.read_text())
    sys_, cover, datum, phi = load_config(path)
    run.digest("system", path.parent / cfg["system"])
    datum_tol = float(cfg.get("datum_tol", 1e-2))
    res = run.timed("split", split, sys_, cover, datum, phi, datum_tol, a.tol or 1e-10, a.maxit)
    rep = res.report
    run.results["split"] = rep
    bound = float(cfg.get("bound", a.bound))
    run.results["bound"] = bound
    if a.out:
        out = Path(a.out)
        out.mkdir(parents=True, exist_ok=True)
        for k, (u, patch) in enumerate(zip(res.u, cover.patches)):
            GridField(0, patch.grid, {(): u}).dump(out / f"u{k}.json")
        run.results["output"] = str(out)
    run.failed = not (rep["relative_splitting_defect"] <= bound and rep["solver"]["converged"])


def cmd_builtin(run: _Run):
    a = run.args
    if a.name == "random_involutive":
        sys_ = random_involutive(a.seed, a.n or 4, a.r or 3, a.deg, twist=a.twist)
    else:
        params = {}
        if a.n is not None:
            params["n"] = a.n
        if a.m is not None:
            params["m"] = a.m
        sys_ = builtin(a.name, **params)
    if a.out:
        dump_system(sys_, a.out)
        run.results["output"] = str(a.out)
    from .system import system_to_dict
    run.results["system"] = system_to_dict(sys_)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # defaults are filled in after parsing so that flags given before and
    # after the subcommand both take effect
    S = argparse.SUPPRESS
    common.add_argument("--seed", type=int, default=S, help="seed for all randomness (default 0)")
    common.add_argument("--threads", type=int, default=S,
                        help="worker threads (default: all cores); results do not depend on it")
    common.add_argument("--tol", type=float, default=S, help="solver tolerance")
    common.add_argument("--json-out", metavar="PATH", default=S, help="also write the report here")
    common.add_argument("--timings", action="store_true", default=S,
                        help="record wall-clock timings (reports stop being bitwise stable)")

    p = argparse.ArgumentParser(prog="overdet", parents=[common],
                                description="Compatibility complexes of first-order systems.")
    p.add_argument("--version", action="version", version=f"overdet {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("check", parents=[common], help="run the structural checks")
    s.add_argument("system")
    s.add_argument("--a1", action="store_true")
    s.add_argument("--a2", action="store_true")
    s.add_argument("--a3", action="store_true")
    s.add_argument("--pole", action="store_true", help="pole-freeness on the box")
    s.add_argument("--rank", choices=["include_zero_order", "principal_only", "all"])
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("complex", parents=[common], help="prove that consecutive levels compose to zero")
    s.add_argument("system")
    s.add_argument("--q", type=int)
    s.add_argument("--adjoint", action="store_true", help="also verify the adjoint formula")
    s.add_argument("--matrices", action="store_true", help="include the level matrices")
    s.set_defaults(func=cmd_complex)

    s = sub.add_parser("adjoint", parents=[common], help="verify formal adjoints")
    s.add_argument("system")
    s.add_argument("--q", type=int)
    s.add_argument("--pairs", type=int, default=10, help="random pairs for the divergence check")
    s.set_defaults(func=cmd_adjoint)

    s = sub.add_parser("qform", parents=[common], help="quadratic form at a point or on a grid")
    s.add_argument("system")
    s.add_argument("--phi", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--point")
    g.add_argument("--grid", type=int)
    s.add_argument("--q", type=int, default=1)
    s.add_argument("--source", choices=["use_e", "use_d"], default="use_e")
    s.add_argument("--critical-point")
    s.add_argument("--no-samples", action="store_true", help="omit per-sample records")
    s.set_defaults(func=cmd_qform)

    s = sub.add_parser("solve", parents=[common], help="weighted least-squares solve of P_q u = f")
    s.add_argument("--system", required=True)
    s.add_argument("--q", type=int, required=True)
    s.add_argument("--rhs", required=True)
    s.add_argument("--grid", type=int)
    s.add_argument("--weight")
    s.add_argument("--maxit", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("eta", parents=[common], help="solve p_j eta = a0_j")
    s.add_argument("--system", required=True)
    s.add_argument("--grid", type=int, required=True)
    s.add_argument("--maxit", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eta)

    s = sub.add_parser("cousin", parents=[common], help="split an additive Cousin datum")
    s.add_argument("config")
    s.add_argument("--bound", type=float, default=5e-3, help="relative splitting defect bound")
    s.add_argument("--maxit", type=int)
    s.add_argument("--out", help="directory for the local solutions")
    s.set_defaults(func=cmd_cousin)

    s = sub.add_parser("builtin", parents=[common], help="write a builtin system file")
    s.add_argument("name", choices=["derham", "dolbeault", "lewy", "random_involutive"])
    s.add_argument("--n", type=int)
    s.add_argument("--m", type=int)
    s.add_argument("--r", type=int)
    s.add_argument("--deg", type=int, default=2)
    s.add_argument("--twist", action="store_true")
    s.add_argument("--out")
    s.set_defaults(func=cmd_builtin)
    return p


GLOBAL_DEFAULTS = {"seed": 0, "threads": lambda: os.cpu_count() or 1, "tol": None,
                   "json_out": None, "timings": False}
_HIDDEN = {"func", "json_out", "threads", "timings"}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    for name, value in GLOBAL_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, value() if callable(value) else value)
    run = _Run(args)
    error = None
    try:
        args.func(run)
        code = 1 if run.failed else 0
    except InputError as exc:
        code = 2
        error = {"type": type(exc).__name__, "message": str(exc),
                 "offset": getattr(exc, "offset", None), "source": getattr(exc, "source", None)}
    except OverdetError as exc:
        code = 1
        error = {"type": type(exc).__name__, "message": str(exc)}
    report = {
        "schema_version": SCHEMA_VERSION,
        "tool": f"overdet {__version__}",
        "command": args.command,
        "arguments": {k: v for k, v in sorted(vars(args).items()) if k not in _HIDDEN},
        "inputs": run.inputs,
        "results": run.results,
        "timings": run.timings,
        "exit_code": code,
    }
    if error is not None:
        report["error"] = error
        print(f"overdet: {error['type']}: {error['message']}", file=sys.stderr)
    text = json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if args.json_out:
        Path(args.json_out).write_text(text)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
