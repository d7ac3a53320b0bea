"""Command-line driver: ``contrastfem run | sweep | mesh gen | mesh check``.

On a guard failure the exit status is nonzero and stderr carries one line of
``key=value`` fields, e.g.
``error=coercivity method=ipdg k=1 penalty=0.001 detail="..."``.
"""

from __future__ import annotations

import argparse
import shlex
import sys

from .coeffs import AVERAGINGS
from .forms import NITSCHE_VARIANTS, MethodConfig
from .harness import PROBLEMS, PreconditionError, ProblemError, builtin_problem, run_convergence, sweep_contrast
from .linalg import CoercivityError, SolverError
from .mesh import MeshError, check_mesh, generate_structured, read_mesh, shape_regularity, write_mesh

EXIT_USAGE = 2
EXIT_GUARD = 3


def _floats(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _method_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", required=True, choices=("cr", "nitsche", "ipdg", "hho"))
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--problem", default="interface", choices=PROBLEMS)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--n0", type=int, default=None, help="coarsest grid size (default 2 with an interface, else 4)")
    p.add_argument("--penalty", type=float, default=None)
    p.add_argument("--nitsche-variant", default="paper", choices=NITSCHE_VARIANTS)
    p.add_argument("--averaging", default="diffusive", choices=AVERAGINGS)
    p.add_argument("--out", required=True, help="CSV path; a JSON mirror is written next to it")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="contrastfem", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="convergence study on nested meshes")
    _method_args(run)
    run.add_argument("--contrast", type=float, default=1.0)
    run.add_argument("--lambda", dest="lambdas", type=_floats, default=None, help="per-subdomain values, e.g. 1,1e6")
    run.add_argument("--p", type=float, default=4.0)
    run.add_argument("--q", type=float, default=2.0)
    run.add_argument("--no-lift", action="store_true", help="refuse nonzero boundary data for Crouzeix-Raviart")

    sw = sub.add_parser("sweep", help="contrast robustness sweep")
    _method_args(sw)
    sw.add_argument("--contrasts", type=_floats, default=[1.0, 1e2, 1e4, 1e6])
    sw.add_argument("--compare-arithmetic", action="store_true")

    mesh = sub.add_parser("mesh", help="mesh utilities")
    msub = mesh.add_subparsers(dest="mesh_command", required=True)
    gen = msub.add_parser("gen")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--interface-x", type=float, default=None)
    gen.add_argument("--out", required=True)
    chk = msub.add_parser("check")
    chk.add_argument("file")
    return ap


def _fail(kind: str, detail: str, **fields) -> int:
    parts = [f"error={kind}"] + [f"{k}={v}" for k, v in fields.items() if v is not None]
    parts.append(f"detail={shlex.quote(' '.join(str(detail).split()))}")
    print(" ".join(parts), file=sys.stderr)
    return EXIT_GUARD


def _config(args) -> MethodConfig:
    return MethodConfig(args.method, args.k, args.penalty, args.nitsche_variant, args.averaging)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "mesh":
            if args.mesh_command == "gen":
                m = generate_structured(args.n, args.interface_x)
                check_mesh(m)
                write_mesh(m, args.out)
                print(f"wrote {args.out}: {m.n_vertices} vertices, {m.n_cells} cells")
            else:
                m = read_mesh(args.file)
                print(f"ok vertices={m.n_vertices} cells={m.n_cells} faces={m.faces.n_faces} "
                      f"h_max={m.h_max:.6g} shape_regularity={shape_regularity(m):.6g}")
            return 0
        cfg = _config(args)
        if args.command == "run":
            prob = builtin_problem(args.problem, args.contrast, args.lambdas)
            rep = run_convergence(prob, cfg, args.levels, args.n0, lift=not args.no_lift, p=args.p, q=args.q)
        else:
            rep = sweep_contrast(cfg, args.contrasts, args.levels, args.problem, args.compare_arithmetic, args.n0)
        csv_path, json_path = rep.write(args.out)
        sys.stdout.write(rep.to_csv())
        print(f"wrote {csv_path} and {json_path}")
        return 0
    except CoercivityError as exc:
        cfg = _config(args)
        return _fail("coercivity", exc, method=cfg.method, k=cfg.k,
                     penalty=cfg.penalty_value if cfg.method in ("nitsche", "ipdg") else None)
    except SolverError as exc:
        return _fail("solver", exc, method=args.method)
    except PreconditionError as exc:
        return _fail("precondition", exc, method=args.method)
    except (MeshError, ProblemError) as exc:
        return _fail(type(exc).__name__.replace("Error", "").lower(), exc)
    except (ValueError, OSError) as exc:
        return _fail("input", exc)


if __name__ == "__main__":
    sys.exit(main())
