"""Manufactured problems, refinement loops and contrast sweeps."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import sympy as sp

from .coeffs import DiffusionField
from .forms import MethodConfig, assemble
from .hho import assemble_hho, reconstruct_solution
from .linalg import check_spd, solve_general, solve_spd
from .mesh import Mesh, generate_structured, refine_uniform
from .norms import DEFAULT_P, DEFAULT_Q, ErrorReport, energy_norm, eoc, error_report
from .spaces import DiscreteSolution, ExactField, PiecewiseFunction

PROBLEMS = ("smooth", "affine_patch", "interface")
CSV_HEADER = ("level", "h", "dofs", "energy", "jump", "boundary", "augmented", "eoc_energy")

X, Y = sp.symbols("x y", real=True)


class ProblemError(ValueError):
    """A manufactured problem failed its consistency self-check."""


class PreconditionError(ValueError):
    """The requested method does not support the problem as configured."""


def _lambdify(expr):
    fn = sp.lambdify((X, Y), expr, "numpy")

    def evaluate(pts):
        pts = np.atleast_2d(pts)
        return np.broadcast_to(np.asarray(fn(pts[:, 0], pts[:, 1]), dtype=float), (len(pts),)).copy()

    return evaluate


def _lambdify_grad(ex, ey):
    fx, fy = _lambdify(ex), _lambdify(ey)
    return lambda pts: np.column_stack([fx(pts), fy(pts)])


def _as_xy(expr):
    """Sympify and map any symbols named x, y onto the module's coordinates."""
    expr = sp.sympify(expr)
    names = {s.name: s for s in expr.free_symbols}
    unknown = set(names) - {"x", "y"}
    if unknown:
        raise ProblemError(f"expression {expr} has free symbols {sorted(unknown)}; only x and y are allowed")
    return expr.subs({names[n]: c for n, c in (("x", X), ("y", Y)) if n in names}, simultaneous=True)


@dataclass
class ProblemSpec:
    """``-div(lambda grad u) = f`` in the unit square, ``u = g`` on the boundary.

    ``u`` is given symbolically per subdomain tag; ``f`` defaults to
    ``-lambda_i Laplacian(u_i)`` and ``g`` is the trace of ``u``. Construction
    runs a self-check of the equation and, with an interface, of the
    continuity of ``u`` and of the normal flux across it.
    """

    name: str
    u: dict
    lam: DiffusionField
    interface_x: float | None = None
    f: dict | None = None
    n0: int | None = None
    homogeneous: bool = field(init=False)

    def __post_init__(self):
        self.u = {int(t): _as_xy(e) for t, e in self.u.items()}
        if set(self.u) != set(self.lam.lambda_by_subdomain):
            raise ProblemError("u and lambda must be given on the same subdomain tags")
        if self.interface_x is None and len(self.u) != 1:
            raise ProblemError("several subdomains require an interface")
        if self.interface_x is not None and set(self.u) != {1, 2}:
            raise ProblemError("an interface separates exactly the subdomains 1 and 2")
        if self.f is None:
            self.f = {t: sp.simplify(-self.lam[t] * (sp.diff(e, X, 2) + sp.diff(e, Y, 2))) for t, e in self.u.items()}
        self.f = {int(t): _as_xy(e) for t, e in self.f.items()}
        self._u = {t: _lambdify(e) for t, e in self.u.items()}
        self._grad = {t: _lambdify_grad(sp.diff(e, X), sp.diff(e, Y)) for t, e in self.u.items()}
        self._lap = {t: _lambdify(sp.diff(e, X, 2) + sp.diff(e, Y, 2)) for t, e in self.u.items()}
        self._f = {t: _lambdify(e) for t, e in self.f.items()}
        self.self_check()
        self.homogeneous = bool(np.max(np.abs(self._boundary_trace())) <= 1e-14)

    @property
    def lambdas(self) -> list[float]:
        return self.lam.as_list()

    def tag_of(self, pts) -> np.ndarray:
        pts = np.atleast_2d(pts)
        if self.interface_x is None:
            return np.full(len(pts), min(self.u), dtype=int)
        return np.where(pts[:, 0] < self.interface_x, 1, 2)

    def _sample(self, rng, n, tag):
        lo, hi = 0.0, 1.0
        if self.interface_x is not None:
            lo, hi = (0.0, self.interface_x) if tag == 1 else (self.interface_x, 1.0)
        return np.column_stack([rng.uniform(lo, hi, n), rng.uniform(0, 1, n)])

    def self_check(self, n: int = 64, tol: float = 1e-10) -> None:
        rng = np.random.default_rng(0)
        for t in self.u:
            pts = self._sample(rng, n, t)
            f = self._f[t](pts)
            resid = np.abs(f + self.lam[t] * self._lap[t](pts))
            if np.any(resid > tol * np.maximum(1.0, np.abs(f))):
                raise ProblemError(f"{self.name}: f != -div(lambda grad u) on subdomain {t} (residual {resid.max():.3e})")
        if self.interface_x is not None:
            pts = np.column_stack([np.full(n, self.interface_x), rng.uniform(0, 1, n)])
            u1, u2 = self._u[1](pts), self._u[2](pts)
            q1 = self.lam[1] * self._grad[1](pts)[:, 0]
            q2 = self.lam[2] * self._grad[2](pts)[:, 0]
            scale = max(1.0, np.abs(q1).max())
            if np.any(np.abs(u1 - u2) > tol * max(1.0, np.abs(u1).max())):
                raise ProblemError(f"{self.name}: u is discontinuous across the interface")
            if np.any(np.abs(q1 - q2) > tol * scale):
                raise ProblemError(f"{self.name}: normal flux is discontinuous across the interface")

    def _boundary_trace(self, n: int = 33):
        s = np.linspace(0, 1, n)
        pts = np.vstack([
            np.column_stack([s, 0 * s]), np.column_stack([s, 0 * s + 1]),
            np.column_stack([0 * s, s]), np.column_stack([0 * s + 1, s]),
        ])
        tags = self.tag_of(pts)
        out = np.empty(len(pts))
        for t in self.u:
            out[tags == t] = self._u[t](pts[tags == t])
        return out

    @property
    def u_fn(self) -> PiecewiseFunction:
        return PiecewiseFunction(self._u)

    @property
    def grad_fn(self) -> PiecewiseFunction:
        return PiecewiseFunction(self._grad)

    @property
    def lap_fn(self) -> PiecewiseFunction:
        return PiecewiseFunction(self._lap)

    @property
    def f_fn(self) -> PiecewiseFunction:
        return PiecewiseFunction(self._f)

    @property
    def g_fn(self) -> PiecewiseFunction:
        return PiecewiseFunction(self._u)

    def exact(self, mesh: Mesh) -> ExactField:
        return ExactField(mesh, self.u_fn, self.grad_fn, self.lap_fn)

    def coarse_mesh(self, n0: int | None = None) -> Mesh:
        n0 = n0 or self.n0 or (2 if self.interface_x is not None else 4)
        return generate_structured(n0, self.interface_x)


def builtin_problem(name: str, contrast: float = 1.0, lambdas=None) -> ProblemSpec:
    """One of the manufactured problems ``smooth``, ``affine_patch``, ``interface``.

    ``lambdas`` overrides ``(1, contrast)`` on the two-subdomain problems.
    """
    if name not in PROBLEMS:
        raise ValueError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}")
    if name == "smooth":
        u = sp.sin(sp.pi * X) * sp.sin(sp.pi * Y)
        return ProblemSpec("smooth", {1: u}, DiffusionField({1: 1.0}), n0=4)
    if not contrast > 0:
        raise ValueError(f"contrast must be positive, got {contrast}")
    l1, l2 = (1.0, float(contrast)) if lambdas is None else map(float, lambdas)
    lam = DiffusionField({1: l1, 2: l2})
    half = sp.Rational(1, 2)
    L1, L2 = sp.nsimplify(l1), sp.nsimplify(l2)
    if name == "affine_patch":
        # unit flux on both sides, continuous at x = 1/2
        u1 = X / L1
        u2 = half / L1 + (X - half) / L2
        return ProblemSpec("affine_patch", {1: u1, 2: u2}, lam, interface_x=0.5, n0=2)
    C = sp.Rational(1, 4) * (1 / L1 - 1 / L2)
    w = X - X**2
    u1 = w / L1 * sp.sin(sp.pi * Y)
    u2 = (w / L2 + C) * sp.sin(sp.pi * Y)
    return ProblemSpec("interface", {1: u1, 2: u2}, lam, interface_x=0.5, n0=2)


# ---------------------------------------------------------------------------
# solving


def solve_problem(problem: ProblemSpec, mesh: Mesh, cfg: MethodConfig, lift: bool = True):
    """Assemble and solve on ``mesh``; returns ``(field, dofs)`` where ``field``
    is the cellwise polynomial used for error measurement (the potential
    reconstruction for HHO)."""
    f, g = problem.f_fn, None if problem.homogeneous else problem.g_fn
    ctx = cfg.describe()
    if cfg.method == "cr" and g is not None and not lift:
        raise PreconditionError(
            f"{problem.name}: Crouzeix-Raviart is posed with homogeneous boundary data; "
            "enable the boundary lift to use nonzero g"
        )
    if cfg.method == "hho":
        system = assemble_hho(mesh, problem.lam, f, cfg.k, condense=False, g=g)
        x = solve_spd(system.A, system.b, context=ctx)
        return reconstruct_solution(system.expand(x)), system.dofmap.n_dofs
    system = assemble(mesh, problem.lam, f, g, cfg)
    if system.symmetric:
        x = solve_spd(system.A, system.b, context=ctx)
    else:
        check_spd(0.5 * (system.A + system.A.T), context=ctx)
        x = solve_general(system.A, system.b, context=ctx)
    sol = DiscreteSolution(system.dofmap, x, mesh, system.face_values)
    return sol.to_broken(), system.dofmap.n_dofs


@dataclass
class LevelResult:
    level: int
    n: int
    errors: ErrorReport

    @property
    def h(self) -> float:
        return self.errors.h_max


@dataclass
class ConvergenceReport:
    problem: str
    config: MethodConfig
    lambdas: list
    levels: list = field(default_factory=list)
    n0: int = 0
    p: float = DEFAULT_P
    q: float = DEFAULT_Q

    @property
    def energy_errors(self) -> list[float]:
        return [r.errors.energy_error for r in self.levels]

    @property
    def h_values(self) -> list[float]:
        return [r.h for r in self.levels]

    @property
    def eoc_energy(self) -> list:
        if len(self.levels) < 2:
            return []
        return eoc(self.energy_errors, self.h_values)

    def rows(self) -> list[dict]:
        rates = [""] + list(self.eoc_energy)
        return [
            dict(level=r.level, h=r.h, dofs=r.errors.dofs, energy=r.errors.energy_error, jump=r.errors.jump_seminorm,
                 boundary=r.errors.boundary_seminorm, augmented=r.errors.augmented_seminorm, eoc_energy=rate)
            for r, rate in zip(self.levels, rates)
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
        w.writeheader()
        for row in self.rows():
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()

    def to_dict(self) -> dict:
        c = self.config
        return dict(
            problem=self.problem,
            method=c.method,
            k=c.k,
            penalty=c.penalty_value if c.method in ("nitsche", "ipdg") else None,
            nitsche_variant=c.nitsche_variant if c.method == "nitsche" else None,
            averaging=c.averaging,
            lambdas=self.lambdas,
            n0=self.n0,
            p=self.p,
            q=self.q,
            levels=self.rows(),
        )

    def write(self, path: str | Path) -> tuple[Path, Path]:
        """Write the CSV to ``path`` and the JSON mirror next to it."""
        path = Path(path)
        path.write_text(self.to_csv())
        jpath = path.with_suffix(".json")
        jpath.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path, jpath


def run_convergence(problem: ProblemSpec, cfg: MethodConfig, levels: int = 4, n0: int | None = None,
                    lift: bool = True, p: float = DEFAULT_P, q: float = DEFAULT_Q) -> ConvergenceReport:
    """Solve on ``levels`` uniformly refined meshes and measure the errors."""
    if levels < 1:
        raise ValueError("levels must be >= 1")
    mesh = problem.coarse_mesh(n0)
    n = n0 or problem.n0 or (2 if problem.interface_x is not None else 4)
    report = ConvergenceReport(problem.name, cfg, problem.lambdas, n0=n, p=p, q=q)
    for level in range(levels):
        if level:
            mesh = refine_uniform(mesh)
        uh, dofs = solve_problem(problem, mesh, cfg, lift)
        errs = error_report(problem.exact(mesh), uh, problem.lam, dofs, p, q)
        report.levels.append(LevelResult(level, n * 2**level, errs))
    return report


@dataclass
class SweepRow:
    contrast: float
    averaging: str
    relative_energy_error: float
    eoc_energy: object
    energy_error: float


@dataclass
class SweepReport:
    problem: str
    config: MethodConfig
    levels: int
    rows: list = field(default_factory=list)

    def spread(self, averaging: str = "diffusive") -> float:
        e = [r.relative_energy_error for r in self.rows if r.averaging == averaging]
        return max(e) / min(e)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["contrast", "averaging", "relative_energy", "energy", "eoc_energy"])
        for r in self.rows:
            w.writerow([repr(r.contrast), r.averaging, repr(r.relative_energy_error), repr(r.energy_error), r.eoc_energy])
        return buf.getvalue()

    def to_dict(self) -> dict:
        c = self.config
        return dict(
            problem=self.problem, method=c.method, k=c.k,
            penalty=c.penalty_value if c.method in ("nitsche", "ipdg") else None,
            levels=self.levels,
            rows=[r.__dict__ for r in self.rows],
        )

    def write(self, path: str | Path) -> tuple[Path, Path]:
        path = Path(path)
        path.write_text(self.to_csv())
        jpath = path.with_suffix(".json")
        jpath.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path, jpath


def sweep_contrast(cfg: MethodConfig, contrasts, levels: int = 3, problem: str = "interface",
                   compare_arithmetic: bool = False, n0: int | None = None) -> SweepReport:
    """Relative energy error at the finest level and final EOC for each contrast."""
    contrasts = [float(c) for c in contrasts]
    if not contrasts or any(not c > 0 for c in contrasts):
        raise ValueError("contrasts must be positive")
    averagings = [cfg.averaging]
    if compare_arithmetic and "arithmetic" not in averagings:
        averagings.append("arithmetic")
    out = SweepReport(problem, cfg, levels)
    for averaging in averagings:
        c = MethodConfig(cfg.method, cfg.k, cfg.penalty, cfg.nitsche_variant, averaging)
        for rho in contrasts:
            prob = builtin_problem(problem, rho)
            rep = run_convergence(prob, c, levels, n0)
            finest = rep.levels[-1]
            mesh = prob.coarse_mesh(n0)
            for _ in range(levels - 1):
                mesh = refine_uniform(mesh)
            ref = energy_norm(prob.exact(mesh), prob.lam)
            rates = rep.eoc_energy
            out.rows.append(SweepRow(rho, averaging, finest.errors.energy_error / ref,
                                     rates[-1] if rates else "", finest.errors.energy_error))
    return out
