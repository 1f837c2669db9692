"""Level-sweep driver: mesh -> solve -> fluxes -> estimator and error -> table rows."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .equilibration import build_x_star, build_y_star, diagnostics, project_load
from .fem import ModelParams, assemble, shear_recovery, solve
from .manufactured import ExactSolution
from .mesh import build_mesh
from .metrics import ConstantsLedger, constants, effectivity, error_report, estimator
from .quadrature import quadrature_rule

BENCHMARK = "benchmark"


class StudyError(RuntimeError):
    """A mesh level failed; the message names the level."""


@dataclass(frozen=True)
class ZeroSolution:
    """Exact solution of the unloaded plate."""

    def _zeros(self, x, y, tail=()):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.zeros(x.shape + tail)

    def grad_omega(self, x, y):
        return self._zeros(x, y, (2,))

    def grad_phi(self, x, y):
        return self._zeros(x, y, (2, 2))

    def gamma(self, x, y):
        return self._zeros(x, y, (2,))


@dataclass(frozen=True)
class StudyConfig:
    """Inputs of a study; ``load`` is ``"benchmark"`` or a constant load value."""

    levels: Tuple[int, ...] = (4, 8, 16, 32, 64)
    t: float = 1.0 / 1024.0
    lam: float = 1.0
    mu: float = 1.0
    lam_tilde: float = 1.0
    quad_degree: int = 6
    quad_refine: int = 0
    c_f: Optional[float] = None
    c_r: Optional[float] = None
    kappa2: Optional[float] = None
    big_n: Optional[float] = None
    load: Union[str, float] = BENCHMARK
    out_csv: Optional[str] = None
    out_json: Optional[str] = None
    out_plot: Optional[str] = None

    def __post_init__(self):
        levels = tuple(int(n) for n in self.levels)
        if not levels:
            raise ValueError("at least one level is required")
        if any(n < 1 for n in levels) or any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError(f"levels must be positive and strictly increasing, got {levels}")
        object.__setattr__(self, "levels", levels)
        if self.load != BENCHMARK and not isinstance(self.load, (int, float)):
            raise ValueError(f"load must be {BENCHMARK!r} or a number, got {self.load!r}")
        self.params  # validates the physical parameters
        quadrature_rule(self.quad_degree, self.quad_refine)

    @property
    def params(self) -> ModelParams:
        return ModelParams(t=self.t, lam=self.lam, mu=self.mu, lam_tilde=self.lam_tilde)

    def ledger(self) -> ConstantsLedger:
        return constants(self.params, c_f=self.c_f, c_r=self.c_r, big_n=self.big_n, kappa2=self.kappa2)

    def exact(self):
        """Load callable and matching exact solution (``None`` when unknown)."""
        if self.load == BENCHMARK:
            ex = ExactSolution(self.params)
            return ex.load, ex
        g = float(self.load)
        return g, (ZeroSolution() if g == 0.0 else None)

    def describe(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if not f.name.startswith("out_")}
        d["levels"] = list(self.levels)
        return d


@dataclass
class StudyRow:
    n: int
    h: float
    dofs: int
    e_total: float
    eta: float
    effectivity: float
    term1: float
    term2: float
    term3: float
    err_dual: float
    err_w_h1: float
    err_phi_h1: float
    err_shear_l2w: float
    err_rot_w: float
    skew_norm2: float
    oscillation: float
    div_defect_y: float
    div_defect_x: float
    max_normal_jump: float
    seconds: float = field(default=0.0, compare=False)

    def to_dict(self, timing: bool = True) -> dict:
        d = asdict(self)
        if not timing:
            d.pop("seconds")
        return d


CSV_HEADER = [f.name for f in fields(StudyRow)]


@dataclass
class LevelResult:
    """Everything computed on one level."""

    mesh: object
    w_h: object
    phi_h: object
    gamma_h: object
    y_star: object
    x_star: object
    estimator: object
    error: object
    row: StudyRow

    def report(self) -> dict:
        """JSON-ready report with the fixed key set."""
        est = self.estimator.to_dict()
        out = {k: est[k] for k in ("term1", "term2", "term3", "eta")}
        err = self.error.to_dict() if self.error is not None else dict.fromkeys(
            ("err_w_h1", "err_phi_h1", "err_shear_l2w", "err_rot_w", "err_dual", "e_total"), math.nan
        )
        out.update(err)
        out["effectivity"] = self.row.effectivity
        out["constants"] = est["constants"]
        out["n"] = self.row.n
        out["h"] = self.row.h
        out["dofs"] = self.row.dofs
        out["diagnostics"] = {
            "skew_norm2": est["skew_norm2"],
            "oscillation": est["oscillation"],
            "div_defect_y": self.row.div_defect_y,
            "div_defect_x": self.row.div_defect_x,
            "max_normal_jump": self.row.max_normal_jump,
        }
        return out


def run_solve(config: StudyConfig, n: int) -> LevelResult:
    """Run the full pipeline on level ``n``."""
    try:
        return _run_level(config, n)
    except Exception as exc:  # re-raised with the level attached
        raise StudyError(f"level n={n} failed: {exc}") from exc


def _run_level(config: StudyConfig, n: int) -> LevelResult:
    start = time.perf_counter()
    params = config.params
    ledger = config.ledger()
    load, exact = config.exact()
    mesh = build_mesh(n)
    q = (config.quad_degree, config.quad_refine)
    system = assemble(params, mesh, load, *q)
    w_h, phi_h = solve(system)
    gamma_h = shear_recovery(params, w_h, phi_h)
    y_star = build_y_star(mesh, gamma_h)
    x_star = build_x_star(mesh, phi_h, params)
    est = estimator(params, ledger, mesh, w_h, phi_h, gamma_h, y_star, x_star, load, *q)
    err = error_report(params, mesh, w_h, phi_h, gamma_h, exact, *q) if exact is not None else None

    dy = diagnostics(y_star, project_load(mesh, load, *q))
    dx = diagnostics(x_star, gamma_h)
    weight = params.t**2 + mesh.diameters**2
    nan = math.nan
    row = StudyRow(
        n=n,
        h=math.sqrt(2.0) / (2 * n),
        dofs=system.n_dofs,
        e_total=err.e_total if err else nan,
        eta=est.eta,
        effectivity=effectivity(est, err) if err else nan,
        term1=est.term1,
        term2=est.term2,
        term3=est.term3,
        err_dual=err.err_dual if err else nan,
        err_w_h1=err.err_w_h1 if err else nan,
        err_phi_h1=err.err_phi_h1 if err else nan,
        err_shear_l2w=err.err_shear_l2w if err else nan,
        err_rot_w=err.err_rot_w if err else nan,
        skew_norm2=est.skew_norm2,
        oscillation=est.oscillation,
        div_defect_y=float(np.sum(weight * dy.divergence_defect**2)),
        div_defect_x=float(np.sum(dx.divergence_defect**2)),
        max_normal_jump=max(dy.max_jump, dx.max_jump),
        seconds=time.perf_counter() - start,
    )
    return LevelResult(mesh, w_h, phi_h, gamma_h, y_star, x_star, est, err, row)


def run_study(config: StudyConfig, progress=None) -> List[StudyRow]:
    """Sweep ``config.levels`` in order and write the requested outputs."""
    rows = []
    for n in config.levels:
        rows.append(run_solve(config, n).row)
        if progress is not None:
            progress(rows[-1])
    if config.out_csv:
        write_csv(rows, config.out_csv)
    if config.out_json:
        Path(config.out_json).write_text(study_json(config, rows))
    if config.out_plot:
        write_plot(rows, config.out_plot)
    return rows


def _fmt(v) -> str:
    return str(v) if isinstance(v, (int, np.integer)) else f"{v:.17g}"


def write_csv(rows: Sequence[StudyRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([_fmt(v) for v in astuple_row(r)])


def astuple_row(row: StudyRow) -> tuple:
    return tuple(getattr(row, name) for name in CSV_HEADER)


def write_plot(rows: Sequence[StudyRow], path) -> None:
    """Two-column ``h effectivity`` text file; an SVG chart is added when ``path`` ends in ``.svg``."""
    path = Path(path)
    if path.suffix.lower() == ".svg":
        _write_svg(rows, path)
        path = path.with_suffix(".dat")
    lines = ["# h effectivity"] + [f"{r.h:.17g} {r.effectivity:.17g}" for r in rows]
    path.write_text("\n".join(lines) + "\n")


def _write_svg(rows: Sequence[StudyRow], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.loglog([r.h for r in rows], [r.effectivity for r in rows], "o-")
    ax.set_xlabel("h")
    ax.set_ylabel("effectivity index")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def jsonable(obj):
    """Replace non-finite floats by ``None`` and numpy scalars by Python ones, recursively."""
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def study_json(config: StudyConfig, rows: Sequence[StudyRow]) -> str:
    """Deterministic JSON document; wall-clock timings are left out."""
    return dumps({"config": config.describe(), "rows": [r.to_dict(timing=False) for r in rows]})
