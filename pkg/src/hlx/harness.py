"""CLI entry point and experiment runner.

Usage: hlx <task> --config <path> [--out <dir>] [--seed <u64>]

Tasks: validate, legendre, flow, criteria, patch, solve, compare,
aronsson, acceptance.  Configs are INI files with one section per
concern ([hamiltonian], [grid], [data], plus a section named after the
task).  Every run writes a manifest.json recording inputs, the seed,
tolerances, per-check verdicts, and a sha256 per artifact; reruns with
the same config and seed are byte-identical.

Exit codes: 0 success, 1 module-level failure (check failed or not
converged), 2 input error (unknown task, bad config).
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from hlx.errors import InputError

TASKS = (
    "validate",
    "legendre",
    "flow",
    "criteria",
    "patch",
    "solve",
    "compare",
    "aronsson",
    "acceptance",
)


@dataclass
class ExperimentConfig:
    task: str
    out_dir: str
    seed: int
    sections: dict = field(default_factory=dict)

    def get(self, section, key, fallback=None):
        return self.sections.get(section, {}).get(key, fallback)

    def getfloat(self, section, key, fallback=None):
        v = self.get(section, key)
        return fallback if v is None else float(v)

    def getint(self, section, key, fallback=None):
        v = self.get(section, key)
        return fallback if v is None else int(v)


def load_config(task, path, out_dir=None, seed=None):
    if task not in TASKS:
        raise InputError(f"unknown task {task!r}")
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise InputError(f"config file not found: {path}")
    sections = {s: dict(cp.items(s)) for s in cp.sections()}
    if out_dir is None:
        out_dir = sections.get("output", {}).get("dir", "out")
    if seed is None:
        seed = int(sections.get("output", {}).get("seed", "0"))
    return ExperimentConfig(
        task=task, out_dir=out_dir, seed=int(seed), sections=sections
    )


def _hamiltonian(cfg):
    from hlx.hamiltonian import HamiltonianModel

    fam = cfg.get("hamiltonian", "family", "quadratic")
    dim = cfg.getint("hamiltonian", "dim", 2)
    if fam == "quadratic":
        diag = cfg.get("hamiltonian", "diag")
        if diag is None:
            mat = np.eye(dim)
        else:
            mat = np.diag([float(x) for x in diag.split(",")])
        return HamiltonianModel.quadratic(mat)
    if fam == "power":
        return HamiltonianModel.power(cfg.getfloat("hamiltonian", "exponent", 2.0), dim)
    if fam == "norm":
        return HamiltonianModel.norm(dim)
    raise InputError(f"unknown Hamiltonian family {fam!r}")


def _grid(cfg):
    dim = cfg.getint("grid", "dim", 2)
    n = cfg.getint("grid", "n", 33)
    h = cfg.getfloat("grid", "h", 1.0 / (n - 1))
    origin = cfg.get("grid", "origin", "0")
    og = tuple(float(x) for x in origin.split(","))
    if len(og) == 1:
        og = og * dim
    shape = (n,) * dim
    axes = [og[d] + h * np.arange(n) for d in range(dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return shape, (h,) * dim, og, np.stack(mesh, axis=-1)


def _data_field(cfg, H, rng):
    """Build the named analytic (or seeded random) boundary-data field."""
    from hlx.fields import ScalarField

    shape, sp, og, coords = _grid(cfg)
    fam = cfg.get("data", "family", "affine")
    if fam == "affine":
        slope = cfg.get("data", "slope", "1")
        p = np.array([float(x) for x in slope.split(",")])
        if p.size == 1 and len(shape) > 1:
            p = np.full(len(shape), p[0])
        vals = coords @ p
    elif fam == "cone":
        from hlx.geometry import cone_data

        k = cfg.getfloat("data", "k", 1.0)
        vx = cfg.get("data", "vertex", "0.5")
        v = np.array([float(x) for x in vx.split(",")])
        if v.size == 1 and len(shape) > 1:
            v = np.full(len(shape), v[0])
        vals = cone_data(H, k).value(coords - v)
    elif fam == "aronsson-exemplar":
        c = cfg.getfloat("data", "center", 0.5)
        scale = cfg.getfloat("data", "scale", 1.0)
        d = np.abs(coords - c) ** (4.0 / 3.0)
        vals = scale * (d[..., 0] - d[..., 1]) if len(shape) > 1 else scale * d[..., 0]
    elif fam == "random":
        from scipy.ndimage import gaussian_filter

        vals = gaussian_filter(rng.standard_normal(shape), sigma=3.0, mode="nearest")
        vals *= cfg.getfloat("data", "scale", 1.0)
    else:
        raise InputError(f"unknown data family {fam!r}")
    return ScalarField(np.asarray(vals, dtype=float), sp, og)


class Manifest:
    def __init__(self, cfg):
        self.data = {
            "task": cfg.task,
            "seed": cfg.seed,
            "config": cfg.sections,
            "checks": {},
            "artifacts": {},
        }
        self.out = cfg.out_dir

    def check(self, name, ok, value=None):
        self.data["checks"][name] = {"ok": bool(ok), "value": value}

    def artifact(self, path):
        with open(path, "rb") as f:
            digest = hashlib.sha256(f.read()).hexdigest()
        self.data["artifacts"][os.path.relpath(path, self.out)] = digest

    def write(self):
        path = os.path.join(self.out, "manifest.json")
        with open(path, "w") as f:
            json.dump(self.data, f, indent=2, sort_keys=True, default=_jsonable)
        return path

    @property
    def ok(self):
        return all(c["ok"] for c in self.data["checks"].values())


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x)}")


def _write_xy(path, xs, ys):
    """Two-column plot table, gnuplot-ready."""
    with open(path, "w") as f:
        for x, y in zip(xs, ys):
            f.write(f"{x:.17g} {y:.17g}\n")


def run_experiment(cfg: ExperimentConfig):
    os.makedirs(cfg.out_dir, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    man = Manifest(cfg)
    runner = _RUNNERS[cfg.task]
    runner(cfg, man, rng)
    man.write()
    return 0 if man.ok else 1


def _task_validate(cfg, man, rng):
    from hlx.hamiltonian import validate_hamiltonian

    H = _hamiltonian(cfg)
    rep = validate_hamiltonian(H)
    for name in ("convex", "zero_at_origin", "zero_set_bounded", "zero_set_empty_interior"):
        man.check(name, getattr(rep, name))


def _task_legendre(cfg, man, rng):
    from hlx.hamiltonian import conjugate_1d, conjugate_nd

    H = _hamiltonian(cfg)
    n = cfg.getint("legendre", "n", 257)
    half = cfg.getfloat("legendre", "half_width", 4.0)
    tol = cfg.getfloat("legendre", "tol", 3.0 * 2 * half / (n - 1))
    if H.dim == 1:
        p = np.linspace(-half, half, n)
        hv = np.asarray(H(p[:, None]))
        lv = conjugate_1d(p, hv, p)
        back = conjugate_1d(p, lv, p)
        path = os.path.join(cfg.out_dir, "conjugate.xy")
        _write_xy(path, p, lv)
        man.artifact(path)
    else:
        axes = [np.linspace(-half, half, n)] * H.dim
        mesh = np.meshgrid(*axes, indexing="ij")
        hv = np.asarray(H(np.stack(mesh, axis=-1).reshape(-1, H.dim))).reshape(
            mesh[0].shape
        )
        lv = conjugate_nd(axes, hv, axes)
        back = conjugate_nd(axes, lv, axes)
    from hlx.fields import BIG_CUT

    finite = (np.abs(back) < BIG_CUT) & (np.abs(hv) < BIG_CUT)
    err = float(np.max(np.abs(back - hv)[finite]))
    man.check("roundtrip_max_error", err <= tol, err)


def _task_flow(cfg, man, rng):
    from hlx.hamiltonian import lagrangian_evaluator
    from hlx.hopflax import flow_params, flow_up, semigroup_defect, verify_flow_laws

    H = _hamiltonian(cfg)
    lag = lagrangian_evaluator(H)
    u = _data_field(cfg, H, rng)
    t = cfg.getfloat("flow", "t", 0.05)
    r = cfg.getfloat("flow", "radius", 4 * max(u.spacing))
    fp = flow_params(u, lag, t, r)
    up = flow_up(u, fp)
    path = os.path.join(cfg.out_dir, "flow_up.csv")
    up.write_csv(path)
    man.artifact(path)
    rep = verify_flow_laws(u, fp)
    man.check("flow_laws", rep.ok)
    defect, valid = semigroup_defect(u, lag, t, t, r)
    d = float(np.nanmax(defect.values)) if valid.any() else 0.0
    man.check("semigroup_defect", d <= cfg.getfloat("flow", "defect_tol", 3 * max(u.spacing)), d)


def _task_criteria(cfg, man, rng):
    from hlx.criteria import check_equivalences
    from hlx.geometry import cone_data
    from hlx.hamiltonian import lagrangian_evaluator

    H = _hamiltonian(cfg)
    lag = lagrangian_evaluator(H)
    u = _data_field(cfg, H, rng)
    h = max(u.spacing)
    base = cfg.getfloat("criteria", "ladder_base", 3 * h)
    ladder = base * np.array([1.0, 2.0, 4.0])
    r = cfg.getfloat("criteria", "radius", 2.0)
    margin = cfg.getfloat("criteria", "margin", 0.35)
    dist = u.boundary_distance()
    V = dist > margin
    ks = [float(x) for x in cfg.get("criteria", "cone_levels", "0.25,1.0").split(",")]
    cones = [cone_data(H, k) for k in ks]
    rep = check_equivalences(
        u,
        lag,
        cones,
        ladder,
        r,
        V=V,
        conv_tol=cfg.getfloat("criteria", "conv_tol", 0.006),
        cone_tol=cfg.getfloat("criteria", "cone_tol", 5 * h),
        usc_margin=cfg.getfloat("criteria", "usc_margin", 0.2),
    )
    names = ("cone_comparison", "convexity", "pointwise")
    for name, verdict in zip(names, rep.verdicts):
        man.check(name, True, verdict)  # verdicts reported, agreement checked below
    man.check("verdicts_agree", rep.agree, dict(zip(names, rep.verdicts)))


def _task_solve(cfg, man, rng, return_field=False, init=None, tag=""):
    from hlx.hamiltonian import lagrangian_evaluator
    from hlx.solver import SolveConfig, solve_dirichlet

    H = _hamiltonian(cfg)
    lag = lagrangian_evaluator(H)
    g = _data_field(cfg, H, rng)
    h = max(g.spacing)
    scfg = SolveConfig(
        t=cfg.getfloat("solve", "t", 0.05),
        radius=cfg.getfloat("solve", "radius", 3 * h),
        tol=cfg.getfloat("solve", "tol", 1e-8),
        max_iters=cfg.getint("solve", "max_iters", 100000),
        init=init if init is not None else cfg.get("solve", "init", "min"),
        damping=cfg.getfloat("solve", "damping", 1.0),
        seed=cfg.seed,
    )
    u, rep = solve_dirichlet(H, g, scfg, lag=lag)
    path = os.path.join(cfg.out_dir, f"solution{tag}.csv")
    u.write_csv(path)
    man.artifact(path)
    hist = os.path.join(cfg.out_dir, f"residuals{tag}.xy")
    _write_xy(hist, np.arange(1, rep.iterations + 1), rep.history)
    man.artifact(hist)
    man.check(f"converged{tag}", rep.converged, rep.residual)
    if return_field:
        return u
    return None


def _task_compare(cfg, man, rng):
    from hlx.solver import comparison_gap

    # identical seeded generators: both solves must see the same data
    u1 = _task_solve(cfg, man, np.random.default_rng(cfg.seed), return_field=True, init="min", tag="_min")
    u2 = _task_solve(cfg, man, np.random.default_rng(cfg.seed), return_field=True, init="max", tag="_max")
    tol = cfg.getfloat("compare", "gap_tol", 10.0 * cfg.getfloat("solve", "tol", 1e-8))
    g12 = comparison_gap(u1, u2)
    g21 = comparison_gap(u2, u1)
    man.check("comparison_gap_min_max", g12 <= tol, g12)
    man.check("comparison_gap_max_min", g21 <= tol, g21)
    d = float(np.max(np.abs(u1.values - u2.values)))
    man.check("init_agreement", d <= tol, d)


def _task_patch(cfg, man, rng):
    from hlx.criteria import s_plus
    from hlx.fields import ScalarField
    from hlx.geometry import cone_data
    from hlx.hamiltonian import lagrangian_evaluator
    from hlx.patching import patch

    H = _hamiltonian(cfg)
    lag = lagrangian_evaluator(H)
    u = _data_field(cfg, H, rng)
    gamma = cfg.getfloat("patch", "gamma", 0.2)
    h = max(u.spacing)
    cd = cone_data(H, gamma)
    base = h / cd.M_k
    ladder = base * np.array([2.0, 4.0, 8.0])
    r = cfg.getfloat("patch", "radius", 2.0)
    sp = s_plus(u, lag, ladder, r)
    res = patch(
        u, gamma, cd, sp.values, lag=lag, ladder=ladder, radius=r, flow_t=4 * base
    )
    for name in ("u_gamma", "v_gamma"):
        arr = getattr(res, name)
        fld = arr if isinstance(arr, ScalarField) else u.with_values(np.nan_to_num(arr))
        path = os.path.join(cfg.out_dir, f"{name}.csv")
        fld.write_csv(path)
        man.artifact(path)
    path = os.path.join(cfg.out_dir, "region.csv")
    u.with_values(res.region.astype(float)).write_csv(path)
    man.artifact(path)
    for name, (ok, val) in res.claims.items():
        man.check(name, ok, val)


def _task_aronsson(cfg, man, rng):
    from hlx.aronsson import subsolution_residual

    H = _hamiltonian(cfg)
    u = _data_field(cfg, H, rng)
    rho = cfg.getfloat("aronsson", "rho", 4 * max(u.spacing))
    stride = cfg.getint("aronsson", "stride", 8)
    w = max(int(np.floor(rho / min(u.spacing))), 1)
    rows = []
    for idx in np.ndindex(*u.shape):
        if any(i % stride for i in idx):
            continue
        if any(i - w < 0 or i + w >= n for i, n in zip(idx, u.shape)):
            continue
        r, fit = subsolution_residual(u, idx, rho, H)
        rows.append((idx, r, float(np.linalg.norm(fit.gradient)), fit.fit_residual))
    path = os.path.join(cfg.out_dir, "residuals.csv")
    with open(path, "w") as f:
        f.write("node,residual,grad_norm,fit_residual\n")
        for idx, r, gn, fr in rows:
            f.write(f"{' '.join(map(str, idx))},{r:.17g},{gn:.17g},{fr:.17g}\n")
    man.artifact(path)
    h = max(u.spacing)
    bound = -10.0 * (rho + h * h / (rho * rho))
    worst = min(r for _, r, _, _ in rows) if rows else 0.0
    man.check("residual_lower_bound", worst >= bound, worst)


def _task_acceptance(cfg, man, rng):
    import subprocess

    root = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
    test = os.path.join(root, "tests", "test_acceptance.py")
    if not os.path.exists(test):
        raise InputError("acceptance test file not found; run from a source checkout")
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-v", "-s", test],
        capture_output=True,
        text=True,
    )
    log = os.path.join(cfg.out_dir, "acceptance.log")
    with open(log, "w") as f:
        f.write(proc.stdout)
        f.write(proc.stderr)
    man.artifact(log)
    man.check("acceptance_suite", proc.returncode == 0, proc.returncode)


_RUNNERS = {
    "validate": _task_validate,
    "legendre": _task_legendre,
    "flow": _task_flow,
    "criteria": _task_criteria,
    "patch": _task_patch,
    "solve": _task_solve,
    "compare": _task_compare,
    "aronsson": _task_aronsson,
    "acceptance": _task_acceptance,
}


def main(argv=None):
    # honor the thread cap before numpy spins up worker pools
    cap = os.environ.get("HLX_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)
    ap = argparse.ArgumentParser(prog="hlx", description=__doc__)
    ap.add_argument("task", help="one of: " + ", ".join(TASKS))
    ap.add_argument("--config", required=True)
    ap.add_argument("--out", default=None)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.task, args.config, out_dir=args.out, seed=args.seed)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        return run_experiment(cfg)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"failure: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
