"""Command-line front end.

Every subcommand reads a flat ``key = value`` config file (``--config``)
whose entries are overridden by explicit flags, and writes CSV or JSON
with a first line recording the package version, the config hash, the
problem hash (p, q, domain) and the mesh width. Exit codes: 0 success,
2 configuration error, 3 solver failure, 4 violated precondition.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import __version__
from .assembly import ProblemParams, assemble
from .errors import ConfigError, LogibranchError, PreconditionError, SolverError
from .mesh import build_mesh, parse_domain

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PRECONDITION = 0, 2, 3, 4
DEFAULT_SEED = 20240601
BRANCH_COLUMNS = ["lambda", "mu", "chart", "l2", "h1", "linf", "min_bd", "E", "A", "B", "J",
                  "gamma1", "stability", "fold_flag"]


@dataclass
class RunConfig:
    domain: str = "interval:0,1.5707963267948966"
    n: int = 1024
    p: float = 2.0
    q: float = 0.5
    lam: float = 0.02
    lambdas: tuple = ()
    eps: float = 0.0
    eps_schedule: tuple = (1e-2, 1e-3, 1e-4)
    route: str = "newton"
    guess: str = "const:0.9"
    tol: float = 1e-10
    seed: int = DEFAULT_SEED
    step: float = 0.02
    max_lambda: float = 50.0
    mode: str = ""
    field: str = ""
    sigmas: tuple = ()
    scan_points: int = 400
    inputs: tuple = ()
    output: str = ""

    def __post_init__(self):
        if not (0.0 < self.q < 1.0 < self.p):
            raise ConfigError(f"need 0 < q < 1 < p, got p={self.p}, q={self.q}")
        for name in ("lambdas", "eps_schedule", "sigmas"):
            grid = getattr(self, name)
            if any(not b > a for a, b in zip(grid, grid[1:])) and name != "eps_schedule":
                raise ConfigError(f"{name} must be strictly increasing")
            if name == "eps_schedule" and any(not b < a for a, b in zip(grid, grid[1:])):
                raise ConfigError("eps_schedule must be strictly decreasing")
        if self.n < 1:
            raise ConfigError("n must be positive")
        if self.lam < 0 or self.eps < 0 or self.eps >= 1:
            raise ConfigError("need lambda >= 0 and 0 <= eps < 1")

    @property
    def spec(self):
        return parse_domain(self.domain)

    def canonical(self) -> str:
        d = asdict(self)
        d.pop("output")
        d["domain"] = self.spec.to_string()
        return "\n".join(f"{k}={_fmt(v)}" for k, v in sorted(d.items()))

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    @property
    def problem_hash(self) -> str:
        key = f"p={_fmt(self.p)};q={_fmt(self.q)};domain={self.spec.to_string()}"
        return hashlib.sha256(key.encode()).hexdigest()[:16]


_TUPLE_KEYS = {"lambdas", "eps_schedule", "sigmas", "inputs"}
_KEY_ALIASES = {"lambda": "lam", "eps-schedule": "eps_schedule", "scan-points": "scan_points",
                "max-lambda": "max_lambda", "max_lambda": "max_lambda"}


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, (tuple, list)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def _coerce(key: str, raw: str):
    types = {f.name: f.type for f in fields(RunConfig)}
    kind = types[key]
    raw = raw.strip().strip('"').strip("'")
    try:
        if key in _TUPLE_KEYS:
            items = [x.strip() for x in raw.split(",") if x.strip()]
            return tuple(items) if key == "inputs" else tuple(float(x) for x in items)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


def read_config_file(path: str) -> dict:
    out = {}
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        k = _KEY_ALIASES.get(k, k.replace("-", "_"))
        if k not in {f.name for f in fields(RunConfig)}:
            raise ConfigError(f"{path}:{lineno}: unknown key {k!r}")
        out[k] = _coerce(k, v)
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    for f in fields(RunConfig):
        raw = getattr(args, f.name, None)
        if raw is not None:
            values[f.name] = _coerce(f.name, raw) if isinstance(raw, str) else raw
    return RunConfig(**values)


# --- output -------------------------------------------------------------------

def header(cfg: RunConfig, h: float) -> str:
    return (f"# logibranch {__version__} config_hash={cfg.config_hash} "
            f"problem_hash={cfg.problem_hash} h={h:.17g}")


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_csv(cfg: RunConfig, h: float, columns, rows, extra=()) -> str:
    buf = io.StringIO()
    buf.write(header(cfg, h) + "\n")
    for line in extra:
        buf.write(f"# {line}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_cell(v) for v in row) + "\n")
    return buf.getvalue()


def write_json(cfg: RunConfig, h: float, payload: dict) -> str:
    doc = {"header": {"version": __version__, "config_hash": cfg.config_hash,
                      "problem_hash": cfg.problem_hash, "h": h}}
    doc.update(payload)
    return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def emit(cfg: RunConfig, text: str) -> None:
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def pool_size() -> int:
    raw = os.environ.get("LOGIBRANCH_THREADS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError as exc:
        raise ConfigError(f"LOGIBRANCH_THREADS must be an integer, got {raw!r}") from exc


def pool_map(fn, items):
    items = list(items)
    workers = min(pool_size(), len(items)) or 1
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _setup(cfg: RunConfig):
    mesh = build_mesh(cfg.spec, cfg.n)
    return assemble(mesh)


def _params(cfg: RunConfig, **kw) -> ProblemParams:
    base = dict(p=cfg.p, q=cfg.q, lam=cfg.lam, eps=cfg.eps)
    base.update(kw)
    return ProblemParams(**base)


def _coord_columns(forms):
    if forms.mesh.dim == 1:
        return ["x"], [forms.mesh.nodes[:, 0]]
    return ["x", "y"], [forms.mesh.nodes[:, 0], forms.mesh.nodes[:, 1]]


def _field_rows(forms, *values):
    names, coords = _coord_columns(forms)
    return names, list(zip(*coords, *values))


def load_field(path: str, forms) -> np.ndarray:
    try:
        lines = [l for l in open(path, encoding="utf-8").read().splitlines()
                 if l.strip() and not l.startswith("#")]
    except OSError as exc:
        raise ConfigError(f"cannot read field file {path}: {exc}") from exc
    try:
        if lines and not _is_number(lines[0].split(",")[-1]):
            lines = lines[1:]
        u = np.array([float(l.split(",")[-1]) for l in lines])
    except ValueError as exc:
        raise ConfigError(f"field file {path} is not numeric") from exc
    if u.size != forms.n:
        raise ConfigError(f"field file has {u.size} values, mesh has {forms.n} nodes")
    return u


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def _guess(cfg: RunConfig, forms) -> np.ndarray:
    kind, _, arg = cfg.guess.partition(":")
    if kind == "const":
        try:
            return np.full(forms.n, float(arg))
        except ValueError as exc:
            raise ConfigError(f"bad constant guess {cfg.guess!r}") from exc
    if kind == "file":
        return load_field(arg, forms)
    raise ConfigError(f"guess must be const:<c> or file:<path>, got {cfg.guess!r}")


# --- subcommands --------------------------------------------------------------

def run_eig(cfg: RunConfig, require_sigma: bool = False) -> str:
    from .spectra import gamma1_of_sigma, lambda_omega, sigma1

    forms = _setup(cfg)
    lo = lambda_omega(forms)
    rows = [("lambda_omega", "", lo.value)]
    if lo.value > 1:
        rows.append(("sigma1", "", sigma1(forms, lam_omega=lo.value).value))
    elif require_sigma:
        sigma1(forms, lam_omega=lo.value)
    sig = cfg.sigmas or tuple(np.linspace(-2.0, 1.0, 13))
    vals = pool_map(lambda s: gamma1_of_sigma(forms, float(s)).value, sig)
    rows += [("gamma1", float(s), v) for s, v in zip(sig, vals)]
    return write_csv(cfg, forms.mesh.h, ["quantity", "sigma", "value"], rows)


def run_solve(cfg: RunConfig) -> str:
    from .solvers import build_subsolution, monotone_iterate, nehari_minimize, newton_solve

    forms = _setup(cfg)
    params = _params(cfg)
    route = cfg.route.lower()
    if route == "newton":
        rep = newton_solve(forms, _guess(cfg, forms), params, tol=cfg.tol)
    elif route == "subsuper":
        w = build_subsolution(forms, params)
        rep = monotone_iterate(forms, w, np.ones(forms.n), params, tol=min(cfg.tol * 10, 1e-9))
    elif route in ("nehari+", "nehari-"):
        rep = nehari_minimize(forms, params, sign="Plus" if route == "nehari+" else "Minus",
                              seed=cfg.seed, tol=cfg.tol, workers=pool_size())
    else:
        raise ConfigError(f"unknown route {cfg.route!r}")
    names, rows = _field_rows(forms, rep.u)
    gamma = "nan" if rep.gamma1 is None else f"{rep.gamma1:.17g}"
    extra = [f"route={rep.route} residual={rep.residual_norm:.17g} iterations={rep.iterations} "
             f"J={rep.J_value:.17g} gamma1={gamma}"]
    return write_csv(cfg, forms.mesh.h, names + ["u"], rows, extra)


def run_fibering(cfg: RunConfig) -> str:
    from .variational import fibering

    if not cfg.field:
        raise ConfigError("fibering needs --field <path>")
    forms = _setup(cfg)
    u = load_field(cfg.field, forms)
    rep = fibering(forms, u, _params(cfg))
    return write_json(cfg, forms.mesh.h, {"fibering": rep.to_dict()})


def _branch_rows(branch):
    return [[r[c] for c in ("lambda", "mu", "chart", "l2", "h1", "linf", "min_bd", "E", "A",
                            "B", "J", "gamma1", "stability", "fold_flag")] for r in branch.rows()]


def run_continue(cfg: RunConfig) -> str:
    from .continuation import continue_from_trivial_one, continue_regularized, trace_continuum_C0

    forms = _setup(cfg)
    mode = cfg.mode or "trivial-one"
    h = forms.mesh.h
    if mode == "trivial-one":
        br = continue_from_trivial_one(forms, _params(cfg, lam=0.0), step=cfg.step,
                                       max_lambda=cfg.max_lambda)
        branches = [br]
    elif mode == "regularized":
        eps_list = cfg.eps_schedule if not cfg.eps else (cfg.eps,)
        branches = pool_map(lambda e: continue_regularized(forms, _params(cfg, lam=0.0, eps=e),
                                                           step=cfg.step), eps_list)
    elif mode == "continuum":
        br = trace_continuum_C0(forms, _params(cfg, lam=0.0, eps=0.0), cfg.eps_schedule, step=cfg.step)
        branches = [br]
    else:
        raise ConfigError(f"unknown continue mode {mode!r}")
    rows, extra = [], []
    for k, br in enumerate(branches):
        rows += [[k, br.eps] + r for r in _branch_rows(br)]
        star = "nan" if br.lambda_star is None else f"{br.lambda_star:.17g}"
        extra.append(f"branch={k} eps={br.eps:.17g} status={br.status} folds={br.fold_count} "
                     f"lambda_star={star}")
        if "distances" in br.meta:
            extra.append("whyburn_distances=" + ",".join(f"{d:.17g}" for d in br.meta["distances"]))
    return write_csv(cfg, h, ["branch", "eps"] + BRANCH_COLUMNS, rows, extra)


def _read_header(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            first = fh.readline().strip()
            rest = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not first.startswith("# logibranch"):
        raise ConfigError(f"{path} has no logibranch header")
    meta = dict(tok.split("=", 1) for tok in first.split()[3:] if "=" in tok)
    return {"meta": meta, "body": rest}


def run_diagram(cfg: RunConfig) -> str:
    if not cfg.inputs:
        raise ConfigError("diagram needs --inputs a.csv,b.csv")
    docs = [_read_header(p) for p in cfg.inputs]
    hashes = {d["meta"].get("problem_hash") for d in docs}
    if len(hashes) != 1:
        raise ConfigError(f"refusing to merge branches of different problems: {sorted(hashes)}")
    (ph,) = hashes
    if ph != cfg.problem_hash:
        raise ConfigError("input problem hash does not match the configured p, q, domain")
    out = io.StringIO()
    hs = {d["meta"].get("h") for d in docs}
    h = float(hs.pop()) if len(hs) == 1 else float("nan")
    out.write(header(cfg, h) + "\n")
    out.write("# sources=" + ",".join(d["meta"].get("config_hash", "?") for d in docs) + "\n")
    cols = None
    for k, d in enumerate(docs):
        lines = [l for l in d["body"].splitlines() if l and not l.startswith("#")]
        if not lines:
            continue
        if cols is None:
            cols = lines[0]
            out.write("source," + cols + "\n")
        elif lines[0] != cols:
            raise ConfigError(f"{cfg.inputs[k]} has different columns")
        for l in lines[1:]:
            out.write(f"{k},{l}\n")
    return out.getvalue()


def run_asympt(cfg: RunConfig) -> str:
    from .solvers import dirichlet_logistic, lower_branch_rescaled, sweep_lambda

    forms = _setup(cfg)
    mode = cfg.mode or "lower-branch"
    lams = cfg.lambdas or ((1e-4, 1e-3, 1e-2) if mode == "lower-branch" else (0.1, 1.0, 10.0, 100.0))
    params = _params(cfg, lam=lams[0])
    bnd = forms.mesh.boundary_nodes
    if mode == "lower-branch":
        limit, reps = lower_branch_rescaled(forms, params, lams, tol=cfg.tol)
        v0 = limit.chart_field.coeffs
        norms = [forms.h1_norm(r.u) for r in reps]
        dist = [forms.h1_norm(r.chart_field.coeffs - v0) for r in reps]
        slope = float(np.polyfit(np.log(lams), np.log(norms), 1)[0])
        rows = [(l, nv, d, r.u[bnd].min(), r.gamma1) for l, nv, d, r in zip(lams, norms, dist, reps)]
        extra = [f"slope={slope:.17g} expected={1.0 / (1.0 - cfg.q):.17g}"]
        cols = ["lambda", "h1", "h1_dist_limit", "min_bd", "gamma1"]
    elif mode == "dirichlet-limit":
        uD = dirichlet_logistic(forms, p=cfg.p).u
        guess = _guess(cfg, forms)
        reps = sweep_lambda(forms, params, lams, guess, tol=cfg.tol)
        l2 = [forms.l2_norm(r.u - uD) for r in reps]
        h1 = [forms.h1_norm(r.u - uD) for r in reps]
        slope = float(np.polyfit(np.log(lams), np.log(l2), 1)[0])
        rows = [(l, a, b, r.u[bnd].min()) for l, a, b, r in zip(lams, l2, h1, reps)]
        extra = [f"slope={slope:.17g}"]
        cols = ["lambda", "l2_dist", "h1_dist", "min_bd"]
    else:
        raise ConfigError(f"unknown asympt mode {mode!r}")
    return write_csv(cfg, forms.mesh.h, cols, rows, extra)


def run_oracle(cfg: RunConfig) -> str:
    from . import oracle1d

    spec = cfg.spec
    if spec.dim != 1:
        raise ConfigError("the shooting oracle handles intervals only")
    forms = _setup(cfg)
    x = forms.mesh.nodes[:, 0]
    h = forms.mesh.h
    mode = cfg.mode or "solve"
    if mode == "solve":
        res = oracle1d.shoot_count(spec, cfg.p, cfg.q, cfg.lam, scan_points=cfg.scan_points)
        mats = [m for m in res.matches if not m.constant] or res.matches
        cols = ["x"] + [f"u{k}" for k in range(len(mats))]
        rows = list(zip(x, *[m(x) for m in mats]))
        extra = [f"count={res.count} nonconstant={res.nonconstant_count} "
                 "s=" + ",".join(f"{m.s:.17g}" for m in res.matches)]
        return write_csv(cfg, h, cols, rows, extra)
    if mode == "count":
        lams = cfg.lambdas or (cfg.lam,)
        res = pool_map(lambda l: oracle1d.shoot_count(spec, cfg.p, cfg.q, float(l),
                                                      scan_points=cfg.scan_points), lams)
        rows = [(l, r.count, r.nonconstant_count) for l, r in zip(lams, res)]
        return write_csv(cfg, h, ["lambda", "count", "nonconstant"], rows)
    if mode == "fold":
        lam_star = oracle1d.oracle_fold(spec, cfg.p, cfg.q, scan_points=cfg.scan_points)
        return write_csv(cfg, h, ["quantity", "value"], [("lambda_star", lam_star)])
    if mode == "limit":
        prof = oracle1d.shoot_limit_problem(spec, cfg.q)
        extra = [f"C1={prof.C1:.17g} C2={prof.C2:.17g}"]
        return write_csv(cfg, h, ["x", "v"], list(zip(x, prof(x))), extra)
    if mode == "dirichlet":
        m = oracle1d.shoot_dirichlet(spec, cfg.p)
        return write_csv(cfg, h, ["x", "u"], list(zip(x, m(x))), [f"s={m.s:.17g}"])
    if mode == "eig":
        vals = oracle1d.analytic_eigen(spec)
        return write_csv(cfg, h, ["quantity", "value"], sorted(vals.items()))
    raise ConfigError(f"unknown oracle mode {mode!r}")


# --- argument parsing ---------------------------------------------------------

def _add_common(sp):
    sp.add_argument("--config", help="flat 'key = value' config file")
    sp.add_argument("--domain", help="interval:a,b or rect:ax,bx,ay,by")
    sp.add_argument("--n", type=int, help="cells per axis")
    sp.add_argument("--p", type=float)
    sp.add_argument("--q", type=float)
    sp.add_argument("--lambda", dest="lam", type=float)
    sp.add_argument("--lambdas", help="comma-separated increasing grid")
    sp.add_argument("--eps", type=float)
    sp.add_argument("--eps-schedule", dest="eps_schedule", help="comma-separated decreasing schedule")
    sp.add_argument("--tol", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--output", "-o", help="output file (default stdout)")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="logibranch", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"logibranch {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("eig", help="principal eigenvalues and the gamma1(sigma) table")
    _add_common(sp)
    sp.add_argument("--sigmas", help="sigma grid for the gamma1 table")
    sp.add_argument("--require-sigma1", action="store_true",
                    help="fail with exit code 4 when sigma1 is undefined")

    sp = sub.add_parser("solve", help="single positive solution")
    _add_common(sp)
    sp.add_argument("--route", choices=["newton", "subsuper", "nehari+", "nehari-"])
    sp.add_argument("--guess", help="const:<c> or file:<path>")

    sp = sub.add_parser("fibering", help="fibering analysis of a field as JSON")
    _add_common(sp)
    sp.add_argument("--field", required=True, help="CSV with the field in the last column")

    sp = sub.add_parser("continue", help="branch tracing")
    _add_common(sp)
    sp.add_argument("--mode", choices=["trivial-one", "regularized", "continuum"])
    sp.add_argument("--step", type=float)
    sp.add_argument("--max-lambda", dest="max_lambda", type=float)

    sp = sub.add_parser("diagram", help="merge branch files of one problem")
    _add_common(sp)
    sp.add_argument("--inputs", required=True, help="comma-separated branch CSV files")

    sp = sub.add_parser("asympt", help="asymptotic lambda sweeps")
    _add_common(sp)
    sp.add_argument("--mode", choices=["lower-branch", "dirichlet-limit"])
    sp.add_argument("--guess", help="const:<c> or file:<path>")

    sp = sub.add_parser("oracle", help="shooting oracle (intervals)")
    _add_common(sp)
    sp.add_argument("--mode", choices=["solve", "count", "fold", "limit", "dirichlet", "eig"])
    sp.add_argument("--scan-points", dest="scan_points", type=int)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        cmd = args.command
        if cmd == "eig":
            text = run_eig(cfg, require_sigma=args.require_sigma1)
        elif cmd == "solve":
            text = run_solve(cfg)
        elif cmd == "fibering":
            text = run_fibering(cfg)
        elif cmd == "continue":
            text = run_continue(cfg)
        elif cmd == "diagram":
            text = run_diagram(cfg)
        elif cmd == "asympt":
            text = run_asympt(cfg)
        else:
            text = run_oracle(cfg)
        emit(cfg, text)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PreconditionError as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except LogibranchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
