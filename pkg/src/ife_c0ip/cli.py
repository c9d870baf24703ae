"""Convergence, moving-interface and conditioning runs from the command line.

Every run writes the resolved configuration next to its tables, so a
result directory is enough to repeat it.  Configuration files are flat
``key = value`` text; command-line flags override them.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass, fields, replace

import numpy as np

from .analysis import ErrorReport, discrete_norms, error_norms, grid_values, nested_reference
from .assembly import SIGMA_DEFAULT, PenaltyParams, assemble_system
from .geometry import GeometryError
from .ife_space import IfeSpace, JWeights, interpolate
from .mesh import Mesh
from .problems import CASES, DEFAULT_BETA, make_scenario
from .solver import BACKENDS, SolverError, estimate_condition, solve_spd

MODES = ("interpolation", "solve", "condition", "both")
FORMATS = ("csv", "markdown")


@dataclass
class ScenarioConfig:
    """One run.  ``None`` entries are filled in by :meth:`resolved`."""

    case: str = "line"
    degree: int = 2
    beta_minus: float | None = None
    beta_plus: float | None = None
    n_list: tuple | None = None
    sigma_u: float = SIGMA_DEFAULT
    sigma_f: float = 1.0
    sigma_n: float = SIGMA_DEFAULT
    lam: float = 2.0
    omega0: float | None = None
    omega1: float = 1.0
    omega2: float = 1.0
    omega3: float = 1.0
    mode: str = "both"
    format: str = "csv"
    out_dir: str = "results"
    n_ref: int = 320
    c_min: float = 0.71
    c_max: float = 0.79
    positions: int = 33
    contrasts: tuple = (1.0, 10.0, 100.0, 1000.0)
    backend: str = "auto"

    def resolved(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}; choose from {', '.join(CASES)}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.format not in FORMATS:
            raise ValueError(f"unknown format {self.format!r}")
        if self.backend not in BACKENDS:
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.degree not in (2, 3):
            raise ValueError("degree must be 2 or 3")
        bm, bp = DEFAULT_BETA[self.case]
        if self.mode == "condition":
            bm = 1.0
        cfg = replace(
            self,
            beta_minus=bm if self.beta_minus is None else float(self.beta_minus),
            beta_plus=bp if self.beta_plus is None else float(self.beta_plus),
        )
        if cfg.n_list is None:
            cfg = replace(cfg, n_list=default_n_list(cfg.case, cfg.degree, cfg.mode))
        return replace(cfg, n_list=tuple(int(n) for n in cfg.n_list))

    @property
    def penalty(self):
        return PenaltyParams(sigma_u=self.sigma_u, sigma_F=self.sigma_f, sigma_n=self.sigma_n)

    @property
    def jweights(self):
        return JWeights(self.omega0, self.omega1, self.omega2, self.omega3, self.lam)

    def echo(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(_fmt(x) for x in v)
            note = "  # max(beta_minus, beta_plus)**2" if f.name == "omega0" and v is None else ""
            lines.append(f"{f.name} = {_fmt(v)}{note}")
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def default_n_list(case, degree, mode):
    if mode == "condition":
        return (8, 16, 32)
    if case == "moving-line":
        return (40,)
    if case == "flower":
        # at N = 10, 16 and 40 petal tips cross single mesh edges twice
        return (20, 80, 160)
    return (10, 20, 40, 80, 160) if degree == 2 else (10, 20, 40, 60, 80, 100)


# ---------------------------------------------------------------------------
# config files


_CASTS = {f.name: f.type for f in fields(ScenarioConfig)}


def _cast(key, text):
    kind = _CASTS[key]
    text = text.strip()
    if text.lower() == "none":
        return None
    if key in ("n_list", "contrasts"):
        vals = [t for t in text.replace(" ", ",").split(",") if t]
        return tuple(int(t) for t in vals) if key == "n_list" else tuple(float(t) for t in vals)
    if kind.startswith("int"):
        return int(text)
    if kind.startswith("float"):
        return float(text)
    return text


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes in keys
    are accepted for underscores."""
    out = {}
    with open(path) as fh:
        for k, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{k}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key == "lambda":
                key = "lam"
            if key not in _CASTS:
                raise ValueError(f"{path}:{k}: unknown key {key!r}")
            out[key] = _cast(key, val)
    return out


# ---------------------------------------------------------------------------
# runs


def _log(msg):
    print(msg, file=sys.stderr, flush=True)


def build_space(cfg, scenario, N):
    return IfeSpace(Mesh(N), scenario.levelset, cfg.degree, scenario.beta_minus,
                    scenario.beta_plus, jw=cfg.jweights)


def solve_scenario(cfg, scenario, space):
    """Nodal coefficients of the discrete solution."""
    S = assemble_system(space, scenario, cfg.penalty)
    K, F = S.reduced()
    return S.expand(solve_spd(K, F, backend=cfg.backend))


def interpolation_errors(cfg, scenario, space):
    U = interpolate(scenario.exact.value, space)
    return error_norms(U, space, scenario.exact)


def solution_errors(cfg, scenario, space):
    return error_norms(solve_scenario(cfg, scenario, space), space, scenario.exact)


def _modes(cfg):
    return ("interpolation", "solve") if cfg.mode == "both" else (cfg.mode,)


def run_convergence(cfg):
    """Error tables over ``cfg.n_list``; one :class:`ErrorReport` per mode."""
    cfg = cfg.resolved()
    sc = make_scenario(cfg.case, cfg.beta_minus, cfg.beta_plus)
    if sc.exact is None:
        if cfg.mode == "interpolation":
            raise ValueError(f"case {cfg.case!r} has no exact solution to interpolate")
        return {"solve": run_reference_study(cfg, sc)}
    reports = {}
    for mode in _modes(cfg):
        what = "Interpolation" if mode == "interpolation" else "Solution"
        rep = ErrorReport(title=f"{what} errors, P{cfg.degree}, {cfg.case}, "
                          f"beta- = {_fmt(cfg.beta_minus)}, beta+ = {_fmt(cfg.beta_plus)}")
        fn = interpolation_errors if mode == "interpolation" else solution_errors
        for N in cfg.n_list:
            t = time.perf_counter()
            errs = fn(cfg, sc, build_space(cfg, sc, N))
            rep.add(N, 2.0 / N, errs)
            _log(f"{cfg.case} P{cfg.degree} {mode} N={N}: "
                 + " ".join(f"{e:.4e}" for e in errs) + f" ({time.perf_counter() - t:.1f} s)")
        reports[mode] = rep
    return reports


def run_reference_study(cfg, scenario):
    """Grid-norm errors against the solution on the nested ``cfg.n_ref`` mesh."""
    cfg = cfg.resolved()
    for N in cfg.n_list:
        if cfg.n_ref % N:
            raise ValueError(f"N={N} does not divide the reference level {cfg.n_ref}")
    t = time.perf_counter()
    ref_space = build_space(cfg, scenario, cfg.n_ref)
    G = grid_values(solve_scenario(cfg, scenario, ref_space), ref_space)
    del ref_space
    _log(f"{cfg.case} reference N={cfg.n_ref} ({time.perf_counter() - t:.1f} s)")
    rep = ErrorReport(names=("e0", "e1"),
                      title=f"Solution errors against N = {cfg.n_ref}, P{cfg.degree}, {cfg.case}, "
                            f"beta- = {_fmt(cfg.beta_minus)}, beta+ = {_fmt(cfg.beta_plus)}")
    for N in cfg.n_list:
        space = build_space(cfg, scenario, N)
        g = grid_values(solve_scenario(cfg, scenario, space), space)
        h = 2.0 / N
        rep.add(N, h, discrete_norms(g, nested_reference(G, cfg.n_ref, N), h))
        _log(f"{cfg.case} N={N}: " + " ".join(f"{e:.4e}" for e in rep.errors[-1]))
    return rep


def moving_line_positions(cfg):
    return np.linspace(cfg.c_min, cfg.c_max, cfg.positions)


def run_moving_line(cfg):
    """Errors at ``cfg.positions`` offsets of the line ``x = c`` on one mesh.

    Returns ``{mode: (c values, errors (n, 3))}``.
    """
    cfg = cfg.resolved()
    N = cfg.n_list[0]
    cs = moving_line_positions(cfg)
    out = {}
    for mode in _modes(cfg):
        fn = interpolation_errors if mode == "interpolation" else solution_errors
        E = np.empty((len(cs), 3))
        for k, c in enumerate(cs):
            sc = make_scenario("moving-line", cfg.beta_minus, cfg.beta_plus, c=float(c))
            E[k] = fn(cfg, sc, build_space(cfg, sc, N))
        _log(f"moving-line {mode} N={N}: {len(cs)} positions, max/min ratios "
             + " ".join(f"{r:.2f}" for r in E.max(0) / E.min(0)))
        out[mode] = (cs, E)
    return out


def condition_numbers(cfg, beta_plus=None):
    """Spectral condition numbers of the constrained matrix for ``cfg.n_list``."""
    cfg = cfg.resolved()
    bp = cfg.beta_plus if beta_plus is None else beta_plus
    sc = make_scenario(cfg.case, cfg.beta_minus, bp)
    kappa = []
    for N in cfg.n_list:
        space = build_space(cfg, sc, N)
        K, _ = assemble_system(space, sc, cfg.penalty).reduced()
        kappa.append(estimate_condition(K, backend=cfg.backend if cfg.backend != "cg" else "auto"))
    return np.array(kappa)


def loglog_slope(Ns, values):
    return float(np.polyfit(np.log(Ns), np.log(values), 1)[0])


def run_condition(cfg):
    """Condition numbers for every contrast ``beta+ / beta-`` in
    ``cfg.contrasts`` (``beta-`` fixed); returns ``{beta+: kappas}``."""
    cfg = cfg.resolved()
    res = {}
    for c in cfg.contrasts:
        bp = cfg.beta_minus * c
        res[bp] = condition_numbers(cfg, bp)
        _log(f"condition P{cfg.degree} beta+={_fmt(bp)}: slope {loglog_slope(cfg.n_list, res[bp]):.3f}")
    return res


# ---------------------------------------------------------------------------
# output


def _write(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _stem(cfg, tag):
    return os.path.join(cfg.out_dir, f"{cfg.case}_p{cfg.degree}_{tag}")


def write_outputs(cfg, results):
    """Write tables in ``cfg.format`` plus the config echo; returns paths."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    ext = "csv" if cfg.format == "csv" else "md"
    paths = [_stem(cfg, "config") + ".txt"]
    _write(paths[0], cfg.echo())
    for tag, text in results.items():
        paths.append(f"{_stem(cfg, tag)}.{ext}")
        _write(paths[-1], text)
    return paths


def _moving_table(cs, E, fmt):
    if fmt == "csv":
        rows = ["c,e0,e1,e2"] + [f"{c:.8e}," + ",".join(f"{e:.8e}" for e in r) for c, r in zip(cs, E)]
    else:
        rows = ["| c | e0 | e1 | e2 |", "|---|---|---|---|"]
        rows += [f"| {c:.4f} | " + " | ".join(f"{e:.4e}" for e in r) + " |" for c, r in zip(cs, E)]
    return "\n".join(rows) + "\n"


def _condition_table(Ns, res, fmt):
    bps = list(res)
    if fmt == "csv":
        rows = ["N," + ",".join(f"kappa_beta+={_fmt(b)}" for b in bps)]
        rows += [f"{N}," + ",".join(f"{res[b][k]:.8e}" for b in bps) for k, N in enumerate(Ns)]
        rows.append("slope," + ",".join(f"{loglog_slope(Ns, res[b]):.6f}" for b in bps))
    else:
        rows = ["| N | " + " | ".join(f"beta+ = {_fmt(b)}" for b in bps) + " |",
                "|---|" + "---|" * len(bps)]
        rows += [f"| {N} | " + " | ".join(f"{res[b][k]:.4e}" for b in bps) + " |"
                 for k, N in enumerate(Ns)]
        rows.append("| slope | " + " | ".join(f"{loglog_slope(Ns, res[b]):.3f}" for b in bps) + " |")
    return "\n".join(rows) + "\n"


def run(cfg):
    """Dispatch on case and mode; returns ``{tag: table text}``."""
    cfg = cfg.resolved()
    if cfg.mode == "condition":
        res = run_condition(cfg)
        return {"condition": _condition_table(cfg.n_list, res, cfg.format)}
    if cfg.case == "moving-line":
        return {f"{m}_sweep": _moving_table(cs, E, cfg.format)
                for m, (cs, E) in run_moving_line(cfg).items()}
    reps = run_convergence(cfg)
    return {m: (r.to_csv() if cfg.format == "csv" else r.to_markdown()) for m, r in reps.items()}


def build_parser():
    ap = argparse.ArgumentParser(
        prog="ife-c0ip",
        description="Immersed C0 interior penalty runs for the biharmonic interface problem.")
    ap.add_argument("--config", help="flat 'key = value' file; flags override it")
    ap.add_argument("--case", choices=CASES)
    ap.add_argument("--degree", type=int, choices=(2, 3))
    ap.add_argument("--beta-minus", type=float)
    ap.add_argument("--beta-plus", type=float)
    ap.add_argument("--n-list", help="comma separated mesh sizes, e.g. 10,20,40")
    ap.add_argument("--sigma-u", type=float, help=f"normal-derivative penalty [{SIGMA_DEFAULT}]")
    ap.add_argument("--sigma-f", type=float, help="flux penalty on interface edges [1.0]")
    ap.add_argument("--sigma-n", type=float, help=f"value-jump penalty [{SIGMA_DEFAULT}]")
    ap.add_argument("--lambda", dest="lam", type=float, help="fictitious element dilation [2.0]")
    ap.add_argument("--mode", choices=MODES)
    ap.add_argument("--format", choices=FORMATS)
    ap.add_argument("--out-dir")
    ap.add_argument("--n-ref", type=int, help="reference level for the flower study [320]")
    ap.add_argument("--backend", choices=BACKENDS, help="linear solver [auto]")
    return ap


def config_from_args(argv=None):
    args = build_parser().parse_args(argv)
    vals = read_config(args.config) if args.config else {}
    for k, v in vars(args).items():
        if k == "config" or v is None:
            continue
        vals[k] = _cast("n_list", v) if k == "n_list" else v
    return ScenarioConfig(**vals).resolved()


def main(argv=None):
    try:
        cfg = config_from_args(argv)
        results = run(cfg)
        for path in write_outputs(cfg, results):
            print(path)
    except (GeometryError, SolverError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
