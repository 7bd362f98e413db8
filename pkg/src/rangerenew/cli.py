"""Command-line front end: ``rangerenew {moments,ratefn,simulate,verify,report-all}``.

Exit codes: 0 success, 1 a gating check failed, 2 usage error, 3 I/O error.
Every output starts with a header recording the package version, a hash of
the run configuration and the seed (a ``#`` line for CSV, a ``"header"``
member for JSON).  Files are written to a temporary name and renamed into
place, so a failed run never leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from . import __version__
from .laws import LawParameterError, parse_law, regular_profile
from .moments import moment_row

SUBCOMMANDS = ("moments", "ratefn", "simulate", "verify", "report-all")
EMITS = ("lambda", "conjugate", "mdp", "finite-t")
METHODS = ("direct", "poissonized", "coupled")
CHECKS = ("brute", "clt", "mean-bounds", "var-ratio", "cgf", "mdp", "coupling")
FORMATS = ("csv", "json")

MOMENT_COLUMNS = ("t", "mu", "mu_err", "sigma_sq", "sigma_sq_err", "mu_dot", "mu_ddot",
                  "exact_mean", "exact_var", "asym_mu", "asym_sigma_sq")
RATEFN_COLUMNS = ("gamma", "lambda_or_x", "value", "method", "est_error")


class UsageError(Exception):
    """Bad flags, config keys, grids or law specs (exit code 2)."""


@dataclass
class RunConfig:
    """Everything a run depends on.  ``None`` means "not given"."""

    subcommand: str
    law: Optional[str] = None
    gamma: Optional[float] = None
    t: Optional[float] = None
    n: Optional[int] = None
    t_grid: Optional[list] = None
    n_grid: Optional[list] = None
    lambda_grid: Optional[list] = None
    x_grid: Optional[list] = None
    eps_grid: Optional[list] = None
    emit: str = "lambda"
    method: str = "direct"
    check: Optional[str] = None
    replicas: int = 1000
    seed: int = 0
    tv_budget: float = 1e-6
    b: str = "log"
    tol: float = 1e-9
    delta_pairs: Optional[int] = None
    exact: bool = True
    out: Optional[str] = None
    format: str = "csv"

    def to_text(self) -> str:
        """Flat ``key=value`` lines; ``from_text`` inverts this exactly."""
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            lines.append(f"{f.name}={_format_value(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        values = _parse_config_text(text)
        if "subcommand" not in values:
            raise UsageError("config is missing 'subcommand'")
        return cls(**values)

    def config_hash(self) -> str:
        d = dataclasses.replace(self, out=None)
        return hashlib.sha256(d.to_text().encode("utf-8")).hexdigest()[:16]


_KIND = {
    "subcommand": "str", "law": "str", "gamma": "float", "t": "float", "n": "int",
    "t_grid": "grid", "n_grid": "intgrid", "lambda_grid": "grid", "x_grid": "grid", "eps_grid": "grid",
    "emit": "str", "method": "str", "check": "str", "replicas": "int", "seed": "int",
    "tv_budget": "float", "b": "str", "tol": "float", "delta_pairs": "int", "exact": "bool",
    "out": "str", "format": "str",
}


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ",".join(_format_value(x) for x in v)
    return str(v)


def parse_grid(text: str, integer: bool = False) -> list:
    """``lo:hi:step`` (inclusive of ``hi``) or a comma-separated list."""
    s = text.strip()
    try:
        if ":" in s:
            lo, hi, step = (float(x) for x in s.split(":"))
            if not step > 0 or hi < lo:
                raise ValueError("need step > 0 and lo <= hi")
            count = int(math.floor((hi - lo) / step + 1e-9)) + 1
            pts = [round(lo + k * step, 12) for k in range(count)]
        else:
            pts = [float(x) for x in s.split(",") if x.strip()]
        if not pts:
            raise ValueError("empty grid")
        if not all(math.isfinite(p) for p in pts):
            raise ValueError("grid values must be finite")
    except ValueError as exc:
        raise UsageError(f"malformed grid {text!r}: {exc}") from None
    if integer:
        if any(p != int(p) for p in pts):
            raise UsageError(f"grid {text!r} must contain integers")
        return [int(p) for p in pts]
    return [float(p) for p in pts]


def _convert(key: str, raw: str):
    kind = _KIND[key]
    try:
        if kind == "str":
            return raw
        if kind == "float":
            return float(raw)
        if kind == "int":
            v = float(raw)
            if v != int(v):
                raise ValueError("not an integer")
            return int(v) if "e" in raw.lower() or "." in raw else int(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError("expected true/false")
        if kind == "grid":
            return parse_grid(raw)
        if kind == "intgrid":
            return parse_grid(raw, integer=True)
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {raw!r} ({exc})") from None
    raise AssertionError(kind)


def _parse_config_text(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise UsageError(f"config line {lineno}: expected key=value, got {line!r}")
        key, raw = (x.strip() for x in s.split("=", 1))
        key = key.replace("-", "_")
        if key not in _KIND:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _convert(key, raw)
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rangerenew", description="Distinct-count moments, rate functions, simulation and checks.")
    p.add_argument("--version", action="version", version=f"rangerenew {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS

    def common(sp, *names):
        sp.add_argument("--config", default=S, help="flat key=value file; flags take precedence")
        sp.add_argument("--out", default=S, help="output path (default: stdout)")
        sp.add_argument("--format", choices=FORMATS, default=S)
        opts = {
            "law": dict(help="zipf:γ=G | geom:q=Q | finite:w1,w2,... | factgap"),
            "gamma": dict(help="regularity index in (0,1), or 1 for the closed forms"),
            "t": dict(help="Poissonization time"),
            "n": dict(help="sample size"),
            "t-grid": dict(help="lo:hi:step or comma list"),
            "n-grid": dict(help="integer grid"),
            "lambda-grid": dict(help="lo:hi:step or comma list"),
            "x-grid": dict(help="lo:hi:step or comma list"),
            "eps-grid": dict(help="comma list of epsilons"),
            "replicas": dict(help="number of replicas"),
            "seed": dict(help="64-bit master seed"),
            "tv-budget": dict(help="total-variation budget for the Poissonized tail"),
            "b": dict(help="MDP scale: log or pow:BETA"),
            "tol": dict(help="absolute tolerance"),
            "delta-pairs": dict(help="pair cutoff K for Var R_n"),
            "exact": dict(help="true/false: include E R_n, Var R_n at integer t"),
        }
        for name in names:
            sp.add_argument(f"--{name}", default=S, **opts[name])

    sp = sub.add_parser("moments", help="mu, sigma^2, derivatives, exact E/Var R_n")
    common(sp, "law", "t-grid", "tol", "delta-pairs", "exact")
    sp = sub.add_parser("ratefn", help="Lambda_gamma, its conjugate, the MDP rate, finite-t CGF")
    common(sp, "gamma", "law", "t", "lambda-grid", "x-grid", "tol")
    sp.add_argument("--emit", choices=EMITS, default=S)
    sp = sub.add_parser("simulate", help="replicated simulation of R_n / R*_t")
    common(sp, "law", "n", "t", "replicas", "seed", "tv-budget")
    sp.add_argument("--method", choices=METHODS, default=S)
    sp = sub.add_parser("verify", help="one verification check")
    common(sp, "law", "n", "t", "t-grid", "n-grid", "lambda-grid", "x-grid", "eps-grid",
           "replicas", "seed", "tv-budget", "b", "tol")
    sp.add_argument("--check", choices=CHECKS, default=S, required=False)
    sp = sub.add_parser("report-all", help="the whole acceptance suite, one JSON verdict")
    common(sp, "seed")
    return p


_VALUE_FLAGS = {"--t-grid", "--n-grid", "--lambda-grid", "--x-grid", "--eps-grid", "--t", "--n", "--gamma"}


def _glue_negative_values(argv):
    # argparse takes "-2:1:0.1" for an option; attach such values to their flag
    out, i = [], 0
    argv = list(argv)
    while i < len(argv):
        a = argv[i]
        nxt = argv[i + 1] if i + 1 < len(argv) else None
        if a in _VALUE_FLAGS and nxt and len(nxt) > 1 and nxt[0] == "-" and (nxt[1].isdigit() or nxt[1] == "."):
            out.append(f"{a}={nxt}")
            i += 2
        else:
            out.append(a)
            i += 1
    return out


def parse_args(argv) -> RunConfig:
    ns = vars(_build_parser().parse_args(_glue_negative_values(argv)))
    sub = ns.pop("subcommand")
    values = {}
    cfg_path = ns.pop("config", None)
    if cfg_path is not None:
        try:
            with open(cfg_path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise _IOFailure(f"cannot read config {cfg_path!r}: {exc}") from None
        values = _parse_config_text(text)
        if values.get("subcommand", sub) != sub:
            raise UsageError(f"config is for {values['subcommand']!r}, not {sub!r}")
    for key, raw in ns.items():
        key = key.replace("-", "_")
        values[key] = _convert(key, raw) if isinstance(raw, str) and _KIND[key] != "str" else raw
    values["subcommand"] = sub
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


class _IOFailure(Exception):
    pass


def _need(cfg, *names):
    for name in names:
        if getattr(cfg, name) is None:
            raise UsageError(f"{cfg.subcommand}: --{name.replace('_', '-')} is required")


def validate(cfg: RunConfig) -> None:
    if cfg.subcommand not in SUBCOMMANDS:
        raise UsageError(f"unknown subcommand {cfg.subcommand!r}")
    if cfg.format not in FORMATS:
        raise UsageError(f"format must be one of {FORMATS}")
    if cfg.law is not None:
        try:
            parse_law(cfg.law)
        except LawParameterError as exc:
            raise UsageError(str(exc)) from None
    if cfg.gamma is not None and not (0.0 < cfg.gamma < 1.0 or cfg.gamma == 1.0):
        raise UsageError(f"--gamma must lie in the open interval (0,1), or equal 1 for the "
                         f"one-regular closed forms; got {cfg.gamma!r}")
    if not (0 <= cfg.seed < 2**64):
        raise UsageError("--seed must be a 64-bit unsigned integer")
    if cfg.replicas < 1:
        raise UsageError("--replicas must be >= 1")
    if not (0 < cfg.tv_budget <= 1e-3):
        raise UsageError("--tv-budget must lie in (0, 1e-3]")
    if not cfg.tol > 0:
        raise UsageError("--tol must be positive")
    if cfg.t is not None and not (cfg.t > 0 and math.isfinite(cfg.t)):
        raise UsageError("--t must be positive and finite")
    if cfg.n is not None and cfg.n < 1:
        raise UsageError("--n must be >= 1")
    sc = cfg.subcommand
    if sc == "moments":
        _need(cfg, "law", "t_grid")
        if any(t < 0 for t in cfg.t_grid):
            raise UsageError("--t-grid values must be >= 0")
    elif sc == "ratefn":
        if cfg.emit not in EMITS:
            raise UsageError(f"--emit must be one of {EMITS}")
        if cfg.emit == "finite-t":
            _need(cfg, "law", "t", "lambda_grid")
        else:
            _need(cfg, "gamma")
            _need(cfg, "x_grid" if cfg.emit in ("conjugate", "mdp") else "lambda_grid")
    elif sc == "simulate":
        if cfg.method not in METHODS:
            raise UsageError(f"--method must be one of {METHODS}")
        _need(cfg, "law")
        if cfg.method == "direct":
            _need(cfg, "n")
        else:
            _need(cfg, "t")
            if cfg.method == "coupled" and cfg.t < 1:
                raise UsageError("coupled simulation needs --t >= 1")
    elif sc == "verify":
        _need(cfg, "check", "law")
        if cfg.check not in CHECKS:
            raise UsageError(f"--check must be one of {CHECKS}")
        if cfg.check in ("clt", "mdp", "coupling"):
            _need(cfg, "t")
        if cfg.check == "brute" and not parse_law(cfg.law).kind == "finite":
            raise UsageError("the brute-force check needs a finite law")


# output ---------------------------------------------------------------------------------


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _header(cfg: RunConfig) -> dict:
    return {"version": __version__, "config_sha256": cfg.config_hash(), "seed": cfg.seed}


def render_csv(cfg: RunConfig, columns, rows) -> str:
    h = _header(cfg)
    buf = io.StringIO()
    buf.write(f"# rangerenew {h['version']} config_sha256={h['config_sha256']} seed={h['seed']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def render_json(cfg: RunConfig, payload: dict) -> str:
    from .verify import _jsonable

    doc = {"header": _header(cfg)}
    doc.update(payload)
    return json.dumps(_jsonable(doc), indent=2, allow_nan=False, ensure_ascii=False) + "\n"


def write_output(cfg: RunConfig, text: str, stdout=None) -> None:
    if cfg.out is None:
        (stdout or sys.stdout).write(text)
        return
    target = os.path.abspath(cfg.out)
    d = os.path.dirname(target)
    fd, tmp = tempfile.mkstemp(prefix=".rangerenew-", dir=d)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# subcommands --------------------------------------------------------------------------


def _moments(cfg):
    law = parse_law(cfg.law)
    rows = []
    for t in cfg.t_grid:
        r = moment_row(law, t, cfg.tol, cfg.exact, cfg.delta_pairs)
        rows.append(dict(t=t, mu=r.mu.value, mu_err=r.mu.abs_error, sigma_sq=r.sigma_sq.value,
                         sigma_sq_err=r.sigma_sq.abs_error, mu_dot=r.mu_dot.value, mu_ddot=r.mu_ddot.value,
                         exact_mean=r.exact_mean_Rn.value if r.exact_mean_Rn else None,
                         exact_var=r.exact_var_Rn.value if r.exact_var_Rn else None,
                         asym_mu=r.asym_mu, asym_sigma_sq=r.asym_sigma_sq))
    return MOMENT_COLUMNS, rows, None, 0


def _ratefn(cfg):
    from .ratefn import finite_t_cgf, lambda_gamma, legendre_transform, mdp_rate

    rows = []
    if cfg.emit == "lambda":
        for lam in cfg.lambda_grid:
            s = lambda_gamma(cfg.gamma, lam, min(cfg.tol, 1e-10))
            rows.append(dict(gamma=cfg.gamma, lambda_or_x=lam, value=s.value, method=s.method,
                             est_error=s.est_error))
    elif cfg.emit == "conjugate":
        for x in cfg.x_grid:
            if not x > -1:
                rows.append(dict(gamma=cfg.gamma, lambda_or_x=x, value=math.inf, method="domain",
                                 est_error=0.0))
                continue
            c = legendre_transform(cfg.gamma, x)
            rows.append(dict(gamma=cfg.gamma, lambda_or_x=x, value=c.value,
                             method="legendre" if c.converged else "legendre_unconverged",
                             est_error=None))
    elif cfg.emit == "mdp":
        for x in cfg.x_grid:
            rows.append(dict(gamma=cfg.gamma, lambda_or_x=x, value=mdp_rate(cfg.gamma, x),
                             method="closed_form", est_error=0.0))
    else:
        law = parse_law(cfg.law)
        prof = regular_profile(law)
        g = prof.gamma if prof is not None else None
        for lam in cfg.lambda_grid:
            rows.append(dict(gamma=g, lambda_or_x=lam, value=finite_t_cgf(law, cfg.t, lam, cfg.tol),
                             method="finite_t", est_error=cfg.tol))
    return RATEFN_COLUMNS, rows, None, 0


def _simulate(cfg):
    from .montecarlo import simulate_coupled, simulate_direct, simulate_poissonized, summarize

    law = parse_law(cfg.law)
    if cfg.method == "direct":
        batch = simulate_direct(law, cfg.n, cfg.replicas, cfg.seed)
    elif cfg.method == "poissonized":
        batch = simulate_poissonized(law, cfg.t, cfg.replicas, cfg.seed, cfg.tv_budget)
    else:
        batch = simulate_coupled(law, cfg.t, cfg.replicas, cfg.seed)
    if cfg.format == "json":
        payload = dict(law=batch.law_spec, method=batch.method, n_or_t=batch.n_or_t, replicas=batch.replicas,
                       seed=batch.master_seed, head_cutoff=batch.head_cutoff, tv_budget=batch.tv_budget,
                       tv_bound=batch.tv_bound, tail_lambda=batch.tail_lambda)
        cols = {"value": 0} if batch.values.ndim == 1 else {"value": 0, "value_star": 1}
        for name, j in cols.items():
            if batch.replicas >= 2:
                s = summarize(batch, column=j)
                payload[name] = dict(mean=s.mean, variance=s.variance,
                                     quantiles={str(q): v for q, v in s.quantiles.items()})
            else:
                payload[name] = dict(value=int(np.atleast_2d(batch.values.T)[j][0]))
        return None, None, payload, 0
    if batch.values.ndim == 1:
        rows = [dict(replica=i, value=int(v)) for i, v in enumerate(batch.values)]
        return ("replica", "value"), rows, None, 0
    rows = [dict(replica=i, value=int(a), value_star=int(b)) for i, (a, b) in enumerate(batch.values)]
    return ("replica", "value", "value_star"), rows, None, 0


def _verify(cfg):
    from . import verify as V

    law = parse_law(cfg.law)
    c = cfg.check
    if c == "brute":
        rep = V.brute_force_report(law, cfg.n_grid or ([cfg.n] if cfg.n else list(range(1, 7))))
    elif c == "clt":
        rep = V.clt_report(law, cfg.t, cfg.replicas, cfg.seed, cfg.tv_budget)
    elif c == "mean-bounds":
        rep = V.mean_bounds_report(law, cfg.n_grid or [10, 100, 1000], cfg.tol)
    elif c == "var-ratio":
        rep = V.var_ratio_report(law, cfg.n_grid or [10**2, 10**3, 10**4, 10**5])
    elif c == "cgf":
        lams = cfg.lambda_grid or parse_grid("-2:1:0.1")
        rep = V.cgf_convergence_report(law, lams, cfg.t_grid or [1e4, 1e6, 1e8], cfg.tol)
    elif c == "mdp":
        rep = V.mdp_tail_report(law, cfg.t, cfg.x_grid or [0.5], cfg.replicas, cfg.seed, cfg.b, cfg.tv_budget)
    else:
        rep = V.coupling_report(law, cfg.t, cfg.replicas, cfg.seed, cfg.eps_grid or [0.25, 0.5, 1.0, 2.0])
    code = 1 if (rep.gating and not rep.passed) else 0
    if cfg.format == "json":
        return None, None, dict(report=rep.to_dict()), code
    cols = []
    for r in rep.rows:
        cols += [k for k in r if k not in cols]
    return cols, rep.rows, None, code


def _report_all(cfg):
    from .acceptance import run_all

    results = run_all(seed=cfg.seed, progress=lambda r: print(r.line(), file=sys.stderr))
    gating_ok = all(r.passed for r in results if r.gating)
    payload = dict(verdict="pass" if gating_ok else "fail",
                   all_passed=all(r.passed for r in results),
                   criteria=[r.to_dict() for r in results])
    return None, None, payload, 0 if gating_ok else 1


HANDLERS = {"moments": _moments, "ratefn": _ratefn, "simulate": _simulate, "verify": _verify,
            "report-all": _report_all}


def run(cfg: RunConfig, stdout=None) -> int:
    columns, rows, payload, code = HANDLERS[cfg.subcommand](cfg)
    if payload is None and cfg.format == "json":
        payload = dict(columns=list(columns), rows=rows)
    text = render_json(cfg, payload) if payload is not None else render_csv(cfg, columns, rows)
    try:
        write_output(cfg, text, stdout)
    except OSError as exc:
        print(f"rangerenew: cannot write output: {exc}", file=sys.stderr)
        return 3
    return code


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_args(argv)
    except UsageError as exc:
        print(f"rangerenew: {exc}", file=sys.stderr)
        return 2
    except _IOFailure as exc:
        print(f"rangerenew: {exc}", file=sys.stderr)
        return 3
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        from .montecarlo import worker_count

        worker_count()
    except ValueError as exc:
        print(f"rangerenew: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
