"""Command-line front end: plot-ready CSV/JSON from the solvers.

Exit codes: 0 success, 2 argument/validation problems, 3 numerical failure.
All numbers are printed in scientific notation with 12 significant digits so
exponentially small boundary values survive a round-trip through the file;
a log_alpha column is emitted alongside for the regimes where even that
underflows.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from math import exp, log

import numpy as np

from .asymptotics import (
    alpha_composite,
    alpha_perpetual_asym,
    alpha_regime_i,
    f_tail_neg,
    f_tail_pos,
    log_alpha_regime_iii,
    log_alpha_regime_iv,
    log_alpha_regime_v,
)
from .ie import (
    boundary_from_csv,
    perpetual_root,
    solve_boundary,
    solve_F,
)
from .model import BoundaryCurve, ModelParams, make_params
from .pde import PdeGridSpec, extract_boundary, solve_pde
from .pricing import LN2, perpetual_price, price

_FMT = "{:.11e}"


def _fmt(x: float) -> str:
    return _FMT.format(float(x))


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: ModelParams
    t_max: float
    nodes: int
    method: str
    lambda_min: float
    lambda_max: float
    s_values: tuple[float, ...]
    t_values: tuple[float, ...]
    boundary_file: str | None
    out: str | None
    fmt: str

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "RunConfig":
        has_rho = ns.rho is not None
        has_rates = ns.rate is not None or ns.sigma is not None
        if has_rho == has_rates:
            raise ConfigError("give exactly one of --rho or (--rate and --sigma)")
        if has_rates and (ns.rate is None or ns.sigma is None):
            raise ConfigError("--rate and --sigma must be given together")
        try:
            if has_rho:
                params = ModelParams.from_rho(ns.strike, ns.rho)
            else:
                params = make_params(ns.strike, ns.rate, ns.sigma)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if ns.t_max is not None and ns.t_max <= 0.0:
            raise ConfigError(f"--t-max must be positive, got {ns.t_max}")
        if ns.nodes is not None and ns.nodes < 2:
            raise ConfigError(f"--nodes must be at least 2, got {ns.nodes}")
        return cls(
            command=ns.command,
            params=params,
            t_max=ns.t_max if ns.t_max is not None else 1.0,
            nodes=ns.nodes if ns.nodes is not None else 64,
            method=getattr(ns, "method", "ie"),
            lambda_min=getattr(ns, "lambda_min", -30.0),
            lambda_max=getattr(ns, "lambda_max", 3.0),
            s_values=_parse_floats(getattr(ns, "s", None)),
            t_values=_parse_floats(getattr(ns, "t", None)),
            boundary_file=getattr(ns, "boundary_file", None),
            out=ns.out,
            fmt=ns.format,
        )


def _parse_floats(text: str | None) -> tuple[float, ...]:
    if not text:
        return ()
    try:
        return tuple(float(c) for c in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad numeric list {text!r}") from exc


def _emit(cfg: RunConfig, payload: str) -> None:
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def _time_grid(t_max: float, n: int) -> np.ndarray:
    return t_max * (np.arange(n) / (n - 1)) ** 2


def _boundary_rows(cfg: RunConfig) -> tuple[list[dict], dict]:
    params = cfg.params
    grid = _time_grid(cfg.t_max, cfg.nodes)
    rows: list[dict] = []
    meta: dict = {"method": cfg.method}
    if cfg.method == "ie":
        curve, report = solve_boundary(params, cfg.t_max, cfg.nodes)
        if report.status == "failed":
            raise RuntimeError(f"boundary solve failed: residual {report.residual_norm:.3e}")
        meta["report"] = report
        for t, a in zip(curve.nodes[: cfg.nodes], curve.values[: cfg.nodes]):
            rows.append({"t": t, "alpha": a, "log_alpha": log(a)})
    elif cfg.method == "pde":
        spec = PdeGridSpec(
            s_max=4.0 * params.strike,
            m=1200,
            dt=min(1e-3, cfg.t_max / 400.0),
            n_store=max(2 * cfg.nodes, 201),
        )
        curve = extract_boundary(solve_pde(params, cfg.t_max, spec))
        alphas = curve.eval(grid)
        for t, a in zip(grid, alphas):
            rows.append({"t": t, "alpha": a, "log_alpha": log(a)})
    elif cfg.method == "asymptotic":
        if not params.small_rho:
            raise ConfigError("asymptotic method needs rho < 1")
        rows.append({"t": 0.0, "alpha": params.strike, "log_alpha": log(params.strike), "regime": "I"})
        for t in grid[1:]:
            res = alpha_composite(t, params)
            rows.append(
                {"t": t, "alpha": res.alpha, "log_alpha": res.log_alpha, "regime": res.regime.value}
            )
    else:
        raise ConfigError(f"unknown method {cfg.method!r}")
    return rows, meta


def cmd_boundary(cfg: RunConfig) -> int:
    rows, meta = _boundary_rows(cfg)
    if cfg.fmt == "json":
        payload = {
            "method": cfg.method,
            "t": [r["t"] for r in rows],
            "alpha": [r["alpha"] for r in rows],
            "log_alpha": [r["log_alpha"] for r in rows],
        }
        if cfg.method == "asymptotic":
            payload["regime"] = [r["regime"] for r in rows]
        report = meta.get("report")
        if report is not None:
            payload["report"] = {
                "iterations": report.iterations,
                "residual_norm": report.residual_norm,
                "status": report.status,
            }
        _emit(cfg, json.dumps(payload, indent=2) + "\n")
        return 0
    with_regime = cfg.method == "asymptotic"
    header = "t,alpha,log_alpha,method" + (",regime" if with_regime else "")
    lines = [header]
    for r in rows:
        line = f"{_fmt(r['t'])},{_fmt(r['alpha'])},{_fmt(r['log_alpha'])},{cfg.method}"
        if with_regime:
            line += f",{r['regime']}"
        lines.append(line)
    _emit(cfg, "\n".join(lines) + "\n")
    return 0


def cmd_flambda(cfg: RunConfig) -> int:
    if not cfg.lambda_min < cfg.lambda_max:
        raise ConfigError(f"empty Lambda range [{cfg.lambda_min}, {cfg.lambda_max}]")
    k = cfg.params.strike
    curve, report = solve_F(k, (cfg.lambda_min, cfg.lambda_max), cfg.nodes)
    if report.status == "failed":
        raise RuntimeError(f"F solve failed: residual {report.residual_norm:.3e}")
    lines = ["Lambda,F,tail_neg,tail_pos"]
    for lam, f in zip(curve.nodes, curve.values):
        tn = f_tail_neg(lam, k) if lam < 0.0 else float("nan")
        tp = f_tail_pos(lam, k) if lam > 0.0 else float("nan")
        lines.append(f"{_fmt(lam)},{_fmt(f)},{_fmt(tn)},{_fmt(tp)}")
    _emit(cfg, "\n".join(lines) + "\n")
    return 0


def _pricing_curve(cfg: RunConfig) -> BoundaryCurve:
    params = cfg.params
    if cfg.boundary_file:
        with open(cfg.boundary_file) as fh:
            curve = boundary_from_csv(fh.read())
        return curve.with_tail(min(perpetual_root(params), float(curve.values[-1])))
    if not cfg.t_values:
        raise ConfigError("--t is required for pricing")
    s_hi = max(cfg.s_values) if cfg.s_values else 4.0 * params.strike
    # the inversion samples theta down to ~log2/V, whose clock runs for
    # log1p(rho V / log2)/rho past the valuation time
    cover = max(cfg.t_values) + log(1.0 + params.rho * s_hi / LN2) / params.rho
    t_solve = max(cfg.t_max, cover / 1.3)
    curve, report = solve_boundary(params, t_solve, cfg.nodes, horizon_factor=1.3)
    if report.status == "failed":
        raise RuntimeError(f"boundary solve failed: residual {report.residual_norm:.3e}")
    return curve.with_tail(min(perpetual_root(params), float(curve.values[-1])))


def cmd_price(cfg: RunConfig) -> int:
    if not cfg.s_values or not cfg.t_values:
        raise ConfigError("--s and --t are required for pricing")
    if any(s < 0 for s in cfg.s_values) or any(t <= 0 for t in cfg.t_values):
        raise ConfigError("prices need s >= 0 and t > 0")
    params = cfg.params
    curve = _pricing_curve(cfg)
    lines = ["S,t,P,region"]
    for t in cfg.t_values:
        alpha_t = curve.eval(t)
        for s in cfg.s_values:
            region = "exercise" if s <= alpha_t else "hold"
            p = price(s, t, curve, params)
            lines.append(f"{_fmt(s)},{_fmt(t)},{_fmt(p)},{region}")
    _emit(cfg, "\n".join(lines) + "\n")
    return 0


def cmd_perpetual(cfg: RunConfig) -> int:
    params = cfg.params
    if not params.small_rho:
        raise ConfigError("perpetual asymptote needs rho < 1")
    exact = perpetual_root(params)
    asym = alpha_perpetual_asym(params)
    payload = {
        "alpha_inf_exact": exact,
        "alpha_inf_asym": asym,
        "ratio": exact / asym,
        "price_at_strike": perpetual_price(params.strike, params, alpha_inf=exact),
    }
    _emit(cfg, json.dumps(payload, indent=2) + "\n")
    return 0


def _matching_summary(params: ModelParams) -> dict:
    """Overlap checks between adjacent regime formulas (see README for bands)."""
    k = params.strike
    rho_m = params.rho if params.rho < exp(-1.0) else 0.05
    pm = ModelParams.from_rho(k, rho_m)

    out: dict = {}
    i_ii = {}
    for lam in (8.0, 10.0, 12.0):
        big_l = -lam**0.5
        omega = k + big_l / lam
        a_i = alpha_regime_i(omega, lam, k)
        a_ii = f_tail_neg(big_l, k) / lam**2
        i_ii[f"lam={lam:g}"] = abs(a_i - a_ii) / a_ii
    out["matching_i_ii_vs_tail"] = i_ii

    iii_iv = {}
    lam10 = ModelParams.from_rho(k, exp(-10.0))
    for t in (1.0, 2.0, 3.0):
        gap = abs(log_alpha_regime_iii(10.0 * t, lam10) - log_alpha_regime_iv(t, lam10))
        iii_iv[f"t={t:g}"] = {"log_gap": gap, "bound": 0.5 * exp(-k / t)}
    out["matching_iii_iv"] = iii_iv

    v = 0.1
    log_ratio = log_alpha_regime_v(v, pm) - log_alpha_regime_iv(v / pm.rho, pm)
    out["matching_iv_v"] = {
        "v": v,
        "rho": pm.rho,
        "ratio": exp(log_ratio),
        "log_ratio": log_ratio,
        "band": 0.45 * v + pm.rho * k / (2.0 * v * v),
    }
    return out


def cmd_compare(cfg: RunConfig) -> int:
    if cfg.nodes < 2:
        raise ConfigError("compare needs at least 2 time nodes")
    params = cfg.params
    grid = _time_grid(cfg.t_max, cfg.nodes)[1:]

    ie_curve, report = solve_boundary(params, cfg.t_max, cfg.nodes)
    if report.status == "failed":
        raise RuntimeError(f"boundary solve failed: residual {report.residual_norm:.3e}")
    spec = PdeGridSpec(
        s_max=4.0 * params.strike,
        m=1200,
        dt=min(1e-3, cfg.t_max / 400.0),
        n_store=max(2 * cfg.nodes, 201),
    )
    pde_curve = extract_boundary(solve_pde(params, cfg.t_max, spec))

    a_ie = ie_curve.eval(grid)
    a_pde = pde_curve.eval(grid)
    use_asym = params.rho < exp(-1.0)
    lines = ["t,alpha_ie,alpha_pde,alpha_asym,rel_diff_ie_pde,rel_diff_ie_asym"]
    sup_rel = 0.0
    for i, t in enumerate(grid):
        asym = alpha_composite(t, params).alpha if use_asym else float("nan")
        rd_pde = abs(a_ie[i] - a_pde[i]) / a_ie[i]
        rd_asym = abs(a_ie[i] - asym) / a_ie[i] if use_asym else float("nan")
        if t >= 0.1 * cfg.t_max:
            sup_rel = max(sup_rel, rd_pde)
        lines.append(
            f"{_fmt(t)},{_fmt(a_ie[i])},{_fmt(a_pde[i])},{_fmt(asym)},"
            f"{_fmt(rd_pde)},{_fmt(rd_asym)}"
        )
    _emit(cfg, "\n".join(lines) + "\n")

    summary = {"ie_vs_pde_sup_rel_diff": sup_rel, **_matching_summary(params)}
    sys.stdout.write(json.dumps(summary, indent=2) + "\n")
    return 0


_COMMANDS = {
    "boundary": cmd_boundary,
    "flambda": cmd_flambda,
    "price": cmd_price,
    "perpetual": cmd_perpetual,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbcev",
        description="Early-exercise boundary laboratory for American puts under square-root CEV",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("boundary", "solve or evaluate the exercise boundary"),
        ("flambda", "solve the strike-window scaling function"),
        ("price", "price the option from the transform representation"),
        ("perpetual", "perpetual boundary and price"),
        ("compare", "cross-method boundary comparison and matching checks"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--strike", type=float, required=True)
        p.add_argument("--rho", type=float, default=None)
        p.add_argument("--rate", type=float, default=None)
        p.add_argument("--sigma", type=float, default=None)
        p.add_argument("--t-max", dest="t_max", type=float, default=None)
        p.add_argument("--nodes", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        if name == "boundary":
            p.add_argument("--method", choices=("ie", "pde", "asymptotic"), default="ie")
        if name == "flambda":
            p.add_argument("--lambda-min", dest="lambda_min", type=float, default=-30.0)
            p.add_argument("--lambda-max", dest="lambda_max", type=float, default=3.0)
        if name == "price":
            p.add_argument("--s", default=None, help="comma-separated asset prices")
            p.add_argument("--t", default=None, help="comma-separated times")
            p.add_argument("--boundary-file", dest="boundary_file", default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = RunConfig.from_args(ns)
        return _COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # solver/quadrature failures
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
