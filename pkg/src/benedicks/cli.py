"""Command line: ``benedicks <command> [<sub>] CONFIG [--out DIR]``.

Exit codes: 0 success or pass, 1 check failed, 2 inconclusive (or not
applicable), 3 input error.  Every command writes its artifacts and a
``manifest.json`` into the output directory.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import studies as S
from . import verify as V
from .asymptotics import Dimension, FitError, classify_cone_dimension, fit_rate
from .config import ConfigError, ExperimentConfig, load_config
from .estimators import KernelEstimate, SurvivalCurve
from .geometry import DomainError, validate_domain
from .io import write_csv, write_json, write_manifest
from .pde import GridError, KernelSetupError, write_field_binary
from .pde.grid import Field
from .pde.harmonic import HarmonicError, harmonic_profile
from .pde.heat import SolverError, kernel_field, survival_field

log = logging.getLogger("benedicks")

EXIT_OK, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_INPUT = 0, 1, 2, 3
CHECKS = ("lemma3", "lemmaA", "reflection", "duhamel", "time_ratio", "thm_limits")


class Run:
    """Output directory bookkeeping for one command."""

    def __init__(self, cfg: ExperimentConfig, command: str, out: str | None):
        self.cfg = cfg
        self.command = command
        self.out = Path(out or cfg.output)
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts: list[Path] = []

    def csv(self, name, header, rows):
        self.artifacts.append(write_csv(self.out / name, header, rows))

    def json(self, name, obj):
        self.artifacts.append(write_json(self.out / name, obj))

    def binary(self, name, fld: Field):
        path = self.out / name
        write_field_binary(fld, path)
        self.artifacts.append(path)

    def close(self):
        write_manifest(self.out, self.command, self.cfg.hash(), self.cfg.mc.get("seed"), self.artifacts)


def _pde(cfg) -> S.PDESettings:
    return S.PDESettings.from_dict(cfg.pde)


def _tname(t: float) -> str:
    return f"{t:g}".replace(".", "p")


# --------------------------------------------------------------------------
# commands

def cmd_domain_validate(cfg, run: Run, args) -> int:
    rep = validate_domain(cfg.domain())
    run.json("validation.json", rep.to_dict())
    if not rep.valid:
        for f in rep.failures():
            log.error(f)
        return EXIT_INPUT
    return EXIT_OK


def cmd_mc_survive(cfg, run: Run, args) -> int:
    dom = cfg.domain()
    sim = cfg.sim_config()
    summary = []
    for k, x in enumerate(cfg.mc["x"]):
        curve = S.mc_survival(dom, x, sim, workers=args.workers)
        name = f"survival_mc_{k}.csv"
        curve.to_csv(run.out / name)
        run.artifacts.append(run.out / name)
        summary.append({"x": x, "file": name, "config_hash": curve.config_hash})
    run.json("survival_mc.json", summary)
    return EXIT_OK


def cmd_mc_kernel(cfg, run: Run, args) -> int:
    dom = cfg.domain()
    sim = cfg.sim_config()
    if not cfg.mc["y"]:
        raise ConfigError("mc kernel needs [mc] y points")
    rows = []
    for x in cfg.mc["x"]:
        for y in cfg.mc["y"]:
            for est in S.mc_kernel(dom, x, y, sim.checkpoints, sim, h_f=cfg.mc["h_f"], workers=args.workers):
                rows.append(est.row())
    run.csv("kernel_mc.csv", KernelEstimate.header(dom.d), rows)
    return EXIT_OK


def cmd_pde_kernel(cfg, run: Run, args) -> int:
    dom = cfg.domain()
    s = _pde(cfg)
    grid = s.grid(dom)
    ts = [float(t) for t in cfg.pde["t_grid"]]
    ys = cfg.pde["y"] or cfg.pde["x"]
    rows = []
    for j, y in enumerate(ys):
        res = kernel_field(grid, y, ts, s.dt, t0=s.t0, compact=s.compact, **s.step_kw())
        for t, fld in zip(ts, res.snapshots):
            for x, v in zip(cfg.pde["x"], fld.at(cfg.pde["x"])):
                rows.append((t, *x, *y, float(v), 0.0))
        run.binary(f"kernel_field_{j}_t{_tname(ts[-1])}.bin", res.snapshots[-1])
    run.csv("kernel_pde.csv", KernelEstimate.header(2), rows)
    run.json("grid.json", {"shape": list(grid.shape), "snap": grid.snap})
    return EXIT_OK


def cmd_pde_survive(cfg, run: Run, args) -> int:
    dom = cfg.domain()
    s = _pde(cfg)
    grid = s.grid(dom)
    ts = [float(t) for t in cfg.pde["t_grid"]]
    res = survival_field(grid, ts, s.dt, **s.step_kw())
    for k, x in enumerate(cfg.pde["x"]):
        vals = [float(f.at([x])[0]) for f in res.snapshots]
        SurvivalCurve.from_values(ts, vals).to_csv(run.out / f"survival_pde_{k}.csv")
        run.artifacts.append(run.out / f"survival_pde_{k}.csv")
    run.binary(f"survival_field_t{_tname(ts[-1])}.bin", res.snapshots[-1])
    run.json("grid.json", {"shape": list(grid.shape), "snap": grid.snap})
    return EXIT_OK


def cmd_pde_harmonic(cfg, run: Run, args) -> int:
    grid = _pde(cfg).grid(cfg.domain())
    hp = harmonic_profile(grid, rtol=float(cfg.pde["rtol"]))
    pts = cfg.pde["x"]
    run.json("harmonic.json", {
        **hp.to_dict(),
        "points": pts,
        "v_s": hp.v_s.at(pts), "u1": hp.u1.at(pts), "u2": hp.u2.at(pts),
    })
    for name in ("v_s", "u1", "u2"):
        run.binary(f"{name}.bin", getattr(hp, name))
    return EXIT_OK


def _survival_curve(cfg, args) -> SurvivalCurve:
    x = (cfg.pde["x"] if cfg.asymptotics["source"] == "pde" else cfg.mc["x"])[0]
    if cfg.asymptotics["source"] == "pde":
        s = _pde(cfg)
        return S.pde_survival_curves(s.grid(cfg.domain()), [x], cfg.pde["t_grid"], s)[0]
    return S.mc_survival(cfg.domain(), x, cfg.sim_config(), workers=args.workers)


def _classify(cfg, curve):
    a = cfg.asymptotics
    return classify_cone_dimension(
        curve, slope_tol=float(a["slope_tol"]), slope_min=float(a["slope_min"]),
        mixing_time=float(a["mixing_time"]), min_decades=float(a["min_decades"]),
    )


def cmd_classify(cfg, run: Run, args) -> int:
    curve = _survival_curve(cfg, args)
    run.csv("survival.csv", ["t", "estimate", "stderr", "n"], curve.rows())
    rep = _classify(cfg, curve)
    run.json("cone.json", rep.to_dict())
    print(f"dimension: {rep.dimension.value} (final-decade slope {rep.final_slope:+.4f})")
    return EXIT_INCONCLUSIVE if rep.dimension is Dimension.INCONCLUSIVE else EXIT_OK


def cmd_fit(cfg, run: Run, args) -> int:
    a = cfg.asymptotics
    if a["series"] == "survival":
        curve = _survival_curve(cfg, args)
        t, v, se = curve.t, curve.estimate, curve.stderr
    elif a["series"] == "diagonal_kernel":
        s = _pde(cfg)
        x = cfg.pde["x"][0]
        t = np.asarray(cfg.pde["t_grid"], dtype=float)
        v = S.pde_kernel(s.grid(cfg.domain()), x, [x], t, s)[:, 0]
        se = np.zeros_like(v)
    else:
        raise ConfigError(f"asymptotics series must be survival or diagonal_kernel, got {a['series']!r}")
    run.csv("series.csv", ["t", "value", "stderr"], zip(t, v, se))
    try:
        fit = fit_rate((t, v, se), window=a["window"], model=a["model"], n_boot=int(a["n_boot"]), seed=int(a["seed"]))
    except FitError as e:
        log.warning(str(e))
        run.json("fit.json", {"error": str(e)})
        return EXIT_INCONCLUSIVE
    run.json("fit.json", fit.to_dict())
    print(f"model {fit.model}: C = {fit.C:.6g}, p = {fit.p:.4f}" + (f", q = {fit.q:.4f}" if fit.q is not None else ""))
    return EXIT_OK


def _verify_report(check: str, cfg, args) -> V.CheckReport:
    dom = cfg.domain()
    vcfg = cfg.verify
    tol = dict(vcfg.get("tolerances") or {})
    ts = [float(t) for t in vcfg["t"]]
    label = dom.label
    source = vcfg.get("source", "pde")
    cfg = _with_pde(cfg, cfg.pde_for("verify"))
    if check == "lemma3":
        if source == "analytic":
            if not dom.is_two_halfspace:
                raise ConfigError("closed forms exist only for the two-half-space domain")
            xs = [p[-1] for p in cfg.pde["x"]]
            ys = [p[-1] for p in (cfg.pde["y"] or cfg.pde["x"])]
            triples = S.lemma3_triples_closed_form(dom.d, xs, ys, ts)
        else:
            s = _pde(cfg)
            triples = S.lemma3_triples_pde(s.grid(dom), cfg.pde["y"] or cfg.pde["x"], cfg.pde["x"], ts, s)
        return V.check_lemma3(triples, dom.d, label, solver_tol=float(tol.get("lemma3", 0.0)))
    if check == "lemmaA":
        s = _pde(cfg)
        grid = s.grid(dom)
        reports = []
        for y in cfg.pde["y"] or cfg.pde["x"]:
            snaps = kernel_field(grid, y, ts, s.dt, t0=s.t0, compact=s.compact, **s.step_kw()).snapshots
            for frame in S.axis_frames(y):
                for t, fld in zip(ts, snaps):
                    reports.append(V.check_lemmaA(fld.at, frame, S.lemmaA_points(frame), t, label, float(tol.get("lemmaA", 0.01))))
        return _worst(reports)
    if check == "reflection":
        s = _pde(cfg)
        pairs = list(zip(cfg.pde["x"], cfg.pde["y"]))
        rows = S.reflection_rows_pde(s.grid(dom), pairs, ts, s)
        return V.check_reflection(rows, label, float(tol.get("reflection", 0.02)))
    if check == "duhamel":
        s = _pde(cfg)
        pairs = list(zip(cfg.pde["x"], cfg.pde["y"]))
        if source == "analytic" and dom.is_two_halfspace:
            rows = S.duhamel_rows_closed_form(pairs, ts)
        else:
            rows = S.duhamel_rows_pde(s.grid(dom), pairs, ts, s)
        return V.check_duhamel(rows, label, float(tol.get("duhamel", 0.05)))
    if check == "time_ratio":
        curve = _survival_curve(cfg, args)
        return V.check_time_ratio(curve, float(vcfg["s"]), label, float(tol.get("time_ratio", 0.01)))
    if check == "thm_limits":
        curve = _survival_curve(cfg, args)
        cone = _classify(cfg, curve)
        if cone.dimension is not Dimension.TWO:
            return V.not_applicable("thm_limits", label, f"classified {cone.dimension.value}")
        s = _pde(cfg)
        grid = s.grid(dom)
        x = (cfg.pde["x"] if cfg.asymptotics["source"] == "pde" else cfg.mc["x"])[0]
        hv = S.harmonic_values(grid, [x])
        row = {"x": x, "v_s": float(hv["v_s"][0]), "t": curve.t, "P": curve.estimate, "se": curve.stderr}
        return V.check_thm_limits([row], dimension="Two", d=dom.d, domain=label, tol=float(tol.get("thm_limits", 0.05)))
    raise ConfigError(f"unknown check {check!r}; choose from {', '.join(CHECKS)}")


def _with_pde(cfg, pde: dict) -> ExperimentConfig:
    return ExperimentConfig(cfg.domain_spec, cfg.mc, pde, cfg.asymptotics, cfg.verify, cfg.output, cfg.source)


def _worst(reports: list[V.CheckReport]) -> V.CheckReport:
    inv = [item for r in reports for item in r.inventory]
    failed = [r for r in reports if not r.passed]
    base = max(failed or reports, key=lambda r: r.max_violation - r.tolerance - r.stat_margin)
    out = V.CheckReport(base.check_name, base.domain, inv, base.max_violation, base.tolerance,
                        base.stat_margin, not failed, base.sigma_multiple,
                        details={"reports": len(reports), "worst": base.details})
    return out


def cmd_verify(cfg, run: Run, args) -> int:
    rep = _verify_report(args.check, cfg, args)
    run.json(f"check_{args.check}.json", rep.to_dict())
    print(f"{rep.check_name} on {rep.domain}: {rep.status} "
          f"(max violation {rep.max_violation:.3g}, tolerance {rep.tolerance:.3g}, margin {rep.stat_margin:.3g})")
    if rep.status == "not_applicable":
        return EXIT_INCONCLUSIVE
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_study_convergence(cfg, run: Run, args) -> int:
    dxs = cfg.pde["dx_ladder"]
    t = float(cfg.pde["t_grid"][-1])
    x = cfg.pde["x"][0]
    rows = S.convergence_study(cfg.domain(), x, t, dxs, _pde(cfg))
    run.csv("convergence.csv", ["dx", "value", "diff", "order"],
            [(r["dx"], r["value"], r.get("diff", float("nan")), r.get("order", float("nan"))) for r in rows])
    return EXIT_OK


COMMANDS = {
    ("domain", "validate"): cmd_domain_validate,
    ("mc", "survive"): cmd_mc_survive,
    ("mc", "kernel"): cmd_mc_kernel,
    ("pde", "kernel"): cmd_pde_kernel,
    ("pde", "survive"): cmd_pde_survive,
    ("pde", "harmonic"): cmd_pde_harmonic,
    ("classify",): cmd_classify,
    ("fit",): cmd_fit,
    ("verify",): cmd_verify,
    ("study", "convergence"): cmd_study_convergence,
}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="benedicks", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="config file, or the name of a bundled one (e.g. slit_plane.cfg)")
        sp.add_argument("--out", help="output directory (overrides [output] dir)")
        sp.add_argument("--seed", type=int, help="override [mc] seed")
        sp.add_argument("--workers", type=int, help="parallel ensemble workers (never changes results)")

    for group, subs in (("domain", ["validate"]), ("mc", ["survive", "kernel"]),
                        ("pde", ["kernel", "survive", "harmonic"]), ("study", ["convergence"])):
        g = sub.add_parser(group).add_subparsers(dest="sub", required=True)
        for name in subs:
            common(g.add_parser(name))
    common(sub.add_parser("classify"))
    common(sub.add_parser("fit"))
    v = sub.add_parser("verify")
    v.add_argument("check", choices=CHECKS)
    common(v)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    key = (args.command, args.sub) if getattr(args, "sub", None) else (args.command,)
    command = " ".join(key) + (f" {args.check}" if args.command == "verify" else "")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.mc["seed"] = args.seed
        cfg.validate()
    except (ConfigError, DomainError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    run = Run(cfg, command, args.out)
    try:
        code = COMMANDS[key](cfg, run, args)
    except (ConfigError, DomainError, GridError, KernelSetupError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, HarmonicError) as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    run.close()
    return code


if __name__ == "__main__":
    sys.exit(main())
