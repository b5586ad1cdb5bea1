"""faultloc command line: simulate, localise, sweep.

Exit codes: 0 success, 1 a sweep leg failed for another reason, 2 bad
configuration or input, 3 numerical failure, 4 a modelling assumption was
violated.
"""
import argparse
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__, kernels
from . import io as fio
from .config import format_text, load_config, parse_text
from .errors import AssumptionViolated, ConfigInvalid, DomainViolation, GridMismatch, NumericalFailure
from .localiser import LocaliserConfig, candidate_grid, localise_many
from .network_model import FaultPhaseMask, NetworkAdmittance
from .simulator import build_scenario, run

log = logging.getLogger("faultloc")

EXIT_OK, EXIT_LEG, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ASSUMPTION = 0, 1, 2, 3, 4
OUT_ENV = "FAULTLOC_OUT"

SUMMARY_COLUMNS = ["rf", "status", "error_J", "error_Jt", "minimisers_J", "minimisers_Jt",
                   "sublevel_fraction", "theta_hat_at_truth", "theta_ok", "J_at_truth",
                   "Jt_at_truth", "flagged_candidates"]


def _overrides(args):
    ov = {}
    if getattr(args, "grid_points", None) is not None:
        ov["localiser.grid_points"] = args.grid_points
    if getattr(args, "omega_band", None) is not None:
        ov["localiser.omega_band"] = args.omega_band
    if getattr(args, "beta", None) is not None:
        ov["localiser.beta"] = args.beta
    if getattr(args, "known_impedance", None) is not None:
        ov["localiser.known_impedance"] = args.known_impedance
    for item in args.set or []:
        if "=" not in item:
            raise ConfigInvalid(item, "expected key=value")
        ov.update(parse_text(item, "--set"))
    return ov


def resolve_config(args):
    return load_config(args.config, args.profile, _overrides(args))


def out_dir(args, cfg, command):
    if args.out:
        return args.out
    root = os.environ.get(OUT_ENV) or cfg["io.out"]
    return os.path.join(root, command)


def build_network(cfg):
    sc = build_scenario(cfg)
    mask = FaultPhaseMask(tuple(sc.mask))
    return NetworkAdmittance(sc.params, cfg["scenario.line.length"], mask, cfg["localiser.delta"])


def build_grid(cfg, net):
    n = cfg["localiser.grid_points"]
    if n < 1:
        raise ConfigInvalid("localiser.grid_points", "grid is empty")
    inject = [cfg["scenario.fault.position"]] if cfg["localiser.inject_truth"] else []
    try:
        return candidate_grid(net.search_domain, n, inject)
    except DomainViolation as exc:
        raise ConfigInvalid("localiser.grid_points", str(exc)) from None


def _reference(cfg):
    if not cfg["localiser.inject_truth"]:
        return None
    return (cfg["scenario.fault.position"], cfg["scenario.fault.time"])


def _phi(cfg, rf=None):
    if not cfg["localiser.known_impedance"]:
        return None
    return cfg.localiser_rf if rf is None else rf


def _localiser_config(cfg):
    lc = LocaliserConfig.from_run_config(cfg)
    if cfg["localiser.prefix"] and cfg["localiser.prefix"] < 0:
        raise ConfigInvalid("localiser.prefix", "must be non-negative")
    return lc


def run_info(cfg):
    return {"config_hash": cfg.hash, "version": __version__, "backend": kernels.BACKEND,
            "numpy": np.__version__, "delay_bound": cfg.delay_bound,
            "delay_bound_derived": cfg.derived_delay_bound}


def cmd_simulate(args):
    cfg = resolve_config(args)
    out = out_dir(args, cfg, "simulate")
    os.makedirs(out, exist_ok=True)
    sc = build_scenario(cfg)
    log.info("simulating %.3g s with %d segments", sc.T, sc.segments)
    res = run(sc)
    h = cfg.hash
    fio.write_signals(os.path.join(out, "signals.csv"), res.record, h)
    fio.write_truth(os.path.join(out, "truth.csv"), res.truth, h)
    with open(os.path.join(out, "config.txt"), "w") as fh:
        fh.write(format_text(cfg))
    meta = dict(res.meta)
    meta.update(run_info(cfg))
    fio.write_json(os.path.join(out, "manifest.json"), meta)
    log.info("wrote %s", out)
    return EXIT_OK


def cmd_localise(args):
    cfg = resolve_config(args)
    out = out_dir(args, cfg, "localise")
    record = fio.read_signals(args.signals)
    net = build_network(cfg)
    grid = build_grid(cfg, net)
    d = net.dims
    if (record.v1.shape[1], record.i2.shape[1], record.v3.shape[1]) != (d.n1, d.n2, d.n3):
        raise ConfigInvalid(args.signals, "channel counts do not match the configured line")
    t0 = time.perf_counter()
    prof = localise_many(net, [record], [_phi(cfg)], _localiser_config(cfg), grid,
                         [_reference(cfg)], progress=_progress)[0]
    info = run_info(cfg)
    info["runtime_s"] = time.perf_counter() - t0
    info["signals"] = os.path.abspath(args.signals)
    man = fio.write_bundle(out, prof, cfg.hash, info)
    with open(os.path.join(out, "config.txt"), "w") as fh:
        fh.write(format_text(cfg))
    _report(man)
    return EXIT_OK


def _progress(done, total):
    if done == total or done % 20 == 0:
        log.info("candidates %d/%d", done, total)


def _report(man):
    print("argmin J :", " ".join(f"{x:.6g}" for x in man["minimisers_J"]) or "-")
    print("argmin J~:", " ".join(f"{x:.6g}" for x in man["minimisers_Jt"]) or "-")
    if "error_J" in man:
        print(f"error J  : {man['error_J']:.6g} m   error J~: {man['error_Jt']:.6g} m")
        print(f"sublevel fraction: {man['sublevel_fraction']:.6g}")


def _simulate_leg(task):
    cfg, rf = task
    try:
        res = run(build_scenario(cfg, R_f=rf))
        return rf, res, None
    except NumericalFailure as exc:
        return rf, None, f"numerical: {exc}"


def _localise_group(task):
    cfg, records, rfs = task
    net = build_network(cfg)
    grid = build_grid(cfg, net)
    try:
        profs = localise_many(net, records, [_phi(cfg, rf) for rf in rfs], _localiser_config(cfg),
                              grid, [_reference(cfg)] * len(records))
        return profs, None
    except NumericalFailure as exc:
        return None, f"numerical: {exc}"
    except AssumptionViolated as exc:
        return None, f"assumption: {exc}"


def _leg_dir(out, i, rf):
    return os.path.join(out, f"leg{i:02d}_rf{rf:.6g}")


def cmd_sweep(args):
    cfg = resolve_config(args)
    out = out_dir(args, cfg, "sweep")
    os.makedirs(out, exist_ok=True)
    rfs = list(cfg["sweep.rf"])
    jobs = max(1, int(args.jobs))
    build_grid(cfg, build_network(cfg))
    t0 = time.perf_counter()
    log.info("sweep: %d legs, %d job(s)", len(rfs), jobs)
    tasks = [(cfg, rf) for rf in rfs]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            sims = list(ex.map(_simulate_leg, tasks))
    else:
        sims = [_simulate_leg(t) for t in tasks]
    status = {}
    records = {}
    for i, (rf, res, err) in enumerate(sims):
        d = _leg_dir(out, i, rf)
        os.makedirs(d, exist_ok=True)
        if err:
            status[i] = err
            continue
        records[i] = res
        fio.write_json(os.path.join(d, "simulation.json"), dict(res.meta, rf=rf))
        if args.save_signals:
            fio.write_signals(os.path.join(d, "signals.csv"), res.record, cfg.hash)
            fio.write_truth(os.path.join(d, "truth.csv"), res.truth, cfg.hash)
    log.info("simulated in %.1f s", time.perf_counter() - t0)
    ok_idx = sorted(records)
    groups = [ok_idx[g::jobs] for g in range(min(jobs, len(ok_idx)))] if ok_idx else []
    ltasks = [(cfg, [records[i].record for i in g], [rfs[i] for i in g]) for g in groups]
    if jobs > 1 and len(ltasks) > 1:
        with ProcessPoolExecutor(len(ltasks)) as ex:
            lres = list(ex.map(_localise_group, ltasks))
    else:
        lres = [_localise_group(t) for t in ltasks]
    rows = []
    profiles = {}
    for g, (profs, err) in zip(groups, lres):
        for k, i in enumerate(g):
            if err:
                status[i] = err
            else:
                profiles[i] = profs[k]
    dt = cfg["scenario.sim.sample_dt"]
    t_f = cfg["scenario.fault.time"]
    for i, rf in enumerate(rfs):
        row = {"rf": rf, "status": status.get(i, "ok")}
        if i in profiles:
            prof = profiles[i]
            info = run_info(cfg)
            info["rf"] = rf
            info["simulation"] = records[i].meta
            man = fio.write_bundle(_leg_dir(out, i, rf), prof, cfg.hash, info)
            ref = prof.reference
            th = ref.get("theta_hat_at_truth", math.nan)
            row.update({
                "error_J": man.get("error_J"), "error_Jt": man.get("error_Jt"),
                "minimisers_J": man["minimisers_J"], "minimisers_Jt": man["minimisers_Jt"],
                "sublevel_fraction": man["sublevel_fraction"], "theta_hat_at_truth": th,
                "theta_ok": bool(th >= t_f - dt), "J_at_truth": ref.get("J_at_truth"),
                "Jt_at_truth": ref.get("Jt_at_truth"),
                "flagged_candidates": int(np.count_nonzero(prof.flags))})
        rows.append(row)
    fio.write_summary(os.path.join(out, "summary.csv"), rows, SUMMARY_COLUMNS, cfg.hash)
    with open(os.path.join(out, "config.txt"), "w") as fh:
        fh.write(format_text(cfg))
    info = run_info(cfg)
    info.update({"legs": len(rfs), "failed_legs": sorted(status), "runtime_s": time.perf_counter() - t0,
                 "jobs": jobs})
    fio.write_json(os.path.join(out, "manifest.json"), info)
    for r in rows:
        e1 = r.get("error_J")
        e2 = r.get("error_Jt")
        print(f"rf={r['rf']:<10.4g} {r['status']:<4} error_J={_fmt(e1)} error_Jt={_fmt(e2)} "
              f"sublevel={_fmt(r.get('sublevel_fraction'))} theta_ok={r.get('theta_ok')}")
    if status:
        return EXIT_NUMERIC if all(s.startswith("numerical") for s in status.values()) else EXIT_LEG
    return EXIT_OK


def _fmt(x):
    return "-" if x is None else f"{x:.4g}"


def make_parser():
    p = argparse.ArgumentParser(prog="faultloc", description="Fault localisation on a transmission line.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key = value configuration file")
        sp.add_argument("--profile", choices=["desk", "paper"], default="desk")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or io.out)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one key")

    def loc_opts(sp):
        sp.add_argument("--known-impedance", action=argparse.BooleanOptionalAction, default=None)
        sp.add_argument("--grid-points", type=int)
        sp.add_argument("--omega-band", type=float, help="rad/s")
        sp.add_argument("--beta", type=float)

    s = sub.add_parser("simulate", help="run the ladder simulator and write port signals")
    common(s)
    s.set_defaults(func=cmd_simulate)
    s = sub.add_parser("localise", help="evaluate the costs over the candidate grid")
    common(s)
    loc_opts(s)
    s.add_argument("--signals", required=True)
    s.set_defaults(func=cmd_localise)
    s = sub.add_parser("sweep", help="simulate and localise for every fault resistance in sweep.rf")
    common(s)
    loc_opts(s)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--save-signals", action="store_true")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigInvalid, GridMismatch, DomainViolation) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionViolated as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
