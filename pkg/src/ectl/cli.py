"""Command-line entry point ``ectl``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 validation
error.  Failures print one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import serial
from . import zq_lwe as zq
from .config import (MODES, PROFILE_NAMES, ConfigError, Scenario, load_scenario,
                     profile_params, seed_streams)

EXIT_CONFIG, EXIT_IO, EXIT_VALIDATION = 2, 3, 4
log = logging.getLogger("ectl")


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_json(path, obj):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _emit(obj):
    print(json.dumps(obj, sort_keys=True))


def _addr(s: str):
    host, _, port = s.rpartition(":")
    if not host or not port.isdigit():
        raise UsageError(f"address must be host:port, got {s!r}")
    return host, int(port)


def _scenario(args) -> Scenario:
    cfg = load_scenario(args.scenario)
    return Scenario(cfg, profile=getattr(args, "profile", None), seed=args.seed,
                    reenc_rule=getattr(args, "reenc_rule", "paper"))


def summarize(trace, ideal, timing: bool = False) -> dict:
    ey, eu = trace.errors_vs(ideal)
    out = {"max_err_u": float(eu.max()), "max_err_y": float(ey.max()),
           "window_margin": None, "steps": len(trace)}
    if "margin" in trace.extras:
        out["window_margin"] = int(min(trace.extras["margin"]))
    if timing:
        out["runtime_per_step_ms"] = 1e3 * float(np.mean(trace.step_seconds))
    return out


# ---------------------------------------------------------------- commands

def cmd_keygen(args):
    params = profile_params(args.profile)
    sk = zq.keygen(params, seed_streams(args.seed)[0])
    serial.dump_key(sk, args.out)
    _emit({"key": args.out, **params.header()})


def cmd_convert(args):
    from .convert import (conversion_residuals, load_controller_json)
    from .convert import convert_controller

    ctl = load_controller_json(args.controller)
    targets = None
    if args.poles:
        targets = [complex(v) for v in json.loads(args.poles)]
    charpoly = json.loads(args.charpoly) if args.charpoly else None
    conv = convert_controller(ctl, targets=targets, charpoly=charpoly, route=args.route)
    doc = conv.to_json()
    doc["verified"] = conversion_residuals(ctl.F, ctl.H, conv.Fp, conv.Hp, conv.T, conv.R)
    _write_json(args.out, doc)
    _emit({"out": args.out, "route": conv.route, "charpoly": [int(c) for c in conv.charpoly],
           "residuals": doc["verified"]})


def cmd_design(args):
    from .plant_sim.bounds import design_parameters, eval_gamma, eval_theta

    sc = _scenario(args)
    nm = sc.bound_inputs()
    r1p, r2p, s1p = (float(v) for v in args.targets.split(","))
    p = sc.params
    scales = design_parameters(r1p, r2p, s1p, nm, p.delta_enc, p.delta_mult)
    gamma = eval_gamma(scales.L, scales.r1, scales.r2, scales.s1, scales.s2,
                       p.delta_enc, p.delta_mult, nm)
    doc = {"scales": scales.to_json(), "gamma": gamma, "theta": eval_theta(nm.eta, nm),
           "bound_inputs": nm.to_json()}
    _write_json(args.out, doc)
    _emit(doc)


def _run_mode(cfg, mode, profile, seed, rule, diagnostics, realtime):
    sc = Scenario(cfg, profile=profile, seed=seed, reenc_rule=rule)
    return sc.run(mode, diagnostics=diagnostics, realtime=realtime), sc.ideal_trace()


def cmd_simulate(args):
    sc = _scenario(args)
    modes = [args.mode] if args.mode else list(sc.cfg.modes)
    os.makedirs(args.out, exist_ok=True)
    ideal = sc.ideal_trace()
    report = {}
    for mode in modes:
        tr = sc.run(mode, diagnostics=args.diagnostics, realtime=args.realtime)
        path = os.path.join(args.out, f"{mode}.csv")
        tr.to_csv(path, ideal)
        report[mode] = summarize(tr, ideal, args.timing)
    _write_json(os.path.join(args.out, "summary.json"), report)
    _emit(report)


def cmd_compare(args):
    sc = _scenario(args)
    modes = [m for m in (args.mode.split(",") if args.mode else sc.cfg.modes)]
    for m in modes:
        if m not in MODES:
            raise ConfigError(f"unknown mode {m!r}")
    os.makedirs(args.out, exist_ok=True)
    ideal = sc.ideal_trace()
    jobs = [(sc.cfg, m, sc.profile, sc.seed, sc.rule, args.diagnostics, False) for m in modes]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            traces = list(ex.map(_run_mode, *zip(*jobs)))
    else:
        traces = [_run_mode(*j) for j in jobs]
    report = {}
    for m, (tr, _) in zip(modes, traces):
        tr.to_csv(os.path.join(args.out, f"{m}.csv"), ideal)
        report[m] = summarize(tr, ideal, args.timing)
    _write_json(os.path.join(args.out, "report.json"), report)
    _emit(report)


def cmd_encrypt(args):
    sc = _scenario(args)
    ectl, codec, _ = sc.encrypted_parts(additive=False)
    os.makedirs(args.out, exist_ok=True)
    serial.dump_controller(ectl, os.path.join(args.out, "controller.bin"))
    serial.dump_key(codec.sk, os.path.join(args.out, "key.bin"))
    _emit({"controller": os.path.join(args.out, "controller.bin"),
           "key": os.path.join(args.out, "key.bin")})


def cmd_serve_controller(args):
    from .netloop import serve_controller

    ectl = serial.load_controller(args.controller)

    def announce(addr):
        print(json.dumps({"listening": f"{addr[0]}:{addr[1]}"}), flush=True)

    serve_controller(_addr(args.listen), ectl, max_sessions=args.max_sessions,
                     on_listen=announce)
    _emit({"steps": ectl.step})


def cmd_serve_plant(args):
    from .controllers import ActuatorCodec
    from .netloop import serve_plant

    sc = _scenario(args)
    sk = serial.load_key(args.key) if args.key else sc.key()
    if args.key:
        sc._params = sk.params
    win = sc.window(sk.params.q)
    codec = ActuatorCodec(sk, win, sc.scales, zq.make_rng(seed_streams(sc.seed)[2]), sc.rule)
    dims = (sc.conv.n_prime, sc.ctl.p, sc.ctl.nr, sc.ctl.m)
    tr = serve_plant(_addr(args.connect), sc.plant, codec, dims, sc.cfg.horizon,
                     sc.reference(), timeout=args.timeout, realtime=args.realtime)
    os.makedirs(args.out, exist_ok=True)
    ideal = sc.ideal_trace()
    tr.to_csv(os.path.join(args.out, "encrypted.csv"), ideal)
    report = {"encrypted": summarize(tr, ideal, args.timing)}
    _write_json(os.path.join(args.out, "summary.json"), report)
    _emit(report)


def cmd_bench(args):
    from .plant_sim.runner import EncryptedLoop, LocalLink, run_closed_loop

    sc = _scenario(args)
    ectl, codec, _ = sc.encrypted_parts()
    loop = EncryptedLoop(LocalLink(ectl), codec)
    t0 = time.perf_counter()
    tr = run_closed_loop(sc.plant, loop, args.steps, sc.reference(), sc.ctl.nr)
    wall = time.perf_counter() - t0
    per = 1e3 * float(np.mean(tr.step_seconds))
    doc = {"profile": sc.profile, "steps": args.steps, "per_step_ms": per,
           "max_step_ms": 1e3 * float(np.max(tr.step_seconds)),
           "wall_s": wall, "budget_ms": 1e3 * sc.plant.Ts, "within_budget": per < 1e3 * sc.plant.Ts}
    if args.out:
        _write_json(args.out, doc)
    _emit(doc)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="ectl", description="Encrypted linear dynamic controllers.")
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    def common(p, scenario=True, out=True, out_default=None):
        if scenario:
            p.add_argument("--scenario", default="three_inertia",
                           help="scenario file or shipped scenario name")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--profile", choices=PROFILE_NAMES, default=None)
        if out:
            p.add_argument("--out", default=out_default, required=out_default is None)

    p = sub.add_parser("keygen")
    common(p, scenario=False)
    p.set_defaults(func=cmd_keygen, seed=0, profile="paper")

    p = sub.add_parser("convert")
    p.add_argument("--controller", required=True, help="controller JSON")
    p.add_argument("--poles", help="JSON list of target poles, e.g. '[0, 1, \"1+1j\"]'")
    p.add_argument("--charpoly", help="JSON list of monic integer coefficients")
    p.add_argument("--route", choices=("identity", "charpoly", "modal"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("design")
    common(p)
    p.add_argument("--targets", required=True, help="r1',r2',s1' of the quantized design")
    p.set_defaults(func=cmd_design)

    for name, func in (("simulate", cmd_simulate), ("compare", cmd_compare)):
        p = sub.add_parser(name)
        common(p, out_default="out")
        p.add_argument("--mode", help="mode (compare: comma-separated list)")
        p.add_argument("--reenc-rule", choices=("paper", "footnote"), default="paper")
        p.add_argument("--diagnostics", action="store_true",
                       help="log perturbation and injected-error series")
        p.add_argument("--timing", action="store_true",
                       help="add runtime_per_step_ms (not reproducible)")
        if name == "simulate":
            p.add_argument("--realtime", action="store_true")
        else:
            p.add_argument("--jobs", type=int, default=1)
        p.set_defaults(func=func)

    p = sub.add_parser("encrypt", help="write the encrypted controller and the key")
    common(p)
    p.set_defaults(func=cmd_encrypt)

    p = sub.add_parser("serve-controller")
    p.add_argument("--controller", required=True, help="encrypted controller file")
    p.add_argument("--listen", default="127.0.0.1:0")
    p.add_argument("--max-sessions", type=int, default=None)
    p.set_defaults(func=cmd_serve_controller)

    p = sub.add_parser("serve-plant")
    common(p, out_default="out")
    p.add_argument("--connect", required=True)
    p.add_argument("--key", help="key file (default: derive from --seed)")
    p.add_argument("--timeout", type=float, default=None, help="seconds, default 5 Ts")
    p.add_argument("--realtime", action="store_true")
    p.add_argument("--reenc-rule", choices=("paper", "footnote"), default="paper")
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_serve_plant)

    p = sub.add_parser("bench")
    common(p, out_default="")
    p.add_argument("--steps", type=int, default=200)
    p.set_defaults(func=cmd_bench)
    return ap


def _exit_code(exc) -> int:
    from .controllers import ControllerShapeError, IntegerOverflowError
    from .convert import ConversionError
    from .netloop import KeyMaterialError, ProtocolError
    from .plant_sim.bounds import DesignError
    from .plant_sim.runner import EquivalenceError
    from .quantize import WindowOverflow, WindowSizingError
    from .serial import FormatError

    if isinstance(exc, (ConfigError, json.JSONDecodeError)):
        return EXIT_CONFIG
    validation = (ConversionError, WindowSizingError, WindowOverflow, zq.ParameterError,
                  DesignError, FormatError, ProtocolError, KeyMaterialError, EquivalenceError,
                  IntegerOverflowError, ControllerShapeError, ValueError)
    if isinstance(exc, validation):
        return EXIT_VALIDATION
    if isinstance(exc, (OSError, ConnectionError)):
        return EXIT_IO
    raise exc


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("ECTL_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
        return 0
    except Exception as exc:  # noqa: BLE001
        code = _exit_code(exc)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}),
              file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
