"""``telescp`` command line: simulate, tvla, cpa, ge-curve, mitigate, throttle, export.

Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
4 semantic error (missing class labels or keys).
"""
import argparse
import json
import os
import sys
from pathlib import Path

from telescp import __version__, aes, cpa, leakage, tracestore, tvla
from telescp.stats import THRESHOLD_TVLA

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_SEMANTIC = 0, 2, 3, 4
DEFAULT_KEY = "2b7e151628aed2a6abf7158809cf4f3c"
SIDECAR_SUFFIX = ".meta.json"


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _usage(msg):
    return CliError(EXIT_USAGE, msg)


def _default_workers():
    raw = os.environ.get("TELESCP_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _positive_int(flag):
    def parse(text):
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{flag} expects an integer, got {text!r}")
        if v < 1:
            raise argparse.ArgumentTypeError(f"{flag} must be >= 1, got {v}")
        return v
    return parse


def _key(text):
    try:
        return aes.as_block(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"--key must be 32 hex characters, got {text!r}")


def _emit(args, payload, text):
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text)


def _resolve_profile(args):
    if args.profile:
        try:
            profiles = leakage.load_profiles(args.profile)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read profile: {exc}")
        except (ValueError, TypeError) as exc:
            raise _usage(f"--profile: {exc}")
        if args.preset and args.preset in profiles:
            profile = profiles[args.preset]
        elif len(profiles) == 1:
            profile = next(iter(profiles.values()))
        else:
            raise _usage("--profile holds several profiles; pick one with --preset")
    else:
        try:
            profile = leakage.get_preset(args.preset or "phpc-like")
        except KeyError as exc:
            raise _usage(f"--preset: {exc.args[0]}")
    if args.noise_sigma is not None:
        if args.noise_sigma < 0:
            raise _usage("--noise-sigma must be >= 0")
        profile = profile.derive(noise_sigma=args.noise_sigma)
    if args.samples is not None:
        profile = profile.derive(samples_per_trace=args.samples)
    return profile


def _write(ts, path, embed_key, sidecar):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tracestore.write_traceset(ts, path, embed_key=embed_key)
        Path(str(path) + SIDECAR_SUFFIX).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}")


def _read(path):
    try:
        ts = tracestore.read_traceset(path)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}")
    except tracestore.TraceFormatError as exc:
        raise CliError(EXIT_IO, f"{path}: {exc}")
    side = Path(str(path) + SIDECAR_SUFFIX)
    if side.exists():
        try:
            ts.meta.update(json.loads(side.read_text()))
        except (OSError, ValueError):
            pass
    return ts


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    profile = _resolve_profile(args)
    names = [c.strip() for c in args.classes.split(",") if c.strip()]
    if not names:
        raise _usage("--classes is empty")
    out = Path(args.out)
    written = []
    for name in names:
        if name == "varying":
            source = leakage.PlaintextSource.random(args.pt_seed)
            seed = args.seed
        else:
            try:
                label = tracestore.PlaintextClass.parse(name)
            except ValueError as exc:
                raise _usage(f"--classes: {exc}")
            source = tvla.class_source(label, args.pt_seed)
            seed = tvla.class_seed(args.seed, label)
        ts = leakage.simulate_campaign(source, args.key, args.n, profile, seed, args.workers)
        path = out / f"{profile.name}_{name}.sct"
        sidecar = {"profile": profile.to_dict(), "presets_version": leakage.PRESETS_VERSION,
                   "seed": args.seed, "trace_seed": seed, "source": source.kind, "source_seed": source.seed,
                   "n_traces": args.n}
        _write(ts, path, args.embed_key, sidecar)
        written.append({"path": str(path), "class": name, "n_traces": len(ts)})
    text = "\n".join(f"wrote {w['n_traces']} traces channel={profile.name} class={w['class']} "
                     f"seed={args.seed} -> {w['path']}" for w in written)
    _emit(args, {"command": "simulate", "channel": profile.name, "seed": args.seed,
                 "profile": profile.to_dict(), "files": written}, text)


def cmd_tvla(args):
    if len(args.files) < 2:
        raise CliError(EXIT_SEMANTIC, "tvla needs at least two labelled trace files")
    groups = {}
    for f in args.files:
        ts = _read(f)
        if ts.class_label is None:
            raise CliError(EXIT_SEMANTIC, f"{f} carries no plaintext class label")
        if ts.class_label in groups:
            raise CliError(EXIT_SEMANTIC, f"two files share class {ts.class_label.label}")
        groups[ts.class_label] = ts
    try:
        report = tvla.run_tvla(groups, args.sample_index, args.threshold, args.workers)
    except (ValueError, IndexError) as exc:
        raise CliError(EXIT_SEMANTIC, str(exc))
    payload = dict(report.to_dict(), command="tvla")
    try:
        if args.json_out:
            Path(args.json_out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        if args.csv:
            Path(args.csv).write_text(report.to_csv())
    except OSError as exc:
        raise CliError(EXIT_IO, str(exc))
    _emit(args, payload, report.to_text())


def cmd_cpa(args):
    ts = _read(args.file)
    model = cpa.LeakModel.parse(args.model)
    key = ts.true_key
    if key is None and not args.recover_only:
        raise CliError(EXIT_SEMANTIC, f"{args.file} has no embedded key; use --recover-only to skip ranking")
    if args.recover_only:
        key = None
    if args.ge_step is not None and key is None:
        raise CliError(EXIT_SEMANTIC, "a GE curve needs the embedded key")
    try:
        report = cpa.run_cpa(ts, model, key, args.absolute, args.delta, args.workers)
        curve = None
        if args.ge_step is not None:
            curve = cpa.ge_curve(ts, model, key, args.ge_step, args.absolute, args.delta, args.workers)
    except ValueError as exc:
        raise CliError(EXIT_SEMANTIC, str(exc))
    payload = dict(report.to_dict(include_corr=args.full), command="cpa")
    if "profile" in ts.meta:
        payload["profile"] = ts.meta["profile"]
    if curve is not None:
        payload["ge_curve"] = [[n, g] for n, g in curve.points]
    try:
        if curve is not None and args.ge_csv:
            Path(args.ge_csv).write_text(curve.to_csv())
        if args.json_out:
            Path(args.json_out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise CliError(EXIT_IO, str(exc))
    text = report.to_text()
    if curve is not None:
        text += "\n" + "\n".join(f"n={n} GE={g:.1f}" for n, g in curve.points)
    _emit(args, payload, text)


def cmd_ge_curve(args):
    args.recover_only = False
    args.full = False
    cmd_cpa(args)


def cmd_mitigate(args):
    ts = _read(args.file)
    try:
        spec = leakage.MitigationSpec(args.noise, args.interval, args.span)
    except ValueError as exc:
        raise _usage(str(exc))
    out = leakage.apply_mitigation(ts, spec, args.seed)
    sidecar = {k: v for k, v in ts.meta.items()}
    sidecar.update(mitigation=out.meta["mitigation"], mitigation_seed=args.seed)
    _write(out, Path(args.out), out.true_key is not None, sidecar)
    text = (f"wrote {len(out)} traces x {out.samples_per_trace} samples "
            f"(noise={args.noise:g}, interval={args.interval}, span={args.span}) -> {args.out}")
    _emit(args, {"command": "mitigate", "path": args.out, "n_traces": len(out),
                 "samples_per_trace": out.samples_per_trace, "mitigation": out.meta["mitigation"],
                 "seed": args.seed}, text)


def cmd_throttle(args):
    try:
        spec = leakage.ThrottleSpec(args.limit, args.fmax, args.work, leakage.Driver.parse(args.driver))
        freq, elapsed = leakage.throttle_transform(args.demand, spec, args.sensor)
    except ValueError as exc:
        raise _usage(str(exc))
    throttled = freq < spec.f_max
    text = f"frequency={freq:.6g} elapsed={elapsed:.6g} throttled={'yes' if throttled else 'no'}"
    _emit(args, {"command": "throttle", "frequency": freq, "elapsed_time": elapsed, "throttled": throttled,
                 "power_law": "cubic", "demand": args.demand, "sensor": args.sensor,
                 "power_limit": spec.power_limit, "f_max": spec.f_max, "driver": spec.driver.value}, text)


def cmd_export(args):
    ts = _read(args.file)
    try:
        rows = tracestore.export_csv(ts, args.csv)
    except OSError as exc:
        raise CliError(EXIT_IO, str(exc))
    _emit(args, {"command": "export", "path": args.csv, "rows": rows}, f"wrote {rows} rows -> {args.csv}")


# ------------------------------------------------------------------ parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print a JSON document instead of text")
    common.add_argument("--workers", type=_positive_int("--workers"), default=_default_workers(),
                        help="worker threads (default: $TELESCP_WORKERS or 1)")

    p = argparse.ArgumentParser(prog="telescp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate trace campaigns")
    s.add_argument("--preset", help=f"channel preset ({', '.join(sorted(leakage.PRESETS))})")
    s.add_argument("--profile", help="JSON file with a ChannelProfile (or a presets table)")
    s.add_argument("--classes", default="varying",
                   help="comma list of all0, all1, random (fixed inputs) or varying (fresh random per trace)")
    s.add_argument("--n", type=_positive_int("--n"), default=10000, help="traces per class")
    s.add_argument("--key", type=_key, default=aes.as_block(DEFAULT_KEY), help="AES-128 key, 32 hex chars")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pt-seed", type=int, default=tvla.DEFAULT_PT_SEED, help="seed for random plaintexts")
    s.add_argument("--noise-sigma", type=float, help="override the profile's noise_sigma")
    s.add_argument("--samples", type=_positive_int("--samples"), help="override samples_per_trace")
    s.add_argument("--embed-key", action="store_true", help="store the key in the trace files")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("tvla", parents=[common], help="TVLA between labelled trace files")
    t.add_argument("files", nargs="*")
    t.add_argument("--sample-index", type=int)
    t.add_argument("--threshold", type=float, default=THRESHOLD_TVLA)
    t.add_argument("--json-out")
    t.add_argument("--csv", help="write raw t-scores as CSV")
    t.set_defaults(func=cmd_tvla)

    def cpa_flags(q):
        q.add_argument("file")
        q.add_argument("--model", default="rd0-hw", choices=[m.value for m in cpa.LeakModel])
        q.add_argument("--absolute", action="store_true", help="rank by |r| instead of signed r")
        q.add_argument("--delta", action="store_true", help="correlate against consecutive-reading deltas")
        q.add_argument("--ge-csv", help="write the GE curve as CSV")
        q.add_argument("--json-out")

    c = sub.add_parser("cpa", parents=[common], help="correlation power analysis")
    cpa_flags(c)
    c.add_argument("--ge-step", type=_positive_int("--ge-step"))
    c.add_argument("--recover-only", action="store_true", help="skip ranking; only print the argmax key")
    c.add_argument("--full", action="store_true", help="include the 16x256 correlation table in JSON")
    c.set_defaults(func=cmd_cpa)

    g = sub.add_parser("ge-curve", parents=[common], help="alias of cpa --ge-step")
    cpa_flags(g)
    g.add_argument("--ge-step", type=_positive_int("--ge-step"), required=True)
    g.set_defaults(func=cmd_ge_curve)

    m = sub.add_parser("mitigate", parents=[common], help="blend noise and lengthen the reporting interval")
    m.add_argument("file")
    m.add_argument("--noise", type=float, default=0.0)
    m.add_argument("--interval", type=_positive_int("--interval"), default=1)
    m.add_argument("--span", choices=["samples", "traces"], default="samples")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_mitigate)

    th = sub.add_parser("throttle", parents=[common], help="frequency under a reactive power cap")
    th.add_argument("--demand", type=float, required=True)
    th.add_argument("--limit", type=float, default=4.0)
    th.add_argument("--fmax", type=float, default=3.5)
    th.add_argument("--work", type=float, default=1.0)
    th.add_argument("--driver", default="actual", help="actual or sensor")
    th.add_argument("--sensor", type=float, help="sensor reading for --driver sensor")
    th.set_defaults(func=cmd_throttle)

    e = sub.add_parser("export", parents=[common], help="export a trace file to CSV")
    e.add_argument("file")
    e.add_argument("--csv", required=True)
    e.set_defaults(func=cmd_export)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except CliError as exc:
        print(f"telescp {args.command}: error: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
