"""Command-line entry points: train, evaluate, extract, synthesize, compare, stream.

Exit codes: 0 success, 2 usage or config error, 3 environment or resource
error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .analysis import REFERENCE_COMPARISONS, compare_kmp_sets, format_variance_table, speed_report
from .config import ConfigError, gait_spec_from_dict, load_config, to_dict
from .env import EnvError
from .kmp import KmpError, SegmentationError, extract_cycle, extract_kmps
from .linalg import RankDeficientError
from .ppo import TrainingError, evaluate, train
from .stream import StreamServer
from .synthesis import GaitError, derive_gait, fit_synergy, pair_mismatch, reconstruct

EXIT_OK, EXIT_USAGE, EXIT_RESOURCE, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("kmpgait")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(args, extra=None):
    out = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        out[key] = _parse_value(value)
    out.update({k: v for k, v in (extra or {}).items() if v is not None})
    return out


def _config(args, extra=None):
    return load_config(args.config, _overrides(args, extra))


def cycle_path_for(kmp_path) -> Path:
    p = Path(kmp_path)
    return p.with_name(p.stem + ".cycle.csv")


def cmd_train(args) -> int:
    cfg = _config(args, {"ppo.epochs": args.epochs, "ppo.steps_per_epoch": args.steps_per_epoch})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = train(cfg.environment, cfg.ppo, args.seed)
    io.save_policy(out / "policy.npz", result.policy)
    io.write_curve(out / "curve.csv", result.curve)
    io.write_log(out / "eval_log.csv", result.evaluation)
    io.write_json(out / "config.json", to_dict(cfg))
    c = result.curve
    print(f"trained {len(c)} epochs; return {c[0]['mean_return']:.3f} -> {c[-1]['mean_return']:.3f}")
    print(f"wrote {out / 'policy.npz'}, {out / 'curve.csv'}, {out / 'eval_log.csv'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    policy = io.load_policy(args.policy)
    steps = args.steps or cfg.ppo.eval_steps
    ev = evaluate(policy, cfg.environment, steps, args.seed)
    io.write_log(args.out, ev)
    speed = (ev.base_x[-1] - ev.base_x[0]) / (ev.time[-1] - ev.time[0])
    print(f"wrote {len(ev)} rows to {args.out}; mean forward speed {speed:.4f} m/s")
    return EXIT_OK


def cmd_extract(args) -> int:
    cfg = _config(args, {"extraction.n_components": args.n_components})
    ex = cfg.extraction
    params = {k: getattr(ex, k) for k in ex.__dataclass_fields__}
    tlog = None
    if io.is_cycle_file(args.log):
        # already one phase-normalised cycle: skip segmentation
        cycle = io.read_cycle(args.log)
        params = {"n_components": ex.n_components}
    else:
        tlog = io.read_log(args.log)
        try:
            cycle = extract_cycle(
                tlog, ex.trim_fraction, ex.reference_channel, ex.min_period, ex.prominence, ex.n_samples,
                ex.max_deviation,
            )
        except SegmentationError as exc:
            raise CliError(f"{args.log}: {exc}", EXIT_NUMERIC) from None
    kmps = extract_kmps(cycle, ex.n_components)
    kmps.provenance = {
        "source": str(args.log),
        "source_sha256": io.file_digest(args.log),
        "parameters": params,
        "period": cycle.period,
        "segments": cycle.provenance.get("segments", 1),
    }
    io.write_kmps(args.out, kmps)
    cpath = cycle_path_for(args.out)
    io.write_cycle(cpath, cycle)
    print(format_variance_table(kmps.cumulative_variance))
    if tlog is not None and tlog.base_x is not None:
        try:
            rep = speed_report(tlog, cycle.period, "source", ex.trim_fraction)
            print(f"mean forward speed {rep.speed:.4f} m/s, period {rep.period:.3f} s")
        except ValueError:
            pass
    print(f"wrote {args.out} and {cpath}")
    return EXIT_OK


def cmd_synthesize(args) -> int:
    cfg = _config(args)
    syn_cfg = cfg.synthesis
    if args.spec:
        data = io.read_json(args.spec)
        try:
            spec = gait_spec_from_dict(args.spec, data)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        name = Path(args.spec).stem
    else:
        if args.gait not in syn_cfg.gaits:
            raise ConfigError(f"unknown gait {args.gait!r}; available: {', '.join(sorted(syn_cfg.gaits))}")
        spec, name = syn_cfg.gaits[args.gait], args.gait
    source_name = args.source_gait or syn_cfg.source_gait
    if source_name not in syn_cfg.gaits:
        raise ConfigError(f"unknown source gait {source_name!r}")
    kmps = io.read_kmps(args.kmps)
    cpath = Path(args.cycle) if args.cycle else cycle_path_for(args.kmps)
    if not cpath.is_file():
        raise ConfigError(f"source cycle file not found: {cpath} (pass --cycle)")
    source = io.read_cycle(cpath, kmps.provenance.get("period", 1.0))
    target = derive_gait(source, spec, syn_cfg.gaits[source_name], cfg.environment.geometry)
    syn = fit_synergy(kmps, target)
    gait = reconstruct(kmps, syn, cfg.environment.geometry)
    if gait.clamp_fraction > syn_cfg.max_clamp_fraction:
        over = np.abs(gait.q_raw - gait.q)
        worst = np.argsort(over, axis=None)[::-1][:5]
        rows = [f"{kmps.columns[j]}@{i}: {gait.q_raw[i, j]:.4f} rad" for i, j in zip(*np.unravel_index(worst, over.shape))]
        msg = (
            f"{gait.clamped} samples ({100 * gait.clamp_fraction:.1f}%) exceed joint limits, "
            f"threshold {100 * syn_cfg.max_clamp_fraction:.1f}%; worst: {', '.join(rows)}"
        )
        if args.strict:
            raise CliError(msg, EXIT_NUMERIC)
        print(f"warning: {msg}; output clamped", file=sys.stderr)
    syn.provenance = {
        "gait": name,
        "source_gait": source_name,
        "kmps": str(args.kmps),
        "kmps_sha256": io.file_digest(args.kmps),
        "cycle": str(cpath),
        "offsets": list(spec.offsets),
        "residual": syn.residual,
        "clamped_samples": gait.clamped,
    }
    io.write_cycle(args.out, gait.cycle(source.period))
    out = Path(args.out)
    syn_path = Path(args.synergy) if args.synergy else out.with_name(out.stem + ".synergy.json")
    io.write_synergy(syn_path, syn)
    if args.derived:
        io.write_cycle(args.derived, target)
    print(
        f"{name}: fit residual {syn.residual:.3g} rad, {gait.clamped} clamped samples, "
        f"front-pair mismatch {pair_mismatch(target, ('fl', 'fr')):.3g} rad"
    )
    print(f"wrote {out} and {syn_path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = io.read_kmps(args.a), io.read_kmps(args.b)
    label = args.label or f"{Path(args.a).stem}-{Path(args.b).stem}"
    try:
        comp = compare_kmp_sets(a, b, label)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    refs = None
    if args.reference:
        unknown = [r for r in args.reference if r not in REFERENCE_COMPARISONS]
        if unknown:
            raise ConfigError(f"unknown reference rows {unknown}; available: {', '.join(REFERENCE_COMPARISONS)}")
        refs = {r: REFERENCE_COMPARISONS[r] for r in args.reference}
    text = comp.table(refs)
    io.write_comparison(args.out, comp)
    out = Path(args.out)
    out.with_suffix(".txt").write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_stream(args) -> int:
    cfg = _config(args, {"stream.port": args.port, "stream.rate_hz": args.rate})
    gait = io.read_cycle(args.gait)
    try:
        server = StreamServer(gait.samples, cfg.stream.rate_hz, cfg.stream.host, cfg.stream.port, cfg.environment.geometry)
    except ValueError as exc:
        raise ConfigError(f"{args.gait}: {exc}") from None
    except OSError as exc:
        raise CliError(f"cannot bind {cfg.stream.host}:{cfg.stream.port}: {exc.strerror}", EXIT_RESOURCE) from None
    with server:
        host, port = server.address
        print(f"streaming {args.gait} at {cfg.stream.rate_hz:g} Hz on {host}:{port}", flush=True)
        try:
            n = server.serve(args.max_frames)
        except KeyboardInterrupt:
            n = server.frames_sent
    print(f"sent {n} frames")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kmpgait", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="pipeline config JSON")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config key")

    sp = sub.add_parser("train", help="train a policy with KL-penalised PPO")
    common(sp)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--out", default="run")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--steps-per-epoch", type=int)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="roll out a saved policy deterministically")
    common(sp)
    sp.add_argument("policy")
    sp.add_argument("--out", required=True)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("extract", help="extract kMPs from a trajectory log or a gait cycle CSV")
    common(sp)
    sp.add_argument("log")
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-components", type=int)
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("synthesize", help="derive a gait and reconstruct it from kMPs")
    common(sp)
    sp.add_argument("kmps")
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--gait")
    g.add_argument("--spec", help="gait spec JSON")
    sp.add_argument("--out", required=True)
    sp.add_argument("--cycle", help="source gait cycle CSV (default: next to the kMP file)")
    sp.add_argument("--source-gait", help="gait the source cycle follows (default from config)")
    sp.add_argument("--derived", help="also write the derived target cycle here")
    sp.add_argument("--synergy", help="synergy JSON path")
    sp.add_argument("--strict", action="store_true", help="fail when clamping exceeds synthesis.max_clamp_fraction")
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("compare", help="compare two kMP sets")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--out", required=True)
    sp.add_argument("--label")
    sp.add_argument("--reference", action="append", help="published reference row to include, e.g. RT-HT")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("stream", help="stream a gait cycle as NDJSON frames over TCP")
    common(sp)
    sp.add_argument("gait")
    sp.add_argument("--port", type=int)
    sp.add_argument("--rate", type=float)
    sp.add_argument("--max-frames", type=int)
    sp.set_defaults(func=cmd_stream)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, io.FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, RankDeficientError, KmpError, SegmentationError, GaitError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (EnvError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
