"""Command-line interface: ``orpam synth | reconstruct | metrics``.

Exit codes: 0 success, 1 I/O or format error, 2 bad arguments or config,
3 when more than 1% of the A-scans failed to reconstruct.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import KEYS, WORKERS_ENV, ConfigError, RunConfig, build_run_config, default_workers, parse_config
from .io import VolumeFormatError, read_volume, write_volume
from .metrics import DEFAULT_NOISE_GUARD_UM, axial_profile
from .pipeline import MAX_FAILED_FRACTION, reconstruct_volume
from .synth import (
    CALIBRATED_NOISE_RMS,
    DEFAULT_FS,
    DEFAULT_NT,
    DEFAULT_SOUND_SPEED,
    TransducerModel,
    synth_thin_film_volume,
    thin_film_scene,
)
from .transforms import AScan, envelope

log = logging.getLogger("orpam")

EXIT_IO = 1
EXIT_USAGE = 2
EXIT_FAILED = 3


class _UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = _nonneg_float(text)
    if value == 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return value


def _config_help() -> str:
    defaults = RunConfig().to_dict()
    lines = ["config file keys (key = value, # comments) and their defaults:"]
    for key, (_, desc) in KEYS.items():
        default = defaults.get(key)
        if key in ("subband_length", "loading") and default is None:
            default = "auto"
        lines.append(f"  {key:<18} {desc} [default: {default}]")
    lines.append("command-line flags override the config file.")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orpam", description="Adaptive OR-PAM axial reconstruction.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic volume")
    p.add_argument("--preset", choices=["thin-film"], default="thin-film")
    p.add_argument("--out", required=True, help="output .orpa path")
    p.add_argument("--nx", type=_positive_int, default=1)
    p.add_argument("--ny", type=_positive_int, default=1)
    p.add_argument("--nt", type=_positive_int, default=DEFAULT_NT)
    p.add_argument("--depth-um", type=_nonneg_float, default=750.0, help="film depth [default: 750]")
    p.add_argument("--noise-rms", type=_nonneg_float, default=CALIBRATED_NOISE_RMS,
                   help=f"noise RMS [default: {CALIBRATED_NOISE_RMS}, 40 dB floor]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fs", type=_positive_float, default=DEFAULT_FS, help="sampling rate, Hz [default: 2e8]")
    p.add_argument("--pitch-um", type=_nonneg_float, default=5.0, help="lateral pitch metadata [default: 5]")
    p.add_argument("--sound-speed", type=_positive_float, default=DEFAULT_SOUND_SPEED)
    p.add_argument("--no-taps", action="store_true", help="omit the axial interference taps")

    p = sub.add_parser("reconstruct", help="reconstruct a volume",
                       epilog=_config_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--in", dest="input", help="input .orpa path")
    p.add_argument("--out", help="output .orpa path (manifest goes to <out>.json)")
    p.add_argument("--method", choices=["uniform", "fmv", "feibmv"])
    p.add_argument("--config", help="run config file")
    p.add_argument("--workers", type=_positive_int, help=f"worker threads [default: ${WORKERS_ENV} or 1]")
    p.add_argument("--upsample", type=_positive_int)
    p.add_argument("--output", choices=["rf", "envelope", "both"])
    p.add_argument("--dtype", choices=["float32", "float64"])
    p.add_argument("--f-lo", type=_positive_float, help="Hz")
    p.add_argument("--f-hi", type=_positive_float, help="Hz")
    p.add_argument("--full-band", action="store_true", default=None)
    p.add_argument("--subband-length", type=_positive_int)
    p.add_argument("--loading", type=_nonneg_float)
    p.add_argument("--threshold", type=_positive_float)
    p.add_argument("--fixed-num", type=_positive_int)
    p.add_argument("--renormalize-eibmv", action="store_true", default=None)
    p.add_argument("--forward-backward", action="store_true", default=None)
    p.add_argument("--sound-speed", type=_positive_float)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("metrics", help="axial profile report as JSON")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--x", type=int, help="select one x index [default: all]")
    p.add_argument("--y", type=int, help="select one y index [default: all]")
    p.add_argument("--compare", help="baseline .orpa to report deltas against")
    p.add_argument("--kind", choices=["auto", "rf", "envelope"], default="auto",
                   help="sample kind; auto reads the sidecar manifest, else rf")
    p.add_argument("--sound-speed", type=_positive_float, default=DEFAULT_SOUND_SPEED)
    p.add_argument("--noise-guard-um", type=_positive_float, default=DEFAULT_NOISE_GUARD_UM)
    return parser


def _cmd_synth(args) -> int:
    if args.nx * args.ny > 64 * 64:
        raise _UsageError("argument --nx/--ny: at most 64x64 A-scans")
    taps = () if args.no_taps else thin_film_scene().interference_taps
    depth = args.depth_um * 1e-6
    window = args.nt / args.fs * args.sound_speed
    if not depth < window:
        raise _UsageError(f"argument --depth-um: film at {args.depth_um} um lies outside the {window * 1e6:.1f} um window")
    t = TransducerModel()
    vol = synth_thin_film_volume(t, depth, (args.nx, args.ny, args.nt), args.fs, args.noise_rms,
                                 args.seed, taps, args.sound_speed, args.pitch_um * 1e-6)
    write_volume(args.out, vol, "float32")
    scene = thin_film_scene(depth, args.noise_rms, args.seed, taps, args.sound_speed)
    info = {
        "preset": args.preset,
        "out": args.out,
        "dims": [args.nx, args.ny, args.nt],
        "fs": args.fs,
        "pitch": args.pitch_um * 1e-6,
        "transducer": {
            "center_frequency": t.center_frequency,
            "fractional_bandwidth": t.fractional_bandwidth,
            "sigma_t": t.sigma_t,
        },
        "scene": scene.to_dict(),
    }
    json.dump(info, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


_FLAG_KEYS = ("input", "out", "method", "workers", "upsample", "output", "dtype", "f_lo", "f_hi",
              "full_band", "subband_length", "loading", "threshold", "fixed_num",
              "renormalize_eibmv", "forward_backward", "sound_speed", "seed")


def resolve_run_config(args) -> RunConfig:
    values = {}
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            values.update(parse_config(f.read()))
    for key in _FLAG_KEYS:
        value = getattr(args, key)
        if value is not None:
            values[key] = value
    if "workers" not in values:
        values["workers"] = default_workers()
    cfg = build_run_config(values, RunConfig())
    if not cfg.input:
        raise _UsageError("argument --in: required (flag or config key 'input')")
    if not cfg.out:
        raise _UsageError("argument --out: required (flag or config key 'out')")
    return cfg


def _envelope_path(out: str) -> str:
    p = Path(out)
    return str(p.with_name(p.stem + ".env" + p.suffix))


def _cmd_reconstruct(args) -> int:
    try:
        cfg = resolve_run_config(args)
    except ConfigError as exc:
        raise _UsageError(str(exc)) from None
    vol = read_volume(cfg.input)
    recon = cfg.recon
    nx, ny, nt = vol.dims
    try:
        probe = recon.passband(AScan(np.zeros(nt), vol.fs))
        length = recon.resolved_subband_length(probe.k)
    except ValueError as exc:
        raise _UsageError(f"configuration does not fit the input: {exc}") from None

    start = time.perf_counter()
    result = reconstruct_volume(vol, recon, cfg.workers)
    elapsed = time.perf_counter() - start

    outputs = {}
    if recon.output in ("rf", "both"):
        outputs["rf"] = cfg.out
    if recon.output == "envelope":
        outputs["envelope"] = cfg.out
    elif recon.output == "both":
        outputs["envelope"] = _envelope_path(cfg.out)
    for kind, path in outputs.items():
        write_volume(path, result.rf if kind == "rf" else result.envelope, cfg.dtype)

    n_fail = len(result.failures)
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "config_text": cfg.to_text(),
        "resolved": {
            "passband_bins": [int(probe.bin_indices[0]), int(probe.bin_indices[-1])],
            "passband_size": int(probe.k),
            "subband_length": int(length),
            "loading": float(recon.resolved_loading(length)),
        },
        "input_dims": [nx, ny, nt],
        "output_dims": list(result.rf.dims),
        "output_fs": result.rf.fs,
        "outputs": outputs,
        "timing_s": elapsed,
        "n_ascans": nx * ny,
        "n_failed": n_fail,
        "failures": [{"x": x, "y": y, "error": msg} for x, y, msg in result.failures],
        "success": n_fail <= MAX_FAILED_FRACTION * nx * ny,
    }
    for kind, path in outputs.items():
        with open(path + ".json", "w", encoding="utf-8") as f:
            json.dump(dict(manifest, kind=kind), f, indent=2)
    log.info("reconstructed %d A-scans in %.2f s (%d failed)", nx * ny, elapsed, n_fail)
    if not manifest["success"]:
        print(f"error: {n_fail} of {nx * ny} A-scans failed", file=sys.stderr)
        return EXIT_FAILED
    return 0


def _resolve_source(path: str, requested: str) -> tuple[str, str]:
    """Pick the file and sample kind to measure.

    With ``auto``, a sidecar manifest written by ``reconstruct`` decides: an
    RF output whose run also wrote an envelope is measured on that envelope,
    because adaptive outputs are only meaningful through their own modulus.
    """
    if requested != "auto":
        return path, requested
    side = Path(path + ".json")
    if not side.exists():
        return path, "rf"
    try:
        manifest = json.loads(side.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return path, "rf"
    kind = manifest.get("kind", "rf")
    env_path = manifest.get("outputs", {}).get("envelope")
    if kind == "rf" and env_path and Path(env_path).exists():
        return env_path, "envelope"
    if kind == "rf" and manifest.get("config", {}).get("method") != "uniform":
        log.warning("%s holds adaptive RF without an envelope file; using its Hilbert envelope", path)
    return path, kind


def _profiles(path: str, kind: str, xs, ys, c: float, guard: float) -> dict:
    path, kind = _resolve_source(path, kind)
    vol = read_volume(path)
    out = {}
    for x in xs:
        for y in ys:
            trace = vol.data[x, y]
            env = trace if kind == "envelope" else envelope(AScan(trace, vol.fs))
            out[(x, y)] = axial_profile(env, vol.fs, c, guard).to_dict()
    return out


def _delta(a, b):
    if a is None or b is None:
        return 0.0 if a == b else None
    return a - b


def _cmd_metrics(args) -> int:
    vol = read_volume(args.input)
    nx, ny, _ = vol.dims
    for flag, value, size in (("--x", args.x, nx), ("--y", args.y, ny)):
        if value is not None and not 0 <= value < size:
            raise _UsageError(f"argument {flag}: index {value} outside [0, {size})")
    xs = range(nx) if args.x is None else [args.x]
    ys = range(ny) if args.y is None else [args.y]
    reports = _profiles(args.input, args.kind, xs, ys, args.sound_speed, args.noise_guard_um)
    base = None
    if args.compare:
        bvol = read_volume(args.compare)
        if bvol.dims[:2] != vol.dims[:2]:
            raise _UsageError("argument --compare: lateral dims differ from --in")
        base = _profiles(args.compare, "auto", xs, ys, args.sound_speed, args.noise_guard_um)
    records = []
    for (x, y), rep in reports.items():
        rec = {"x": x, "y": y, **rep}
        if base is not None:
            b = base[(x, y)]
            rec["baseline"] = b
            rec["delta_fwhm_um"] = _delta(rep["fwhm_um"], b["fwhm_um"])
            rec["delta_noise_floor_db"] = _delta(rep["noise_floor_db"], b["noise_floor_db"])
            rec["fwhm_improvement"] = b["fwhm_um"] / rep["fwhm_um"]
        records.append(rec)
    json.dump({"input": args.input, "reports": records}, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


_COMMANDS = {"synth": _cmd_synth, "reconstruct": _cmd_reconstruct, "metrics": _cmd_metrics}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help, --version
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, VolumeFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
