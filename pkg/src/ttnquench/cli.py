"""Command-line entry points for quench runs and parameter scans.

Every subcommand reads a single INI config (see experiment.QuenchConfig)
and writes its results under the output directory; scan parameters come in
as comma-separated flag values.
"""

import argparse
import json
import sys

from .experiment import (
    QuenchConfig,
    background_scan,
    convergence_scan,
    critical_size_scan,
    patch_confinement_scan,
    run_quench,
    shape_scatter_scan,
)
from .shapes import catalog_shapes


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _pairs(text):
    """Parse probe lists like '0:1,3:2' into [(0, 1), (3, 2)]."""
    out = []
    for chunk in text.split(","):
        if not chunk.strip():
            continue
        x, y = chunk.split(":")
        out.append((int(x), int(y)))
    return out


def _load_config(args) -> QuenchConfig:
    config = QuenchConfig.from_file(args.config)
    overrides = {}
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    if getattr(args, "backend", None):
        overrides["backend"] = args.backend
    if overrides:
        config = config.replace(**overrides)
    return config.validate()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ttnquench",
        description="Bubble quench dynamics in the 2D transverse/longitudinal-field Ising model",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="INI experiment config")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--backend", choices=["ttn", "exact"],
                       help="evolution backend (overrides config)")
        p.add_argument("--jobs", type=int, default=1, help="parallel scan workers")

    p_run = sub.add_parser("run", help="single quench")
    add_common(p_run)

    p_size = sub.add_parser("scan-size", help="critical-size scan over square bubbles")
    add_common(p_size)
    p_size.add_argument("--sizes", required=True, help="comma-separated side lengths")

    p_shapes = sub.add_parser("scan-shapes", help="fate of catalog shapes in the (P_s, P_b) plane")
    add_common(p_shapes)
    p_shapes.add_argument("--hpars", help="comma-separated longitudinal fields")

    p_patch = sub.add_parser("scan-patch", help="patch-confinement scan for a diamond bubble")
    add_common(p_patch)
    p_patch.add_argument("--hperps", required=True, help="comma-separated transverse fields")
    p_patch.add_argument("--probes-inside", required=True, help="probe sites x:y,x:y inside the patch")
    p_patch.add_argument("--probes-outside", required=True, help="probe sites x:y,x:y outside the patch")

    p_conv = sub.add_parser("scan-convergence", help="bond-dimension / time-step convergence")
    add_common(p_conv)
    p_conv.add_argument("--chis", required=True, help="comma-separated bond dimensions")
    p_conv.add_argument("--dts", help="comma-separated time steps")

    p_bg = sub.add_parser("scan-background", help="empty-mask background magnetization vs h_perp")
    add_common(p_bg)
    p_bg.add_argument("--hperps", required=True, help="comma-separated transverse fields")

    p_cat = sub.add_parser("shapes", help="emit the shape catalog with geometry stats")
    p_cat.add_argument("--config", required=True, help="INI experiment config (lattice section)")
    p_cat.add_argument("--out", help="write the catalog JSON here instead of stdout")

    args = parser.parse_args(argv)

    if args.command == "shapes":
        config = QuenchConfig.from_file(args.config)
        records = catalog_shapes(config.geometry())
        text = json.dumps(records, indent=2, sort_keys=True)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text + "\n")
        else:
            print(text)
        return 0

    config = _load_config(args)

    if args.command == "run":
        result = run_quench(config)
        print(f"fate: {result.fate}  final-window <X>: {result.final_window_mean():+.4f}")
        if result.failure:
            print(f"failure: {result.failure}", file=sys.stderr)
            return 1
        return 0
    if args.command == "scan-size":
        doc = critical_size_scan(config, _ints(args.sizes), jobs=args.jobs)
        print(json.dumps({"L_c": doc["L_c"],
                          "fates": {e["L"]: e["fate"] for e in doc["entries"]}}, indent=2))
        return 0
    if args.command == "scan-shapes":
        h_pars = _floats(args.hpars) if args.hpars else None
        doc = shape_scatter_scan(config, h_pars=h_pars, jobs=args.jobs)
        n = sum(len(p["records"]) for p in doc["panels"])
        print(f"recorded {n} shape runs over {len(doc['panels'])} h_par panels")
        return 0
    if args.command == "scan-patch":
        doc = patch_confinement_scan(
            config, _floats(args.hperps),
            _pairs(args.probes_inside), _pairs(args.probes_outside), jobs=args.jobs)
        for entry in doc["entries"]:
            print(f"h_perp={entry['h_perp']:g}  confinement metric "
                  f"{entry['confinement_metric']:.3e}")
        return 0
    if args.command == "scan-convergence":
        dts = _floats(args.dts) if args.dts else None
        doc = convergence_scan(config, _ints(args.chis), dts, jobs=args.jobs)
        for pair in doc["chi_pairs"]:
            print(f"chi {pair['chi_low']} -> {pair['chi_high']} (dt={pair['dt']:g}): "
                  f"max local diff {pair['max_local_diff']:.3e}")
        return 0
    if args.command == "scan-background":
        doc = background_scan(config, _floats(args.hperps), jobs=args.jobs)
        for entry in doc["entries"]:
            print(f"h_perp={entry['h_perp']:g}  long-time <X> {entry['long_time_mean']:+.4f}")
        return 0
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
