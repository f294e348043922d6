"""Command-line front end: sweep, fixed-iters, complexity, selftest.

Result files are written atomically (temp file + rename) and only after the
configuration validated; the JSON run manifest is always written before the
results it describes.
"""

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import replace

from . import __version__
from .config import (
    complexity_options,
    config_to_dict,
    load_document,
    resolve_config,
    validate_config,
    SCHEMA_VERSION,
)
from .harness import (
    complexity_report,
    config_hash,
    results_to_csv,
    run_ber_sweep,
    run_fixed_iteration_study,
)
from .selftest import run_selftest

logger = logging.getLogger("onebit_eq")


def _setup_logging():
    level = os.environ.get("ONEBIT_EQ_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_validated(args):
    """Load + validate the config; on failure print the error list and exit."""
    doc = load_document(args.config)
    errors = validate_config(doc)
    if errors:
        json.dump({"errors": errors}, sys.stderr, indent=2)
        sys.stderr.write("\n")
        raise SystemExit(2)
    cfg = resolve_config(doc)
    if args.seed is not None:
        cfg = replace(cfg, seed=int(args.seed))
    return cfg, doc


def _write_manifest(cfg, out_dir, outputs, extra=None):
    resolved = config_to_dict(cfg)
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "seed": cfg.seed,
        "config_echo": resolved,
        "config_sha256": config_hash(resolved),
        "outputs": outputs,
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    _atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def cmd_sweep(args):
    cfg, _ = _load_validated(args)
    out_dir = args.out
    csv_path = os.path.join(out_dir, "results.csv")
    fig_path = os.path.join(out_dir, "ber_curves.png")
    _write_manifest(cfg, out_dir, ["results.csv", "ber_curves.png"])
    logger.info("running sweep: %d realizations, %d equalizers",
                cfg.n_realizations, len(cfg.equalizers))
    points = run_ber_sweep(cfg, workers=args.workers)
    _atomic_write(csv_path, results_to_csv(points))
    from .plots import render_ber_figure

    render_ber_figure(points, fig_path)
    print(csv_path)
    return 0


def cmd_fixed_iters(args):
    cfg, _ = _load_validated(args)
    i_max_list = [int(v) for v in args.imax.split(",")]
    out_dir = args.out
    csv_path = os.path.join(out_dir, "results_fixed_iters.csv")
    fig_path = os.path.join(out_dir, "ber_fixed_iters.png")
    _write_manifest(cfg, out_dir,
                    ["results_fixed_iters.csv", "ber_fixed_iters.png"],
                    extra={"i_max_list": i_max_list})
    points = run_fixed_iteration_study(cfg, i_max_list, workers=args.workers)
    _atomic_write(csv_path, results_to_csv(points))
    from .plots import render_ber_figure

    render_ber_figure(points, fig_path, title="Uncoded BER, fixed iteration budgets")
    print(csv_path)
    return 0


def cmd_complexity(args):
    cfg, doc = _load_validated(args)
    opts = complexity_options(doc, doc["system"])
    sys_cfg = cfg.system
    rows = []
    for nb in opts["block_length_grid"]:
        overlap = min(int(opts["overlap_factor"]) * sys_cfg.channel_order, nb - 1)
        rep = complexity_report(
            sys_cfg.n_users,
            sys_cfg.n_antennas,
            sys_cfg.channel_order,
            nb,
            overlap,
            sys_cfg.coherence_time,
            int(opts["iterations"]),
            model=opts["model"],
        )
        rows.append(
            {
                "block_length": nb,
                "overlap": overlap,
                "n_unknowns": rep.n_unknowns,
                "blocks_time": rep.blocks_time,
                "blocks_freq": rep.blocks_freq,
                "t_static": rep.t_static,
                "t_per_block_iteration": rep.t_per_block_iteration,
                "t_total_time": rep.t_total_time,
                "t_total_freq": rep.t_total_freq,
            }
        )
    header = list(rows[0].keys())
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(row[h]) for h in header))
    out_dir = args.out
    csv_path = os.path.join(out_dir, "complexity.csv")
    fig_path = os.path.join(out_dir, "complexity.png")
    _write_manifest(cfg, out_dir, ["complexity.csv", "complexity.png"],
                    extra={"complexity_options": opts})
    _atomic_write(csv_path, "\n".join(lines) + "\n")
    from .plots import render_complexity_figure

    render_complexity_figure(rows, fig_path)
    print(csv_path)
    return 0


def cmd_selftest(args):
    results, digest = run_selftest(seed=args.seed if args.seed is not None else 0)
    failed = [r for r in results if not r.passed]
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"[{status}] {res.name}: {res.detail}")
    print(f"report sha256: {digest}")
    return 1 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="onebit-eq",
        description="Link-level simulator for 1-bit quantized CP-free "
                    "massive MIMO uplink detection.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="YAML/JSON config or manifest")
            p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--workers", type=int, default=1,
                       help="parallel worker processes")

    p = sub.add_parser("sweep", help="Monte-Carlo BER sweep")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fixed-iters", help="BER at fixed iteration budgets")
    common(p)
    p.add_argument("--imax", default="1,2,4,8",
                   help="comma-separated iteration budgets")
    p.set_defaults(func=cmd_fixed_iters)

    p = sub.add_parser("complexity", help="analytic complexity table")
    common(p)
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("selftest", help="run the numerical verification suite")
    common(p, needs_config=False)
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        json.dump({"errors": [{"field": "", "message": str(exc)}]}, sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
