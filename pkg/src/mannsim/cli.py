"""Command-line pipeline: drop generation, sample collection, training,
evaluation and reporting.

Every command writes a manifest with its fully resolved options next to
its outputs; `mannsim rerun --manifest <file>` replays a command from
that record and reproduces the outputs byte for byte. Knob precedence is
defaults < --config JSON < flags. MANN_THREADS caps parallelism.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .harness import (
    Campaign,
    cdf_export,
    collect_samples,
    percentile_improvements,
    read_per_ue_csv,
    run_campaign,
    write_per_ue_csv,
)
from .linklevel import ChannelParams
from .neuralnet import (
    RegressionModel,
    TrainingConfig,
    load_model,
    read_samples,
    save_model,
    train,
    write_samples,
)
from .pfr import ALL_CONFIGS, BW_LEVELS, RSRQ_THRESHOLDS, PfrConfig
from .rng import substream
from .topology import build_grid, enumerate_configs, generate_drop, load_drops, save_drop


def _load_overlay(config_path: str | None) -> dict:
    if not config_path:
        return {}
    try:
        return json.loads(Path(config_path).read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{config_path}: bad JSON at line {e.lineno}: {e.msg}") from e


def _resolve_env(ns) -> dict:
    overlay = _load_overlay(getattr(ns, "config", None))
    channel = asdict(ChannelParams())
    channel.update(overlay.get("channel", {}))
    return {
        "channel": channel,
        "inter_site_distance": float(overlay.get("inter_site_distance", 500.0)),
    }


def _env_objects(opts):
    params = ChannelParams.from_dict(opts["channel"])
    grid = build_grid(opts["inter_site_distance"])
    return grid, params


def _write_manifest(opts: dict, directory: Path, name: str = "manifest.json") -> None:
    directory.mkdir(parents=True, exist_ok=True)
    doc = {"tool": "mannsim", "version": __version__, **opts}
    (directory / name).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def _parse_config_indices(spec: str, n: int) -> list[int]:
    if spec == "all":
        return list(range(n))
    out = []
    for part in spec.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if any(i < 0 or i >= n for i in out):
        raise ValueError(f"config index out of range 0..{n - 1}: {spec!r}")
    return out


def _parse_mode(mode: str):
    """CLI mode string -> (campaign mode, static config or None)."""
    if mode == "mann":
        return "mann", None
    if mode == "full":
        return "full_reuse", None
    if mode == "hard":
        return "hard_reuse", None
    if mode == "static-sweep":
        return "static-sweep", None
    if mode.startswith("static:"):
        parts = mode.split(":")
        if len(parts) != 3:
            raise ValueError("static mode must be static:BW:THR")
        return "static", PfrConfig(int(parts[1]), int(parts[2]))
    raise ValueError(
        f"unknown mode {mode!r}; expected mann|full|hard|static:BW:THR|static-sweep"
    )


# --- command implementations (take resolved option dicts) ---------------


def run_gen_drops(opts: dict) -> None:
    grid, params = _env_objects(opts)
    configs = enumerate_configs()
    indices = _parse_config_indices(opts["configs"], len(configs))
    out = Path(opts["out"])
    out.mkdir(parents=True, exist_ok=True)
    for ci in indices:
        for inst in range(opts["instances"]):
            seed = int(substream(opts["seed"], "drops", ci, inst).integers(0, 2**63))
            drop = generate_drop(
                configs[ci], grid, seed, params, drop_id=f"c{ci:03d}i{inst}"
            )
            save_drop(drop, out / f"drop_c{ci:03d}_i{inst:02d}.csv")
    _write_manifest({"command": "gen-drops", "options": opts}, out)


def run_collect(opts: dict) -> None:
    grid, params = _env_objects(opts)
    drops = load_drops(opts["drops"])
    samples = collect_samples(
        drops,
        grid,
        opts["seed"],
        params=params,
        epochs_per_drop=opts["epochs"],
        metric_kind=opts["metric"],
    )
    out = Path(opts["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    write_samples(samples, out)
    _write_manifest(
        {"command": "collect", "options": opts}, out.parent, out.name + ".manifest.json"
    )


def run_train(opts: dict) -> None:
    samples = read_samples(opts["samples"])
    cfg = TrainingConfig(
        batch_size=opts["batch"],
        epochs=opts["epochs"],
        validation_fraction=opts["val"],
        seed=opts["seed"],
    )
    weights, norm, history = train(samples, cfg)
    model = RegressionModel(
        weights=weights, norm=norm, metric_kind=opts["metric"], training_seed=opts["seed"]
    )
    out = Path(opts["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    with out.with_name(out.stem + "_history.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss"])
        for h in history:
            w.writerow([h["epoch"], repr(h["train_loss"]), repr(h["val_loss"])])
    _write_manifest(
        {"command": "train", "options": opts}, out.parent, out.name + ".manifest.json"
    )


def _write_eval_outputs(summary, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_per_ue_csv(summary, out / "ue_throughputs.csv")
    cdf_export(summary, out / "cdf.csv")
    with (out / "cell_totals.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["drop_id", "cell_id", "total_bps", "n_ues"])
        for drop_id, cell, total, n_ues in summary.per_cell_totals:
            w.writerow([drop_id, cell, repr(float(total)), n_ues])


def run_eval(opts: dict) -> None:
    grid, params = _env_objects(opts)
    drops = load_drops(opts["drops"])
    mode, static_cfg = _parse_mode(opts["mode"])
    model = load_model(opts["model"]) if opts.get("model") else None
    out = Path(opts["out"])

    if mode == "static-sweep":
        for cfg in ALL_CONFIGS:
            camp = Campaign(
                mode="static",
                drops=drops,
                static_config=cfg,
                epochs_per_drop=opts.get("epochs"),
                metric_kind=opts["metric"],
            )
            summary = run_campaign(camp, grid=grid, params=params)
            _write_eval_outputs(
                summary, out / f"static_{cfg.center_rbs}_{cfg.rsrq_threshold}"
            )
    else:
        camp = Campaign(
            mode=mode,
            drops=drops,
            static_config=static_cfg,
            epochs_per_drop=opts.get("epochs"),
            metric_kind=opts["metric"],
        )
        trace = [] if opts.get("trace") else None
        summary = run_campaign(camp, model, grid=grid, params=params, trace=trace)
        _write_eval_outputs(summary, out)
        if trace is not None:
            with (out / "trace.jsonl").open("w") as fh:
                for rec in trace:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
    _write_manifest({"command": "eval", "options": opts}, out)


def run_report(opts: dict) -> None:
    test = read_per_ue_csv(Path(opts["test"]) / "ue_throughputs.csv")
    base = read_per_ue_csv(Path(opts["baseline"]) / "ue_throughputs.csv")
    test_keys = {(d, c, u) for d, c, u, _ in test.per_ue}
    base_keys = {(d, c, u) for d, c, u, _ in base.per_ue}
    if test_keys != base_keys:
        raise ValueError(
            f"mismatched pools: {len(test_keys - base_keys)} UEs only in test, "
            f"{len(base_keys - test_keys)} only in baseline"
        )
    table = percentile_improvements(test, base)
    out = Path(opts["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p10", "p5", "p1", "worst", "totals_ratio"])
        w.writerow(
            [
                repr(table.gains[10]),
                repr(table.gains[5]),
                repr(table.gains[1]),
                repr(table.gains[0]),
                repr(table.totals_ratio),
            ]
        )
    _write_manifest(
        {"command": "report", "options": opts}, out.parent, out.name + ".manifest.json"
    )


COMMANDS = {
    "gen-drops": run_gen_drops,
    "collect": run_collect,
    "train": run_train,
    "eval": run_eval,
    "report": run_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="mannsim",
        description="coordinated dynamic partial frequency reuse simulator",
    )
    p.add_argument("--version", action="version", version=f"mannsim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-drops", help="generate UE drop files")
    g.add_argument("--configs", default="all", help='"all" or e.g. "0-2,7"')
    g.add_argument("--instances", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--config", help="JSON overlay for channel/topology knobs")

    c = sub.add_parser("collect", help="collect random-action training samples")
    c.add_argument("--drops", required=True)
    c.add_argument("--epochs", type=int, default=30)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--metric", choices=["maxmin", "mean"], default="maxmin")
    c.add_argument("--out", required=True)
    c.add_argument("--config")

    t = sub.add_parser("train", help="train the regressor on a samples CSV")
    t.add_argument("--samples", required=True)
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--batch", type=int, default=50)
    t.add_argument("--val", type=float, default=0.2)
    t.add_argument("--metric", choices=["maxmin", "mean"], default="maxmin")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)

    e = sub.add_parser("eval", help="run an evaluation campaign")
    e.add_argument("--drops", required=True)
    e.add_argument("--mode", required=True, help="mann|full|hard|static:BW:THR|static-sweep")
    e.add_argument("--model")
    e.add_argument("--epochs", type=int)
    e.add_argument("--metric", choices=["maxmin", "mean"], default="maxmin")
    e.add_argument("--trace", action="store_true", help="write the protocol trace (mann)")
    e.add_argument("--out", required=True)
    e.add_argument("--config")

    r = sub.add_parser("report", help="percentile-gain table of test vs baseline")
    r.add_argument("--test", required=True)
    r.add_argument("--baseline", required=True)
    r.add_argument("--out", required=True)

    rr = sub.add_parser("rerun", help="replay a command from its manifest")
    rr.add_argument("--manifest", required=True)
    return p


def _resolve_options(parser: argparse.ArgumentParser, ns) -> tuple[str, dict]:
    cmd = ns.command
    if cmd == "rerun":
        doc = json.loads(Path(ns.manifest).read_text())
        return doc["command"], doc["options"]

    opts: dict = {}
    if cmd == "gen-drops":
        opts = {
            "configs": ns.configs,
            "instances": ns.instances,
            "seed": ns.seed,
            "out": ns.out,
            **_resolve_env(ns),
        }
        try:
            _parse_config_indices(ns.configs, len(enumerate_configs()))
        except ValueError as e:
            parser.error(str(e))
    elif cmd == "collect":
        opts = {
            "drops": ns.drops,
            "epochs": ns.epochs,
            "seed": ns.seed,
            "metric": ns.metric,
            "out": ns.out,
            **_resolve_env(ns),
        }
    elif cmd == "train":
        opts = {
            "samples": ns.samples,
            "epochs": ns.epochs,
            "batch": ns.batch,
            "val": ns.val,
            "metric": ns.metric,
            "seed": ns.seed,
            "out": ns.out,
        }
    elif cmd == "eval":
        try:
            mode, _ = _parse_mode(ns.mode)
        except ValueError as e:
            parser.error(str(e))
        if mode == "mann" and not ns.model:
            parser.error("--mode mann requires --model")
        opts = {
            "drops": ns.drops,
            "mode": ns.mode,
            "model": ns.model,
            "epochs": ns.epochs,
            "metric": ns.metric,
            "trace": ns.trace,
            "out": ns.out,
            **_resolve_env(ns),
        }
    elif cmd == "report":
        opts = {"test": ns.test, "baseline": ns.baseline, "out": ns.out}
    return cmd, opts


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    cmd, opts = _resolve_options(parser, ns)
    try:
        COMMANDS[cmd](opts)
    except Exception as e:  # runtime failure -> exit 1, usage errors exited above
        print(f"mannsim: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
