"""Command line front end: ``cellseer <command> [flags]``.

Commands read and write plain directories so they can be chained:

    simulate  -> <out>/raw/<E>/*.csv, <out>/truth.json
    prepare   -> <out>/*.celc, <out>/scaler.json
    fit-baseline, train, evaluate, detect, embed, plot, bench

Exit codes: 0 success, 1 usage error, 2 data/format/IO error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import ParametricConstants, fit_cycle, write_fit_table
from .cycleio import list_cycle_files, read_cycles, write_cycles
from .dataprep import ScalerConfig, load_json_config, prepare_streams, unscale_frame
from .errors import CellseerError, DataError, IdentifiabilityError, NumericalError
from .evalkit import (
    DetectionRecord,
    degradation_ordering_score,
    detect_fault,
    embedding_report,
    fault_threshold,
    read_embeddings,
    read_stats_table,
    write_detections,
    write_embeddings,
    write_stats_table,
)
from .nn.adam import AdamState, adam_step
from .nn.model import EncoderPredictor
from .nn.train import TrainConfig, train, write_history
from .nn.weightsio import read_weights, write_weights
from .pipeline import CycleSource, epoch_batches
from .report import divergence_svg, embedding_svg
from .simkit import FaultSpec, PlantConfig, inject_fault, read_streams, read_truth, simulate_electrolyzer, \
    write_streams, write_truth
from .study import MODELS, error_tables, match_truth, nn_predict_cycle, parametric_predict_cycle

log = logging.getLogger("cellseer")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


@dataclass
class RunManifest:
    command: str
    config_paths: list[str] = field(default_factory=list)
    seeds: dict = field(default_factory=dict)
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    tool_version: str = __version__
    duration_s: float = 0.0

    def write(self, directory) -> Path:
        path = Path(directory) / "manifest.json"
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(dataclasses.asdict(self), indent=1, sort_keys=True))
        tmp.replace(path)
        return path


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


# -- helpers ------------------------------------------------------------------------

def _electrolyzer_id(e) -> str:
    return f"E{e}" if isinstance(e, int) else str(e)


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require_dir(path, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise DataError(f"{what} directory {p} does not exist")
    return p


def _scaler(data_dir: Path, config) -> ScalerConfig:
    if config:
        return ScalerConfig.from_dict(load_json_config(config))
    stored = data_dir / "scaler.json"
    return ScalerConfig.from_dict(json.loads(stored.read_text())) if stored.exists() else ScalerConfig()


def _load_model(weights) -> EncoderPredictor:
    params, arch, _ = read_weights(weights)
    return EncoderPredictor(arch, params)


def _select(cycles, electrolyzers):
    if not electrolyzers:
        return cycles
    wanted = {_electrolyzer_id(e) for e in electrolyzers}
    picked = [c for c in cycles if c.electrolyzer_id in wanted]
    if not picked:
        raise DataError(f"no cycles for electrolyzers {sorted(wanted)}")
    return picked


def _stream_dirs(data: Path) -> list[Path]:
    root = data / "raw" if (data / "raw").is_dir() else data
    dirs = sorted(p for p in root.iterdir() if (p / "cells.json").exists())
    if not dirs:
        raise DataError(f"no electrolyzer stream directories under {root}")
    return dirs


def _place_faults(raw_faults, truths) -> list[FaultSpec]:
    """Fault entries name a cell and either an absolute ``fault_time`` or a
    ``cycle`` plus ``margin_min`` before that cycle's end."""
    specs = []
    for entry in raw_faults:
        entry = dict(entry)
        cell = entry["cell_id"]
        truth = next((t for t in truths if cell.startswith(t.electrolyzer_id + "-")), None)
        if truth is None:
            raise DataError(f"fault cell {cell} belongs to no simulated electrolyzer")
        if "fault_time" not in entry:
            tc = truth.cycles[int(entry.pop("cycle", -1))]
            entry["fault_time"] = float(np.floor(tc.end_min - float(entry.pop("margin_min", 60.0))))
        specs.append(FaultSpec(**entry))
    return specs


def _default_split(ids: list[str]):
    if len(ids) < 2:
        raise DataError("training needs at least two electrolyzers (one for validation)")
    if len(ids) == 2:
        return ids[:1], ids[1:]
    return ids[:-2], ids[-2:-1]


# -- commands -----------------------------------------------------------------------

def cmd_simulate(args, manifest: RunManifest):
    raw = load_json_config(args.config) if args.config else {}
    raw = dict(raw)
    faults = raw.pop("faults", [])
    plant = PlantConfig.from_dict(raw)
    out = _out_dir(args.out)
    manifest.seeds["simulation"] = args.seed
    truths = []
    for e in range(plant.electrolyzer_count):
        streams, truth = simulate_electrolyzer(plant, args.seed, e)
        truths.append(truth)
        specs = _place_faults([f for f in faults if f["cell_id"].startswith(f"E{e}-")], [truth])
        for spec in specs:
            streams = inject_fault(streams, spec)
        truth.faults.extend(specs)
        manifest.outputs.append(str(write_streams(streams, out / "raw")))
        log.info("simulated %s", truth.electrolyzer_id)
    write_truth(truths, out / "truth.json")
    manifest.outputs.append(str(out / "truth.json"))


def cmd_prepare(args, manifest: RunManifest):
    data = _require_dir(args.data, "data")
    cfg = ScalerConfig.from_dict(load_json_config(args.config)) if args.config else ScalerConfig()
    out = _out_dir(args.out)
    for d in _stream_dirs(data):
        cycles = prepare_streams(read_streams(d), cfg)
        manifest.inputs.append(str(d))
        manifest.outputs.extend(str(p) for p in write_cycles(cycles, out))
        log.info("%s: %d cycles", d.name, len(cycles))
    (out / "scaler.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))


def cmd_fit_baseline(args, manifest: RunManifest):
    data = _require_dir(args.data, "data")
    scaler = _scaler(data, None)
    consts = ParametricConstants(**load_json_config(args.config)) if args.config else ParametricConstants()
    fits = []
    for c in read_cycles(data):
        fits.extend(fit_cycle(unscale_frame(c, scaler) if c.scaled else c, consts))
    out = _out_dir(args.out)
    write_fit_table(fits, out / "fits.csv")
    manifest.outputs.append(str(out / "fits.csv"))


def cmd_train(args, manifest: RunManifest):
    data = _require_dir(args.data, "data")
    raw = load_json_config(args.config) if args.config else {}
    cfg = TrainConfig.from_dict(raw)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.batch_size is not None:
        cfg.batch_size = args.batch_size
    if args.stride is not None:
        cfg.stride = args.stride
    files = list_cycle_files(data)
    cycles = read_cycles(data)
    ids = sorted({c.electrolyzer_id for c in cycles})
    tr_ids, va_ids = _default_split(ids)
    if cfg.train_electrolyzers:
        tr_ids = [_electrolyzer_id(e) for e in cfg.train_electrolyzers]
    if cfg.val_electrolyzers:
        va_ids = [_electrolyzer_id(e) for e in cfg.val_electrolyzers]
    train_src = [CycleSource(c, cfg.stride) for c in _select(cycles, tr_ids)]
    val_src = [CycleSource(c, cfg.stride) for c in _select(cycles, va_ids)]
    model = EncoderPredictor(cfg.arch, seed=cfg.seed)
    result = train(model, train_src, val_src, cfg)
    out = _out_dir(args.out)
    write_weights(out / "weights.celw", result.model.params, cfg.arch, result.optimizer)
    write_history(result.history, out / "history.csv")
    resolved = cfg.to_dict() | {"train_electrolyzers": tr_ids, "val_electrolyzers": va_ids}
    (out / "train_config.json").write_text(json.dumps(resolved, indent=1, sort_keys=True))
    manifest.seeds["training"] = cfg.seed
    manifest.inputs.extend(str(f) for f in files)
    manifest.outputs.extend(str(out / n) for n in ("weights.celw", "history.csv", "train_config.json"))


def _predictions(args, data: Path, cycles):
    scaler = _scaler(data, None)
    model = _load_model(args.weights)
    return {
        "nn": [nn_predict_cycle(model, c, scaler) for c in cycles],
        "parametric": [parametric_predict_cycle(c, scaler, ParametricConstants()) for c in cycles],
    }


def cmd_evaluate(args, manifest: RunManifest):
    data = _require_dir(args.data, "data")
    cfg = load_json_config(args.config) if args.config else {}
    cycles = _select(read_cycles(data), cfg.get("electrolyzers"))
    preds = _predictions(args, data, cycles)
    inter, intra, thresholds = {}, {}, {}
    for name in MODELS:
        inter[name], intra[name], _ = error_tables(preds[name])
        thresholds[name] = dataclasses.asdict(fault_threshold(intra[name], args.threshold_tolerance_mv))
    out = _out_dir(args.out)
    write_stats_table(inter, out / "inter_cycle.csv")
    write_stats_table(intra, out / "intra_cycle.csv")
    (out / "thresholds.json").write_text(json.dumps(thresholds, indent=1, sort_keys=True))
    manifest.inputs.append(str(args.weights))
    manifest.outputs.extend(str(out / n) for n in ("inter_cycle.csv", "intra_cycle.csv", "thresholds.json"))
    print(json.dumps({n: {"inter_mu_mV": inter[n].mu, "threshold_mV": thresholds[n]["value"]} for n in MODELS}))


def cmd_detect(args, manifest: RunManifest):
    """Scan every cell of every cycle; thresholds come from a prior ``evaluate`` run."""
    data = _require_dir(args.data, "data")
    stats_path = Path(args.stats) if args.stats else Path(args.out) / "intra_cycle.csv"
    if not stats_path.exists():
        raise DataError(f"intra-cycle statistics {stats_path} not found; run evaluate first or pass --stats")
    intra = read_stats_table(stats_path)
    cfg = load_json_config(args.config) if args.config else {}
    cycles = _select(read_cycles(data), cfg.get("electrolyzers"))
    faults = {}
    if args.truth:
        for t in read_truth(args.truth):
            faults.update({f.cell_id: f.fault_time for f in t.faults})
    preds = _predictions(args, data, cycles)
    records, rows, thresholds = [], [], {}
    for name in MODELS:
        thresholds[name] = fault_threshold(intra[name], args.threshold_tolerance_mv)
        for p in preds[name]:
            for j, cell in enumerate(p.cell_ids):
                ft = faults.get(cell)
                if ft is not None and not p.minutes[0] <= ft <= p.minutes[-1] + 1:
                    ft = None
                d = p.divergence(j)
                rec = detect_fault(d, thresholds[name], args.persistence_min, times=p.minutes,
                                   cell_id=cell, fault_time=ft)
                if rec is None:
                    continue
                records.append({"model": name, "electrolyzer": p.electrolyzer_id, "cycle": p.cycle_index,
                                **rec.to_dict()})
                rows.extend((name, p.electrolyzer_id, p.cycle_index, cell, t, v) for t, v in zip(p.minutes, d))
    out = _out_dir(args.out)
    write_detections(records, out / "detections.json")
    with open(out / "divergence.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "electrolyzer", "cycle", "cell", "minute", "divergence_mV"])
        w.writerows((m, e, c, cell, repr(float(t)), repr(float(v))) for m, e, c, cell, t, v in rows)
    (out / "thresholds.json").write_text(json.dumps(
        {n: dataclasses.asdict(t) for n, t in thresholds.items()}, indent=1, sort_keys=True))
    manifest.inputs.extend([str(args.weights), str(stats_path)])
    manifest.outputs.extend(str(out / n) for n in ("detections.json", "divergence.csv", "thresholds.json"))
    print(json.dumps({"detections": len(records)}))


def cmd_embed(args, manifest: RunManifest):
    data = _require_dir(args.data, "data")
    model = _load_model(args.weights)
    cycles = read_cycles(data)
    rows = embedding_report(model, cycles)
    out = _out_dir(args.out)
    write_embeddings(rows, out / "embeddings.csv")
    manifest.outputs.append(str(out / "embeddings.csv"))
    if args.truth:
        truths = {t.electrolyzer_id: t for t in read_truth(args.truth)}
        scores = []
        for c in cycles:
            codes = np.array([[r["code_x"], r["code_y"]] for r in rows
                              if r["electrolyzer"] == c.electrolyzer_id and r["cycle"] == c.cycle_index])
            degradation = [cell.degradation for cell in match_truth(c, truths[c.electrolyzer_id]).cells]
            scores.append({"electrolyzer": c.electrolyzer_id, "cycle": c.cycle_index,
                           "abs_spearman": degradation_ordering_score(codes, degradation)})
        (out / "ordering.json").write_text(json.dumps(scores, indent=1))
        manifest.outputs.append(str(out / "ordering.json"))


def cmd_plot(args, manifest: RunManifest):
    """Render ``embedding.svg`` / ``divergence.svg`` from the tables in ``--data``."""
    data = _require_dir(args.data, "report")
    out = _out_dir(args.out)
    emb = data / "embeddings.csv"
    if emb.exists():
        (out / "embedding.svg").write_text(embedding_svg(read_embeddings(emb)))
        manifest.outputs.append(str(out / "embedding.svg"))
    div = data / "divergence.csv"
    if div.exists():
        thresholds = json.loads((data / "thresholds.json").read_text())
        detections = json.loads((data / "detections.json").read_text())
        series = {}
        with open(div) as fh:
            for r in csv.DictReader(fh):
                key = (r["model"], r["electrolyzer"], r["cycle"], r["cell"])
                series.setdefault(key, ([], []))
                series[key][0].append(float(r["minute"]))
                series[key][1].append(float(r["divergence_mV"]))
        cells = sorted({k[1:] for k in series})
        for e, c, cell in cells:
            picked = {m: series[(m, e, c, cell)] for m in MODELS if (m, e, c, cell) in series}
            fault_time = next((d["fault_time"] for d in detections if d["cell_id"] == cell
                               and d["fault_time"] is not None), None)
            svg = divergence_svg(picked, {m: thresholds[m]["value"] for m in picked}, fault_time)
            path = out / f"divergence_{cell}_c{int(c):03d}.svg"
            path.write_text(svg)
            manifest.outputs.append(str(path))
    if not manifest.outputs:
        raise DataError(f"nothing to plot in {data} (no embeddings.csv or divergence.csv)")


def cmd_bench(args, manifest: RunManifest):
    data = _require_dir(args.data, "data")
    cfg = TrainConfig.from_dict(load_json_config(args.config)) if args.config else TrainConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.batch_size is not None:
        cfg.batch_size = args.batch_size
    if args.stride is not None:
        cfg.stride = args.stride
    sources = [CycleSource(p, cfg.stride) for p in list_cycle_files(data)]
    pipe = cfg.pipeline()
    monitor = []
    t0 = time.perf_counter()
    n_examples = sum(len(b) for b in epoch_batches(sources, pipe, 0, monitor))
    pipe_s = time.perf_counter() - t0
    model = EncoderPredictor(cfg.arch, seed=cfg.seed)
    opt = AdamState(lr=cfg.lr)
    steps, t0 = 0, time.perf_counter()
    for b in epoch_batches(sources, pipe, 0):
        _, grads = model.loss_and_grads(b.startups, b.startup_index, b.windows, b.targets)
        adam_step(model.params, grads, opt)
        steps += 1
        if steps >= args.steps:
            break
    train_s = time.perf_counter() - t0
    report = {
        "examples": n_examples,
        "examples_per_s": n_examples / pipe_s if pipe_s > 0 else float("inf"),
        "steps": steps,
        "steps_per_s": steps / train_s if train_s > 0 else float("inf"),
        "peak_buffer_occupancy": max((m.peak_occupancy for m in monitor), default=0),
        "buffer_capacity": cfg.buffer_capacity,
    }
    if args.out:
        out = _out_dir(args.out)
        (out / "bench.json").write_text(json.dumps(report, indent=1))
        manifest.outputs.append(str(out / "bench.json"))
    print(json.dumps(report))


COMMANDS = {
    "simulate": cmd_simulate, "prepare": cmd_prepare, "fit-baseline": cmd_fit_baseline,
    "train": cmd_train, "evaluate": cmd_evaluate, "detect": cmd_detect, "embed": cmd_embed,
    "plot": cmd_plot, "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cellseer", description="Electrolyzer cell voltage modelling and fault detection.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help_, data=True, out=True, weights=False, **extra):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON configuration file")
        if data:
            p.add_argument("--data", required=True, help="input directory")
        if out:
            p.add_argument("--out", required=extra.get("out_required", True), help="output directory")
        if weights:
            p.add_argument("--weights", required=True, help="weight file from train")
        return p

    p = add("simulate", "simulate raw plant telemetry and ground truth", data=False)
    p.add_argument("--seed", type=int, default=0)
    add("prepare", "align, cut and scale raw streams into cycle files")
    add("fit-baseline", "fit the parametric model per cell and cycle")
    p = add("train", "train the encoder/predictor network")
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--stride", type=int)
    for name, help_ in (("evaluate", "error statistics of both models"), ("detect", "divergence-based fault detection")):
        p = add(name, help_, weights=True)
        p.add_argument("--threshold-tolerance-mv", type=float, default=10.0)
        if name == "detect":
            p.add_argument("--persistence-min", type=int, default=5)
            p.add_argument("--stats", help="intra_cycle.csv from evaluate (default: <out>/intra_cycle.csv)")
            p.add_argument("--truth", help="truth.json for lead times")
    p = add("embed", "export startup encodings", weights=True)
    p.add_argument("--truth", help="truth.json for degradation ordering scores")
    add("plot", "render SVG plots from report tables")
    p = add("bench", "measure pipeline and training throughput", out_required=False)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--steps", type=int, default=20, help="training steps to time")
    return parser


def _configure_logging():
    level = os.environ.get("CELLSEER_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    manifest = RunManifest(command=args.command, config_paths=[args.config] if args.config else [])
    if getattr(args, "data", None):
        manifest.inputs.append(str(args.data))
    t0 = time.perf_counter()
    try:
        COMMANDS[args.command](args, manifest)
        manifest.duration_s = time.perf_counter() - t0
        if getattr(args, "out", None):
            manifest.write(args.out)
    except (NumericalError, FloatingPointError) as exc:
        print(f"cellseer {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CellseerError, OSError, ValueError, KeyError) as exc:
        kind = "identifiability" if isinstance(exc, IdentifiabilityError) else "data"
        print(f"cellseer {args.command}: {kind} error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
