"""Command-line front end: ``ensdiv {train,decompose,bound,fisher,verify,report}``.

An experiment config is a JSON object::

    {
      "name": "sine",
      "data": {"kind": "sine", "n": 200, "seed": 0},
      "split": {"train_fraction": 0.5, "seed": 0},
      "standardize": false,
      "seeds": [0, 1, 2],
      "train": {"loss_kind": "sq", "objective": "p2b", "epochs": 100},
      "bound": {"xi": 0.05, "epsilon": "omit"}
    }

``data`` is either a synthetic spec or ``{"csv": PATH, "target": NAME,
"delimiter": "semicolon", "n_classes": null}``; relative CSV paths are
resolved against the config file. Flags override the matching scalar
fields. Exit codes: 0 success, 1 invariant violation, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import statistics
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import serialize
from .data import SyntheticSpec, generate, load_csv, split, standardize
from .diversity import decompose
from .fisher import variance_lower_bound
from .losses import Dataset, LossKind, Task
from .pacbayes import EpsilonMode, Prior, pac_bound
from .trainers import JsonlLog, Objective, TrainConfig, resolve_prior, train
from .verify import run_all

logger = logging.getLogger("ensdiv")

TABLE_COLUMNS = ("algorithm", "seed", "split", "metric", "value")


class UsageError(Exception):
    """Bad arguments, unreadable inputs or an invalid config (exit code 2)."""


def _read_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(config, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    config["_base"] = str(path.parent)
    return config


def _dataset_from_config(section: dict, base: str) -> Dataset:
    section = dict(section)
    if "csv" in section:
        n_classes = section.get("n_classes")
        task = Task.classification(n_classes) if n_classes else Task.regression()
        path = Path(section["csv"])
        if not path.is_absolute():
            path = Path(base) / path
        return load_csv(path, section.get("delimiter", ","), section.get("target", "quality"), task)
    if "centers" in section and section["centers"] is not None:
        section["centers"] = tuple(tuple(c) for c in section["centers"])
    return generate(SyntheticSpec(**section))


def _load_data_arg(args, n_classes=None) -> Dataset:
    task = Task.classification(n_classes) if n_classes else Task.regression()
    return load_csv(args.data, args.delimiter, args.target, task)


def _loss_for(task: Task, requested) -> LossKind:
    if requested:
        return LossKind.parse(requested)
    return LossKind.CROSS_ENTROPY if task.is_classification else LossKind.SQUARED_ERROR


def _split_results(ensemble, data: Dataset, config: TrainConfig, prior: Prior, bound_section: dict) -> dict:
    out = {}
    kinds = [config.loss_kind]
    if data.task.is_classification:
        kinds.append(LossKind.ZERO_ONE)
    for kind in kinds:
        r = decompose(ensemble, data, kind, tight_ce=config.tight_ce)
        prefix = "" if kind is config.loss_kind else f"{kind.value}_"
        out[prefix + "ensemble_loss"] = r.ensemble_loss
        out[prefix + "avg_individual_loss"] = r.avg_individual_loss
        out[prefix + "diversity"] = r.diversity
        out[prefix + "gap"] = r.gap
        mode = bound_section.get("epsilon", "hoeffding" if kind is LossKind.ZERO_ONE else "omit")
        b = pac_bound(ensemble, data, prior=prior, mixture_sigma2=config.mixture_sigma2, lam=config.lam,
                      xi=bound_section.get("xi", 0.05), kind=kind, epsilon_mode=EpsilonMode.parse(mode))
        out[prefix + "pac_bound"] = b.bound
    return out


def _aggregate(per_seed: list[dict]) -> dict:
    agg = {}
    for split_name in ("train", "test"):
        metrics = per_seed[0][split_name].keys()
        agg[split_name] = {}
        for metric in metrics:
            values = [entry[split_name][metric] for entry in per_seed]
            sd = statistics.stdev(values) if len(values) > 1 else 0.0
            agg[split_name][metric] = {"mean": statistics.fmean(values), "sd": sd}
    return agg


def _apply_overrides(train_section: dict, args) -> dict:
    section = dict(train_section)
    if args.loss:
        section["loss_kind"] = args.loss
    if args.algorithm:
        section["objective"] = args.algorithm
    if args.tight_ce:
        section["tight_ce"] = True
    return section


def cmd_train(args) -> int:
    config = _read_config(args.config)
    name = config.get("name", Path(args.config).stem)
    if args.delimiter:
        config.setdefault("data", {})["delimiter"] = args.delimiter
    try:
        data = _dataset_from_config(config.get("data", {}), config["_base"])
        split_section = config.get("split", {"train_fraction": 0.5, "seed": 0})
        parts = split(data, split_section.get("train_fraction", 0.5), split_section.get("seed", 0))
        train_data, test_data = parts.train, parts.test
        if config.get("standardize", False):
            train_data, test_data, _ = standardize(train_data, test_data)
        base = TrainConfig.from_dict(_apply_overrides(config.get("train", {}), args))
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"invalid config {args.config}: {exc}") from None
    seeds = [args.seed] if args.seed is not None else list(config.get("seeds", [base.seed]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    per_seed = []
    for seed in seeds:
        cfg = replace(base, seed=int(seed))
        log = JsonlLog()
        start = time.perf_counter()
        ensemble = train(cfg, train_data, log)
        stem = f"{name}-{cfg.objective.value}-s{seed}"
        serialize.save_ensemble(ensemble, out / f"{stem}.model.json")
        log.write(out / f"{stem}.log.jsonl")
        bound_section = config.get("bound", {})
        prior = resolve_prior(cfg, train_data)
        per_seed.append({
            "seed": int(seed),
            "train": _split_results(ensemble, train_data, cfg, prior, bound_section),
            "test": _split_results(ensemble, test_data, cfg, prior, bound_section),
        })
        logger.info("trained %s in %.1fs", stem, time.perf_counter() - start)
    report = {
        "name": name,
        "algorithm": base.objective.value,
        "config": {k: v for k, v in config.items() if not k.startswith("_")},
        "train_config": base.to_dict(),
        "results": per_seed,
        "aggregate": _aggregate(per_seed),
    }
    suffix = f"-s{args.seed}" if args.seed is not None else ""
    path = serialize.write_json(report, out / f"{name}-{base.objective.value}{suffix}.report.json")
    print(path)
    return 0


def _emit(report, args, stem: str) -> int:
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        print(serialize.write_json(report, out / f"{stem}.report.json"))
    else:
        print(serialize.dumps(report, indent=2, sort_keys=True))
    return 0


def cmd_decompose(args) -> int:
    ensemble = serialize.load_ensemble(args.model)
    data = _load_data_arg(args, ensemble.task.n_classes)
    kind = _loss_for(data.task, args.loss)
    report = decompose(ensemble, data, kind, tight_ce=args.tight_ce)
    return _emit(report.to_dict(), args, f"{Path(args.model).name.removesuffix('.model.json')}-decompose")


def cmd_bound(args) -> int:
    ensemble = serialize.load_ensemble(args.model)
    data = _load_data_arg(args, ensemble.task.n_classes)
    kind = _loss_for(data.task, args.loss) if args.loss else None
    prior = Prior(args.prior_variance, ensemble.models[0].n_parameters)
    mode = {"mode": args.epsilon, "value": args.epsilon_value, "range": 1.0}
    report = pac_bound(ensemble, data, prior=prior, mixture_sigma2=args.mixture_sigma2, lam=args.lam,
                       xi=args.xi, kind=kind, epsilon_mode=EpsilonMode.parse(mode))
    return _emit(report.to_dict(), args, f"{Path(args.model).name.removesuffix('.model.json')}-bound")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def cmd_fisher(args) -> int:
    report = variance_lower_bound(_floats(args.p), _floats(args.f))
    return _emit(report.to_dict(), args, "fisher")


def cmd_verify(args) -> int:
    results = run_all(args.scale)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} invariants hold")
    return 1 if failed else 0


def table_rows(reports: list[dict]) -> list[tuple]:
    rows = []
    for report in reports:
        algorithm = report["algorithm"]
        for entry in report["results"]:
            for split_name in ("train", "test"):
                for metric, value in entry[split_name].items():
                    rows.append((algorithm, str(entry["seed"]), split_name, metric, value))
    rows.sort(key=lambda r: (r[0], int(r[1]), r[2], r[3]))
    return rows


def cmd_report(args) -> int:
    paths = sorted(p for source in args.inputs for p in _report_paths(Path(source)))
    if not paths:
        raise UsageError("no *.report.json files found")
    reports, seen = [], set()
    for path in paths:
        report = serialize.read_json(path)
        if "results" not in report or "algorithm" not in report:
            raise UsageError(f"{path} is not a training report")
        key = (report["algorithm"], tuple(e["seed"] for e in report["results"]))
        if key not in seen:
            seen.add(key)
            reports.append(report)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS)
    for algorithm, seed, split_name, metric, value in table_rows(reports):
        writer.writerow([algorithm, seed, split_name, metric, repr(float(value))])
    out = Path(args.out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "experiment.table.csv"
    out.write_text(buffer.getvalue(), encoding="utf-8")
    print(out)
    return 0


def _report_paths(source: Path):
    if source.is_dir():
        return source.glob("*.report.json")
    if source.exists():
        return [source]
    raise UsageError(f"no such report file or directory: {source}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ensdiv", description="Ensemble diversity, decompositions and bounds.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an ensemble from a JSON experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".")
    p.add_argument("--loss", choices=["sq", "ce", "01"])
    p.add_argument("--algorithm", choices=[o.value for o in Objective])
    p.add_argument("--tight-ce", action="store_true")
    p.add_argument("--delimiter", choices=["comma", "semicolon"], help="overrides data.delimiter for CSV data")
    p.set_defaults(handler=cmd_train)

    for name, handler, help_text in (("decompose", cmd_decompose, "loss/diversity decomposition"),
                                     ("bound", cmd_bound, "PAC-Bayes bound of a saved ensemble")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--model", required=True)
        p.add_argument("--data", required=True, help="CSV file with a header row")
        p.add_argument("--target", default="target")
        p.add_argument("--delimiter", choices=["comma", "semicolon"], default="comma")
        p.add_argument("--loss", choices=["sq", "ce", "01"])
        p.add_argument("--out")
        p.set_defaults(handler=handler)
        if name == "decompose":
            p.add_argument("--tight-ce", action="store_true")
        else:
            p.add_argument("--lam", type=float, default=2.0)
            p.add_argument("--xi", type=float, default=0.05)
            p.add_argument("--prior-variance", type=float, default=1.0)
            p.add_argument("--mixture-sigma2", type=float, default=1e-4)
            p.add_argument("--epsilon", choices=["hoeffding", "user", "omit"], default="omit")
            p.add_argument("--epsilon-value", type=float, default=0.0)

    p = sub.add_parser("fisher", help="Fisher-information lower bound on a weighted variance")
    p.add_argument("--p", required=True, help="free categorical weights, e.g. 0.2,0.3")
    p.add_argument("--f", required=True, help="function values, one more than --p")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_fisher)

    p = sub.add_parser("verify", help="run the invariant suite")
    p.add_argument("--scale", type=float, default=1.0, help="multiplier on the number of random instances")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("report", help="collect training reports into a long-format CSV table")
    p.add_argument("inputs", nargs="+", help="report files or directories")
    p.add_argument("--out", required=True, help="*.table.csv path or output directory")
    p.set_defaults(handler=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"ensdiv: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"ensdiv: error: {exc}", file=sys.stderr)
        return 2
    except ArithmeticError as exc:
        print(f"ensdiv: invariant violated: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
