"""Single executable exposing the pipeline as subcommands.

Subcommands: ingest, train, evaluate, gridsearch, simulate, datagen, and
pipeline (the first four plus simulate chained in one invocation). Every
parameter can come from a flat key=value config file (--config); flags
override config keys. Each run writes a run-manifest capturing the effective
parameters; a manifest is itself a valid config file, so any run can be
reproduced with --config <manifest>.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric
divergence during training.
"""

from __future__ import annotations

import argparse
import sys
from itertools import product
from pathlib import Path

from . import cachesim, datagen, gridsearch, ingest, model, training
from .errors import ParseError, TrainingDivergedError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3

DEFAULT_SEED = 42
DEFAULT_RATIO = 0.7
DEFAULT_VAL_RATIO = 0.2


class ConfigError(ValueError):
    """Invalid or missing configuration; message names the offending field."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 instead of argparse's 2
        raise ConfigError(message)


def load_config(path: str | Path) -> dict[str, str]:
    """Flat key=value file; blank lines and full-line # comments are ignored."""
    config: dict[str, str] = {}
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config: file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"config: {path}:{line_no}: expected key=value, got {stripped!r}")
            key, _, value = stripped.partition("=")
            config[key.strip()] = value.strip()
    unknown = config.keys() - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"config: unknown keys: {', '.join(sorted(unknown))}")
    return config


def _cast_bool(value: str) -> bool:
    lowered = value.lower()
    if lowered in ("1", "true", "yes"):
        return True
    if lowered in ("0", "false", "no"):
        return False
    raise ValueError(value)


def _cast_int_list(value: str) -> list[int]:
    return [int(v) for v in value.split(",") if v.strip()]


def _cast_float_list(value: str) -> list[float]:
    return [float(v) for v in value.split(",") if v.strip()]


def _cast_str_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


class _Resolver:
    """Merge CLI flags over config keys over defaults, with typed casting."""

    def __init__(self, args: argparse.Namespace, config: dict[str, str]):
        self.args = args
        self.config = config
        self.effective: dict[str, object] = {}

    def get(self, key, *, default=None, cast=None, required=False, choices=None):
        value = getattr(self.args, key, None)
        if value is None:
            value = self.config.get(key)
        if value is None:
            value = default
        elif cast is not None and isinstance(value, str):
            try:
                value = cast(value)
            except ValueError:
                raise ConfigError(f"{key}: cannot parse {value!r}") from None
        if value is None and required:
            raise ConfigError(f"{key}: required (flag --{key.replace('_', '-')} or config key)")
        if value is not None and choices is not None and value not in choices:
            raise ConfigError(f"{key}: must be one of {', '.join(map(str, choices))}, got {value}")
        if value is not None:
            self.effective[key] = value
        return value

    def input_file(self, key, *, required=True) -> Path | None:
        value = self.get(key, required=required)
        if value is None:
            return None
        path = Path(value)
        if not path.is_file():
            raise ConfigError(f"{key}: file not found: {path}")
        return path


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def write_manifest(report_dir: Path, command: str, params: dict[str, object]) -> Path:
    """Persist the effective parameters as a reusable config file."""
    report_dir.mkdir(parents=True, exist_ok=True)
    path = report_dir / f"run-manifest-{command}.txt"
    lines = ["# cdnmf run manifest", f"# command={command}"]
    lines.extend(f"{key}={_format_value(params[key])}" for key in sorted(params))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# --------------------------------------------------------------------------
# subcommand bodies (shared by the standalone commands and `pipeline`)


def _run_ingest(params: dict) -> None:
    logs = Path(params["logs"])
    mode = ingest.Mode(params["mode"])
    out = Path(params["out"])
    errors = "skip" if params.get("skip_bad_lines") else "raise"
    stats = ingest.LogFileStats()
    records = list(
        ingest.read_log_file(logs, delimiter=params["delimiter"], errors=errors, stats=stats)
    )
    agg = ingest.aggregate_interactions(records, mode)

    out.parent.mkdir(parents=True, exist_ok=True)
    ingest.write_interactions(agg.triples, out)
    base = out.with_suffix("")
    ingest.write_idmap(agg.users, Path(f"{base}.users.csv"))
    ingest.write_idmap(agg.items, Path(f"{base}.items.csv"))
    if params.get("events_out"):
        events = cachesim.events_from_records(records, mode, agg.users, agg.items)
        cachesim.write_events(events, Path(params["events_out"]))

    if stats.data_lines == 0:
        print(f"warning: no data lines in {logs}", file=sys.stderr)
    print(f"lines={stats.data_lines}")
    if stats.bad_lines:
        print(f"bad_lines={stats.bad_lines}")
    print(f"skips={agg.skipped}")
    print(f"users={len(agg.users)}")
    print(f"items={len(agg.items)}")
    print(f"triples={len(agg.triples)}")
    write_manifest(Path(params["report_dir"]), "ingest", params)


def _run_train(params: dict) -> model.FactorModel:
    triples = ingest.read_interactions(params["interactions"])
    if not triples:
        raise ConfigError(f"interactions: no rows in {params['interactions']}")
    split = training.split_train_test(triples, params["ratio"], params["seed"])
    hyper = model.Hyperparams(
        n_factors=params["k"],
        alpha=params["alpha"],
        beta=params["beta"],
        iterations=params["iters"],
        seed=params["seed"],
    )
    fitted = training.train(split.train, params["variant"], hyper)
    model_out = Path(params["model_out"])
    model_out.parent.mkdir(parents=True, exist_ok=True)
    model.save_model(fitted, model_out)
    print(f"variant={fitted.variant}")
    print(f"n_train={len(split.train)}")
    print(f"n_test={len(split.test)}")
    print(f"n_users={fitted.n_users}")
    print(f"n_items={fitted.n_items}")
    print(f"final_train_loss={fitted.final_train_loss!r}")
    print(f"model={model_out}")
    write_manifest(Path(params["report_dir"]), "train", params)
    return fitted


def _run_evaluate(params: dict) -> training.EvalReport:
    fitted = model.load_model(params["model"])
    if params.get("test"):
        testset = ingest.read_interactions(params["test"])
    else:
        triples = ingest.read_interactions(params["interactions"])
        if not triples:
            raise ConfigError(f"interactions: no rows in {params['interactions']}")
        testset = training.split_train_test(triples, params["ratio"], params["seed"]).test
    if not testset:
        raise ConfigError("test: no rows to evaluate")
    report = training.evaluate_rmse(fitted, testset)
    report_dir = Path(params["report_dir"])
    _write_text(report_dir / "eval_report.txt", training.eval_report_kv(report))
    _write_text(
        report_dir / "eval_report.csv",
        training.EVAL_CSV_HEADER + "\n" + training.eval_report_csv_row(report) + "\n",
    )
    print(training.eval_report_kv(report), end="")
    write_manifest(report_dir, "evaluate", params)
    return report


def _run_simulate(params: dict) -> list[cachesim.CacheSimResult]:
    events = cachesim.read_events(params["events"])
    policy_names = params["policies"]
    fitted = None
    if "mfscore" in policy_names:
        if not params.get("model"):
            raise ConfigError("model: required when policies include mfscore")
        fitted = model.load_model(params["model"])

    def make_policy(name: str):
        if name == "lru":
            return cachesim.LRUPolicy()
        if name == "lfu":
            return cachesim.LFUPolicy()
        if name == "mfscore":
            return cachesim.MFScorePolicy(fitted)
        raise ConfigError(f"policies: unknown policy {name!r}")

    runs = [(make_policy(name), cap) for name, cap in product(policy_names, params["capacities"])]
    jobs = params.get("jobs", 1)
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda rc: cachesim.run_simulation(events, *rc), runs))
    else:
        results = [cachesim.run_simulation(events, policy, cap) for policy, cap in runs]

    lines = [cachesim.RESULT_CSV_HEADER] + [cachesim.result_csv_row(r) for r in results]
    report_dir = Path(params["report_dir"])
    _write_text(report_dir / "cache_sim.csv", "\n".join(lines) + "\n")
    for line in lines:
        print(line)
    write_manifest(report_dir, "simulate", params)
    return results


# --------------------------------------------------------------------------
# subcommand handlers


def cmd_ingest(args) -> int:
    r = _Resolver(args, _config_of(args))
    params = {
        "logs": str(r.input_file("logs")),
        "mode": r.get("mode", required=True, choices=("livetv", "vod")),
        "out": r.get("out", required=True),
        "delimiter": r.get("delimiter", default=","),
        "report_dir": r.get("report_dir", default="."),
        "skip_bad_lines": r.get("skip_bad_lines", default=False, cast=_cast_bool),
    }
    events_out = r.get("events_out")
    if events_out:
        params["events_out"] = events_out
    _run_ingest(params)
    return EXIT_OK


def _train_params(r: _Resolver) -> dict:
    return {
        "interactions": str(r.input_file("interactions")),
        "variant": r.get("variant", required=True, choices=(model.PLAIN, model.BIASED)),
        "k": r.get("k", required=True, cast=int),
        "alpha": r.get("alpha", required=True, cast=float),
        "beta": r.get("beta", required=True, cast=float),
        "iters": r.get("iters", required=True, cast=int),
        "seed": r.get("seed", default=DEFAULT_SEED, cast=int),
        "ratio": _check_ratio("ratio", r.get("ratio", default=DEFAULT_RATIO, cast=float)),
        "model_out": r.get("model_out", required=True),
        "report_dir": r.get("report_dir", default="."),
    }


def _check_ratio(key: str, value: float) -> float:
    if not 0 < value < 1:
        raise ConfigError(f"{key}: must be in (0, 1), got {value}")
    return value


def cmd_train(args) -> int:
    r = _Resolver(args, _config_of(args))
    _run_train(_train_params(r))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    r = _Resolver(args, _config_of(args))
    params = {
        "model": str(r.input_file("model")),
        "report_dir": r.get("report_dir", default="."),
    }
    test = r.input_file("test", required=False)
    if test is not None:
        params["test"] = str(test)
    else:
        interactions = r.input_file("interactions", required=False)
        if interactions is None:
            raise ConfigError("test: give --test or --interactions with --ratio/--seed")
        params["interactions"] = str(interactions)
        params["ratio"] = _check_ratio("ratio", r.get("ratio", default=DEFAULT_RATIO, cast=float))
        params["seed"] = r.get("seed", default=DEFAULT_SEED, cast=int)
    _run_evaluate(params)
    return EXIT_OK


def cmd_gridsearch(args) -> int:
    r = _Resolver(args, _config_of(args))
    interactions = r.input_file("interactions")
    variant = r.get("variant", required=True, choices=(model.PLAIN, model.BIASED))
    ratio = _check_ratio("ratio", r.get("ratio", default=DEFAULT_RATIO, cast=float))
    val_ratio = _check_ratio(
        "val_ratio", r.get("val_ratio", default=DEFAULT_VAL_RATIO, cast=float)
    )
    seed = r.get("seed", default=DEFAULT_SEED, cast=int)
    jobs = r.get("jobs", default=1, cast=int)
    grid = gridsearch.Grid(
        k_values=tuple(r.get("grid_k", required=True, cast=_cast_int_list)),
        alpha_values=tuple(r.get("grid_alpha", required=True, cast=_cast_float_list)),
        beta_values=tuple(r.get("grid_beta", required=True, cast=_cast_float_list)),
        iterations=r.get("iters", required=True, cast=int),
    )
    report_dir = Path(r.get("report_dir", default="."))
    model_out = r.get("model_out")

    triples = ingest.read_interactions(interactions)
    if not triples:
        raise ConfigError(f"interactions: no rows in {interactions}")
    split = training.split_train_test(triples, ratio, seed)
    report = gridsearch.grid_search(split.train, variant, grid, val_ratio, seed, jobs=jobs)

    # retrain the winner on the full train split, score on the held-out test
    winner = training.train(split.train, variant, report.best)
    final = training.evaluate_rmse(winner, split.test)
    if model_out:
        Path(model_out).parent.mkdir(parents=True, exist_ok=True)
        model.save_model(winner, Path(model_out))

    _write_text(report_dir / "grid_trials.csv", gridsearch.trials_csv(report))
    best_block = gridsearch.winner_kv(report) + f"test_rmse={final.rmse!r}\n"
    _write_text(report_dir / "grid_best.txt", best_block)
    print(f"trials={len(report.trials)}")
    print(best_block, end="")

    params = {
        "interactions": str(interactions),
        "variant": variant,
        "ratio": ratio,
        "val_ratio": val_ratio,
        "seed": seed,
        "jobs": jobs,
        "grid_k": list(grid.k_values),
        "grid_alpha": list(grid.alpha_values),
        "grid_beta": list(grid.beta_values),
        "iters": grid.iterations,
        "report_dir": str(report_dir),
    }
    if model_out:
        params["model_out"] = model_out
    write_manifest(report_dir, "gridsearch", params)
    return EXIT_OK


def cmd_simulate(args) -> int:
    r = _Resolver(args, _config_of(args))
    params = {
        "events": str(r.input_file("events")),
        "policies": r.get("policies", required=True, cast=_cast_str_list),
        "capacities": r.get("capacities", required=True, cast=_cast_int_list),
        "jobs": r.get("jobs", default=1, cast=int),
        "report_dir": r.get("report_dir", default="."),
    }
    for name in params["policies"]:
        if name not in ("lru", "lfu", "mfscore"):
            raise ConfigError(f"policies: unknown policy {name!r}")
    if any(c < 1 for c in params["capacities"]):
        raise ConfigError("capacities: must be >= 1")
    if "mfscore" in params["policies"]:
        params["model"] = str(r.input_file("model"))
    _run_simulate(params)
    return EXIT_OK


def cmd_datagen(args) -> int:
    r = _Resolver(args, _config_of(args))
    kind = r.get("kind", required=True, choices=("logs", "ratings"))
    out = r.get("out", required=True)
    config = datagen.SynthConfig(
        n_users=r.get("users", required=True, cast=int),
        n_items=r.get("items", required=True, cast=int),
        zipf_s=r.get("zipf_s", default=1.1, cast=float),
        k_true=r.get("k_true", default=2, cast=int),
        noise_sigma=r.get("noise_sigma", default=0.0, cast=float),
        n_events=r.get("n_events", required=True, cast=int),
        seed=r.get("seed", default=DEFAULT_SEED, cast=int),
    )
    report_dir = Path(r.get("report_dir", default="."))
    model_out = r.get("model_out")

    out_path = Path(out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if kind == "logs":
        records = datagen.generate_logs(config)
        ingest.write_log_file(records, out_path)
        print(f"records={len(records)}")
    else:
        triples, truth = datagen.generate_rated_dataset(config)
        ingest.write_interactions(triples, out_path)
        if model_out:
            Path(model_out).parent.mkdir(parents=True, exist_ok=True)
            model.save_model(truth, Path(model_out))
        print(f"triples={len(triples)}")
    print(f"out={out_path}")

    params = {
        "kind": kind,
        "out": str(out_path),
        "users": config.n_users,
        "items": config.n_items,
        "zipf_s": config.zipf_s,
        "k_true": config.k_true,
        "noise_sigma": config.noise_sigma,
        "n_events": config.n_events,
        "seed": config.seed,
        "report_dir": str(report_dir),
    }
    if model_out:
        params["model_out"] = model_out
    write_manifest(report_dir, "datagen", params)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    """ingest -> train -> evaluate -> simulate, one manifest chain."""
    r = _Resolver(args, _config_of(args))
    report_dir = r.get("report_dir", default=".")
    out = r.get("out", required=True)
    events_out = r.get("events_out", required=True)
    model_out = r.get("model_out", required=True)

    ingest_params = {
        "logs": str(r.input_file("logs")),
        "mode": r.get("mode", required=True, choices=("livetv", "vod")),
        "out": out,
        "events_out": events_out,
        "delimiter": r.get("delimiter", default=","),
        "report_dir": report_dir,
        "skip_bad_lines": r.get("skip_bad_lines", default=False, cast=_cast_bool),
    }
    _run_ingest(ingest_params)

    train_params = {
        "interactions": out,
        "variant": r.get("variant", required=True, choices=(model.PLAIN, model.BIASED)),
        "k": r.get("k", required=True, cast=int),
        "alpha": r.get("alpha", required=True, cast=float),
        "beta": r.get("beta", required=True, cast=float),
        "iters": r.get("iters", required=True, cast=int),
        "seed": r.get("seed", default=DEFAULT_SEED, cast=int),
        "ratio": _check_ratio("ratio", r.get("ratio", default=DEFAULT_RATIO, cast=float)),
        "model_out": model_out,
        "report_dir": report_dir,
    }
    _run_train(train_params)

    eval_params = {
        "model": model_out,
        "interactions": out,
        "ratio": train_params["ratio"],
        "seed": train_params["seed"],
        "report_dir": report_dir,
    }
    _run_evaluate(eval_params)

    sim_params = {
        "events": events_out,
        "policies": r.get("policies", default="lru,lfu,mfscore", cast=_cast_str_list),
        "capacities": r.get("capacities", required=True, cast=_cast_int_list),
        "jobs": r.get("jobs", default=1, cast=int),
        "model": model_out,
        "report_dir": report_dir,
    }
    _run_simulate(sim_params)

    pipeline_params = dict(r.effective)
    write_manifest(Path(report_dir), "pipeline", pipeline_params)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


_KNOWN_KEYS = {
    "logs", "mode", "out", "events_out", "delimiter", "skip_bad_lines",
    "interactions", "variant", "k", "alpha", "beta", "iters", "seed", "ratio",
    "val_ratio", "model", "model_out", "test", "report_dir", "events",
    "policies", "capacities", "grid_k", "grid_alpha", "grid_beta", "jobs",
    "kind", "users", "items", "zipf_s", "k_true", "noise_sigma", "n_events",
}


def _config_of(args) -> dict[str, str]:
    return load_config(args.config) if getattr(args, "config", None) else {}


def _add(parser: argparse.ArgumentParser, *names: str) -> None:
    parser.add_argument("--config", default=None, help="key=value config file")
    flags = {
        "logs": "raw log file (header row names the columns)",
        "mode": "content identity: livetv or vod",
        "out": "output interaction CSV path",
        "events_out": "also write the request-events CSV here",
        "delimiter": "log field delimiter (default ,)",
        "skip_bad_lines": "skip malformed log lines instead of aborting",
        "interactions": "interaction CSV (userId,itemId,interaction)",
        "variant": "model variant: plain or biased",
        "k": "latent factor count",
        "alpha": "learning rate",
        "beta": "regularization weight",
        "iters": "training epochs",
        "seed": f"random seed (default {DEFAULT_SEED})",
        "ratio": f"train fraction of the split (default {DEFAULT_RATIO})",
        "val_ratio": f"validation fraction held out of the train split (default {DEFAULT_VAL_RATIO})",
        "model": "model file to read",
        "model_out": "model file to write",
        "test": "test interaction CSV (instead of re-deriving the split)",
        "report_dir": "directory for reports and manifests (default .)",
        "events": "events CSV (timestamp,userId,itemId)",
        "policies": "comma list of lru,lfu,mfscore",
        "capacities": "comma list of cache capacities (item count)",
        "grid_k": "comma list of factor counts",
        "grid_alpha": "comma list of learning rates",
        "grid_beta": "comma list of regularization weights",
        "jobs": "parallel trial/simulation workers (default 1)",
        "kind": "what to generate: logs or ratings",
        "users": "synthetic user count",
        "items": "synthetic item count",
        "zipf_s": "item-popularity Zipf exponent (default 1.1)",
        "k_true": "ground-truth latent rank (default 2)",
        "noise_sigma": "rating noise stddev (default 0)",
        "n_events": "synthetic events / rated pairs",
    }
    for name in names:
        if name == "skip_bad_lines":
            parser.add_argument("--skip-bad-lines", dest=name, action="store_true",
                                default=None, help=flags[name])
        else:
            parser.add_argument(f"--{name.replace('_', '-')}", dest=name, default=None,
                                help=flags[name])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cdnmf", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    _add(sub.add_parser("ingest", help="parse raw logs into interaction triples"),
         "logs", "mode", "out", "events_out", "delimiter", "skip_bad_lines", "report_dir")
    _add(sub.add_parser("train", help="split and fit a factor model"),
         "interactions", "variant", "k", "alpha", "beta", "iters", "seed", "ratio",
         "model_out", "report_dir")
    _add(sub.add_parser("evaluate", help="RMSE of a model on the test split"),
         "model", "test", "interactions", "ratio", "seed", "report_dir")
    _add(sub.add_parser("gridsearch", help="exhaustive hyper-parameter search"),
         "interactions", "variant", "ratio", "val_ratio", "seed", "jobs",
         "grid_k", "grid_alpha", "grid_beta", "iters", "model_out", "report_dir")
    _add(sub.add_parser("simulate", help="replay events through cache policies"),
         "events", "policies", "capacities", "model", "jobs", "report_dir")
    _add(sub.add_parser("datagen", help="generate synthetic logs or ratings"),
         "kind", "out", "users", "items", "zipf_s", "k_true", "noise_sigma",
         "n_events", "seed", "model_out", "report_dir")
    _add(sub.add_parser("pipeline", help="ingest + train + evaluate + simulate"),
         "logs", "mode", "out", "events_out", "delimiter", "skip_bad_lines",
         "variant", "k", "alpha", "beta", "iters", "seed", "ratio",
         "model_out", "policies", "capacities", "jobs", "report_dir")
    return parser


_DISPATCH = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "gridsearch": cmd_gridsearch,
    "simulate": cmd_simulate,
    "datagen": cmd_datagen,
    "pipeline": cmd_pipeline,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _DISPATCH[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
