"""Command-line entry points: generate, train-evaluator, train-manager,
benchmark, explain, serve.  One config file (JSON, or TOML when a parser is
available) drives everything; --seed and --out override per run."""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from .baselines import GAConfig
from .bench import plot_events, run_benchmark, time_controllers, write_report
from .config import AppConfig
from .explain import explain_report
from .models.evaluator import FloodEvaluator, persistence_mae
from .models.manager import FloodManager
from .series import WindowConfig, make_windows, read_csv, write_csv
from .sim.dataset import generate_dataset


def _load_manifest(data_dir: Path) -> dict:
    return json.loads((data_dir / "manifest.json").read_text())


def cmd_generate(args) -> int:
    cfg = AppConfig.load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bundle = generate_dataset(cfg.generation(), cfg.n_episodes(), args.seed)
    for split in ("train", "val", "test"):
        write_csv(getattr(bundle, split), out / f"{split}.csv")
    manifest = {
        "seed": args.seed,
        "config_fingerprint": cfg.fingerprint(),
        "episodes": [{"index": e.index, "seed": e.seed, "split": e.split,
                      "hours": e.hours} for e in bundle.episodes],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    counts = bundle.split_counts()
    print(f"generated {sum(counts)} episodes -> {out} "
          f"(train/val/test = {counts[0]}/{counts[1]}/{counts[2]})")
    return 0


def cmd_train_evaluator(args) -> int:
    cfg = AppConfig.load(args.config)
    data = Path(args.data)
    train = read_csv(data / "train.csv")
    val = read_csv(data / "val.csv")
    kwargs = cfg.evaluator_kwargs()
    if args.architecture:
        kwargs["architecture"] = args.architecture
    ev = FloodEvaluator(topology=cfg.topology(), seed=args.seed, **kwargs)
    ev.fit(train, val)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"evaluator-{ev.architecture}.fmodel"
    ev.freeze()
    ev.save(path)
    test = read_csv(data / "test.csv")
    samples = make_windows(test, WindowConfig(ev.w, ev.k, max(ev.k // 2, 1)))
    mae, rmse = ev.score_samples(samples)
    baseline = persistence_mae(samples, ev.layout_.water)
    print(f"saved {path}")
    print(f"test MAE {mae:.3f} ft, RMSE {rmse:.3f} ft "
          f"(persistence baseline {baseline:.3f} ft) in {ev.train_seconds_:.0f}s")
    return 0


def cmd_train_manager(args) -> int:
    from .pipeline import train_pipeline
    from .sim.dataset import DatasetBundle, EpisodeInfo

    cfg = AppConfig.load(args.config)
    data = Path(args.data)
    ev = FloodEvaluator.load(args.evaluator)
    if not ev.is_frozen():
        ev.freeze()
    kwargs = cfg.manager_kwargs()
    refine_rounds = kwargs.pop("refine_rounds")
    rollout_episodes = kwargs.pop("rollout_episodes")
    if args.architecture:
        kwargs["architecture"] = args.architecture

    manifest = _load_manifest(data)
    bundle = DatasetBundle(
        train=read_csv(data / "train.csv"),
        val=read_csv(data / "val.csv"),
        test=read_csv(data / "test.csv"),
        episodes=[EpisodeInfo(e["index"], e["seed"], e["split"], e["hours"])
                  for e in manifest["episodes"]],
    )
    result = train_pipeline(bundle, cfg.topology(), cfg.forcing(), cfg.policy(),
                            cfg.thresholds(), cfg.weights(),
                            evaluator_kwargs=cfg.evaluator_kwargs(),
                            manager_kwargs=kwargs,
                            refine_rounds=refine_rounds,
                            rollout_episodes=rollout_episodes,
                            seed=args.seed, base_evaluator=ev)
    mgr = result.manager
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"manager-{mgr.architecture}.fmodel"
    mgr.save(path)
    print(f"saved {path}")
    if refine_rounds > 0:
        referee_path = out / f"evaluator-{result.evaluator.architecture}-referee.fmodel"
        result.evaluator.save(referee_path)
        print(f"saved refined referee {referee_path}")
    last = mgr.history_[-1] if mgr.history_ else {}
    if "val_combined" in last:
        print(f"val combined loss {last['val_combined']:.4f} vs recorded schedule "
              f"{last['val_recorded_combined']:.4f} in {mgr.train_seconds_:.0f}s")
    return 0


def cmd_benchmark(args) -> int:
    cfg = AppConfig.load(args.config)
    data = Path(args.data)
    manifest = _load_manifest(data)
    episodes = [(e["seed"], e["hours"]) for e in manifest["episodes"]
                if e["split"] == "test"]
    bench = cfg.benchmark()
    art = Path(args.artifacts)
    evaluator = None
    managers = {}
    # prefer the refined referee when present: GA parity and gap reporting
    # should run against the same referee the manager was trained through
    candidates = (sorted(art.glob("evaluator-*-referee.fmodel"))
                  or sorted(art.glob("evaluator-*.fmodel")))
    for path in candidates:
        evaluator = FloodEvaluator.load(path)
        if not evaluator.is_frozen():
            evaluator.freeze()
        break
    for path in sorted(art.glob("manager-*.fmodel")):
        name = path.stem.replace(".fmodel", "")
        managers[name] = FloodManager.load(path, evaluator=evaluator)
    if not managers and evaluator is None:
        raise SystemExit("no artifacts found; run train-evaluator/train-manager first")

    ga_cfg = None
    if args.with_ga:
        ga_cfg = GAConfig(population=bench["ga_population"],
                          generations=bench["ga_generations"], seed=args.seed)
    report = run_benchmark(cfg.topology(), cfg.forcing(), cfg.policy(), episodes,
                           cfg.thresholds(), cfg.weights(), managers,
                           evaluator=evaluator, ga_cfg=ga_cfg,
                           ga_replan_hours=bench["ga_replan_hours"],
                           ga_span_hours=bench["ga_span_hours"],
                           open_loop=args.open_loop, seed=args.seed,
                           config_fingerprint=cfg.fingerprint())
    timing = None
    if evaluator is not None and managers:
        test = read_csv(data / "test.csv")
        samples = make_windows(test, WindowConfig(evaluator.w, evaluator.k,
                                                  evaluator.k))[:bench["timing_windows"]]
        timing = time_controllers(evaluator, managers, samples,
                                  cfg.ga(seed=args.seed), runs=bench["timing_runs"])
    out = Path(args.out)
    write_report(report, timing, out)
    plot_events(report, cfg.thresholds(), out)
    for r in report.results:
        m = r.metrics
        print(f"{r.name:>16}: over_time={m.over_time:5d} over_area={m.over_area:9.2f} "
              f"under_time={m.under_time:5d} under_area={m.under_area:9.2f} "
              f"[{r.seconds:.1f}s / {r.hours_scored}h]")
    if timing:
        print("timing per window:", {k: f"{v:.4f}s" for k, v in timing.items()})
    print(f"report -> {out}")
    return 0


def cmd_explain(args) -> int:
    ev = FloodEvaluator.load(args.evaluator)
    if not ev.is_frozen():
        ev.freeze()
    test = read_csv(Path(args.data) / "test.csv")
    samples = make_windows(test, WindowConfig(ev.w, ev.k, max(ev.k // 4, 1)))
    bundle = explain_report(ev, samples, args.out, seed=args.seed,
                            n_perturb=args.n_perturb)
    print(f"explain bundle with {len(bundle['regimes'])} regimes -> {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, load_session

    session = None
    art = Path(args.artifacts) if args.artifacts else None
    if art:
        ev_paths = sorted(art.glob("evaluator-*.fmodel"))
        mgr_paths = sorted(art.glob("manager-*.fmodel"))
        frame = args.frame or str(art / "scenario.csv")
        if not ev_paths:
            raise SystemExit(f"no evaluator artifact under {art}")
        session = load_session(str(ev_paths[0]), frame,
                               str(mgr_paths[0]) if mgr_paths else None)
    app = create_app(session, static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="floodmit",
        description="Differentiable flood-mitigation scheduling toolkit")
    parser.add_argument("--config", default=None,
                        help="JSON (or TOML) config file; defaults are built in")
    parser.add_argument("--seed", type=int, default=11)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate the synthetic dataset")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("train-evaluator", help="fit and freeze a level predictor")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--architecture", choices=("mlp", "rnn", "gtn_lite"))
    p.set_defaults(fn=cmd_train_evaluator)

    p = sub.add_parser("train-manager", help="train the scheduler through a frozen evaluator")
    p.add_argument("--data", required=True)
    p.add_argument("--evaluator", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--architecture", choices=("mlp", "rnn", "gtn_lite"))
    p.set_defaults(fn=cmd_train_manager)

    p = sub.add_parser("benchmark", help="closed-loop comparison on the test episodes")
    p.add_argument("--data", required=True)
    p.add_argument("--artifacts", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--open-loop", action="store_true",
                   help="apply whole k-step plans instead of replanning hourly")
    p.add_argument("--with-ga", action="store_true",
                   help="include the (slow) GA controller at the benchmark budget")
    p.set_defaults(fn=cmd_benchmark)

    p = sub.add_parser("explain", help="attention and attribution reports")
    p.add_argument("--evaluator", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-perturb", type=int, default=None, dest="n_perturb")
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("serve", help="run the operator HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8800)
    p.add_argument("--artifacts", default=None)
    p.add_argument("--frame", default=None)
    p.add_argument("--static", default=None,
                   help="directory with the console bundle to serve at /")
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
