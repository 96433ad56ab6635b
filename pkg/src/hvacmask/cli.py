"""Operator CLI: simulate, demos, export-sft, train, evaluate, compare,
cache-bench, print-config.

Every run directory receives a manifest.json (command, resolved config,
seeds, package version, timing) sufficient to reproduce the run. Commands
write tidy CSVs for external plotting; nothing here mutates its inputs.
"""

import argparse
import json
import os
import sys
import time
from datetime import datetime
from pathlib import Path

import numpy as np

from . import __version__
from .config import dump_config, load_config
from .datasets import generate_demonstrations, load_historical
from .dqn import GreedyQPolicy, TrainConfig, evaluate, train
from .environment import BuildingEnv, Scenario
from .hydraulics import format_solution
from .masking import CachedMaskProvider, CacheSteps, KnnMaskProvider, MaskProviderConfig, joint_mask, remaining_percentage
from .policies import baseline_policy
from .prompts import export_sft_dataset
from .qnet import QNetwork

OUT_ROOT_ENV = "HVACMASK_OUT_ROOT"


def _log(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def _run_dir(args, command: str) -> Path:
    if args.out:
        path = Path(args.out)
    else:
        root = Path(os.environ.get(OUT_ROOT_ENV, "runs"))
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
        path = root / f"{command}-{stamp}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(run_dir: Path, command: str, args, cfg: dict, seeds, t0: float) -> None:
    manifest = {
        "command": command,
        "argv": sys.argv[1:],
        "config_path": args.config,
        "resolved_config": cfg,
        "seeds": list(seeds),
        "package_version": __version__,
        "output_dir": str(run_dir),
        "started_at": datetime.fromtimestamp(t0).isoformat(timespec="seconds"),
        "duration_s": round(time.time() - t0, 3),
    }
    with open(run_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, default=str)


def _mask_config(cfg: dict) -> MaskProviderConfig:
    m = cfg["mask"]
    weights = m["feature_weights"]
    return MaskProviderConfig(
        k=m["k"],
        tau=m["tau"],
        feature_weights=None if weights is None else np.asarray(weights, dtype=float),
        cache=CacheSteps(**m["cache"]),
    )


def _provider_from_demos(cfg: dict, demos_path):
    log = load_historical(demos_path)
    provider = KnnMaskProvider.from_log(log, _mask_config(cfg))
    return provider, log


def _clock_text(clock_min: int) -> str:
    total = 9 * 60 + clock_min
    return f"{total // 60:02d}:{total % 60:02d}"


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    scenario = Scenario.from_config(cfg)
    run_dir = _run_dir(args, "simulate")

    provider = None
    scaler = None
    if args.demos:
        provider, log = _provider_from_demos(cfg, args.demos)
        scaler = provider.scaler
    env = BuildingEnv(scenario, scaler=scaler)

    if args.policy == "greedy":
        if not args.checkpoint:
            raise ValueError("greedy policy needs --checkpoint")
        policy = GreedyQPolicy(QNetwork.load(args.checkpoint))
    else:
        policy = baseline_policy(args.policy)
    if getattr(policy, "needs_mask", False) and provider is None:
        raise ValueError(f"policy {args.policy} needs --demos to build the mask oracle")

    env_ss, pol_ss = np.random.SeedSequence(args.seed).spawn(2)
    rng = np.random.default_rng(pol_ss)
    state = env.reset(seed=env_ss)

    traj_rows = []
    metric_rows = []
    rewards, powers, ppds, pmvs = [], [], [], []
    first_solution_txt = None
    done = False
    step = 0
    while not done:
        if provider is not None:
            mask = joint_mask(provider.feasible_sets(state))
            mask_bits = mask.bits
            rem = remaining_percentage(mask)
        else:
            mask_bits, rem = None, 100.0
        action_idx = policy.act(state, env.features(state), mask_bits, rng)
        clock = state.clock_min
        temps = state.zone_temps_C
        occ = state.occupancy
        outdoor = state.outdoor_temp_C
        next_state, reward, done, info = env.step(action_idx)
        if first_solution_txt is None:
            first_solution_txt = format_solution(env.topology, info["solution"])
        levels = next_state.prev_action.levels
        traj_rows.append(
            [step, clock, _clock_text(clock), f"{outdoor:.4f}"]
            + [f"{t:.4f}" for t in temps]
            + [str(int(n)) for n in occ]
            + [str(l) for l in levels]
        )
        m = info["metrics"]
        metric_rows.append(
            [
                step,
                clock,
                f"{reward:.6f}",
                f"{m.ppd_mean_pct:.6f}",
                f"{m.pmv_abs_mean:.6f}",
                f"{m.power_kW:.6f}",
                m.occupants_total,
                f"{rem:.4f}",
            ]
        )
        rewards.append(reward)
        powers.append(m.power_kW)
        if m.occupants_total > 0:
            ppds.append(m.ppd_mean_pct)
            pmvs.append(m.pmv_abs_mean)
        state = next_state
        step += 1

    zone_ids = [z.zone_id for z in scenario.zones]
    with open(run_dir / "trajectory.csv", "w") as fh:
        header = (
            ["step", "clock_min", "time", "outdoor_temp_C"]
            + [f"zone_temp_{i}" for i in zone_ids]
            + [f"occupant_num_{i}" for i in zone_ids]
            + [f"mode_{i}" for i in zone_ids]
        )
        fh.write(",".join(header) + "\n")
        for row in traj_rows:
            fh.write(",".join(str(v) for v in row) + "\n")

    with open(run_dir / "metrics.csv", "w") as fh:
        fh.write("step,clock,reward,ppd_mean,pmv_abs_mean,power_kW,occupants,remaining_pct\n")
        for row in metric_rows:
            fh.write(",".join(str(v) for v in row) + "\n")

    (run_dir / "hydraulics.txt").write_text(first_solution_txt + "\n")

    from .comfort import episode_energy

    summary = {
        "policy": args.policy,
        "seed": args.seed,
        "reward_mean": float(np.sum(rewards)),
        "reward_std": 0.0,
        "ppd_mean_pct_mean": float(np.mean(ppds)) if ppds else 0.0,
        "ppd_mean_pct_std": 0.0,
        "pmv_abs_mean_mean": float(np.mean(pmvs)) if pmvs else 0.0,
        "pmv_abs_mean_std": 0.0,
        "energy_kWh_mean": episode_energy(powers),
        "energy_kWh_std": 0.0,
        "steps": step,
    }
    with open(run_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    _write_manifest(run_dir, "simulate", args, cfg, [args.seed], t0)
    _log(args, f"simulate: {step} steps -> {run_dir}")
    return 0


# ---------------------------------------------------------------------------
# demos / export-sft
# ---------------------------------------------------------------------------

def cmd_demos(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    if args.days is not None:
        cfg["demos"]["days"] = args.days
    scenario = Scenario.from_config(cfg)
    run_dir = _run_dir(args, "demos")
    log = generate_demonstrations(
        scenario,
        n_days=cfg["demos"]["days"],
        seed=args.seed,
        start_date=cfg["demos"]["start_date"],
        noise_prob=cfg["demos"]["noise_prob"],
    )
    out_csv = run_dir / "demos.csv"
    log.to_csv(out_csv)
    _write_manifest(run_dir, "demos", args, cfg, [args.seed], t0)
    _log(args, f"demos: wrote {len(log)} rows to {out_csv}")
    return 0


def cmd_export_sft(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    run_dir = _run_dir(args, "export-sft")
    log = load_historical(args.demos)
    out_path = run_dir / "sft.jsonl"
    count = export_sft_dataset(log, _mask_config(cfg), out_path)
    _write_manifest(run_dir, "export-sft", args, cfg, [args.seed], t0)
    _log(args, f"export-sft: wrote {count} records to {out_path}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    if args.episodes is not None:
        cfg["dqn"]["episodes"] = args.episodes
    train_cfg = TrainConfig.from_dict(cfg["dqn"])
    scenario = Scenario.from_config(cfg)
    run_dir = _run_dir(args, "train")
    seeds = args.seeds if args.seeds else [args.seed]

    provider = None
    scaler = None
    if args.variant == "masked":
        if not args.demos:
            raise ValueError("masked training needs --demos for the kNN mask oracle")
        provider, _log_data = _provider_from_demos(cfg, args.demos)
        scaler = provider.scaler
    elif args.demos:
        # Vanilla training does not need demonstrations, but when a log is
        # given its feature normalization is reused for comparability.
        provider_tmp, _log_data = _provider_from_demos(cfg, args.demos)
        scaler = provider_tmp.scaler

    results = []
    for seed in seeds:
        env = BuildingEnv(scenario, scaler=scaler)
        result = train(env, provider, train_cfg, seed=seed)
        results.append(result)
        curve_path = run_dir / f"curve_seed{seed}.csv"
        with open(curve_path, "w") as fh:
            fh.write("episode,reward\n")
            for ep, r in enumerate(result.episode_rewards):
                fh.write(f"{ep},{r:.6f}\n")
        result.qnet.save(run_dir / f"checkpoint_seed{seed}.npz")
        _log(
            args,
            f"train[{args.variant}] seed {seed}: final-5% mean "
            f"{result.final_window_mean():.2f}, AUC {result.auc():.1f}, "
            f"{result.wall_time_s:.1f}s",
        )

    curves = np.stack([r.episode_rewards for r in results])
    with open(run_dir / "curve.csv", "w") as fh:
        fh.write("episode,mean_reward,std\n")
        for ep in range(curves.shape[1]):
            fh.write(f"{ep},{curves[:, ep].mean():.6f},{curves[:, ep].std():.6f}\n")

    final5 = [r.final_window_mean() for r in results]
    summary = {
        "variant": args.variant,
        "seeds": list(seeds),
        "episodes": train_cfg.episodes,
        "final5_mean_by_seed": [float(v) for v in final5],
        "final5_mean": float(np.mean(final5)),
        "terminal_std_across_seeds": float(np.std(final5)),
        "auc_by_seed": [r.auc() for r in results],
        "auc_mean": float(np.mean([r.auc() for r in results])),
        "grad_steps_by_seed": [r.grad_steps for r in results],
        "wall_time_s": [round(r.wall_time_s, 2) for r in results],
    }
    with open(run_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    _write_manifest(run_dir, "train", args, cfg, seeds, t0)
    _log(args, f"train: summary -> {run_dir / 'summary.json'}")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def cmd_evaluate(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    scenario = Scenario.from_config(cfg)
    run_dir = _run_dir(args, "evaluate")

    provider = None
    scaler = None
    if args.demos:
        provider, _log_data = _provider_from_demos(cfg, args.demos)
        scaler = provider.scaler
    env = BuildingEnv(scenario, scaler=scaler)

    if args.policy == "greedy":
        if not args.checkpoint:
            raise ValueError("greedy policy needs --checkpoint")
        policy = GreedyQPolicy(QNetwork.load(args.checkpoint))
    else:
        policy = baseline_policy(args.policy)
    if getattr(policy, "needs_mask", False) and provider is None:
        raise ValueError(f"policy {args.policy} needs --demos to build the mask oracle")

    seeds = [args.seed + i for i in range(args.episodes)]
    report = evaluate(policy, env, provider, args.episodes, seeds)

    (run_dir / "report.txt").write_text(report.format_table() + "\n")
    with open(run_dir / "report.csv", "w") as fh:
        fh.write(
            "episode,seed,reward,ppd_mean_pct,pmv_abs_mean,energy_kWh,"
            "remaining_max_pct,remaining_min_pct,remaining_avg_pct\n"
        )
        for i, (e, s) in enumerate(zip(report.episodes, report.seeds)):
            rem = (
                f"{e.remaining_max_pct:.4f},{e.remaining_min_pct:.4f},{e.remaining_avg_pct:.4f}"
                if e.remaining_avg_pct is not None
                else ",,"
            )
            fh.write(
                f"{i},{s},{e.reward:.6f},{e.ppd_mean_pct:.6f},"
                f"{e.pmv_abs_mean:.6f},{e.energy_kWh:.6f},{rem}\n"
            )
    summary = {"policy": args.policy, **report.summary()}
    with open(run_dir / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    _write_manifest(run_dir, "evaluate", args, cfg, seeds, t0)
    _log(args, report.format_table())
    return 0


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

_COMPARE_METRICS = (
    ("reward_mean", "episode reward", False),
    ("ppd_mean_pct_mean", "PPD mean (%)", True),
    ("pmv_abs_mean_mean", "PMV abs mean", True),
    ("energy_kWh_mean", "energy (kWh)", True),
)


def cmd_compare(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    if len(args.run_dirs) < 2:
        raise ValueError("compare needs at least two run directories")
    summaries = []
    for d in args.run_dirs:
        path = Path(d) / "summary.json"
        if not path.exists():
            raise ValueError(f"missing metrics: {path}")
        with open(path) as fh:
            summaries.append(json.load(fh))
    for key, _, _ in _COMPARE_METRICS:
        for d, s in zip(args.run_dirs, summaries):
            if key not in s:
                raise ValueError(f"missing metrics: {d} has no {key}")

    run_dir = _run_dir(args, "compare")
    names = [Path(d).name for d in args.run_dirs]
    ref = summaries[0]

    header = f"{'metric':<18}{names[0][:16]:>18}"
    for n in names[1:]:
        header += f"{n[:16]:>18}{'delta%':>10}"
    lines = [header, "-" * len(header)]
    csv_header = "metric," + names[0]
    for n in names[1:]:
        csv_header += f",{n},{n}_delta_pct"
    csv_rows = [csv_header]
    for key, label, _lower_better in _COMPARE_METRICS:
        vals = [s[key] for s in summaries]
        deltas = [
            0.0 if v == ref[key]
            else (v - ref[key]) / abs(ref[key]) * 100.0 if ref[key] != 0
            else float("nan")
            for v in vals
        ]
        row = f"{label:<18}{vals[0]:>18.3f}"
        csv_row = f"{key},{vals[0]:.6f}"
        for v, d in zip(vals[1:], deltas[1:]):
            row += f"{v:>18.3f}{d:>9.2f}%"
            csv_row += f",{v:.6f},{d:.4f}"
        lines.append(row)
        csv_rows.append(csv_row)
    if all("remaining_avg_pct" in s for s in summaries):
        lines.append("")
        for key, label in (
            ("remaining_max_pct", "remaining max (%)"),
            ("remaining_min_pct", "remaining min (%)"),
            ("remaining_avg_pct", "remaining avg (%)"),
            ("valid_actions_max", "valid actions max"),
            ("valid_actions_min", "valid actions min"),
            ("valid_actions_avg", "valid actions avg"),
        ):
            vals = [s[key] for s in summaries]
            row = f"{label:<18}{vals[0]:>18.2f}"
            csv_row = f"{key},{vals[0]:.4f}"
            for v in vals[1:]:
                row += f"{v:>18.2f}{'':>10}"
                csv_row += f",{v:.4f},"
            lines.append(row)
            csv_rows.append(csv_row)

    table = "\n".join(lines)
    (run_dir / "comparison.txt").write_text(table + "\n")
    (run_dir / "comparison.csv").write_text("\n".join(csv_rows) + "\n")
    _write_manifest(run_dir, "compare", args, cfg, [], t0)
    _log(args, table)
    return 0


# ---------------------------------------------------------------------------
# cache-bench
# ---------------------------------------------------------------------------

def _timed_episode(env, provider, seed):
    """Masked-random rollout timing each mask query; returns (latencies, reward)."""
    env_ss, pol_ss = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.default_rng(pol_ss)
    state = env.reset(seed=env_ss)
    latencies = []
    total_reward = 0.0
    done = False
    while not done:
        t0 = time.perf_counter()
        sets = provider.feasible_sets(state)
        latencies.append(time.perf_counter() - t0)
        mask = joint_mask(sets)
        valid = np.flatnonzero(mask.bits)
        action = int(valid[rng.integers(valid.size)])
        state, reward, done, _ = env.step(action)
        total_reward += reward
    return np.array(latencies), total_reward


def cmd_cache_bench(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    scenario = Scenario.from_config(cfg)
    run_dir = _run_dir(args, "cache-bench")
    provider, log = _provider_from_demos(cfg, args.demos)
    env = BuildingEnv(scenario, scaler=provider.scaler)

    lat_plain, reward_plain = _timed_episode(env, provider, args.seed)

    cached = CachedMaskProvider(provider, _mask_config(cfg).cache)
    if args.cold:
        warmed_states = 0
    else:
        # Offline warm-up: the demonstration log plus one untimed rollout of
        # the benchmark episode populate the cache with representative keys.
        warmed_states = cached.warm(log.state_at(i) for i in range(len(log)))
        _timed_episode(env, cached, args.seed)
        cached.reset_counters()
    lat_cached, reward_cached = _timed_episode(env, cached, args.seed)

    def stats(lat):
        return {
            "total_s": float(lat.sum()),
            "mean_s": float(lat.mean()),
            "max_s": float(lat.max()),
            "min_s": float(lat.min()),
            "steps": int(lat.size),
        }

    report = {
        "no_cache": {**stats(lat_plain), "episode_reward": reward_plain},
        "cache": {**stats(lat_cached), "episode_reward": reward_cached},
        "hit_rate_pct": cached.hit_rate_pct(),
        "cache_entries": len(cached),
        "warmed_entries": warmed_states,
        "mean_speedup": float(lat_plain.mean() / lat_cached.mean()),
    }
    lines = [
        f"{'metric':<24}{'no cache':>14}{'cache':>14}",
        "-" * 52,
        f"{'total episode time (s)':<24}{report['no_cache']['total_s']:>14.4f}{report['cache']['total_s']:>14.4f}",
        f"{'average step time (s)':<24}{report['no_cache']['mean_s']:>14.6f}{report['cache']['mean_s']:>14.6f}",
        f"{'maximum step time (s)':<24}{report['no_cache']['max_s']:>14.6f}{report['cache']['max_s']:>14.6f}",
        f"{'minimum step time (s)':<24}{report['no_cache']['min_s']:>14.6f}{report['cache']['min_s']:>14.6f}",
        f"{'total steps':<24}{report['no_cache']['steps']:>14d}{report['cache']['steps']:>14d}",
        f"{'episode reward':<24}{report['no_cache']['episode_reward']:>14.2f}{report['cache']['episode_reward']:>14.2f}",
        "",
        f"hit rate: {report['hit_rate_pct']:.2f}%   mean speedup: {report['mean_speedup']:.1f}x",
    ]
    (run_dir / "report.txt").write_text("\n".join(lines) + "\n")
    with open(run_dir / "summary.json", "w") as fh:
        json.dump(report, fh, indent=2)
    _write_manifest(run_dir, "cache-bench", args, cfg, [args.seed], t0)
    _log(args, "\n".join(lines))
    return 0


def cmd_print_config(args) -> int:
    print(dump_config(load_config(args.config)), end="")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hvacmask",
        description="Desk-scale masked-RL HVAC control lab",
    )
    parser.add_argument("--config", default=None, help="YAML config overriding built-in defaults")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default=None, help=f"run directory (default: ${OUT_ROOT_ENV} or ./runs)")
    parser.add_argument("--quiet", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="one-episode rollout with trajectory/metrics CSVs")
    p.add_argument("--policy", default="rule_based",
                   choices=["rule_based", "full_random", "masked_random", "greedy"])
    p.add_argument("--demos", default=None, help="demonstration CSV (mask oracle / normalization)")
    p.add_argument("--checkpoint", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("demos", help="generate synthetic demonstration log")
    p.add_argument("--days", type=int, default=None)
    p.set_defaults(func=cmd_demos)

    p = sub.add_parser("export-sft", help="export prompt/target records from a log")
    p.add_argument("--demos", required=True)
    p.set_defaults(func=cmd_export_sft)

    p = sub.add_parser("train", help="train masked or vanilla DQN")
    p.add_argument("--variant", required=True, choices=["masked", "vanilla"])
    p.add_argument("--demos", default=None)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--seeds", type=int, nargs="+", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="greedy evaluation rollouts")
    p.add_argument("--policy", default="greedy",
                   choices=["greedy", "rule_based", "full_random", "masked_random"])
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--demos", default=None)
    p.add_argument("--episodes", type=int, default=5)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="align metrics of completed runs")
    p.add_argument("run_dirs", nargs="+")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("cache-bench", help="mask-query latency with and without the cache")
    p.add_argument("--demos", required=True)
    p.add_argument("--cold", action="store_true", help="skip the offline warm-up")
    p.set_defaults(func=cmd_cache_bench)

    p = sub.add_parser("print-config", help="print the resolved configuration")
    p.set_defaults(func=cmd_print_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # surface a clean error and a nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
