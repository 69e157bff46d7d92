"""Command-line surface.

Subcommands: train, eval (five protocols), inspect, gradcheck,
synth-gen. Exit codes: 0 success, 1 configuration/data/checkpoint
problems (with a field-level message), 2 usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import RunConfig, load_config
from .data import SyntheticSpec, make_synthetic, save_dataset
from .errors import (CheckpointError, ConfigError, ContractError, DataLoadError,
                     EncodingError, SamplingError)
from .gradsuite import run_suite
from .params import load_checkpoint, read_checkpoint_header
from .rng import derive_seed
from .trainer import Policy, build_policy, run_episode, Memory, RewardConfig
from .rng import Xoshiro256

USER_ERRORS = (ConfigError, DataLoadError, CheckpointError, SamplingError,
               EncodingError, ContractError)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conceptmem",
        description="Few-shot concept learning with an episodic slot memory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the training curriculum from a config")
    p_train.add_argument("config", help="path to a JSON run configuration")
    p_train.add_argument("--progress", action="store_true", help="print batch progress")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint under one protocol")
    p_eval.add_argument("config", help="path to a JSON run configuration")
    p_eval.add_argument("--checkpoint", required=True, help="checkpoint file to load")
    p_eval.add_argument("--protocol", required=True,
                        choices=["mann", "nway", "zeroshot", "tradeoff", "label-transfer"])
    p_eval.add_argument("--episodes", type=int, default=None,
                        help="override the configured episode count")
    p_eval.add_argument("--out-dir", default=None, help="report directory (default: config out_dir)")

    p_inspect = sub.add_parser("inspect", help="dump checkpoint contents")
    p_inspect.add_argument("--checkpoint", required=True)

    p_grad = sub.add_parser("gradcheck", help="finite-difference check of every kernel")
    p_grad.add_argument("--seeds", type=int, default=10, help="random instances per op")

    p_synth = sub.add_parser("synth-gen", help="materialize a synthetic dataset")
    p_synth.add_argument("spec", help="JSON file with the synthetic spec plus a seed")
    p_synth.add_argument("-o", "--out", required=True, help="output directory")
    return parser


def _policy_from_config(cfg: RunConfig) -> Policy:
    return build_policy(cfg.build_embedder_config(), seed=cfg.seed,
                        atty_hidden=cfg.atty_hidden)


def _load_into(cfg: RunConfig, path: str) -> Policy:
    if not os.path.exists(path):
        raise CheckpointError(f"checkpoint {path!r} does not exist")
    policy = _policy_from_config(cfg)
    load_checkpoint(path, policy.pset)
    return policy


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    os.makedirs(cfg.out_dir, exist_ok=True)
    dataset = cfg.build_dataset()
    policy = _policy_from_config(cfg)
    from .trainer import train
    rows = train(
        policy, dataset, cfg.build_curriculum(),
        reward_cfg=cfg.build_reward_config(), opt=cfg.build_optimizer(),
        seed=cfg.seed, batch_size=cfg.batch_size,
        slots_per_class=cfg.slots_per_class, scheme=cfg.scheme, l_label=cfg.l_label,
        log_path=os.path.join(cfg.out_dir, "train_log.csv"),
        checkpoint_path=os.path.join(cfg.out_dir, "model.ckpt"),
        checkpoint_interval=cfg.checkpoint_interval, lockstep=cfg.lockstep,
        progress=args.progress, checkpoint_meta={"config": cfg.to_dict()})
    last = rows[-1] if rows else {}
    print(f"trained {len(rows)} batches; final mean return "
          f"{last.get('mean_return', float('nan')):.2f}, perfect rate "
          f"{last.get('perfect_rate', float('nan')):.2f}")
    print(f"checkpoint: {os.path.join(cfg.out_dir, 'model.ckpt')}")
    return 0


def _cmd_eval(args) -> int:
    from . import evaluation as ev
    from .label_attention import label_transfer_eval

    cfg = load_config(args.config)
    out_dir = args.out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    policy = _load_into(cfg, args.checkpoint)
    dataset = cfg.build_eval_dataset()
    seed = derive_seed(cfg.seed, "cli-eval", args.protocol)
    spc = cfg.slots_per_class

    if args.protocol == "mann":
        episodes = args.episodes or cfg.eval_setting("mann_episodes")
        report = ev.mann_eval(policy, dataset, episodes,
                              n_classes=cfg.eval_setting("n_way"),
                              length=cfg.eval_setting("mann_length"),
                              scheme=cfg.scheme, l_label=cfg.l_label,
                              slots_per_class=spc, seed=seed)
        print(ev.format_mann_table(report))
        ev.write_mann_csv(os.path.join(out_dir, "mann_report.csv"), report)
    elif args.protocol == "nway":
        episodes = args.episodes or cfg.eval_setting("episodes")
        report = ev.nway_kshot_eval(policy, dataset, cfg.eval_setting("n_way"),
                                    cfg.eval_setting("k_shot"), episodes,
                                    scheme=cfg.scheme, l_label=cfg.l_label,
                                    slots_per_class=spc, seed=seed)
        print(ev.format_nway_table(report))
        ev.write_nway_csv(os.path.join(out_dir, "nway_report.csv"), [report])
    elif args.protocol == "zeroshot":
        episodes = args.episodes or cfg.eval_setting("episodes")
        report = ev.zeroshot_eval(policy, dataset, episodes,
                                  n_classes=cfg.eval_setting("n_way"),
                                  length=cfg.eval_setting("zeroshot_length"),
                                  l_label=cfg.l_label, scheme=cfg.scheme,
                                  slots_per_class=spc, seed=seed)
        print(f"zero-shot {report.zero_shot_accuracy:.4f}  "
              f"one-shot {report.one_shot_accuracy:.4f}  f1 {report.f1:.4f}")
        ev.write_fewzero_csv(os.path.join(out_dir, "fewzero_report.csv"), report)
    elif args.protocol == "tradeoff":
        episodes = args.episodes or cfg.eval_setting("tradeoff_episodes")
        # fine-tune on the training split, measure on the eval split
        series = ev.tradeoff_experiment(
            policy, cfg.build_dataset(), episodes,
            cfg.eval_setting("tradeoff_interval"),
            n_classes=cfg.eval_setting("n_way"),
            length=cfg.eval_setting("zeroshot_length"), scheme=cfg.scheme,
            l_label=cfg.l_label, slots_per_class=spc,
            eval_episodes=cfg.eval_setting("tradeoff_eval_episodes"),
            lr=cfg.build_optimizer().lr, seed=seed,
            reward_cfg=cfg.build_reward_config(), eval_dataset=dataset)
        for point in series:
            print(f"after {point['episodes']:>6d} episodes: zero-shot "
                  f"{point['zero_shot']:.4f}  few-shot {point['few_shot']:.4f}")
        ev.write_tradeoff_csv(os.path.join(out_dir, "tradeoff_report.csv"), series)
    else:
        episodes = args.episodes or cfg.eval_setting("transfer_episodes")
        acc = label_transfer_eval(policy.atty, episodes,
                                  n_way=cfg.eval_setting("n_way"),
                                  scheme="binary",
                                  l_label=cfg.eval_setting("transfer_l_label"),
                                  seed=seed)
        print(f"label-transfer accuracy {acc:.4f} over {episodes} episodes")
        with open(os.path.join(out_dir, "transfer_report.csv"), "w") as fh:
            fh.write("accuracy,episodes\n")
            fh.write(f"{acc:.6f},{episodes}\n")
    return 0


def _cmd_inspect(args) -> int:
    if not os.path.exists(args.checkpoint):
        raise CheckpointError(f"checkpoint {args.checkpoint!r} does not exist")
    meta, entries = read_checkpoint_header(args.checkpoint)
    print(f"checkpoint: {args.checkpoint}")
    n_scalars = 0
    for e in entries:
        shape = tuple(e["shape"])
        n_scalars += int(np.prod(shape, dtype=np.int64)) if shape else 1
        print(f"  {e['kind']:<5s} {e['name']:<28s} {shape}")
    print(f"total scalars: {n_scalars}")
    cfg_dict = meta.get("config")
    if not cfg_dict:
        print("no embedded config; skipping the episode dump")
        return 0
    cfg = RunConfig.from_dict(cfg_dict)
    policy = _load_into(cfg, args.checkpoint)
    dataset = cfg.build_dataset()
    from .episodes import EpisodeSpec, sample_episode
    from .memory import dump
    stage = cfg.build_curriculum()[-1]
    spec = EpisodeSpec(n_classes=stage.n_classes, length=stage.length,
                       labeling=stage.labeling, scheme=cfg.scheme,
                       l_label=cfg.l_label, seed=derive_seed(cfg.seed, "inspect"))
    episode = sample_episode(dataset, spec)
    memory = Memory.fresh(cfg.slots_per_class * stage.n_classes,
                          policy.hidden_size, cfg.l_label)
    trace = run_episode(policy, episode, memory, "greedy", RewardConfig())
    print(f"\ngreedy episode: actions {trace.actions}, return {trace.G:.1f}")
    print(dump(memory))
    return 0


def _cmd_gradcheck(args) -> int:
    results = run_suite(seeds=args.seeds)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        if not r.passed:
            failed += 1
        print(f"{r.op:<20s} {status}  max rel err {r.max_rel_err:.3e}")
    if failed:
        print(f"{failed} op(s) failed")
        return 1
    return 0


def _cmd_synth_gen(args) -> int:
    if not os.path.exists(args.spec):
        raise ConfigError(f"spec file {args.spec!r} does not exist")
    with open(args.spec) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.spec}: invalid JSON ({exc})") from exc
    if "seed" not in raw:
        raise ConfigError("synthetic spec needs an explicit seed")
    seed = raw.pop("seed")
    try:
        spec = SyntheticSpec(**raw)
    except TypeError as exc:
        raise ConfigError(f"synthetic spec: {exc}") from exc
    dataset = make_synthetic(spec, seed)
    save_dataset(dataset, args.out)
    ratio = dataset.meta.get("separability_ratio", float("nan"))
    print(f"wrote {dataset.n_classes} classes to {args.out} "
          f"(separability ratio {ratio:.2f})")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "train": _cmd_train,
        "eval": _cmd_eval,
        "inspect": _cmd_inspect,
        "gradcheck": _cmd_gradcheck,
        "synth-gen": _cmd_synth_gen,
    }
    try:
        return handlers[args.command](args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
