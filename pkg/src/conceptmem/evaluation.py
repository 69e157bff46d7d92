"""Evaluation protocols: per-step shot accuracy over long labeled
episodes, N-way k-shot classification, zero-shot (outlier) routing, and
the few-shot/zero-shot fine-tuning trade-off.

All protocols run the deterministic greedy policy and leave parameters
untouched; the trade-off experiment is the one exception, and says so.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .autodiff import constant, no_grad
from .embedder import embed_batch
from .episodes import Dataset, EpisodeSpec, nway_kshot_episode, sample_episode
from .errors import ContractError
from .memory import Memory, attend, choose_slot, classify, write
from .rng import derive_seed
from .trainer import (AdamState, CurriculumStage, Policy, RewardConfig, train)

Z95 = 1.959963984540054  # two-sided 95% normal quantile


def _ci95(p: float, n: int) -> float:
    if n <= 0:
        return 0.0
    return Z95 * float(np.sqrt(max(p * (1.0 - p), 0.0) / n))


@dataclass
class ShotAccuracyReport:
    """Accuracy bucketed by how many samples of the true class were
    already stored when the prediction was made (bucket j = "j-shot").

    Bucket 0 collects first-sight predictions, which cannot be correct
    and are excluded from the headline accuracies but kept so the
    bookkeeping adds up: counts over all buckets equal total steps minus
    the steps skipped for an empty memory.
    """

    episodes: int
    correct: dict = field(default_factory=dict)   # shot j -> correct count
    total: dict = field(default_factory=dict)     # shot j -> prediction count
    skipped: int = 0
    steps: int = 0

    def accuracy(self, shot: int) -> float:
        n = self.total.get(shot, 0)
        return self.correct.get(shot, 0) / n if n else 0.0

    def ci95(self, shot: int) -> float:
        return _ci95(self.accuracy(shot), self.total.get(shot, 0))

    def shots(self) -> list[int]:
        return sorted(j for j in self.total if j >= 1)

    def check_bookkeeping(self) -> None:
        counted = sum(self.total.values())
        if counted != self.steps - self.skipped:
            raise ContractError(
                f"shot bookkeeping broken: {counted} counted vs "
                f"{self.steps} steps - {self.skipped} skipped")


def mann_eval(policy: Policy, dataset: Dataset, n_episodes: int, n_classes: int = 5,
              length: int = 50, scheme: str = "one-hot", l_label: int = 10,
              slots_per_class: int = 2, seed: int = 0) -> ShotAccuracyReport:
    """Long fully-labeled episodes: predict each sample's label from memory
    content first, then store the sample with its true label through the
    label-routing policy."""
    report = ShotAccuracyReport(episodes=n_episodes)
    n_slots = slots_per_class * n_classes
    with no_grad():
        for e in range(n_episodes):
            spec = EpisodeSpec(n_classes=n_classes, length=length, labeling="full",
                               scheme=scheme, l_label=l_label,
                               seed=derive_seed(seed, "mann", e))
            episode = sample_episode(dataset, spec)
            memory = Memory.fresh(n_slots, policy.hidden_size, l_label)
            xs = np.stack([s.x for s in episode.steps])
            h_all = embed_batch(policy.emb, policy.embedder_cfg, xs, train=False).value
            stored: dict[int, int] = {}
            for t, step in enumerate(episode.steps):
                report.steps += 1
                if memory.occupied().size == 0:
                    report.skipped += 1
                else:
                    _, pred = classify(memory, h_all[t])
                    shot = stored.get(step.class_id, 0)
                    report.total[shot] = report.total.get(shot, 0) + 1
                    if pred == step.label_id:
                        report.correct[shot] = report.correct.get(shot, 0) + 1
                p = attend(memory, constant(h_all[t]), step.y, policy.atty, policy.temp)
                slot = choose_slot(p.value, "greedy")
                write(memory, slot, h_all[t], step.y)
                stored[step.class_id] = stored.get(step.class_id, 0) + 1
    report.check_bookkeeping()
    return report


@dataclass
class NwayReport:
    n: int
    k: int
    accuracy: float
    ci95: float
    episodes: int


def nway_kshot_eval(policy: Policy, dataset: Dataset, n: int, k: int,
                    n_episodes: int, scheme: str = "one-hot", l_label: int = 10,
                    slots_per_class: int = 2, seed: int = 0) -> NwayReport:
    """Store N*k labeled supports through the label-routing policy, then
    classify one unlabeled query by nearest occupied prototype."""
    hits = 0
    n_slots = slots_per_class * n
    with no_grad():
        for e in range(n_episodes):
            support, query = nway_kshot_episode(dataset, n, k, scheme, l_label,
                                                derive_seed(seed, "nway", e))
            memory = Memory.fresh(n_slots, policy.hidden_size, l_label)
            xs = np.stack([s.x for s in support] + [query.x])
            h_all = embed_batch(policy.emb, policy.embedder_cfg, xs, train=False).value
            for t, step in enumerate(support):
                p = attend(memory, constant(h_all[t]), step.y, policy.atty, policy.temp)
                slot = choose_slot(p.value, "greedy")
                write(memory, slot, h_all[t], step.y)
            _, pred = classify(memory, h_all[-1])
            if pred == query.label_id:
                hits += 1
    acc = hits / n_episodes
    return NwayReport(n=n, k=k, accuracy=acc, ci95=_ci95(acc, n_episodes),
                      episodes=n_episodes)


@dataclass
class FewZeroReport:
    zero_shot_accuracy: float
    one_shot_accuracy: float
    f1: float
    zero_count: int = 0
    one_count: int = 0


def f1(zero_shot: float, one_shot: float) -> float:
    """Harmonic mean of the two accuracies; defined as 0 when both are 0."""
    for name, v in (("zero_shot", zero_shot), ("one_shot", one_shot)):
        if not 0.0 <= v <= 1.0:
            raise ContractError(f"f1: {name} must be in [0,1], got {v}")
    if zero_shot == 0.0 and one_shot == 0.0:
        return 0.0
    return 2.0 * zero_shot * one_shot / (zero_shot + one_shot)


def zeroshot_eval(policy: Policy, dataset: Dataset, n_episodes: int,
                  n_classes: int = 5, length: int = 10, l_label: int = 10,
                  scheme: str = "one-hot", slots_per_class: int = 2,
                  seed: int = 0) -> FewZeroReport:
    """Greedy unlabeled episodes. Zero-shot accuracy: first appearances
    routed to an empty slot. One-shot accuracy: second appearances routed
    to the slot their class already lives in."""
    zero_hit = zero_tot = one_hit = one_tot = 0
    n_slots = slots_per_class * n_classes
    for e in range(n_episodes):
        spec = EpisodeSpec(n_classes=n_classes, length=length, labeling="none",
                           scheme=scheme, l_label=l_label,
                           seed=derive_seed(seed, "zeroshot", e))
        episode = sample_episode(dataset, spec)
        memory = Memory.fresh(n_slots, policy.hidden_size, l_label)
        with no_grad():
            h_all = embed_batch(policy.emb, policy.embedder_cfg,
                                np.stack([s.x for s in episode.steps]), train=False).value
        seen: dict[int, int] = {}
        home: dict[int, set] = {}
        for t, step in enumerate(episode.steps):
            # unlabeled: greedy nearest slot over all L, ties to lowest index
            d = np.linalg.norm(memory.m_h - h_all[t][None, :], axis=1)
            a = int(np.argmin(d))
            appearances = seen.get(step.class_id, 0)
            if appearances == 0:
                zero_tot += 1
                if memory.m_c[a] == 0:
                    zero_hit += 1
            elif appearances == 1:
                one_tot += 1
                if a in home.get(step.class_id, ()):
                    one_hit += 1
            write(memory, a, h_all[t], step.y)
            seen[step.class_id] = appearances + 1
            home.setdefault(step.class_id, set()).add(a)
    z = zero_hit / zero_tot if zero_tot else 0.0
    o = one_hit / one_tot if one_tot else 0.0
    return FewZeroReport(zero_shot_accuracy=z, one_shot_accuracy=o, f1=f1(z, o),
                         zero_count=zero_tot, one_count=one_tot)


def tradeoff_experiment(policy: Policy, dataset: Dataset, finetune_episodes: int,
                        interval: int, n_classes: int = 5, length: int = 10,
                        scheme: str = "one-hot", l_label: int = 10,
                        slots_per_class: int = 2, eval_episodes: int = 300,
                        lr: float = 1e-4, seed: int = 0,
                        reward_cfg: RewardConfig | None = None,
                        eval_dataset: Dataset | None = None) -> list[dict]:
    """Fine-tune on unlabeled episodes and watch the two accuracies move.

    Returns one point per evaluation: before fine-tuning, then after each
    `interval` episodes. Fine-tuning draws from `dataset`; metrics use
    `eval_dataset` when given (held-out classes), else the same data.
    This intentionally mutates the policy; callers wanting to keep the
    original parameters should pass a copy.
    """
    if finetune_episodes < 0 or (finetune_episodes > 0 and interval < 1):
        raise ContractError("finetune_episodes must be >= 0 with a positive interval")
    eval_ds = eval_dataset if eval_dataset is not None else dataset

    def measure(at: int) -> dict:
        # few_shot here is second-appearance routing accuracy on the same
        # unlabeled episodes as zero_shot, so both columns track one policy
        # behaviour; the labeled nway protocol never touches empty slots and
        # cannot see the shift this experiment is about.
        zs = zeroshot_eval(policy, eval_ds, eval_episodes, n_classes, length,
                           l_label, scheme, slots_per_class,
                           seed=derive_seed(seed, "tr-zero", at))
        return {"episodes": at, "zero_shot": zs.zero_shot_accuracy,
                "few_shot": zs.one_shot_accuracy, "f1": zs.f1}

    series = [measure(0)]
    opt = AdamState(lr=lr)
    done = 0
    round_idx = 0
    while done < finetune_episodes:
        chunk = min(interval, finetune_episodes - done)
        stage = CurriculumStage(n_classes=n_classes, length=length,
                                episodes=chunk, labeling="none")
        train(policy, dataset, [stage], reward_cfg=reward_cfg, opt=opt,
              seed=derive_seed(seed, "tr-train", round_idx),
              slots_per_class=slots_per_class, scheme=scheme, l_label=l_label)
        done += chunk
        round_idx += 1
        series.append(measure(done))
    return series


# -- report emission ---------------------------------------------------------


def write_nway_csv(path: str, reports: list[NwayReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "k", "accuracy", "ci95", "episodes"])
        for r in reports:
            w.writerow([r.n, r.k, f"{r.accuracy:.6f}", f"{r.ci95:.6f}", r.episodes])


def write_mann_csv(path: str, report: ShotAccuracyReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["shot", "accuracy", "ci95", "count"])
        for j in report.shots():
            w.writerow([j, f"{report.accuracy(j):.6f}", f"{report.ci95(j):.6f}",
                        report.total[j]])


def write_fewzero_csv(path: str, report: FewZeroReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["zero_shot", "one_shot", "f1"])
        w.writerow([f"{report.zero_shot_accuracy:.6f}",
                    f"{report.one_shot_accuracy:.6f}", f"{report.f1:.6f}"])


def write_tradeoff_csv(path: str, series: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["zero_shot", "few_shot"])
        for point in series:
            w.writerow([f"{point['zero_shot']:.6f}", f"{point['few_shot']:.6f}"])


def format_mann_table(report: ShotAccuracyReport) -> str:
    lines = ["shot  accuracy  ci95     count"]
    for j in report.shots():
        lines.append(f"{j:<4d}  {report.accuracy(j):8.4f}  {report.ci95(j):7.4f}  "
                     f"{report.total[j]}")
    return "\n".join(lines)


def format_nway_table(r: NwayReport) -> str:
    return (f"{r.n}-way {r.k}-shot: accuracy {r.accuracy:.4f} "
            f"+/- {r.ci95:.4f} over {r.episodes} episodes")
