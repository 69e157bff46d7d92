"""Policy-gradient training of the embedder and the label attention.

An episode is a trajectory: at each step the policy attends over memory
slots, a slot is chosen (sampled during training, argmax at test time),
the step is rewarded, and the sample is written into the chosen slot.
Rewards: opening a fresh slot costs `fresh_slot_penalty`, merging into a
slot that holds a different class costs `wrong_merge_penalty`, merging
correctly earns `correct_merge_reward`, and an episode whose classes end
up bijectively in pure slots earns `terminal_bonus` on top. The return
G is the undiscounted sum, and the whole-episode G weights every step's
log-probability in the REINFORCE estimator, reduced by a moving-average
baseline.

Class purity is tracked here, outside the memory: the memory itself
never sees ground truth.

Two rollout paths produce identical traces: `run_episode` processes one
episode at a time, and `run_batch_lockstep` advances a whole mini-batch
step-synchronously so the recurrent label scorer runs on one stacked
batch per step. The lockstep path covers embedders without batch
normalization (identity, mlp); the cnn falls back to per-episode runs
so its batch statistics stay per-episode.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Node, no_grad
from .embedder import EmbedderConfig, build_embedder, embed_batch
from .episodes import Dataset, Episode, EpisodeSpec, sample_episode
from .errors import ConfigError, ContractError
from .label_attention import att_y_scores, build_att_y
from .memory import Memory, attend, choose_slot, lambda_switch, write
from .params import ParamSet, save_checkpoint
from .rng import Xoshiro256, derive_seed

LOG_COLUMNS = ("stage", "episode_batch", "mean_return", "perfect_rate", "wall_time_s")


@dataclass
class RewardConfig:
    fresh_slot_penalty: float = -1.0
    wrong_merge_penalty: float = -3.0
    correct_merge_reward: float = 0.0
    terminal_bonus: float = 100.0

    # undiscounted by construction; kept visible for the record
    discount: float = field(default=1.0, init=False)


@dataclass
class CurriculumStage:
    n_classes: int
    length: int
    episodes: int
    labeling: str = "seed"

    def __post_init__(self):
        if self.n_classes < 1 or self.length < 1 or self.episodes < 1:
            raise ConfigError(
                f"curriculum stage needs positive counts, got "
                f"n_classes={self.n_classes}, length={self.length}, episodes={self.episodes}")
        if self.labeling not in ("full", "seed", "none"):
            raise ConfigError(f"stage labeling {self.labeling!r} invalid")


@dataclass
class EpisodeTrace:
    mode: str
    actions: list[int]
    probs: list[np.ndarray]
    step_rewards: list[float]
    terminal_reward: float
    G: float
    perfect: bool
    logprobs: list[Node] = field(default_factory=list)


class PurityRecord:
    """Trainer-side record of which true classes each slot received."""

    def __init__(self, n_slots: int):
        self.slot_classes: list[set] = [set() for _ in range(n_slots)]
        self.slot_counts = [0] * n_slots

    def record(self, slot: int, class_id: int) -> None:
        self.slot_classes[slot].add(class_id)
        self.slot_counts[slot] += 1

    def classes_of(self, slot: int) -> set:
        return self.slot_classes[slot]


def step_reward(purity: PurityRecord, slot: int, true_class: int,
                cfg: RewardConfig) -> float:
    """Reward of writing `true_class` into `slot`, judged before the write."""
    if not 0 <= slot < len(purity.slot_counts):
        raise ContractError(f"step_reward: slot {slot} out of range")
    if purity.slot_counts[slot] == 0:
        return cfg.fresh_slot_penalty
    if any(c != true_class for c in purity.slot_classes[slot]):
        return cfg.wrong_merge_penalty
    return cfg.correct_merge_reward


def terminal_reward(purity: PurityRecord, appearing_classes: set,
                    cfg: RewardConfig) -> float:
    """Terminal bonus iff clustering is perfect: the appearing classes and
    the occupied slots are in bijection and every slot is pure."""
    return cfg.terminal_bonus if is_perfect(purity, appearing_classes) else 0.0


def is_perfect(purity: PurityRecord, appearing_classes: set) -> bool:
    occupied = [s for s in purity.slot_classes if s]
    if len(occupied) != len(appearing_classes):
        return False
    if any(len(s) != 1 for s in occupied):
        return False
    covered = set().union(*occupied) if occupied else set()
    return covered == set(appearing_classes)


# -- policy bundle ---------------------------------------------------------


class Policy:
    """Embedder + label attention (+ optional scalar score gain) behind one
    parameter set with `embedder.` / `att_y.` namespaces."""

    def __init__(self, embedder_cfg: EmbedderConfig, pset: ParamSet,
                 emb_view: ParamSet, atty_view: ParamSet):
        self.embedder_cfg = embedder_cfg
        self.pset = pset
        self.emb = emb_view
        self.atty = atty_view

    @property
    def temp(self) -> Node | None:
        return self.pset.params.get("policy.temp")

    @property
    def hidden_size(self) -> int:
        return self.embedder_cfg.hidden_size


def build_policy(embedder_cfg: EmbedderConfig, seed: int, atty_hidden: int = 32,
                 with_temp: bool = False, temp_init: float = 1.0) -> Policy:
    master = ParamSet(meta={"seed": seed})
    emb = build_embedder(embedder_cfg, derive_seed(seed, "embedder"))
    atty = build_att_y(derive_seed(seed, "att_y"), atty_hidden)
    master.merge(emb, "embedder")
    master.merge(atty, "att_y")
    if with_temp:
        master.add("policy.temp", np.asarray(float(temp_init)))
    return Policy(embedder_cfg, master, master.subset("embedder"), master.subset("att_y"))


# -- rollouts ---------------------------------------------------------------


def run_episode(policy: Policy, episode: Episode, memory: Memory, mode: str,
                reward_cfg: RewardConfig, rng: Xoshiro256 | None = None,
                forced_actions: list[int] | None = None) -> EpisodeTrace:
    """Roll one episode against a freshly reset memory.

    `sample` mode records the computation graph and log-probabilities for
    REINFORCE; `greedy` mode is the deterministic test-phase policy and
    builds no graph. `forced_actions` overrides slot choice (oracle
    tests) and also builds no graph.
    """
    if mode not in ("sample", "greedy"):
        raise ContractError(f"run_episode: unknown mode {mode!r}")
    if mode == "sample" and rng is None and forced_actions is None:
        raise ContractError("run_episode: sample mode needs an rng")
    if forced_actions is not None and len(forced_actions) != len(episode):
        raise ContractError(
            f"forced_actions has {len(forced_actions)} entries for a "
            f"{len(episode)}-step episode")
    memory.reset()
    live_graph = mode == "sample" and forced_actions is None

    if live_graph:
        trace = _rollout(policy, episode, memory, mode, reward_cfg, rng,
                         forced_actions, train=True)
    else:
        with no_grad():
            trace = _rollout(policy, episode, memory, mode, reward_cfg, rng,
                             forced_actions, train=False)
    return trace


def _rollout(policy, episode, memory, mode, reward_cfg, rng, forced_actions, train):
    xs = np.stack([s.x for s in episode.steps])
    h_all = embed_batch(policy.emb, policy.embedder_cfg, xs, train=train)
    purity = PurityRecord(memory.n_slots)
    actions, probs, rewards, logps = [], [], [], []
    for t, step in enumerate(episode.steps):
        h_t = ad.index0(h_all, t)
        p = attend(memory, h_t, step.y, policy.atty, policy.temp)
        if forced_actions is not None:
            a = int(forced_actions[t])
            if not 0 <= a < memory.n_slots:
                raise ContractError(f"forced action {a} out of range for L={memory.n_slots}")
        else:
            a = choose_slot(p.value, mode, rng)
        rewards.append(step_reward(purity, a, step.class_id, reward_cfg))
        purity.record(a, step.class_id)
        write(memory, a, h_t.value, step.y)
        actions.append(a)
        probs.append(p.value.copy())
        if train:
            logps.append(ad.log(ad.pick(p, a)))
    r_term = terminal_reward(purity, episode.classes_present(), reward_cfg)
    g = float(sum(rewards) + r_term)
    return EpisodeTrace(mode=mode, actions=actions, probs=probs,
                        step_rewards=rewards, terminal_reward=r_term, G=g,
                        perfect=is_perfect(purity, episode.classes_present()),
                        logprobs=logps)


def run_batch_lockstep(policy: Policy, episodes: list[Episode],
                       memories: list[Memory], reward_cfg: RewardConfig,
                       rngs: list[Xoshiro256]) -> list[EpisodeTrace]:
    """Sample-mode rollout of a whole batch, advancing every episode one
    step at a time so each step's label scoring runs as one stacked GRU
    batch over (episode, slot) pairs.

    Produces the same traces as per-episode `run_episode` given the same
    per-episode rngs; requires equal lengths, equal slot counts, and an
    embedder without batch statistics.
    """
    if policy.embedder_cfg.kind == "cnn":
        raise ContractError("lockstep rollout does not support the cnn embedder")
    n = len(episodes)
    if not (n and len(memories) == n and len(rngs) == n):
        raise ContractError("lockstep rollout needs matching episodes/memories/rngs")
    t_len = len(episodes[0])
    n_slots = memories[0].n_slots
    if any(len(ep) != t_len for ep in episodes):
        raise ContractError("lockstep rollout needs equal episode lengths")
    if any(m.n_slots != n_slots for m in memories):
        raise ContractError("lockstep rollout needs equal slot counts")
    for m in memories:
        m.reset()

    xs = np.stack([s.x for ep in episodes for s in ep.steps])
    h_all = embed_batch(policy.emb, policy.embedder_cfg, xs, train=True)

    purities = [PurityRecord(n_slots) for _ in range(n)]
    actions = [[] for _ in range(n)]
    probs = [[] for _ in range(n)]
    rewards = [[] for _ in range(n)]
    logps = [[] for _ in range(n)]

    for t in range(t_len):
        lambdas = [lambda_switch(ep.steps[t].y) for ep in episodes]
        y_scores = None
        if any(lam == 1 for lam in lambdas):
            diffs = np.concatenate(
                [ep.steps[t].y[None, :] - memories[i].m_y for i, ep in enumerate(episodes)])
            y_scores = ad.reshape(att_y_scores(policy.atty, diffs), (n, n_slots))
        for i, ep in enumerate(episodes):
            h_t = ad.index0(h_all, i * t_len + t)
            if lambdas[i] == 0:
                scores = ad.rowwise_neg_euclid(ad.constant(memories[i].m_h), h_t)
            else:
                scores = ad.index0(y_scores, i)
            if policy.temp is not None:
                scores = ad.mul_scalar(scores, policy.temp)
            p = ad.softmax(scores)
            a = choose_slot(p.value, "sample", rngs[i])
            rewards[i].append(step_reward(purities[i], a, ep.steps[t].class_id, reward_cfg))
            purities[i].record(a, ep.steps[t].class_id)
            write(memories[i], a, h_t.value, ep.steps[t].y)
            actions[i].append(a)
            probs[i].append(p.value.copy())
            logps[i].append(ad.log(ad.pick(p, a)))

    traces = []
    for i, ep in enumerate(episodes):
        r_term = terminal_reward(purities[i], ep.classes_present(), reward_cfg)
        g = float(sum(rewards[i]) + r_term)
        traces.append(EpisodeTrace(
            mode="sample", actions=actions[i], probs=probs[i],
            step_rewards=rewards[i], terminal_reward=r_term, G=g,
            perfect=is_perfect(purities[i], ep.classes_present()),
            logprobs=logps[i]))
    return traces


# -- gradient estimation and optimization -----------------------------------


def reinforce_gradient(traces: list[EpisodeTrace], baseline: float) -> float:
    """Accumulate the policy gradient of -(1/B) sum_i (G_i - b) sum_t log pi
    into the parameter nodes reachable from the traces; returns the batch
    mean return."""
    if not traces:
        raise ContractError("reinforce_gradient: empty batch")
    for tr in traces:
        if tr.mode != "sample" or not tr.logprobs:
            raise ContractError(
                "reinforce_gradient needs sample-mode traces with live graphs")
    total = None
    for tr in traces:
        ep_logp = tr.logprobs[0]
        for lp in tr.logprobs[1:]:
            ep_logp = ad.add(ep_logp, lp)
        weighted = ad.scale(ep_logp, tr.G - baseline)
        total = weighted if total is None else ad.add(total, weighted)
    loss = ad.scale(total, -1.0 / len(traces))
    ad.backward(loss)
    return float(np.mean([tr.G for tr in traces]))


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    use_baseline: bool = True
    t: int = 0
    baseline: float = 0.0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def effective_baseline(self) -> float:
        return self.baseline if self.use_baseline else 0.0


def apply_update(opt: AdamState, pset: ParamSet, mean_return: float) -> None:
    """One Adam step from the accumulated gradients, then fold the batch's
    mean return into the moving-average baseline."""
    opt.t += 1
    for name in pset.names():
        node = pset.params[name]
        g = node.grad if node.grad is not None else np.zeros_like(node.value)
        if not np.all(np.isfinite(g)):
            raise ContractError(f"non-finite gradient in parameter {name!r}")
        if name not in opt.m:
            opt.m[name] = np.zeros_like(node.value)
            opt.v[name] = np.zeros_like(node.value)
        opt.m[name] = opt.beta1 * opt.m[name] + (1.0 - opt.beta1) * g
        opt.v[name] = opt.beta2 * opt.v[name] + (1.0 - opt.beta2) * g * g
        m_hat = opt.m[name] / (1.0 - opt.beta1 ** opt.t)
        v_hat = opt.v[name] / (1.0 - opt.beta2 ** opt.t)
        node.value = node.value - opt.lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    opt.baseline = 0.99 * opt.baseline + 0.01 * mean_return


# -- training loop -----------------------------------------------------------


def train(policy: Policy, dataset: Dataset, curriculum: list[CurriculumStage],
          reward_cfg: RewardConfig | None = None, opt: AdamState | None = None,
          seed: int = 0, batch_size: int = 16, slots_per_class: int = 2,
          scheme: str = "one-hot", l_label: int = 10,
          log_path: str | None = None, checkpoint_path: str | None = None,
          checkpoint_interval: int = 0, lockstep: bool = True,
          progress: bool = False, checkpoint_meta: dict | None = None) -> list[dict]:
    """Run the curriculum; returns the training log rows.

    Everything random flows from `seed`, so two single-threaded runs with
    the same arguments produce identical parameters and logs (wall time
    aside).
    """
    if not curriculum:
        raise ConfigError("curriculum must have at least one stage")
    reward_cfg = reward_cfg or RewardConfig()
    opt = opt or AdamState()
    use_lockstep = lockstep and policy.embedder_cfg.kind != "cnn"
    rows: list[dict] = []
    writer = None
    log_file = None
    if log_path is not None:
        log_file = open(log_path, "w", newline="")
        writer = csv.writer(log_file)
        writer.writerow(LOG_COLUMNS)
    t0 = time.perf_counter()
    global_batch = 0
    try:
        for s_idx, stage in enumerate(curriculum):
            n_slots = slots_per_class * stage.n_classes
            done = 0
            while done < stage.episodes:
                b = min(batch_size, stage.episodes - done)
                episodes = [
                    sample_episode(dataset, EpisodeSpec(
                        n_classes=stage.n_classes, length=stage.length,
                        labeling=stage.labeling, scheme=scheme, l_label=l_label,
                        seed=derive_seed(seed, "ep", s_idx, global_batch, i)))
                    for i in range(b)
                ]
                rngs = [Xoshiro256(derive_seed(seed, "act", s_idx, global_batch, i))
                        for i in range(b)]
                memories = [Memory.fresh(n_slots, policy.hidden_size, l_label)
                            for _ in range(b)]
                if use_lockstep:
                    traces = run_batch_lockstep(policy, episodes, memories,
                                                reward_cfg, rngs)
                else:
                    traces = [run_episode(policy, ep, mem, "sample", reward_cfg, rng)
                              for ep, mem, rng in zip(episodes, memories, rngs)]
                policy.pset.zero_grad()
                mean_g = reinforce_gradient(traces, opt.effective_baseline())
                apply_update(opt, policy.pset, mean_g)
                row = {
                    "stage": s_idx,
                    "episode_batch": global_batch,
                    "mean_return": mean_g,
                    "perfect_rate": float(np.mean([tr.perfect for tr in traces])),
                    "wall_time_s": time.perf_counter() - t0,
                }
                rows.append(row)
                if writer is not None:
                    writer.writerow([row[c] for c in LOG_COLUMNS])
                if progress and global_batch % 25 == 0:
                    print(f"stage {s_idx} batch {global_batch} "
                          f"mean_return {mean_g:.2f} perfect {row['perfect_rate']:.2f}")
                done += b
                global_batch += 1
                if (checkpoint_path and checkpoint_interval > 0
                        and global_batch % checkpoint_interval == 0):
                    save_checkpoint(checkpoint_path, policy.pset,
                                    meta={**(checkpoint_meta or {}), "batches": global_batch})
        if checkpoint_path:
            save_checkpoint(checkpoint_path, policy.pset,
                            meta={**(checkpoint_meta or {}), "batches": global_batch,
                                  "final": True})
    finally:
        if log_file is not None:
            log_file.close()
    return rows
