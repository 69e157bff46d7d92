"""Run configuration: a single JSON document describing task, model,
reward scheme, curriculum, optimizer and evaluation settings.

Validation reports the offending field by its dotted path. Parsing then
serializing then parsing again yields an identical document, which keeps
configs diffable across runs.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from .data import SyntheticSpec, make_synthetic, make_uninformative
from .embedder import EmbedderConfig
from .errors import ConfigError
from .trainer import AdamState, CurriculumStage, RewardConfig

TASKS = ("synthetic", "omniglot", "label-transfer")

DEFAULT_EVAL = {
    "n_way": 5,
    "k_shot": 1,
    "episodes": 500,
    "mann_length": 50,
    "mann_episodes": 100,
    "zeroshot_length": 10,
    "tradeoff_episodes": 2000,
    "tradeoff_interval": 500,
    "tradeoff_eval_episodes": 300,
    "transfer_l_label": 15,
    "transfer_episodes": 1000,
}


@dataclass
class RunConfig:
    task: str
    seed: int
    out_dir: str
    embedder: dict
    labels: dict
    curriculum: list
    memory: dict = field(default_factory=lambda: {"slots_per_class": 2})
    reward: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    synthetic: dict | None = None
    data_root: str | None = None
    dataset_dir: str | None = None
    eval: dict = field(default_factory=dict)
    checkpoint_interval: int = 0
    lockstep: bool = True
    atty_hidden: int = 32

    # -- construction ---------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        missing = [f for f in ("task", "seed", "out_dir", "embedder", "labels", "curriculum")
                   if f not in raw]
        if missing:
            raise ConfigError(f"missing required config fields: {missing}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"task: must be one of {TASKS}, got {self.task!r}")
        if not isinstance(self.seed, int):
            raise ConfigError(f"seed: must be an explicit integer, got {self.seed!r}")
        if not isinstance(self.out_dir, str) or not self.out_dir:
            raise ConfigError("out_dir: must be a nonempty path")
        self._validate_embedder()
        self._validate_labels()
        self._validate_memory()
        self._validate_reward()
        self._validate_optimizer()
        self._validate_curriculum()
        self._validate_eval()
        if self.task == "synthetic" or self.task == "label-transfer":
            if self.dataset_dir is None and self.synthetic is None:
                raise ConfigError(f"synthetic: required for task {self.task!r}")
            if self.synthetic is not None:
                self.build_synthetic_spec()
        if self.task == "omniglot":
            root = self.data_root or os.environ.get("CONCEPT_DATA_DIR", "")
            if not root or not os.path.isdir(root):
                raise ConfigError(
                    "data_root: omniglot task needs an existing dataset root "
                    "(or CONCEPT_DATA_DIR)")
        if self.dataset_dir is not None and not os.path.isdir(self.dataset_dir):
            raise ConfigError(f"dataset_dir: {self.dataset_dir!r} does not exist")
        if self.checkpoint_interval < 0:
            raise ConfigError("checkpoint_interval: must be >= 0")
        if self.atty_hidden < 1:
            raise ConfigError("atty_hidden: must be >= 1")

    def _validate_embedder(self) -> None:
        if not isinstance(self.embedder, dict):
            raise ConfigError("embedder: must be an object")
        try:
            self.build_embedder_config()
        except (ConfigError, TypeError) as exc:
            raise ConfigError(f"embedder: {exc}") from exc

    def _validate_labels(self) -> None:
        scheme = self.labels.get("scheme")
        l_label = self.labels.get("l_label")
        if scheme not in ("one-hot", "binary"):
            raise ConfigError(f"labels.scheme: must be one-hot or binary, got {scheme!r}")
        if not isinstance(l_label, int) or l_label < 1:
            raise ConfigError(f"labels.l_label: must be a positive integer, got {l_label!r}")

    def _validate_memory(self) -> None:
        spc = self.memory.get("slots_per_class", 2)
        if not isinstance(spc, int) or spc < 1:
            raise ConfigError(f"memory.slots_per_class: must be a positive integer, got {spc!r}")

    def _validate_reward(self) -> None:
        allowed = {"fresh_slot_penalty", "wrong_merge_penalty",
                   "correct_merge_reward", "terminal_bonus"}
        bad = set(self.reward) - allowed
        if bad:
            raise ConfigError(f"reward: unknown fields {sorted(bad)}")
        for k, v in self.reward.items():
            if not isinstance(v, (int, float)):
                raise ConfigError(f"reward.{k}: must be a number, got {v!r}")

    def _validate_optimizer(self) -> None:
        allowed = {"lr", "beta1", "beta2", "eps", "baseline", "batch_size"}
        bad = set(self.optimizer) - allowed
        if bad:
            raise ConfigError(f"optimizer: unknown fields {sorted(bad)}")
        lr = self.optimizer.get("lr", 1e-4)
        if not isinstance(lr, (int, float)) or lr < 0:
            raise ConfigError(f"optimizer.lr: must be a nonnegative number, got {lr!r}")
        bs = self.optimizer.get("batch_size", 16)
        if not isinstance(bs, int) or bs < 1:
            raise ConfigError(f"optimizer.batch_size: must be a positive integer, got {bs!r}")

    def _validate_curriculum(self) -> None:
        if not isinstance(self.curriculum, list) or not self.curriculum:
            raise ConfigError("curriculum: must be a nonempty list of stages")
        for i, stage in enumerate(self.curriculum):
            try:
                CurriculumStage(**stage)
            except (ConfigError, TypeError) as exc:
                raise ConfigError(f"curriculum[{i}]: {exc}") from exc

    def _validate_eval(self) -> None:
        bad = set(self.eval) - set(DEFAULT_EVAL)
        if bad:
            raise ConfigError(f"eval: unknown fields {sorted(bad)}")
        for k, v in self.eval.items():
            if not isinstance(v, int) or v < 0:
                raise ConfigError(f"eval.{k}: must be a nonnegative integer, got {v!r}")

    # -- typed views ------------------------------------------------------

    def build_embedder_config(self) -> EmbedderConfig:
        e = dict(self.embedder)
        kwargs = {
            "kind": e.get("kind"),
            "input_shape": tuple(e.get("input_shape", ())),
            "hidden_size": e.get("hidden_size", 0),
        }
        if "widths" in e:
            kwargs["widths"] = tuple(e["widths"])
        if "conv_filters" in e:
            kwargs["conv_filters"] = tuple(e["conv_filters"])
        extra = set(e) - {"kind", "input_shape", "hidden_size", "widths", "conv_filters"}
        if extra:
            raise ConfigError(f"unknown embedder fields {sorted(extra)}")
        return EmbedderConfig(**kwargs)

    def build_reward_config(self) -> RewardConfig:
        return RewardConfig(**self.reward)

    def build_optimizer(self) -> AdamState:
        o = dict(self.optimizer)
        return AdamState(lr=float(o.get("lr", 1e-4)), beta1=float(o.get("beta1", 0.9)),
                         beta2=float(o.get("beta2", 0.999)), eps=float(o.get("eps", 1e-8)),
                         use_baseline=bool(o.get("baseline", True)))

    @property
    def batch_size(self) -> int:
        return int(self.optimizer.get("batch_size", 16))

    @property
    def slots_per_class(self) -> int:
        return int(self.memory.get("slots_per_class", 2))

    @property
    def scheme(self) -> str:
        return self.labels["scheme"]

    @property
    def l_label(self) -> int:
        return int(self.labels["l_label"])

    def build_curriculum(self) -> list:
        return [CurriculumStage(**stage) for stage in self.curriculum]

    def build_synthetic_spec(self) -> SyntheticSpec:
        s = dict(self.synthetic or {})
        try:
            return SyntheticSpec(**s)
        except (ConfigError, TypeError) as exc:
            raise ConfigError(f"synthetic: {exc}") from exc

    def eval_setting(self, key: str) -> int:
        return int(self.eval.get(key, DEFAULT_EVAL[key]))

    def build_dataset(self):
        """Materialize the training dataset this config describes."""
        from .data import load_dataset, load_omniglot, augment_rotations

        if self.dataset_dir is not None:
            return load_dataset(self.dataset_dir)
        if self.task in ("synthetic", "label-transfer"):
            return make_synthetic(self.build_synthetic_spec(), self.seed)
        train, _ = load_omniglot(self.data_root)
        return augment_rotations(train)

    def build_eval_dataset(self):
        from .data import load_dataset, load_omniglot

        if self.task == "omniglot":
            _, ev = load_omniglot(self.data_root)
            return ev
        return self.build_dataset()


def load_config(path: str) -> RunConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file {path!r} does not exist")
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return RunConfig.from_dict(raw)


def save_config(cfg: RunConfig, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
