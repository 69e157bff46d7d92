"""Few-shot concept learning with an episodic slot memory trained by
policy gradients."""

from .autodiff import Node, backward, constant, grad_check, leaf, no_grad
from .embedder import EmbedderConfig, build_embedder, embed, embed_batch
from .episodes import (Dataset, Episode, EpisodeSpec, encode_label,
                       nway_kshot_episode, sample_episode)
from .evaluation import (FewZeroReport, NwayReport, ShotAccuracyReport, f1,
                         mann_eval, nway_kshot_eval, tradeoff_experiment,
                         zeroshot_eval)
from .label_attention import att_y, build_att_y, label_transfer_eval
from .memory import (Memory, att_h, attend, choose_slot, classify,
                     lambda_switch, write)
from .params import ParamSet, load_checkpoint, save_checkpoint
from .rng import Xoshiro256, derive_seed
from .trainer import (AdamState, CurriculumStage, Policy, RewardConfig,
                      apply_update, build_policy, reinforce_gradient,
                      run_episode, step_reward, terminal_reward, train)

__version__ = "0.1.0"
