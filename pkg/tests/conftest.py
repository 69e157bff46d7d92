"""Shared fixtures: hand-built policies with exactly known behaviour."""

import numpy as np

from conceptmem.embedder import EmbedderConfig
from conceptmem.trainer import Policy, build_policy


def oracle_router_policy(dim: int) -> Policy:
    """Identity embedder plus a hand-set label scorer that clusters
    one-hot-labeled samples perfectly.

    The GRU reads the difference vector y - m_y one component at a time.
    Unit 0 latches to 1 on any +1 component, unit 1 on any -1, and the
    readout is -(h0 + h1), so a slot already holding this label scores
    0, an empty slot -1, and a slot holding a different label -2. The
    gate logits sit at +-100, past fp64 sigmoid/tanh resolution, so the
    latched values and the three scores are exact.
    """
    cfg = EmbedderConfig(kind="identity", input_shape=(dim,), hidden_size=dim)
    policy = build_policy(cfg, seed=0, atty_hidden=2)
    p = policy.pset.params

    def put(name, arr):
        p[name].value[...] = arr

    put("att_y.gru.wz", [[-200.0, 200.0]])
    put("att_y.gru.bz", [100.0, 100.0])
    put("att_y.gru.wh", [[100.0, -100.0]])
    put("att_y.gru.bh", [0.0, 0.0])
    for name in ("gru.uz", "gru.ur", "gru.uh", "gru.wr", "gru.br"):
        put(f"att_y.{name}", np.zeros_like(p[f"att_y.{name}"].value))
    put("att_y.fc.w", [[-1.0], [-1.0]])
    put("att_y.fc.b", [0.0])
    return policy
