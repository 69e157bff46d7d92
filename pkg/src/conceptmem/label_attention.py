"""Learned label-channel attention.

A GRU with scalar input consumes the elementwise difference of two label
vectors one entry at a time; a linear readout of the final hidden state
yields the consistency score. Because the recurrence walks the vector,
the same parameters accept label vectors of any length, which is what
lets a model trained on length-10 one-hots score length-15 binary codes.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import GruParams, Node, no_grad
from .errors import ContractError, DimensionError
from .params import ParamSet, glorot_uniform
from .rng import Xoshiro256, derive_seed

ATT_Y_HIDDEN = 32


def build_att_y(seed: int, d_h: int = ATT_Y_HIDDEN) -> ParamSet:
    """GRU (input size 1, hidden d_h) plus a d_h -> 1 linear readout."""
    if d_h < 1:
        raise ContractError(f"att_y hidden size must be >= 1, got {d_h}")
    rng = Xoshiro256(seed)
    pset = ParamSet(meta={"d_h": d_h})
    for gate in ("z", "r", "h"):
        pset.add(f"gru.w{gate}", glorot_uniform(rng, (1, d_h), 1, d_h))
        pset.add(f"gru.u{gate}", glorot_uniform(rng, (d_h, d_h), d_h, d_h))
        pset.add(f"gru.b{gate}", np.zeros(d_h))
    pset.add("fc.w", glorot_uniform(rng, (d_h, 1), d_h, 1))
    pset.add("fc.b", np.zeros(1))
    return pset


def gru_view(pset: ParamSet) -> GruParams:
    p = pset.params
    return GruParams(wz=p["gru.wz"], uz=p["gru.uz"], bz=p["gru.bz"],
                     wr=p["gru.wr"], ur=p["gru.ur"], br=p["gru.br"],
                     wh=p["gru.wh"], uh=p["gru.uh"], bh=p["gru.bh"])


def att_y_scores(pset: ParamSet, diffs: np.ndarray) -> Node:
    """Score a batch of difference vectors diffs[R, l] -> Node [R].

    Each row is an independent sequence; the GRU starts from a zero
    state and reads one scalar per step.
    """
    diffs = np.ascontiguousarray(diffs, dtype=np.float64)
    if diffs.ndim != 2 or diffs.shape[1] < 1:
        raise DimensionError(f"att_y: difference batch must be [R, l], got {diffs.shape}")
    rows, length = diffs.shape
    gru = gru_view(pset)
    h = ad.constant(np.zeros((rows, gru.d_h)))
    for j in range(length):
        x_j = ad.constant(diffs[:, j:j + 1])
        h = ad.gru_cell_batch(x_j, h, gru)
    out = ad.add_rowvec(ad.matmul(h, pset.params["fc.w"]), pset.params["fc.b"])
    return ad.reshape(out, (rows,))


def att_y(pset: ParamSet, y: np.ndarray, m_y: np.ndarray) -> Node:
    """Consistency score of one label vector against one stored label."""
    y = np.asarray(y, dtype=np.float64)
    m_y = np.asarray(m_y, dtype=np.float64)
    if y.shape != m_y.shape or y.ndim != 1:
        raise DimensionError(f"att_y: label shapes {y.shape} and {m_y.shape} differ")
    return ad.reshape(att_y_scores(pset, (y - m_y)[None, :]), ())


def label_transfer_eval(pset: ParamSet, episodes: int, n_way: int = 5,
                        scheme: str = "binary", l_label: int = 15,
                        id_low: int = 16, id_high: int | None = None,
                        seed: int = 0) -> float:
    """N-way 1-shot routing purely through the label channel.

    Per episode, `n_way` distinct label ids are drawn from
    [id_low, id_high), encoded per `scheme`, and stored one per slot.
    The query keeps its label and is routed to the occupied slot with
    the highest score; the episode counts as correct when that slot
    holds the query's own label. `id_high` defaults to the scheme's
    whole space (2^l for binary, l for one-hot). Random parameters land
    near 1/N.
    """
    from .episodes import _label_space, encode_label

    if episodes < 1:
        raise ContractError(f"episodes must be >= 1, got {episodes}")
    space = _label_space(scheme, l_label)
    if id_high is None:
        id_high = space
    if not 0 <= id_low < id_high <= space:
        raise ContractError(
            f"id range [{id_low}, {id_high}) does not fit the {scheme}-{l_label} "
            f"space of {space} ids")
    if id_high - id_low < n_way:
        raise ContractError(
            f"id range [{id_low}, {id_high}) cannot supply {n_way} distinct labels")
    rng = Xoshiro256(derive_seed(seed, "label-transfer"))
    hits = 0
    with no_grad():
        for _ in range(episodes):
            ids = [id_low + i for i in rng.sample(id_high - id_low, n_way)]
            stored = np.stack([encode_label(i, scheme, l_label) for i in ids])
            q = rng.randint(n_way)
            diffs = stored[q][None, :] - stored
            scores = att_y_scores(pset, diffs).value
            if int(np.argmax(scores)) == q:
                hits += 1
    return hits / episodes
