"""L-slot episodic memory with two-channel attention addressing.

Each slot keeps a prototype embedding m_h (the running mean of every
embedding written to it since reset), an aggregated label vector m_y
(likewise), and a write counter m_c. Slot contents are plain arrays:
gradients never flow through stored state, only through the current
step's embedding and the label-attention parameters.

Attention uses one channel at a time: a provided (nonzero) label vector
flips the switch to the learned label channel; an absent (all-zero)
label leaves the content channel, negated Euclidean distance to each
prototype. Empty slots participate with their zero vectors, which is
what makes a fresh memory attend uniformly and what gives first-sight
samples an empty slot to claim.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Node
from .errors import ContractError, DimensionError, EmptyMemoryError
from .label_attention import att_y_scores
from .params import ParamSet
from .rng import Xoshiro256


@dataclass
class Memory:
    m_h: np.ndarray   # [L, l_hidden]
    m_y: np.ndarray   # [L, l_label]
    m_c: np.ndarray   # [L] int64 write counters

    @classmethod
    def fresh(cls, n_slots: int, l_hidden: int, l_label: int) -> "Memory":
        if n_slots < 1 or l_hidden < 1 or l_label < 1:
            raise ContractError(
                f"memory sizes must be positive, got L={n_slots}, "
                f"l_hidden={l_hidden}, l_label={l_label}")
        return cls(m_h=np.zeros((n_slots, l_hidden)),
                   m_y=np.zeros((n_slots, l_label)),
                   m_c=np.zeros(n_slots, dtype=np.int64))

    @property
    def n_slots(self) -> int:
        return self.m_h.shape[0]

    def occupied(self) -> np.ndarray:
        return np.flatnonzero(self.m_c > 0)

    def reset(self) -> None:
        self.m_h[...] = 0.0
        self.m_y[...] = 0.0
        self.m_c[...] = 0


def lambda_switch(y: np.ndarray) -> int:
    """1 when a label is present (nonzero vector), 0 otherwise."""
    y = np.asarray(y, dtype=np.float64)
    return 0 if not np.any(y) else 1


def att_h(h: np.ndarray, m_h: np.ndarray) -> float:
    """Content score: negated Euclidean distance, so nearer is larger."""
    h = np.asarray(h, dtype=np.float64)
    m_h = np.asarray(m_h, dtype=np.float64)
    if h.shape != m_h.shape:
        raise DimensionError(f"att_h: shapes {h.shape} and {m_h.shape} differ")
    return float(-np.linalg.norm(h - m_h))


def attention_scores(memory: Memory, h: Node, y: np.ndarray,
                     atty: ParamSet | None) -> Node:
    """Raw per-slot scores (1-lambda)*att_h + lambda*att_y as a Node [L].

    The switch is binary, so only the active channel is evaluated; the
    inactive one contributes exactly zero and receives no gradient.
    """
    y = np.asarray(y, dtype=np.float64)
    if h.value.shape != (memory.m_h.shape[1],):
        raise DimensionError(
            f"attend: embedding shape {h.value.shape} != slot width ({memory.m_h.shape[1]},)")
    if y.shape != (memory.m_y.shape[1],):
        raise DimensionError(
            f"attend: label shape {y.shape} != slot label width ({memory.m_y.shape[1]},)")
    if lambda_switch(y) == 0:
        return ad.rowwise_neg_euclid(ad.constant(memory.m_h), h)
    if atty is None:
        raise ContractError("attend: labeled input needs label-attention parameters")
    return att_y_scores(atty, y[None, :] - memory.m_y)


def attend(memory: Memory, h: Node, y: np.ndarray, atty: ParamSet | None,
           temp: Node | None = None) -> Node:
    """Probability vector over slots: softmax of the gated channel scores.

    `temp` optionally multiplies the scores by a learnable scalar gain
    before the softmax (used by policy-gradient diagnostics).
    """
    scores = attention_scores(memory, h, y, atty)
    if temp is not None:
        scores = ad.mul_scalar(scores, temp)
    return ad.softmax(scores)


def choose_slot(probabilities: np.ndarray, mode: str, rng: Xoshiro256 | None = None) -> int:
    """Pick a slot: `sample` draws from the distribution, `greedy` takes
    the argmax with ties to the lowest index."""
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 1 or p.size < 1:
        raise DimensionError(f"choose_slot: expected a probability vector, got shape {p.shape}")
    if np.any(p < 0) or abs(float(p.sum()) - 1.0) > 1e-9:
        raise ContractError(f"choose_slot: input is not a probability vector (sum {p.sum()!r})")
    if mode == "greedy":
        return int(np.argmax(p))
    if mode == "sample":
        if rng is None:
            raise ContractError("choose_slot: sample mode needs an rng")
        u = rng.uniform(0.0, 1.0)
        acc = 0.0
        for i in range(p.size - 1):
            acc += p[i]
            if u < acc:
                return i
        return p.size - 1
    raise ContractError(f"choose_slot: unknown mode {mode!r}")


def write(memory: Memory, slot: int, h: np.ndarray, y: np.ndarray) -> None:
    """Fold (h, y) into the slot's running means and bump its counter."""
    if not 0 <= slot < memory.n_slots:
        raise ContractError(f"write: slot {slot} out of range for L={memory.n_slots}")
    h = np.asarray(h, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if h.shape != (memory.m_h.shape[1],):
        raise DimensionError(f"write: embedding shape {h.shape} != ({memory.m_h.shape[1]},)")
    if y.shape != (memory.m_y.shape[1],):
        raise DimensionError(f"write: label shape {y.shape} != ({memory.m_y.shape[1]},)")
    c = float(memory.m_c[slot])
    memory.m_h[slot] = (memory.m_h[slot] * c + h) / (c + 1.0)
    memory.m_y[slot] = (memory.m_y[slot] * c + y) / (c + 1.0)
    memory.m_c[slot] += 1


def classify(memory: Memory, h: np.ndarray) -> tuple[int, int]:
    """Route an unlabeled embedding to the nearest occupied prototype.

    Returns (slot index, predicted class), the class being the argmax
    entry of the chosen slot's aggregated label. Greedy with ties to the
    lowest index; raises when no slot is occupied.
    """
    occ = memory.occupied()
    if occ.size == 0:
        raise EmptyMemoryError("classify: no occupied slot to compare against")
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (memory.m_h.shape[1],):
        raise DimensionError(f"classify: embedding shape {h.shape} != ({memory.m_h.shape[1]},)")
    d = np.linalg.norm(memory.m_h[occ] - h[None, :], axis=1)
    slot = int(occ[int(np.argmin(d))])
    return slot, int(np.argmax(memory.m_y[slot]))


def dump(memory: Memory) -> str:
    """Human-readable slot table: index, counter, labels, head of m_h."""
    lines = ["slot  m_c  m_y  m_h[:8]"]
    for i in range(memory.n_slots):
        y = np.array2string(memory.m_y[i], precision=3, separator=",", max_line_width=200)
        h = np.array2string(memory.m_h[i, :8], precision=3, separator=",", max_line_width=200)
        lines.append(f"{i:<4d}  {int(memory.m_c[i]):<3d}  {y}  {h}")
    return "\n".join(lines)
