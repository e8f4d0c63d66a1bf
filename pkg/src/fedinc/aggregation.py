"""Weighted-mean aggregation algebra for in-network merging.

Every message is a (weight, values) pair: users emit (n_k, w_k) updates in
primal mode and (1, delta_v_k) in primal-dual mode, edges merge their users'
packets into one message carrying the summed weight and the weighted mean,
and the cloud merges whatever reaches it. Two-level merging must agree with
flat merging, so the merge internally accumulates exact dyadic rationals
(IEEE doubles convert to Fraction losslessly) and rounds to float64 exactly
once on output. That makes the result independent of grouping bit for bit,
not merely to tolerance.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from fedinc.model import CLOUD

WIRE_MAGIC = b"INA1"


@dataclass
class LocalMessage:
    """Leaf packet from one user."""

    weight: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("payload must be a nonempty 1-D vector")
        if not (self.weight > 0):
            raise ValueError(f"message weight must be positive, got {self.weight}")


@dataclass
class EdgeMessage:
    """Merged update an edge forwards: summed weight plus weighted mean."""

    weight: float
    values: np.ndarray
    exact_weight: Optional[Fraction] = field(default=None, repr=False)
    exact_values: Optional[list] = field(default=None, repr=False)


@dataclass
class PartitionAggregate:
    """Cloud-side merge of everything one partition delivered."""

    weight: float
    values: np.ndarray
    exact_weight: Optional[Fraction] = field(default=None, repr=False)
    exact_values: Optional[list] = field(default=None, repr=False)


def make_user_packet(mode: str, num_samples: int, payload) -> LocalMessage:
    """Packet for one user: weight n_k in primal mode, 1 in primal-dual."""
    if mode == "primal":
        if num_samples < 1:
            raise ValueError("primal packets need num_samples >= 1")
        return LocalMessage(weight=num_samples, values=payload)
    if mode == "primal_dual":
        return LocalMessage(weight=1, values=payload)
    raise ValueError(f"unknown packet mode {mode!r}, expected primal or primal_dual")


def _exact_pair(msg) -> tuple:
    """(weight, values) of a message as exact rationals."""
    if getattr(msg, "exact_values", None) is not None:
        return msg.exact_weight, msg.exact_values
    return Fraction(float(msg.weight)), [Fraction(float(v)) for v in msg.values]


def _merge_exact(messages) -> tuple:
    pairs = [_exact_pair(m) for m in messages]
    if not pairs:
        raise ValueError("cannot merge an empty message set")
    dim = len(pairs[0][1])
    total = Fraction(0)
    sums = [Fraction(0)] * dim
    for w, vals in pairs:
        if len(vals) != dim:
            raise ValueError("payload dimensions disagree across messages")
        if w <= 0:
            raise ValueError("message weights must be positive")
        total += w
        for i, v in enumerate(vals):
            sums[i] += w * v
    return total, [s / total for s in sums]


def _rounded(fracs) -> np.ndarray:
    return np.array([float(f) for f in fracs], dtype=np.float64)


def edge_aggregate(packets: Sequence) -> EdgeMessage:
    """Merge the packets one edge received into a single forwarded message.

    Accepts leaf packets and previously merged messages alike, so merges can
    be chained into arbitrary trees without changing the result.
    """
    total, mean = _merge_exact(packets)
    return EdgeMessage(weight=float(total), values=_rounded(mean),
                       exact_weight=total, exact_values=mean)


def cloud_merge(direct_packets: Sequence[LocalMessage],
                edge_messages: Sequence[EdgeMessage]) -> PartitionAggregate:
    """Merge direct user packets and forwarded edge messages at the cloud."""
    total, mean = _merge_exact(list(direct_packets) + list(edge_messages))
    return PartitionAggregate(weight=float(total), values=_rounded(mean),
                              exact_weight=total, exact_values=mean)


def global_update(carry: float, psi_prev, messages: Iterable) -> np.ndarray:
    """New global vector: carry * psi_prev + weighted mean of the messages.

    carry is 0 for plain averaging (primal mode) and 1 for additive updates
    (primal-dual mode). The mean is exact and each output component rounds
    once, so any grouping of the same leaf packets yields identical bits.
    """
    psi_prev = np.asarray(psi_prev, dtype=np.float64)
    total, mean = _merge_exact(list(messages))
    if len(mean) != psi_prev.size:
        raise ValueError("message dimension does not match the global vector")
    c = Fraction(float(carry))
    out = [float(c * Fraction(float(p)) + m) for p, m in zip(psi_prev, mean)]
    return np.array(out, dtype=np.float64)


def flat_aggregate(carry: float, psi_prev, packets: Sequence[LocalMessage]) -> np.ndarray:
    """Reference single-hop path: every packet straight to the cloud."""
    return global_update(carry, psi_prev, packets)


def cloud_load_metrics(assignment, model_bits: float,
                       ina_enabled: bool = True) -> tuple:
    """(models, bytes) arriving at the cloud for one aggregation pass.

    With in-network aggregation each loaded edge forwards a single merged
    model, so the cloud sees the direct users plus one model per nonempty
    edge; without it every user's model is forwarded individually.
    """
    loads = assignment.loads
    k = int(loads.sum())
    if ina_enabled:
        models = int(loads[CLOUD]) + int(np.count_nonzero(loads[1:]))
    else:
        models = k
    return models, models * model_bits / 8.0


def pack_message(msg) -> bytes:
    """Serialize a message: magic, little-endian f64 weight, u64 length,
    then the payload as little-endian f32 entries."""
    values = np.asarray(msg.values, dtype="<f4")
    return WIRE_MAGIC + struct.pack("<dQ", float(msg.weight), values.size) + values.tobytes()


def unpack_message(buf: bytes) -> LocalMessage:
    """Inverse of pack_message. Payload comes back as float64 values that
    are exactly the transmitted float32 entries."""
    header = 4 + struct.calcsize("<dQ")
    if len(buf) < header or buf[:4] != WIRE_MAGIC:
        raise ValueError("not a serialized aggregation message")
    weight, dim = struct.unpack("<dQ", buf[4:header])
    expect = header + 4 * dim
    if len(buf) != expect:
        raise ValueError(f"payload length mismatch: want {expect} bytes, got {len(buf)}")
    values = np.frombuffer(buf, dtype="<f4", offset=header).astype(np.float64)
    return LocalMessage(weight=weight, values=values)
