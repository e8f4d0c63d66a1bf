"""Round scheduling: when each user's upload may start aggregating.

Three schemes. aggregate_all waits for the slowest computation and then
runs one aggregation over everyone. sequential lets users upload one at a
time as they finish, which only works when consecutive finish times leave
room for a full upload (reported as a flag, not enforced). The bipartition
scheme splits users at t_min + delta_t: the fast group aggregates while
stragglers are still computing, the slow group follows, and the round ends
when the second aggregation does. Uplink durations come through a callback
so any routing mode can sit underneath.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class ScheduleResult:
    scheme: str
    total_s: float
    downlink_s: float
    compute_max_s: float
    partitions: tuple            # row-index arrays, in aggregation order
    partition_start_s: tuple     # absolute aggregation start per partition
    partition_uplink_s: tuple
    delta_t_s: Optional[float] = None
    regime: Optional[str] = None           # dense | sparse, from epsilon0
    gap_condition_met: Optional[bool] = None  # sequential only
    p1_empty: bool = False


def _check_times(compute_times) -> np.ndarray:
    t = np.asarray(compute_times, dtype=np.float64)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("compute_times must be a nonempty 1-D array")
    if np.any(t < 0):
        raise ValueError("compute times must be nonnegative")
    return t


def classify_regime(t_min: float, t_max: float, uplink_full_s: float,
                    epsilon0: float = 0.5) -> str:
    """dense when the compute-time spread is small next to the uplink time."""
    return "dense" if (t_max - t_min) <= epsilon0 * uplink_full_s else "sparse"


def aggregate_all_schedule(compute_times, downlink_s: float,
                           uplink_fn: Callable, epsilon0: float = 0.5) -> ScheduleResult:
    """Wait for the slowest user, then aggregate everyone at once."""
    t = _check_times(compute_times)
    everyone = np.arange(t.size, dtype=np.int64)
    uplink = float(uplink_fn(everyone))
    start = downlink_s + float(t.max())
    return ScheduleResult(
        scheme="aggregate_all",
        total_s=start + uplink,
        downlink_s=downlink_s,
        compute_max_s=float(t.max()),
        partitions=(everyone,),
        partition_start_s=(start,),
        partition_uplink_s=(uplink,),
        regime=classify_regime(float(t.min()), float(t.max()), uplink, epsilon0),
    )


def sequential_schedule(compute_times, downlink_s: float,
                        upload_s: float) -> ScheduleResult:
    """Users upload one by one as they finish; the last finisher pays one
    upload. Valid when consecutive finish times are at least upload_s apart,
    reported via gap_condition_met."""
    t = _check_times(compute_times)
    ordered = np.sort(t)
    gaps_ok = bool(np.all(np.diff(ordered) >= upload_s - 1e-12)) if t.size > 1 else True
    start = downlink_s + float(t.max())
    return ScheduleResult(
        scheme="sequential",
        total_s=start + upload_s,
        downlink_s=downlink_s,
        compute_max_s=float(t.max()),
        partitions=(np.argsort(t, kind="stable").astype(np.int64),),
        partition_start_s=(start,),
        partition_uplink_s=(upload_s,),
        gap_condition_met=gaps_ok,
    )


def bipartition_schedule(compute_times, delta_t_s: float, downlink_s: float,
                         uplink_fn: Callable, epsilon0: float = 0.5) -> ScheduleResult:
    """Two-stage aggregation around the cutoff t_min + delta_t.

    The fast partition starts aggregating at downlink + t_min + delta_t and
    finishes at t_p1 = that + its uplink time. The slow partition starts at
    max(t_p1, downlink + t_max) and the round ends when it finishes. With
    delta_t >= t_max - t_min the slow partition is empty and the round ends
    at t_p1; an empty fast partition degrades to aggregate_all semantics.
    The trigger never waits past the last finisher, so an oversized delta_t
    reduces exactly to aggregate_all.
    """
    t = _check_times(compute_times)
    if delta_t_s < 0:
        raise ValueError("delta_t_s must be nonnegative")
    t_min, t_max = float(t.min()), float(t.max())
    cutoff = t_min + delta_t_s
    fast = np.flatnonzero(t <= cutoff).astype(np.int64)
    slow = np.flatnonzero(t > cutoff).astype(np.int64)

    uplink_fast = float(uplink_fn(fast)) if fast.size else 0.0
    uplink_slow = float(uplink_fn(slow)) if slow.size else 0.0
    start_fast = downlink_s + min(cutoff, t_max)
    t_p1 = start_fast + uplink_fast
    start_slow = max(t_p1, downlink_s + t_max)
    total = start_slow + uplink_slow if slow.size else t_p1

    full_uplink = float(uplink_fn(np.arange(t.size, dtype=np.int64)))
    return ScheduleResult(
        scheme="bipartition",
        total_s=total,
        downlink_s=downlink_s,
        compute_max_s=t_max,
        partitions=(fast, slow),
        partition_start_s=(start_fast if fast.size else None, start_slow if slow.size else None),
        partition_uplink_s=(uplink_fast, uplink_slow),
        delta_t_s=delta_t_s,
        regime=classify_regime(t_min, t_max, full_uplink, epsilon0),
        p1_empty=fast.size == 0,
    )


def theorem1_bound(t_min: float, t_max: float, downlink_s: float,
                   uplink_full_s: float, eps2: float, eps3: float) -> float:
    """Worst-case round time of the bipartition scheme:
    downlink + max(t_min + (1 + eps2 + eps3) * uplink, t_max + eps2 * uplink),
    where eps2 scales the slow partition's uplink and eps3 the cutoff width,
    both relative to the full-set uplink time."""
    if uplink_full_s < 0 or t_max < t_min:
        raise ValueError("need uplink_full_s >= 0 and t_max >= t_min")
    return downlink_s + max(t_min + (1.0 + eps2 + eps3) * uplink_full_s,
                            t_max + eps2 * uplink_full_s)
