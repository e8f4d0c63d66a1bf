"""Kernel backend selection.

Imports the compiled kernels when the extension built, otherwise falls back
to the numpy implementations. Both produce identical bits (same arithmetic,
same order), so the choice only affects speed. Set FEDINC_FORCE_PURE=1 to
pin the numpy path, e.g. for benchmarking or debugging.
"""

from __future__ import annotations

import os

from fedinc import _kernels_py

_speedups = None
if os.environ.get("FEDINC_FORCE_PURE", "") not in ("1", "true", "yes"):
    try:
        from fedinc import _speedups  # type: ignore[no-redef]
    except ImportError:
        _speedups = None

BACKEND = "cython" if _speedups is not None else "python"


def compiled_available() -> bool:
    try:
        from fedinc import _speedups as ext  # noqa: F401
        return True
    except ImportError:
        return False


def node_latencies(loads, unit_cost, bk_unit, bk_cap):
    return _kernels_py.node_latencies(loads, unit_cost, bk_unit, bk_cap)


def assignment_uplink_batch(choices, unit_cost, bk_unit, bk_cap):
    if _speedups is not None:
        import numpy as np
        return _speedups.assignment_uplink_batch(
            np.ascontiguousarray(choices, dtype=np.int64),
            np.ascontiguousarray(unit_cost, dtype=np.float64),
            np.ascontiguousarray(bk_unit, dtype=np.float64),
            np.ascontiguousarray(bk_cap, dtype=np.float64))
    return _kernels_py.assignment_uplink_batch(choices, unit_cost, bk_unit, bk_cap)


def round_and_eval(cum, uniforms, unit_cost, bk_unit, bk_cap, want_counts=False):
    if _speedups is not None:
        import numpy as np
        return _speedups.round_and_eval(
            np.ascontiguousarray(cum, dtype=np.float64),
            np.ascontiguousarray(uniforms, dtype=np.float64),
            np.ascontiguousarray(unit_cost, dtype=np.float64),
            np.ascontiguousarray(bk_unit, dtype=np.float64),
            np.ascontiguousarray(bk_cap, dtype=np.float64),
            bool(want_counts))
    return _kernels_py.round_and_eval(cum, uniforms, unit_cost, bk_unit, bk_cap,
                                      want_counts)


def enumerate_best(cand, cand_len, unit_cost, bk_unit, bk_cap):
    if _speedups is not None:
        import numpy as np
        return _speedups.enumerate_best(
            np.ascontiguousarray(cand, dtype=np.int64),
            np.ascontiguousarray(cand_len, dtype=np.int64),
            np.ascontiguousarray(unit_cost, dtype=np.float64),
            np.ascontiguousarray(bk_unit, dtype=np.float64),
            np.ascontiguousarray(bk_cap, dtype=np.float64))
    return _kernels_py.enumerate_best(cand, cand_len, unit_cost, bk_unit, bk_cap)
