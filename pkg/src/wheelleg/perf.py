"""Process-level performance tuning for the numeric hot loops."""

from __future__ import annotations

import ctypes

_tuned = False

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3


def tune_allocator() -> None:
    """Keep large numpy temporaries on the heap instead of mmap-per-array.

    The training loop allocates and frees many multi-megabyte activation
    buffers per minibatch; with glibc defaults each goes through mmap/munmap
    and costs page faults on every touch. Raising the thresholds lets the
    allocator recycle them. No-op on non-glibc platforms.
    """
    global _tuned
    if _tuned:
        return
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(_M_MMAP_THRESHOLD, 1 << 30)
        libc.mallopt(_M_TRIM_THRESHOLD, 1 << 30)
    except OSError:
        pass
    _tuned = True
