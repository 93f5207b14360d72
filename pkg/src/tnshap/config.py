"""Process-wide knobs shared by the library and the CLI."""

from __future__ import annotations

import os

_worker_budget = max(1, os.cpu_count() or 1)


def set_worker_budget(k: int) -> None:
    """Cap the number of worker threads batch operations may use."""
    global _worker_budget
    if k < 1:
        raise ValueError("worker budget must be >= 1")
    _worker_budget = int(k)


def get_worker_budget() -> int:
    return _worker_budget
