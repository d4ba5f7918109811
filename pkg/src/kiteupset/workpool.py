from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from tqdm import tqdm

LOGGER = logging.getLogger(__name__)

WORKERS_ENV = "KITEUPSET_WORKERS"

T = TypeVar("T")
R = TypeVar("R")


def resolve_workers(requested: Optional[int] = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        LOGGER.warning("ignoring non-integer %s=%r", WORKERS_ENV, raw)
        return 1


def ordered_map(
    fn: Callable[[T], R],
    items: Iterable[T],
    workers: int = 1,
    desc: Optional[str] = None,
    progress: bool = True,
) -> List[R]:
    """Apply `fn` to every item; results come back in submission order.

    With more than one worker `fn` and the items must be picklable.
    """
    items = list(items)
    disable = not progress or desc is None
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in tqdm(items, desc=desc, disable=disable)]
    chunksize = max(1, len(items) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(tqdm(ex.map(fn, items, chunksize=chunksize), total=len(items), desc=desc, disable=disable))
