from typing import Iterable, Optional

from tqdm import tqdm

BAR_FORMAT = "{desc}: {percentage:3.0f}%|{bar}| {n_fmt}/{total_fmt} [{elapsed}<{remaining}, {rate_fmt}] {postfix}"


def progress_bar(
    iterable:   Optional[Iterable] = None,
    total:      Optional[int] = None,
    desc:       str = "",
    unit:       str = "it",
    initial:    int = 0,
    enabled:    bool = True,
) -> tqdm:
    return tqdm(
        iterable,
        total=total,
        desc=desc,
        unit=unit,
        initial=initial,
        bar_format=BAR_FORMAT,
        ncols=100,
        position=0,
        leave=True,
        disable=not enabled,
    )
