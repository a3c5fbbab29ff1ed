"""Extraction of the machine-parseable final ranking from model output."""

from __future__ import annotations

import re

_RANKING_RE = re.compile(r"FINAL_RANKING:\s*(\d+(?:\s*,\s*\d+|\s+\d+)*)\s*$")


def parse_final_ranking(text: str, k: int) -> list[int] | None:
    """Parse the last ``FINAL_RANKING: i1, i2, ...`` line into a permutation.

    Scans for the last line where the marker is followed by nothing but
    comma/space-separated integers, and accepts it only if those integers
    are exactly a permutation of 1..k. Returns None on any malformed or
    non-permutation input; never raises.
    """
    if not isinstance(text, str) or k < 1:
        return None
    match = None
    for line in text.splitlines():
        found = _RANKING_RE.search(line)
        if found is not None:
            match = found
    if match is None:
        return None
    values = [int(tok) for tok in re.findall(r"\d+", match.group(1))]
    if len(values) != k or sorted(values) != list(range(1, k + 1)):
        return None
    return values
