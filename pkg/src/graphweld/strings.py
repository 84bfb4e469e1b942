"""Name normalization and string similarity primitives."""
from __future__ import annotations

import re
import unicodedata

_SPLIT = re.compile(r"[\W_]+", re.UNICODE)

WINKLER_SCALING = 0.1
WINKLER_MAX_PREFIX = 4
WINKLER_BOOST_THRESHOLD = 0.7


def segment_name(name: str) -> list[str]:
    """Lowercase, strip diacritics, split on whitespace/punctuation.

    >>> segment_name("J. Smith")
    ['j', 'smith']
    """
    if not name:
        return []
    text = unicodedata.normalize("NFKD", name)
    text = "".join(c for c in text if not unicodedata.combining(c))
    text = unicodedata.normalize("NFKC", text).casefold()
    return [s for s in _SPLIT.split(text) if s]


def normalize_name(name: str) -> str:
    return " ".join(segment_name(name))


def jaro(s1: str, s2: str) -> float:
    if s1 == s2:
        return 1.0
    n1, n2 = len(s1), len(s2)
    if not n1 or not n2:
        return 0.0
    window = max(max(n1, n2) // 2 - 1, 0)
    used = [False] * n2
    matched1 = []
    for i, c in enumerate(s1):
        lo = max(0, i - window)
        hi = min(n2, i + window + 1)
        for j in range(lo, hi):
            if not used[j] and s2[j] == c:
                used[j] = True
                matched1.append(c)
                break
    m = len(matched1)
    if not m:
        return 0.0
    matched2 = [s2[j] for j in range(n2) if used[j]]
    half_transpositions = sum(a != b for a, b in zip(matched1, matched2))
    t = half_transpositions // 2
    return (m / n1 + m / n2 + (m - t) / m) / 3.0


def jaro_winkler(s1: str, s2: str) -> float:
    """Jaro similarity with the Winkler common-prefix boost.

    The boost (scaling 0.1, prefix of at most 4 characters) is applied when the
    Jaro similarity exceeds 0.7, as in Winkler's original definition.
    """
    j = jaro(s1, s2)
    if j <= WINKLER_BOOST_THRESHOLD:
        return j
    prefix = 0
    for a, b in zip(s1[:WINKLER_MAX_PREFIX], s2[:WINKLER_MAX_PREFIX]):
        if a != b:
            break
        prefix += 1
    return min(1.0, j + prefix * WINKLER_SCALING * (1.0 - j))


def levenshtein(s1: str, s2: str) -> int:
    if s1 == s2:
        return 0
    if len(s1) < len(s2):
        s1, s2 = s2, s1
    if not s2:
        return len(s1)
    prev = list(range(len(s2) + 1))
    for i, c1 in enumerate(s1, 1):
        cur = [i]
        for j, c2 in enumerate(s2, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (c1 != c2)))
        prev = cur
    return prev[-1]


def normalized_levenshtein(s1: str, s2: str) -> float:
    """Edit distance divided by the longer length; 0.0 for two empty strings."""
    longest = max(len(s1), len(s2))
    if not longest:
        return 0.0
    return levenshtein(s1, s2) / longest
