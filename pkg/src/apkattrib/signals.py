"""Attribution signal vocabulary: kinds, canonical values, scripts, similarity.

Every analysis in the package compares signals through the canonical form
produced here, so two listings share a graph node exactly when
:func:`normalize_signal` maps their raw values to the same text.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from enum import Enum
from urllib.parse import urlsplit, urlunsplit

from rapidfuzz.distance import Levenshtein


class SignalKind(str, Enum):
    PACKAGE_NAME = "package_name"
    APP_NAME_MARKET = "app_name_market"
    APP_NAME_MANIFEST = "app_name_manifest"
    DEVELOPER_NAME = "developer_name"
    DEVELOPER_WEBSITE = "developer_website"
    DEVELOPER_EMAIL = "developer_email"
    DEVELOPER_ADDRESS = "developer_address"
    PRIVACY_POLICY_URL = "privacy_policy_url"
    CERT_FINGERPRINT = "cert_fingerprint"

    @classmethod
    def parse(cls, token: str) -> "SignalKind":
        """Resolve a kind from its value or a short CLI alias.

        Raises ``ValueError`` for anything outside the closed set.
        """
        key = token.strip().lower().replace("-", "_")
        key = _ALIASES.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown signal kind: {token!r}") from None


_ALIASES = {
    "cert": "cert_fingerprint",
    "certificate": "cert_fingerprint",
    "app_name": "app_name_market",
    "manifest_app_name": "app_name_manifest",
    "website": "developer_website",
    "email": "developer_email",
    "address": "developer_address",
    "privacy_policy": "privacy_policy_url",
    "package": "package_name",
}

URL_KINDS = frozenset({SignalKind.DEVELOPER_WEBSITE, SignalKind.PRIVACY_POLICY_URL})

# Kinds that may become graph nodes; address and the manifest label stay out.
GRAPH_KINDS = (
    SignalKind.DEVELOPER_NAME,
    SignalKind.DEVELOPER_WEBSITE,
    SignalKind.DEVELOPER_EMAIL,
    SignalKind.PRIVACY_POLICY_URL,
    SignalKind.PACKAGE_NAME,
    SignalKind.APP_NAME_MARKET,
    SignalKind.CERT_FINGERPRINT,
)


class InvalidSignalError(ValueError):
    """A raw value that cannot represent its kind (e.g. a bad fingerprint)."""


@dataclass(frozen=True, order=True)
class Signal:
    kind: SignalKind
    raw_value: str
    canonical_value: str


class Script(str, Enum):
    LATIN = "latin"
    NON_LATIN = "non_latin"
    MIXED = "mixed"
    EMPTY = "empty"


_HEX64 = re.compile(r"[0-9a-fA-F]{64}")


def canonical_fingerprint(raw: str) -> str:
    value = raw.strip().replace(":", "")
    if not _HEX64.fullmatch(value):
        raise InvalidSignalError(f"malformed SHA-256 fingerprint: {raw!r}")
    return value.lower()


def _fold(text: str) -> str:
    # casefold can leave decomposed sequences behind, so recompose afterwards
    return unicodedata.normalize("NFC", unicodedata.normalize("NFC", text).casefold())


def _canonical_url(text: str) -> str:
    if "://" not in text:
        host, sep, rest = text.partition("/")
        value = _fold(host) + sep + rest
    else:
        try:
            parts = urlsplit(text)
        except ValueError:
            return _fold(text).rstrip("/")
        value = urlunsplit(
            (_fold(parts.scheme), _fold(parts.netloc), parts.path, parts.query, parts.fragment)
        )
    return value.rstrip("/")


def normalize_signal(kind: SignalKind, raw: str | None) -> Signal | None:
    """Canonicalize ``raw`` for ``kind``; ``None`` when the value is missing.

    Text is NFC-composed, trimmed and case-folded. URL kinds only fold the
    scheme and host and drop trailing slashes, since paths may be case
    sensitive. Fingerprints must be 64 hex digits.
    """
    if raw is None:
        return None
    text = unicodedata.normalize("NFC", str(raw)).strip()
    if not text:
        return None
    if kind is SignalKind.CERT_FINGERPRINT:
        return Signal(kind, raw, canonical_fingerprint(text))
    if kind in URL_KINDS:
        value = _canonical_url(text).strip()
    else:
        value = _fold(text).strip()
    if not value:
        return None
    return Signal(kind, raw, value)


# Unicode blocks holding Latin letters
_LATIN_RANGES = (
    (0x0041, 0x005A),
    (0x0061, 0x007A),
    (0x00AA, 0x00AA),
    (0x00BA, 0x00BA),
    (0x00C0, 0x024F),  # Latin-1 Supplement letters, Extended-A/B
    (0x0250, 0x02AF),  # IPA extensions
    (0x1D00, 0x1DBF),  # phonetic extensions
    (0x1E00, 0x1EFF),  # Latin Extended Additional
    (0x2C60, 0x2C7F),  # Extended-C
    (0xA720, 0xA7FF),  # Extended-D
    (0xAB30, 0xAB6F),  # Extended-E
    (0xFB00, 0xFB06),  # Latin ligatures
    (0xFF21, 0xFF3A),  # fullwidth
    (0xFF41, 0xFF5A),
)


def _is_latin(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _LATIN_RANGES)


def detect_script(text: str) -> Script:
    latin = other = False
    for ch in text:
        if not ch.isalpha():
            continue
        if _is_latin(ch):
            latin = True
        else:
            other = True
    if latin and other:
        return Script.MIXED
    if latin:
        return Script.LATIN
    if other:
        return Script.NON_LATIN
    return Script.EMPTY


def edit_distance(a: str, b: str) -> int:
    """Unit-cost Levenshtein distance over code points."""
    return Levenshtein.distance(a, b)


def levenshtein_similarity(a: str, b: str) -> float:
    """``1 - d(a, b) / max(|a|, |b|)``; two empty strings are identical."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - edit_distance(a, b) / longest
