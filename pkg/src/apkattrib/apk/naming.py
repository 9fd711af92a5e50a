"""Package-name heuristics: app-builder naming schemes and reverse-domain checks."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from urllib.parse import urlsplit

_BUILDER_SCHEMES: dict[str, re.Pattern[str]] = {
    "andromo": re.compile(r"^(com|net)\.andromo\.dev[0-9]+\.app[0-9]+$"),
}


def register_builder_scheme(tag: str, pattern: str) -> None:
    _BUILDER_SCHEMES[tag] = re.compile(pattern)


def builder_schemes() -> dict[str, str]:
    return {tag: rx.pattern for tag, rx in _BUILDER_SCHEMES.items()}


def match_package_scheme(package_name: str) -> str | None:
    for tag in sorted(_BUILDER_SCHEMES):
        if _BUILDER_SCHEMES[tag].match(package_name):
            return tag
    return None


class NamingConvention(str, Enum):
    MATCH = "match"
    PARTIAL_MATCH = "partial_match"
    NO_MATCH = "no_match"
    NO_WEBSITE = "no_website"


@dataclass(frozen=True)
class NamingVerdict:
    status: NamingConvention
    unparseable_url: bool = False


# Second-level labels that act as public suffixes under a country code.
# A compact stand-in for the full public suffix list.
_GENERIC_SLDS = frozenset({"co", "com", "net", "org", "gov", "edu", "ac", "or", "ne", "go", "gob"})


def registrable_domain(host: str) -> str | None:
    labels = [label for label in host.lower().strip(".").split(".") if label]
    if len(labels) < 2:
        return None
    if len(labels) >= 3 and len(labels[-1]) == 2 and labels[-2] in _GENERIC_SLDS:
        return ".".join(labels[-3:])
    return ".".join(labels[-2:])


def _host(website: str) -> str | None:
    text = website.strip()
    if "://" not in text:
        text = "http://" + text
    try:
        host = urlsplit(text).hostname
    except ValueError:
        return None
    if not host or " " in host:
        return None
    return host


def check_naming_convention(package_name: str, developer_website: str | None) -> NamingVerdict:
    """Compare a package name with the reversed registrable domain of a website."""
    if developer_website is None or not developer_website.strip():
        return NamingVerdict(NamingConvention.NO_WEBSITE)
    host = _host(developer_website)
    domain = registrable_domain(host) if host else None
    if domain is None:
        return NamingVerdict(NamingConvention.NO_MATCH, unparseable_url=True)
    reversed_labels = domain.split(".")[::-1]
    package_labels = package_name.lower().split(".")
    if package_labels[: len(reversed_labels)] == reversed_labels:
        return NamingVerdict(NamingConvention.MATCH)
    if reversed_labels[-1] in package_labels:
        return NamingVerdict(NamingConvention.PARTIAL_MATCH)
    return NamingVerdict(NamingConvention.NO_MATCH)
