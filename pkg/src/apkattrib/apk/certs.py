"""X.509 signing certificate parsing: fingerprint and subject/issuer RDNs."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from enum import Enum

from asn1crypto import x509


class CertificateError(ValueError):
    pass


class Scheme(str, Enum):
    V1 = "v1"
    V2 = "v2"
    V3 = "v3"


# asn1crypto attribute type name -> RdnSet field
RDN_TYPES = {
    "common_name": "common_name",
    "organization_name": "organization",
    "organizational_unit_name": "organizational_unit",
    "locality_name": "locality",
    "state_or_province_name": "state",
    "country_name": "country",
}

RDN_FIELDS = tuple(RDN_TYPES.values())


@dataclass(frozen=True)
class RdnSet:
    common_name: str | None = None
    organization: str | None = None
    organizational_unit: str | None = None
    locality: str | None = None
    state: str | None = None
    country: str | None = None

    def to_dict(self) -> dict[str, str | None]:
        return {name: getattr(self, name) for name in RDN_FIELDS}

    @classmethod
    def from_dict(cls, data: dict | None) -> "RdnSet":
        data = data or {}
        return cls(**{name: data.get(name) for name in RDN_FIELDS})


@dataclass(frozen=True)
class CertificateInfo:
    fingerprint_sha256: str
    subject: RdnSet
    issuer: RdnSet
    self_signed: bool
    schemes: frozenset[Scheme] = frozenset()
    flags: frozenset[str] = field(default=frozenset(), compare=False)

    def with_schemes(self, schemes) -> "CertificateInfo":
        return replace(self, schemes=frozenset(self.schemes) | frozenset(schemes))

    def to_dict(self) -> dict:
        return {
            "fingerprint_sha256": self.fingerprint_sha256,
            "subject": self.subject.to_dict(),
            "issuer": self.issuer.to_dict(),
            "self_signed": self.self_signed,
            "schemes": sorted(s.value for s in self.schemes),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CertificateInfo":
        return cls(
            fingerprint_sha256=data["fingerprint_sha256"],
            subject=RdnSet.from_dict(data.get("subject")),
            issuer=RdnSet.from_dict(data.get("issuer")),
            self_signed=bool(data.get("self_signed", False)),
            schemes=frozenset(Scheme(s) for s in data.get("schemes", ())),
        )


def _attribute_text(type_value) -> tuple[str | None, bool]:
    """Decode one attribute value; the flag marks a best-effort fallback."""
    try:
        value = type_value["value"].native
    except Exception:
        raw = type_value["value"].contents or b""
        return raw.decode("latin-1"), True
    if isinstance(value, bytes):
        return value.decode("latin-1"), True
    if value is None:
        return None, False
    return str(value), False


def _rdn_set(name: x509.Name) -> tuple[RdnSet, bool]:
    values: dict[str, str] = {}
    lossy = False
    for rdn in name.chosen:
        for type_value in rdn:
            field_name = RDN_TYPES.get(type_value["type"].native)
            # first occurrence wins for repeated attribute types
            if field_name is None or field_name in values:
                continue
            text, flagged = _attribute_text(type_value)
            lossy |= flagged
            if text is not None and text.strip():
                values[field_name] = text
    return RdnSet(**values), lossy


def fingerprint(der: bytes) -> str:
    return hashlib.sha256(der).hexdigest()


def parse_certificate(der: bytes) -> CertificateInfo:
    """Parse a DER certificate into its fingerprint and naming fields."""
    try:
        cert = x509.Certificate.load(der)
        tbs = cert["tbs_certificate"]
        subject_name = tbs["subject"]
        issuer_name = tbs["issuer"]
        subject_der = subject_name.dump()
        issuer_der = issuer_name.dump()
        subject, lossy_subject = _rdn_set(subject_name)
        issuer, lossy_issuer = _rdn_set(issuer_name)
    except Exception as exc:
        raise CertificateError(f"cannot decode certificate: {exc}") from exc
    flags = frozenset({"transliterated-rdn"}) if (lossy_subject or lossy_issuer) else frozenset()
    return CertificateInfo(
        fingerprint_sha256=fingerprint(der),
        subject=subject,
        issuer=issuer,
        self_signed=subject_der == issuer_der,
        flags=flags,
    )


PLAY_SIGNING_NAME = "google inc."


def is_play_signing_subject(cert: CertificateInfo) -> bool:
    """True for the subject Google Play uses on certificates it signs with."""
    cn = cert.subject.common_name
    if cn is None or cn.strip().casefold() != PLAY_SIGNING_NAME:
        return False
    org = cert.subject.organization
    return org is None or org.strip().casefold() == PLAY_SIGNING_NAME
