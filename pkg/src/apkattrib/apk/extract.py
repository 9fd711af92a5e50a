from __future__ import annotations

import hashlib
import io
import struct
import zipfile
from dataclasses import dataclass, field

from .axml import BinaryXmlError, parse_manifest_package_and_label
from .certs import CertificateError, CertificateInfo, Scheme, fingerprint, parse_certificate
from .signing import SignerCerts, SigningBlockError, block_signers, v1_signers

MANIFEST_NAME = "AndroidManifest.xml"
RESOURCES_NAME = "resources.arsc"


class ApkError(ValueError):
    kind = "apk-error"


class NotAZipError(ApkError):
    kind = "not-a-zip"


class ManifestMissingError(ApkError):
    kind = "manifest-missing"


class ManifestParseError(ApkError):
    kind = "manifest-unparseable"


@dataclass(frozen=True)
class ApkSignals:
    apk_sha256: str
    package_name: str
    app_name_manifest: str | None
    certificates: tuple[CertificateInfo, ...]
    signer_count: int
    warnings: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "apk_sha256": self.apk_sha256,
            "package_name": self.package_name,
            "app_name_manifest": self.app_name_manifest,
            "certificates": [c.to_dict() for c in self.certificates],
            "signer_count": self.signer_count,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ApkSignals":
        return cls(
            apk_sha256=data["apk_sha256"],
            package_name=data["package_name"],
            app_name_manifest=data.get("app_name_manifest"),
            certificates=tuple(CertificateInfo.from_dict(c) for c in data.get("certificates", ())),
            signer_count=int(data.get("signer_count", 0)),
            warnings=tuple(data.get("warnings", ())),
        )


def _merge_certificates(signers: list[SignerCerts], warnings: set[str]) -> tuple[CertificateInfo, ...]:
    by_fp: dict[str, CertificateInfo] = {}
    for signer in signers:
        # first certificate of a signer is its own; the rest are chain certificates
        ders = signer.certificates[:1] + signer.lineage
        for der in ders:
            try:
                info = parse_certificate(der)
            except CertificateError:
                warnings.add("certificate-unparseable")
                continue
            warnings.update(info.flags)
            fp = info.fingerprint_sha256
            by_fp[fp] = (by_fp.get(fp) or info).with_schemes({signer.scheme})
    return tuple(by_fp[fp] for fp in sorted(by_fp))


def _scheme_fingerprints(signers: list[SignerCerts], scheme: Scheme, lineage: bool = False) -> set[str]:
    fps = set()
    for s in signers:
        if s.scheme is scheme:
            fps.update(fingerprint(d) for d in s.certificates[:1])
            if lineage:
                fps.update(fingerprint(d) for d in s.lineage)
    return fps


def _cross_scheme_mismatch(signers: list[SignerCerts]) -> bool:
    v1 = _scheme_fingerprints(signers, Scheme.V1)
    v2 = _scheme_fingerprints(signers, Scheme.V2)
    v3 = _scheme_fingerprints(signers, Scheme.V3, lineage=True)
    if v1 and v2 and v1 != v2:
        return True
    older = v2 or v1
    # a rotated v3 signer legitimately differs, but its lineage covers the old key
    return bool(v3 and older and not older <= v3)


def extract_apk(data: bytes, resolve_resources: bool = True) -> ApkSignals:
    """Manifest signals and every signer certificate of an APK.

    Unsigned APKs are returned with no certificates and an ``unsigned``
    warning rather than rejected.
    """
    try:
        zf = zipfile.ZipFile(io.BytesIO(data))
    except (zipfile.BadZipFile, OSError, ValueError, struct.error) as exc:
        raise NotAZipError(f"not a ZIP archive: {exc}") from exc
    warnings: set[str] = set()
    with zf:
        names = set(zf.namelist())
        if MANIFEST_NAME not in names:
            raise ManifestMissingError("AndroidManifest.xml not found")
        try:
            manifest = zf.read(MANIFEST_NAME)
            resources = zf.read(RESOURCES_NAME) if resolve_resources and RESOURCES_NAME in names else None
        except (zipfile.BadZipFile, OSError, ValueError, EOFError) as exc:
            raise NotAZipError(f"unreadable ZIP entry: {exc}") from exc
        try:
            info = parse_manifest_package_and_label(manifest, resources)
        except (BinaryXmlError, struct.error, IndexError, UnicodeDecodeError) as exc:
            raise ManifestParseError(f"cannot parse manifest: {exc}") from exc
        if info.label_reason is not None:
            warnings.add(info.label_reason)
        signers = []
        try:
            signers.extend(v1_signers(zf))
        except SigningBlockError:
            warnings.add("v1-signature-unreadable")
    try:
        signers.extend(block_signers(data))
    except (SigningBlockError, struct.error):
        warnings.add("signing-block-unreadable")

    certificates = _merge_certificates(signers, warnings)
    if not certificates:
        warnings.add("unsigned")
    if _cross_scheme_mismatch(signers):
        warnings.add("cross-scheme-mismatch")
    per_scheme = [sum(1 for s in signers if s.scheme is scheme) for scheme in Scheme]
    return ApkSignals(
        apk_sha256=hashlib.sha256(data).hexdigest(),
        package_name=info.package_name,
        app_name_manifest=info.label,
        certificates=certificates,
        signer_count=max(per_scheme),
        warnings=tuple(sorted(warnings)),
    )
