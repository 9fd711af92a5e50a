"""APK parsing: manifest signals and signing certificates."""

from .axml import BinaryXmlError, ManifestInfo, parse_manifest_package_and_label, parse_resource_table
from .certs import (
    CertificateError,
    CertificateInfo,
    RdnSet,
    Scheme,
    is_play_signing_subject,
    parse_certificate,
)
from .extract import (
    ApkError,
    ApkSignals,
    ManifestMissingError,
    ManifestParseError,
    NotAZipError,
    extract_apk,
)
from .naming import (
    NamingConvention,
    NamingVerdict,
    check_naming_convention,
    match_package_scheme,
    register_builder_scheme,
)

__all__ = [
    "ApkError",
    "ApkSignals",
    "BinaryXmlError",
    "CertificateError",
    "CertificateInfo",
    "ManifestInfo",
    "ManifestMissingError",
    "ManifestParseError",
    "NamingConvention",
    "NamingVerdict",
    "NotAZipError",
    "RdnSet",
    "Scheme",
    "check_naming_convention",
    "extract_apk",
    "is_play_signing_subject",
    "match_package_scheme",
    "parse_certificate",
    "parse_manifest_package_and_label",
    "parse_resource_table",
    "register_builder_scheme",
]
