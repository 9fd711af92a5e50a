"""Locate signer certificates in an APK: JAR (v1) and APK Signing Block (v2/v3).

No signature is verified; the goal is the set of identities an APK claims.
"""

from __future__ import annotations

import struct
import zipfile
from dataclasses import dataclass, field

from asn1crypto import cms

from .certs import Scheme

EOCD_MAGIC = b"PK\x05\x06"
EOCD_SIZE = 22
SIGNING_BLOCK_MAGIC = b"APK Sig Block 42"

V2_BLOCK_ID = 0x7109871A
V3_BLOCK_ID = 0xF05368C0
V31_BLOCK_ID = 0x1B93AD61
PROOF_OF_ROTATION_ATTR_ID = 0x3BA06F8C

SCHEME_BLOCKS = {V2_BLOCK_ID: Scheme.V2, V3_BLOCK_ID: Scheme.V3, V31_BLOCK_ID: Scheme.V3}

V1_BLOCK_SUFFIXES = (".RSA", ".DSA", ".EC")


class SigningBlockError(ValueError):
    pass


@dataclass
class SignerCerts:
    """Certificates one signer contributes, end-entity first."""

    scheme: Scheme
    certificates: list[bytes]
    lineage: list[bytes] = field(default_factory=list)


def _split_prefixed(data: bytes, width: int = 4) -> tuple[bytes, bytes]:
    if len(data) < width:
        raise SigningBlockError("truncated length prefix")
    n = int.from_bytes(data[:width], "little")
    if len(data) < width + n:
        raise SigningBlockError(f"length-prefixed field of {n} bytes overruns data")
    return data[width : width + n], data[width + n :]


def _sequence(data: bytes):
    while data:
        item, data = _split_prefixed(data)
        yield item


def find_central_directory(data: bytes) -> int:
    """Offset of the ZIP central directory, from the end-of-central-directory record."""
    start = max(0, len(data) - EOCD_SIZE - 0xFFFF)
    pos = data.rfind(EOCD_MAGIC, start)
    while pos >= 0:
        comment_len = struct.unpack_from("<H", data, pos + 20)[0] if pos + 22 <= len(data) else -1
        if pos + EOCD_SIZE + comment_len == len(data):
            return struct.unpack_from("<I", data, pos + 16)[0]
        pos = data.rfind(EOCD_MAGIC, start, pos)
    raise SigningBlockError("end of central directory not found")


def signing_block_pairs(data: bytes) -> list[tuple[int, bytes]]:
    """ID-value pairs of the APK Signing Block; empty when there is none."""
    cd_offset = find_central_directory(data)
    if cd_offset < 32 or data[cd_offset - 16 : cd_offset] != SIGNING_BLOCK_MAGIC:
        return []
    footer_size = struct.unpack_from("<Q", data, cd_offset - 24)[0]
    block_start = cd_offset - footer_size - 8
    if block_start < 0:
        raise SigningBlockError("APK Signing Block size exceeds file")
    header_size = struct.unpack_from("<Q", data, block_start)[0]
    if header_size != footer_size:
        raise SigningBlockError("APK Signing Block size fields disagree")
    body = data[block_start + 8 : cd_offset - 24]
    pairs = []
    while body:
        if len(body) < 12:
            raise SigningBlockError("truncated ID-value pair")
        pair_len, pair_id = struct.unpack_from("<QI", body)
        if pair_len < 4 or 8 + pair_len > len(body):
            raise SigningBlockError(f"ID-value pair 0x{pair_id:08x} overruns block")
        pairs.append((pair_id, body[12 : 8 + pair_len]))
        body = body[8 + pair_len :]
    return pairs


def parse_lineage(data: bytes) -> list[bytes]:
    """Certificates of a proof-of-rotation struct, oldest first."""
    if len(data) < 4:
        raise SigningBlockError("truncated proof-of-rotation")
    certs = []
    for node in _sequence(data[4:]):
        signed_data, _ = _split_prefixed(node)
        cert, _ = _split_prefixed(signed_data)
        certs.append(cert)
    return certs


def parse_scheme_block(value: bytes, scheme: Scheme) -> list[SignerCerts]:
    signers_data, _ = _split_prefixed(value)
    signers = []
    for signer in _sequence(signers_data):
        signed_data, _ = _split_prefixed(signer)
        _digests, rest = _split_prefixed(signed_data)
        certs_data, rest = _split_prefixed(rest)
        lineage: list[bytes] = []
        if scheme is Scheme.V3:
            rest = rest[8:]  # min/max SDK
            attrs_data, _ = _split_prefixed(rest)
            for attr in _sequence(attrs_data):
                if len(attr) >= 4 and int.from_bytes(attr[:4], "little") == PROOF_OF_ROTATION_ATTR_ID:
                    lineage = parse_lineage(attr[4:])
        signers.append(SignerCerts(scheme, list(_sequence(certs_data)), lineage))
    return signers


def block_signers(data: bytes) -> list[SignerCerts]:
    signers = []
    for pair_id, value in signing_block_pairs(data):
        scheme = SCHEME_BLOCKS.get(pair_id)
        if scheme is not None:
            signers.extend(parse_scheme_block(value, scheme))
    return signers


def v1_signature_files(zf: zipfile.ZipFile) -> list[str]:
    names = []
    for name in zf.namelist():
        head, _, tail = name.rpartition("/")
        if head.upper() == "META-INF" and tail.upper().endswith(V1_BLOCK_SUFFIXES):
            names.append(name)
    return sorted(names)


def pkcs7_signer_certificates(block: bytes) -> list[bytes]:
    """End-entity certificates of a PKCS#7 SignedData signature block.

    Signers are matched to certificates by issuer and serial (or subject key
    identifier); chain certificates that sign nothing are dropped.
    """
    try:
        info = cms.ContentInfo.load(block)
        signed = info["content"]
        certs = [c.chosen for c in signed["certificates"] if c.name == "certificate"]
        chosen = []
        for signer_info in signed["signer_infos"]:
            sid = signer_info["sid"]
            for cert in certs:
                if sid.name == "issuer_and_serial_number":
                    match = (
                        cert.issuer == sid.chosen["issuer"]
                        and cert.serial_number == sid.chosen["serial_number"].native
                    )
                else:
                    match = cert.key_identifier == sid.chosen.native
                if match:
                    chosen.append(cert.dump())
                    break
        if not chosen and certs:
            chosen.append(certs[0].dump())
        return chosen
    except Exception as exc:
        raise SigningBlockError(f"cannot decode PKCS#7 signature block: {exc}") from exc


def v1_signers(zf: zipfile.ZipFile) -> list[SignerCerts]:
    return [
        SignerCerts(Scheme.V1, pkcs7_signer_certificates(zf.read(name)))
        for name in v1_signature_files(zf)
    ]
