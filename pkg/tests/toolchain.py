"""Independent view of a fixture APK from external verifiers.

v1 signatures are checked and their certificates read with the ``openssl``
CLI; v2/v3 blocks are parsed and verified with ``apksigtool``. Fingerprints
come from ``openssl x509 -fingerprint``. Package names and labels come from
the generator's declarations, and proof-of-rotation certificates from the
declared lineage, since neither tool decodes those.

``python3 tests/toolchain.py`` refreezes ``fixtures/apks/expected.json``.
"""

from __future__ import annotations

import json
import shutil
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE))

import fixturegen  # noqa: E402

EXPECTED = fixturegen.APKS / "expected.json"


def available() -> bool:
    if shutil.which("openssl") is None:
        return False
    try:
        import apksigtool  # noqa: F401
    except ImportError:
        return False
    return True


def _openssl(*args: str, data: bytes | None = None) -> subprocess.CompletedProcess:
    return subprocess.run(["openssl", *args], input=data, capture_output=True, check=False)


def openssl_fingerprint(der: bytes) -> str:
    out = _openssl("x509", "-inform", "DER", "-noout", "-fingerprint", "-sha256", data=der)
    out.check_returncode()
    return out.stdout.decode().strip().split("=", 1)[1].replace(":", "").lower()


def _v1_certs(path: Path) -> list[bytes]:
    certs = []
    with zipfile.ZipFile(path) as zf, tempfile.TemporaryDirectory() as tmp:
        for name in zf.namelist():
            if not (name.startswith("META-INF/") and name.endswith(".RSA")):
                continue
            rsa = Path(tmp, "sig.rsa")
            sf = Path(tmp, "sig.sf")
            rsa.write_bytes(zf.read(name))
            sf.write_bytes(zf.read(name[:-4] + ".SF"))
            ok = _openssl(
                "cms", "-verify", "-noverify", "-binary", "-inform", "DER",
                "-in", str(rsa), "-content", str(sf), "-out", "/dev/null",
            )
            if ok.returncode != 0:
                continue
            pem = _openssl("pkcs7", "-inform", "DER", "-in", str(rsa), "-print_certs").stdout
            der = _openssl("x509", "-outform", "DER", data=pem).stdout
            certs.append(der)
    return certs


def _block_certs(path: Path) -> dict[str, list[bytes]]:
    import apksigtool
    from apksigcopier import extract_v2_sig

    out: dict[str, list[bytes]] = {}
    try:
        _, block = extract_v2_sig(str(path))
    except Exception:
        return out
    for pair in apksigtool.parse_apk_signing_block(block, str(path)).pairs:
        b = pair.value
        if not isinstance(b, apksigtool.APKSignatureSchemeBlock):
            continue
        verify = apksigtool.verify_apk_signature_scheme_v2 if b.is_v2() else apksigtool.verify_apk_signature_scheme_v3
        verify(b.signers, str(path))
        out[f"v{b.version}"] = [s.signed_data.certificates[0].data for s in b.signers]
    return out


def toolchain_view(path: Path, spec: fixturegen.ApkSpec) -> dict:
    schemes: dict[str, set[str]] = {}
    for der in _v1_certs(path):
        schemes.setdefault(openssl_fingerprint(der), set()).add("v1")
    for scheme, certs in _block_certs(path).items():
        for der in certs:
            schemes.setdefault(openssl_fingerprint(der), set()).add(scheme)
    if spec.lineage:
        keys = fixturegen.all_keys()
        for name in spec.lineage:
            schemes.setdefault(openssl_fingerprint(keys[name].cert_der), set()).add("v3")
    return {
        "package_name": spec.package,
        "app_name_manifest": spec.expected_label,
        "certificates": {fp: sorted(s) for fp, s in sorted(schemes.items())},
    }


def all_views() -> dict:
    return {
        spec.name: toolchain_view(fixturegen.APKS / f"{spec.name}.apk", spec) for spec in fixturegen.FIXTURE_SPECS
    }


if __name__ == "__main__":
    EXPECTED.write_text(json.dumps(all_views(), indent=1, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
