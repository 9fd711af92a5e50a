"""Android binary XML (compiled AndroidManifest.xml) and resources.arsc reader.

Only what attribution needs is decoded: the manifest's ``package`` attribute,
the ``<application android:label>`` value, and default-configuration string
resources for resolving a label reference.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

RES_STRING_POOL_TYPE = 0x0001
RES_TABLE_TYPE = 0x0002
RES_XML_TYPE = 0x0003
RES_XML_START_NAMESPACE_TYPE = 0x0100
RES_XML_END_NAMESPACE_TYPE = 0x0101
RES_XML_START_ELEMENT_TYPE = 0x0102
RES_XML_END_ELEMENT_TYPE = 0x0103
RES_XML_CDATA_TYPE = 0x0104
RES_XML_RESOURCE_MAP_TYPE = 0x0180
RES_TABLE_PACKAGE_TYPE = 0x0200
RES_TABLE_TYPE_TYPE = 0x0201
RES_TABLE_TYPE_SPEC_TYPE = 0x0202

UTF8_FLAG = 0x100

TYPE_NULL = 0x00
TYPE_REFERENCE = 0x01
TYPE_STRING = 0x03

NO_INDEX = 0xFFFFFFFF

ANDROID_NS = "http://schemas.android.com/apk/res/android"
ATTR_LABEL = 0x01010001

FLAG_COMPLEX = 0x0001
FLAG_COMPACT = 0x0008
TYPE_FLAG_SPARSE = 0x01
TYPE_FLAG_OFFSET16 = 0x02


class BinaryXmlError(ValueError):
    pass


def _u16(buf: bytes, off: int) -> int:
    if off + 2 > len(buf):
        raise BinaryXmlError(f"truncated data at offset {off}")
    return struct.unpack_from("<H", buf, off)[0]


def _u32(buf: bytes, off: int) -> int:
    if off + 4 > len(buf):
        raise BinaryXmlError(f"truncated data at offset {off}")
    return struct.unpack_from("<I", buf, off)[0]


def _chunk_header(buf: bytes, off: int) -> tuple[int, int, int]:
    ctype, header_size = struct.unpack_from("<HH", buf, off) if off + 8 <= len(buf) else (None, None)
    if ctype is None:
        raise BinaryXmlError(f"truncated chunk header at offset {off}")
    size = _u32(buf, off + 4)
    if header_size < 8 or size < header_size or off + size > len(buf):
        raise BinaryXmlError(
            f"malformed chunk 0x{ctype:04x} at offset {off} (header {header_size}, size {size})"
        )
    return ctype, header_size, size


class StringPool:
    """Decoded ResStringPool; indexes outside the pool raise."""

    def __init__(self, buf: bytes, off: int):
        ctype, header_size, size = _chunk_header(buf, off)
        if ctype != RES_STRING_POOL_TYPE:
            raise BinaryXmlError(f"expected string pool at {off}, found 0x{ctype:04x}")
        count = _u32(buf, off + 8)
        flags = _u32(buf, off + 16)
        strings_start = _u32(buf, off + 20)
        self._buf = buf
        self._utf8 = bool(flags & UTF8_FLAG)
        self._base = off + strings_start
        self._end = off + size
        offsets_at = off + header_size
        if offsets_at + 4 * count > self._end:
            raise BinaryXmlError("string pool offset table overruns chunk")
        self._offsets = struct.unpack_from(f"<{count}I", buf, offsets_at)
        self._cache: dict[int, str] = {}

    def __len__(self) -> int:
        return len(self._offsets)

    def __getitem__(self, index: int) -> str:
        if not 0 <= index < len(self._offsets):
            raise BinaryXmlError(f"string pool index {index} out of range ({len(self._offsets)})")
        if index not in self._cache:
            self._cache[index] = self._decode(self._base + self._offsets[index])
        return self._cache[index]

    def get(self, index: int) -> str | None:
        return None if index == NO_INDEX else self[index]

    def _decode(self, pos: int) -> str:
        buf = self._buf
        if pos >= self._end:
            raise BinaryXmlError(f"string offset {pos} outside pool")
        if self._utf8:
            # utf-16 length first (skipped), then utf-8 byte length
            _, pos = self._varlen8(pos)
            nbytes, pos = self._varlen8(pos)
            raw = buf[pos : pos + nbytes]
            return raw.decode("utf-8", errors="replace")
        nchars, pos = self._varlen16(pos)
        raw = buf[pos : pos + 2 * nchars]
        return raw.decode("utf-16-le", errors="replace")

    def _varlen8(self, pos: int) -> tuple[int, int]:
        first = self._buf[pos]
        if first & 0x80:
            return ((first & 0x7F) << 8) | self._buf[pos + 1], pos + 2
        return first, pos + 1

    def _varlen16(self, pos: int) -> tuple[int, int]:
        first = _u16(self._buf, pos)
        if first & 0x8000:
            return ((first & 0x7FFF) << 16) | _u16(self._buf, pos + 2), pos + 4
        return first, pos + 2


@dataclass(frozen=True)
class TypedValue:
    data_type: int
    data: int


@dataclass(frozen=True)
class Attribute:
    namespace: str | None
    name: str
    resource_id: int | None
    raw: str | None
    value: TypedValue


@dataclass(frozen=True)
class Element:
    name: str
    depth: int
    attributes: tuple[Attribute, ...]

    def attribute(self, name: str, resource_id: int | None = None) -> Attribute | None:
        # obfuscated manifests blank out attribute names; match the id first
        if resource_id is not None:
            for attr in self.attributes:
                if attr.resource_id == resource_id:
                    return attr
        for attr in self.attributes:
            if attr.name == name and attr.namespace in (None, "", ANDROID_NS):
                return attr
        return None


def iter_elements(data: bytes):
    """Yield start elements of a binary XML document in document order."""
    ctype, header_size, size = _chunk_header(data, 0)
    if ctype != RES_XML_TYPE:
        raise BinaryXmlError(f"not an Android binary XML document (type 0x{ctype:04x})")
    pool: StringPool | None = None
    resource_ids: tuple[int, ...] = ()
    depth = 0
    off = header_size
    while off < size:
        ctype, chunk_header, chunk_size = _chunk_header(data, off)
        if ctype == RES_STRING_POOL_TYPE:
            pool = StringPool(data, off)
        elif ctype == RES_XML_RESOURCE_MAP_TYPE:
            n = (chunk_size - chunk_header) // 4
            resource_ids = struct.unpack_from(f"<{n}I", data, off + chunk_header)
        elif ctype == RES_XML_START_ELEMENT_TYPE:
            if pool is None:
                raise BinaryXmlError("element before string pool")
            yield _start_element(data, off, chunk_header, pool, resource_ids, depth)
            depth += 1
        elif ctype == RES_XML_END_ELEMENT_TYPE:
            depth -= 1
        off += chunk_size


def _start_element(data, off, header_size, pool, resource_ids, depth) -> Element:
    ext = off + header_size
    name_idx = _u32(data, ext + 4)
    attr_start, attr_size, attr_count = struct.unpack_from("<HHH", data, ext + 8)
    if attr_size < 20:
        raise BinaryXmlError(f"attribute record too small ({attr_size})")
    attrs = []
    base = ext + attr_start
    for i in range(attr_count):
        a = base + i * attr_size
        if a + 20 > len(data):
            raise BinaryXmlError("attribute overruns document")
        ns_idx, attr_name_idx, raw_idx = struct.unpack_from("<III", data, a)
        _, _, data_type, value = struct.unpack_from("<HBBI", data, a + 12)
        res_id = resource_ids[attr_name_idx] if attr_name_idx < len(resource_ids) else None
        attrs.append(
            Attribute(
                namespace=pool.get(ns_idx),
                name=pool.get(attr_name_idx) or "",
                resource_id=res_id,
                raw=pool.get(raw_idx),
                value=TypedValue(data_type, value),
            )
        )
    return Element(pool[name_idx], depth, tuple(attrs))


@dataclass(frozen=True)
class ResourceTable:
    """Default-configuration values of a compiled resource table."""

    strings: StringPool
    # resource id -> (data_type, data)
    values: dict[int, TypedValue]

    def resolve_string(self, resource_id: int, max_hops: int = 8) -> str | None:
        for _ in range(max_hops):
            value = self.values.get(resource_id)
            if value is None:
                return None
            if value.data_type == TYPE_STRING:
                return self.strings[value.data]
            if value.data_type != TYPE_REFERENCE:
                return None
            resource_id = value.data
        return None


def parse_resource_table(data: bytes) -> ResourceTable:
    try:
        return _parse_resource_table(data)
    except (struct.error, IndexError, UnicodeDecodeError) as exc:
        raise BinaryXmlError(f"malformed resource table: {exc}") from exc


def _parse_resource_table(data: bytes) -> ResourceTable:
    ctype, header_size, size = _chunk_header(data, 0)
    if ctype != RES_TABLE_TYPE:
        raise BinaryXmlError(f"not a resource table (type 0x{ctype:04x})")
    strings: StringPool | None = None
    values: dict[int, TypedValue] = {}
    off = header_size
    while off < size:
        ctype, _, chunk_size = _chunk_header(data, off)
        if ctype == RES_STRING_POOL_TYPE and strings is None:
            strings = StringPool(data, off)
        elif ctype == RES_TABLE_PACKAGE_TYPE:
            _read_package(data, off, values)
        off += chunk_size
    if strings is None:
        raise BinaryXmlError("resource table has no global string pool")
    return ResourceTable(strings, values)


def _read_package(data: bytes, off: int, values: dict[int, TypedValue]) -> None:
    _, header_size, size = _chunk_header(data, off)
    package_id = _u32(data, off + 8)
    pos = off + header_size
    end = off + size
    while pos < end:
        ctype, chunk_header, chunk_size = _chunk_header(data, pos)
        if ctype == RES_TABLE_TYPE_TYPE:
            _read_type(data, pos, chunk_header, package_id, values)
        pos += chunk_size


def _read_type(data, off, header_size, package_id, values) -> None:
    type_id = data[off + 8]
    flags = data[off + 9]
    entry_count = _u32(data, off + 12)
    entries_start = _u32(data, off + 16)
    config_size = _u32(data, off + 20)
    config = data[off + 24 : off + 20 + config_size]
    if any(config):
        return  # locale/density-qualified configuration
    table = off + header_size
    if flags & TYPE_FLAG_SPARSE:
        slots = []
        for i in range(entry_count):
            idx, half = struct.unpack_from("<HH", data, table + 4 * i)
            slots.append((idx, half * 4))
    elif flags & TYPE_FLAG_OFFSET16:
        slots = [
            (i, _u16(data, table + 2 * i) * 4)
            for i in range(entry_count)
            if _u16(data, table + 2 * i) != 0xFFFF
        ]
    else:
        slots = [
            (i, _u32(data, table + 4 * i))
            for i in range(entry_count)
            if _u32(data, table + 4 * i) != NO_INDEX
        ]
    for index, rel in slots:
        entry = off + entries_start + rel
        entry_size, entry_flags = struct.unpack_from("<HH", data, entry)
        if entry_flags & FLAG_COMPLEX:
            continue
        if entry_flags & FLAG_COMPACT:
            data_type, value = entry_flags >> 8, _u32(data, entry + 4)
        else:
            _, _, data_type, value = struct.unpack_from("<HBBI", data, entry + entry_size)
        res_id = (package_id << 24) | (type_id << 16) | index
        values.setdefault(res_id, TypedValue(data_type, value))


@dataclass(frozen=True)
class ManifestInfo:
    package_name: str
    label: str | None
    label_reason: str | None = None


def parse_manifest_package_and_label(
    manifest: bytes, resources: bytes | ResourceTable | None = None
) -> ManifestInfo:
    """Read the package name and application label from a binary manifest.

    A label given as a resource reference is resolved through ``resources``
    (default configuration only); without a table it stays unresolved.
    """
    try:
        return _manifest_package_and_label(manifest, resources)
    except (struct.error, IndexError, UnicodeDecodeError) as exc:
        raise BinaryXmlError(f"malformed binary XML: {exc}") from exc


def _manifest_package_and_label(manifest: bytes, resources) -> ManifestInfo:
    package = None
    label = None
    reason = "no-label"
    for element in iter_elements(manifest):
        if element.depth == 0:
            if element.name != "manifest":
                raise BinaryXmlError(f"root element is <{element.name}>, expected <manifest>")
            attr = element.attribute("package")
            if attr is not None:
                package = attr.raw if attr.raw is not None else None
        elif element.depth == 1 and element.name == "application":
            attr = element.attribute("label", ATTR_LABEL)
            if attr is None:
                break
            label, reason = _label_value(attr, resources)
            break
    if not package:
        raise BinaryXmlError("manifest has no package attribute")
    return ManifestInfo(package, label, None if label is not None else reason)


def _label_value(attr: Attribute, resources) -> tuple[str | None, str | None]:
    value = attr.value
    if value.data_type == TYPE_REFERENCE:
        if resources is None:
            return None, "unresolved-resource"
        table = resources if isinstance(resources, ResourceTable) else parse_resource_table(resources)
        text = table.resolve_string(value.data)
        return (text, None) if text is not None else (None, "unresolved-resource")
    if attr.raw is not None:
        return attr.raw, None
    return None, "no-label"
