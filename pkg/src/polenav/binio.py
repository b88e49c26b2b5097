"""Little-endian binary helpers shared by the index and lookup-table formats."""

import struct

from .errors import FormatError, MagicMismatchError, TruncatedFileError, UnsupportedVersionError


class Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    @property
    def remaining(self):
        return len(self.data) - self.pos

    def take(self, n, what="record"):
        if n > self.remaining:
            raise TruncatedFileError(n, self.remaining, what)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what="record"):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size, what))

    def u32(self, what="u32"):
        return self.unpack("<I", what)[0]

    def header(self, magic: bytes, versions):
        found = bytes(self.take(len(magic), "magic"))
        if found != magic:
            raise MagicMismatchError(magic, found)
        (version,) = self.unpack("<H", "version")
        if version not in versions:
            raise UnsupportedVersionError(version, sorted(versions))
        return version

    def expect_end(self):
        if self.remaining:
            raise FormatError(f"{self.remaining} trailing bytes after payload")
