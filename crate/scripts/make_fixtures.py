#!/usr/bin/env python3
"""Writes the ACSW golden fixtures under crates/acs/tests/fixtures.

Uses only `struct`, independently of the Rust encoder.
"""
import pathlib
import struct

OUT = pathlib.Path(__file__).resolve().parent.parent / "crates/acs/tests/fixtures"
F32, F64 = 0, 1


def header(name, dtype, shape, offset):
    n = name.encode()
    return (
        struct.pack("<B", len(n)) + n
        + struct.pack("<BB", dtype, len(shape))
        + b"".join(struct.pack("<Q", d) for d in shape)
        + struct.pack("<Q", offset)
    )


def payload(dtype, values):
    fmt = "<f" if dtype == F32 else "<d"
    return b"".join(struct.pack(fmt, v) for v in values)


def pad8(n):
    return (n + 7) // 8 * 8


def build(entries, version=1, magic=b"ACSW", layout=None):
    """entries: (name, dtype, shape, values). layout: explicit offsets
    relative to the data start; default packs in order with 8-byte alignment."""
    sizes = [len(payload(d, v)) for _, d, _, v in entries]
    head_len = 16 + sum(len(header(n, d, s, 0)) for n, d, s, _ in entries)
    start = pad8(head_len)
    if layout is None:
        layout, pos = [], 0
        for sz in sizes:
            layout.append(pos)
            pos = pad8(pos + sz)
    out = bytearray(magic + struct.pack("<I", version) + struct.pack("<Q", len(entries)))
    for (n, d, s, _), off in zip(entries, layout):
        out += header(n, d, s, start + off)
    out += bytes(start - len(out))
    end = max((start + off + sz for off, sz in zip(layout, sizes)), default=start)
    out += bytes(end - len(out))
    for (_, d, _, v), off in zip(entries, layout):
        p = payload(d, v)
        out[start + off:start + off + len(p)] = p
    return bytes(out)


def patch_offset(data, at, offset):
    """Points the offset field at byte `at` to an absolute `offset`."""
    return data[:at] + struct.pack("<Q", offset) + data[at + 8:]


SCALAR = [("w", F32, [], [1.5])]
MIXED = [
    ("conv.weight", F32, [2, 3], [-1.0, -0.5, 0.0, 0.5, 1.0, 1.5]),
    ("bn.running_mean", F64, [3], [1.0, -2.5, 1e-300]),
    ("step", F64, [], [42.0]),
]


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    files = {
        "empty.acsw": build([]),
        "scalar.acsw": build(SCALAR),
        "mixed.acsw": build(MIXED),
        # Valid but not packed: reversed order with a gap.
        "gapped.acsw": build(MIXED, layout=[48, 16, 0]),
        "bad_magic.acsw": build(SCALAR, magic=b"ACSX"),
        "bad_version.acsw": build(SCALAR, version=2),
        "truncated.acsw": build(MIXED)[:-4],
        "trailing.acsw": build(SCALAR) + bytes(8),
        "overlap.acsw": build(MIXED, layout=[0, 16, 32]),
        "out_of_bounds.acsw": patch_offset(build(SCALAR), 20, 8),
        "misaligned.acsw": build(SCALAR, layout=[4]),
        "duplicate.acsw": build([("a", F32, [1], [1.0]), ("a", F32, [1], [2.0])]),
    }
    for name, data in files.items():
        (OUT / name).write_bytes(data)


if __name__ == "__main__":
    main()
