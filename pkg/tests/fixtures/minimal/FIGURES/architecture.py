#!/usr/bin/env python3
"""Render the component-layer figure as a small self-contained PDF."""


def build_pdf() -> bytes:
    content = (
        b"0.28 0.47 0.66 rg\n"
        b"20 78 260 24 re f\n"
        b"0.42 0.62 0.78 rg\n"
        b"20 48 260 24 re f\n"
        b"0.62 0.78 0.88 rg\n"
        b"20 18 260 24 re f\n"
        b"0 0 0 rg\n"
        b"BT /F1 10 Tf 28 86 Td (parsers) Tj ET\n"
        b"BT /F1 10 Tf 28 56 Td (converters) Tj ET\n"
        b"BT /F1 10 Tf 28 26 Td (compilers) Tj ET\n"
    )
    objects = [
        b"<< /Type /Catalog /Pages 2 0 R >>",
        b"<< /Type /Pages /Kids [3 0 R] /Count 1 >>",
        b"<< /Type /Page /Parent 2 0 R /MediaBox [0 0 300 120] "
        b"/Resources << /Font << /F1 4 0 R >> >> /Contents 5 0 R >>",
        b"<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica >>",
        b"<< /Length %d >>\nstream\n%s\nendstream" % (len(content), content),
    ]
    out = bytearray(b"%PDF-1.4\n")
    offsets = []
    for number, obj in enumerate(objects, start=1):
        offsets.append(len(out))
        out += b"%d 0 obj\n%s\nendobj\n" % (number, obj)
    xref_at = len(out)
    out += b"xref\n0 %d\n0000000000 65535 f \n" % (len(objects) + 1)
    for offset in offsets:
        out += b"%010d 00000 n \n" % offset
    out += b"trailer\n<< /Size %d /Root 1 0 R >>\nstartxref\n%d\n%%%%EOF\n" % (
        len(objects) + 1,
        xref_at,
    )
    return bytes(out)


if __name__ == "__main__":
    with open("architecture.pdf", "wb") as handle:
        handle.write(build_pdf())
