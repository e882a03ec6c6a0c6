"""BRCA1 risk test: record encodings, AncestryDNA preprocessing and the
plaintext scoring routine every other execution path is checked against.

Compact inputs are single lines of lowercase hex. A client record is 8 digits
(7 for the SNP reference number, 1 for the allele pair); a vendor record adds
two more digits holding the risk factor as a signed byte of deci-units
(risk x 10), so 1.1 is stored as ``0b``.
"""

from __future__ import annotations

import io
import random
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
from importlib import resources
from typing import Iterable, Optional

from .bits import to_signed
from .errors import (InputError, MalformedRow, NonNumericId, RecordOverflow,
                     RiskOverflow, UnknownAllele)

CLIENT_STRIDE = 8
VENDOR_STRIDE = 10
CLIENT_RECORD_BITS = CLIENT_STRIDE * 4
VENDOR_RECORD_BITS = VENDOR_STRIDE * 4
MAX_SNP_ID = 1 << 28
RISK_SCALE = 10
RESULT_BITS = 16

# Unordered pairs, so AncestryDNA's arbitrary allele order does not matter.
ALLELE_CODES = {
    "AA": 0, "AC": 1, "AG": 2, "AT": 3, "CC": 4,
    "CG": 5, "CT": 6, "GG": 7, "GT": 8, "TT": 9,
}
ALLELE_NAMES = {v: k for k, v in ALLELE_CODES.items()}
NO_CALL = 15
_NO_CALL_SYMBOLS = set("-0DIN")


@dataclass(frozen=True)
class SnpRecord:
    snp_id: int
    allele_code: int
    risk_deci: Optional[int] = None

    def __post_init__(self):
        if not 0 <= self.snp_id < MAX_SNP_ID:
            raise RecordOverflow(f"SNP id {self.snp_id} does not fit in 28 bits")
        if not 0 <= self.allele_code < 16:
            raise RecordOverflow(f"allele code {self.allele_code} does not fit in 4 bits")
        if self.risk_deci is not None and not -128 <= self.risk_deci <= 127:
            raise RiskOverflow(f"risk {self.risk_deci} deci-units outside signed 8 bits")

    @property
    def rsid(self) -> str:
        return f"rs{self.snp_id}"

    @property
    def alleles(self) -> str:
        return ALLELE_NAMES.get(self.allele_code, "--")

    def client_hex(self) -> str:
        return f"{self.snp_id:07x}{self.allele_code:x}"

    def vendor_hex(self) -> str:
        if self.risk_deci is None:
            raise InputError("vendor record needs a risk factor")
        return self.client_hex() + f"{self.risk_deci & 0xFF:02x}"


def allele_code(a1: str, a2: str = "") -> int:
    pair = (a1 + a2).upper()
    if len(pair) != 2:
        raise UnknownAllele(f"allele pair {pair!r} must have two symbols")
    if all(c in _NO_CALL_SYMBOLS for c in pair):
        return NO_CALL
    if any(c not in "ACGT" for c in pair):
        raise UnknownAllele(f"unknown allele pair {pair!r}")
    return ALLELE_CODES["".join(sorted(pair))]


def parse_rsid(rsid: str) -> int:
    rsid = rsid.strip()
    digits = rsid[2:] if rsid.lower().startswith("rs") else rsid
    if not digits.isdigit():
        raise NonNumericId(f"SNP reference {rsid!r} is not numeric")
    snp_id = int(digits)
    if snp_id >= MAX_SNP_ID:
        raise RecordOverflow(f"SNP id {snp_id} does not fit in 7 hex digits")
    return snp_id


def snp_hex(snp_id: int) -> str:
    """Zero-padded 7-digit hex form of a SNP reference number."""
    if not 0 <= snp_id < MAX_SNP_ID:
        raise RecordOverflow(f"SNP id {snp_id} does not fit in 7 hex digits")
    return f"{snp_id:07X}"


def risk_to_deci(risk) -> int:
    try:
        deci = (Decimal(str(risk)) * RISK_SCALE).quantize(Decimal(1), ROUND_HALF_UP)
    except InvalidOperation:
        raise InputError(f"risk factor {risk!r} is not a number") from None
    deci = int(deci)
    if not -128 <= deci <= 127:
        raise RiskOverflow(f"risk {risk} -> {deci} deci-units, outside -128..127")
    return deci


# -- AncestryDNA preprocessing --------------------------------------------------

def iter_ancestry_records(raw) -> Iterable[SnpRecord]:
    """Yield client records from an AncestryDNA export (text or line iterable)."""
    lines = io.StringIO(raw) if isinstance(raw, str) else raw
    seen_header = False
    for lineno, line in enumerate(lines, 1):
        line = line.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t") if "\t" in line else line.split()
        if not seen_header and fields[0].lower() == "rsid":
            seen_header = True
            continue
        if len(fields) != 5:
            raise MalformedRow(f"line {lineno}: expected 5 columns, got {len(fields)}")
        rsid, _chrom, _pos, a1, a2 = fields
        try:
            yield SnpRecord(parse_rsid(rsid), allele_code(a1, a2))
        except (NonNumericId, UnknownAllele, RecordOverflow) as exc:
            raise type(exc)(f"line {lineno}: {exc}") from None


def preprocess_ancestry(raw) -> str:
    return encode_client(iter_ancestry_records(raw))


# -- compact encodings ------------------------------------------------------------

def encode_client(records: Iterable[SnpRecord]) -> str:
    return "".join(r.client_hex() for r in records)


def encode_vendor(rows) -> str:
    """Encode vendor rows: ``SnpRecord``s or ``(rsid, alleles, risk)`` tuples."""
    return "".join(_vendor_record(r).vendor_hex() for r in rows)


def _vendor_record(row) -> SnpRecord:
    if isinstance(row, SnpRecord):
        return row
    rsid, alleles, risk = row
    return SnpRecord(parse_rsid(str(rsid)), allele_code(alleles), risk_to_deci(risk))


def _chunks(compact: str, stride: int):
    compact = compact.strip()
    if len(compact) % stride:
        raise InputError(f"compact input length {len(compact)} not a multiple of {stride}")
    try:
        int(compact or "0", 16)
    except ValueError:
        raise InputError("compact input is not hex") from None
    return [compact[i:i + stride] for i in range(0, len(compact), stride)]


def decode_client(compact: str) -> list:
    return [SnpRecord(int(c[:7], 16), int(c[7], 16)) for c in _chunks(compact, CLIENT_STRIDE)]


def decode_vendor(compact: str) -> list:
    return [SnpRecord(int(c[:7], 16), int(c[7], 16), to_signed(int(c[8:], 16), 8))
            for c in _chunks(compact, VENDOR_STRIDE)]


def read_compact(path) -> str:
    with open(path) as fh:
        text = fh.read()
    if text.count("\n") > 1 or any(c.isspace() for c in text.rstrip("\n")):
        raise InputError(f"{path}: compact input must be a single line without spaces")
    return text.strip().lower()


def write_compact(path, compact: str):
    with open(path, "w") as fh:
        fh.write(compact.lower() + "\n")


# -- shipped vendor table ---------------------------------------------------------

def load_vendor_table(path=None) -> list:
    """Read a ``rsid / position / alleles / risk`` TSV (default: BRCA1 table)."""
    if path is None:
        text = resources.files("otpbox.data").joinpath("brca1.tsv").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    records = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if fields[0] == "rsid":
            continue
        if len(fields) != 4:
            raise MalformedRow(f"line {lineno}: expected 4 columns, got {len(fields)}")
        rsid, _position, alleles, risk = fields
        records.append(_vendor_record((rsid, alleles, risk)))
    return records


def brca1_table() -> list:
    return load_vendor_table()


# -- scoring --------------------------------------------------------------------

def risk_plain(vendor, client) -> int:
    """Total risk in deci-units, visiting every (client, vendor) pair.

    Non-matching pairs contribute an explicit zero; the sum wraps at 16 bits
    exactly as the circuit does.
    """
    rf = 0
    for c in client:
        for v in vendor:
            if c.snp_id == v.snp_id:
                if c.allele_code == v.allele_code:
                    rf = rf + v.risk_deci
                else:
                    rf = rf + 0
            else:
                rf = rf + 0
    return to_signed(rf, RESULT_BITS)


# -- synthetic data ---------------------------------------------------------------

def random_client(n_records: int, rng: random.Random, vendor=None, hit_rate=0.05) -> list:
    """Synthetic client; roughly ``hit_rate`` of records copy a vendor SNP."""
    out = []
    for _ in range(n_records):
        if vendor and rng.random() < hit_rate:
            v = rng.choice(vendor)
            code = v.allele_code if rng.random() < 0.6 else rng.randrange(10)
            out.append(SnpRecord(v.snp_id, code))
        else:
            out.append(SnpRecord(rng.randrange(1, 100_000_000), rng.randrange(10)))
    return out


def padded_vendor(n_records: int, rng: random.Random, base=None) -> list:
    """Vendor table of ``n_records``: the real table, then random filler."""
    base = list(brca1_table() if base is None else base)
    out = base[:n_records]
    while len(out) < n_records:
        out.append(SnpRecord(rng.randrange(1, 100_000_000), rng.randrange(10),
                             rng.randrange(-128, 128)))
    return out


def synthetic_ancestry(n_rows: int, rng: random.Random) -> str:
    """AncestryDNA-shaped text with ``n_rows`` genotype rows."""
    parts = [
        "#AncestryDNA raw data download\n",
        "#This file was generated for testing.\n",
        "rsid\tchromosome\tposition\tallele1\tallele2\n",
    ]
    bases = "ACGT"
    for i in range(n_rows):
        parts.append(f"rs{rng.randrange(1, 100_000_000)}\t{1 + i % 22}\t{1000 + i}\t"
                     f"{rng.choice(bases)}\t{rng.choice(bases)}\n")
    return "".join(parts)
