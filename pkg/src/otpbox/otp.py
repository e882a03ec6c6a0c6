"""End-to-end one-time programs for the BRCA1 payload.

A *box* directory emulates the shipped device::

    box/tpm.state        simulated chip (never part of an adversary snapshot)
    box/txt/             TXT-only artifact: sealed vendor records, meta, result
    box/gc/              GC-based artifact: circuit.gc, otm/, keys.txt, result

TXT-only runs the whole test inside the measured-launch session. GC-based only
needs the session for key selection; evaluation happens afterwards, outside.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import otm
from .bits import check_bits, to_signed, twos_complement
from .circuit import parse_circuit
from .errors import ArityMismatch, EmptyVendorInput, InputError
from .garble import GarbledCircuit, KeyFile, WireLabelPair, evl, gen
from .genomics import RESULT_BITS, SnpRecord
from .teesim import SealedBlob, TeeSession, TpmState, measured_launch

# program images measured at launch; both modes share the image, the mode PCR tells them apart
TXT_PAYLOAD = b"otpbox payload: BRCA1 risk test, TXT-only, v1"
GC_SELECT_PAYLOAD = b"otpbox payload: OTM key selection, v1"

TXT_FAULT_POINTS = ("flag-written", "record", "result-ready")

PROVISION = otm.PROVISION
EXECUTE = otm.EXECUTE


class Box:
    def __init__(self, root):
        self.root = Path(root)

    @property
    def tpm_path(self) -> Path:
        return self.root / "tpm.state"

    @property
    def txt_dir(self) -> Path:
        return self.root / "txt"

    @property
    def gc_dir(self) -> Path:
        return self.root / "gc"

    @property
    def gc_file(self) -> Path:
        return self.gc_dir / "circuit.gc"

    @property
    def pairs_plain(self) -> Path:
        return self.gc_dir / "pairs.plain"

    @property
    def keys_file(self) -> Path:
        return self.gc_dir / "keys.txt"

    @property
    def otm_dir(self) -> Path:
        return self.gc_dir / "otm"

    def state(self) -> TpmState:
        return TpmState.open(self.tpm_path)

    def launch(self, state: TpmState, payload: bytes, mode: str) -> TeeSession:
        return measured_launch(state, payload, mode=mode)


@dataclass(frozen=True)
class OtpResult:
    output_bits: str
    decoded: int
    exposure: Optional[int] = None

    @classmethod
    def from_bits(cls, bits: str, exposure=None) -> "OtpResult":
        return cls(bits, twos_complement(bits), exposure)

    @classmethod
    def from_total(cls, total: int, exposure=None) -> "OtpResult":
        bits = format(total & ((1 << RESULT_BITS) - 1), f"0{RESULT_BITS}b")
        return cls.from_bits(bits, exposure)

    def to_text(self) -> str:
        return (f"risk_deci {self.decoded}\n"
                f"risk {self.decoded / 10:.1f}\n"
                f"bits {self.output_bits}\n")

    def write(self, path):
        otm._atomic_write(Path(path), self.to_text().encode())


# -- TXT-only -------------------------------------------------------------------------

@dataclass
class TxtOnlyImage:
    sealed_vendor_records: list
    flag_nv_index: int
    payload_digest: bytes
    directory: Path

    def save(self):
        self.directory.mkdir(parents=True, exist_ok=True)
        blobs = b"".join(b.to_bytes() for b in self.sealed_vendor_records)
        otm._atomic_write(self.directory / "vendor.sealed", blobs)
        meta = {"flag_nv_index": self.flag_nv_index,
                "payload_digest": self.payload_digest.hex(),
                "records": len(self.sealed_vendor_records)}
        otm._atomic_write(self.directory / "meta", json.dumps(meta, indent=1).encode())

    @classmethod
    def load(cls, directory) -> "TxtOnlyImage":
        directory = Path(directory)
        try:
            meta = json.loads((directory / "meta").read_text())
            raw = (directory / "vendor.sealed").read_bytes()
        except FileNotFoundError:
            raise InputError(f"no TXT-only image under {directory}") from None
        blobs, pos = [], 0
        while pos < len(raw):
            blob, pos = SealedBlob.read_from(raw, pos)
            blobs.append(blob)
        if len(blobs) != meta["records"]:
            raise InputError(f"{directory}: expected {meta['records']} sealed records, "
                             f"found {len(blobs)}")
        return cls(blobs, meta["flag_nv_index"], bytes.fromhex(meta["payload_digest"]),
                   directory)


def txt_provision(session: TeeSession, vendor_records, directory,
                  reprovision: bool = False) -> TxtOnlyImage:
    """Initialise the flag and seal each vendor record on its own."""
    session.require_live(PROVISION)
    vendor_records = list(vendor_records)
    if not vendor_records:
        raise EmptyVendorInput("at least one vendor record is required")
    state = session.state
    directory = Path(directory)

    flag_index = None
    if (directory / "meta").exists():
        flag_index = json.loads((directory / "meta").read_text())["flag_nv_index"]
    if flag_index is None:
        flag_index = state.allocate_nv_index()
    otm.init_flag(state, flag_index, reprovision)

    policy = otm.execution_policy(state)
    blobs = []
    for r in vendor_records:
        if r.risk_deci is None:
            raise InputError("vendor records need a risk factor")
        blobs.append(state.seal(r.vendor_hex().encode("ascii"), policy))
    image = TxtOnlyImage(blobs, flag_index, session.program_digest, directory)
    image.save()
    return image


def _client_keys(client_records) -> np.ndarray:
    return np.fromiter(((r.snp_id << 4) | r.allele_code for r in client_records),
                       dtype=np.uint32)


def txt_execute(session: TeeSession, image: TxtOnlyImage, client_records,
                result_path=None) -> OtpResult:
    """Run the risk test once: flag flip first, then one vendor record in RAM at a time."""
    session.require_live(EXECUTE)
    state = session.state
    client = _client_keys(client_records)

    otm.consume_flag(state, image.flag_nv_index)
    total = 0
    resident = peak = 0
    for blob in image.sealed_vendor_records:
        plain = bytearray(state.unseal(blob))
        resident += 1
        peak = max(peak, resident)
        text = plain.decode("ascii")
        rec = SnpRecord(int(text[:7], 16), int(text[7], 16), to_signed(int(text[8:], 16), 8))
        key = (rec.snp_id << 4) | rec.allele_code
        # every client record is compared; non-matches contribute zero
        hits = int(np.count_nonzero(client == key))
        total = (total + hits * rec.risk_deci) & 0xFFFF
        plain[:] = bytes(len(plain))
        del text, rec
        resident -= 1
        state.checkpoint("record")
    state.checkpoint("result-ready")
    result = OtpResult.from_total(total, exposure=peak)
    if result_path is not None:
        result.write(result_path)
    return result


# -- GC-based --------------------------------------------------------------------------

def garble_circuit(circuit, vendor_bits: Optional[str] = None, rng=None):
    """``gen`` step; returns (GarbledCircuit, evaluator pairs)."""
    if isinstance(circuit, (str, os.PathLike)):
        with open(circuit) as fh:
            circuit = parse_circuit(fh.read())
    if vendor_bits is not None:
        check_bits(vendor_bits)
    return gen(circuit, vendor_bits, rng)


def write_pairs_plain(path, pairs):
    otm._atomic_write(Path(path), b"".join(p.to_bytes() for p in pairs))


def read_pairs_plain(path) -> list:
    raw = Path(path).read_bytes()
    size = 2 * 17
    if len(raw) % size:
        raise InputError(f"{path}: truncated pair file")
    return [WireLabelPair.from_bytes(raw[i:i + size]) for i in range(0, len(raw), size)]


def gc_provision(session: TeeSession, circuit_src, vendor_bits: Optional[str],
                 client_width: int, mode: str = otm.MASTER_KEY, directory=None,
                 chunk: int = 1, rng=None, reprovision: bool = False):
    """Garble, store the evaluator pairs in the OTM and write the GC file.

    ``circuit_src`` is a :class:`Circuit` or a path to circuit text.
    Returns ``(gc_path, OtmImage)``.
    """
    session.require_live(PROVISION)
    gc, pairs = garble_circuit(circuit_src, vendor_bits, rng)
    if gc.circuit.evl_width != client_width:
        raise ArityMismatch(f"circuit takes {gc.circuit.evl_width} evaluator bits, "
                            f"client width is {client_width}")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    gc_path = directory / "circuit.gc"
    gc.write(gc_path)
    image = otm.provision(session, pairs, mode, directory / "otm", chunk, reprovision)
    del pairs
    return gc_path, image


def provision_from_plain(session: TeeSession, pairs_path, mode=otm.MASTER_KEY,
                         otm_dir=None, chunk=1, reprovision=False) -> otm.OtmImage:
    """Provision pairs written by a separate ``gen`` step, then delete the plain file."""
    pairs = read_pairs_plain(pairs_path)
    image = otm.provision(session, pairs, mode, otm_dir, chunk, reprovision)
    os.remove(pairs_path)
    return image


def gc_select(session: TeeSession, image: otm.OtmImage, client_bits: str,
              keys_path=None) -> KeyFile:
    keys = otm.select(session, image, client_bits)
    if keys_path is not None:
        keys.write(keys_path)
    return keys


def gc_evaluate(gc_file, keys, result_path=None) -> OtpResult:
    """Evaluation step; needs no session and no TPM."""
    gc = gc_file if isinstance(gc_file, GarbledCircuit) else GarbledCircuit.read(gc_file)
    if not isinstance(keys, KeyFile):
        keys = KeyFile.read(keys)
    result = OtpResult.from_bits(evl(gc, keys))
    if result_path is not None:
        result.write(result_path)
    return result


def gc_run(session: TeeSession, gc_file, image: otm.OtmImage, client_bits: str,
           keys_path=None, result_path=None) -> OtpResult:
    """Select inside ``session``, close it, then evaluate outside any session."""
    try:
        keys = gc_select(session, image, client_bits, keys_path)
        exposure = otm.exposure_report()
    finally:
        session.close()
    result = gc_evaluate(gc_file, keys, result_path)
    return OtpResult(result.output_bits, result.decoded, exposure)
