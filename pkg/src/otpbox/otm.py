"""One-time memory on top of the simulated TPM.

Provisioning stores the evaluator label pairs on the "hard drive" in one of
two protections:

``master-key``
    Every label is AES-GCM encrypted under a fresh 32-byte master key (MK).
    Only MK is sealed, and the sealed MK lives in a PCR-gated NVRAM index, so
    provisioning costs two TPM operations whatever the input width.
``seal-all``
    Each pair is sealed on its own and unsealed in chunks during selection,
    bounding how much pair plaintext is ever resident at once.

Selection flips the one-time flag (also PCR-gated NVRAM) *before* releasing a
single label. A crash after the flip therefore burns the box; that is the
intended failure mode.
"""

from __future__ import annotations

import json
import os
import secrets
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .bits import check_bits
from .errors import (ArityMismatch, AuthFailure, DecryptionFailure, FlagAlreadyDefined,
                     InputError, OneTimeViolation, PolicyMismatch)
from .garble import LABEL_SIZE, KeyFile, WireLabelPair
from .teesim import (LAUNCH_PCR, MODE_PCR, ZERO_DIGEST, SealedBlob, TeeSession,
                     extend_digest, mode_measurement)

MASTER_KEY = "master-key"
SEAL_ALL = "seal-all"
MODES = (MASTER_KEY, SEAL_ALL)

PROVISION = "provision"
EXECUTE = "execute"

MK_SIZE = 32
NONCE_SIZE = 12
FRAME_SIZE = NONCE_SIZE + LABEL_SIZE + 16
FLAG_UNUSED, FLAG_CONSUMED = 0, 1

# names passed to TpmState.checkpoint during select, in order
FAULT_POINTS = ("flag-written", "secret-unsealed", "chunk", "keys-ready")

_exposure = {"watermark": 0}


@dataclass
class OtmImage:
    mode: str
    evaluator_width: int
    flag_nv_index: int
    mk_nv_index: Optional[int]
    chunk: int
    directory: Path

    @property
    def pairs_path(self) -> Path:
        return self.directory / "pairs.bin"

    @property
    def meta_path(self) -> Path:
        return self.directory / "meta"

    def save(self):
        self.directory.mkdir(parents=True, exist_ok=True)
        meta = asdict(self)
        meta["directory"] = None
        _atomic_write(self.meta_path, json.dumps(meta, indent=1).encode())

    @classmethod
    def load(cls, directory) -> "OtmImage":
        directory = Path(directory)
        try:
            meta = json.loads((directory / "meta").read_text())
        except FileNotFoundError:
            raise InputError(f"no one-time memory image under {directory}") from None
        meta["directory"] = directory
        return cls(**meta)


def execution_policy(state) -> list:
    """Seal policy: this payload (current launch PCR) running in execute mode."""
    return [(LAUNCH_PCR, state.pcrs[LAUNCH_PCR]),
            (MODE_PCR, extend_digest(ZERO_DIGEST, mode_measurement(EXECUTE)))]


def payload_policy(state) -> list:
    """NVRAM policy: this payload, either mode."""
    return state.policy_for(LAUNCH_PCR)


def init_flag(state, index_id, reprovision=False):
    """Define the one-time flag index (contents start at 0)."""
    if state.nv_is_defined(index_id):
        if not reprovision:
            raise FlagAlreadyDefined(f"flag index {index_id:#x} exists; re-provision explicitly")
        state.nv_undefine(index_id)
    state.nv_define(index_id, 1, payload_policy(state))


def consume_flag(state, index_id):
    """Check-and-flip; the flip is durable before this returns."""
    flag = state.nv_read(index_id)
    if flag != bytes([FLAG_UNUSED]):
        raise OneTimeViolation("this one-time program has already been used")
    state.nv_write(index_id, bytes([FLAG_CONSUMED]))
    state.checkpoint("flag-written")


def provision(session: TeeSession, pairs: list, mode: str = MASTER_KEY,
              directory=None, chunk: int = 1, reprovision: bool = False) -> OtmImage:
    """Store ``pairs`` in a fresh one-time memory under ``directory``.

    ``pairs`` is emptied in place once stored.
    """
    session.require_live(PROVISION)
    if mode not in MODES:
        raise InputError(f"unknown OTM mode {mode!r}")
    if not pairs:
        raise InputError("nothing to provision")
    if chunk < 1:
        raise InputError("chunk must be >= 1")
    state = session.state
    directory = Path(directory)

    old = None
    if (directory / "meta").exists():
        old = OtmImage.load(directory)
    if old is not None:
        flag_index = old.flag_nv_index
        mk_index = old.mk_nv_index
    else:
        flag_index = state.allocate_nv_index()
        mk_index = None
    if state.nv_is_defined(flag_index) and not reprovision:
        raise FlagAlreadyDefined(f"flag index {flag_index:#x} exists; re-provision explicitly")

    init_flag(state, flag_index, reprovision)
    if mk_index is not None and state.nv_is_defined(mk_index):
        state.nv_undefine(mk_index)
    secret_policy = execution_policy(state)

    frames = bytearray()
    if mode == MASTER_KEY:
        mk = bytearray(secrets.token_bytes(MK_SIZE))
        try:
            blob = state.seal(bytes(mk), secret_policy).to_bytes()
            if mk_index is None:
                mk_index = state.allocate_nv_index(flag_index + 1)
            state.nv_define(mk_index, len(blob), payload_policy(state))
            state.nv_write(mk_index, blob)
            aead = AESGCM(bytes(mk))
            for i, pair in enumerate(pairs):
                for bit in (0, 1):
                    nonce = secrets.token_bytes(NONCE_SIZE)
                    frames += nonce + aead.encrypt(nonce, pair.label(bit), _frame_aad(i, bit))
        finally:
            mk[:] = bytes(MK_SIZE)
    else:
        mk_index = None
        for pair in pairs:
            blob = state.seal(pair.to_bytes(), secret_policy).to_bytes()
            frames += blob

    image = OtmImage(mode, len(pairs), flag_index, mk_index, chunk, directory)
    directory.mkdir(parents=True, exist_ok=True)
    _atomic_write(image.pairs_path, bytes(frames))
    image.save()
    pairs.clear()
    return image


def select(session: TeeSession, image: OtmImage, input_bits: str,
           chunk: Optional[int] = None) -> KeyFile:
    """Release exactly one label per input bit, all bits in one call."""
    session.require_live(EXECUTE)
    check_bits(input_bits)
    if len(input_bits) != image.evaluator_width:
        raise ArityMismatch(f"{len(input_bits)} input bits, memory holds "
                            f"{image.evaluator_width} pairs")
    state = session.state
    chunk = chunk or image.chunk
    _exposure["watermark"] = 0

    consume_flag(state, image.flag_nv_index)
    raw = image.pairs_path.read_bytes()
    keys = KeyFile()
    if image.mode == MASTER_KEY:
        mk = bytearray(state.unseal(SealedBlob.from_bytes(state.nv_read(image.mk_nv_index))))
        try:
            state.checkpoint("secret-unsealed")
            aead = AESGCM(bytes(mk))
            for i, bit in enumerate(input_bits):
                b = bit == "1"
                off = (2 * i + b) * FRAME_SIZE
                frame = raw[off:off + FRAME_SIZE]
                try:
                    label = aead.decrypt(frame[:NONCE_SIZE], frame[NONCE_SIZE:], _frame_aad(i, b))
                except (InvalidTag, ValueError):
                    raise DecryptionFailure(f"label frame {i} does not open under the "
                                            f"provisioned master key") from None
                keys.append(label)
                _exposure["watermark"] = max(_exposure["watermark"], len(keys))
                if (i + 1) % chunk == 0:
                    state.checkpoint("chunk")
        finally:
            mk[:] = bytes(MK_SIZE)
    else:
        pos = 0
        state.checkpoint("secret-unsealed")
        for start in range(0, len(input_bits), chunk):
            resident = []
            for bit in input_bits[start:start + chunk]:
                blob, pos = SealedBlob.read_from(raw, pos)
                try:
                    plain = bytearray(state.unseal(blob))
                except AuthFailure:
                    raise DecryptionFailure("sealed pair failed authentication") from None
                resident.append((plain, bit == "1"))
                _exposure["watermark"] = max(_exposure["watermark"], len(resident))
            for plain, b in resident:
                keys.append(WireLabelPair.from_bytes(bytes(plain)).label(b))
                plain[:] = bytes(len(plain))
            resident.clear()
            state.checkpoint("chunk")
    state.checkpoint("keys-ready")
    return keys


def exposure_report() -> int:
    """High-water mark of label plaintexts resident at once in the last select."""
    return _exposure["watermark"]


def flag_value(session: TeeSession, image: OtmImage) -> int:
    return session.state.nv_read(image.flag_nv_index)[0]


def _frame_aad(index: int, bit: int) -> bytes:
    return b"otpbox-otm" + struct.pack("<IB", index, bit)


def _atomic_write(path: Path, data: bytes):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


__all__ = ["MASTER_KEY", "SEAL_ALL", "OtmImage", "provision", "select",
           "exposure_report", "FAULT_POINTS", "PolicyMismatch"]
