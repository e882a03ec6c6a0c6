"""Software TPM with the exclusive measured-launch environment built on top.

The simulator keeps a PCR bank, PCR-gated NVRAM indices and a per-chip root
secret in a single state file. That file stands in for the chip: it is
rewritten atomically on every mutation and is never part of the "hard drive"
an adversary may snapshot and restore.

Sealing is AES-GCM under a key derived (HKDF-SHA256) from the root secret and
the canonical encoding of the PCR policy, so a blob is only usable on the chip
that made it and only while the live PCR bank matches its policy.
"""

from __future__ import annotations

import hashlib
import os
import secrets
import struct
import tempfile
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import (
    AuthFailure,
    IndexExists,
    IndexUndefined,
    InvalidMeasurement,
    InvalidPcr,
    MeasurementMismatch,
    PolicyMismatch,
    SessionActive,
    SessionRequired,
    SizeExceeded,
    StateCorrupt,
)

STATE_MAGIC = b"OTPTPM01"
STATE_VERSION = 1
SEAL_MAGIC = b"OTPSEAL1"

DIGEST_SIZE = 32
PCR_COUNT = 24
LAUNCH_PCR = 17
MODE_PCR = 18
# PCRs 17-22 are reset by a dynamic launch, as on TXT hardware.
DYNAMIC_PCRS = range(17, 23)
ZERO_DIGEST = bytes(DIGEST_SIZE)

NONCE_SIZE = 12
TAG_SIZE = 16
# 10-byte record -> 322-byte blob, the size of a TPM 1.2 sealed chunk.
DEFAULT_SEAL_OVERHEAD = 312

EXIT_MEASUREMENT = b"otpbox:session-exit"

Policy = list  # list[tuple[int, bytes]]


def H(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def extend_digest(old: bytes, measurement: bytes) -> bytes:
    """The PCR extend rule: ``H(old || H(measurement))``."""
    return H(old + H(measurement))


def launch_digest(program_image: bytes) -> bytes:
    """Value the launch PCR holds right after a measured launch of the image."""
    return extend_digest(ZERO_DIGEST, program_image)


def encode_policy(policy) -> bytes:
    out = bytearray([len(policy)])
    for pcr, digest in sorted(policy):
        if len(digest) != DIGEST_SIZE:
            raise ValueError("policy digests must be 32 bytes")
        out.append(pcr)
        out += digest
    return bytes(out)


def _decode_policy(buf: bytes, pos: int):
    (count,) = struct.unpack_from("<B", buf, pos)
    pos += 1
    policy = []
    for _ in range(count):
        pcr = buf[pos]
        digest = bytes(buf[pos + 1:pos + 1 + DIGEST_SIZE])
        if len(digest) != DIGEST_SIZE:
            raise ValueError("truncated policy")
        policy.append((pcr, digest))
        pos += 1 + DIGEST_SIZE
    return policy, pos


@dataclass
class NvIndex:
    index_id: int
    size: int
    pcr_policy: list
    data: bytes = b""
    defined: bool = True


@dataclass(frozen=True)
class SealedBlob:
    pcr_policy: tuple
    nonce: bytes
    ciphertext: bytes
    auth_tag: bytes
    magic: bytes = SEAL_MAGIC

    def header(self) -> bytes:
        return SEAL_MAGIC + encode_policy(self.pcr_policy)

    def to_bytes(self) -> bytes:
        return (self.header() + self.nonce
                + struct.pack("<I", len(self.ciphertext))
                + self.ciphertext + self.auth_tag)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SealedBlob":
        blob, end = cls.read_from(raw, 0)
        if end != len(raw):
            raise AuthFailure("trailing bytes after sealed blob")
        return blob

    @classmethod
    def read_from(cls, raw: bytes, pos: int):
        """Parse one blob starting at ``pos``; returns ``(blob, next_pos)``."""
        try:
            if raw[pos:pos + 8] != SEAL_MAGIC:
                raise ValueError("bad magic")
            policy, p = _decode_policy(raw, pos + 8)
            nonce = bytes(raw[p:p + NONCE_SIZE])
            p += NONCE_SIZE
            (ct_len,) = struct.unpack_from("<I", raw, p)
            p += 4
            ct = bytes(raw[p:p + ct_len])
            p += ct_len
            tag = bytes(raw[p:p + TAG_SIZE])
            p += TAG_SIZE
            if len(ct) != ct_len or len(tag) != TAG_SIZE or len(nonce) != NONCE_SIZE:
                raise ValueError("truncated")
        except (ValueError, struct.error, IndexError) as exc:
            raise AuthFailure(f"malformed sealed blob: {exc}") from None
        return cls(tuple(policy), nonce, ct, tag), p


class TpmState:
    """One simulated chip, backed by ``state_path``.

    Use :meth:`create`, :meth:`load` or :meth:`open` rather than the
    constructor. Instrumentation counters (``ops``) and the latency model are
    process-local and are not persisted.
    """

    def __init__(self, state_path, root_secret, pcrs, nv_indices):
        self.state_path = Path(state_path)
        self.root_secret = root_secret
        self.pcrs = pcrs
        self.nv_indices = nv_indices

        self.ops = Counter()
        self.latency_ms = 0.0
        self.virtual_clock = False
        self.simulated_ms = 0.0
        self.seal_overhead = DEFAULT_SEAL_OVERHEAD
        self.fault_hook: Optional[Callable[[str], None]] = None

        self._lock = threading.Lock()
        self._session = None

    # -- lifecycle ----------------------------------------------------------

    @classmethod
    def create(cls, state_path, root_secret=None):
        state_path = Path(state_path)
        if state_path.exists():
            raise StateCorrupt(f"{state_path} already exists")
        state = cls(state_path, root_secret or secrets.token_bytes(32),
                    [ZERO_DIGEST] * PCR_COUNT, {})
        state.persist()
        return state

    @classmethod
    def load(cls, state_path):
        state_path = Path(state_path)
        root, pcrs, nv = _decode_state(state_path.read_bytes())
        return cls(state_path, root, pcrs, nv)

    @classmethod
    def open(cls, state_path):
        state_path = Path(state_path)
        if state_path.exists():
            return cls.load(state_path)
        state_path.parent.mkdir(parents=True, exist_ok=True)
        return cls.create(state_path)

    def persist(self):
        """Atomically replace the state file; returns once it is on disk."""
        payload = _encode_state(self.root_secret, self.pcrs, self.nv_indices)
        directory = self.state_path.parent
        fd, tmp = tempfile.mkstemp(prefix=".tpm-", dir=directory)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, self.state_path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        dir_fd = os.open(directory, os.O_RDONLY)
        try:
            os.fsync(dir_fd)
        finally:
            os.close(dir_fd)

    def reboot(self):
        """Power cycle: PCRs are volatile, NVRAM is not."""
        self._session = None
        if self._lock.locked():
            self._lock.release()
        self.pcrs = [ZERO_DIGEST] * PCR_COUNT
        self.persist()

    # -- instrumentation ----------------------------------------------------

    def reset_counters(self):
        self.ops.clear()
        self.simulated_ms = 0.0

    def checkpoint(self, point: str):
        if self.fault_hook is not None:
            self.fault_hook(point)

    def _tpm_delay(self):
        if self.latency_ms <= 0:
            return
        if self.virtual_clock:
            self.simulated_ms += self.latency_ms
        else:
            time.sleep(self.latency_ms / 1000.0)

    # -- PCRs -----------------------------------------------------------------

    def _check_pcr(self, pcr):
        if not isinstance(pcr, int) or not 0 <= pcr < PCR_COUNT:
            raise InvalidPcr(f"PCR {pcr!r} out of range 0..{PCR_COUNT - 1}")

    def pcr_read(self, pcr: int) -> bytes:
        self._check_pcr(pcr)
        return self.pcrs[pcr]

    def pcr_extend(self, pcr: int, measurement: bytes) -> bytes:
        self._check_pcr(pcr)
        if not measurement:
            raise InvalidMeasurement("measurement must be non-empty")
        self.pcrs[pcr] = extend_digest(self.pcrs[pcr], bytes(measurement))
        self.ops["extend"] += 1
        self.persist()
        return self.pcrs[pcr]

    def policy_for(self, *pcrs) -> list:
        """Policy binding the given PCRs to their current values."""
        for p in pcrs:
            self._check_pcr(p)
        return [(p, self.pcrs[p]) for p in pcrs]

    def policy_satisfied(self, policy) -> bool:
        return all(0 <= p < PCR_COUNT and self.pcrs[p] == d for p, d in policy)

    def _require_policy(self, policy, what):
        if not self.policy_satisfied(policy):
            raise PolicyMismatch(f"{what}: live PCR bank does not satisfy policy")

    # -- sealing ----------------------------------------------------------------

    def _seal_key(self, policy) -> bytes:
        return HKDF(algorithm=hashes.SHA256(), length=32, salt=b"otpbox-seal-v1",
                    info=encode_policy(policy)).derive(self.root_secret)

    def seal(self, plaintext: bytes, policy) -> SealedBlob:
        policy = tuple(sorted((int(p), bytes(d)) for p, d in policy))
        for p, _ in policy:
            self._check_pcr(p)
        header = SEAL_MAGIC + encode_policy(policy)
        fixed = len(header) + NONCE_SIZE + 4 + 4 + TAG_SIZE
        pad = max(0, self.seal_overhead - fixed)
        inner = struct.pack("<I", len(plaintext)) + bytes(plaintext) + bytes(pad)
        nonce = secrets.token_bytes(NONCE_SIZE)
        sealed = AESGCM(self._seal_key(policy)).encrypt(nonce, inner, header)
        self.ops["seal"] += 1
        self._tpm_delay()
        return SealedBlob(policy, nonce, sealed[:-TAG_SIZE], sealed[-TAG_SIZE:])

    def unseal(self, blob) -> bytes:
        if isinstance(blob, (bytes, bytearray)):
            blob = SealedBlob.from_bytes(bytes(blob))
        self.ops["unseal"] += 1
        self._tpm_delay()
        self._require_policy(blob.pcr_policy, "unseal")
        try:
            inner = AESGCM(self._seal_key(blob.pcr_policy)).decrypt(
                blob.nonce, blob.ciphertext + blob.auth_tag, blob.header())
        except InvalidTag:
            raise AuthFailure("sealed blob failed authentication") from None
        (n,) = struct.unpack_from("<I", inner, 0)
        return inner[4:4 + n]

    # -- NVRAM ------------------------------------------------------------------

    def _index(self, index_id) -> NvIndex:
        idx = self.nv_indices.get(index_id)
        if idx is None or not idx.defined:
            raise IndexUndefined(f"NV index {index_id:#x} is not defined")
        return idx

    def nv_is_defined(self, index_id) -> bool:
        idx = self.nv_indices.get(index_id)
        return idx is not None and idx.defined

    def nv_define(self, index_id: int, size: int, policy) -> None:
        """Define a PCR-gated index. Its contents start as ``size`` zero bytes."""
        if self.nv_is_defined(index_id):
            raise IndexExists(f"NV index {index_id:#x} already defined")
        if size <= 0:
            raise SizeExceeded("NV index size must be positive")
        for p, _ in policy:
            self._check_pcr(p)
        self.nv_indices[index_id] = NvIndex(index_id, size, list(policy), bytes(size))
        self.ops["nv_define"] += 1
        self.persist()

    def nv_undefine(self, index_id: int) -> None:
        idx = self._index(index_id)
        self._require_policy(idx.pcr_policy, f"nv_undefine {index_id:#x}")
        del self.nv_indices[index_id]
        self.ops["nv_undefine"] += 1
        self.persist()

    def nv_write(self, index_id: int, data: bytes, offset: int = 0) -> None:
        idx = self._index(index_id)
        self._require_policy(idx.pcr_policy, f"nv_write {index_id:#x}")
        if offset < 0 or offset + len(data) > idx.size:
            raise SizeExceeded(f"write of {len(data)} bytes at {offset} exceeds "
                               f"index size {idx.size}")
        buf = bytearray(idx.data.ljust(offset, b"\0"))
        buf[offset:offset + len(data)] = data
        idx.data = bytes(buf)
        self.ops["nv_write"] += 1
        self.persist()

    def nv_read(self, index_id: int) -> bytes:
        idx = self._index(index_id)
        self._require_policy(idx.pcr_policy, f"nv_read {index_id:#x}")
        self.ops["nv_read"] += 1
        return idx.data

    def allocate_nv_index(self, base: int = 0x01500000) -> int:
        index_id = base
        while index_id in self.nv_indices:
            index_id += 1
        return index_id


@dataclass
class TeeSession:
    """Proof of sole ownership of the simulated machine.

    Created only by :func:`measured_launch`; closing it caps the launch PCR so
    nothing bound to the launched program stays reachable afterwards.
    """

    state: TpmState
    program_digest: bytes
    mode: Optional[str] = None
    exclusive_token: object = field(default_factory=object, repr=False)

    @property
    def live(self) -> bool:
        return self.state._session is self

    def require_live(self, mode=None):
        if not self.live:
            raise SessionRequired("a live measured-launch session is required")
        if mode is not None and self.mode != mode:
            raise SessionRequired(f"session mode {self.mode!r}, need {mode!r}")

    def close(self):
        if not self.live:
            return
        try:
            self.state.pcr_extend(LAUNCH_PCR, EXIT_MEASUREMENT)
        finally:
            self.state._session = None
            self.state._lock.release()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def mode_measurement(mode: str) -> bytes:
    return b"otpbox:mode:" + mode.encode()


def measured_launch(state: TpmState, program_image: bytes,
                    expected_digest: Optional[bytes] = None,
                    mode: Optional[str] = None) -> TeeSession:
    """Late-launch ``program_image`` with exclusive ownership of ``state``.

    Resets the dynamic PCRs, records the image measurement in the launch PCR
    and, when ``mode`` is given, the mode in the mode PCR. A mismatching
    ``expected_digest`` aborts after measurement, leaving the launch PCR
    pointing at the wrong program.
    """
    if not state._lock.acquire(blocking=False):
        raise SessionActive("another measured-launch session is live")
    try:
        digest = H(program_image)
        for p in DYNAMIC_PCRS:
            state.pcrs[p] = ZERO_DIGEST
        state.pcr_extend(LAUNCH_PCR, program_image)
        if expected_digest is not None and expected_digest != digest:
            raise MeasurementMismatch("program measurement does not match policy")
        if mode is not None:
            state.pcr_extend(MODE_PCR, mode_measurement(mode))
        session = TeeSession(state, digest, mode)
        state._session = session
        return session
    except BaseException:
        state._lock.release()
        raise


def expected_bank(program_image: bytes, mode: Optional[str] = None) -> dict:
    """PCR values a launch of ``program_image`` in ``mode`` will produce."""
    bank = {LAUNCH_PCR: launch_digest(program_image)}
    if mode is not None:
        bank[MODE_PCR] = extend_digest(ZERO_DIGEST, mode_measurement(mode))
    return bank


# -- state file codec -----------------------------------------------------------

def _lp(data: bytes) -> bytes:
    return struct.pack("<I", len(data)) + data


def _encode_state(root_secret, pcrs, nv_indices) -> bytes:
    out = bytearray(STATE_MAGIC)
    out += struct.pack("<H", STATE_VERSION)
    out += _lp(root_secret)
    out += _lp(b"".join(pcrs))
    table = bytearray(struct.pack("<I", len(nv_indices)))
    for index_id in sorted(nv_indices):
        idx = nv_indices[index_id]
        table += struct.pack("<II", idx.index_id, idx.size)
        table += encode_policy(idx.pcr_policy)
        table += _lp(idx.data)
    out += _lp(bytes(table))
    return bytes(out)


def _decode_state(raw: bytes):
    try:
        if raw[:8] != STATE_MAGIC:
            raise ValueError("bad magic")
        (version,) = struct.unpack_from("<H", raw, 8)
        if version != STATE_VERSION:
            raise ValueError(f"unsupported version {version}")
        pos = 10

        def take():
            nonlocal pos
            (n,) = struct.unpack_from("<I", raw, pos)
            chunk = raw[pos + 4:pos + 4 + n]
            if len(chunk) != n:
                raise ValueError("truncated field")
            pos += 4 + n
            return chunk

        root = take()
        pcr_blob = take()
        if len(pcr_blob) != PCR_COUNT * DIGEST_SIZE:
            raise ValueError("bad PCR array")
        pcrs = [pcr_blob[i:i + DIGEST_SIZE] for i in range(0, len(pcr_blob), DIGEST_SIZE)]
        table = take()
        (count,) = struct.unpack_from("<I", table, 0)
        tp = 4
        nv = {}
        for _ in range(count):
            index_id, size = struct.unpack_from("<II", table, tp)
            policy, tp = _decode_policy(table, tp + 8)
            (n,) = struct.unpack_from("<I", table, tp)
            data = table[tp + 4:tp + 4 + n]
            tp += 4 + n
            nv[index_id] = NvIndex(index_id, size, policy, bytes(data))
    except (ValueError, struct.error) as exc:
        raise StateCorrupt(f"TPM state file unreadable: {exc}") from None
    return bytes(root), pcrs, nv
