"""Two-party pairing handshake over independently measured gait fingerprints.

Sequence: the initiator requests authentication; both endpoints exchange their
reliability ordering together with a random 90-bit value; the ordering that
arrived with the larger value is applied on both sides to reduce each local
fingerprint; each side decodes its reduced fingerprint to a key; a PAKE turns
matching keys into a strong shared secret; explicit key confirmation closes
the session.  Fingerprint bits and reliability magnitudes never cross the
wire: only index permutations, random values, PAKE payloads, and MACs do.

Wire format (documented bit-exactly in docs/wire-format.md):
  frame   = [1B version=0x01][1B type][2B big-endian payload length][payload]
  reliability exchange payload = [2B M][M x 1B indices][12B value, 90 bits
  right-aligned, zero-padded to 96]
"""

from __future__ import annotations

import hashlib
import hmac
import queue
import secrets
import socket
import struct
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .config import Config
from .errors import (
    ConfigError,
    ConfirmMismatch,
    DecodeFailure,
    InsufficientData,
    MalformedMessage,
    PakeFailure,
    ProtocolError,
    Timeout,
)
from .fingerprint import (
    Fingerprint,
    ReliabilityOrder,
    average_cycle,
    quantize,
    reduce,
    reliability_order,
)
from .fuzzy_ecc import CodeParams, FuzzyKey, choose_params, decode
from .gait import GaitSequence, cycles_from_bounds

PROTOCOL_VERSION = 0x01
NONCE_BITS = 90
NONCE_BYTES = 12  # 90 bits zero-padded to 96

MSG_AUTH_REQUEST = 0x01
MSG_RELIABILITY_EXCHANGE = 0x02
MSG_PAKE = 0x03
MSG_CONFIRM = 0x04
MSG_ABORT = 0x05

DEFAULT_PHASE_TIMEOUT = 5.0


# -- framing ------------------------------------------------------------------------

def encode_frame(msg_type: int, payload: bytes = b"") -> bytes:
    if len(payload) > 0xFFFF:
        raise MalformedMessage(f"payload too long: {len(payload)}")
    return struct.pack(">BBH", PROTOCOL_VERSION, msg_type, len(payload)) + payload


def decode_frame(frame: bytes) -> tuple[int, bytes]:
    if len(frame) < 4:
        raise MalformedMessage(f"short frame ({len(frame)} bytes)")
    version, msg_type, length = struct.unpack(">BBH", frame[:4])
    if version != PROTOCOL_VERSION:
        raise MalformedMessage(f"unsupported version 0x{version:02x}")
    if len(frame) != 4 + length:
        raise MalformedMessage(
            f"frame length {len(frame)} != 4 + {length}")
    return msg_type, frame[4:]


def encode_reliability_payload(order: ReliabilityOrder, nonce: int) -> bytes:
    idx = np.asarray(order.order)
    m = idx.shape[0]
    if m > 256:
        raise MalformedMessage(f"M={m} exceeds 8-bit index encoding")
    if not 0 <= nonce < (1 << NONCE_BITS):
        raise MalformedMessage("nonce outside the 90-bit range")
    body = struct.pack(">H", m)
    body += bytes(int(v) & 0xFF for v in idx)
    body += nonce.to_bytes(NONCE_BYTES, "big")
    return body


def decode_reliability_payload(payload: bytes) -> tuple[np.ndarray, int]:
    if len(payload) < 2 + NONCE_BYTES:
        raise MalformedMessage("reliability payload too short")
    (m,) = struct.unpack(">H", payload[:2])
    if len(payload) != 2 + m + NONCE_BYTES:
        raise MalformedMessage(
            f"reliability payload length {len(payload)} != {2 + m + NONCE_BYTES}")
    order = np.frombuffer(payload[2:2 + m], dtype=np.uint8).astype(int)
    if not np.array_equal(np.sort(order), np.arange(m)):
        raise MalformedMessage("reliability indices are not a permutation")
    nonce = int.from_bytes(payload[2 + m:], "big")
    if nonce >= (1 << NONCE_BITS):
        raise MalformedMessage("nonce outside the 90-bit range")
    return order, nonce


# -- channels -----------------------------------------------------------------------

class Channel(ABC):
    """Ordered, framed, bidirectional message transport."""

    @abstractmethod
    def send_frame(self, frame: bytes) -> None: ...

    @abstractmethod
    def recv_frame(self, timeout: float) -> bytes: ...


class InMemoryChannel(Channel):
    """One endpoint of an in-process duplex channel."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue,
                 capture: list[bytes] | None = None):
        self._inbox = inbox
        self._outbox = outbox
        self._capture = capture

    @classmethod
    def pair(cls, capture: list[bytes] | None = None
             ) -> tuple["InMemoryChannel", "InMemoryChannel"]:
        a_to_b: queue.Queue = queue.Queue()
        b_to_a: queue.Queue = queue.Queue()
        return (cls(b_to_a, a_to_b, capture), cls(a_to_b, b_to_a, capture))

    def send_frame(self, frame: bytes) -> None:
        if self._capture is not None:
            self._capture.append(frame)
        self._outbox.put(frame)

    def recv_frame(self, timeout: float) -> bytes:
        try:
            return self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise Timeout(f"no message within {timeout}s") from None


class TcpChannel(Channel):
    """Loopback/real TCP transport carrying the framed protocol."""

    def __init__(self, sock: socket.socket):
        self._sock = sock

    def send_frame(self, frame: bytes) -> None:
        self._sock.sendall(frame)

    def _recv_exact(self, n: int, deadline: float) -> bytes:
        buf = b""
        while len(buf) < n:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise Timeout("socket read deadline exceeded")
            self._sock.settimeout(remaining)
            try:
                chunk = self._sock.recv(n - len(buf))
            except socket.timeout:
                raise Timeout("socket read timed out") from None
            if not chunk:
                raise MalformedMessage("peer closed the connection")
            buf += chunk
        return buf

    def recv_frame(self, timeout: float) -> bytes:
        deadline = time.monotonic() + timeout
        header = self._recv_exact(4, deadline)
        _, _, length = struct.unpack(">BBH", header)
        return header + self._recv_exact(length, deadline)

    def close(self) -> None:
        self._sock.close()


# -- transcript / key confirmation ----------------------------------------------------

class Transcript:
    """Canonical, role-labeled record of the frames both sides agree on."""

    def __init__(self) -> None:
        self._items: list[tuple[str, bytes]] = []

    def add(self, label: str, frame: bytes) -> None:
        self._items.append((label, frame))

    def digest(self) -> bytes:
        h = hashlib.sha256()
        for label, frame in self._items:
            tag = label.encode()
            h.update(struct.pack(">H", len(tag)))
            h.update(tag)
            h.update(struct.pack(">I", len(frame)))
            h.update(frame)
        return h.digest()


def confirm_key(secret: bytes, transcript: bytes, role: str = "") -> bytes:
    """256-bit confirmation MAC over the transcript under a key derived from s."""
    mac_key = hashlib.sha256(b"gaitpair-confirm-v1" + secret).digest()
    return hmac.new(mac_key, role.encode() + transcript, hashlib.sha256).digest()


def verify_confirm(secret: bytes, transcript: bytes, role: str, mac: bytes) -> None:
    expected = confirm_key(secret, transcript, role)
    if not hmac.compare_digest(expected, mac):
        raise ConfirmMismatch("key confirmation MAC mismatch")


# -- PAKE ------------------------------------------------------------------------------

class PakeEngine(ABC):
    """Turns a low-entropy shared password into a strong shared secret.

    Contract: both sides derive the same secret iff the passwords match;
    mismatched passwords must fail, never yield silently unequal secrets.
    Production deployments should plug in a real balanced PAKE here.
    """

    @abstractmethod
    def run(self, password: bytes, role: str, send, recv,
            transcript: Transcript) -> bytes:
        """Execute the exchange; returns a 32-byte secret or raises PakeFailure."""


class SimulatedPake(PakeEngine):
    """Commitment-based stand-in for in-process and loopback testing.

    Each side commits to hash(role || password || salt), then reveals the
    salt; the peer recomputes the commitment with its *own* password, so the
    exchange fails unless the passwords agree.  The commitment does not resist
    offline dictionary search against very-low-entropy passwords, which is
    acceptable only in simulation; see PakeEngine for the production contract.
    """

    def __init__(self, rng: np.random.Generator | None = None):
        self._rng = rng

    def _salt(self) -> bytes:
        if self._rng is None:
            return secrets.token_bytes(16)
        return self._rng.bytes(16)

    @staticmethod
    def _commitment(role: str, password: bytes, salt: bytes) -> bytes:
        return hashlib.sha256(
            b"gaitpair-pake-commit-v1" + role.encode() + password + salt).digest()

    def run(self, password: bytes, role: str, send, recv,
            transcript: Transcript) -> bytes:
        peer_role = "B" if role == "A" else "A"
        salt = self._salt()
        commit = self._commitment(role, password, salt)

        send(commit)
        peer_commit = recv()
        if role == "A":
            transcript.add("pake-commit-A", commit)
            transcript.add("pake-commit-B", peer_commit)
        else:
            transcript.add("pake-commit-A", peer_commit)
            transcript.add("pake-commit-B", commit)

        send(salt)
        peer_salt = recv()
        if len(peer_salt) != 16 or len(peer_commit) != 32:
            raise MalformedMessage("bad PAKE payload size")
        expected = self._commitment(peer_role, password, peer_salt)
        if not hmac.compare_digest(expected, peer_commit):
            raise PakeFailure("commitment mismatch: passwords differ")
        if role == "A":
            transcript.add("pake-salt-A", salt)
            transcript.add("pake-salt-B", peer_salt)
        else:
            transcript.add("pake-salt-A", peer_salt)
            transcript.add("pake-salt-B", salt)

        return hashlib.sha256(
            b"gaitpair-pake-secret-v1" + password + transcript.digest()).digest()


# -- session ---------------------------------------------------------------------------

class Phase(Enum):
    IDLE = "idle"
    AWAIT_EXCHANGE = "await_exchange"
    AWAIT_PAKE = "await_pake"
    ESTABLISHED = "established"
    FAILED = "failed"


@dataclass
class SessionState:
    phase: Phase = Phase.IDLE
    local_nonce: int = 0
    peer_nonce: int | None = None
    local_order: ReliabilityOrder | None = None
    peer_order: np.ndarray | None = None
    key: FuzzyKey | None = None
    secret: bytes | None = None


@dataclass
class SessionResult:
    established: bool
    secret: bytes | None = None
    failure: str | None = None
    key: FuzzyKey | None = None
    applied_order: np.ndarray | None = field(default=None, repr=False)
    corrected_errors: int | None = None
    elapsed_s: float = 0.0
    state: SessionState | None = field(default=None, repr=False)


def draw_nonce(rng: np.random.Generator | None = None) -> int:
    """Uniform 90-bit value; system entropy unless an explicit RNG is forced."""
    if rng is None:
        return secrets.randbits(NONCE_BITS)
    return int.from_bytes(rng.bytes(NONCE_BYTES), "big") & ((1 << NONCE_BITS) - 1)


def session_code_params(cfg: Config) -> CodeParams:
    """Code used at the decode step for a given configuration."""
    return choose_params(cfg.cutoff, 1.0 - cfg.threshold)


def compute_fingerprint(seq: GaitSequence, cfg: Config
                        ) -> tuple[Fingerprint, ReliabilityOrder]:
    fp = quantize(seq, average_cycle(seq), cfg.bits_per_cycle)
    return fp, reliability_order(fp)


def run_session(local_gait: GaitSequence, channel: Channel, cfg: Config, *,
                initiator: bool, pake: PakeEngine | None = None,
                nonce_rng: np.random.Generator | None = None,
                phase_timeout: float = DEFAULT_PHASE_TIMEOUT) -> SessionResult:
    """Execute one pairing session over ``channel``.

    Role-symmetric apart from who opens with the authentication request.  The
    result carries the shared secret on success or a failure reason; decode
    failures and dissimilar fingerprints are expected outcomes that simply end
    the attempt (fresh gait data is required for the next one).
    """
    t_start = time.monotonic()
    state = SessionState()
    role = "A" if initiator else "B"
    pake = pake if pake is not None else SimulatedPake()
    transcript = Transcript()

    def fail(reason: str) -> SessionResult:
        state.phase = Phase.FAILED
        return SessionResult(established=False, failure=reason, state=state,
                             elapsed_s=time.monotonic() - t_start)

    def send(msg_type: int, payload: bytes = b"") -> bytes:
        frame = encode_frame(msg_type, payload)
        channel.send_frame(frame)
        return frame

    def recv(expected_type: int) -> tuple[bytes, bytes]:
        frame = channel.recv_frame(phase_timeout)
        msg_type, payload = decode_frame(frame)
        if msg_type == MSG_ABORT:
            raise _PeerAbort(payload.decode(errors="replace"))
        if msg_type != expected_type:
            raise MalformedMessage(
                f"expected message type {expected_type}, got {msg_type}")
        return frame, payload

    def abort(reason: str) -> None:
        try:
            send(MSG_ABORT, reason.encode())
        except Exception:
            pass

    try:
        params = session_code_params(cfg)
        fp, local_order = compute_fingerprint(local_gait, cfg)
        if fp.M > 256:
            raise ConfigError(f"M={fp.M} exceeds the wire encoding limit of 256")
        if fp.M < cfg.cutoff or cfg.cutoff < params.n:
            raise ConfigError(
                f"need M >= cutoff >= n, got M={fp.M}, cutoff={cfg.cutoff}, "
                f"n={params.n}")
        state.local_order = local_order
        state.local_nonce = draw_nonce(nonce_rng)

        # -- authentication request --
        if initiator:
            auth_frame = send(MSG_AUTH_REQUEST)
        else:
            auth_frame, _ = recv(MSG_AUTH_REQUEST)
        transcript.add("auth-request", auth_frame)
        state.phase = Phase.AWAIT_EXCHANGE

        # -- reliability exchange --
        my_payload = encode_reliability_payload(local_order, state.local_nonce)
        my_frame = send(MSG_RELIABILITY_EXCHANGE, my_payload)
        peer_frame, peer_payload = recv(MSG_RELIABILITY_EXCHANGE)
        peer_order, peer_nonce = decode_reliability_payload(peer_payload)
        if peer_order.shape[0] != fp.M:
            abort("fingerprint length mismatch")
            return fail(f"peer M={peer_order.shape[0]} != local M={fp.M}")
        state.peer_order = peer_order
        state.peer_nonce = peer_nonce
        if initiator:
            transcript.add("exchange-A", my_frame)
            transcript.add("exchange-B", peer_frame)
        else:
            transcript.add("exchange-A", peer_frame)
            transcript.add("exchange-B", my_frame)

        if peer_nonce == state.local_nonce:
            abort("nonce tie")
            return fail("nonce tie; restart the session")

        # the ordering accompanying the larger value wins on both sides
        if peer_nonce > state.local_nonce:
            winning = ReliabilityOrder(order=peer_order)
        else:
            winning = local_order
        reduced = reduce(fp, winning, cfg.cutoff)
        code_input = reduced.bits[: params.n]

        try:
            key = decode(code_input, params)
        except DecodeFailure:
            abort("decode failure")
            return fail("decode failure: fingerprint too far from the codespace")
        state.key = key
        state.phase = Phase.AWAIT_PAKE

        # -- PAKE --
        def pake_send(payload: bytes) -> None:
            send(MSG_PAKE, payload)

        def pake_recv() -> bytes:
            _, payload = recv(MSG_PAKE)
            return payload

        secret = pake.run(key.to_bytes(), role, pake_send, pake_recv, transcript)

        # -- key confirmation --
        digest = transcript.digest()
        my_mac = confirm_key(secret, digest, role)
        send(MSG_CONFIRM, my_mac)
        _, peer_mac = recv(MSG_CONFIRM)
        peer_role = "B" if initiator else "A"
        verify_confirm(secret, digest, peer_role, peer_mac)

        state.secret = secret
        state.phase = Phase.ESTABLISHED
        return SessionResult(
            established=True,
            secret=secret,
            key=key,
            applied_order=np.asarray(winning.order).copy(),
            corrected_errors=key.corrected_errors,
            elapsed_s=time.monotonic() - t_start,
            state=state,
        )

    except _PeerAbort as exc:
        return fail(f"peer abort: {exc}")
    except Timeout as exc:
        return fail(f"timeout: {exc}")
    except (PakeFailure, ConfirmMismatch) as exc:
        return fail(f"{type(exc).__name__}: {exc}")
    except MalformedMessage as exc:
        abort("malformed message")
        return fail(f"malformed message: {exc}")
    except ProtocolError as exc:
        return fail(str(exc))


class _PeerAbort(Exception):
    pass


def run_pair_in_memory(seq_a: GaitSequence, seq_b: GaitSequence, cfg: Config, *,
                       seed: int | None = None,
                       phase_timeout: float = DEFAULT_PHASE_TIMEOUT,
                       capture: list[bytes] | None = None
                       ) -> tuple[SessionResult, SessionResult]:
    """Run both endpoints of one session in-process over an in-memory channel.

    With ``seed`` set, nonces and PAKE salts are drawn deterministically; this
    is for tests and evaluation only and is insecure for real pairing.
    """
    chan_a, chan_b = InMemoryChannel.pair(capture=capture)
    if seed is None:
        rng_a = rng_b = None
        pake_a = SimulatedPake()
        pake_b = SimulatedPake()
    else:
        rng_a = np.random.default_rng([seed, 1])
        rng_b = np.random.default_rng([seed, 2])
        pake_a = SimulatedPake(rng=np.random.default_rng([seed, 3]))
        pake_b = SimulatedPake(rng=np.random.default_rng([seed, 4]))

    with ThreadPoolExecutor(max_workers=2) as pool:
        fut_a = pool.submit(run_session, seq_a, chan_a, cfg, initiator=True,
                            pake=pake_a, nonce_rng=rng_a,
                            phase_timeout=phase_timeout)
        fut_b = pool.submit(run_session, seq_b, chan_b, cfg, initiator=False,
                            pake=pake_b, nonce_rng=rng_b,
                            phase_timeout=phase_timeout)
        return fut_a.result(), fut_b.result()


# -- clock-drift retry ---------------------------------------------------------------

def shift_retry(seq: GaitSequence, half_cycles: int) -> GaitSequence:
    """Re-segment a sequence with its origin advanced by whole half cycles.

    Devices with relative clock drift can retry pairing on shifted sequences;
    shifting by two half cycles equals dropping the first full cycle.
    """
    if half_cycles < 0:
        raise ValueError("half_cycles must be >= 0")
    if seq.source_signal is None or seq.half_cycle_bounds is None:
        raise InsufficientData("sequence carries no segmentation provenance")
    bounds = seq.half_cycle_bounds[half_cycles:]
    if bounds.shape[0] < 3:
        raise InsufficientData(
            f"only {max(0, bounds.shape[0] - 1)} half cycles left after shift")
    q = (bounds.shape[0] - 1) // 2
    cycles = cycles_from_bounds(seq.source_signal.z, bounds, seq.rho)
    return GaitSequence(
        cycles=cycles,
        rho=seq.rho,
        source_span=(int(bounds[0]), int(bounds[2 * q])),
        source_signal=seq.source_signal,
        half_cycle_bounds=bounds.copy(),
        origin_half_cycle=seq.origin_half_cycle + half_cycles,
    )
