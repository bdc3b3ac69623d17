"""On-chain data model: tokens, transactions, blocks, chain state, file I/O.

Wire encodings are canonical big-endian with explicit length prefixes, so a
transaction id is simply the digest of its serialized fields and any byte
flip anywhere in a persisted ledger breaks a digest, a signature, or the
strict framing. Parsing is strict: every length must be consumed exactly.

The chain tracks three uniqueness indices next to the block list: token ids
(a token exists in at most one transaction), (issuer, nonce) pairs, and
transaction ids. Registration records and per-generator production history
are maintained as blocks apply so consensus and trust can be replayed from
the raw file alone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum
from functools import cached_property

from . import crypto
from .crypto import Ciphertext, DetRng, KeyPair, sha256
from .fixedpoint import ONE

# ===========================================================================
# Constants
# ===========================================================================

LEDGER_MAGIC = b"CTSIM1\n"

DIGEST_LEN = crypto.DIGEST_LEN
ADDRESS_LEN = crypto.ADDRESS_LEN
ZERO_DIGEST = crypto.ZERO_DIGEST

# parse-time caps; anything beyond these is a malformed ledger, not data
MAX_PRIVILEGES = 64
MAX_PRIVILEGE_LEN = 4096
MAX_PAYLOAD_LEN = 65536
MAX_CIPHERTEXT_LEN = 1 << 20
MAX_TXS_PER_BLOCK = 10000
MAX_BLOCK_LEN = 1 << 24


class TxKind(IntEnum):
    TOKEN = 1
    FEEDBACK = 2
    REGISTER = 3


class LedgerError(Exception):
    """Validation or parse failure; .reason is machine-readable."""

    def __init__(self, reason: str, detail: str = "", txid: bytes | None = None):
        self.reason = reason
        self.detail = detail
        self.txid = txid
        super().__init__(f"{reason}: {detail}" if detail else reason)


# ===========================================================================
# Strict binary reader / writers
# ===========================================================================

class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.off + n > len(self.data):
            raise LedgerError("BAD_ENCODING", "truncated field")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return int.from_bytes(self.take(2), "big")

    def u32(self) -> int:
        return int.from_bytes(self.take(4), "big")

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def done(self) -> bool:
        return self.off == len(self.data)


def _u8(v: int) -> bytes:
    return v.to_bytes(1, "big")


def _u16(v: int) -> bytes:
    return v.to_bytes(2, "big")


def _u32(v: int) -> bytes:
    return v.to_bytes(4, "big")


def _u64(v: int) -> bytes:
    return v.to_bytes(8, "big")


# ===========================================================================
# Access tokens
# ===========================================================================

@dataclass(frozen=True)
class AccessToken:
    """Identity claims binding a user pseudonym to a resource grant."""

    pseudonym: bytes        # 20-byte user address
    issuer: bytes           # home provider address
    audience: bytes         # foreign provider address
    resource: bytes         # resource address
    privileges: tuple[bytes, ...]
    issued_at: int          # simulated ms
    expires_at: int
    nonce: int              # issuer-scoped replay guard

    @cached_property
    def token_id(self) -> bytes:
        return sha256(ser_token(self))


def ser_token(tok: AccessToken) -> bytes:
    parts = [tok.pseudonym, tok.issuer, tok.audience, tok.resource,
             _u16(len(tok.privileges))]
    for priv in tok.privileges:
        parts.append(_u32(len(priv)))
        parts.append(priv)
    parts.append(_u64(tok.issued_at))
    parts.append(_u64(tok.expires_at))
    parts.append(_u64(tok.nonce))
    return b"".join(parts)


def _parse_token(r: _Reader) -> AccessToken:
    pseudonym = r.take(ADDRESS_LEN)
    issuer = r.take(ADDRESS_LEN)
    audience = r.take(ADDRESS_LEN)
    resource = r.take(ADDRESS_LEN)
    nprivs = r.u16()
    if nprivs > MAX_PRIVILEGES:
        raise LedgerError("BAD_ENCODING", "privilege count")
    privs = []
    for _ in range(nprivs):
        plen = r.u32()
        if plen > MAX_PRIVILEGE_LEN:
            raise LedgerError("BAD_ENCODING", "privilege length")
        privs.append(r.take(plen))
    issued_at = r.u64()
    expires_at = r.u64()
    nonce = r.u64()
    return AccessToken(pseudonym, issuer, audience, resource, tuple(privs),
                       issued_at, expires_at, nonce)


# ===========================================================================
# Transactions
# ===========================================================================

@dataclass(frozen=True)
class TxInput:
    index: int
    ref_in: bytes           # issuer's previous input-bearing txid, or zero
    enc_user: Ciphertext    # user profile encrypted for the recipient
    resource: bytes


@dataclass(frozen=True)
class TxOutput:
    index: int
    ref_out: bytes
    token: AccessToken
    recipient: bytes


@dataclass(frozen=True)
class Transaction:
    kind: TxKind
    inputs: tuple[TxInput, ...]
    outputs: tuple[TxOutput, ...]
    prev_tx: bytes          # sender's previous txid, zero for the first
    payload: bytes
    sender_pub: bytes
    txid: bytes
    sig: bytes

    @property
    def sender(self) -> bytes:
        return crypto.address_of(self.sender_pub)


@dataclass(frozen=True)
class FeedbackData:
    """Payload of a FEEDBACK transaction.

    Labels 0-4 rate user credibility (submitted by the serving foreign
    provider); labels 5-9 rate provider satisfaction (submitted by the home
    provider on the user's behalf). rater/subject/user are carried
    explicitly and cross-checked against the referenced token.
    """

    rater: bytes
    subject: bytes
    user: bytes
    label: int
    token_id: bytes


@dataclass(frozen=True)
class RegisterData:
    weight_sat: int         # fixed-point declared weights
    weight_auth: int
    stake: int              # fixed-point declared stake


def _ser_ciphertext(ct: Ciphertext) -> bytes:
    return b"".join([ct.ephemeral_pub, ct.nonce,
                     _u32(len(ct.body)), ct.body, ct.tag])


def _parse_ciphertext(r: _Reader) -> Ciphertext:
    eph = r.take(crypto.PUBKEY_LEN)
    nonce = r.take(12)
    blen = r.u32()
    if blen > MAX_CIPHERTEXT_LEN:
        raise LedgerError("BAD_ENCODING", "ciphertext length")
    body = r.take(blen)
    tag = r.take(16)
    return Ciphertext(eph, nonce, body, tag)


def _ser_input(txin: TxInput) -> bytes:
    return b"".join([_u32(txin.index), txin.ref_in,
                     _ser_ciphertext(txin.enc_user), txin.resource])


def _parse_input(r: _Reader) -> TxInput:
    index = r.u32()
    ref_in = r.take(DIGEST_LEN)
    enc_user = _parse_ciphertext(r)
    resource = r.take(ADDRESS_LEN)
    return TxInput(index, ref_in, enc_user, resource)


def _ser_output(txout: TxOutput) -> bytes:
    return b"".join([_u32(txout.index), txout.ref_out,
                     ser_token(txout.token), txout.recipient])


def _parse_output(r: _Reader) -> TxOutput:
    index = r.u32()
    ref_out = r.take(DIGEST_LEN)
    token = _parse_token(r)
    recipient = r.take(ADDRESS_LEN)
    return TxOutput(index, ref_out, token, recipient)


def canonical_serialize(tx: Transaction) -> bytes:
    """Everything the txid covers: all fields except txid and sig."""
    parts = [_u8(tx.kind), _u16(len(tx.inputs))]
    parts += [_ser_input(i) for i in tx.inputs]
    parts.append(_u16(len(tx.outputs)))
    parts += [_ser_output(o) for o in tx.outputs]
    parts.append(tx.prev_tx)
    parts.append(_u32(len(tx.payload)))
    parts.append(tx.payload)
    parts.append(tx.sender_pub)
    return b"".join(parts)


def tx_to_wire(tx: Transaction) -> bytes:
    return tx.txid + canonical_serialize(tx) + tx.sig


def tx_from_wire(data: bytes) -> Transaction:
    r = _Reader(data)
    txid = r.take(DIGEST_LEN)
    body_start = r.off
    kind_raw = r.u8()
    try:
        kind = TxKind(kind_raw)
    except ValueError:
        raise LedgerError("BAD_ENCODING", f"unknown tx kind {kind_raw}") from None
    n_in = r.u16()
    inputs = tuple(_parse_input(r) for _ in range(n_in))
    n_out = r.u16()
    outputs = tuple(_parse_output(r) for _ in range(n_out))
    prev_tx = r.take(DIGEST_LEN)
    plen = r.u32()
    if plen > MAX_PAYLOAD_LEN:
        raise LedgerError("BAD_ENCODING", "payload length")
    payload = r.take(plen)
    sender_pub = r.take(crypto.PUBKEY_LEN)
    body_end = r.off
    sig = r.take(crypto.SIG_LEN)
    if not r.done():
        raise LedgerError("BAD_ENCODING", "trailing bytes after transaction")
    tx = Transaction(kind, inputs, outputs, prev_tx, payload, sender_pub,
                     txid, sig)
    # cheap sanity: recompute of the id is the validator's job, framing is ours
    assert data[body_start:body_end] == canonical_serialize(tx)
    return tx


def make_transaction(kind: TxKind, inputs, outputs, prev_tx: bytes,
                     payload: bytes, key: KeyPair) -> Transaction:
    tx = Transaction(kind, tuple(inputs), tuple(outputs), prev_tx, payload,
                     key.pub_bytes, b"", b"")
    txid = sha256(canonical_serialize(tx))
    return replace(tx, txid=txid, sig=crypto.sign(key, txid))


def ser_feedback(fb: FeedbackData) -> bytes:
    return b"".join([fb.rater, fb.subject, fb.user, _u8(fb.label),
                     fb.token_id])


def parse_feedback(payload: bytes) -> FeedbackData:
    r = _Reader(payload)
    rater = r.take(ADDRESS_LEN)
    subject = r.take(ADDRESS_LEN)
    user = r.take(ADDRESS_LEN)
    label = r.u8()
    token_id = r.take(DIGEST_LEN)
    if not r.done():
        raise LedgerError("BAD_ENCODING", "trailing feedback bytes")
    return FeedbackData(rater, subject, user, label, token_id)


def ser_register(reg: RegisterData) -> bytes:
    return _u64(reg.weight_sat) + _u64(reg.weight_auth) + _u64(reg.stake)


def parse_register(payload: bytes) -> RegisterData:
    r = _Reader(payload)
    reg = RegisterData(r.u64(), r.u64(), r.u64())
    if not r.done():
        raise LedgerError("BAD_ENCODING", "trailing registration bytes")
    return reg


# ===========================================================================
# Builders
# ===========================================================================

def build_token_tx(issuer: KeyPair, user_info: bytes, resource: bytes,
                   recipient_pub: bytes, token: AccessToken, prev_tx: bytes,
                   rng: DetRng, ref_in: bytes = ZERO_DIGEST,
                   ref_out: bytes = ZERO_DIGEST) -> Transaction:
    """Issue a token: one encrypted-user input, one token output, signed.

    The user profile is encrypted for the recipient provider's key; only
    addresses appear in clear on the chain.
    """
    recipient = crypto.address_of(recipient_pub)
    if token.issuer != issuer.address:
        raise LedgerError("TOKEN_SHAPE", "issuer key does not match token issuer")
    if token.audience != recipient:
        raise LedgerError("AUDIENCE_MISMATCH", "token audience is not the recipient")
    enc = crypto.encrypt_for(recipient_pub, user_info, rng)
    txin = TxInput(0, ref_in, enc, resource)
    txout = TxOutput(0, ref_out, token, recipient)
    return make_transaction(TxKind.TOKEN, (txin,), (txout,), prev_tx, b"",
                            issuer)


def build_feedback_tx(rater: KeyPair, fb: FeedbackData,
                      prev_tx: bytes) -> Transaction:
    if fb.rater != rater.address:
        raise LedgerError("RATER_MISMATCH", "feedback rater is not the signing key")
    return make_transaction(TxKind.FEEDBACK, (), (), prev_tx,
                            ser_feedback(fb), rater)


def build_register_tx(key: KeyPair, reg: RegisterData,
                      prev_tx: bytes = ZERO_DIGEST) -> Transaction:
    return make_transaction(TxKind.REGISTER, (), (), prev_tx,
                            ser_register(reg), key)


# ===========================================================================
# Blocks
# ===========================================================================

GENESIS_PUB_MAGIC = b"CTSIMG"
GENESIS_SIG = b"\x00" * crypto.SIG_LEN

_HEADER_CORE_LEN = 8 + 32 + 32 + 8 + 33 + 32 + 8


def pack_genesis_pub(interval_ms: int, slot_ms: int, k_bits: int,
                     time_cap: int) -> bytes:
    """Consensus parameters ride in the genesis generator_pub slot (no key
    signs genesis), so a ledger file is verifiable with no side channel."""
    packed = (GENESIS_PUB_MAGIC + _u32(interval_ms) + _u32(slot_ms)
              + _u8(k_bits) + _u16(time_cap))
    return packed + b"\x00" * (crypto.PUBKEY_LEN - len(packed))


def unpack_genesis_pub(pub: bytes) -> tuple[int, int, int, int] | None:
    """(interval_ms, slot_ms, k_bits, time_cap), or None if malformed."""
    if len(pub) != crypto.PUBKEY_LEN or not pub.startswith(GENESIS_PUB_MAGIC):
        return None
    r = _Reader(pub[len(GENESIS_PUB_MAGIC):])
    interval_ms, slot_ms, k_bits, time_cap = r.u32(), r.u32(), r.u8(), r.u16()
    if any(r.data[r.off:]):
        return None
    if interval_ms <= 0 or not 0 < slot_ms <= interval_ms or time_cap <= 0:
        return None
    if k_bits not in (64, 128):
        return None
    return interval_ms, slot_ms, k_bits, time_cap


@dataclass(frozen=True)
class BlockHeader:
    height: int
    prev_block: bytes
    tx_root: bytes
    timestamp: int          # simulated ms
    generator_pub: bytes
    prf: bytes              # proof of eligibility
    base_target: int        # fixed-point d in force at generation
    sig: bytes              # over h_blk; all-zero in genesis

    @cached_property
    def core_bytes(self) -> bytes:
        return b"".join([_u64(self.height), self.prev_block, self.tx_root,
                         _u64(self.timestamp), self.generator_pub, self.prf,
                         _u64(self.base_target)])

    @cached_property
    def h_blk(self) -> bytes:
        return sha256(self.core_bytes)


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    txs: tuple[Transaction, ...]

    @property
    def h_blk(self) -> bytes:
        return self.header.h_blk

    @property
    def height(self) -> int:
        return self.header.height


def compute_tx_root(txs) -> bytes:
    return sha256(b"".join(tx.txid for tx in txs))


def ser_block(blk: Block) -> bytes:
    parts = [blk.header.core_bytes, blk.header.sig, _u32(len(blk.txs))]
    for tx in blk.txs:
        wire = tx_to_wire(tx)
        parts.append(_u32(len(wire)))
        parts.append(wire)
    return b"".join(parts)


def block_from_wire(data: bytes) -> Block:
    r = _Reader(data)
    core = _Reader(r.take(_HEADER_CORE_LEN))
    header = BlockHeader(
        height=core.u64(), prev_block=core.take(DIGEST_LEN),
        tx_root=core.take(DIGEST_LEN), timestamp=core.u64(),
        generator_pub=core.take(crypto.PUBKEY_LEN),
        prf=core.take(DIGEST_LEN), base_target=core.u64(),
        sig=r.take(crypto.SIG_LEN))
    ntx = r.u32()
    if ntx > MAX_TXS_PER_BLOCK:
        raise LedgerError("BAD_ENCODING", "transaction count")
    txs = []
    for _ in range(ntx):
        tlen = r.u32()
        txs.append(tx_from_wire(r.take(tlen)))
    if not r.done():
        raise LedgerError("BAD_ENCODING", "trailing bytes after block")
    return Block(header, tuple(txs))


def genesis_prf(header: BlockHeader) -> bytes:
    # no key signs genesis; bind every header field into its prf instead
    unsigned = replace(header, prf=ZERO_DIGEST)
    return sha256(b"ctsim-genesis" + unsigned.core_bytes)


def make_genesis(register_txs, base_target: int, interval_ms: int = 300,
                 slot_ms: int = 100, k_bits: int = 64,
                 time_cap: int = 64) -> Block:
    txs = tuple(register_txs)
    header = BlockHeader(height=0, prev_block=ZERO_DIGEST,
                         tx_root=compute_tx_root(txs), timestamp=0,
                         generator_pub=pack_genesis_pub(interval_ms, slot_ms,
                                                        k_bits, time_cap),
                         prf=ZERO_DIGEST, base_target=base_target,
                         sig=GENESIS_SIG)
    return Block(replace(header, prf=genesis_prf(header)), txs)


def check_genesis_shape(blk: Block) -> str | None:
    """Invariant checks for height 0; every field is pinned or bound."""
    h = blk.header
    if h.height != 0 or h.prev_block != ZERO_DIGEST:
        return "BAD_LINK"
    if h.timestamp != 0:
        return "TIMESTAMP"
    if unpack_genesis_pub(h.generator_pub) is None or h.sig != GENESIS_SIG:
        return "BAD_SIGNATURE"
    if h.tx_root != compute_tx_root(blk.txs):
        return "BAD_TX_ROOT"
    if h.prf != genesis_prf(h):
        return "PRF_MISMATCH"
    if not all(tx.kind == TxKind.REGISTER for tx in blk.txs):
        return "BAD_ENCODING"
    return None


# ===========================================================================
# Chain state
# ===========================================================================

@dataclass(frozen=True)
class RegInfo:
    address: bytes
    pub: bytes
    weight_sat: int
    weight_auth: int
    stake: int              # declared; consensus normalizes over the total
    height: int


@dataclass(frozen=True)
class GenRecord:
    """Per-generator production history (consensus clock source)."""
    last_height: int
    last_timestamp: int
    prf_old: bytes


class Chain:
    """A node's canonical replica: block list plus uniqueness indices."""

    def __init__(self, genesis: Block):
        bad = check_genesis_shape(genesis)
        if bad:
            raise LedgerError(bad, "genesis")
        self.blocks: list[Block] = []
        self.token_index: dict[bytes, tuple[int, bytes]] = {}
        self.nonce_index: set[tuple[bytes, int]] = set()
        self.txids: set[bytes] = set()
        self.feedback_seen: set[tuple[bytes, bytes]] = set()
        self.registered: dict[bytes, RegInfo] = {}
        self.gen_records: dict[bytes, GenRecord] = {}
        self.cum_trust: list[int] = []
        self._append(genesis, 0)

    # -- views ------------------------------------------------------------

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    @property
    def genesis(self) -> Block:
        return self.blocks[0]

    @property
    def base_target(self) -> int:
        return self.genesis.header.base_target

    def lookup_token(self, token_id: bytes) -> AccessToken | None:
        loc = self.token_index.get(token_id)
        if loc is None:
            return None
        height, txid = loc
        for tx in self.blocks[height].txs:
            if tx.txid == txid:
                return tx.outputs[0].token
        return None

    def total_declared_stake(self) -> int:
        return sum(r.stake for r in self.registered.values())

    def gen_record(self, address: bytes) -> GenRecord:
        rec = self.gen_records.get(address)
        if rec is not None:
            return rec
        # never generated: clock runs from genesis, prf chain from its seed
        return GenRecord(0, self.genesis.header.timestamp,
                         sha256(self.genesis.h_blk + address))

    def clone(self) -> "Chain":
        other = object.__new__(Chain)
        other.blocks = list(self.blocks)
        other.token_index = dict(self.token_index)
        other.nonce_index = set(self.nonce_index)
        other.txids = set(self.txids)
        other.feedback_seen = set(self.feedback_seen)
        other.registered = dict(self.registered)
        other.gen_records = dict(self.gen_records)
        other.cum_trust = list(self.cum_trust)
        return other

    # -- transaction validation -------------------------------------------

    def validate_tx(self, tx: Transaction, stage: "_Stage | None" = None) -> str | None:
        """Reason code for rejection, or None if the tx is acceptable."""
        if sha256(canonical_serialize(tx)) != tx.txid:
            return "BAD_TXID"
        if tx.txid in self.txids or (stage and tx.txid in stage.txids):
            return "DUPLICATE_TX"
        if not crypto.verify(tx.sender_pub, tx.txid, tx.sig):
            return "BAD_SIGNATURE"
        if tx.kind == TxKind.TOKEN:
            return self._validate_token_tx(tx, stage)
        if tx.kind == TxKind.FEEDBACK:
            return self._validate_feedback_tx(tx, stage)
        return self._validate_register_tx(tx, stage)

    def _registered(self, addr: bytes, stage: "_Stage | None") -> bool:
        return addr in self.registered or (stage is not None
                                           and addr in stage.registered)

    def _validate_token_tx(self, tx, stage) -> str | None:
        if len(tx.outputs) != 1 or not tx.inputs:
            return "TOKEN_SHAPE"
        if any(i.index != n for n, i in enumerate(tx.inputs)) or tx.outputs[0].index != 0:
            return "TOKEN_SHAPE"
        if not self._registered(tx.sender, stage):
            return "UNKNOWN_ISSUER"
        out = tx.outputs[0]
        token = out.token
        if token.issuer != tx.sender:
            return "TOKEN_SHAPE"
        if token.audience != out.recipient:
            return "AUDIENCE_MISMATCH"
        if token.expires_at <= token.issued_at:
            return "EXPIRY"
        tid = token.token_id
        if tid in self.token_index or (stage and tid in stage.tokens):
            return "DUPLICATE_TOKEN"
        nkey = (token.issuer, token.nonce)
        if nkey in self.nonce_index or (stage and nkey in stage.nonces):
            return "DUPLICATE_NONCE"
        return None

    def _validate_feedback_tx(self, tx, stage) -> str | None:
        if tx.inputs or tx.outputs:
            return "BAD_ENCODING"
        try:
            fb = parse_feedback(tx.payload)
        except LedgerError:
            return "BAD_ENCODING"
        if not self._registered(tx.sender, stage):
            return "UNKNOWN_RATER"
        if fb.rater != tx.sender:
            return "RATER_MISMATCH"
        if fb.label > 9:
            return "LABEL_RANGE"
        token = self.lookup_token(fb.token_id)
        if token is None and stage is not None:
            token = stage.tokens.get(fb.token_id)
        if token is None:
            return "UNKNOWN_TOKEN"
        if fb.user != token.pseudonym:
            return "NOT_PARTICIPANT"
        if fb.label <= 4:
            # credibility scale: the serving foreign provider rates the user
            if fb.rater != token.audience or fb.subject != token.issuer:
                return "NOT_PARTICIPANT"
        else:
            # satisfaction scale: the home provider relays the user's rating
            if fb.rater != token.issuer or fb.subject != token.audience:
                return "NOT_PARTICIPANT"
        fkey = (fb.token_id, fb.rater)
        if fkey in self.feedback_seen or (stage and fkey in stage.feedback):
            return "DUPLICATE_FEEDBACK"
        return None

    def _validate_register_tx(self, tx, stage) -> str | None:
        if tx.inputs or tx.outputs:
            return "BAD_ENCODING"
        try:
            reg = parse_register(tx.payload)
        except LedgerError:
            return "BAD_ENCODING"
        if self._registered(tx.sender, stage):
            return "DUPLICATE_CSP"
        if not (0 <= reg.weight_sat <= ONE and 0 <= reg.weight_auth <= ONE):
            return "WEIGHT_RANGE"
        if reg.weight_sat == 0 and reg.weight_auth == 0:
            return "WEIGHT_ZERO"
        if not 0 <= reg.stake <= ONE:
            return "STAKE_RANGE"
        return None

    # -- block application -------------------------------------------------

    def apply_block(self, blk: Block, generator_trust: int = 0) -> None:
        """Extend the chain; atomic, raises LedgerError with the reason.

        Consensus-level header checks (signature, prf, eligibility,
        timestamps) belong to the caller; this enforces linkage, tx_root,
        and per-transaction validity against the staged state.
        """
        if blk.header.prev_block != self.tip.h_blk or blk.height != self.height + 1:
            raise LedgerError("BAD_LINK",
                              f"height {blk.height} onto {self.height}")
        if blk.header.tx_root != compute_tx_root(blk.txs):
            raise LedgerError("BAD_TX_ROOT", f"height {blk.height}")
        stage = _Stage()
        for tx in blk.txs:
            reason = self.validate_tx(tx, stage)
            if reason:
                raise LedgerError(reason, f"tx {tx.txid.hex()[:16]}",
                                  txid=tx.txid)
            stage.absorb(tx, blk.height)
        self._append(blk, generator_trust)

    def _append(self, blk: Block, generator_trust: int) -> None:
        height = blk.height
        for tx in blk.txs:
            self.txids.add(tx.txid)
            if tx.kind == TxKind.TOKEN:
                token = tx.outputs[0].token
                self.token_index[token.token_id] = (height, tx.txid)
                self.nonce_index.add((token.issuer, token.nonce))
            elif tx.kind == TxKind.FEEDBACK:
                fb = parse_feedback(tx.payload)
                self.feedback_seen.add((fb.token_id, fb.rater))
            else:
                reg = parse_register(tx.payload)
                self.registered[tx.sender] = RegInfo(
                    tx.sender, tx.sender_pub, reg.weight_sat,
                    reg.weight_auth, reg.stake, height)
        if height > 0:
            addr = crypto.address_of(blk.header.generator_pub)
            self.gen_records[addr] = GenRecord(height, blk.header.timestamp,
                                              blk.header.prf)
        self.blocks.append(blk)
        prev = self.cum_trust[-1] if self.cum_trust else 0
        self.cum_trust.append(prev + generator_trust)


class _Stage:
    """Uncommitted index additions while validating a block's tx sequence."""

    def __init__(self):
        self.txids: set[bytes] = set()
        self.tokens: dict[bytes, AccessToken] = {}
        self.nonces: set[tuple[bytes, int]] = set()
        self.feedback: set[tuple[bytes, bytes]] = set()
        self.registered: set[bytes] = set()

    def absorb(self, tx: Transaction, height: int) -> None:
        self.txids.add(tx.txid)
        if tx.kind == TxKind.TOKEN:
            token = tx.outputs[0].token
            self.tokens[token.token_id] = token
            self.nonces.add((token.issuer, token.nonce))
        elif tx.kind == TxKind.FEEDBACK:
            fb = parse_feedback(tx.payload)
            self.feedback.add((fb.token_id, fb.rater))
        else:
            self.registered.add(tx.sender)


def validate_transaction(tx: Transaction, chain: Chain) -> tuple[bool, str | None]:
    reason = chain.validate_tx(tx)
    return reason is None, reason


# ===========================================================================
# Ledger file
# ===========================================================================

def write_ledger(path, blocks) -> None:
    with open(path, "wb") as fh:
        fh.write(LEDGER_MAGIC)
        for blk in blocks:
            wire = ser_block(blk)
            fh.write(_u32(len(wire)))
            fh.write(wire)


def read_ledger(path) -> list[Block]:
    """Parse a ledger file strictly; LedgerError on any framing defect."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(LEDGER_MAGIC):
        raise LedgerError("BAD_ENCODING", "bad magic")
    r = _Reader(data[len(LEDGER_MAGIC):])
    blocks = []
    while not r.done():
        blen = r.u32()
        if blen > MAX_BLOCK_LEN:
            raise LedgerError("BAD_ENCODING", "block length")
        blocks.append(block_from_wire(r.take(blen)))
    if not blocks:
        raise LedgerError("BAD_ENCODING", "empty ledger")
    return blocks
