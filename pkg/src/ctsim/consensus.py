"""Trust-weighted proof-of-stake: eligibility, generation, validation, forks.

A provider's proof of eligibility is a hash chain through its own generated
blocks: prf = H(pub || prf_old), re-rolled only when the provider actually
produces a block. The k-bit prefix of the candidate prf, read as a fraction
of 2^k, is compared against a per-provider difficulty

    d_csp = d * time_elapsed * stake_share * trust

which grows linearly while the provider waits, so every active provider
eventually crosses its own threshold. Comparisons happen on exact integers:
prefix * 10^12 < d_csp_fp * 2^k, making verdicts identical on every node.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

from . import crypto
from .crypto import KeyPair, sha256
from .fixedpoint import ONE, fp_mul
from .ledger import Block, BlockHeader, Chain, compute_tx_root
from .trust import BOOTSTRAP_TRUST

__all__ = [
    "ConsensusParams",
    "CspConsensusState",
    "prefix_value",
    "candidate_prf",
    "csp_difficulty",
    "elapsed_intervals",
    "check_eligibility",
    "generate_block",
    "validate_block",
    "resolve",
    "calibrate_base_target",
    "consensus_trust",
]


@dataclass(frozen=True)
class ConsensusParams:
    base_target: int                  # fixed-point d, 0 < d < 1
    k_bits: int = 64
    block_interval_ms: int = 300
    slot_ms: int = 100
    time_cap_intervals: int = 64

    def __post_init__(self):
        if not 0 < self.base_target < ONE:
            raise ValueError("base_target must lie strictly inside (0, 1)")
        if self.k_bits not in (64, 128):
            raise ValueError("k_bits must be 64 or 128")


@dataclass(frozen=True)
class CspConsensusState:
    """Per-provider view needed for an eligibility decision."""
    account: bytes                    # staking account address
    stake: int                        # normalized share, fixed-point
    last_generated_height: int
    last_generated_ts: int
    prf_old: bytes


def prefix_value(prf: bytes, k_bits: int) -> Fraction:
    """First k bits of the digest as an exact value in [0, 1)."""
    return Fraction(_prefix_int(prf, k_bits), 1 << k_bits)


def _prefix_int(prf: bytes, k_bits: int) -> int:
    return int.from_bytes(prf[:k_bits // 8], "big")


def candidate_prf(pub: bytes, prf_old: bytes) -> bytes:
    return sha256(pub + prf_old)


def csp_difficulty(params: ConsensusParams, time_elapsed: int, stake: int,
                   trust: int) -> int:
    """d * time * stake * trust, fixed-point, clamped below 1."""
    d = fp_mul(fp_mul(fp_mul(params.base_target, time_elapsed), stake), trust)
    if d < 0:
        return 0
    return min(d, ONE - 1)


def elapsed_intervals(now_ms: int, last_ms: int, params: ConsensusParams) -> int:
    """Block intervals since this provider's last generation, fixed-point.

    Measured from genesis for providers that have never generated; capped so
    a long-dormant provider cannot accumulate unbounded priority.
    """
    raw = (now_ms - last_ms) * ONE // params.block_interval_ms
    cap = params.time_cap_intervals * ONE
    return min(max(raw, 0), cap)


def _eligible(prf: bytes, d_csp: int, k_bits: int) -> bool:
    return _prefix_int(prf, k_bits) * ONE < d_csp << k_bits


def check_eligibility(h_blk: bytes, params: ConsensusParams,
                      state: CspConsensusState, trust: int, pub: bytes,
                      now_ms: int) -> bool:
    """Would this provider lead the block after h_blk, as of now?"""
    prf = candidate_prf(pub, state.prf_old)
    time_elapsed = elapsed_intervals(now_ms, state.last_generated_ts, params)
    d_csp = csp_difficulty(params, time_elapsed, state.stake, trust)
    return _eligible(prf, d_csp, params.k_bits)


def generate_block(blk: Block, params: ConsensusParams, keys: KeyPair,
                   state: CspConsensusState,
                   trust: int) -> tuple[bytes, bytes] | None:
    """Complete a candidate block if eligible; empty result otherwise.

    The candidate carries every header field except prf and sig; the
    timestamp doubles as the eligibility clock reading.
    """
    if not check_eligibility(blk.header.prev_block, params, state, trust,
                             keys.pub_bytes, blk.header.timestamp):
        return None
    prf = candidate_prf(keys.pub_bytes, state.prf_old)
    header = replace(blk.header, prf=prf)
    sig = crypto.sign(keys, header.h_blk)
    return prf, sig


def seal_block(blk: Block, prf: bytes, sig: bytes) -> Block:
    return Block(replace(blk.header, prf=prf, sig=sig), blk.txs)


def consensus_state_at(chain: Chain, address: bytes) -> CspConsensusState:
    """Stake share and generation history for one provider at a tip."""
    reg = chain.registered.get(address)
    total = chain.total_declared_stake()
    share = reg.stake * ONE // total if reg and total > 0 else 0
    rec = chain.gen_record(address)
    return CspConsensusState(address, share, rec.last_height,
                             rec.last_timestamp, rec.prf_old)


def validate_block(blk: Block, params: ConsensusParams, parent_chain: Chain,
                   trust_of) -> str | None:
    """Reason a block fails consensus checks against its parent, or None.

    trust_of maps a provider address to its consensus trust at the parent
    state (bootstrap and overrides already applied by the caller).
    """
    parent = parent_chain.tip
    h = blk.header
    if h.prev_block != parent.h_blk or h.height != parent.height + 1:
        return "BAD_LINK"
    if h.timestamp <= parent.header.timestamp:
        return "TIMESTAMP"
    if h.base_target != parent_chain.base_target:
        return "BASE_TARGET"
    if h.tx_root != compute_tx_root(blk.txs):
        return "BAD_TX_ROOT"
    generator = crypto.address_of(h.generator_pub)
    if generator not in parent_chain.registered:
        return "UNKNOWN_GENERATOR"
    state = consensus_state_at(parent_chain, generator)
    if h.prf != candidate_prf(h.generator_pub, state.prf_old):
        return "PRF_MISMATCH"
    time_elapsed = elapsed_intervals(h.timestamp, state.last_generated_ts,
                                     params)
    d_csp = csp_difficulty(params, time_elapsed, state.stake,
                           trust_of(generator))
    if not _eligible(h.prf, d_csp, params.k_bits):
        return "NOT_ELIGIBLE"
    if not crypto.verify(h.generator_pub, h.h_blk, h.sig):
        return "BAD_HEADER_SIG"
    return None


def resolve(chains: list[Chain]) -> Chain:
    """Pick the unique winner: height, then accumulated generator trust,
    then lexicographically smallest tip digest. Total order, so every node
    lands on the same tip given the same candidate set."""
    if not chains:
        raise ValueError("no fork tips to resolve")
    best = max((c.height, c.cum_trust[-1]) for c in chains)
    winners = [c for c in chains if (c.height, c.cum_trust[-1]) == best]
    return min(winners, key=lambda c: c.tip.h_blk)


def resolve_key(chain: Chain) -> tuple[int, int, bytes]:
    """Sort key under which resolve()'s winner is the maximum."""
    tip = chain.tip.h_blk
    return (chain.height, chain.cum_trust[-1],
            bytes(255 - b for b in tip))


def consensus_trust(trust_state, address: bytes, overrides=None) -> int:
    """Trust factor fed into difficulty: override, else computed, else 0.5.

    A provider nobody has interacted with yet has a computed trust of 0,
    which would bar it from generation forever; such providers run at the
    bootstrap value until history exists. Overrides are world-level policy
    (used to pin a node's trust for exclusion experiments).
    """
    if overrides:
        pinned = overrides.get(address)
        if pinned is not None:
            return pinned
    if not trust_state.has_history(address):
        return BOOTSTRAP_TRUST
    return trust_state.trust_of(address)


def calibrate_base_target(stakes: list[int], trusts: list[int],
                          params_interval_ms: int | None = None) -> int:
    """Pick d so the network produces about one block per target interval.

    Each provider's prefix draw is uniform; with difficulty growing
    linearly in elapsed time, its mean spacing is E[prefix]/(d*s*t) =
    1/(2*d*s*t) intervals, so the network rate is 2*d*sum(s*t) per
    interval. Setting that to one block per interval gives
    d = 1 / (2 * sum(stake_i * trust_i)), clamped inside (0, 1).
    """
    weighted = sum(fp_mul(s, t) for s, t in zip(stakes, trusts))
    if weighted <= 0:
        raise ValueError("no provider can ever generate (all stake*trust zero)")
    d = ONE * ONE // (2 * weighted)
    return max(1, min(d, ONE - 1))
