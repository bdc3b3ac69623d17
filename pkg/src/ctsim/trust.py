"""Pairwise reputation: credibility, authentication, satisfaction, trust.

Three score families are kept per ordered pair, each updated by its own
recurrence when a feedback transaction lands:

  cred(F, u)   how far foreign provider F trusts visiting user u;
               starts at 1, updated as (trust(F) * rating + prev) / 2
  auth(F, H)   F's view of home provider H's vetting quality; starts at 0,
               updated as (rating + prev) / 2 with the same bucketed
               credibility rating F just gave H's user
  sat(H, F)    service satisfaction H's users report about F; starts at 0,
               blended as cred(u) * rating + (1 - cred(u)) * prev

Aggregates are arithmetic means over pairs that have at least one recorded
interaction; untouched subjects keep their initial value. A provider's
overall trust combines its satisfaction and authentication aggregates under
globally averaged weights. All arithmetic is fixed-point (see fixedpoint).
"""

from __future__ import annotations

from enum import IntEnum

from . import ledger
from .fixedpoint import ONE, fp_mul
from .ledger import Chain, FeedbackData, TxKind

# ===========================================================================
# Feedback labels and buckets
# ===========================================================================

class CredLabel(IntEnum):
    VERY_BAD = 0
    BAD = 1
    MEDIUM = 2
    GOOD = 3
    EXCELLENT = 4


class SatLabel(IntEnum):
    FULLY_DISSATISFIED = 5
    DISSATISFIED = 6
    PARTIALLY_SATISFIED = 7
    SATISFIED = 8
    FULLY_SATISFIED = 9


# credibility buckets are even fifths; satisfaction buckets are uneven
# (breaks at 0.20 / 0.45 / 0.60 / 0.80), both mapped to their midpoints
_BUCKET_VALUE = {
    CredLabel.VERY_BAD: ONE // 10,
    CredLabel.BAD: 3 * ONE // 10,
    CredLabel.MEDIUM: ONE // 2,
    CredLabel.GOOD: 7 * ONE // 10,
    CredLabel.EXCELLENT: 9 * ONE // 10,
    SatLabel.FULLY_DISSATISFIED: ONE // 10,
    SatLabel.DISSATISFIED: 325 * ONE // 1000,
    SatLabel.PARTIALLY_SATISFIED: 525 * ONE // 1000,
    SatLabel.SATISFIED: 7 * ONE // 10,
    SatLabel.FULLY_SATISFIED: 9 * ONE // 10,
}

INITIAL_CRED = ONE
INITIAL_AUTH = 0
INITIAL_SAT = 0

BOOTSTRAP_TRUST = ONE // 2  # consensus-only default for providers with no history


def bucketize(label: int) -> int:
    """Label code -> canonical fixed-point bucket midpoint."""
    code = CredLabel(label) if label <= 4 else SatLabel(label)
    return _BUCKET_VALUE[code]


def is_cred_label(label: int) -> bool:
    return label <= 4


# ===========================================================================
# Update rules
# ===========================================================================

def cred_update(prev: int, trust_f: int, cred_curr: int) -> int:
    return (fp_mul(trust_f, cred_curr) + prev) // 2


def auth_update(prev: int, auth_curr: int) -> int:
    return (auth_curr + prev) // 2


def auth_curr_from_feedback(cred_curr_of_user: int) -> int:
    # the rating a foreign provider gives the visiting user doubles as the
    # authentication observation about that user's home provider
    return cred_curr_of_user


def sat_update(prev: int, cred_u: int, sat_curr: int) -> int:
    return fp_mul(cred_u, sat_curr) + fp_mul(ONE - cred_u, prev)


def overall_trust(sat: int, auth: int, weight_sat: int, weight_auth: int) -> int:
    total = weight_sat + weight_auth
    if total == 0:
        raise ValueError("weight sum is zero")
    return (weight_sat * sat + weight_auth * auth) // total


# ===========================================================================
# State
# ===========================================================================

class TrustState:
    """All pairwise scores plus registration-declared weights.

    Mutation happens through register() and apply_feedback() only; the
    per-provider trust cache is dropped on every mutation and rebuilt
    lazily, so cached values always equal recomputation.
    """

    def __init__(self):
        self.cred: dict[tuple[bytes, bytes], int] = {}
        self.auth: dict[tuple[bytes, bytes], int] = {}
        self.sat: dict[tuple[bytes, bytes], int] = {}
        self.counts: dict[tuple[str, bytes, bytes], int] = {}
        self.declared: dict[bytes, tuple[int, int]] = {}
        self.epoch = 0
        self._trust_cache: dict[bytes, int] = {}

    # -- registration and weights -----------------------------------------

    def register(self, address: bytes, weight_sat: int, weight_auth: int) -> None:
        self.declared[address] = (weight_sat, weight_auth)
        self._trust_cache.clear()

    @property
    def csp_count(self) -> int:
        return len(self.declared)

    def global_weights(self) -> tuple[int, int]:
        """Component-wise means of every registrant's declared weights."""
        if not self.declared:
            raise ValueError("no registered providers")
        n = len(self.declared)
        w_sat = sum(w for w, _ in self.declared.values()) // n
        w_auth = sum(w for _, w in self.declared.values()) // n
        return w_sat, w_auth

    # -- aggregates --------------------------------------------------------

    def cred_user(self, user: bytes) -> int:
        vals = [v for (f, u), v in self.cred.items() if u == user]
        if not vals:
            return INITIAL_CRED
        return sum(vals) // len(vals)

    def auth_score(self, home: bytes) -> int:
        vals = [v for (f, h), v in self.auth.items() if h == home]
        if not vals:
            return INITIAL_AUTH
        return sum(vals) // len(vals)

    def sat_score(self, foreign: bytes) -> int:
        vals = [v for (h, f), v in self.sat.items() if f == foreign]
        if not vals:
            return INITIAL_SAT
        return sum(vals) // len(vals)

    def trust_of(self, csp: bytes) -> int:
        cached = self._trust_cache.get(csp)
        if cached is not None:
            return cached
        w_sat, w_auth = self.global_weights()
        value = overall_trust(self.sat_score(csp), self.auth_score(csp),
                              w_sat, w_auth)
        self._trust_cache[csp] = value
        return value

    def has_history(self, csp: bytes) -> bool:
        """True once any feedback has touched this provider in either role."""
        return any(h == csp for _, h in self.auth) or any(f == csp for _, f in self.sat)

    # -- the fold ----------------------------------------------------------

    def apply_feedback(self, fb: FeedbackData) -> None:
        """Fold one on-chain feedback record; order is cred, auth, sat."""
        value = bucketize(fb.label)
        if is_cred_label(fb.label):
            foreign, home, user = fb.rater, fb.subject, fb.user
            trust_f = self.trust_of(foreign)
            prev = self.cred.get((foreign, user), INITIAL_CRED)
            self.cred[(foreign, user)] = cred_update(prev, trust_f, value)
            self._bump("cred", foreign, user)
            prev_a = self.auth.get((foreign, home), INITIAL_AUTH)
            self.auth[(foreign, home)] = auth_update(
                prev_a, auth_curr_from_feedback(value))
            self._bump("auth", foreign, home)
        else:
            home, foreign, user = fb.rater, fb.subject, fb.user
            cred_u = self.cred_user(user)
            prev = self.sat.get((home, foreign), INITIAL_SAT)
            self.sat[(home, foreign)] = sat_update(prev, cred_u, value)
            self._bump("sat", home, foreign)
        self._trust_cache.clear()

    def _bump(self, family: str, a: bytes, b: bytes) -> None:
        key = (family, a, b)
        self.counts[key] = self.counts.get(key, 0) + 1

    def copy(self) -> "TrustState":
        other = TrustState()
        other.cred = dict(self.cred)
        other.auth = dict(self.auth)
        other.sat = dict(self.sat)
        other.counts = dict(self.counts)
        other.declared = dict(self.declared)
        other.epoch = self.epoch
        return other

    # -- comparison --------------------------------------------------------

    def fingerprint(self) -> tuple:
        """Canonical immutable image of the whole state, for exact compares."""
        return (tuple(sorted(self.cred.items())),
                tuple(sorted(self.auth.items())),
                tuple(sorted(self.sat.items())),
                tuple(sorted(self.counts.items())),
                tuple(sorted(self.declared.items())),
                self.epoch)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrustState):
            return NotImplemented
        return self.fingerprint() == other.fingerprint()

    def __hash__(self):
        return hash(self.fingerprint())


def fold_block(state: TrustState, blk: ledger.Block) -> None:
    """Apply one block's registrations and feedback in transaction order."""
    for tx in blk.txs:
        if tx.kind == TxKind.REGISTER:
            reg = ledger.parse_register(tx.payload)
            state.register(tx.sender, reg.weight_sat, reg.weight_auth)
        elif tx.kind == TxKind.FEEDBACK:
            state.apply_feedback(ledger.parse_feedback(tx.payload))


def replay_from_chain(chain: Chain) -> TrustState:
    """Rebuild the unique trust state a canonical chain implies."""
    state = TrustState()
    for blk in chain.blocks:
        fold_block(state, blk)
    return state
