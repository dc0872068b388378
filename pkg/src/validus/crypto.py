"""Signatures, emulated (k, n)-threshold signatures and hashing.

Two modes share one interface:

* ``real`` signs with Ed25519.
* ``fast`` tags messages with HMAC-SHA256 under a per-process secret.  The
  "public" verifier holds that secret, so this mode is only honest about
  scheduling inside the simulator, where automata never see foreign keys.
  It is not adversary-proof.

A threshold signature is emulated as a canonical set of k partial signatures
over one digest.  Metrics count it as a single word regardless.
"""

from __future__ import annotations

import hashlib
import hmac
import json
from dataclasses import dataclass
from typing import Iterable, Mapping

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .errors import DuplicateSigner, InsufficientPartials, MixedDigests

REAL = "real"
FAST = "fast"
MODES = (REAL, FAST)

Digest = bytes


def hash_bytes(data: bytes) -> Digest:
    return hashlib.sha256(data).digest()


def _canon(obj):
    if isinstance(obj, (bytes, bytearray)):
        return {"b": bytes(obj).hex()}
    if isinstance(obj, (list, tuple)):
        return [_canon(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    return obj


def encode(obj) -> bytes:
    """Canonical byte encoding of nested tuples/lists/dicts of scalars and bytes."""
    return json.dumps(_canon(obj), sort_keys=True, separators=(",", ":")).encode()


def digest_of(obj) -> Digest:
    return hash_bytes(encode(obj))


@dataclass(frozen=True)
class PublicKey:
    process: int
    mode: str
    material: bytes

    def verify(self, message: bytes, sig_bytes: bytes) -> bool:
        if self.mode == FAST:
            expected = hmac.new(self.material, message, hashlib.sha256).digest()
            return hmac.compare_digest(expected, sig_bytes)
        try:
            Ed25519PublicKey.from_public_bytes(self.material).verify(sig_bytes, message)
            return True
        except (InvalidSignature, ValueError):
            return False


@dataclass(frozen=True)
class KeyPair:
    process: int
    mode: str
    secret: bytes
    public: PublicKey

    def __repr__(self):
        return f"KeyPair(P{self.process}, {self.mode})"


@dataclass(frozen=True)
class Signature:
    signer: int
    bytes: bytes

    def __repr__(self):
        return f"Sig(P{self.signer}:{self.bytes[:4].hex()})"


@dataclass(frozen=True)
class PartialSignature:
    signer: int
    digest: Digest
    bytes: bytes


@dataclass(frozen=True)
class ThresholdSignature:
    digest: Digest
    k: int
    partials: tuple

    @property
    def signers(self) -> tuple:
        return tuple(p.signer for p in self.partials)

    def __repr__(self):
        return f"TSig({self.digest[:4].hex()}, k={self.k}, signers={list(self.signers)})"


def keypair(process: int, seed: int, mode: str = FAST) -> KeyPair:
    if mode not in MODES:
        raise ValueError(f"unknown crypto mode {mode!r}")
    secret = hashlib.sha256(f"validus-key:{seed}:{process}".encode()).digest()
    if mode == FAST:
        return KeyPair(process, mode, secret, PublicKey(process, mode, secret))
    sk = Ed25519PrivateKey.from_private_bytes(secret)
    pk = sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    return KeyPair(process, mode, secret, PublicKey(process, mode, pk))


def sign(message: bytes, key: KeyPair) -> Signature:
    if key.mode == FAST:
        tag = hmac.new(key.secret, message, hashlib.sha256).digest()
    else:
        tag = Ed25519PrivateKey.from_private_bytes(key.secret).sign(message)
    return Signature(key.process, tag)


def verify_sig(message: bytes, sig: Signature, public: PublicKey) -> bool:
    if not isinstance(sig, Signature) or sig.signer != public.process:
        return False
    return public.verify(message, sig.bytes)


def partial_sign(digest: Digest, key: KeyPair) -> PartialSignature:
    return PartialSignature(key.process, digest, sign(b"tsig:" + digest, key).bytes)


def verify_partial(partial: PartialSignature, publics: Mapping[int, PublicKey]) -> bool:
    pk = publics.get(partial.signer) if isinstance(partial, PartialSignature) else None
    return pk is not None and pk.verify(b"tsig:" + partial.digest, partial.bytes)


def combine(partials: Iterable[PartialSignature], k: int) -> ThresholdSignature:
    """Aggregate k partials over one digest; extra partials beyond k are dropped."""
    partials = list(partials)
    digests = {p.digest for p in partials}
    if len(digests) > 1:
        raise MixedDigests(f"{len(digests)} distinct digests among partials")
    signers = [p.signer for p in partials]
    if len(set(signers)) != len(signers):
        raise DuplicateSigner(f"duplicate signers in {sorted(signers)}")
    if len(partials) < k:
        raise InsufficientPartials(f"{len(partials)} partials, need {k}")
    chosen = tuple(sorted(partials, key=lambda p: p.signer)[:k])
    return ThresholdSignature(chosen[0].digest, k, chosen)


def verify_threshold(digest: Digest, tsig: ThresholdSignature,
                     publics: Mapping[int, PublicKey], k: int) -> bool:
    if not isinstance(tsig, ThresholdSignature) or tsig.digest != digest or tsig.k != k:
        return False
    signers = tsig.signers
    if len(signers) != k or len(set(signers)) != k:
        return False
    return all(p.digest == digest and verify_partial(p, publics) for p in tsig.partials)


class Keyring:
    """Key material for one scenario, derived from the scenario seed."""

    def __init__(self, n: int, seed: int, mode: str = FAST):
        self.n = n
        self.mode = mode
        self.keys = {i: keypair(i, seed, mode) for i in range(1, n + 1)}
        self.publics = {i: kp.public for i, kp in self.keys.items()}
        self._seen: set = set()

    def verify(self, message: bytes, sig: Signature) -> bool:
        pk = self.publics.get(getattr(sig, "signer", None))
        return pk is not None and verify_sig(message, sig, pk)

    def verify_threshold(self, digest: Digest, tsig: ThresholdSignature, k: int) -> bool:
        # verified aggregates are memoized; they are immutable values
        memo = (digest, tsig, k)
        try:
            if memo in self._seen:
                return True
        except TypeError:
            return False
        ok = verify_threshold(digest, tsig, self.publics, k)
        if ok:
            self._seen.add(memo)
        return ok
