"""Digests, signatures, and Merkle roots.

Two signature backends live behind the same interface:

* ``MacAuthenticator`` -- HMAC-SHA256 with per-identity keys derived from a
  shared master secret.  Fast and reproducible; the default for simulation.
* ``Ed25519Authenticator`` -- real asymmetric signatures (deterministic per
  RFC 8032), for runs where MAC trust assumptions are not acceptable.

Identities are strings like ``"node:3"`` or ``"client:17"`` so node and
client key spaces cannot collide.
"""

from __future__ import annotations

import hashlib
import hmac

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey

DIGEST_SIZE = 32


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def node_identity(node: int) -> str:
    return f"node:{node}"


def client_identity(client: int) -> str:
    return f"client:{client}"


class MacAuthenticator:
    """Keyed-MAC signing: verification recomputes the tag.

    Every party derives every identity's key from the master secret, so a
    scripted adversary could forge; the simulator's adversaries are
    scripted not to, which keeps runs fast and reproducible.
    """

    scheme = "mac"

    def __init__(self, master_secret: bytes):
        self._master = master_secret
        self._keys: dict[str, bytes] = {}

    def _key(self, identity: str) -> bytes:
        key = self._keys.get(identity)
        if key is None:
            key = hashlib.sha256(self._master + b"/" + identity.encode()).digest()
            self._keys[identity] = key
        return key

    def sign(self, identity: str, payload: bytes) -> bytes:
        return hmac.new(self._key(identity), payload, hashlib.sha256).digest()

    def verify(self, identity: str, payload: bytes, sig: bytes) -> bool:
        return hmac.compare_digest(self.sign(identity, payload), sig)


class Ed25519Authenticator:
    """Asymmetric signing with keys derived deterministically from a seed."""

    scheme = "ed25519"

    def __init__(self, master_secret: bytes):
        self._master = master_secret
        self._private: dict[str, Ed25519PrivateKey] = {}
        self._public: dict[str, object] = {}

    def _priv(self, identity: str) -> Ed25519PrivateKey:
        key = self._private.get(identity)
        if key is None:
            seed = hashlib.sha256(self._master + b"/" + identity.encode()).digest()
            key = Ed25519PrivateKey.from_private_bytes(seed)
            self._private[identity] = key
        return key

    def sign(self, identity: str, payload: bytes) -> bytes:
        return self._priv(identity).sign(payload)

    def verify(self, identity: str, payload: bytes, sig: bytes) -> bool:
        pub = self._public.get(identity)
        if pub is None:
            pub = self._priv(identity).public_key()
            self._public[identity] = pub
        try:
            pub.verify(sig, payload)  # type: ignore[attr-defined]
            return True
        except InvalidSignature:
            return False


def make_authenticator(scheme: str, master_secret: bytes):
    if scheme == "mac":
        return MacAuthenticator(master_secret)
    if scheme == "ed25519":
        return Ed25519Authenticator(master_secret)
    raise ValueError(f"unknown signature scheme {scheme!r}")


_EMPTY_TREE = digest(b"empty-tree")


def merkle_root(leaves: list[bytes]) -> bytes:
    """Binary Merkle root over leaf digests; an odd node is duplicated
    upward.  The empty tree has a fixed sentinel root."""
    if not leaves:
        return _EMPTY_TREE
    level = [digest(b"\x00" + leaf) for leaf in leaves]
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [
            digest(b"\x01" + level[i] + level[i + 1]) for i in range(0, len(level), 2)
        ]
    return level[0]
