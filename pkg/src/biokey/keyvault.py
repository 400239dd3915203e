"""Key derivation, private-key wrapping and secp256k1 signatures.

The master hash never keys the cipher directly: HKDF-SHA-256 turns it into
the AES-256-GCM wrapping key.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from typing import Callable

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .errors import BiokeyError, DecryptFailed

HKDF_INFO = b"biokey/v1/wrap"
BLOB_AAD = b"biokey-blob-v1"
BLOB_MAGIC = b"BKV1"
SALT_LEN = 16
NONCE_LEN = 12
TAG_LEN = 16
KEY_LEN = 32

SECP256K1_ORDER = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141


def derive_key(master_hash: bytes, kdf_salt: bytes) -> bytes:
    if len(kdf_salt) != SALT_LEN:
        raise BiokeyError("bad-params", "kdf salt must be 16 bytes")
    return HKDF(algorithm=hashes.SHA256(), length=KEY_LEN, salt=kdf_salt, info=HKDF_INFO).derive(master_hash)


@dataclass(frozen=True)
class EncryptedBlob:
    kdf_salt: bytes
    nonce: bytes
    ciphertext: bytes
    tag: bytes
    version: int = 1

    def to_bytes(self) -> bytes:
        return BLOB_MAGIC + self.kdf_salt + self.nonce + struct.pack(">I", len(self.ciphertext)) + self.ciphertext + self.tag

    @classmethod
    def from_bytes(cls, raw: bytes) -> "EncryptedBlob":
        head = len(BLOB_MAGIC) + SALT_LEN + NONCE_LEN + 4
        if len(raw) < head + TAG_LEN or raw[:4] != BLOB_MAGIC:
            raise DecryptFailed("malformed blob")
        salt = raw[4 : 4 + SALT_LEN]
        nonce = raw[4 + SALT_LEN : 4 + SALT_LEN + NONCE_LEN]
        (ct_len,) = struct.unpack(">I", raw[head - 4 : head])
        if len(raw) != head + ct_len + TAG_LEN:
            raise DecryptFailed("malformed blob")
        return cls(salt, nonce, raw[head : head + ct_len], raw[head + ct_len :])


def wrap_key(
    private_key: bytes,
    key: bytes,
    rng: Callable[[int], bytes] = os.urandom,
    kdf_salt: bytes = bytes(SALT_LEN),
) -> EncryptedBlob:
    """AES-256-GCM under ``key`` with a fresh random nonce.

    ``kdf_salt`` is carried in the blob so the unwrapping side can rederive
    ``key``; it does not take part in the encryption itself.
    """
    if len(key) != KEY_LEN:
        raise BiokeyError("bad-params", "wrapping key must be 32 bytes")
    if len(kdf_salt) != SALT_LEN:
        raise BiokeyError("bad-params", "kdf salt must be 16 bytes")
    nonce = rng(NONCE_LEN)
    sealed = AESGCM(key).encrypt(nonce, bytes(private_key), BLOB_AAD)
    return EncryptedBlob(bytes(kdf_salt), nonce, sealed[:-TAG_LEN], sealed[-TAG_LEN:])


def unwrap_key(blob: EncryptedBlob | bytes, key: bytes) -> bytes:
    if isinstance(blob, (bytes, bytearray)):
        blob = EncryptedBlob.from_bytes(bytes(blob))
    if len(key) != KEY_LEN:
        raise DecryptFailed()
    if len(blob.nonce) != NONCE_LEN or len(blob.tag) != TAG_LEN:
        raise DecryptFailed()
    try:
        return AESGCM(key).decrypt(blob.nonce, blob.ciphertext + blob.tag, BLOB_AAD)
    except InvalidTag:
        raise DecryptFailed() from None


@dataclass(frozen=True)
class KeyPair:
    private_key: bytes
    public_key: bytes

    @classmethod
    def from_private(cls, private_key: bytes) -> "KeyPair":
        sk = _private(private_key)
        pub = sk.public_key().public_bytes(serialization.Encoding.X962, serialization.PublicFormat.CompressedPoint)
        return cls(bytes(private_key), pub)

    @classmethod
    def generate(cls) -> "KeyPair":
        sk = ec.generate_private_key(ec.SECP256K1())
        return cls.from_private(sk.private_numbers().private_value.to_bytes(32, "big"))


def _private(private_key: bytes) -> ec.EllipticCurvePrivateKey:
    if len(private_key) != 32:
        raise BiokeyError("bad-key", "private key must be 32 bytes")
    d = int.from_bytes(private_key, "big")
    if not 1 <= d < SECP256K1_ORDER:
        raise BiokeyError("bad-key", "private scalar out of range")
    return ec.derive_private_key(d, ec.SECP256K1())


def _public(public_key: bytes) -> ec.EllipticCurvePublicKey:
    try:
        return ec.EllipticCurvePublicKey.from_encoded_point(ec.SECP256K1(), bytes(public_key))
    except ValueError:
        raise BiokeyError("bad-key", "invalid public key encoding") from None


_ECDSA = ec.ECDSA(hashes.SHA256(), deterministic_signing=True)


def sign(message: bytes, kp: KeyPair) -> bytes:
    """DER-encoded ECDSA signature with RFC 6979 nonces."""
    return _private(kp.private_key).sign(message, _ECDSA)


def verify(message: bytes, signature: bytes, public_key: bytes) -> bool:
    pub = _public(public_key)
    try:
        pub.verify(signature, message, _ECDSA)
    except InvalidSignature:
        return False
    return True
