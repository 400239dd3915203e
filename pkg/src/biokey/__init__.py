"""Fingerprint-bound private key wrapping with threshold steward backup.

The pipeline: a fingerprint becomes an aligned minutiae template
(:mod:`biokey.preprocess`), which is enrolled through a cancelable block
shuffle whose hashes are protected by Reed-Solomon parity
(:mod:`biokey.cancelable`, :mod:`biokey.bundle`). The regenerated master
hash keys an AES-GCM wrap of the private key (:mod:`biokey.keyvault`), and
the wrapped package is Shamir-split across steward services
(:mod:`biokey.sss`, :mod:`biokey.steward`).
"""
from .cancelable import (
    RegisteredTemplate,
    TransformParams,
    apply_transform,
    block_of,
    generate_transform,
    match_and_recover,
    register,
    reverse_point,
)
from .errors import BiokeyError, DecryptFailed, DistributionIncomplete, MatchFailure, QuorumFailed
from .keyvault import EncryptedBlob, KeyPair, derive_key, sign, unwrap_key, verify, wrap_key
from .template import Kind, Minutia, MinutiaTemplate
from .vault import VaultFile, enroll, unlock

__version__ = "0.1.0"

__all__ = [
    "BiokeyError",
    "DecryptFailed",
    "DistributionIncomplete",
    "EncryptedBlob",
    "KeyPair",
    "Kind",
    "MatchFailure",
    "Minutia",
    "MinutiaTemplate",
    "QuorumFailed",
    "RegisteredTemplate",
    "TransformParams",
    "VaultFile",
    "apply_transform",
    "block_of",
    "derive_key",
    "enroll",
    "generate_transform",
    "match_and_recover",
    "register",
    "reverse_point",
    "sign",
    "unlock",
    "unwrap_key",
    "verify",
    "wrap_key",
]
