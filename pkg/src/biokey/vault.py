"""Local vault file and the recovery package split across stewards.

A recovery package is the registered template followed by the encrypted
blob, each prefixed with its 32-bit big-endian length. Both are needed
after device loss: the blob holds the key and the template is what lets a
fresh scan regenerate the wrapping key.
"""
from __future__ import annotations

import base64
import datetime as _dt
import json
import os
import struct
from dataclasses import dataclass

from .cancelable import MATCH_THRESHOLD, RegisteredTemplate, match_and_recover, register
from .errors import BiokeyError
from .keyvault import EncryptedBlob, derive_key, unwrap_key, wrap_key
from .template import MinutiaTemplate

VAULT_VERSION = 1


@dataclass(frozen=True)
class VaultFile:
    template: RegisteredTemplate
    blob: EncryptedBlob
    created: str
    version: int = VAULT_VERSION

    def to_dict(self) -> dict:
        return {
            "v": self.version,
            "created": self.created,
            "template": self.template.to_dict(),
            "blob": base64.b64encode(self.blob.to_bytes()).decode("ascii"),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "VaultFile":
        try:
            d = json.loads(text)
            if d.get("v") != VAULT_VERSION:
                raise BiokeyError("bad-vault", f"unsupported vault version {d.get('v')!r}")
            return cls(
                RegisteredTemplate.from_dict(d["template"]),
                EncryptedBlob.from_bytes(base64.b64decode(d["blob"], validate=True)),
                str(d["created"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise BiokeyError("bad-vault", str(exc)) from None

    def to_package(self) -> bytes:
        return pack_package(self.template, self.blob)


def pack_package(template: RegisteredTemplate, blob: EncryptedBlob) -> bytes:
    t = template.to_json().encode("utf-8")
    b = blob.to_bytes()
    return struct.pack(">I", len(t)) + t + struct.pack(">I", len(b)) + b


def unpack_package(raw: bytes) -> tuple[RegisteredTemplate, EncryptedBlob]:
    try:
        (tl,) = struct.unpack(">I", raw[:4])
        t = raw[4 : 4 + tl]
        (bl,) = struct.unpack(">I", raw[4 + tl : 8 + tl])
        b = raw[8 + tl : 8 + tl + bl]
        if len(t) != tl or len(b) != bl or 8 + tl + bl != len(raw):
            raise ValueError("length prefixes do not match package size")
    except (struct.error, ValueError) as exc:
        raise BiokeyError("bad-package", str(exc)) from None
    return RegisteredTemplate.from_json(t.decode("utf-8")), EncryptedBlob.from_bytes(b)


def enroll(
    template: MinutiaTemplate,
    private_key: bytes,
    seed: int,
    grid: tuple[int, int] = (4, 4),
    rng=os.urandom,
) -> VaultFile:
    reg, master = register(template, seed, *grid, rng=rng)
    blob = wrap_key(private_key, derive_key(master, reg.kdf_salt), rng=rng, kdf_salt=reg.kdf_salt)
    created = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return VaultFile(reg, blob, created)


def unlock(
    template: RegisteredTemplate,
    blob: EncryptedBlob,
    scan: MinutiaTemplate,
    tau: float = MATCH_THRESHOLD,
) -> bytes:
    """Match ``scan`` against the enrollment and unwrap the private key."""
    master = match_and_recover(template, scan, tau)
    return unwrap_key(blob, derive_key(master, blob.kdf_salt))
