"""Client side of steward custody: fan-out backup and quorum recovery."""
from __future__ import annotations

import json
import logging
import os
import random
import time
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Sequence
from urllib.parse import urlparse

from .. import sss
from ..errors import BiokeyError, DistributionIncomplete, QuorumFailed
from ..sss import Share

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 10.0
TOKEN_ENV = "BIOKEY_STEWARD_TOKEN"
DEFAULT_RETRIES = 3
BACKOFF_BASE = 0.1


@dataclass(frozen=True)
class StewardEndpoint:
    name: str
    url: str
    token: str | None = None

    def __post_init__(self):
        u = urlparse(self.url)
        if u.scheme not in ("http", "https") or not u.netloc:
            raise BiokeyError("bad-config", f"steward {self.name!r} has invalid url {self.url!r}")

    @property
    def base(self) -> str:
        return self.url.rstrip("/")


@dataclass(frozen=True)
class StewardConfig:
    stewards: tuple[StewardEndpoint, ...]
    n: int
    k: int

    def __post_init__(self):
        validate_stewards(self.stewards)
        if not 1 <= self.k <= self.n <= 255:
            raise BiokeyError("bad-config", f"need 1 <= k <= n <= 255, got n={self.n} k={self.k}")

    @classmethod
    def from_dict(cls, d: dict) -> "StewardConfig":
        """Entries without a ``token`` use ``$BIOKEY_STEWARD_TOKEN`` if set."""
        fallback = os.environ.get(TOKEN_ENV) or None
        try:
            eps = tuple(StewardEndpoint(str(s["name"]), str(s["url"]), s.get("token") or fallback) for s in d["stewards"])
            return cls(eps, int(d["n"]), int(d["k"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise BiokeyError("bad-config", str(exc)) from None

    @classmethod
    def load(cls, path: str | os.PathLike) -> "StewardConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise BiokeyError("bad-config", str(exc)) from None


def validate_stewards(stewards: Sequence[StewardEndpoint]) -> None:
    names = [s.name for s in stewards]
    urls = [s.base for s in stewards]
    if len(set(names)) != len(names):
        raise BiokeyError("bad-config", "duplicate steward name")
    if len(set(urls)) != len(urls):
        raise BiokeyError("bad-config", "duplicate steward url")


@dataclass(frozen=True)
class StewardStatus:
    name: str
    x: int
    stored_at: str | None
    status: str


@dataclass
class DistributionReceipt:
    rid: bytes
    per_steward: list[StewardStatus] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return bool(self.per_steward) and all(s.status == "stored" for s in self.per_steward)


def _request(ep: StewardEndpoint, method: str, path: str, body: bytes | None, timeout: float):
    req = urllib.request.Request(ep.base + path, data=body, method=method)
    if body is not None:
        req.add_header("Content-Type", "application/json")
    if ep.token:
        req.add_header("Authorization", f"Bearer {ep.token}")
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return resp.status, resp.read()


def _describe(exc: Exception) -> str:
    if isinstance(exc, urllib.error.HTTPError):
        try:
            detail = json.loads(exc.read()).get("error", "")
        except Exception:
            detail = ""
        return f"HTTP {exc.code} {detail}".strip()
    if isinstance(exc, urllib.error.URLError):
        return f"unreachable: {exc.reason}"
    return f"{type(exc).__name__}: {exc}"


def _put_share(ep: StewardEndpoint, share: Share, timeout: float, retries: int, sleep) -> StewardStatus:
    body = share.to_json().encode()
    path = f"/v1/shares/{share.rid.hex()}/{share.x}"
    last = ""
    for attempt in range(retries + 1):
        try:
            _, raw = _request(ep, "PUT", path, body, timeout)
            stored_at = json.loads(raw).get("stored_at")
            return StewardStatus(ep.name, share.x, stored_at, "stored")
        except urllib.error.HTTPError as exc:
            last = _describe(exc)
            if exc.code < 500:
                break  # client errors will not improve on retry
        except Exception as exc:  # network errors, timeouts
            last = _describe(exc)
        if attempt < retries:
            sleep(BACKOFF_BASE * (2**attempt) * (1 + random.random()))
    return StewardStatus(ep.name, share.x, None, last or "failed")


def distribute_shares(
    shares: Sequence[Share],
    stewards: Sequence[StewardEndpoint],
    timeout: float = DEFAULT_TIMEOUT,
    retries: int = DEFAULT_RETRIES,
    sleep: Callable[[float], None] = time.sleep,
) -> DistributionReceipt:
    """Send share i to steward i concurrently. All must be stored.

    Successful uploads are left in place on failure; calling again with the
    same shares is safe because identical PUTs are idempotent.
    """
    validate_stewards(stewards)
    if len(shares) != len(stewards):
        raise BiokeyError("bad-config", f"{len(shares)} shares for {len(stewards)} stewards")
    with ThreadPoolExecutor(max_workers=len(stewards)) as pool:
        futures = [pool.submit(_put_share, ep, sh, timeout, retries, sleep) for ep, sh in zip(stewards, shares)]
        results = [f.result() for f in futures]
    receipt = DistributionReceipt(shares[0].rid, results)
    if not receipt.complete:
        failures = {r.name: r.status for r in results if r.status != "stored"}
        raise DistributionIncomplete(failures, receipt=receipt, shares=list(shares))
    return receipt


def distribute(
    package: bytes,
    stewards: Sequence[StewardEndpoint],
    n: int,
    k: int,
    rng: Callable[[int], bytes] = os.urandom,
    **kwargs,
) -> DistributionReceipt:
    validate_stewards(stewards)
    if len(stewards) != n:
        raise BiokeyError("bad-config", f"n={n} but {len(stewards)} stewards listed")
    return distribute_shares(sss.split(package, n, k, rng), stewards, **kwargs)


def _fetch_shares(ep: StewardEndpoint, rid: bytes, timeout: float) -> list[Share]:
    _, raw = _request(ep, "GET", f"/v1/shares/{rid.hex()}", None, timeout)
    out = []
    for x in json.loads(raw).get("indices", []):
        _, body = _request(ep, "GET", f"/v1/shares/{rid.hex()}/{int(x)}", None, timeout)
        out.append(Share.from_json(body))
    return out


def recover(
    rid: bytes,
    stewards: Sequence[StewardEndpoint],
    k: int,
    timeout: float = DEFAULT_TIMEOUT,
) -> bytes:
    """Collect shares until ``k`` valid ones are in, then interpolate.

    Stragglers are abandoned once the quorum is reached. Shares that fail
    their checksum or belong to another set are skipped and reported.
    """
    validate_stewards(stewards)
    if len(stewards) < k:
        raise BiokeyError("bad-config", f"{len(stewards)} stewards listed, threshold is {k}")
    diagnostics: dict[str, str] = {}
    valid: dict[int, Share] = {}
    pool = ThreadPoolExecutor(max_workers=len(stewards))
    try:
        futures = {pool.submit(_fetch_shares, ep, rid, timeout): ep for ep in stewards}
        for fut in as_completed(futures):
            ep = futures[fut]
            try:
                got = fut.result()
            except Exception as exc:
                diagnostics[ep.name] = exc.code if isinstance(exc, BiokeyError) else _describe(exc)
                logger.warning("steward %s: %s", ep.name, diagnostics[ep.name])
                continue
            if not got:
                diagnostics[ep.name] = "no shares"
            for share in got:
                if share.rid != rid:
                    diagnostics[ep.name] = "wrong recovery id"
                elif not share.valid:
                    diagnostics[ep.name] = f"corrupt-share x={share.x}"
                    logger.warning("steward %s returned a corrupt share (x=%d), skipping", ep.name, share.x)
                elif share.k != k:
                    diagnostics[ep.name] = f"share threshold {share.k} != {k}"
                else:
                    valid.setdefault(share.x, share)
                    diagnostics[ep.name] = "ok"
            if len(valid) >= k:
                break
    finally:
        pool.shutdown(wait=False, cancel_futures=True)
    if len(valid) < k:
        for ep in stewards:
            diagnostics.setdefault(ep.name, "no response")
        raise QuorumFailed(diagnostics, f"{len(valid)} valid shares of {k} needed")
    try:
        return sss.recover(list(valid.values()))
    except BiokeyError as exc:
        raise QuorumFailed(diagnostics, f"interpolation failed: {exc}") from exc
