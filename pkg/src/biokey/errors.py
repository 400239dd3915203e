"""Exception types.

Every failure carries a short machine-readable ``code`` (for example
``"insufficient-shards"``) so callers and the CLI can branch on it without
parsing messages.
"""
from __future__ import annotations


class BiokeyError(Exception):
    """Base error. ``code`` is a stable kebab-case identifier."""

    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)


class MatchFailure(BiokeyError):
    """The candidate fingerprint did not regenerate the enrolled key.

    ``code`` is ``"no-match"`` (too few minutiae paired, or the verifier
    rejected every reconstruction) or ``"recovery-failed"`` (too many
    erasures to reconstruct at all).
    """


class DecryptFailed(BiokeyError):
    def __init__(self, detail: str = ""):
        super().__init__("decrypt-failed", detail)


class QuorumFailed(BiokeyError):
    def __init__(self, diagnostics: dict[str, str], detail: str = ""):
        self.diagnostics = dict(diagnostics)
        super().__init__("quorum-failed", detail or _fmt(diagnostics))


class DistributionIncomplete(BiokeyError):
    def __init__(self, failures: dict[str, str], receipt=None, shares=None):
        self.failures = dict(failures)
        self.receipt = receipt
        self.shares = shares
        super().__init__("distribution-incomplete", _fmt(failures))


def _fmt(d: dict[str, str]) -> str:
    return "; ".join(f"{k}: {v}" for k, v in d.items())
