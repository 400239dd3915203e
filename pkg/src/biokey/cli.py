"""Command line entry point.

Exit codes: 0 success, 1 usage or invalid input, 2 biometric mismatch or
decryption failure, 3 steward quorum or distribution failure, 4 I/O.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import steward
from .errors import BiokeyError
from .keyvault import KeyPair
from .preprocess import extract_template, load_image
from .synth import EvalParams, PerturbModel, run_evaluation
from .template import MinutiaTemplate
from .vault import VaultFile, enroll, unlock, unpack_package

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_MATCH = 2
EXIT_QUORUM = 3
EXIT_IO = 4

_EXIT_BY_CODE = {
    "no-match": EXIT_NO_MATCH,
    "recovery-failed": EXIT_NO_MATCH,
    "decrypt-failed": EXIT_NO_MATCH,
    "quorum-failed": EXIT_QUORUM,
    "distribution-incomplete": EXIT_QUORUM,
    "bad-vault": EXIT_IO,
    "bad-package": EXIT_IO,
    "bad-template": EXIT_IO,
    "bad-share": EXIT_IO,
    "bad-image": EXIT_IO,
}

log = logging.getLogger("biokey")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_key_file(path: str | os.PathLike) -> bytes:
    """32 raw bytes, or 64 hex digits with optional surrounding whitespace."""
    raw = Path(path).read_bytes()
    if len(raw) == 32:
        return raw
    text = raw.strip()
    if len(text) == 64:
        try:
            return bytes.fromhex(text.decode("ascii"))
        except (UnicodeDecodeError, ValueError):
            pass
    raise BiokeyError("bad-key", f"{path}: expected 32 raw bytes or 64 hex digits")


def write_private(path: str | os.PathLike, data: bytes) -> None:
    """Owner-only file, replaced atomically so a crash never leaves a partial key."""
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.", suffix=".tmp")
    try:
        os.fchmod(fd, 0o600)
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, target)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def write_key_file(path, private_key: bytes) -> None:
    write_private(path, private_key.hex().encode("ascii") + b"\n")


def load_scan(path: str | os.PathLike) -> MinutiaTemplate:
    """A template JSON document, or an image run through the extractor."""
    p = Path(path)
    head = p.read_bytes()[:64].lstrip()
    if p.suffix.lower() == ".json" or head.startswith(b"{"):
        return MinutiaTemplate.from_json(p.read_text(encoding="utf-8"))
    return extract_template(load_image(p))


def parse_grid(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 4x4, got {text!r}") from None
    return h, w


def parse_addr(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"address must be host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def cmd_keygen(args) -> int:
    kp = KeyPair.generate()
    write_key_file(args.out, kp.private_key)
    print(kp.public_key.hex())
    return EXIT_OK


def cmd_enroll(args) -> int:
    private_key = read_key_file(args.key)
    KeyPair.from_private(private_key)  # reject keys that cannot sign
    tmpl = load_scan(args.input)
    seed = args.seed if args.seed is not None else int.from_bytes(os.urandom(8), "big")
    vault = enroll(tmpl, private_key, seed, args.grid)
    write_private(args.out, vault.to_json().encode("utf-8"))
    log.info("enrolled %d minutiae on a %dx%d grid", len(tmpl), *args.grid)
    return EXIT_OK


def _read_vault(path) -> VaultFile:
    return VaultFile.from_json(Path(path).read_text(encoding="utf-8"))


def cmd_unlock(args) -> int:
    vault = _read_vault(args.vault)
    key = unlock(vault.template, vault.blob, load_scan(args.input), args.tau)
    write_key_file(args.out, key)
    return EXIT_OK


def cmd_backup(args) -> int:
    vault = _read_vault(args.vault)
    cfg = steward.StewardConfig.load(args.stewards)
    receipt = steward.distribute(vault.to_package(), cfg.stewards, cfg.n, cfg.k, timeout=args.timeout)
    for s in receipt.per_steward:
        log.info("steward %s stored x=%d at %s", s.name, s.x, s.stored_at)
    print(receipt.rid.hex())
    return EXIT_OK


def cmd_restore(args) -> int:
    try:
        rid = bytes.fromhex(args.rid)
    except ValueError:
        raise BiokeyError("bad-params", "recovery id must be hex") from None
    if len(rid) != 16:
        raise BiokeyError("bad-params", "recovery id must be 16 bytes")
    cfg = steward.StewardConfig.load(args.stewards)
    scan = load_scan(args.input)
    template, blob = unpack_package(steward.recover(rid, cfg.stewards, cfg.k, timeout=args.timeout))
    key = unlock(template, blob, scan, args.tau)
    write_key_file(args.out, key)
    if args.vault_out:
        created = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        write_private(args.vault_out, VaultFile(template, blob, created).to_json().encode("utf-8"))
    return EXIT_OK


def cmd_steward_serve(args) -> int:
    host, port = args.addr
    steward.serve(host, port, args.data_dir)
    return EXIT_OK


def cmd_eval(args) -> int:
    params = EvalParams(grid=args.grid, tau=args.tau)
    model = PerturbModel(args.jitter, args.delete, args.spurious, args.flip)
    report = run_evaluation(params, model, args.trials, seed=args.seed, impostor_trials=args.impostors)
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n", encoding="utf-8")
    else:
        print(report.to_json())
    print(report.summary())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="biokey", description="Fingerprint-bound key wrapping with steward backup.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("keygen", help="generate a demo secp256k1 private key")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_keygen)

    s = sub.add_parser("enroll", help="bind a private key to a fingerprint")
    s.add_argument("--input", required=True, help="fingerprint image (PNG/PGM) or template JSON")
    s.add_argument("--key", required=True, help="private key file (hex or 32 raw bytes)")
    s.add_argument("--out", required=True, help="vault file to write")
    s.add_argument("--grid", type=parse_grid, default=(4, 4), help="block grid HxW (default 4x4)")
    s.add_argument("--seed", type=int, help="transform seed (random if omitted)")
    s.set_defaults(func=cmd_enroll)

    s = sub.add_parser("unlock", help="recover the private key with a fresh scan")
    s.add_argument("--input", required=True)
    s.add_argument("--vault", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--tau", type=float, default=12.0, help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_unlock)

    s = sub.add_parser("backup", help="split the vault across stewards; prints the recovery id")
    s.add_argument("--vault", required=True)
    s.add_argument("--stewards", required=True, help="steward list JSON")
    s.add_argument("--timeout", type=float, default=10.0)
    s.set_defaults(func=cmd_backup)

    s = sub.add_parser("restore", help="rebuild the key from steward shares and a fresh scan")
    s.add_argument("--rid", required=True)
    s.add_argument("--stewards", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--vault-out", help="also write the recovered vault file")
    s.add_argument("--timeout", type=float, default=10.0)
    s.add_argument("--tau", type=float, default=12.0, help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_restore)

    s = sub.add_parser("steward", help="steward service")
    ssub = s.add_subparsers(dest="steward_command", required=True, parser_class=_Parser)
    ss = ssub.add_parser("serve", help="run a share custody service")
    ss.add_argument("--addr", type=parse_addr, default=("127.0.0.1", 8700))
    ss.add_argument("--data-dir", required=True)
    ss.set_defaults(func=cmd_steward_serve)

    s = sub.add_parser("eval", help="genuine/impostor rates on synthetic templates")
    s.add_argument("--trials", type=int, required=True)
    s.add_argument("--jitter", type=float, default=0.0, help="positional noise sigma in pixels")
    s.add_argument("--delete", type=float, default=0.0, help="minutia deletion rate")
    s.add_argument("--spurious", type=float, default=0.0)
    s.add_argument("--flip", type=float, default=0.0, help="kind flip rate")
    s.add_argument("--impostors", type=int, help="impostor trials (default: same as --trials)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--grid", type=parse_grid, default=(4, 4))
    s.add_argument("--tau", type=float, default=12.0)
    s.add_argument("--report", help="write the JSON report here instead of stdout")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except BiokeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_BY_CODE.get(exc.code, EXIT_USAGE)
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
