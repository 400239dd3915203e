"""Bind a signing key to a synthetic fingerprint image and get it back from a noisy rescan.

Writes fp.png and fp_rescan.png to the working directory so the same flow
can be repeated through the command line:

    biokey keygen --out key.hex
    biokey enroll --input fp.png --key key.hex --out vault.json --grid 2x2
    biokey unlock --input fp_rescan.png --vault vault.json --out key2.hex
"""
import numpy as np
from PIL import Image

from biokey import KeyPair, MatchFailure, enroll, sign, unlock, verify
from biokey.preprocess import extract_template
from biokey.synth import fingerprint_image, salt_and_pepper

rng = np.random.default_rng(2)
img, planted = fingerprint_image(rng, shape=(320, 320), count=14, min_separation=36)
rescan = salt_and_pepper(img, 0.05, rng)
Image.fromarray(img).save("fp.png")
Image.fromarray(rescan).save("fp_rescan.png")

first = extract_template(img)
second = extract_template(rescan)
print(f"{len(planted)} planted minutiae, {len(first)} extracted, {len(second)} from the rescan")

# sparse prints need a coarse grid, otherwise too much of the key sits in public parity
kp = KeyPair.generate()
vault = enroll(first, kp.private_key, seed=1, grid=(2, 2))
print("stored vault:", len(vault.to_json()), "bytes, no key or master hash inside")

key = unlock(vault.template, vault.blob, second)
assert key == kp.private_key
sig = sign(b"hello", KeyPair.from_private(key))
print("unlocked; signature verifies:", verify(b"hello", sig, kp.public_key))

stranger, _ = fingerprint_image(np.random.default_rng(40), shape=(320, 320), count=14, min_separation=36)
try:
    unlock(vault.template, vault.blob, extract_template(stranger))
except MatchFailure as exc:
    print("another finger:", exc)
