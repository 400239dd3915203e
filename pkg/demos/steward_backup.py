"""Back up a vault to six stewards, lose the device, recover with any four."""
import tempfile
from pathlib import Path

import numpy as np

from biokey import KeyPair, enroll
from biokey.errors import QuorumFailed
from biokey.steward import BackgroundSteward, StewardEndpoint, distribute, recover
from biokey.synth import PerturbModel, generate_template, perturb
from biokey.vault import unlock, unpack_package

rng = np.random.default_rng(7)
finger = generate_template(rng)
kp = KeyPair.generate()
vault = enroll(finger, kp.private_key, seed=99)

with tempfile.TemporaryDirectory() as tmp:
    nodes = [BackgroundSteward(Path(tmp) / f"steward{i}").start() for i in range(6)]
    stewards = [StewardEndpoint(f"steward-{i + 1}", n.url) for i, n in enumerate(nodes)]
    receipt = distribute(vault.to_package(), stewards, n=6, k=4)
    print("recovery id", receipt.rid.hex())
    for s in receipt.per_steward:
        print(f"  {s.name}: share {s.x} {s.status}")

    del vault  # the phone is gone
    nodes[1].stop()
    nodes[4].stop()
    package = recover(receipt.rid, stewards, k=4, timeout=2)
    template, blob = unpack_package(package)
    rescan = perturb(finger, PerturbModel(jitter_sigma=2.0, delete_rate=0.15), rng)
    key = unlock(template, blob, rescan)
    print("two stewards down, key recovered:", key == kp.private_key)

    nodes[0].stop()
    try:
        recover(receipt.rid, stewards, k=4, timeout=1)
    except QuorumFailed as exc:
        print("three down:", exc)
        for name, why in sorted(exc.diagnostics.items()):
            print(f"  {name}: {why}")

    for n in nodes:
        n.stop()
