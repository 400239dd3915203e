"""Lose a quarter of a message and one parity shard, then rebuild it."""
from biokey.rs import rs_encode, rs_reconstruct

message = b"ABCDEFGHIJKLMNOP"
data = [message[i : i + 4] for i in range(0, 16, 4)]
coded = rs_encode(data, 2)
for i, shard in enumerate(coded.shards):
    role = "data  " if i < 4 else "parity"
    print(f"shard {i} {role} {shard!r}")

damaged = coded.without(2, 5)
print("\nafter losing shards 2 and 5:", [s if s is None else s.decode("latin-1") for s in damaged.shards])
rebuilt = b"".join(rs_reconstruct(damaged, 4, 2))
print("rebuilt:", rebuilt.decode())
assert rebuilt == message

try:
    rs_reconstruct(coded.without(0, 1, 2), 4, 2)
except Exception as exc:
    print("three losses with two parity shards:", exc)
