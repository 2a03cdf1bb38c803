"""
Mining user similarity under a work budget
==========================================

Six miners watch a shared mempool, tally transactions into per-class
count vectors, and fill a similarity matrix pair by pair until the
budget runs out. The matrix ships as compressed sparse triples.
"""
import numpy as np

from pous.similarity import (
    DataView,
    Transaction,
    build_user_vectors,
    compute_usm,
    similarity,
    update_usm,
)

rng = np.random.default_rng(1)

# a day of traffic: users favor different transaction classes
classes = "ABCDEF"
history = [
    Transaction(id=i, source_user=int(rng.integers(1, 7)),
                tx_class=classes[int(rng.integers(0, 6))], fee=0.0001)
    for i in range(1, 120)
]
view = DataView(history=history, mempool=[])
vectors = build_user_vectors(view, n_users=6)
for v in vectors:
    print(f"user {v.user}: class counts {v.counts.astype(int)}")

print("\npairwise similarity of users 1 and 2:",
      round(similarity(vectors[0], vectors[1]), 4))

# a rich miner computes every pair; a poor one only the first five
rich = compute_usm(vectors, budget=None, owner=1)
poor = compute_usm(vectors, budget=5, owner=2)
print("\nrich miner filled", rich.computed_count, "entries")
print("poor miner filled", poor.computed_count, "entries")
print("poor miner's matrix (NaN = not computed):")
print(np.round(poor.to_dense().reshape(6, 6), 3))

blob = poor.crs_bytes()
print("\ncompressed row storage:", len(blob), "bytes for",
      poor.computed_count, "entries")

# new transactions arrive; only the touched rows move
arrivals = [Transaction(id=200, source_user=3, tx_class="F", fee=0.0002)]
updated = update_usm(poor, DataView(history=history, mempool=arrivals))
delta = np.abs(updated.to_dense() - poor.to_dense()).reshape(6, 6)
changed = np.nansum(delta, axis=1)
print("\nrow change after user 3 sends one class-F transaction:",
      np.round(changed, 4))
