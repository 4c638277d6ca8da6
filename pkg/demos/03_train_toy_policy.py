#!/usr/bin/env python3
# Reward-weighted regression on a toy policy. The exported dataset weights
# each action by exp(reward / tau); minimizing the weighted negative
# log-likelihood pushes probability mass toward high-reward actions. Here two
# actions share one context: the rewarded one ends up strictly more probable.
import math

from wfopt import rwr_loss, train_toy

# two records with the same context (so they land in the same policy bucket):
# a full-reward action weighted exp(1/0.4) and a zero-reward action weighted 1
heavy_weight = math.exp(1.0 / 0.4)
records = [
    {"context": "history: none; task: arithmetic", "target": "propose a parser", "weight": heavy_weight},
    {"context": "history: none; task: arithmetic", "target": "propose a constant", "weight": 1.0},
]
print(f"weights: {heavy_weight:.6f} vs 1.0")

policy, batch, losses = train_toy(records, buckets=8)

print(f"loss: {losses[0]:.4f} -> {losses[-1]:.4f} over {len(losses) - 1} steps")
print("final loss (recomputed):", round(rwr_loss(policy, batch), 4))

bucket = batch.bucket_ids[0]
probs = policy.probs()[bucket]
for name, p in zip(batch.templates, probs):
    print(f"  p({name!r}) = {p:.4f}")
assert probs[batch.templates.index("propose a parser")] > probs[
    batch.templates.index("propose a constant")
]
print("the rewarded action is now the likelier one")
