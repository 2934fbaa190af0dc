# %% [markdown]
# # Training a small lifter
#
# The full model (26 layers, d=128, ~29M parameters) is far too slow for a
# numpy CPU kernel, so this run shrinks it and trains on a few synthetic clips.
# Expect a couple of minutes.

# %%
import logging

from kaslift.config import ModelConfig, TrainConfig
from kaslift.metrics import ClipMetrics, mpjpe, p_mpjpe, report
from kaslift.model import default_tables, init_params, parameter_count
from kaslift.synth import make_suite
from kaslift.training import evaluate_mpjpe, fit, predict, stack_pairs

logging.basicConfig(level=logging.INFO, format="%(message)s")

# a light velocity weight: at this scale the default of 20 keeps the model near the mean pose
mc = ModelConfig(frames=9, dim=32, layers=2, heads=4, limb_hidden=8, ffn_expansion=2, lambda_v=1.0)
tc = TrainConfig(epochs=60, batch_size=4, warmup_epochs=3, lr=1e-3, early_stop_patience=15, seed=0)
topo, table = default_tables(mc)
print("parameters:", parameter_count(mc, table), "(default config:", parameter_count(ModelConfig()), ")")

train = make_suite(4, frames=9, seed=0)
held_out = make_suite(2, frames=9, seed=1)
before = evaluate_mpjpe(held_out, init_params(mc, table, tc.seed), mc, topo, table)

# %%
best, history = fit(train, held_out, mc, tc, topo=topo, table=table)
after = evaluate_mpjpe(held_out, best, mc, topo, table)
print(f"held-out MPJPE: {before:.1f} mm untrained -> {after:.1f} mm after {len(history)} epochs")

# %% [markdown]
# Per-action report with Procrustes-aligned error alongside plain MPJPE.

# %%
x, y = stack_pairs(held_out, topo)
pred = predict(x, best, mc, topo, table)
rows = [ClipMetrics(mpjpe(p, g), p_mpjpe(p, g)) for p, g in zip(pred, y)]
print(report(rows, [p.action for p in held_out]).to_text())
