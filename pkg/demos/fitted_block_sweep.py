"""Fitted SARSA at a fixed sample budget for several block lengths.

The policy is refreshed every B steps.  With a budget of 1e5 samples every
B lands on the same theta*; B = 1 reproduces plain SARSA bit for bit, and
B = budget never improves the policy, so it stops at the TD fixed point of
the initial policy instead.

    python3 demos/fitted_block_sweep.py
"""
from linsarsa import harness

inst = harness.default_suite()[0]
cfg = harness.ExperimentConfig(operator={"kind": "softmax", "sigma": inst.op.param})
rows = harness.b_sweep(cfg, inst, b_list=[1, 4, 16, 100_000], budget=100_000, n_replications=50)
print(harness.b_sweep_csv(rows), end="")
