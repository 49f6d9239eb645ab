"""Epsilon-greedy SARSA that never settles, next to softmax on the same instance.

The instance is found by screening small random MDPs for a policy-iteration
cycle: the greedy action table flips back and forth, so the parameters keep
jumping between the two TD fixed points.  Projection keeps them bounded.

    python3 demos/chatter.py [demos/configs/chatter.json]
"""
import sys

from linsarsa import harness

path = sys.argv[1] if len(sys.argv) > 1 else "demos/configs/chatter.json"
res = harness.chatter_demo(harness.ExperimentConfig.load(path))
for k, v in res.fields().items():
    print(f"{k:>20} {v}")
if res.found:
    print(f"softmax late-window diameter is {100 * res.ratio:.1f}% of the greedy one")
else:
    print("no chattering instance in the screened candidates")
