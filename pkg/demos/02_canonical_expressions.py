"""Canonical (projection-invariant) forms of standard Bell expressions.

A Bell functional written with probabilities can be changed by adding any
multiple of a no-signalling row: nothing changes on no-signalling behaviours,
but the value on raw data then depends on how it is projected. The canonical
form removes that ambiguity.
"""
import numpy as np

from nsbell import Scenario, bell, build_constraint_system
from nsbell.bell import nosig_perturbed
from nsbell.data import generate_drift_counts, frequencies
from nsbell.scenario import uniform_behavior

for name in ("chsh", "mermin", "i3322", "losr_gtnl"):
    e = bell.builtin(name)
    print(f"{name:10s} {e.scenario}  bound {float(e.bound):g}  local maximum {bell.local_bound(e):g}")

c = bell.canonicalize(bell.tilted(2, 1))
print("\ntilted CHSH (alpha=2, beta=1) canonical blocks:")
for x in c.scenario.setting_tuples():
    print(" ", x, [str(v) for v in c.block(x)])

c = bell.canonicalize(bell.builtin("i3322"))
print("\nI3322 canonical blocks (marginals averaged over all three remote settings):")
for x in c.scenario.setting_tuples():
    print(" ", x, [str(v) for v in c.block(x)])

# weakly-signalling synthetic data
s = Scenario(2, 2)
counts = generate_drift_counts(uniform_behavior(s), 100_000, 0.1, 4, seed=3)
f, _ = frequencies(counts)
chsh = bell.builtin("chsh")
tweaked = nosig_perturbed(chsh, build_constraint_system(s).rows[0], 5)
for label, expr in (("CHSH", chsh), ("CHSH + 5 x no-signalling row", tweaked),
                    ("canonical form of the latter", bell.canonicalize(tweaked))):
    r = bell.invariance_check(expr, f)
    print(f"{label:32s} raw {r.value_raw: .6f} projected {r.value_projected: .6f} shift {r.difference:.2e}")
