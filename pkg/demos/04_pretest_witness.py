"""
Pretest: certify closeness to the PI state family from three settings
=====================================================================

Before running full tomography it pays to check that the lab state is
close to *some* permutationally invariant state. A witness built from a
handful of settings gives a lower bound on that fidelity, with a
Hoeffding confidence level at finite statistics.
"""

import numpy as np

from pitomo import (
    dicke_ensemble,
    exact_dataset,
    fidelity_bound,
    optimize_witness,
    sample_dataset,
    statistical_bound,
)

# Aim the witness at the state the experiment intends to prepare.
target = dicke_ensemble(6, 3)
witness = optimize_witness(target)
print(f"witness over {len(witness.settings)} settings, "
      f"objective at target: {witness.objective:.6f}")
print(f"coefficient ranges C_z^2 = {witness.c_z_squared:.3f}")

# With exact data from the target itself the bound reaches 1.
exact = exact_dataset(target, list(witness.settings))
print(f"\nexact-data fidelity bound: {fidelity_bound(witness, exact):.6f}")

# With sampled counts the bound has to give up a safety margin epsilon:
# a larger margin weakens the bound but buys confidence. (A "bound"
# above 1 is vacuous — note its confidence is correspondingly tiny.)
dataset = sample_dataset(target, witness.settings, repetitions=2000, seed=33)
for eps in (0.05, 0.1, 0.15, 0.2):
    stat = statistical_bound(witness, dataset, epsilon=eps)
    print(f"epsilon={eps:4.2f}: bound >= {stat.bound:6.3f} "
          f"with confidence {stat.confidence:.4f}")

# A state far from the target scores low: the witness is specific.
far = dicke_ensemble(6, 0)
print(f"\nbound for a different preparation: "
      f"{fidelity_bound(witness, far):.4f}")
