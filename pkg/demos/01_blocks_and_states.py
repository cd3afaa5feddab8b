"""
Block representation of permutationally invariant states
=========================================================

A permutationally invariant (PI) N-qubit state is fully described by one
small Hermitian block per collective-spin sector, so it fits in
sum_j (2j+1) dimensions instead of 2^N.
"""

import numpy as np

from pitomo import (
    dicke_ensemble,
    expand_full,
    ghz_ensemble,
    sector_layout,
    trace_distance,
)

# Sector bookkeeping: sectors are labelled by 2j (integers), and each
# sector occurs with a multiplicity given by exact binomial differences.
for n in (2, 6, 12, 20):
    layout = sector_layout(n)
    dims = {t: layout.multiplicity(t) for t in layout.two_j_values}
    print(f"N={n:2d}: compressed dim {layout.compressed_dim:4d} "
          f"(full space {2**n}), multiplicities {dims}")

# Named states come directly in block form.
ghz = ghz_ensemble(4)
dicke = dicke_ensemble(4, 2)
print("\nGHZ(4) top block diagonal:", np.real(np.diag(ghz.blocks[4])).round(6))
print("Dicke(4,2) top block diagonal:", np.real(np.diag(dicke.blocks[4])).round(6))

# Their distance is computed blockwise, never in the 2^N space...
print("\ntrace distance GHZ vs Dicke:", round(trace_distance(ghz, dicke), 6))

# ...but for small N we can expand to the full space and cross-check.
rho = expand_full(dicke)
print("full-space trace:", np.trace(rho).real.round(12),
      " purity:", np.trace(rho @ rho).real.round(12))

# Blocks survive a JSON round trip bit-for-bit.
text = dicke.to_json_dict()
print("JSON keys:", sorted(text))
