"""An unbalanced double homodyne set-up realising the general-dyne POVM.

    python3 demos/double_homodyne.py
"""

import numpy as np

from gendyne import Unravelling, scheme
from gendyne import gaussian as gc

rng = np.random.default_rng(0)
state = gc.make_thermal(1.0)

for u in (0.0, 0.5, 0.9):
    t = scheme.transmissivity_for(u)
    x = scheme.scheme_outcome_sample(state, u, rng, 50_000)
    print(f"U={u}: T={t:.3f}, sampled variances {np.var(x[:, 0]):.3f} {np.var(x[:, 1]):.3f}, "
          f"target {Unravelling(u, 1.0).l1:.3f} {Unravelling(u, 1.0).l2:.3f}")

# a coherent input shifts the outcome mean by ((1+U) q/2, (1-U) p/2)
coh = gc.coherent(1.0 - 0.5j)
x = scheme.scheme_outcome_sample(coh, 0.5, rng, 50_000)
print(f"\ncoherent input 1-0.5j, U=0.5: outcome mean {x.mean(axis=0).round(3)}, "
      f"expected {[0.75 * 2.0, 0.25 * -1.0]}")

# the conditioned ancilla state approaches the eigenstate as squeezing grows
cc = scheme.scheme_povm_crosscheck(0.5, 1.0 + 0.5j, dim=40)
print("\noverlap with the POVM eigenvector versus resource squeezing s")
for s, f in zip(cc.squeezings, cc.curve):
    print(f"  s={s:5.1f}: 1 - F = {1 - f:.2e}")
print(f"  limit: 1 - F = {1 - cc.limit:.2e}, extrapolated: {1 - cc.extrapolated:.2e}")
