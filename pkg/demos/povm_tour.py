"""Tour of the general-dyne POVM: outcome variances, eigenstates, limit laws.

    python3 demos/povm_tour.py
"""

import numpy as np

from gendyne import Unravelling, fock, povm

N = 1.0

print("outcome variances for a thermal bath, N = 1")
print(f"{'U':>6} {'L1':>8} {'L2':>8}")
for u in (-1.0, -0.5, 0.0, 0.5, 1.0):
    un = Unravelling(u, N)
    print(f"{u:6.2f} {un.l1:8.4f} {un.l2:8.4f}")

# an eigenstate of a + U a^dag in the Fock basis
el = povm.povm_element(1.0 + 0.5j, 0.5, dim=40)
print(f"\neigenstate theta=1+0.5j, U=0.5: residual {el.eigen_residual():.1e}, "
      f"photon number {np.sum(np.arange(40) * np.abs(el.vector) ** 2) / np.sum(np.abs(el.vector) ** 2):.3f}")

# the elements resolve the identity on the low levels
for u in (-0.5, 0.0, 0.5):
    dev = np.max(np.abs(povm.completeness(u, 10) - np.eye(10)))
    print(f"completeness on 10 levels, U={u:+.1f}: max deviation {dev:.1e}")

rho = fock.thermal_density(N, 50)
p = povm.outcome_distribution(rho, 0.0)
print(f"\nheterodyne density at theta=0: {p(0.0, 0.0):.6f} (Husimi {1 / (np.pi * (1 + N)):.6f})")
for u in (0.9, 0.99, 0.999, 1.0):
    _, var = povm.outcome_marginal_moments(rho, u)
    print(f"theta1 variance at U={u}: {var:.5f}  (homodyne value {1 + 2 * N})")
