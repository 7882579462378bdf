"""Conditional dynamics under general-dyne monitoring of a thermal bath.

A single trajectory with both engines on shared noise, then the steady
conditional variance, which stays at the thermal value 2N+1 for every U.

    python3 demos/conditional_dynamics.py
"""

import numpy as np

from gendyne import Unravelling, fock, sme
from gendyne import gaussian as gc

un = Unravelling(0.5, 1.0)
cfg = sme.SmeConfig(un, dt=1e-3, n_steps=2000, dim=25, seed=1, engine="both",
                    scheme="milstein")
rec = sme.run_trajectory(cfg, gc.coherent(1.0))
f, g = rec["fock"], rec["gaussian"]
for t in (0.0, 0.5, 1.0, 2.0):
    i = int(round(t / cfg.dt))
    print(f"t={t:3.1f}  <q> fock {f.mean[i, 0]:+.4f} gaussian {g.mean[i, 0]:+.4f}   "
          f"var_q {f.cov[i, 0, 0]:.4f} {g.cov[i, 0, 0]:.4f}")
print(f"max engine difference in the means: {np.max(np.abs(f.mean - g.mean)):.1e}")

# ensemble average reproduces the unconditional photon number
cfg = sme.SmeConfig(un, dt=1e-3, n_steps=1000, dim=25, seed=2)
st = sme.run_ensemble(cfg, 200, fock.thermal_density(0.2, 25))
print(f"\n<n>(1): ensemble {st.photon_number[-1]:.4f} +- {st.photon_number_se[-1]:.4f}, "
      f"master equation {sme.thermal_photon_number(0.2, 1.0, 1.0):.4f}")

print("\nsteady conditional var_q (N=1), Gaussian engine")
for u in (-0.9, 0.0, 0.9):
    cov = sme.riccati_steady_state(Unravelling(u, 1.0), np.eye(2), t_final=20)
    print(f"  U={u:+.1f}: {cov[0, 0]:.6f}")
