"""Asymptotic efficiencies of rank tests relative to the pseudo-Gaussian test.

Prints the ARE of the van der Waerden test for pure scale (xi = 0) and
pure shape (xi = 1) alternatives as the Student tail index grows, then the
local power of both tests along one alternative.

Run: python3 demos/efficiency_grid.py
"""
import numpy as np

from rankscatter import EllipticalFamily, ScoreFunction
from rankscatter.efficiency import LocalAlternative, are_pair, local_power

k = 3
vdw = ScoreFunction("vdw", k)
print(" nu    scale   shape")
for nu in (4.5, 5, 8, 12, 30, 100):
    xi0, xi1 = are_pair(vdw, EllipticalFamily("student", k, nu))
    print(f"{nu:5g}  {xi0:6.3f}  {xi1:6.3f}")

alt = LocalAlternative(np.array([0.5, 0.5]), np.array([0.0, 3.0]),
                       np.array([np.zeros((k, k)), np.diag([-2.0, 0.0, 2.0])]))
fam = EllipticalFamily("student", k, 6)
print("\nlocal power under t6:")
print(f"  vdW rank test       {local_power('rank', alt, fam, score=vdw):.4f}")
print(f"  pseudo-Gaussian     {local_power('pseudo-gaussian', alt, fam):.4f}")
