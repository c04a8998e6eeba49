"""Regular islands and the chaotic sea at alpha = 3/2.

Floquet states of the fz = 0 block are split by Husimi entropy into
regular and chaotic ones; the OTOC of the chaotic subset grows faster than
the maximally mixed one, and coherent states on an island scramble less
than those in the sea.
"""
import numpy as np

from kct.floquet import build_sector_floquet, eigendecompose
from kct.husimi import percival_partition
from kct.otoc import coherent_state_otoc_scan, fit_growth_rate, largest_sector_otoc, mixture_otoc
from kct.spin import coherent_state_matrix, sector_m1

twice_j, alpha, beta = 200, 1.5, np.pi / 2
eig = eigendecompose(build_sector_floquet(twice_j, 0, alpha, beta))
labels = percival_partition(eig, twice_j, (96, 96))
chaotic = [c.index for c in labels if c.label == "chaotic"]
print(f"{len(chaotic)} of {eig.dim} Floquet states are chaotic")

a = np.diag(sector_m1(twice_j, 0))
times = np.arange(0, 21)
mixed = largest_sector_otoc(twice_j, alpha, beta, times, eig=eig)
rho = mixture_otoc(eig, a, a, chaotic, times)
print(f"growth rate, maximally mixed: {fit_growth_rate(mixed, (1, 4)).lam:.3f}")
print(f"growth rate, chaotic states:  {fit_growth_rate(rho, (1, 4)).lam:.3f}")

# The pole region dtheta = +-pi is a large regular island at this coupling;
# dtheta = 0 sits in the sea.
island = coherent_state_matrix(twice_j, np.full(5, 0.95 * np.pi), np.linspace(0, 4 * np.pi, 5, endpoint=False))
sea = coherent_state_matrix(twice_j, np.full(5, 0.3), np.linspace(0.5, 4 * np.pi, 5, endpoint=False))
print("time-averaged OTOC on the island:", np.round(coherent_state_otoc_scan(eig, a, a, island), 1))
print("time-averaged OTOC in the sea:   ", np.round(coherent_state_otoc_scan(eig, a, a, sea), 1))
