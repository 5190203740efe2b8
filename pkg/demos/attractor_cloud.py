"""
Sampling the attractor
======================

Long-time states from several starts form a cloud.  With a double-well
nonlinearity the cloud settles on a stationary state (here the origin).  We
measure how close the acoustic cloud gets to the Robin one and estimate a box
dimension for a synthetic curve for reference.
"""

import numpy as np

from robin_acoustic import dynamics as dyn
from robin_acoustic.integrate import initial_data_A, random_state_R
from robin_acoustic.mesh import build_mesh
from robin_acoustic.model import Problem, builtin

mesh = build_mesh(40)
rng = np.random.default_rng(11)
nl = builtin("cubic_minus_linear", lam=0.5)
starts = [random_state_R(mesh, rng, 2.0) for _ in range(6)]

cloud_R = dyn.omega_cloud(Problem("R"), starts, burn_in=20.0, T=25.0, stride=50,
                          dt=1e-2, mesh=mesh, nl=nl, threads=4)
h0 = cloud_R.norm(mesh)
print(f"R cloud: {len(cloud_R.points)} points, largest norm {max(map(h0, cloud_R.points)):.2e}")

eps = 0.5
starts_A = [initial_data_A(s.u, s.v, np.zeros(2), np.zeros(2), eps, mesh) for s in starts]
cloud_A = dyn.omega_cloud(Problem("A", eps), starts_A, burn_in=20.0, T=25.0, stride=50,
                          dt=1e-2, mesh=mesh, nl=nl, threads=4)
proj = [dyn.project(z) for z in cloud_A.points]
d = dyn.hausdorff_semidist(proj, cloud_R.points, h0)
print(f"semidistance of projected A cloud to R cloud: {d:.3e}")

# A helix sampled densely should look one dimensional
t = np.linspace(0, 4 * np.pi, 2000)
helix = np.column_stack([np.cos(t), np.sin(t), 0.2 * t]) / 4
fit = dyn.box_counting_dim(helix, np.geomspace(3e-3, 3e-2, 20))
print(f"box dimension of a helix: {fit.rate:.2f}")
