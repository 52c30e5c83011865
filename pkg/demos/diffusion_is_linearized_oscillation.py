"""The linear diffusion update is the small-amplitude limit of sin coupling.

With identical frequencies and unit coupling strength, replacing
sin(x_j - x_i) by its first-order Taylor term gives exactly the graph
diffusion dX = (A - I) X. This script measures the gap between the two
right-hand sides as the state amplitude shrinks: the sin remainder is cubic,
so every 10x amplitude reduction shrinks the gap 1000x.

Run:  python demos/diffusion_is_linearized_oscillation.py
"""

import numpy as np

import kuramoto_gnn as kg

g = kg.generate_synthetic("erdos_renyi", 16, 3, seed=1, p=0.3)
g, _ = kg.largest_connected_component(g)
a = kg.uniform_coupling(g)

spec_osc = kg.DynamicsSpec(kind="kuramoto_identical", coupling=a, strength=1.0)
spec_lin = kg.DynamicsSpec(kind="grand_linear", coupling=a)

base = np.random.default_rng(7).uniform(-1.0, 1.0, (g.n, 3))
print(f"{'amplitude':>12} {'max |osc - lin|':>18} {'ratio to previous':>18}")
prev = None
for eps in (1.0, 1e-1, 1e-2, 1e-3, 1e-4):
    x = eps * base
    gap = np.abs(kg.rhs_identical(x, spec_osc) - kg.rhs_grand_linear(x, spec_lin)).max()
    ratio = "" if prev is None else f"{prev / gap:18.1f}"
    print(f"{eps:12.0e} {gap:18.3e} {ratio}")
    prev = gap

print("\nEach 10x smaller amplitude shrinks the gap ~1000x: the deviation is cubic,")
print("so diffusion-style message passing is what the oscillator model does near")
print("a synchronized (collapsed) state, and the sin interaction only adds")
print("behavior away from it.")

# The modified diffusion with a source term restores the initial state's pull
x0 = 0.5 * base
spec_mod = kg.DynamicsSpec(kind="grand_modified", coupling=a, alpha=1.0, beta=0.7, x0=x0)
dx = kg.rhs_grand_modified(x0, spec_mod)
print(f"\nmodified diffusion at X = X(0): ||dX - 0.7 X(0)||_inf = "
      f"{np.abs(dx - 0.7 * x0 - kg.rhs_grand_linear(x0, spec_lin)).max():.2e} "
      "(source term adds exactly beta X(0))")
