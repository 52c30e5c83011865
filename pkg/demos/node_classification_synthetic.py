"""End-to-end node classification on a synthetic two-community graph.

Builds a stochastic-block-model graph whose two communities also differ in
feature space, then exercises the full pipeline: affine encoder -> attention
coupling from the encoded state -> Euler-unrolled dynamics -> linear decoder,
trained with exact reverse-mode gradients through the whole unroll.

Part 1 shows the representation mechanics at a fresh initialization: the
source-free diffusion collapses the node states together exponentially as
the horizon grows (by T=64 the spread is ~1e-5 of its start), while the
oscillator dynamics' per-node frequency term keeps the states apart at every
horizon.

Part 2 trains both models. On a toy this small and homophilic, smoothing
inside communities is genuinely useful and learnable attention can slow the
collapse, so both variants classify well here; the accuracy-versus-depth
separation is a benchmark-scale effect (see the depth-sweep command in the
README). What the toy does show faithfully is the pipeline end to end and
the spread diagnostics that detect collapse.

Run:  python demos/node_classification_synthetic.py   (about a minute)
"""

import numpy as np

import kuramoto_gnn as kg
from kuramoto_gnn import model as mdl

rng = np.random.default_rng(0)
n, f = 60, 8
labels = np.arange(n) % 2

# stochastic block model: dense inside a community, sparse across
inside, across = 0.25, 0.04
prob = np.where(labels[:, None] == labels[None, :], inside, across)
upper = np.triu(rng.random((n, n)) < prob, k=1)
i, j = np.nonzero(upper)
src = np.concatenate([i, j])
dst = np.concatenate([j, i])
feats = rng.standard_normal((n, f))
feats[labels == 0, 0] += 1.2
feats[labels == 1, 0] -= 1.2

g = kg.build_graph(n, src, dst, feats, labels, 2, name="two-communities")
g, kept = kg.largest_connected_component(g)
print(f"graph: {g.n} nodes, {g.num_edges} directed edges, "
      f"{g.num_classes} classes\n")

variants = (
    ("oscillator", "kuramoto", {}),
    ("diffusion, no source", "grand_modified", {"beta0": 0.0, "learn_beta": False}),
)

print("=== part 1: state spread at a fresh initialization ===")
print(f"{'model':>22} {'T':>5} {'spread X(0)':>12} {'spread X(T)':>12}")
for name, dynamics, extra in variants:
    for t_end in (1.0, 8.0, 64.0):
        p = mdl.init_params(g, 16, heads=2, d_k=8, strength=1.0, t_end=t_end,
                            dt=0.1, dynamics=dynamics, seed=0, **extra)
        _, tape = mdl.forward(g, p)
        s0 = kg.pairwise_distance_stats(tape.states[0])[0]
        s_t = kg.pairwise_distance_stats(tape.states[-1])[0]
        print(f"{name:>22} {t_end:5.0f} {s0:12.2e} {s_t:12.2e}")
print()

print("=== part 2: trained accuracy (6 labels per class) ===")
split = kg.make_split(g, per_class=6, val=10, seed=1)
print(f"{'model':>22} {'T':>5} {'test acc':>9} {'trained spread':>15}")
for name, dynamics, extra in variants:
    for t_end in (1.0, 4.0, 16.0):
        cfg = kg.TrainConfig(
            max_epochs=150, lr=0.02, weight_decay=5e-4, patience=60, seed=0,
            dropout=0.2, strength=1.0, t_end=t_end, dt=0.1, hidden_dim=16,
            heads=2, d_k=8, dynamics=dynamics, **extra,
        )
        params, result = kg.train_node_classifier(g, split, cfg)
        print(f"{name:>22} {t_end:5.0f} {result.test_acc_at_best_val:9.3f} "
              f"{result.final_sync.max_pairwise:15.3e}")

print("\nThe oscillator model never collapses its representations; the")
print("diffusion baseline starts from a collapsing regime and must spend its")
print("attention capacity fighting it as depth grows.")
