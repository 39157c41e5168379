"""Smoke test for the pprviz_py extension.

Build and install first, e.g. `maturin develop --release` inside
crates/pyo3, then run `python python/smoke_test.py`.
"""

import json
import math
import tempfile
from pathlib import Path

import pprviz_py as pv


def two_triangles():
    edges = [(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3), (2, 3)]
    return edges + [(v, u) for u, v in edges]


def main():
    g = pv.Graph(6, two_triangles())
    assert (g.node_count, g.edge_count) == (6, 14), g

    # two-node cycle closed form: pi(v0, v1) = a(1-a) / (1 - (1-a)^2)
    cycle = pv.Graph(2, [(0, 1), (1, 0)])
    pi = pv.ppr_vector(cycle, 0, alpha=0.2)
    assert abs(pi[1] - 0.2 * 0.8 / (1 - 0.64)) < 1e-8
    assert abs(pv.exact_level_dppr(cycle, [0], [1]) - pi[1]) < 1e-8

    h = pv.Hierarchy(g, 5)
    parts = sorted(sorted(h.leaves(c)) for c in h.children(h.root))
    assert parts == [[0, 1, 2], [3, 4, 5]], parts

    tau, tau_star = pv.dpr(g, 5)
    assert abs(sum(tau) - 1) < 1e-9 and tau_star > 0

    est = pv.estimate_dppr(g, h, h.root)
    exact = pv.estimate_dppr(g, h, h.root, engine="pi-oracle")
    eps, delta = 1 - math.exp(-1), 1 / 50
    for i in range(2):
        for j in range(2):
            if i != j:
                err = abs(est[i][j] - exact[i][j])
                assert err <= max(eps * delta, eps * exact[i][j]), (est, exact)

    dist = pv.pdist_matrix(exact, g.node_count)
    assert dist[0][0] == 0 and dist[0][1] == dist[1][0] >= 2

    tri = pv.layout([[0, 3, 3], [3, 0, 3], [3, 3, 0]], seed=1)
    assert abs(pv.nd(tri["coords"]) - 3 / 9) < 1e-6
    assert pv.ulcv(tri["coords"], [(0, 1), (1, 2), (0, 2)]) < 1e-6

    with tempfile.TemporaryDirectory() as tmp:
        src = Path(tmp) / "g.el"
        src.write_text(pv.power_law_graph(200, 2, seed=3).to_edge_list())
        ws, outcome = pv.Workspace.preprocess(str(src), str(Path(tmp) / "ws"), k=5)
        assert outcome == "built"
        _, again = pv.Workspace.preprocess(str(src), str(Path(tmp) / "ws"), k=5)
        assert again == "up-to-date"
        view = ws.visualize(seed=7)
        assert view == json.loads(ws.visualize_json(seed=7))
        assert len(view["children"]) == len(ws.node(ws.root)["children"])
        try:
            ws.visualize(node=10**6)
        except KeyError:
            pass
        else:
            raise AssertionError("unknown node should raise KeyError")

    print("pprviz_py smoke test ok")


if __name__ == "__main__":
    main()
