"""Regenerate the bundled network files in src/dcflowctl/data."""

from pathlib import Path

import numpy as np

from dcflowctl.netcore import Network
from dcflowctl.netio import save_network

OUT = Path(__file__).resolve().parents[1] / "src" / "dcflowctl" / "data"

# IEEE 39-bus branch data: from, to, r, x (per unit)
CASE39 = """
1 2 0.0035 0.0411
1 39 0.001 0.025
2 3 0.0013 0.0151
2 25 0.007 0.0086
2 30 0 0.0181
3 4 0.0013 0.0213
3 18 0.0011 0.0133
4 5 0.0008 0.0128
4 14 0.0008 0.0129
5 6 0.0002 0.0026
5 8 0.0008 0.0112
6 7 0.0006 0.0092
6 11 0.0007 0.0082
6 31 0 0.025
7 8 0.0004 0.0046
8 9 0.0023 0.0363
9 39 0.001 0.025
10 11 0.0004 0.0043
10 13 0.0004 0.0043
10 32 0 0.02
12 11 0.0016 0.0435
12 13 0.0016 0.0435
13 14 0.0009 0.0101
14 15 0.0018 0.0217
15 16 0.0009 0.0094
16 17 0.0007 0.0089
16 19 0.0016 0.0195
16 21 0.0008 0.0135
16 24 0.0003 0.0059
17 18 0.0007 0.0082
17 27 0.0013 0.0173
19 20 0.0007 0.0138
19 33 0.0007 0.0142
20 34 0.0009 0.018
21 22 0.0008 0.014
22 23 0.0006 0.0096
22 35 0 0.0143
23 24 0.0022 0.035
23 36 0.0005 0.0272
25 26 0.0032 0.0323
25 37 0.0006 0.0232
26 27 0.0014 0.0147
26 28 0.0043 0.0474
26 29 0.0057 0.0625
28 29 0.0014 0.0151
29 38 0.0008 0.0156
"""


def ieee39():
    rows = [line.split() for line in CASE39.strip().splitlines()]
    edges = [(int(a), int(b)) for a, b, _, _ in rows]
    r = np.array([float(x[2]) for x in rows])
    x = np.array([float(x[3]) for x in rows])
    wu = np.round(x / (r**2 + x**2), 10)
    p = np.zeros(39)
    p[38], p[3] = 1.0, -1.0
    return Network.build(edges, w=wu, wl=0.5 * wu, wu=wu, cu=2.6, cl=-2.6, p=p,
                         nodes=list(range(1, 40)),
                         meta={"source": "IEEE 39-bus New England test case, MATPOWER case39 "
                                         "branch data; wu = x/(r^2+x^2); one unit from bus 39 to bus 4"})


def fig1():
    edges = [(1, 2), (1, 3), (2, 4), (3, 4), (3, 2)]
    wu = [1, 3, 1, 1, 1]
    return Network.build(edges, w=wu, wl=[1, 0, 1, 1, 1], wu=wu, cu=[1, 1, 1, 0.5, 1],
                         cl=[-1, -1, -1, -0.5, -1], p=[1, 0, 0, -1],
                         meta={"source": "five-link four-node example network"})


def fig5():
    edges = [("v1", "v2"), ("v1", "v3"), ("v2", "v4"), ("v3", "v4"), ("v3", "v4")]
    wl = np.array([4, 3, 4, 1, 2.0])
    wu = np.array([9, 10, 18, 5, 8.0])
    c = np.array([16, 18, 20, 10, 10.0])
    return Network.build(edges, w=wu, wl=wl, wu=wu, cu=c, cl=-c, p=[1, 0, 0, -1],
                         nodes=["v1", "v2", "v3", "v4"],
                         meta={"source": "tree-reducible series-parallel example network"})


def fig6():
    edges = [(1, 2), (1, 3), (7, 3), (4, 2), (4, 7), (5, 6), (5, 6), (5, 3), (5, 2), (2, 6), (3, 6)]
    m = len(edges)
    rng = np.random.default_rng(6)
    wu = np.round(rng.uniform(1, 4, m), 2)
    wl = np.round(0.5 * wu, 3)
    p = [1.0, -1.5, -1.0, 1.5, 0, 0, 0]
    return Network.build(edges, w=wu, wl=wl, wu=wu, cu=5.0, cl=-5.0, p=p,
                         nodes=list(range(1, 8)),
                         meta={"source": "seven-node reducible example network"})


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    for name, fn in [("fig1", fig1), ("fig5", fig5), ("fig6", fig6), ("ieee39", ieee39)]:
        save_network(fn(), OUT / f"{name}.json")
        print("wrote", name)
