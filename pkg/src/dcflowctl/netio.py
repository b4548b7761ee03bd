"""JSON network files (schema 1) and bundled example networks."""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path

import numpy as np

from dcflowctl.netcore import Network, NetworkError

SCHEMA = 1
BUNDLED = ("fig1", "fig5", "fig6", "ieee39")


def _num(x: float):
    x = float(x)
    return int(x) if x.is_integer() and abs(x) < 2**53 else x


def network_to_dict(net: Network) -> dict:
    d: dict = {"schema": SCHEMA}
    if net.meta.get("source"):
        d["source"] = net.meta["source"]
    d["nodes"] = [{"id": v, "p": _num(net.p[k])} for k, v in enumerate(net.nodes)]
    d["links"] = [
        {"id": lid, "tail": net.nodes[int(net.tail[i])], "head": net.nodes[int(net.head[i])],
         "w": _num(net.w[i]), "wl": _num(net.wl[i]), "wu": _num(net.wu[i]),
         "cl": _num(net.cl[i]), "cu": _num(net.cu[i])}
        for i, lid in enumerate(net.link_ids)
    ]
    return d


def dumps(net: Network) -> str:
    return json.dumps(network_to_dict(net), indent=1) + "\n"


def network_from_dict(d: dict) -> Network:
    if d.get("schema") != SCHEMA:
        raise NetworkError(f"unsupported schema {d.get('schema')!r}")
    try:
        nodes = [n["id"] for n in d["nodes"]]
        p = [float(n.get("p", 0.0)) for n in d["nodes"]]
        pos = {v: k for k, v in enumerate(nodes)}
        links = d["links"]
        tail = [pos[l["tail"]] for l in links]
        head = [pos[l["head"]] for l in links]
        wu = [float(l["wu"]) for l in links]
        w = [float(l.get("w", l["wu"])) for l in links]
        wl = [float(l.get("wl", l["wu"])) for l in links]
        cl = [float(l["cl"]) for l in links]
        cu = [float(l["cu"]) for l in links]
        lids = tuple(l["id"] for l in links)
    except KeyError as exc:
        raise NetworkError(f"missing or unknown field {exc}") from None
    except (TypeError, ValueError) as exc:
        raise NetworkError(f"bad field value: {exc}") from None
    meta = {"source": d["source"]} if "source" in d else {}
    return Network(nodes=tuple(nodes), link_ids=lids, tail=tail, head=head,
                   w=w, wl=wl, wu=wu, cl=cl, cu=cu, p=p, meta=meta)


def loads(text: str) -> Network:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"malformed JSON: {exc}") from None
    return network_from_dict(d)


def load_network(path) -> Network:
    """Load a network file, or a bundled network by name (fig1, fig5, fig6, ieee39)."""
    text = read_network_text(path)
    return loads(text)


def read_network_text(path) -> str:
    s = str(path)
    if not Path(s).exists():
        stem = s[:-5] if s.endswith(".json") else s
        if stem in BUNDLED:
            return resources.files("dcflowctl").joinpath("data", f"{stem}.json").read_text()
    return Path(s).read_text()


def save_network(net: Network, path) -> None:
    Path(path).write_text(dumps(net))


def input_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def bundled(name: str) -> Network:
    return load_network(name)


def scaled_bounds(net: Network, wl_scale: float | None = None) -> Network:
    """Copy of net with wl = wl_scale * wu and w clipped into the new box."""
    if wl_scale is None:
        return net
    if not 0 <= wl_scale <= 1:
        raise NetworkError("wl scale must lie in [0, 1]")
    wl = wl_scale * net.wu
    return net.replace(wl=wl, w=np.clip(net.w, wl, net.wu))
