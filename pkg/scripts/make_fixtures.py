"""Regenerate the bundled fixture dataset under src/geoexplore/data/fixtures.

Three small synthetic graphs on different continents, each built so the
start node is at least 11 hops from every dead end.
"""

import json
import math
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "geoexplore" / "data" / "fixtures"
STEP_M = 25.0
R_M = 6371000.0


def offset(lat, lon, east_m, north_m):
    dlat = math.degrees(north_m / R_M)
    dlon = math.degrees(east_m / (R_M * math.cos(math.radians(lat))))
    return round(lat + dlat, 7), round(lon + dlon, 7)


class Builder:
    def __init__(self, graph_id, continent, difficulty, origin, city, country):
        self.doc = {"graph_id": graph_id, "continent": continent, "difficulty": difficulty, "nodes": [], "edges": []}
        self.origin = origin
        self.city, self.country, self.continent = city, country, continent

    def node(self, east_m, north_m, street):
        nid = f"n{len(self.doc['nodes']):02d}"
        lat, lon = offset(*self.origin, east_m, north_m)
        self.doc["nodes"].append(
            {
                "id": nid,
                "lat": lat,
                "lon": lon,
                # vary the camera's reference heading from node to node
                "heading_ref": float((len(self.doc["nodes"]) * 37) % 360),
                "labels": {"street": street, "city": self.city, "country": self.country, "continent": self.continent},
            }
        )
        return nid

    def edge(self, u, v):
        self.doc["edges"].append({"from": u, "to": v})


def plus_graph():
    b = Builder("fx-plus", "eu", "easy", (48.85837, 2.29448), "Paris", "France")
    centre = b.node(0, 0, "Rue de la Croix")
    b.doc["start_node"] = centre
    arms = [((1, 0), "Rue de l'Est"), ((0, 1), "Rue du Nord"), ((-1, 0), "Rue de l'Ouest"), ((0, -1), "Rue du Sud")]
    for (dx, dy), street in arms:
        prev = centre
        for k in range(1, 12):
            # slight curve so bearings are not exact multiples of 90
            bend = 0.08 * k * k
            n = b.node(dx * k * STEP_M - dy * bend, dy * k * STEP_M + dx * bend, street)
            b.edge(prev, n)
            prev = n
    return b.doc


def ladder_graph():
    b = Builder("fx-ladder", "as", "medium", (35.6595, 139.7005), "Tokyo", "Japan")
    n_rail = 25
    north, south = [], []
    for k in range(n_rail):
        north.append(b.node(k * STEP_M, 30.0, "Koen-dori"))
    for k in range(n_rail):
        south.append(b.node(k * STEP_M, 0.0, "Inokashira-dori"))
    for k in range(n_rail - 1):
        b.edge(north[k], north[k + 1])
        b.edge(south[k], south[k + 1])
    for k in range(4, n_rail - 4, 4):
        b.edge(north[k], south[k])
    # dead-end spurs at the four corners
    for rail, dy in ((north, 1), (south, -1)):
        for end, dx in ((rail[0], -1), (rail[-1], 1)):
            spur = b.node(
                b_east(b, end) + dx * STEP_M * 0.7, b_north(b, end) + dy * STEP_M * 0.7, "Center-gai"
            )
            b.edge(end, spur)
    b.doc["start_node"] = north[n_rail // 2]
    return b.doc


def b_east(b, nid):
    n = next(x for x in b.doc["nodes"] if x["id"] == nid)
    lat0, lon0 = b.origin
    return math.radians(n["lon"] - lon0) * R_M * math.cos(math.radians(lat0))


def b_north(b, nid):
    n = next(x for x in b.doc["nodes"] if x["id"] == nid)
    return math.radians(n["lat"] - b.origin[0]) * R_M


def loop_graph():
    b = Builder("fx-loop", "sa", "hard", (-34.6037, -58.3816), "Buenos Aires", "Argentina")
    ring = []
    m = 16
    radius = m * STEP_M / (2 * math.pi)
    for k in range(m):
        a = 2 * math.pi * k / m
        ring.append(b.node(radius * math.cos(a), radius * math.sin(a), "Avenida Circular"))
    for k in range(m):
        b.edge(ring[k], ring[(k + 1) % m])
    for idx, street in ((0, "Calle Levante"), (m // 2, "Calle Poniente")):
        a = 2 * math.pi * idx / m
        prev = ring[idx]
        for k in range(1, 12):
            r = radius + k * STEP_M
            n = b.node(r * math.cos(a), r * math.sin(a) + 3.0 * math.sin(k), street)
            b.edge(prev, n)
            prev = n
    # start on the ring, a quarter turn from both tails
    b.doc["start_node"] = ring[m // 4]
    return b.doc


# a short scripted run per graph, used by the demo and the end-to-end checks
REPLAY = {
    "episodes": {
        "fx-plus": [
            "The facades look Haussmann-era.\n```action\nROTATE 90\n```",
            "```action\nMOVE\n```",
            "```action\nMOVE\n```",
            "Street sign partly visible.\n```action\nROTATE -45 \nMOVE\n```",
            '```action\nGUESS 48.8606, 2.3376 "France/Paris" 0.7\n```',
        ],
        "fx-ladder": [
            "```action\nMOVE\n```",
            "```action\nROTATE 180\n```",
            "Left-hand traffic, vending machines on the corner. ROTATE 15",
            '```action\nGUESS 35.6895, 139.6917 "Japan/Tokyo/Shinjuku-dori" 0.55\n```',
        ],
        "fx-loop": [
            "```action\nROTATE 45\nMOVE\n```",
            "```action\nMOVE\n```",
            "```action\nnot sure yet\n```",
            '```action\nGUESS -34.9011, -56.1645 "Uruguay/Montevideo" 0.4\n```',
        ],
    }
}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    entries = []
    for doc, who in ((plus_graph(), "synthetic-plus"), (ladder_graph(), "synthetic-ladder"), (loop_graph(), "synthetic-loop")):
        name = f"{doc['graph_id']}.json"
        (OUT / name).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        entries.append({"file": name, "proposed_by": who})
    (OUT / "replay.json").write_text(json.dumps(REPLAY, indent=2) + "\n", encoding="utf-8")
    (OUT / "manifest.json").write_text(json.dumps({"graphs": entries}, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
