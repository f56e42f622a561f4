"""Grid road network: intersections, directed links, lanes and phases.

Intersection ``(r, c)`` has id ``r * cols + c``. Headings are named by
travel direction; north moves towards row 0. Every side of an
intersection without a neighbour carries one entry link (a source) and
one exit link (a sink).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from ..errors import ConfigError

HEADINGS: Dict[str, Tuple[int, int]] = {"N": (-1, 0), "S": (1, 0), "E": (0, 1), "W": (0, -1)}
LEFT_OF = {"N": "W", "W": "S", "S": "E", "E": "N"}
RIGHT_OF = {v: k for k, v in LEFT_OF.items()}
NS_AXIS = frozenset({"N", "S"})

TURNS = ("left", "through", "right")
NUM_PHASES = 4
PHASE_NAMES = ("NS through+right", "NS left", "EW through+right", "EW left")


def turn_heading(heading: str, turn: str) -> str:
    if turn == "left":
        return LEFT_OF[heading]
    if turn == "right":
        return RIGHT_OF[heading]
    return heading


def phase_for(heading: str, turn: str) -> int:
    base = 0 if heading in NS_AXIS else 2
    return base + (1 if turn == "left" else 0)


@dataclass
class Lane:
    id: str
    link_id: str
    turn: Optional[str]  # None for the single lane of an exit link
    phase: Optional[int]
    out_link: Optional[str]


@dataclass
class Link:
    id: str
    heading: str
    length: float
    kind: str  # "entry", "interior" or "exit"
    from_node: Optional[int]
    to_node: Optional[int]
    lanes: List[Lane] = field(default_factory=list)

    @property
    def is_sink(self) -> bool:
        return self.to_node is None


@dataclass
class Intersection:
    id: int
    row: int
    col: int
    incoming: Dict[str, str] = field(default_factory=dict)  # heading -> link id
    outgoing: Dict[str, str] = field(default_factory=dict)
    # phase index -> approach lane ids served by that phase
    phases: Dict[int, List[str]] = field(default_factory=dict)


@dataclass
class Network:
    rows: int
    cols: int
    link_length: float
    intersections: List[Intersection]
    links: Dict[str, Link]
    lanes: Dict[str, Lane]

    @property
    def sources(self) -> List[str]:
        return sorted(lid for lid, link in self.links.items() if link.kind == "entry")

    @property
    def sinks(self) -> List[str]:
        return sorted(lid for lid, link in self.links.items() if link.kind == "exit")

    @property
    def segments(self) -> int:
        """Undirected road segments: interior pairs plus boundary stubs."""
        interior = sum(1 for link in self.links.values() if link.kind == "interior") // 2
        return interior + len(self.sources)

    def node_at(self, row: int, col: int) -> Optional[int]:
        if 0 <= row < self.rows and 0 <= col < self.cols:
            return row * self.cols + col
        return None

    def approach_lanes(self, node: int) -> List[Lane]:
        inter = self.intersections[node]
        return [lane for h in sorted(inter.incoming) for lane in self.links[inter.incoming[h]].lanes]


def _link_id(kind: str, heading: str, frm: Optional[int], to: Optional[int]) -> str:
    if kind == "entry":
        return f"in{to}{heading}"
    if kind == "exit":
        return f"out{frm}{heading}"
    return f"l{frm}-{to}"


def build_network(rows: int, cols: int, link_length: float = 300.0) -> Network:
    """Build a ``rows`` x ``cols`` grid of four-phase intersections."""
    errors = []
    if not isinstance(rows, int) or rows < 1:
        errors.append(f"rows must be an integer >= 1, got {rows!r}")
    if not isinstance(cols, int) or cols < 1:
        errors.append(f"cols must be an integer >= 1, got {cols!r}")
    if not link_length or link_length <= 0:
        errors.append(f"link_length must be positive, got {link_length!r}")
    if errors:
        raise ConfigError("Network errors:\n" + "\n".join(errors))

    intersections = [Intersection(r * cols + c, r, c) for r in range(rows) for c in range(cols)]
    links: Dict[str, Link] = {}

    def node(r: int, c: int) -> Optional[int]:
        return r * cols + c if 0 <= r < rows and 0 <= c < cols else None

    for inter in intersections:
        for heading, (dr, dc) in HEADINGS.items():
            upstream = node(inter.row - dr, inter.col - dc)
            kind = "interior" if upstream is not None else "entry"
            lid = _link_id(kind, heading, upstream, inter.id)
            links.setdefault(lid, Link(lid, heading, float(link_length), kind, upstream, inter.id))
            inter.incoming[heading] = lid

            downstream = node(inter.row + dr, inter.col + dc)
            kind = "interior" if downstream is not None else "exit"
            lid = _link_id(kind, heading, inter.id, downstream)
            links.setdefault(lid, Link(lid, heading, float(link_length), kind, inter.id, downstream))
            inter.outgoing[heading] = lid

    lanes: Dict[str, Lane] = {}
    for link in links.values():
        if link.is_sink:
            link.lanes.append(Lane(f"{link.id}_0", link.id, None, None, None))
        else:
            out = intersections[link.to_node].outgoing
            for i, turn in enumerate(TURNS):
                link.lanes.append(
                    Lane(f"{link.id}_{i}", link.id, turn, phase_for(link.heading, turn), out[turn_heading(link.heading, turn)])
                )
        for lane in link.lanes:
            lanes[lane.id] = lane

    for inter in intersections:
        inter.phases = {k: [] for k in range(NUM_PHASES)}
        for heading in sorted(inter.incoming):
            for lane in links[inter.incoming[heading]].lanes:
                inter.phases[lane.phase].append(lane.id)

    return Network(rows, cols, float(link_length), intersections, links, lanes)


__all__ = [
    "HEADINGS",
    "LEFT_OF",
    "RIGHT_OF",
    "TURNS",
    "NUM_PHASES",
    "PHASE_NAMES",
    "turn_heading",
    "phase_for",
    "Lane",
    "Link",
    "Intersection",
    "Network",
    "build_network",
]
