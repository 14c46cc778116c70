"""Directed lane-centerline graph: construction, projection, routing.

Nodes are lane endpoints, edges are directed lane-center polylines. Input
maps follow the JSON schema
``{"centerlines": [{"id", "points", "lanes", "oneway", "lane_width"?}]}``.
Bidirectional centerlines are split into per-lane directed edges, offset
from the source centerline; endpoints closer than the join tolerance are
merged into shared nodes.
"""

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from trafficforge import geometry
from trafficforge.errors import MapFormatError, OffMapError
from trafficforge.kernels import wrap_angle

JOIN_TOLERANCE = 0.5
MAX_SNAP_DISTANCE = 10.0
DEFAULT_LANE_WIDTH = 3.5
STRAIGHT_THRESHOLD = math.radians(30.0)
U_TURN_THRESHOLD = math.radians(150.0)
HORIZON_DIST = 120.0
MAX_ROUTES = 16
_SEED_SPACING = 1.0
_TIE_EPS = 1e-6


@dataclass
class LaneNode:
    id: int
    position: np.ndarray


class LaneEdge:
    """One directed lane with its centerline polyline and arc-length table."""

    def __init__(self, edge_id, from_node, to_node, polyline, lane_width,
                 one_way, centerline_id):
        self.id = edge_id
        self.from_node = from_node
        self.to_node = to_node
        self.polyline = np.asarray(polyline, dtype=np.float64)
        self.cum = geometry.cumulative_lengths(self.polyline)
        self.length = float(self.cum[-1])
        self.lane_width = lane_width
        self.one_way = one_way
        self.centerline_id = centerline_id
        self.left_neighbor = None   # edge id of the same-direction lane to the left
        self.right_neighbor = None

    def point_at(self, s):
        return geometry.point_at(self.polyline, self.cum, s)


@dataclass
class LaneCoordinate:
    """Position expressed on a lane: arc length, signed offset, lane heading."""

    edge_id: int
    arc_s: float
    lateral_offset: float
    lane_heading: float


class RoadGraph:
    def __init__(self, nodes, edges, adjacency):
        self.nodes = nodes
        self.edges = edges
        self.adjacency = adjacency
        self._kd = None
        self._seed_edges = None

    def outgoing(self, node_id):
        return self.adjacency.get(node_id, ())

    def _ensure_index(self):
        if self._kd is None:
            seeds = []
            owners = []
            for eid in sorted(self.edges):
                pts = geometry.resample_polyline(self.edges[eid].polyline,
                                                 _SEED_SPACING)
                seeds.append(pts)
                owners.extend([eid] * len(pts))
            self._kd = cKDTree(np.vstack(seeds))
            self._seed_edges = np.asarray(owners)

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_kd"] = None
        state["_seed_edges"] = None
        return state

    def candidate_edges(self, point, radius):
        """Edge ids with a sampled seed point within ``radius`` of ``point``."""
        self._ensure_index()
        idx = self._kd.query_ball_point(np.asarray(point, float), radius)
        return sorted({int(self._seed_edges[i]) for i in idx})

    def nearest_seed_distance(self, point):
        self._ensure_index()
        d, _ = self._kd.query(np.asarray(point, float))
        return float(d)


class Route:
    """An ordered edge path with its concatenated centerline geometry."""

    def __init__(self, graph, edge_ids, start, first_edge_partial):
        self.edge_ids = list(edge_ids)
        self.start = start
        pieces = []
        self.edge_spans = []  # (edge_id, route_s_start, arc_on_edge_at_start)
        s_acc = 0.0
        for k, eid in enumerate(self.edge_ids):
            edge = graph.edges[eid]
            arc0 = start.arc_s if (k == 0 and first_edge_partial) else 0.0
            pts = _slice_from(edge.polyline, edge.cum, arc0)
            self.edge_spans.append((eid, s_acc, arc0))
            s_acc += edge.length - arc0
            pieces.append(pts if not pieces else pts[1:])
        poly = geometry.dedupe_points(np.vstack(pieces))
        if len(poly) < 2:
            raise ValueError("route has no drivable length")
        self.polyline = poly
        self.cum = geometry.cumulative_lengths(poly)
        self.total_length = float(self.cum[-1])
        self.cumulative_heading_change = geometry.cumulative_heading_change(poly)
        self.maneuver = classify_maneuver(poly)

    @property
    def u_turn_like(self):
        return abs(self.cumulative_heading_change) > U_TURN_THRESHOLD

    def point_at(self, s):
        return geometry.point_at(self.polyline, self.cum, s)

    def heading_at(self, s):
        s = min(max(s, 0.0), self.total_length)
        return self.point_at(s)[1]

    def project_near(self, point, s_hint, back=5.0, fwd=10.0):
        """Windowed projection around ``s_hint``; returns (s, dist, lateral)."""
        lo_s = max(s_hint - back, 0.0)
        hi_s = min(s_hint + fwd, self.total_length)
        lo = max(bisect_right(self.cum, lo_s) - 1, 0)
        hi = min(bisect_left(self.cum, hi_s) + 1, len(self.polyline) - 1)
        if hi <= lo:
            hi = lo + 1
        return geometry.project_point(self.polyline, self.cum,
                                      np.asarray(point, float), lo, hi)

    def route_s_of(self, edge_id, arc_on_edge):
        """Arc position along the route of a point on one of its edges."""
        for eid, s_start, arc0 in self.edge_spans:
            if eid == edge_id and arc_on_edge >= arc0 - 1e-9:
                return s_start + (arc_on_edge - arc0)
        return None


def _slice_from(pts, cum, s):
    """Sub-polyline from arc length ``s`` to the end."""
    if s <= 1e-12:
        return pts
    p, _ = geometry.point_at(pts, cum, s)
    i = bisect_right(cum, s)
    return np.vstack([p[None, :], pts[i:]]) if i < len(pts) else p[None, :].repeat(2, 0)


def classify_maneuver(route_polyline, straight_threshold=STRAIGHT_THRESHOLD):
    """Label a path left/right/straight by its cumulative heading change.

    Counterclockwise (positive) change at or above the threshold is a left
    turn, the mirror case a right turn, anything smaller straight.
    """
    pts = geometry.dedupe_points(geometry.as_polyline(route_polyline))
    if len(pts) < 2:
        return "straight"
    dpsi = geometry.cumulative_heading_change(pts)
    if dpsi >= straight_threshold:
        return "left"
    if dpsi <= -straight_threshold:
        return "right"
    return "straight"


def build_graph(lane_spec, join_tolerance=JOIN_TOLERANCE,
                default_lane_width=DEFAULT_LANE_WIDTH):
    """Build the directed lane graph from a parsed map description.

    Every centerline contributes one directed edge per lane. One-way
    centerlines keep their drawn direction for all lanes; bidirectional
    ones give the right-hand slots (negative lateral offset) the drawn
    direction and the remaining slots the reverse. Slot offsets are
    ``(slot + 0.5 - lanes/2) * lane_width``.
    """
    centerlines = lane_spec.get("centerlines", [])
    if not centerlines:
        raise MapFormatError("map has no centerlines")

    protos = []  # (polyline, lane_width, one_way, centerline_id, travel_offset)
    for cl in centerlines:
        cid = cl.get("id")
        pts = np.asarray(cl["points"], dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise MapFormatError(f"centerline {cid}: needs >=2 2D points", cid)
        if np.any(geometry.segment_lengths(pts) <= 1e-9):
            raise MapFormatError(
                f"centerline {cid}: duplicate consecutive points", cid)
        lanes = int(cl.get("lanes", 1))
        if lanes < 1:
            raise MapFormatError(f"centerline {cid}: lane count < 1", cid)
        oneway = bool(cl.get("oneway", True))
        width = float(cl.get("lane_width", default_lane_width))
        if width <= 0:
            raise MapFormatError(f"centerline {cid}: lane_width <= 0", cid)

        offsets = [(i + 0.5 - lanes / 2.0) * width for i in range(lanes)]
        if oneway:
            directed = [(off, True) for off in offsets]
        elif lanes == 1:
            directed = [(0.0, True), (0.0, False)]
        else:
            n_fwd = (lanes + 1) // 2
            directed = [(off, i < n_fwd) for i, off in enumerate(offsets)]
        for off, forward in directed:
            poly = geometry.offset_polyline(pts, off) if off != 0.0 else pts.copy()
            if not forward:
                poly = poly[::-1].copy()
            # lateral offset expressed in the travel frame (+left)
            travel_off = off if forward else -off
            protos.append((poly, width, oneway, cid, travel_off, forward))

    nodes = []
    edges = {}

    def node_for(pos):
        best, best_d = None, None
        for n in nodes:  # id order, so exact ties keep the lowest id
            d = float(np.linalg.norm(n.position - pos))
            if d <= join_tolerance and (best is None or d < best_d):
                best, best_d = n, d
        if best is not None:
            return best.id
        nodes.append(LaneNode(len(nodes), pos.copy()))
        return nodes[-1].id

    for eid, (poly, width, oneway, cid, _, _) in enumerate(protos):
        n_from = node_for(poly[0])
        n_to = node_for(poly[-1])
        edges[eid] = LaneEdge(eid, n_from, n_to, poly, width, oneway, cid)

    # same-direction neighbor links for lane changes, per source centerline
    by_source = {}
    for eid, (_, _, _, cid, travel_off, forward) in enumerate(protos):
        by_source.setdefault((cid, forward), []).append((travel_off, eid))
    for group in by_source.values():
        group.sort()  # right to left in the travel frame
        for k in range(len(group) - 1):
            right_eid, left_eid = group[k][1], group[k + 1][1]
            edges[right_eid].left_neighbor = left_eid
            edges[left_eid].right_neighbor = right_eid

    adjacency = {}
    for eid in sorted(edges):
        adjacency.setdefault(edges[eid].from_node, []).append(eid)
    adjacency = {nid: tuple(sorted(eids)) for nid, eids in adjacency.items()}

    return RoadGraph({n.id: n for n in nodes}, edges, adjacency)


def project_to_lane(graph, point, heading_hint=None,
                    max_snap_distance=MAX_SNAP_DISTANCE):
    """Snap a point to the nearest lane edge.

    Ties (equal perpendicular distance within 1e-6 m) are broken by the
    smaller heading difference to ``heading_hint`` when given, else by the
    lower edge id. Raises :class:`OffMapError` past ``max_snap_distance``.
    """
    q = np.asarray(point, dtype=np.float64)
    if not np.all(np.isfinite(q)):
        raise ValueError("query point must be finite")
    d0 = graph.nearest_seed_distance(q)
    if d0 - _SEED_SPACING > max_snap_distance:
        raise OffMapError(d0, max_snap_distance)
    candidates = graph.candidate_edges(q, d0 + _SEED_SPACING)

    hits = []
    for eid in candidates:
        edge = graph.edges[eid]
        s, dist, lateral = geometry.project_point(edge.polyline, edge.cum, q)
        hits.append((dist, eid, s, lateral))
    dmin = min(h[0] for h in hits)
    if dmin > max_snap_distance:
        raise OffMapError(dmin, max_snap_distance)
    ties = [h for h in hits if h[0] <= dmin + _TIE_EPS]

    def heading_of(hit):
        edge = graph.edges[hit[1]]
        return edge.point_at(hit[2])[1]

    if heading_hint is not None and len(ties) > 1:
        winner = min(ties, key=lambda h: (abs(wrap_angle(heading_of(h)
                                                         - heading_hint)),
                                          h[1]))
    else:
        winner = min(ties, key=lambda h: h[1])
    _, eid, s, lateral = winner
    return LaneCoordinate(eid, s, lateral, heading_of(winner))


def enumerate_routes(graph, start, horizon_dist=HORIZON_DIST,
                     max_routes=MAX_ROUTES):
    """Depth-first route enumeration from a lane coordinate.

    A route ends once its drivable length reaches ``horizon_dist`` or a
    dead-end node. Output order is lexicographic by edge-id sequence and
    at most ``max_routes`` routes are returned.
    """
    if horizon_dist <= 0:
        raise ValueError("horizon_dist must be positive")
    first = graph.edges[start.edge_id]
    remaining0 = first.length - start.arc_s

    routes = []
    if remaining0 > 1e-9:
        stack = [((start.edge_id,), remaining0, first.to_node)]
        partial_first = True
    else:
        stack = [((eid,), graph.edges[eid].length, graph.edges[eid].to_node)
                 for eid in reversed(graph.outgoing(first.to_node))]
        partial_first = False

    while stack and len(routes) < max_routes:
        path, dist, node = stack.pop()
        succ = graph.outgoing(node)
        if dist >= horizon_dist or not succ:
            routes.append(Route(graph, path, start, partial_first))
            continue
        for eid in reversed(succ):
            edge = graph.edges[eid]
            stack.append((path + (eid,), dist + edge.length, edge.to_node))
    return routes


def sample_centerline(route, s):
    """Point and heading at arc length ``s`` of a route (bounds-checked)."""
    if s < 0 or s > route.total_length + 1e-9:
        raise ValueError(
            f"arc length {s} outside [0, {route.total_length:.3f}]")
    return route.point_at(min(s, route.total_length))
