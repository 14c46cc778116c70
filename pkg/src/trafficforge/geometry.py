"""Planar polyline geometry: arc length, interpolation, projection, offsets.

All polylines are (N, 2) float64 arrays in meters. Headings are radians in
(-pi, pi], counterclockwise positive, 0 along +x.
"""

import numpy as np

from trafficforge.kernels import wrap_angle


def as_polyline(points):
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ValueError("polyline needs shape (N>=2, 2)")
    return pts


def segment_lengths(pts):
    return np.linalg.norm(np.diff(pts, axis=0), axis=1)


def cumulative_lengths(pts):
    """Arc length at every vertex; cum[0] = 0, cum[-1] = total length."""
    cum = np.empty(len(pts))
    cum[0] = 0.0
    np.cumsum(segment_lengths(pts), out=cum[1:])
    return cum


def polyline_length(pts):
    return float(segment_lengths(pts).sum())


def segment_headings(pts):
    d = np.diff(pts, axis=0)
    return np.arctan2(d[:, 1], d[:, 0])


def point_at(pts, cum, s):
    """Point and heading at arc length ``s``.

    At an interior vertex the heading of the *following* segment is
    returned; at the very end, the last segment's.
    """
    if s < -1e-9 or s > cum[-1] + 1e-9:
        raise ValueError(f"arc length {s} outside [0, {cum[-1]}]")
    s = min(max(s, 0.0), float(cum[-1]))
    i = int(np.searchsorted(cum, s, side="right")) - 1
    i = min(max(i, 0), len(pts) - 2)
    seg = cum[i + 1] - cum[i]
    t = 0.0 if seg <= 0.0 else (s - cum[i]) / seg
    p = pts[i] + t * (pts[i + 1] - pts[i])
    d = pts[i + 1] - pts[i]
    return p, float(np.arctan2(d[1], d[0]))


def project_point(pts, cum, q, lo=0, hi=None):
    """Project ``q`` onto the polyline (segments lo..hi-1).

    Returns (s, distance, signed_lateral) where the lateral offset is
    positive when ``q`` lies left of the local travel direction.
    """
    if hi is None:
        hi = len(pts) - 1
    a = pts[lo:hi]
    b = pts[lo + 1:hi + 1]
    d = b - a
    seg2 = np.einsum("ij,ij->i", d, d)
    seg2[seg2 == 0.0] = 1.0
    t = np.clip(np.einsum("ij,ij->i", q - a, d) / seg2, 0.0, 1.0)
    foot = a + t[:, None] * d
    diff = q - foot
    dist2 = np.einsum("ij,ij->i", diff, diff)
    k = int(np.argmin(dist2))
    s = float(cum[lo + k] + t[k] * np.sqrt(seg2[k]))
    cross = d[k, 0] * (q[1] - a[k, 1]) - d[k, 1] * (q[0] - a[k, 0])
    dist = float(np.sqrt(dist2[k]))
    lateral = dist if cross > 0.0 else -dist
    return s, dist, lateral


def resample_polyline(pts, step):
    """Evenly spaced points every ``step`` meters (endpoints included)."""
    cum = cumulative_lengths(pts)
    total = float(cum[-1])
    n = max(int(np.ceil(total / step)), 1)
    s_values = np.linspace(0.0, total, n + 1)
    out = np.empty((n + 1, 2))
    out[:, 0] = np.interp(s_values, cum, pts[:, 0])
    out[:, 1] = np.interp(s_values, cum, pts[:, 1])
    return out


def cumulative_heading_change(pts):
    """Signed total heading change over the polyline, unwrapped per segment."""
    h = segment_headings(pts)
    if len(h) < 2:
        return 0.0
    return float(sum(wrap_angle(h[i + 1] - h[i]) for i in range(len(h) - 1)))


def offset_polyline(pts, offset):
    """Parallel offset; positive moves left of the travel direction.

    Vertex normals are averaged between adjacent segments with the miter
    length capped at 2x to keep sharp corners bounded.
    """
    d = np.diff(pts, axis=0)
    lens = np.linalg.norm(d, axis=1)
    lens[lens == 0.0] = 1.0
    n = np.column_stack([-d[:, 1], d[:, 0]]) / lens[:, None]
    vertex_n = np.empty_like(pts)
    vertex_n[0] = n[0]
    vertex_n[-1] = n[-1]
    if len(pts) > 2:
        avg = n[:-1] + n[1:]
        norm = np.linalg.norm(avg, axis=1)
        norm[norm < 1e-12] = 1.0
        avg = avg / norm[:, None]
        # miter scale: 1 / cos(theta/2), capped
        cos_half = np.clip(np.einsum("ij,ij->i", avg, n[:-1]), 0.5, 1.0)
        vertex_n[1:-1] = avg / cos_half[:, None]
    return pts + offset * vertex_n


def dedupe_points(pts, tol=1e-9):
    """Drop consecutive duplicates (within tol) from a point sequence."""
    keep = [0]
    for i in range(1, len(pts)):
        if np.linalg.norm(pts[i] - pts[keep[-1]]) > tol:
            keep.append(i)
    return pts[keep]
