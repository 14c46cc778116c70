"""Evaluation metrics: displacement errors, likelihood, validity, diversity.

Displacement errors compare predicted and ground-truth trajectories over a
step horizon. The likelihood score fits, per prediction step, a 2D
Gaussian kernel density over the N sampled positions and evaluates the
ground truth under it. Diversity scores a trajectory by how far it strays
from an idealized straight constant-velocity reference after chord
normalization:

* lateral: W1 distance between the empirical distribution of y values and
  the point mass at y = 0, which reduces to mean(|y|);
* longitudinal: the same W1 form on the second finite difference of x(t),
  i.e. mean(|d2x/dt2|).

The realism check performs PCA on pooled real and simulated trajectories,
fits a Gaussian KDE (Scott bandwidth) on the transformed real set only,
and compares mean log-likelihoods of both sets under that density.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import gaussian_kde

from trafficforge.errors import InsufficientDataError, OffMapError
from trafficforge import road_graph

KDE_COV_REG = 1e-4          # m^2, added to per-step sample covariance
RESAMPLE_POINTS = 35        # common length for the realism check


@dataclass
class Trajectory2D:
    dt: float
    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 2 \
                or len(self.points) < 2:
            raise ValueError("trajectory needs >=2 2D points")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass
class PredictionSet:
    agent_id: int
    ground_truth: Trajectory2D
    samples: list

    def __post_init__(self):
        n = len(self.ground_truth.points)
        if not self.samples:
            raise ValueError("need at least one sample")
        for s in self.samples:
            if len(s.points) != n:
                raise ValueError("samples must match ground-truth horizon")


@dataclass
class DiversityReport:
    y_mean: float
    y_median: float
    xdd_mean: float
    xdd_median: float
    y_values: np.ndarray
    xdd_values: np.ndarray
    n_degenerate: int

    def to_dict(self):
        return {
            "y_wasserstein": {"mean": self.y_mean, "median": self.y_median},
            "xdd_wasserstein": {"mean": self.xdd_mean,
                                "median": self.xdd_median},
            "n_trajectories": int(len(self.y_values)),
            "n_degenerate": self.n_degenerate,
        }


def _check_horizon(traj, horizon_steps):
    if horizon_steps < 1 or horizon_steps >= len(traj.points):
        raise ValueError(
            f"horizon {horizon_steps} outside 1..{len(traj.points) - 1}")


def ade(pred, gt, horizon_steps):
    """Mean Euclidean displacement over prediction steps 1..horizon."""
    _check_horizon(pred, horizon_steps)
    _check_horizon(gt, horizon_steps)
    d = pred.points[1:horizon_steps + 1] - gt.points[1:horizon_steps + 1]
    return float(np.linalg.norm(d, axis=1).mean())


def fde(pred, gt, horizon_steps):
    """Euclidean displacement at the final horizon step."""
    _check_horizon(pred, horizon_steps)
    _check_horizon(gt, horizon_steps)
    return float(np.linalg.norm(pred.points[horizon_steps]
                                - gt.points[horizon_steps]))


def min_over_samples(pset, metric, horizon_steps):
    """Best-of-N value of ``metric`` over the prediction samples."""
    fn = {"ade": ade, "fde": fde}[metric] if isinstance(metric, str) else metric
    return min(fn(s, pset.ground_truth, horizon_steps) for s in pset.samples)


def _gauss_kde_logpdf(samples, query, cov_reg=KDE_COV_REG):
    """Log density of a 2D Gaussian KDE (Scott bandwidth) at one point."""
    n = len(samples)
    cov = np.cov(samples.T) if n > 1 else np.zeros((2, 2))
    cov = np.atleast_2d(cov) + cov_reg * np.eye(2)
    h2 = n ** (-1.0 / 3.0)          # Scott factor squared for d=2
    kernel_cov = cov * h2
    inv = np.linalg.inv(kernel_cov)
    _, logdet = np.linalg.slogdet(kernel_cov)
    diff = query - samples
    quad = np.einsum("ij,jk,ik->i", diff, inv, diff)
    logs = -0.5 * quad - 0.5 * logdet - math.log(2.0 * math.pi)
    return float(logsumexp(logs) - math.log(n))


def nll(pset, horizon_steps, cov_reg=KDE_COV_REG):
    """Mean negative log density of the ground truth under per-step KDEs."""
    if len(pset.samples) < 2:
        raise InsufficientDataError("likelihood needs at least 2 samples")
    _check_horizon(pset.ground_truth, horizon_steps)
    vals = []
    for step in range(1, horizon_steps + 1):
        pts = np.stack([s.points[step] for s in pset.samples])
        vals.append(-_gauss_kde_logpdf(pts, pset.ground_truth.points[step],
                                       cov_reg))
    return float(np.mean(vals))


def validity_ratio(trajs, context, margin=0.5):
    """Fraction of trajectories whose every point lies on the road.

    ``context`` is either a RoadGraph (distance test against centerlines,
    allowing half a lane width plus ``margin``) or a ContextMap raster
    (point must land on a road or lane cell; off-raster is invalid).
    """
    if not trajs:
        raise ValueError("no trajectories")
    valid = 0
    for traj in trajs:
        if isinstance(context, road_graph.RoadGraph):
            ok = all(_on_graph(context, p, margin) for p in traj.points)
        else:
            ok = all(context.is_road(p) for p in traj.points)
        valid += ok
    return valid / len(trajs)


def _on_graph(graph, point, margin):
    try:
        coord = road_graph.project_to_lane(graph, point)
    except OffMapError:
        return False
    half = graph.edges[coord.edge_id].lane_width / 2.0
    return abs(coord.lateral_offset) <= half + margin


def normalize_trajectory(traj):
    """Translate the start to the origin and rotate the chord onto +x."""
    pts = traj.points - traj.points[0]
    chord = pts[-1]
    norm = np.linalg.norm(chord)
    if norm < 1e-9:
        raise ValueError("zero net displacement; cannot normalize")
    c, s = chord / norm
    rot = np.array([[c, s], [-s, c]])
    return Trajectory2D(traj.dt, pts @ rot.T)


def y_wasserstein(traj):
    """W1 distance of the normalized y-values to the point mass at zero.

    Against a point mass the transport cost is exactly the mean absolute
    value, so that closed form is used.
    """
    return float(np.abs(traj.points[:, 1]).mean())


def xdd_wasserstein(traj):
    """W1 distance of longitudinal acceleration to the zero reference.

    x(t) is differentiated twice by central differences at the native dt
    (one-sided second differences at the ends).
    """
    x = traj.points[:, 0]
    if len(x) < 3:
        raise ValueError("need at least 3 points")
    dt2 = traj.dt * traj.dt
    xdd = np.empty(len(x))
    xdd[1:-1] = (x[2:] - 2.0 * x[1:-1] + x[:-2]) / dt2
    xdd[0] = (x[2] - 2.0 * x[1] + x[0]) / dt2
    xdd[-1] = (x[-1] - 2.0 * x[-2] + x[-3]) / dt2
    return float(np.abs(xdd).mean())


def diversity_report(trajs):
    """Per-trajectory diversity values aggregated to mean and median."""
    y_vals, xdd_vals = [], []
    degenerate = 0
    for traj in trajs:
        try:
            norm = normalize_trajectory(traj)
        except ValueError:
            degenerate += 1
            continue
        y_vals.append(y_wasserstein(norm))
        xdd_vals.append(xdd_wasserstein(norm))
    if not y_vals:
        raise InsufficientDataError("no non-degenerate trajectories")
    y_vals = np.asarray(y_vals)
    xdd_vals = np.asarray(xdd_vals)
    return DiversityReport(
        float(y_vals.mean()), float(np.median(y_vals)),
        float(xdd_vals.mean()), float(np.median(xdd_vals)),
        y_vals, xdd_vals, degenerate)


def resample_trajectory(traj, n_points=RESAMPLE_POINTS):
    """Linear time-resampling to a fixed number of points."""
    n = len(traj.points)
    src_t = np.arange(n) * traj.dt
    tgt_t = np.linspace(0.0, src_t[-1], n_points)
    out = np.column_stack([np.interp(tgt_t, src_t, traj.points[:, 0]),
                           np.interp(tgt_t, src_t, traj.points[:, 1])])
    return out


def pca_kde_realism(real, sim, n_components=2, n_eval=1000, rng_seed=0,
                    n_points=RESAMPLE_POINTS):
    """Mean log-likelihood of real and simulated sets under a real-data KDE.

    Trajectories are resampled to a common length, flattened, and reduced
    with a PCA basis fit on the pooled sets. The KDE (Scott bandwidth) is
    fit on the transformed real set only. Returns
    (loglik_real, loglik_sim) in nats.
    """
    if len(real) < max(n_components + 1, 2):
        raise InsufficientDataError(
            f"need at least {n_components + 1} real trajectories")
    if not sim:
        raise InsufficientDataError("need at least 1 simulated trajectory")
    real_v = np.stack([resample_trajectory(t, n_points).ravel() for t in real])
    sim_v = np.stack([resample_trajectory(t, n_points).ravel() for t in sim])

    pooled = np.vstack([real_v, sim_v])
    mean = pooled.mean(axis=0)
    _, _, vt = np.linalg.svd(pooled - mean, full_matrices=False)
    basis = vt[:n_components]
    real_p = (real_v - mean) @ basis.T
    sim_p = (sim_v - mean) @ basis.T

    try:
        kde = gaussian_kde(real_p.T)
    except np.linalg.LinAlgError as exc:
        raise InsufficientDataError(
            f"real set is degenerate under PCA: {exc}") from exc

    rng = np.random.default_rng(rng_seed)
    idx_r = rng.integers(len(real_p), size=n_eval)
    idx_s = rng.integers(len(sim_p), size=n_eval)
    ll_real = float(np.mean(kde.logpdf(real_p[idx_r].T)))
    ll_sim = float(np.mean(kde.logpdf(sim_p[idx_s].T)))
    return ll_real, ll_sim
