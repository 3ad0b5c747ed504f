"""Two-arc rail-head profile and its constrained least-squares fit.

The modeled head segment is a small shoulder arc (radius r1) joined
tangentially to the large crown arc (radius r2 > r1). Both arcs are
parametrized by the polar angle alpha about their own center,

    p(alpha) = C1 + r1 (cos a, sin a)   for alpha <= beta1 (shoulder)
    p(alpha) = C2 + r2 (cos a, sin a)   for alpha >  beta1 (crown)

where beta1 = atan2(z_C1 - z_C2, y_C1 - y_C2) is the tangency direction;
internal tangency requires |C1 - C2| = r2 - r1. The profile origin is
the crown apex (directly above C2), which is the reference point the
geometry pipeline uses for each rail.

Fitting a measured cross-section cloud means minimizing the sum of
squared radial distances over the four center coordinates
x = (y_C1, z_C1, y_C2, z_C2), subject to the tangency constraint

    g(x) = |C1 - C2|^2 - (r2 - r1)^2 = 0,

solved via the Lagrange stationarity system (5 nonlinear equations) with
a damped Newton iteration. Arc membership of each point is re-assigned
from the current centers at every outer iteration, so each inner solve
works on a smooth objective. The recovered rigid pose (origin position
and roll) follows from the fitted centers versus the nominal template.

The shipped default template uses representative UIC-54-style radii
(80 mm shoulder, 300 mm crown) with widened angular coverage so that a
single camera constrains the pose well; it is configuration data, not a
standardized profile.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCloudError, EmptyCloudError

_CENTER_EPS = 1e-12
_COLLINEAR_TOL = 1e-9


@dataclass(frozen=True)
class RailProfileTemplate:
    r1: float
    r2: float
    c1: np.ndarray  # (2,) nominal shoulder center, profile frame
    c2: np.ndarray  # (2,) nominal crown center, profile frame
    alpha_min: float
    alpha_max: float

    def __post_init__(self):
        object.__setattr__(self, "c1", np.asarray(self.c1, dtype=float).reshape(2))
        object.__setattr__(self, "c2", np.asarray(self.c2, dtype=float).reshape(2))
        if not (0.0 < self.r1 < self.r2):
            raise ValueError("need 0 < r1 < r2")
        gap = np.linalg.norm(self.c1 - self.c2) - (self.r2 - self.r1)
        if abs(gap) > 1e-9:
            raise ValueError(f"centers violate tangency by {gap:.2e} m")
        if not (self.alpha_min < self.beta1 < self.alpha_max):
            raise ValueError("angular range must straddle the tangency angle")

    @property
    def beta1(self):
        d = self.c1 - self.c2
        return np.arctan2(d[1], d[0])

    @classmethod
    def from_geometry(cls, r1, r2, beta1, alpha_min, alpha_max):
        """Build a template from radii and the tangency direction.

        The crown apex sits at the profile-frame origin.
        """
        c2 = np.array([0.0, -r2])
        c1 = c2 + (r2 - r1) * np.array([np.cos(beta1), np.sin(beta1)])
        return cls(r1, r2, c1, c2, alpha_min, alpha_max)

    @classmethod
    def default(cls):
        return cls.from_geometry(
            r1=0.080,
            r2=0.300,
            beta1=np.deg2rad(86.0),
            alpha_min=np.deg2rad(45.0),
            alpha_max=np.deg2rad(100.0),
        )

    def nominal_x(self):
        return np.concatenate([self.c1, self.c2])

    def point(self, alpha):
        """Profile point(s) at the given parameter angle(s)."""
        alpha = np.asarray(alpha, dtype=float)
        if np.any(alpha < self.alpha_min - 1e-12) or np.any(alpha > self.alpha_max + 1e-12):
            raise ValueError("alpha outside the modeled profile range")
        return _curve_point(self.nominal_x(), self.r1, self.r2, alpha)

    def height(self, s2):
        """Head height above the crown apex as a function of lateral offset."""
        s2 = np.asarray(s2, dtype=float)
        y_t1 = self.c2[0] + self.r2 * np.cos(self.beta1)
        shoulder = s2 > y_t1
        z = np.where(
            shoulder,
            self.c1[1] + np.sqrt(np.maximum(self.r1**2 - (s2 - self.c1[0]) ** 2, 0.0)),
            self.c2[1] + np.sqrt(np.maximum(self.r2**2 - (s2 - self.c2[0]) ** 2, 0.0)),
        )
        return z

    def lateral_span(self):
        """(min, max) lateral coordinate of the modeled segment."""
        y_lo = float(self.point(self.alpha_max)[0])
        y_hi = float(self.point(self.alpha_min)[0])
        return y_lo, y_hi

    def curve_centroid(self, n=512):
        alphas = np.linspace(self.alpha_min, self.alpha_max, n)
        return self.point(alphas).mean(axis=0)

    def sample_points(self, n, rng=None, pose=(0.0, 0.0, 0.0), noise=0.0, alpha_range=None):
        """Synthetic cloud generator: template points moved by a rigid pose.

        pose = (ty, tz, roll); used as the independent oracle in fit tests.
        """
        lo, hi = alpha_range if alpha_range is not None else (self.alpha_min, self.alpha_max)
        if rng is None:
            alphas = np.linspace(lo, hi, n)
        else:
            alphas = np.sort(rng.uniform(lo, hi, n))
        pts = self.point(alphas)
        ty, tz, roll = pose
        c, s = np.cos(roll), np.sin(roll)
        rot = np.array([[c, -s], [s, c]])
        pts = pts @ rot.T + np.array([ty, tz])
        if noise > 0.0:
            if rng is None:
                raise ValueError("noise requires an rng")
            pts = pts + rng.normal(0.0, noise, pts.shape)
        return pts


def _curve_point(x, r1, r2, alpha):
    """Evaluate the two-arc curve for center state x at parameter alpha."""
    alpha = np.asarray(alpha, dtype=float)
    c1, c2 = x[:2], x[2:]
    beta1 = np.arctan2(c1[1] - c2[1], c1[0] - c2[0])
    on_arc1 = alpha <= beta1
    r = np.where(on_arc1, r1, r2)
    cy = np.where(on_arc1, c1[0], c2[0])
    cz = np.where(on_arc1, c1[1], c2[1])
    return np.stack([cy + r * np.cos(alpha), cz + r * np.sin(alpha)], axis=-1)


def profile_point(template, alpha):
    """Point on the nominal template at parameter alpha."""
    return template.point(alpha)


def assign_arcs(x, points):
    """Boolean mask: True where a point belongs to the shoulder arc.

    Membership follows the polar angle about the shoulder center; ties at
    the tangency direction resolve to the shoulder.
    """
    pts = np.atleast_2d(points)
    c1, c2 = x[:2], x[2:]
    beta1 = np.arctan2(c1[1] - c2[1], c1[0] - c2[0])
    d1 = pts - c1
    if np.any(np.hypot(d1[:, 0], d1[:, 1]) < _CENTER_EPS):
        raise DegenerateCloudError("point coincides with an arc center")
    a1 = np.arctan2(d1[:, 1], d1[:, 0])
    return a1 <= beta1


def assign_alpha(x, point):
    """Parameter angle of one point under the current center state."""
    pts = np.asarray(point, dtype=float).reshape(1, 2)
    on_arc1 = assign_arcs(x, pts)[0]
    c = x[:2] if on_arc1 else x[2:]
    d = pts[0] - c
    if np.hypot(d[0], d[1]) < _CENTER_EPS:
        raise DegenerateCloudError("point coincides with an arc center")
    return float(np.arctan2(d[1], d[0]))


def _objective(x, r1, r2, points, arc1_mask):
    """Sum of squared radial distances with analytic gradient and Hessian."""
    f = 0.0
    grad = np.zeros(4)
    hess = np.zeros((4, 4))
    eye = np.eye(2)
    for sel, c, r, sl in ((arc1_mask, x[:2], r1, slice(0, 2)), (~arc1_mask, x[2:], r2, slice(2, 4))):
        pts = points[sel]
        if len(pts) == 0:
            continue
        v = c - pts  # (m, 2)
        rho = np.hypot(v[:, 0], v[:, 1])
        if np.any(rho < _CENTER_EPS):
            raise DegenerateCloudError("point coincides with an arc center")
        d = rho - r
        f += float(np.sum(d * d))
        u = v / rho[:, None]
        grad[sl] = 2.0 * np.sum(d[:, None] * u, axis=0)
        uut = np.einsum("mi,mj->mij", u, u)
        h = 2.0 * np.sum(uut + (d / rho)[:, None, None] * (eye - uut), axis=0)
        hess[sl, sl] = h
    return f, grad, hess


def _constraint(x, r1, r2):
    dy, dz = x[0] - x[2], x[1] - x[3]
    val = dy * dy + dz * dz - (r2 - r1) ** 2
    grad = 2.0 * np.array([dy, dz, -dy, -dz])
    hess = np.zeros((4, 4))
    hess[:2, :2] = hess[2:, 2:] = 2.0 * np.eye(2)
    hess[:2, 2:] = hess[2:, :2] = -2.0 * np.eye(2)
    return val, grad, hess


@dataclass
class FitResult:
    x: np.ndarray  # fitted (y_C1, z_C1, y_C2, z_C2)
    lam: float
    u_origin: np.ndarray  # (2,) profile origin in the cloud frame
    roll: float  # profile roll in the cloud frame [rad]
    rms_residual: float
    iterations: int
    converged: bool
    n_points: int
    merit_history: list = field(default_factory=list)  # one list per assignment round
    constraint_residual: float = 0.0


def _pose_from_centers(x, template):
    beta1_fit = np.arctan2(x[1] - x[3], x[0] - x[2])
    roll = beta1_fit - template.beta1
    roll = np.arctan2(np.sin(roll), np.cos(roll))
    c, s = np.cos(roll), np.sin(roll)
    rot = np.array([[c, -s], [s, c]])
    origin = x[2:] - rot @ template.c2
    return origin, float(roll)


def fit_profile(points, template, x0=None, max_iter=50, grad_tol=1e-9, constraint_tol=1e-10):
    """Fit the two-arc template to a 2D cross-section cloud.

    Returns a FitResult; converged means the stationarity residual and the
    tangency constraint are both below tolerance. Raises
    DegenerateCloudError for clouds that cannot constrain the fit.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if len(points) < 5:
        raise EmptyCloudError(f"need at least 5 points, got {len(points)}")
    centered = points - points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[-1] < _COLLINEAR_TOL:
        raise DegenerateCloudError("cloud is collinear within tolerance")

    r1, r2 = template.r1, template.r2
    if x0 is None:
        x0 = template.nominal_x() + np.tile(points.mean(axis=0) - template.curve_centroid(), 2)
    x = np.asarray(x0, dtype=float).copy()
    lam = 0.0
    merit_history = []
    converged = False
    it = 0

    def kkt(xv, lv, mask):
        f, g, h = _objective(xv, r1, r2, points, mask)
        cval, cgrad, chess = _constraint(xv, r1, r2)
        res = g + lv * cgrad
        merit = float(res @ res + cval * cval)
        return f, res, cval, cgrad, h + lv * chess, merit

    # Alternate: freeze the arc assignment, run damped Newton on the
    # 5-equation stationarity system to convergence, re-assign, repeat
    # until the assignment is stable (or the iteration budget runs out).
    mask = assign_arcs(x, points)
    while it < max_iter:
        inner_converged = False
        round_history = []
        merit_history.append(round_history)
        while it < max_iter:
            it += 1
            f, res, cval, cgrad, hess, merit = kkt(x, lam, mask)
            round_history.append(merit)
            if np.linalg.norm(res) < grad_tol and abs(cval) < constraint_tol:
                inner_converged = True
                break
            jac = np.zeros((5, 5))
            jac[:4, :4] = hess
            jac[:4, 4] = cgrad
            jac[4, :4] = cgrad
            rhs = -np.concatenate([res, [cval]])
            try:
                delta = np.linalg.solve(jac, rhs)
            except np.linalg.LinAlgError:
                delta = np.linalg.lstsq(jac, rhs, rcond=None)[0]
            step = 1.0
            accepted = False
            for _ in range(20):
                x_try = x + step * delta[:4]
                lam_try = lam + step * delta[4]
                try:
                    merit_try = kkt(x_try, lam_try, mask)[5]
                except DegenerateCloudError:
                    merit_try = np.inf
                if merit_try < merit:
                    x, lam = x_try, lam_try
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break
        new_mask = assign_arcs(x, points)
        if np.array_equal(new_mask, mask):
            converged = inner_converged
            break
        mask = new_mask

    mask = assign_arcs(x, points)
    f, g, _ = _objective(x, r1, r2, points, mask)
    cval, cgrad, _ = _constraint(x, r1, r2)
    res_norm = float(np.linalg.norm(g + lam * cgrad))
    converged = converged or (res_norm < grad_tol and abs(cval) < constraint_tol)
    origin, roll = _pose_from_centers(x, template)
    return FitResult(
        x=x,
        lam=float(lam),
        u_origin=origin,
        roll=roll,
        rms_residual=float(np.sqrt(f / len(points))),
        iterations=it,
        converged=bool(converged),
        n_points=len(points),
        merit_history=merit_history,
        constraint_residual=float(cval),
    )


def wear_report(points, fit, template):
    """Signed normal offsets of cloud points from the fitted profile.

    Positive offsets lie outside the arcs (material above the template),
    negative inside (material removed). Returns (alpha, offset) arrays in
    cloud order; alpha locates each point along the fitted profile.
    """
    if not fit.converged:
        raise ValueError("wear report requires a converged fit")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    mask = assign_arcs(fit.x, points)
    c = np.where(mask[:, None], fit.x[:2], fit.x[2:])
    r = np.where(mask, template.r1, template.r2)
    d = points - c
    rho = np.hypot(d[:, 0], d[:, 1])
    alpha = np.arctan2(d[:, 1], d[:, 0])
    return alpha, rho - r
