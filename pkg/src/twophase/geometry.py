"""Analytic closed interfaces: closest-point projection, normal, curvature.

Every curve is parametrized counterclockwise by ``t in [0, 2*pi)``.  The
outward normal points from the interior phase (minus) to the exterior phase
(plus) and the curvature ``H`` is positive for a convex interior, so a circle
of radius ``R`` has ``H = 1/R`` and the curvature vector ``H n`` points
outward.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NonUniqueProjection, NotStarShaped

KINDS = ("circle", "ellipse", "star")

_N_SEEDS = 256
_NEWTON_TOL = 1e-12
_NEWTON_MAXIT = 60
_CHUNK = 4096


@dataclass(frozen=True)
class InterfaceDescriptor:
    kind: str
    center: tuple = (0.0, 0.0)
    R: float = 0.0
    a: float = 0.0
    b: float = 0.0
    r0: float = 0.0
    amplitude: float = 0.0
    lobes: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown interface kind {self.kind!r}")
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if self.kind == "circle" and not self.R > 0:
            raise ValueError("circle radius must be positive")
        if self.kind == "ellipse" and not (self.a > 0 and self.b > 0):
            raise ValueError("ellipse semi-axes must be positive")
        if self.kind == "star":
            if not self.r0 > 0 or self.lobes < 1:
                raise ValueError("star needs r0 > 0 and lobes >= 1")
            if not 0 <= abs(self.amplitude) < 1:
                raise NotStarShaped("star amplitude must satisfy |amplitude| < 1")

    @classmethod
    def circle(cls, R, center=(0.0, 0.0)):
        return cls("circle", center, R=float(R))

    @classmethod
    def ellipse(cls, a, b, center=(0.0, 0.0)):
        return cls("ellipse", center, a=float(a), b=float(b))

    @classmethod
    def star(cls, r0, amplitude, lobes, center=(0.0, 0.0)):
        return cls("star", center, r0=float(r0), amplitude=float(amplitude), lobes=int(lobes))

    def params(self):
        if self.kind == "circle":
            return {"R": self.R}
        if self.kind == "ellipse":
            return {"a": self.a, "b": self.b}
        return {"r0": self.r0, "amplitude": self.amplitude, "lobes": self.lobes}

    # -- parametrization -------------------------------------------------

    def curve(self, t, nderiv=2):
        """Return ``(gamma, gamma', gamma'')`` at parameters ``t``; arrays of shape (..., 2)."""
        t = np.asarray(t, dtype=float)
        c, s = np.cos(t), np.sin(t)
        cx, cy = self.center
        if self.kind in ("circle", "ellipse"):
            ax, by = (self.R, self.R) if self.kind == "circle" else (self.a, self.b)
            g = np.stack([cx + ax * c, cy + by * s], axis=-1)
            d1 = np.stack([-ax * s, by * c], axis=-1)
            d2 = np.stack([-ax * c, -by * s], axis=-1)
        else:
            A, L, r0 = self.amplitude, self.lobes, self.r0
            r = r0 * (1 + A * np.cos(L * t))
            r1 = -r0 * A * L * np.sin(L * t)
            r2 = -r0 * A * L * L * np.cos(L * t)
            g = np.stack([cx + r * c, cy + r * s], axis=-1)
            d1 = np.stack([r1 * c - r * s, r1 * s + r * c], axis=-1)
            d2 = np.stack([r2 * c - 2 * r1 * s - r * c, r2 * s + 2 * r1 * c - r * s], axis=-1)
        return g, d1, d2

    def param_of_angle(self, theta):
        """Curve parameter of the point seen from the center at polar angle ``theta``."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "ellipse":
            return np.arctan2(self.a * np.sin(theta), self.b * np.cos(theta))
        return theta

    def radius(self, theta):
        """Radial function r(theta) about the center (the curve is star-shaped)."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "circle":
            return np.full_like(theta, self.R)
        if self.kind == "ellipse":
            a, b = self.a, self.b
            return a * b / np.sqrt((b * np.cos(theta)) ** 2 + (a * np.sin(theta)) ** 2)
        return self.r0 * (1 + self.amplitude * np.cos(self.lobes * theta))

    def point_at_angle(self, theta):
        theta = np.asarray(theta, dtype=float)
        r = self.radius(theta)
        return np.stack([self.center[0] + r * np.cos(theta), self.center[1] + r * np.sin(theta)], axis=-1)

    def curvature_at(self, t):
        _, d1, d2 = self.curve(t)
        speed = np.hypot(d1[..., 0], d1[..., 1])
        return (d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]) / speed**3

    @cached_property
    def _curvature_range(self):
        t = np.linspace(0, 2 * np.pi, 8192, endpoint=False)
        H = self.curvature_at(t)
        return float(H.min()), float(H.max())

    @property
    def max_curvature(self):
        return self._curvature_range[1]

    @cached_property
    def perimeter(self):
        t = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
        _, d1, _ = self.curve(t)
        # periodic trapezoid rule: spectrally accurate for smooth closed curves
        return float(np.hypot(d1[:, 0], d1[:, 1]).mean() * 2 * np.pi)

    @cached_property
    def area(self):
        if self.kind == "circle":
            return np.pi * self.R**2
        if self.kind == "ellipse":
            return np.pi * self.a * self.b
        return np.pi * self.r0**2 * (1 + 0.5 * self.amplitude**2)

    def inside(self, x):
        x = np.asarray(x, dtype=float)
        d = x - np.asarray(self.center)
        return np.hypot(d[..., 0], d[..., 1]) < self.radius(np.arctan2(d[..., 1], d[..., 0]))

    # -- projection ----------------------------------------------------------

    def _nearest(self, x):
        """Nearest curve parameter for each row of ``x`` (N, 2); no uniqueness check."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "circle":
            d = x - np.asarray(self.center)
            return np.arctan2(d[:, 1], d[:, 0]), np.ones(len(x), dtype=bool)
        seeds = np.linspace(0, 2 * np.pi, _N_SEEDS, endpoint=False)
        gs, _, _ = self.curve(seeds)
        t = np.empty(len(x))
        for lo in range(0, len(x), _CHUNK):
            xs = x[lo:lo + _CHUNK]
            d2 = ((xs[:, None, :] - gs[None, :, :]) ** 2).sum(-1)
            t[lo:lo + _CHUNK] = seeds[np.argmin(d2, axis=1)]
        converged = np.zeros(len(x), dtype=bool)
        h_seed = 2 * np.pi / _N_SEEDS
        for _ in range(_NEWTON_MAXIT):
            g, d1, d2 = self.curve(t)
            r = g - x
            f = (r * d1).sum(-1)
            sp2 = (d1 * d1).sum(-1)
            converged = np.abs(f) <= _NEWTON_TOL * np.sqrt(sp2)
            if converged.all():
                break
            fp = sp2 + (r * d2).sum(-1)
            step = np.where(fp > 0.1 * sp2, -f / np.where(fp > 0.1 * sp2, fp, 1.0), -f / sp2)
            step = np.clip(step, -h_seed, h_seed)
            step[converged] = 0.0
            # damping: halve until the distance does not grow
            dist0 = (r * r).sum(-1)
            for _ in range(30):
                gn, d1n, _ = self.curve(t + step)
                rn = gn - x
                grow = ((rn * rn).sum(-1) > dist0) & (np.abs((rn * d1n).sum(-1)) >= np.abs(f))
                if not grow.any():
                    break
                step = np.where(grow, 0.5 * step, step)
            t = t + step
        return np.mod(t, 2 * np.pi), converged

    def closest_point(self, x):
        """Closest point on the curve for a point (2,) or array of points (N, 2)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        t, ok = self._nearest(pts)
        p, _, _ = self.curve(t)
        if self.kind == "circle":
            p = self._circle_project(pts)
        if not ok.all():
            raise NonUniqueProjection(
                f"projection did not converge for {int((~ok).sum())} point(s), e.g. {pts[~ok][0]}")
        self._check_tube(pts, p)
        return p[0] if single else p

    def _circle_project(self, pts):
        c = np.asarray(self.center)
        d = pts - c
        r = np.hypot(d[:, 0], d[:, 1])
        with np.errstate(invalid="ignore", divide="ignore"):
            p = c + self.R * d / r[:, None]
        return p

    def _check_tube(self, pts, p):
        dist = np.hypot(*(pts - p).T)
        inside = self.inside(pts)
        Hmin, Hmax = self._curvature_range
        bad = inside & (dist * Hmax >= 1.0 - 1e-12)
        if Hmin < 0:
            bad |= ~inside & (dist * (-Hmin) >= 1.0 - 1e-12)
        if bad.any():
            raise NonUniqueProjection(
                f"point {pts[bad][0]} lies outside the uniqueness tube of the {self.kind}")

    def signed_distance(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if self.kind == "circle":
            d = pts - np.asarray(self.center)
            sd = np.hypot(d[:, 0], d[:, 1]) - self.R
        else:
            t, _ = self._nearest(pts)
            p, _, _ = self.curve(t)
            sd = np.hypot(*(pts - p).T)
            sd = np.where(self.inside(pts), -sd, sd)
        return float(sd[0]) if single else sd

    def parameter_of(self, p):
        """Curve parameter of points already on the curve."""
        p = np.atleast_2d(np.asarray(p, dtype=float))
        d = p - np.asarray(self.center)
        if self.kind == "ellipse":
            return np.arctan2(d[:, 1] / self.b, d[:, 0] / self.a)
        if self.kind == "circle":
            return np.arctan2(d[:, 1], d[:, 0])
        return self._nearest(p)[0]

    def normal_and_curvature(self, p):
        """Outward unit normal and scalar curvature at point(s) on the curve."""
        p = np.asarray(p, dtype=float)
        single = p.ndim == 1
        t = self.parameter_of(p)
        _, d1, d2 = self.curve(t)
        speed = np.hypot(d1[:, 0], d1[:, 1])
        n = np.stack([d1[:, 1], -d1[:, 0]], axis=-1) / speed[:, None]
        H = (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / speed**3
        if self.kind == "circle":
            d = np.atleast_2d(p) - np.asarray(self.center)
            n = d / np.hypot(d[:, 0], d[:, 1])[:, None]
            H = np.full(len(n), 1.0 / self.R)
        return (n[0], float(H[0])) if single else (n, H)


def closest_point(x, desc: InterfaceDescriptor):
    return desc.closest_point(x)


def normal_and_curvature(p, desc: InterfaceDescriptor):
    return desc.normal_and_curvature(p)


def signed_distance(x, desc: InterfaceDescriptor):
    return desc.signed_distance(x)
