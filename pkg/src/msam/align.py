"""Rigid 2-D alignment of two landmark maps through shared tag ids.

A minimal sample is two correspondences: the rotation comes from the
direction of the segment between them in each map, the translation from
the first pair. The best hypothesis (most inliers, then smallest summed
inlier error) is refit on its inliers in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from msam.core import Se2Transform, wrap_angle
from msam.errors import AlignmentError, DegenerateSampleError, InsufficientDataError, InvalidInputError


@dataclass(frozen=True)
class Correspondence:
    tag_id: int
    p1: tuple[float, float]
    p2: tuple[float, float]


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 500
    inlier_threshold: float = 0.5
    min_pair_separation: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise InvalidInputError("iterations must be >= 1")
        if not self.inlier_threshold > 0:
            raise InvalidInputError("inlier_threshold must be > 0")
        if self.min_pair_separation < 0:
            raise InvalidInputError("min_pair_separation must be >= 0")


@dataclass(frozen=True)
class AlignmentResult:
    """``transform`` maps map-2 coordinates into map 1's frame."""

    transform: Se2Transform
    inlier_ids: tuple[int, ...]
    mean_inlier_error: float


def find_correspondences(map1, map2) -> list[Correspondence]:
    """Pairs for tags present in both ``{tag: (x, y)}`` maps, ascending by tag."""
    out = []
    for t in sorted(set(map1) & set(map2)):
        a, b = np.asarray(map1[t], dtype=float), np.asarray(map2[t], dtype=float)
        if a.shape != (2,) or b.shape != (2,) or not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise InvalidInputError(f"landmark {t} must be a finite (x, y) pair")
        out.append(Correspondence(int(t), (float(a[0]), float(a[1])), (float(b[0]), float(b[1]))))
    return out


def estimate_rotation(c1: Correspondence, c2: Correspondence, min_separation: float = 0.2) -> float:
    d1 = np.subtract(c2.p1, c1.p1)
    d2 = np.subtract(c2.p2, c1.p2)
    if math.hypot(*d1) < min_separation or math.hypot(*d2) < min_separation:
        raise DegenerateSampleError(f"tags {c1.tag_id} and {c2.tag_id} are closer than {min_separation} m")
    return wrap_angle(math.atan2(d1[1], d1[0]) - math.atan2(d2[1], d2[0]))


def estimate_translation(theta: float, c: Correspondence) -> tuple[float, float]:
    cs, sn = math.cos(theta), math.sin(theta)
    x2, y2 = c.p2
    return c.p1[0] - (cs * x2 - sn * y2), c.p1[1] - (sn * x2 + cs * y2)


def refit_inliers(corrs) -> Se2Transform:
    """Least-squares rigid fit of ``p1 ≈ R p2 + t`` over ``corrs``."""
    if len(corrs) < 2:
        raise InsufficientDataError("refit needs at least 2 correspondences")
    P1 = np.array([c.p1 for c in corrs])
    P2 = np.array([c.p2 for c in corrs])
    m1, m2 = P1.mean(axis=0), P2.mean(axis=0)
    Q1, Q2 = P1 - m1, P2 - m2
    if not (np.any(np.hypot(*Q1.T) > 0) and np.any(np.hypot(*Q2.T) > 0)):
        raise DegenerateSampleError("all inlier points coincide")
    cross = np.sum(Q2[:, 0] * Q1[:, 1] - Q2[:, 1] * Q1[:, 0])
    dot = np.sum(Q2 * Q1)
    theta = math.atan2(cross, dot)
    t = m1 - Se2Transform(theta).apply(m2)
    return Se2Transform(theta, float(t[0]), float(t[1]))


def _errors(T: Se2Transform, P1, P2):
    return np.hypot(*(P1 - T.apply(P2)).T)


def ransac_align(corrs, cfg: RansacConfig | None = None) -> AlignmentResult:
    """Estimate the transform taking map-2 points onto map-1 points.

    Hypotheses are drawn serially from ``cfg.seed``, so the result is
    deterministic for a given seed.
    """
    cfg = cfg or RansacConfig()
    corrs = list(corrs)
    if len(corrs) < 2:
        raise InsufficientDataError(f"need at least 2 shared landmarks, found {len(corrs)}")
    P1 = np.array([c.p1 for c in corrs])
    P2 = np.array([c.p2 for c in corrs])
    rng = np.random.default_rng(cfg.seed)

    best = None  # (count, error sum, mask)
    for _ in range(cfg.iterations):
        i, j = rng.choice(len(corrs), size=2, replace=False)
        try:
            theta = estimate_rotation(corrs[i], corrs[j], cfg.min_pair_separation)
        except DegenerateSampleError:
            continue
        T = Se2Transform(theta, *estimate_translation(theta, corrs[i]))
        err = _errors(T, P1, P2)
        mask = err <= cfg.inlier_threshold
        count, total = int(mask.sum()), float(err[mask].sum())
        if best is None or count > best[0] or (count == best[0] and total < best[1]):
            best = (count, total, mask)

    if best is None or best[0] < 2:
        raise AlignmentError("no hypothesis reached 2 inliers")
    inliers = [c for c, keep in zip(corrs, best[2]) if keep]
    T = refit_inliers(inliers)
    err = _errors(T, P1[best[2]], P2[best[2]])
    return AlignmentResult(T, tuple(c.tag_id for c in inliers), float(err.mean()))


def align_maps(map1, map2, cfg: RansacConfig | None = None) -> AlignmentResult:
    """:func:`ransac_align` over the tags shared by two ``{tag: (x, y)}`` maps."""
    return ransac_align(find_correspondences(map1, map2), cfg)
