//! Waypoint paths and the corridor geometry built on them.
//!
//! A path is an ordered chain of line segments, each with a half-width
//! defining a capsule around it. The controller keeps the vehicle inside the
//! union of these capsules through a normalized signed distance function that
//! is 1 on a segment's centerline, 0 on the capsule boundary, and negative
//! outside. The normalized quadratic form (rather than a metric distance) is
//! smooth inside the capsule, which the constraint linearization relies on.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type PlanarPoint = Vector2<f64>;

const MIN_SEGMENT_LENGTH: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("a path needs at least two waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("segment {0} is degenerate (length < {MIN_SEGMENT_LENGTH} m)")]
    DegenerateSegment(usize),
    #[error("segment {0} has non-positive half-width {1}")]
    NonPositiveWidth(usize, f64),
    #[error("expected {expected} half-widths for {expected} segments, got {got}")]
    WidthCountMismatch { expected: usize, got: usize },
}

/// One corridor piece: the line segment from `start` to `end` with a capsule
/// of radius `half_width` around it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: PlanarPoint,
    pub end: PlanarPoint,
    pub half_width: f64,
}

impl Segment {
    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    /// Unit direction from start to end.
    pub fn direction(&self) -> PlanarPoint {
        (self.end - self.start) / self.length()
    }

    /// Heading angle of the segment direction, radians in (-pi, pi].
    pub fn heading(&self) -> f64 {
        let d = self.end - self.start;
        d.y.atan2(d.x)
    }

    /// Point at normalized parameter `h` in [0, 1].
    pub fn point_at(&self, h: f64) -> PlanarPoint {
        self.start + (self.end - self.start) * h
    }
}

/// Normalized projection parameter of `p` onto the segment, clamped to [0, 1].
pub fn segment_parameter(p: &PlanarPoint, seg: &Segment) -> f64 {
    let d = seg.end - seg.start;
    let h = (p - seg.start).dot(&d) / d.norm_squared();
    h.clamp(0.0, 1.0)
}

/// Normalized signed distance of `p` to the segment's capsule:
/// `(w² − ‖p − closest‖²) / w²`. Positive strictly inside, 1 on the
/// centerline, 0 on the boundary.
pub fn segment_sdf(p: &PlanarPoint, seg: &Segment) -> f64 {
    let h = segment_parameter(p, seg);
    let closest = seg.point_at(h);
    let w2 = seg.half_width * seg.half_width;
    (w2 - (p - closest).norm_squared()) / w2
}

/// Value and gradient (w.r.t. `p`) of [`segment_sdf`].
///
/// Because `p − closest` is orthogonal to the segment direction wherever the
/// projection is interior, the gradient is `−2 (p − closest) / w²` for both
/// the interior and the clamped cases.
pub fn segment_sdf_with_gradient(p: &PlanarPoint, seg: &Segment) -> (f64, PlanarPoint) {
    let h = segment_parameter(p, seg);
    let closest = seg.point_at(h);
    let w2 = seg.half_width * seg.half_width;
    let diff = p - closest;
    ((w2 - diff.norm_squared()) / w2, diff * (-2.0 / w2))
}

/// An ordered chain of corridor segments with cached cumulative arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    segments: Vec<Segment>,
    /// Arc length at the start of each segment; `cum_start[0] == 0`.
    cum_start: Vec<f64>,
    total_length: f64,
}

/// Result of projecting a point onto a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathProjection {
    /// Arc length of the closest point, in [0, total_length].
    pub arc_length: f64,
    /// Index of the chosen segment (0-based).
    pub seg_index: usize,
    pub closest: PlanarPoint,
    pub distance: f64,
}

/// Build a path from consecutive waypoints and per-segment half-widths.
pub fn build_path(waypoints: &[PlanarPoint], half_widths: &[f64]) -> Result<Path, PathError> {
    if waypoints.len() < 2 {
        return Err(PathError::TooFewWaypoints(waypoints.len()));
    }
    let n_seg = waypoints.len() - 1;
    if half_widths.len() != n_seg {
        return Err(PathError::WidthCountMismatch {
            expected: n_seg,
            got: half_widths.len(),
        });
    }
    let mut segments = Vec::with_capacity(n_seg);
    let mut cum_start = Vec::with_capacity(n_seg);
    let mut total = 0.0;
    for i in 0..n_seg {
        let seg = Segment {
            start: waypoints[i],
            end: waypoints[i + 1],
            half_width: half_widths[i],
        };
        if seg.length() < MIN_SEGMENT_LENGTH {
            return Err(PathError::DegenerateSegment(i));
        }
        if half_widths[i] <= 0.0 {
            return Err(PathError::NonPositiveWidth(i, half_widths[i]));
        }
        cum_start.push(total);
        total += seg.length();
        segments.push(seg);
    }
    Ok(Path {
        segments,
        cum_start,
        total_length: total,
    })
}

impl Path {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    /// Arc length at the start of segment `i`.
    pub fn segment_start(&self, i: usize) -> f64 {
        self.cum_start[i]
    }

    pub fn min_half_width(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.half_width)
            .fold(f64::INFINITY, f64::min)
    }

    /// Combined corridor signed distance: the maximum of the per-segment
    /// values, non-negative iff `p` lies inside the union of capsules.
    pub fn sdf(&self, p: &PlanarPoint) -> f64 {
        self.segments
            .iter()
            .map(|s| segment_sdf(p, s))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Value and gradient of the combined signed distance.
    ///
    /// The gradient is taken from the maximizing segment; on ties the
    /// larger-index segment wins, consistent with the projection tie-break.
    pub fn sdf_with_gradient(&self, p: &PlanarPoint) -> (f64, PlanarPoint) {
        let mut best = (f64::NEG_INFINITY, PlanarPoint::zeros());
        for seg in &self.segments {
            let (v, g) = segment_sdf_with_gradient(p, seg);
            if v >= best.0 {
                best = (v, g);
            }
        }
        best
    }

    /// Closest point on the path.
    ///
    /// Ties between equidistant segments are broken toward the larger arc
    /// length, so progress measured through the projection cannot move
    /// backward at corners.
    pub fn project(&self, p: &PlanarPoint) -> PathProjection {
        let mut best: Option<PathProjection> = None;
        for (i, seg) in self.segments.iter().enumerate() {
            let h = segment_parameter(p, seg);
            let closest = seg.point_at(h);
            let distance = (p - closest).norm();
            let arc_length = self.cum_start[i] + h * seg.length();
            let replace = match &best {
                None => true,
                Some(b) => distance < b.distance || (distance == b.distance && arc_length > b.arc_length),
            };
            if replace {
                best = Some(PathProjection {
                    arc_length,
                    seg_index: i,
                    closest,
                    distance,
                });
            }
        }
        best.expect("path has at least one segment")
    }

    /// Point and heading at arc length `s` (clamped to [0, total_length]).
    ///
    /// At an interior waypoint the heading of the outgoing segment is
    /// returned, so a reference sampled across a corner already points into
    /// the turn.
    pub fn sample(&self, s: f64) -> (PlanarPoint, f64) {
        let s = s.clamp(0.0, self.total_length);
        // Last segment whose start is <= s; exact waypoint hits pick the
        // outgoing segment.
        let idx = self
            .cum_start
            .partition_point(|&start| start <= s)
            .saturating_sub(1);
        let seg = &self.segments[idx];
        let h = ((s - self.cum_start[idx]) / seg.length()).clamp(0.0, 1.0);
        (seg.point_at(h), seg.heading())
    }
}
