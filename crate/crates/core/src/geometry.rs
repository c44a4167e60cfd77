use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::MINIATURE_SCALE;

/// Identity of a coordinate frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameId {
    /// The 1:14 physical sand table.
    #[serde(rename = "mini")]
    PhysicalMiniature,
    /// Full-scale (virtual, real-road-sized) frame. All coordinator state lives here.
    #[serde(rename = "full")]
    FullScale,
}

/// A registered coordinate frame: an identity plus its length ratio to full scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub id: FrameId,
    pub scale_to_full: f64,
}

impl Frame {
    pub const MINIATURE: Frame = Frame {
        id: FrameId::PhysicalMiniature,
        scale_to_full: MINIATURE_SCALE,
    };
    pub const FULL: Frame = Frame {
        id: FrameId::FullScale,
        scale_to_full: 1.0,
    };

    pub fn of(id: FrameId) -> Frame {
        match id {
            FrameId::PhysicalMiniature => Frame::MINIATURE,
            FrameId::FullScale => Frame::FULL,
        }
    }

    /// Converts a length (or speed) expressed in this frame to full scale.
    pub fn to_full(&self, length: f64) -> f64 {
        length * self.scale_to_full
    }

    /// Converts a full-scale length (or speed) into this frame.
    pub fn from_full(&self, length: f64) -> f64 {
        length / self.scale_to_full
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let wrapped = theta - two_pi * ((theta - PI) / two_pi).ceil();
    // ceil() can land exactly on -π through rounding
    if wrapped <= -PI {
        wrapped + two_pi
    } else {
        wrapped
    }
}

/// Planar pose: position in meters and heading in radians, wrapped to `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }
}

/// Re-expresses a pose from one frame in another. Positions scale, heading does not.
pub fn convert_pose(p: Pose2D, from: Frame, to: Frame) -> Pose2D {
    if from.id == to.id {
        return p;
    }
    let k = from.scale_to_full / to.scale_to_full;
    Pose2D {
        x: p.x * k,
        y: p.y * k,
        theta: p.theta,
    }
}

/// Euclidean remainder for floats, result in `[0, m)` up to rounding.
pub(crate) fn modulo(a: f64, m: f64) -> f64 {
    let r = a % m;
    if r < 0.0 {
        r + m
    } else {
        r
    }
}

/// Forward distance along a loop of length `lap` from `s_follower` to `s_leader`,
/// in `(0, lap]`. Coincident positions read as one full lap.
pub fn forward_gap(lap: f64, s_follower: f64, s_leader: f64) -> f64 {
    let d = modulo(s_leader - s_follower, lap);
    if d <= 0.0 {
        lap
    } else {
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum TrackError {
    #[error("track needs at least 3 distinct waypoints, got {0}")]
    DegenerateTrack(usize),
    #[error("landmark E at {landmark} m is outside [0, {lap})")]
    LandmarkOutOfRange { landmark: f64, lap: f64 },
    #[error("waypoint {0} is not finite")]
    NonFinite(usize),
}

/// Result of projecting a pose onto the centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackProjection {
    /// Arc-length of the nearest centerline point, in `[0, lap_length)`.
    pub s: f64,
    /// Signed distance to the centerline, positive left of the travel direction.
    pub lateral_error: f64,
    /// Pose heading minus the centerline tangent heading.
    pub heading_error: f64,
}

/// Closed experiment track in full-scale meters, parameterized by arc-length.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    centerline: Vec<[f64; 2]>,
    cumulative: Vec<f64>,
    lap_length: f64,
    landmark_e: f64,
}

/// Maximum centerline spacing, full-scale meters.
pub const MAX_WAYPOINT_SPACING: f64 = 0.25;

/// Full-scale lap length of the built-in loop (17.5 m on the sand table).
pub const MCCT_LOOP_LAP: f64 = 17.5 * MINIATURE_SCALE;
/// Radius of the built-in loop's semicircular ends, full-scale meters.
pub const MCCT_LOOP_RADIUS: f64 = 20.0;

impl Track {
    /// The built-in "mcct-loop": two straights along x joined by semicircles,
    /// travelled counter-clockwise. Landmark E sits at the start of the lower
    /// straight, which is also arc-length zero.
    pub fn mcct_loop() -> Track {
        let r = MCCT_LOOP_RADIUS;
        let arc_segments = (PI * r / MAX_WAYPOINT_SPACING).ceil() as usize;
        let chord = 2.0 * r * (PI / (2.0 * arc_segments as f64)).sin();
        // size the straights so the polyline perimeter is exactly the quoted lap
        let straight = (MCCT_LOOP_LAP - 2.0 * arc_segments as f64 * chord) / 2.0;
        let straight_segments = (straight / MAX_WAYPOINT_SPACING).ceil() as usize;
        let half = straight / 2.0;

        let mut pts = Vec::with_capacity(2 * (arc_segments + straight_segments) + 1);
        for i in 0..straight_segments {
            let f = i as f64 / straight_segments as f64;
            pts.push([-half + f * straight, -r]);
        }
        for i in 0..arc_segments {
            let a = -PI / 2.0 + PI * i as f64 / arc_segments as f64;
            pts.push([half + r * a.cos(), r * a.sin()]);
        }
        for i in 0..straight_segments {
            let f = i as f64 / straight_segments as f64;
            pts.push([half - f * straight, r]);
        }
        for i in 0..arc_segments {
            let a = PI / 2.0 + PI * i as f64 / arc_segments as f64;
            pts.push([-half + r * a.cos(), r * a.sin()]);
        }
        Track::from_waypoints(pts, 0.0).expect("built-in loop is well formed")
    }

    /// Builds a track from a waypoint loop. The loop is closed if needed and
    /// long segments are subdivided to [`MAX_WAYPOINT_SPACING`].
    pub fn from_waypoints(points: Vec<[f64; 2]>, landmark_e: f64) -> Result<Track, TrackError> {
        if let Some(i) = points.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(TrackError::NonFinite(i));
        }
        let mut distinct: Vec<[f64; 2]> = Vec::with_capacity(points.len());
        for p in points {
            if distinct.last() != Some(&p) {
                distinct.push(p);
            }
        }
        while distinct.len() > 1 && distinct.first() == distinct.last() {
            distinct.pop();
        }
        let mut unique: Vec<[f64; 2]> = Vec::with_capacity(3);
        for p in &distinct {
            if unique.len() == 3 {
                break;
            }
            if !unique.contains(p) {
                unique.push(*p);
            }
        }
        if unique.len() < 3 {
            return Err(TrackError::DegenerateTrack(unique.len()));
        }

        let n = distinct.len();
        let mut centerline = Vec::with_capacity(n + 1);
        for i in 0..n {
            let a = distinct[i];
            let b = distinct[(i + 1) % n];
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            let pieces = ((len / MAX_WAYPOINT_SPACING).ceil() as usize).max(1);
            for k in 0..pieces {
                let f = k as f64 / pieces as f64;
                centerline.push([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
            }
        }
        centerline.push(distinct[0]);

        let mut cumulative = Vec::with_capacity(centerline.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in centerline.windows(2) {
            acc += ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
            cumulative.push(acc);
        }
        if !(0.0..acc).contains(&landmark_e) {
            return Err(TrackError::LandmarkOutOfRange {
                landmark: landmark_e,
                lap: acc,
            });
        }
        Ok(Track {
            centerline,
            cumulative,
            lap_length: acc,
            landmark_e,
        })
    }

    pub fn lap_length(&self) -> f64 {
        self.lap_length
    }

    pub fn landmark_e(&self) -> f64 {
        self.landmark_e
    }

    /// Closed centerline; the last point repeats the first.
    pub fn centerline(&self) -> &[[f64; 2]] {
        &self.centerline
    }

    /// Wraps an arbitrary arc-length into `[0, lap_length)`.
    pub fn wrap_s(&self, s: f64) -> f64 {
        let w = modulo(s, self.lap_length);
        if w >= self.lap_length {
            0.0
        } else {
            w
        }
    }

    fn segment_heading(&self, i: usize) -> f64 {
        let a = self.centerline[i];
        let b = self.centerline[i + 1];
        (b[1] - a[1]).atan2(b[0] - a[0])
    }

    /// Centerline pose (position and tangent heading) at arc-length `s`.
    pub fn point_at(&self, s: f64) -> Pose2D {
        let s = self.wrap_s(s);
        // index of the segment containing s
        let i = match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => i.min(self.centerline.len() - 2),
            Err(i) => i - 1,
        };
        let a = self.centerline[i];
        let b = self.centerline[i + 1];
        let len = self.cumulative[i + 1] - self.cumulative[i];
        let f = if len > 0.0 { (s - self.cumulative[i]) / len } else { 0.0 };
        Pose2D::new(
            a[0] + f * (b[0] - a[0]),
            a[1] + f * (b[1] - a[1]),
            self.segment_heading(i),
        )
    }

    /// Nearest-point projection of a pose onto the centerline.
    pub fn project(&self, p: Pose2D) -> TrackProjection {
        let mut best = (f64::INFINITY, 0usize, 0.0f64);
        for i in 0..self.centerline.len() - 1 {
            let a = self.centerline[i];
            let b = self.centerline[i + 1];
            let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
            let len2 = dx * dx + dy * dy;
            let f = (((p.x - a[0]) * dx + (p.y - a[1]) * dy) / len2).clamp(0.0, 1.0);
            let (fx, fy) = (a[0] + f * dx, a[1] + f * dy);
            let d2 = (p.x - fx).powi(2) + (p.y - fy).powi(2);
            if d2 < best.0 {
                best = (d2, i, f);
            }
        }
        let (_, i, f) = best;
        let a = self.centerline[i];
        let b = self.centerline[i + 1];
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len = (dx * dx + dy * dy).sqrt();
        let (fx, fy) = (a[0] + f * dx, a[1] + f * dy);
        let cross = dx * (p.y - fy) - dy * (p.x - fx);
        let dist = best.0.sqrt();
        TrackProjection {
            s: self.wrap_s(self.cumulative[i] + f * len),
            lateral_error: if cross >= 0.0 { dist } else { -dist },
            heading_error: wrap_angle(p.theta - dy.atan2(dx)),
        }
    }

    /// Forward distance from follower to leader along the travel direction, in `(0, lap]`.
    pub fn signed_gap(&self, s_follower: f64, s_leader: f64) -> f64 {
        forward_gap(self.lap_length, s_follower, s_leader)
    }
}
