//! GPS fixes, time-interpolated mobility traces, and a local equirectangular
//! projection for metric geometry.
//!
//! Positions are WGS-84 degrees. Distances are computed on a local tangent
//! plane: one degree of latitude maps to [`METERS_PER_DEG_LAT`] meters and
//! one degree of longitude to that constant scaled by the cosine of the
//! frame's origin latitude. At the few-kilometer extents this crate deals
//! with, the projection agrees with great-circle distance to well under
//! 0.1%.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("trace {node_id:?} has no fixes")]
    EmptyTrace { node_id: String },
    #[error("trace {node_id:?}: timestamps not strictly increasing at t={t_us}")]
    NonMonotonic { node_id: String, t_us: u64 },
    #[error("trace {node_id:?}: invalid fix at t={t_us}: {reason}")]
    InvalidFix {
        node_id: String,
        t_us: u64,
        reason: String,
    },
    #[error("t={t_us} outside trace span [{start_us}, {end_us}]")]
    OutOfSpan {
        t_us: u64,
        start_us: u64,
        end_us: u64,
    },
    #[error("trace file line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Meters per degree of latitude on the local tangent plane.
pub const METERS_PER_DEG_LAT: f64 = 111_132.95;

/// One timestamped GPS sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GpsFix {
    pub t_us: u64,
    pub lat: f64,
    pub lon: f64,
    /// Ground speed, meters per second.
    pub speed: f64,
    /// Degrees clockwise from north, in [0, 360).
    pub heading: f64,
}

/// Position, speed and heading at an arbitrary instant inside a trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterpSample {
    pub lat: f64,
    pub lon: f64,
    pub speed: f64,
    /// Carried from the nearest fix at or before the query time.
    pub heading: f64,
}

/// A node's GPS track: at least one fix, timestamps strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct MobilityTrace {
    node_id: String,
    fixes: Vec<GpsFix>,
}

impl MobilityTrace {
    pub fn new(node_id: impl Into<String>, fixes: Vec<GpsFix>) -> Result<Self, GeoError> {
        let node_id = node_id.into();
        if fixes.is_empty() {
            return Err(GeoError::EmptyTrace { node_id });
        }
        for fix in &fixes {
            let bad = !(-90.0..=90.0).contains(&fix.lat)
                || !(-180.0..=180.0).contains(&fix.lon)
                || fix.speed < 0.0
                || !fix.speed.is_finite()
                || !(0.0..360.0).contains(&fix.heading);
            if bad {
                return Err(GeoError::InvalidFix {
                    node_id,
                    t_us: fix.t_us,
                    reason: format!(
                        "lat={} lon={} speed={} heading={}",
                        fix.lat, fix.lon, fix.speed, fix.heading
                    ),
                });
            }
        }
        for pair in fixes.windows(2) {
            if pair[1].t_us <= pair[0].t_us {
                return Err(GeoError::NonMonotonic {
                    node_id,
                    t_us: pair[1].t_us,
                });
            }
        }
        Ok(MobilityTrace { node_id, fixes })
    }

    pub fn node_id(&self) -> &str {
        &self.node_id
    }

    pub fn fixes(&self) -> &[GpsFix] {
        &self.fixes
    }

    pub fn start_us(&self) -> u64 {
        self.fixes[0].t_us
    }

    pub fn end_us(&self) -> u64 {
        self.fixes[self.fixes.len() - 1].t_us
    }

    pub fn covers(&self, t_us: u64) -> bool {
        t_us >= self.start_us() && t_us <= self.end_us()
    }

    /// Linear interpolation of position and speed between the two fixes
    /// bracketing `t_us`; heading is carried from the earlier fix. A query
    /// exactly on a fix returns that fix unchanged. Queries outside the
    /// trace span fail.
    pub fn interpolate(&self, t_us: u64) -> Result<InterpSample, GeoError> {
        if !self.covers(t_us) {
            return Err(GeoError::OutOfSpan {
                t_us,
                start_us: self.start_us(),
                end_us: self.end_us(),
            });
        }
        Ok(self.sample_clamped(t_us))
    }

    /// Like [`interpolate`](Self::interpolate) but clamping to the first or
    /// last fix outside the span. Used where a few hundred microseconds of
    /// spill past the trace end must not abort a run.
    pub fn sample_clamped(&self, t_us: u64) -> InterpSample {
        let fixes = &self.fixes;
        let idx = fixes.partition_point(|f| f.t_us <= t_us);
        if idx == 0 {
            return sample_of(&fixes[0]);
        }
        let before = &fixes[idx - 1];
        if before.t_us == t_us || idx == fixes.len() {
            return sample_of(before);
        }
        let after = &fixes[idx];
        let frac = (t_us - before.t_us) as f64 / (after.t_us - before.t_us) as f64;
        InterpSample {
            lat: before.lat + (after.lat - before.lat) * frac,
            lon: before.lon + (after.lon - before.lon) * frac,
            speed: before.speed + (after.speed - before.speed) * frac,
            heading: before.heading,
        }
    }

    /// The most recent raw fix at or before `t_us` (what a device would hold
    /// in its GPS register at that instant).
    pub fn latest_fix_at(&self, t_us: u64) -> Result<&GpsFix, GeoError> {
        let idx = self.fixes.partition_point(|f| f.t_us <= t_us);
        if idx == 0 {
            return Err(GeoError::OutOfSpan {
                t_us,
                start_us: self.start_us(),
                end_us: self.end_us(),
            });
        }
        Ok(&self.fixes[idx - 1])
    }
}

fn sample_of(fix: &GpsFix) -> InterpSample {
    InterpSample {
        lat: fix.lat,
        lon: fix.lon,
        speed: fix.speed,
        heading: fix.heading,
    }
}

// ============================================================================
// Local projection
// ============================================================================

/// Equirectangular projection anchored at an origin: x east, y north,
/// meters.
#[derive(Clone, Copy, Debug)]
pub struct LocalFrame {
    pub origin_lat: f64,
    pub origin_lon: f64,
    k_lat: f64,
    k_lon: f64,
}

impl LocalFrame {
    pub fn new(origin_lat: f64, origin_lon: f64) -> Self {
        let k_lat = METERS_PER_DEG_LAT;
        LocalFrame {
            origin_lat,
            origin_lon,
            k_lat,
            k_lon: k_lat * origin_lat.to_radians().cos(),
        }
    }

    /// Degrees in, meters out: x = (lon - origin_lon) * k_lon,
    /// y = (lat - origin_lat) * k_lat.
    pub fn to_local(&self, lat: f64, lon: f64) -> (f64, f64) {
        (
            (lon - self.origin_lon) * self.k_lon,
            (lat - self.origin_lat) * self.k_lat,
        )
    }

    /// Inverse of [`to_local`](Self::to_local); used by the synthetic trace
    /// builder.
    pub fn to_global(&self, x_m: f64, y_m: f64) -> (f64, f64) {
        (
            self.origin_lat + y_m / self.k_lat,
            self.origin_lon + x_m / self.k_lon,
        )
    }
}

/// Planar distance between two points, meters, on a frame anchored at the
/// first point.
pub fn distance_m(lat_a: f64, lon_a: f64, lat_b: f64, lon_b: f64) -> f64 {
    let frame = LocalFrame::new(lat_a, lon_a);
    let (x, y) = frame.to_local(lat_b, lon_b);
    (x * x + y * y).sqrt()
}

// ============================================================================
// Trace file format
// ============================================================================

pub const TRACE_HEADER: &str = "node_id,t_us,lat,lon,speed,heading";

/// Parses a trace file that may interleave several nodes. Traces come back
/// in order of first appearance.
pub fn parse_trace_csv(text: &str) -> Result<Vec<MobilityTrace>, GeoError> {
    let mut order: Vec<String> = Vec::new();
    let mut by_node: std::collections::HashMap<String, Vec<GpsFix>> =
        std::collections::HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if idx == 0 && line == TRACE_HEADER {
            continue;
        }
        let line_no = idx + 1;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(GeoError::Format {
                line: line_no,
                reason: format!("expected 6 columns, got {}", cols.len()),
            });
        }
        let field = |i: usize, name: &str| -> Result<f64, GeoError> {
            cols[i]
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| GeoError::Format {
                    line: line_no,
                    reason: format!("cannot parse {name} {:?}", cols[i]),
                })
        };
        let t_us: u64 = cols[1].trim().parse().map_err(|_| GeoError::Format {
            line: line_no,
            reason: format!("cannot parse t_us {:?}", cols[1]),
        })?;
        let fix = GpsFix {
            t_us,
            lat: field(2, "lat")?,
            lon: field(3, "lon")?,
            speed: field(4, "speed")?,
            heading: field(5, "heading")?,
        };
        let node = cols[0].trim().to_string();
        if !by_node.contains_key(&node) {
            order.push(node.clone());
        }
        by_node.entry(node).or_default().push(fix);
    }
    order
        .into_iter()
        .map(|node| {
            let fixes = by_node.remove(&node).unwrap();
            MobilityTrace::new(node, fixes)
        })
        .collect()
}

pub fn format_trace_csv(traces: &[MobilityTrace]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for trace in traces {
        for fix in trace.fixes() {
            out.push_str(&format!(
                "{},{},{:.7},{:.7},{:.2},{:.2}\n",
                trace.node_id(),
                fix.t_us,
                fix.lat,
                fix.lon,
                fix.speed,
                fix.heading
            ));
        }
    }
    out
}

pub fn load_trace_csv(path: &std::path::Path) -> Result<Vec<MobilityTrace>, GeoError> {
    parse_trace_csv(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Great-circle distance on the sphere whose meridian arc matches the
    /// projection constant. Independent oracle for projection distortion.
    fn haversine_m(lat_a: f64, lon_a: f64, lat_b: f64, lon_b: f64) -> f64 {
        let r = METERS_PER_DEG_LAT * 180.0 / std::f64::consts::PI;
        let (phi_a, phi_b) = (lat_a.to_radians(), lat_b.to_radians());
        let d_phi = (lat_b - lat_a).to_radians();
        let d_lambda = (lon_b - lon_a).to_radians();
        let s = (d_phi / 2.0).sin().powi(2)
            + phi_a.cos() * phi_b.cos() * (d_lambda / 2.0).sin().powi(2);
        2.0 * r * s.sqrt().asin()
    }

    const BRISTOL: (f64, f64) = (51.4545, -2.5879);

    fn two_fix_trace() -> MobilityTrace {
        MobilityTrace::new(
            "veh",
            vec![
                GpsFix {
                    t_us: 1_000_000,
                    lat: 51.4545,
                    lon: -2.5879,
                    speed: 10.0,
                    heading: 90.0,
                },
                GpsFix {
                    t_us: 2_000_000,
                    lat: 51.4555,
                    lon: -2.5869,
                    speed: 14.0,
                    heading: 92.0,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn interpolation_midpoint_is_arithmetic_mean() {
        let s = two_fix_trace().interpolate(1_500_000).unwrap();
        assert_eq!(s.lat, (51.4545 + 51.4555) / 2.0);
        assert_eq!(s.lon, (-2.5879 + -2.5869) / 2.0);
        assert_eq!(s.speed, 12.0);
        assert_eq!(s.heading, 90.0);
    }

    #[test]
    fn interpolation_at_fix_time_returns_fix() {
        let trace = two_fix_trace();
        for fix in trace.fixes() {
            let s = trace.interpolate(fix.t_us).unwrap();
            assert_eq!((s.lat, s.lon, s.speed, s.heading), (fix.lat, fix.lon, fix.speed, fix.heading));
        }
    }

    #[test]
    fn interpolation_outside_span_fails() {
        let trace = two_fix_trace();
        assert!(matches!(trace.interpolate(999_999), Err(GeoError::OutOfSpan { .. })));
        assert!(trace.interpolate(2_000_001).is_err());
        let clamped = trace.sample_clamped(5_000_000);
        assert_eq!(clamped.lat, 51.4555);
    }

    #[test]
    fn latest_fix_is_floor_lookup() {
        let trace = two_fix_trace();
        assert_eq!(trace.latest_fix_at(1_999_999).unwrap().t_us, 1_000_000);
        assert_eq!(trace.latest_fix_at(2_000_000).unwrap().t_us, 2_000_000);
        assert!(trace.latest_fix_at(999_999).is_err());
    }

    #[test]
    fn trace_construction_validates() {
        assert!(matches!(
            MobilityTrace::new("x", vec![]),
            Err(GeoError::EmptyTrace { .. })
        ));
        let fix = GpsFix {
            t_us: 0,
            lat: 0.0,
            lon: 0.0,
            speed: 0.0,
            heading: 0.0,
        };
        assert!(matches!(
            MobilityTrace::new("x", vec![fix, fix]),
            Err(GeoError::NonMonotonic { .. })
        ));
        let nan = GpsFix {
            lat: f64::NAN,
            ..fix
        };
        assert!(matches!(
            MobilityTrace::new("x", vec![nan]),
            Err(GeoError::InvalidFix { .. })
        ));
    }

    #[test]
    fn one_millidegree_north_is_111_13_m() {
        let frame = LocalFrame::new(BRISTOL.0, BRISTOL.1);
        let (x, y) = frame.to_local(BRISTOL.0 + 0.001, BRISTOL.1);
        assert!((y - 111.13).abs() < 0.01, "y = {y}");
        assert_eq!(x, 0.0);
    }

    #[test]
    fn to_global_inverts_to_local() {
        let frame = LocalFrame::new(BRISTOL.0, BRISTOL.1);
        let (lat, lon) = frame.to_global(250.0, -800.0);
        let (x, y) = frame.to_local(lat, lon);
        assert!((x - 250.0).abs() < 1e-9);
        assert!((y + 800.0).abs() < 1e-9);
    }

    #[test]
    fn distance_zero_when_points_coincide() {
        assert_eq!(distance_m(BRISTOL.0, BRISTOL.1, BRISTOL.0, BRISTOL.1), 0.0);
    }

    #[test]
    fn distance_matches_haversine_within_point_1_percent_at_2km() {
        let (lat, lon) = BRISTOL;
        let cases = [
            (lat + 0.018, lon),
            (lat, lon + 0.028),
            (lat - 0.012, lon + 0.015),
            (lat + 0.009, lon - 0.02),
        ];
        for (blat, blon) in cases {
            let planar = distance_m(lat, lon, blat, blon);
            let sphere = haversine_m(lat, lon, blat, blon);
            assert!(sphere <= 2_300.0, "case too far: {sphere}");
            let rel = (planar - sphere).abs() / sphere;
            assert!(rel < 0.001, "rel error {rel} at d={sphere}");
        }
    }

    #[test]
    fn trace_csv_round_trip() {
        let traces = vec![two_fix_trace()];
        let text = format_trace_csv(&traces);
        assert!(text.starts_with(TRACE_HEADER));
        let parsed = parse_trace_csv(&text).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].node_id(), "veh");
        assert_eq!(parsed[0].fixes().len(), 2);
        assert_eq!(parsed[0].fixes()[1].lat, 51.4555);
    }

    #[test]
    fn trace_csv_groups_interleaved_nodes() {
        let text = "node_id,t_us,lat,lon,speed,heading\n\
                    a,0,51.0,-2.0,1.00,0.00\n\
                    b,0,51.1,-2.1,2.00,0.00\n\
                    a,1000000,51.0,-2.0,1.00,0.00\n";
        let traces = parse_trace_csv(text).unwrap();
        assert_eq!(traces.len(), 2);
        assert_eq!(traces[0].node_id(), "a");
        assert_eq!(traces[0].fixes().len(), 2);
        assert_eq!(traces[1].node_id(), "b");
    }

    #[test]
    fn trace_csv_rejects_garbage() {
        assert!(parse_trace_csv("a,0,51.0,-2.0,1.0\n").is_err());
        assert!(parse_trace_csv("a,0,north,-2.0,1.0,0.0\n").is_err());
    }

    proptest! {
        #[test]
        fn prop_projection_matches_haversine_bristol_5km(
            dlat in -0.03f64..0.03,
            dlon in -0.05f64..0.05,
        ) {
            let (lat, lon) = BRISTOL;
            let (blat, blon) = (lat + dlat, lon + dlon);
            let sphere = haversine_m(lat, lon, blat, blon);
            prop_assume!(sphere > 1.0 && sphere < 5_000.0);
            let planar = distance_m(lat, lon, blat, blon);
            let rel = (planar - sphere).abs() / sphere;
            prop_assert!(rel < 0.001, "rel {} at {}", rel, sphere);
        }

        #[test]
        fn prop_distance_symmetric_and_triangular(
            d1 in -0.02f64..0.02, e1 in -0.02f64..0.02,
            d2 in -0.02f64..0.02, e2 in -0.02f64..0.02,
        ) {
            let (lat, lon) = BRISTOL;
            let a = (lat, lon);
            let b = (lat + d1, lon + e1);
            let c = (lat + d2, lon + e2);
            let ab = distance_m(a.0, a.1, b.0, b.1);
            let ba = distance_m(b.0, b.1, a.0, a.1);
            // anchored frames differ, so symmetry is approximate
            prop_assert!((ab - ba).abs() <= 1e-3 * ab.max(1.0));
            let ac = distance_m(a.0, a.1, c.0, c.1);
            let bc = distance_m(b.0, b.1, c.0, c.1);
            // each leg is measured in its own anchored frame, so the
            // inequality carries the same relative slack as symmetry
            prop_assert!(ac <= ab + bc + 1e-3 * ac.max(1.0));
        }

        #[test]
        fn prop_interpolation_stays_in_segment_box(t in 1_000_000u64..=2_000_000) {
            let trace = two_fix_trace();
            let s = trace.interpolate(t).unwrap();
            prop_assert!(s.lat >= 51.4545 && s.lat <= 51.4555);
            prop_assert!(s.lon >= -2.5879 && s.lon <= -2.5869);
            prop_assert!(s.speed >= 10.0 && s.speed <= 14.0);
        }
    }
}
