//! WGS-84 geodetic coordinates and local East-North-Up (ENU) frames.
//!
//! Paths and state estimates live in a planar metric frame anchored at a
//! geodetic origin. Conversions go through Earth-centered Earth-fixed (ECEF)
//! coordinates; the ECEF → geodetic direction uses a bounded fixed-point
//! iteration on the latitude.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// WGS-84 semi-major axis in meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS-84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// WGS-84 first eccentricity squared, e² = f(2 − f).
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);

const LAT_ITER_MAX: usize = 10;
const LAT_ITER_TOL: f64 = 1e-12;

/// Unevaluated double-double value `hi + lo`.
///
/// Absolute ECEF coordinates are ~6.4e6 m, so plain f64 quantizes them at
/// ~1 nm; frame-local deltas computed through them cannot honor a 1e-9 m
/// round-trip contract. The handful of products and sums on the ECEF scale
/// are therefore carried with a compensation term.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    fn from(v: f64) -> Self {
        Self { hi: v, lo: 0.0 }
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let hi = a + b;
    Dd { hi, lo: b - (hi - a) }
}

fn two_sum(a: f64, b: f64) -> Dd {
    let hi = a + b;
    let bb = hi - a;
    Dd {
        hi,
        lo: (a - (hi - bb)) + (b - bb),
    }
}

fn two_prod(a: f64, b: f64) -> Dd {
    let hi = a * b;
    Dd {
        hi,
        lo: a.mul_add(b, -hi),
    }
}

fn dd_add(a: Dd, b: Dd) -> Dd {
    let s = two_sum(a.hi, b.hi);
    quick_two_sum(s.hi, s.lo + a.lo + b.lo)
}

fn dd_sub(a: Dd, b: Dd) -> Dd {
    dd_add(a, Dd { hi: -b.hi, lo: -b.lo })
}

fn dd_mul(a: Dd, b: Dd) -> Dd {
    let p = two_prod(a.hi, b.hi);
    quick_two_sum(p.hi, p.lo + a.hi * b.lo + a.lo * b.hi)
}

fn dd_mul_f64(a: Dd, b: f64) -> Dd {
    let p = two_prod(a.hi, b);
    quick_two_sum(p.hi, p.lo + a.lo * b)
}

/// a / b with one Newton refinement, accurate to double-double level.
fn dd_div_f64(a: Dd, b: Dd) -> Dd {
    let q0 = a.hi / b.hi;
    let r = dd_sub(a, dd_mul_f64(b, q0));
    quick_two_sum(q0, r.to_f64() / b.hi)
}

/// sqrt(a) with one Newton refinement.
fn dd_sqrt(a: Dd) -> Dd {
    let s0 = a.hi.sqrt();
    let r = dd_sub(a, two_prod(s0, s0));
    quick_two_sum(s0, r.to_f64() / (2.0 * s0))
}

/// ECEF coordinates of a geodetic point in double-double precision.
///
/// Trigonometric evaluations stay in f64 (they only need to be a consistent,
/// finely-quantized function of the stored coordinates); everything at ECEF
/// magnitude is compensated.
fn geodetic_to_ecef_dd(p: &GeodeticPoint) -> [Dd; 3] {
    let lat = p.lat_deg.to_radians();
    let lon = p.lon_deg.to_radians();
    let (sin_lat, cos_lat) = lat.sin_cos();
    let (sin_lon, cos_lon) = lon.sin_cos();
    // n = a / sqrt(1 − e²·sin²(lat))
    let s2 = dd_mul_f64(two_prod(sin_lat, sin_lat), WGS84_E2);
    let q = dd_sub(Dd::from(1.0), s2);
    let n = dd_div_f64(Dd::from(WGS84_A), dd_sqrt(q));
    let n_plus_h = dd_add(n, Dd::from(p.alt_m));
    let x = dd_mul_f64(dd_mul_f64(n_plus_h, cos_lat), cos_lon);
    let y = dd_mul_f64(dd_mul_f64(n_plus_h, cos_lat), sin_lon);
    let z = dd_mul_f64(
        dd_add(dd_mul_f64(n, 1.0 - WGS84_E2), Dd::from(p.alt_m)),
        sin_lat,
    );
    [x, y, z]
}

#[derive(Debug, Error, PartialEq)]
pub enum GeodesyError {
    #[error("latitude {0} deg outside [-90, 90]")]
    LatitudeOutOfRange(f64),
    #[error("longitude {0} deg outside [-180, 180]")]
    LongitudeOutOfRange(f64),
    #[error("non-finite coordinate")]
    NonFinite,
}

/// A WGS-84 geodetic position (degrees, degrees, meters above the ellipsoid).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeodeticPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
    #[serde(default)]
    pub alt_m: f64,
}

impl GeodeticPoint {
    pub fn new(lat_deg: f64, lon_deg: f64, alt_m: f64) -> Result<Self, GeodesyError> {
        if !(lat_deg.is_finite() && lon_deg.is_finite() && alt_m.is_finite()) {
            return Err(GeodesyError::NonFinite);
        }
        if !(-90.0..=90.0).contains(&lat_deg) {
            return Err(GeodesyError::LatitudeOutOfRange(lat_deg));
        }
        if !(-180.0..=180.0).contains(&lon_deg) {
            return Err(GeodesyError::LongitudeOutOfRange(lon_deg));
        }
        Ok(Self { lat_deg, lon_deg, alt_m })
    }
}

/// A position in a local East-North-Up frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnuPoint {
    pub east: f64,
    pub north: f64,
    pub up: f64,
}

impl EnuPoint {
    pub fn new(east: f64, north: f64, up: f64) -> Self {
        Self { east, north, up }
    }
}

/// Prime vertical radius of curvature at the given geodetic latitude (radians).
fn prime_vertical_radius(lat_rad: f64) -> f64 {
    WGS84_A / (1.0 - WGS84_E2 * lat_rad.sin().powi(2)).sqrt()
}

/// Convert a geodetic point to ECEF coordinates in meters.
pub fn geodetic_to_ecef(p: &GeodeticPoint) -> Vector3<f64> {
    let lat = p.lat_deg.to_radians();
    let lon = p.lon_deg.to_radians();
    let (sin_lat, cos_lat) = lat.sin_cos();
    let (sin_lon, cos_lon) = lon.sin_cos();
    let n = prime_vertical_radius(lat);
    Vector3::new(
        (n + p.alt_m) * cos_lat * cos_lon,
        (n + p.alt_m) * cos_lat * sin_lon,
        ((1.0 - WGS84_E2) * n + p.alt_m) * sin_lat,
    )
}

/// Convert ECEF coordinates to a geodetic point.
///
/// Latitude is found by a bounded fixed-point iteration (the error contracts
/// by roughly e² per round, far below the 1e-12 rad requirement within the
/// iteration budget), followed by a differential polish against the exact
/// forward model that removes the remaining sub-nanometer bias.
pub fn ecef_to_geodetic(ecef: &Vector3<f64>) -> GeodeticPoint {
    let lon = ecef.y.atan2(ecef.x);
    let rho = (ecef.x * ecef.x + ecef.y * ecef.y).sqrt();
    // Start from the spherical latitude.
    let mut lat = ecef.z.atan2(rho * (1.0 - WGS84_E2));
    for _ in 0..LAT_ITER_MAX {
        let n = prime_vertical_radius(lat);
        let next = (ecef.z + WGS84_E2 * n * lat.sin()).atan2(rho);
        let delta = (next - lat).abs();
        lat = next;
        if delta < LAT_ITER_TOL {
            break;
        }
    }
    let n = prime_vertical_radius(lat);
    let mut alt = if lat.cos().abs() > 1e-8 {
        rho / lat.cos() - n
    } else {
        ecef.z.abs() - n * (1.0 - WGS84_E2)
    };
    let mut lon = lon;

    // Polish: push the forward image of the candidate onto the input to
    // round-off level by correcting in the local tangent directions.
    for _ in 0..2 {
        let candidate = GeodeticPoint {
            lat_deg: lat.to_degrees(),
            lon_deg: lon.to_degrees(),
            alt_m: alt,
        };
        let residual = ecef - geodetic_to_ecef(&candidate);
        let (sin_lat, cos_lat) = lat.sin_cos();
        let (sin_lon, cos_lon) = lon.sin_cos();
        let east = residual.x * -sin_lon + residual.y * cos_lon;
        let north =
            residual.x * -sin_lat * cos_lon + residual.y * -sin_lat * sin_lon + residual.z * cos_lat;
        let up = residual.x * cos_lat * cos_lon + residual.y * cos_lat * sin_lon + residual.z * sin_lat;
        if east.abs().max(north.abs()).max(up.abs()) < 1e-10 {
            break;
        }
        let n = prime_vertical_radius(lat);
        let meridional = WGS84_A * (1.0 - WGS84_E2)
            / (1.0 - WGS84_E2 * sin_lat * sin_lat).powf(1.5);
        lat += north / (meridional + alt);
        if cos_lat.abs() > 1e-8 {
            lon += east / ((n + alt) * cos_lat);
        }
        alt += up;
    }

    GeodeticPoint {
        lat_deg: lat.to_degrees(),
        lon_deg: lon.to_degrees(),
        alt_m: alt,
    }
}

/// A local tangent frame anchored at a geodetic origin.
///
/// Caches the origin's ECEF vector and the ECEF → ENU rotation; the rotation
/// is orthonormal by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EnuFrame {
    origin: GeodeticPoint,
    origin_ecef: Vector3<f64>,
    origin_ecef_dd: [Dd; 3],
    /// Rows are the east, north, and up unit vectors expressed in ECEF.
    rotation: Matrix3<f64>,
}

impl EnuFrame {
    pub fn new(origin: GeodeticPoint) -> Self {
        let lat = origin.lat_deg.to_radians();
        let lon = origin.lon_deg.to_radians();
        let (sin_lat, cos_lat) = lat.sin_cos();
        let (sin_lon, cos_lon) = lon.sin_cos();
        let rotation = Matrix3::new(
            -sin_lon,
            cos_lon,
            0.0,
            -sin_lat * cos_lon,
            -sin_lat * sin_lon,
            cos_lat,
            cos_lat * cos_lon,
            cos_lat * sin_lon,
            sin_lat,
        );
        Self {
            origin,
            origin_ecef: geodetic_to_ecef(&origin),
            origin_ecef_dd: geodetic_to_ecef_dd(&origin),
            rotation,
        }
    }

    pub fn origin(&self) -> &GeodeticPoint {
        &self.origin
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    /// ENU coordinates of `p` relative to this frame's origin.
    pub fn to_enu(&self, p: &GeodeticPoint) -> EnuPoint {
        let d = geodetic_to_ecef(p) - self.origin_ecef;
        let v = self.rotation * d;
        EnuPoint::new(v.x, v.y, v.z)
    }

    /// Geodetic point at the given ENU offset from the origin.
    ///
    /// A few differential polish rounds against the actual [`Self::to_enu`]
    /// image push the round-trip error down to the f64 representation floor
    /// (absolute ECEF coordinates quantize at ~1 nm).
    pub fn from_enu(&self, p: &EnuPoint) -> GeodeticPoint {
        let ecef =
            self.origin_ecef + self.rotation.transpose() * Vector3::new(p.east, p.north, p.up);
        let mut candidate = ecef_to_geodetic(&ecef);
        let mut best = candidate;
        let mut best_err = f64::INFINITY;
        for _ in 0..4 {
            let image = self.to_enu(&candidate);
            let east = p.east - image.east;
            let north = p.north - image.north;
            let up = p.up - image.up;
            let err = (east * east + north * north + up * up).sqrt();
            if err < best_err {
                best_err = err;
                best = candidate;
            }
            if err < 1e-10 {
                break;
            }
            let lat = candidate.lat_deg.to_radians();
            let sin_lat = lat.sin();
            let n = prime_vertical_radius(lat);
            let meridional =
                WGS84_A * (1.0 - WGS84_E2) / (1.0 - WGS84_E2 * sin_lat * sin_lat).powf(1.5);
            candidate.lat_deg += (north / (meridional + candidate.alt_m)).to_degrees();
            if lat.cos().abs() > 1e-8 {
                candidate.lon_deg += (east / ((n + candidate.alt_m) * lat.cos())).to_degrees();
            }
            candidate.alt_m += up;
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const WGS84_B: f64 = WGS84_A * (1.0 - WGS84_F);

    #[test]
    fn ecef_at_equator_prime_meridian() {
        let p = GeodeticPoint::new(0.0, 0.0, 0.0).unwrap();
        let e = geodetic_to_ecef(&p);
        assert_abs_diff_eq!(e.x, WGS84_A, epsilon = 1e-9);
        assert_abs_diff_eq!(e.y, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(e.z, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn ecef_at_north_pole() {
        let p = GeodeticPoint::new(90.0, 0.0, 0.0).unwrap();
        let e = geodetic_to_ecef(&p);
        assert_abs_diff_eq!(e.x, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(e.y, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(e.z, WGS84_B, epsilon = 1e-6);
        assert_abs_diff_eq!(e.z, 6_356_752.314, epsilon = 1e-3);
    }

    #[test]
    fn ecef_on_equator_at_90_east_with_altitude() {
        let p = GeodeticPoint::new(0.0, 90.0, 100.0).unwrap();
        let e = geodetic_to_ecef(&p);
        assert_abs_diff_eq!(e.x, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(e.y, WGS84_A + 100.0, epsilon = 1e-6);
        assert_abs_diff_eq!(e.z, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn rotation_is_orthonormal() {
        let frame = EnuFrame::new(GeodeticPoint::new(48.7, 9.1, 250.0).unwrap());
        let should_be_identity = frame.rotation().transpose() * frame.rotation();
        assert!((should_be_identity - Matrix3::identity()).norm() < 1e-12);
    }

    #[test]
    fn origin_maps_to_enu_zero() {
        let origin = GeodeticPoint::new(48.7, 9.1, 0.0).unwrap();
        let frame = EnuFrame::new(origin);
        let enu = frame.to_enu(&origin);
        assert_abs_diff_eq!(enu.east, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(enu.north, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(enu.up, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn small_latitude_step_is_meridional_meters() {
        let origin = GeodeticPoint::new(48.7, 9.1, 0.0).unwrap();
        let frame = EnuFrame::new(origin);
        let p = GeodeticPoint::new(48.7 + 1e-5, 9.1, 0.0).unwrap();
        let enu = frame.to_enu(&p);
        // Meridional radius of curvature at 48.7° is ≈ 6.3716e6 m, so
        // 1e-5 deg of latitude is ≈ 1.112 m of northing.
        assert_abs_diff_eq!(enu.north, 1.112, epsilon = 2e-3);
        assert!(enu.east.abs() < 1e-3);
    }

    #[test]
    fn from_enu_of_zero_is_origin() {
        let origin = GeodeticPoint::new(48.7, 9.1, 12.0).unwrap();
        let frame = EnuFrame::new(origin);
        let p = frame.from_enu(&EnuPoint::new(0.0, 0.0, 0.0));
        assert_abs_diff_eq!(p.lat_deg, origin.lat_deg, epsilon = 1e-12);
        assert_abs_diff_eq!(p.lon_deg, origin.lon_deg, epsilon = 1e-12);
        assert_abs_diff_eq!(p.alt_m, origin.alt_m, epsilon = 1e-7);
    }

    #[test]
    fn up_offset_changes_only_altitude() {
        let origin = GeodeticPoint::new(48.7, 9.1, 0.0).unwrap();
        let frame = EnuFrame::new(origin);
        let p = frame.from_enu(&EnuPoint::new(0.0, 0.0, 10.0));
        assert_abs_diff_eq!(p.lat_deg, origin.lat_deg, epsilon = 1e-10);
        assert_abs_diff_eq!(p.lon_deg, origin.lon_deg, epsilon = 1e-10);
        assert_abs_diff_eq!(p.alt_m, 10.0, epsilon = 1e-6);
    }

    fn enu_round_trip_within(frame: &EnuFrame, radius_m: f64, n: usize, tol: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..n {
            let p = EnuPoint::new(
                rng.random_range(-radius_m..radius_m),
                rng.random_range(-radius_m..radius_m),
                rng.random_range(-50.0..50.0),
            );
            let back = frame.to_enu(&frame.from_enu(&p));
            assert!(
                (back.east - p.east).abs() < tol
                    && (back.north - p.north).abs() < tol
                    && (back.up - p.up).abs() < tol,
                "round trip drifted: {p:?} -> {back:?}"
            );
        }
    }

    #[test]
    fn round_trip_within_one_km() {
        let frame = EnuFrame::new(GeodeticPoint::new(48.7, 9.1, 0.0).unwrap());
        enu_round_trip_within(&frame, 1_000.0, 100, 1e-9);
    }

    #[test]
    fn round_trip_within_ten_km() {
        let frame = EnuFrame::new(GeodeticPoint::new(48.7, 9.1, 0.0).unwrap());
        enu_round_trip_within(&frame, 10_000.0, 100, 1e-9);
    }

    #[test]
    fn enu_distance_matches_ecef_chord_locally() {
        let frame = EnuFrame::new(GeodeticPoint::new(48.7, 9.1, 0.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let base = EnuPoint::new(
                rng.random_range(-500.0..500.0),
                rng.random_range(-500.0..500.0),
                0.0,
            );
            let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let other = EnuPoint::new(base.east + theta.cos(), base.north + theta.sin(), 0.0);
            let g1 = frame.from_enu(&base);
            let g2 = frame.from_enu(&other);
            let chord = (geodetic_to_ecef(&g1) - geodetic_to_ecef(&g2)).norm();
            assert_abs_diff_eq!(chord, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn rejects_out_of_range_coordinates() {
        assert_eq!(
            GeodeticPoint::new(91.0, 0.0, 0.0),
            Err(GeodesyError::LatitudeOutOfRange(91.0))
        );
        assert_eq!(
            GeodeticPoint::new(0.0, 200.0, 0.0),
            Err(GeodesyError::LongitudeOutOfRange(200.0))
        );
        assert_eq!(
            GeodeticPoint::new(f64::NAN, 0.0, 0.0),
            Err(GeodesyError::NonFinite)
        );
    }
}
