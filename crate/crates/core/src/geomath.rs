//! Spherical geometry and plan-image georeferencing.
//!
//! Distances use the haversine formula on a sphere with the IUGG mean
//! radius. Segments between consecutive route vertices are great-circle
//! arcs, so a point interpolated along a segment splits its length exactly.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// IUGG mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Fractions closer than this to a segment end are snapped onto the vertex.
const T_SNAP: f64 = 1e-12;
/// Projections closer than this (km) are considered tied.
const TIE_KM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("route must contain at least one point")]
    EmptyRoute,
    #[error("invalid route: {0}")]
    InvalidRoute(String),
    #[error("invalid position: {0}")]
    InvalidPosition(String),
    #[error("{0} control points given, at least 3 required")]
    TooFewControlPoints(usize),
    #[error("control points are degenerate (collinear pixels)")]
    DegenerateControlPoints,
    #[error("affine transform is not invertible")]
    DegenerateTransform,
}

/// WGS84 longitude/latitude in degrees. Serialized as `[lon, lat]`.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct GeoPosition {
    lon: f64,
    lat: f64,
}

impl GeoPosition {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeoError> {
        if !lon.is_finite() || !lat.is_finite() {
            return Err(GeoError::InvalidPosition(format!("non-finite ({lon}, {lat})")));
        }
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::InvalidPosition(format!("out of range ({lon}, {lat})")));
        }
        Ok(Self { lon, lat })
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    /// Coordinate-wise comparison in degrees.
    pub fn approx_eq(&self, other: &GeoPosition, tol_deg: f64) -> bool {
        (self.lon - other.lon).abs() <= tol_deg && (self.lat - other.lat).abs() <= tol_deg
    }

    /// Shift by a displacement in degrees.
    pub fn offset(&self, dlon: f64, dlat: f64) -> Result<Self, GeoError> {
        Self::new(self.lon + dlon, self.lat + dlat)
    }

    fn to_unit(self) -> [f64; 3] {
        let (lon, lat) = (self.lon.to_radians(), self.lat.to_radians());
        [lat.cos() * lon.cos(), lat.cos() * lon.sin(), lat.sin()]
    }

    fn from_unit(v: [f64; 3]) -> Self {
        let lat = v[2].atan2(v[0].hypot(v[1])).to_degrees();
        let lon = v[1].atan2(v[0]).to_degrees();
        Self { lon: lon.clamp(-180.0, 180.0), lat: lat.clamp(-90.0, 90.0) }
    }
}

impl TryFrom<[f64; 2]> for GeoPosition {
    type Error = GeoError;

    fn try_from(value: [f64; 2]) -> Result<Self, Self::Error> {
        Self::new(value[0], value[1])
    }
}

impl From<GeoPosition> for [f64; 2] {
    fn from(p: GeoPosition) -> Self {
        [p.lon, p.lat]
    }
}

impl fmt::Debug for GeoPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lon, self.lat)
    }
}

pub fn haversine_km(a: GeoPosition, b: GeoPosition) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

pub fn polyline_length_km(route: &[GeoPosition]) -> Result<f64, GeoError> {
    if route.is_empty() {
        return Err(GeoError::EmptyRoute);
    }
    Ok(route.windows(2).map(|w| haversine_km(w[0], w[1])).sum())
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Point at fraction `t` of the great-circle arc from `a` to `b`.
///
/// `t = 0` and `t = 1` return the endpoints bit-for-bit.
pub fn interpolate(a: GeoPosition, b: GeoPosition, t: f64) -> GeoPosition {
    if t <= 0.0 {
        return a;
    }
    if t >= 1.0 {
        return b;
    }
    let (va, vb) = (a.to_unit(), b.to_unit());
    let theta = norm(cross(va, vb)).atan2(dot(va, vb));
    if theta < 1e-15 {
        return a;
    }
    let wa = ((1.0 - t) * theta).sin() / theta.sin();
    let wb = (t * theta).sin() / theta.sin();
    GeoPosition::from_unit([
        wa * va[0] + wb * vb[0],
        wa * va[1] + wb * vb[1],
        wa * va[2] + wb * vb[2],
    ])
}

/// Nearest point of a route to a query point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolylineProjection {
    pub segment_index: usize,
    pub t: f64,
    pub snapped: GeoPosition,
    pub distance_km: f64,
}

/// Fraction along the arc `a → b` of the point nearest to `query`.
fn project_on_arc(query: GeoPosition, a: GeoPosition, b: GeoPosition) -> f64 {
    let (va, vb, vq) = (a.to_unit(), b.to_unit(), query.to_unit());
    let n = cross(va, vb);
    let n_len = norm(n);
    if n_len < 1e-15 {
        return 0.0;
    }
    let n = [n[0] / n_len, n[1] / n_len, n[2] / n_len];
    let theta = n_len.atan2(dot(va, vb));
    let h = dot(vq, n);
    let foot = [vq[0] - h * n[0], vq[1] - h * n[1], vq[2] - h * n[2]];
    let t = if norm(foot) < 1e-15 {
        0.0
    } else {
        let phi = dot(cross(va, foot), n).atan2(dot(va, foot));
        if (0.0..=theta).contains(&phi) {
            phi / theta
        } else if haversine_km(query, a) <= haversine_km(query, b) {
            0.0
        } else {
            1.0
        }
    };
    if t < T_SNAP {
        0.0
    } else if t > 1.0 - T_SNAP {
        1.0
    } else {
        t
    }
}

/// Globally nearest point of `route` to `query`.
///
/// Segments are great-circle arcs. Ties between segments go to the lower
/// segment index, so a query sitting on interior vertex `k` resolves to
/// segment `k - 1` at `t = 1`.
pub fn project_point_to_polyline(
    query: GeoPosition,
    route: &[GeoPosition],
) -> Result<PolylineProjection, GeoError> {
    if route.len() < 2 {
        return Err(GeoError::InvalidRoute(format!("{} points, need at least 2", route.len())));
    }
    let mut best: Option<PolylineProjection> = None;
    for (i, seg) in route.windows(2).enumerate() {
        let t = project_on_arc(query, seg[0], seg[1]);
        let snapped = interpolate(seg[0], seg[1], t);
        let distance_km = haversine_km(query, snapped);
        let better = match &best {
            None => true,
            Some(b) => distance_km < b.distance_km - TIE_KM,
        };
        if better {
            best = Some(PolylineProjection { segment_index: i, t, snapped, distance_km });
        }
    }
    Ok(best.expect("route has at least one segment"))
}

/// Position at arc length `distance_km` from the start of `route`, with the
/// segment index and in-segment fraction it falls on. Distances beyond the
/// route are clamped to its ends.
pub fn locate_along(route: &[GeoPosition], distance_km: f64) -> Result<PolylineProjection, GeoError> {
    if route.len() < 2 {
        return Err(GeoError::InvalidRoute(format!("{} points, need at least 2", route.len())));
    }
    let last = route.len() - 2;
    let mut walked = 0.0;
    for (i, seg) in route.windows(2).enumerate() {
        let len = haversine_km(seg[0], seg[1]);
        if distance_km <= walked + len || i == last {
            let t = if len > 0.0 { ((distance_km - walked) / len).clamp(0.0, 1.0) } else { 0.0 };
            let snapped = interpolate(seg[0], seg[1], t);
            return Ok(PolylineProjection { segment_index: i, t, snapped, distance_km: 0.0 });
        }
        walked += len;
    }
    unreachable!("loop returns on the last segment")
}

/// Position at arc-length fraction `fraction ∈ [0, 1]` of a route.
pub fn point_at_fraction(route: &[GeoPosition], fraction: f64) -> Result<GeoPosition, GeoError> {
    let total = polyline_length_km(route)?;
    Ok(locate_along(route, fraction.clamp(0.0, 1.0) * total)?.snapped)
}

/// Image coordinates in pixels, origin top-left, y pointing down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

impl PixelPoint {
    pub fn new(x: f64, y: f64) -> Result<Self, GeoError> {
        if !x.is_finite() || !y.is_finite() || x < 0.0 || y < 0.0 {
            return Err(GeoError::InvalidPosition(format!("pixel ({x}, {y}) must be finite and non-negative")));
        }
        Ok(Self { x, y })
    }
}

impl TryFrom<[f64; 2]> for PixelPoint {
    type Error = GeoError;

    fn try_from(value: [f64; 2]) -> Result<Self, Self::Error> {
        Self::new(value[0], value[1])
    }
}

impl From<PixelPoint> for [f64; 2] {
    fn from(p: PixelPoint) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPointPair {
    pub pixel: PixelPoint,
    pub world: GeoPosition,
}

/// `lon = a·px + b·py + c`, `lat = d·px + e·py + f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
    pub rms_residual_deg: f64,
}

impl AffineTransform {
    pub fn determinant(&self) -> f64 {
        self.a * self.e - self.b * self.d
    }

    pub fn is_degenerate(&self) -> bool {
        let det = self.determinant();
        !det.is_finite() || det.abs() <= 1e-15
    }

    /// Raw `[lon, lat]` of a pixel, without range checks.
    pub fn map(&self, px: f64, py: f64) -> [f64; 2] {
        [self.a * px + self.b * py + self.c, self.d * px + self.e * py + self.f]
    }

    pub fn apply(&self, pixel: PixelPoint) -> Result<GeoPosition, GeoError> {
        if self.is_degenerate() {
            return Err(GeoError::DegenerateTransform);
        }
        let [lon, lat] = self.map(pixel.x, pixel.y);
        GeoPosition::new(lon, lat)
    }

    /// World → pixel via the closed-form 2×2 inverse. The result may lie
    /// outside the image, so it is returned as raw coordinates.
    pub fn invert(&self, world: GeoPosition) -> Result<[f64; 2], GeoError> {
        let det = self.determinant();
        if self.is_degenerate() {
            return Err(GeoError::DegenerateTransform);
        }
        let (u, v) = (world.lon - self.c, world.lat - self.f);
        Ok([(self.e * u - self.b * v) / det, (self.a * v - self.d * u) / det])
    }
}

pub fn apply_affine(t: &AffineTransform, pixel: PixelPoint) -> Result<GeoPosition, GeoError> {
    t.apply(pixel)
}

/// Least-squares 6-parameter affine fit; exact interpolation for three
/// non-collinear pairs.
///
/// Pixel and world coordinates are centred on their means before solving
/// the 2×2 normal equations, which keeps the fit well conditioned for
/// image-sized pixel values.
pub fn solve_affine(pairs: &[ControlPointPair]) -> Result<AffineTransform, GeoError> {
    if pairs.len() < 3 {
        return Err(GeoError::TooFewControlPoints(pairs.len()));
    }
    let n = pairs.len() as f64;
    let mean = |f: &dyn Fn(&ControlPointPair) -> f64| pairs.iter().map(f).sum::<f64>() / n;
    let (mx, my) = (mean(&|p| p.pixel.x), mean(&|p| p.pixel.y));
    let (mlon, mlat) = (mean(&|p| p.world.lon), mean(&|p| p.world.lat));

    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let (mut sx_lon, mut sy_lon, mut sx_lat, mut sy_lat) = (0.0, 0.0, 0.0, 0.0);
    for p in pairs {
        let (dx, dy) = (p.pixel.x - mx, p.pixel.y - my);
        let (dlon, dlat) = (p.world.lon - mlon, p.world.lat - mlat);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sx_lon += dx * dlon;
        sy_lon += dy * dlon;
        sx_lat += dx * dlat;
        sy_lat += dy * dlat;
    }
    let det = sxx * syy - sxy * sxy;
    let scale = (sxx + syy).powi(2);
    if scale == 0.0 || det <= 1e-12 * scale {
        return Err(GeoError::DegenerateControlPoints);
    }
    let a = (syy * sx_lon - sxy * sy_lon) / det;
    let b = (sxx * sy_lon - sxy * sx_lon) / det;
    let d = (syy * sx_lat - sxy * sy_lat) / det;
    let e = (sxx * sy_lat - sxy * sx_lat) / det;
    let c = mlon - a * mx - b * my;
    let f = mlat - d * mx - e * my;

    let mut t = AffineTransform { a, b, c, d, e, f, rms_residual_deg: 0.0 };
    if t.is_degenerate() {
        return Err(GeoError::DegenerateControlPoints);
    }
    let sq: f64 = pairs
        .iter()
        .map(|p| {
            let [lon, lat] = t.map(p.pixel.x, p.pixel.y);
            (lon - p.world.lon).powi(2) + (lat - p.world.lat).powi(2)
        })
        .sum();
    t.rms_residual_deg = (sq / n).sqrt();
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pos(lon: f64, lat: f64) -> GeoPosition {
        GeoPosition::new(lon, lat).unwrap()
    }

    /// Central angle via atan2 of the cross and dot products; well
    /// conditioned over the whole sphere.
    fn oracle_km(a: GeoPosition, b: GeoPosition) -> f64 {
        let (p1, p2) = (a.lat().to_radians(), b.lat().to_radians());
        let dl = (b.lon() - a.lon()).to_radians();
        let y = ((p2.cos() * dl.sin()).powi(2)
            + (p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos()).powi(2))
        .sqrt();
        let x = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
        6371.0088 * y.atan2(x)
    }

    /// Great-circle intermediate point written with lat/lon trigonometry.
    fn oracle_intermediate(a: GeoPosition, b: GeoPosition, f: f64) -> GeoPosition {
        let delta = oracle_km(a, b) / 6371.0088;
        if delta == 0.0 {
            return a;
        }
        let (p1, l1) = (a.lat().to_radians(), a.lon().to_radians());
        let (p2, l2) = (b.lat().to_radians(), b.lon().to_radians());
        let ka = ((1.0 - f) * delta).sin() / delta.sin();
        let kb = (f * delta).sin() / delta.sin();
        let x = ka * p1.cos() * l1.cos() + kb * p2.cos() * l2.cos();
        let y = ka * p1.cos() * l1.sin() + kb * p2.cos() * l2.sin();
        let z = ka * p1.sin() + kb * p2.sin();
        pos(y.atan2(x).to_degrees(), z.atan2((x * x + y * y).sqrt()).to_degrees())
    }

    fn random_pos(rng: &mut ChaCha8Rng) -> GeoPosition {
        pos(rng.gen_range(-180.0..=180.0), rng.gen_range(-90.0..=90.0))
    }

    #[test]
    fn coincident_points_are_zero() {
        let p = pos(13.5, 46.6);
        assert_eq!(haversine_km(p, p), 0.0);
    }

    #[test]
    fn one_degree_of_latitude() {
        let d = haversine_km(pos(0.0, 0.0), pos(0.0, 1.0));
        // 6371.0088 * pi / 180, worked by hand
        assert!((d - 111.1950802).abs() < 1e-6, "{d}");
        assert!((d - EARTH_RADIUS_KM * std::f64::consts::PI / 180.0).abs() < 1e-9);
    }

    #[test]
    fn haversine_matches_oracle_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let (a, b) = (random_pos(&mut rng), random_pos(&mut rng));
            let (got, want) = (haversine_km(a, b), oracle_km(a, b));
            assert!((got - want).abs() <= 1e-9 * want.max(1e-300), "{a:?} {b:?}: {got} vs {want}");
            assert_eq!(got, haversine_km(b, a));
        }
    }

    #[test]
    fn triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let (a, b, c) = (random_pos(&mut rng), random_pos(&mut rng), random_pos(&mut rng));
            assert!(haversine_km(a, c) <= haversine_km(a, b) + haversine_km(b, c) + 1e-9);
        }
    }

    #[test]
    fn polyline_length_basics() {
        assert_eq!(polyline_length_km(&[]), Err(GeoError::EmptyRoute));
        let (p, q, r) = (pos(13.0, 46.5), pos(13.4, 46.7), pos(14.1, 46.6));
        assert_eq!(polyline_length_km(&[p]).unwrap(), 0.0);
        let l = polyline_length_km(&[p, q, r]).unwrap();
        assert!((l - (haversine_km(p, q) + haversine_km(q, r))).abs() < 1e-12);
        assert!((polyline_length_km(&[r, q, p]).unwrap() - l).abs() < 1e-12);
    }

    #[test]
    fn interpolation_splits_length_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let a = pos(rng.gen_range(5.0..20.0), rng.gen_range(40.0..55.0));
            let b = pos(a.lon() + rng.gen_range(-2.0..2.0), a.lat() + rng.gen_range(-2.0..2.0));
            let t = rng.gen_range(0.01..0.99);
            let m = interpolate(a, b, t);
            let whole = haversine_km(a, b);
            let parts = haversine_km(a, m) + haversine_km(m, b);
            assert!((parts - whole).abs() <= 1e-9 * whole);
            assert!(m.approx_eq(&oracle_intermediate(a, b, t), 1e-9));
        }
    }

    #[test]
    fn projection_on_interior_vertex_prefers_earlier_segment() {
        let route = [pos(13.0, 46.0), pos(13.5, 46.2), pos(14.0, 46.1)];
        let p = project_point_to_polyline(route[1], &route).unwrap();
        assert_eq!(p.segment_index, 0);
        assert_eq!(p.t, 1.0);
        assert_eq!(p.snapped, route[1]);
        assert_eq!(p.distance_km, 0.0);
    }

    #[test]
    fn projection_of_segment_midpoint() {
        let (a, b) = (pos(13.0, 46.0), pos(13.1, 46.05));
        let mid = oracle_intermediate(a, b, 0.5);
        let p = project_point_to_polyline(mid, &[a, b]).unwrap();
        assert!((p.t - 0.5).abs() < 1e-9, "{}", p.t);
        assert!(p.distance_km < 1e-9);
    }

    #[test]
    fn projection_needs_two_points() {
        assert!(matches!(
            project_point_to_polyline(pos(0.0, 0.0), &[pos(1.0, 1.0)]),
            Err(GeoError::InvalidRoute(_))
        ));
    }

    #[test]
    fn projection_beats_dense_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let mut route = vec![pos(rng.gen_range(9.0..16.0), rng.gen_range(45.0..49.0))];
            for _ in 0..rng.gen_range(1..4) {
                let last = *route.last().unwrap();
                route.push(pos(last.lon() + rng.gen_range(-0.3..0.3), last.lat() + rng.gen_range(-0.3..0.3)));
            }
            let anchor = route[rng.gen_range(0..route.len())];
            let query = pos(anchor.lon() + rng.gen_range(-0.2..0.2), anchor.lat() + rng.gen_range(-0.2..0.2));

            let mut brute = f64::INFINITY;
            for seg in route.windows(2) {
                for k in 0..=10_000 {
                    let s = oracle_intermediate(seg[0], seg[1], k as f64 / 10_000.0);
                    brute = brute.min(oracle_km(query, s));
                }
            }
            let p = project_point_to_polyline(query, &route).unwrap();
            assert!(p.distance_km <= brute + 1e-6, "{} vs brute {}", p.distance_km, brute);
            assert!((p.distance_km - oracle_km(query, p.snapped)).abs() < 1e-9);
        }
    }

    #[test]
    fn locate_along_hits_requested_arc_length() {
        let route = [pos(13.0, 46.0), pos(13.3, 46.1), pos(13.9, 46.4)];
        let total = polyline_length_km(&route).unwrap();
        for f in [0.0, 0.1, 0.25, 0.5, 0.9, 1.0] {
            let at = locate_along(&route, f * total).unwrap();
            let mut head = route[..=at.segment_index].to_vec();
            head.push(at.snapped);
            assert!((polyline_length_km(&head).unwrap() - f * total).abs() < 1e-9);
        }
    }

    fn pair(px: f64, py: f64, t: &AffineTransform) -> ControlPointPair {
        let [lon, lat] = t.map(px, py);
        ControlPointPair { pixel: PixelPoint::new(px, py).unwrap(), world: pos(lon, lat) }
    }

    #[test]
    fn affine_recovers_identity_like_mapping() {
        let truth = AffineTransform { a: 0.01, b: 0.0, c: 0.0, d: 0.0, e: -0.01, f: 50.0, rms_residual_deg: 0.0 };
        let pairs: Vec<_> = [(0.0, 0.0), (1000.0, 0.0), (0.0, 800.0), (1000.0, 800.0)]
            .iter()
            .map(|&(x, y)| pair(x, y, &truth))
            .collect();
        let t = solve_affine(&pairs).unwrap();
        for (got, want) in [(t.a, 0.01), (t.b, 0.0), (t.c, 0.0), (t.d, 0.0), (t.e, -0.01), (t.f, 50.0)] {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn affine_three_pairs_interpolate() {
        let truth = AffineTransform { a: 1e-4, b: 2e-5, c: 13.0, d: -1e-5, e: -9e-5, f: 46.9, rms_residual_deg: 0.0 };
        let pairs = [pair(10.0, 20.0, &truth), pair(900.0, 40.0, &truth), pair(300.0, 700.0, &truth)];
        let t = solve_affine(&pairs).unwrap();
        assert!(t.rms_residual_deg <= 1e-12);
    }

    #[test]
    fn affine_rejects_bad_input() {
        let truth = AffineTransform { a: 0.01, b: 0.0, c: 0.0, d: 0.0, e: -0.01, f: 50.0, rms_residual_deg: 0.0 };
        let collinear = [pair(0.0, 0.0, &truth), pair(10.0, 10.0, &truth), pair(20.0, 20.0, &truth)];
        assert_eq!(solve_affine(&collinear), Err(GeoError::DegenerateControlPoints));
        assert_eq!(solve_affine(&collinear[..2]), Err(GeoError::TooFewControlPoints(2)));
    }

    #[test]
    fn affine_noise_gives_positive_residual() {
        let truth = AffineTransform { a: 1e-4, b: 1e-5, c: 13.0, d: 2e-5, e: -1e-4, f: 47.0, rms_residual_deg: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pairs: Vec<_> = (0..12)
            .map(|_| {
                let (x, y) = (rng.gen_range(0.0..2000.0), rng.gen_range(0.0..1500.0));
                let mut p = pair(x, y, &truth);
                p.pixel = PixelPoint::new(x + rng.gen_range(-1.0..1.0), y + rng.gen_range(-1.0..1.0)).unwrap();
                p
            })
            .collect();
        let t = solve_affine(&pairs).unwrap();
        assert!(t.rms_residual_deg > 0.0);
        // a pixel of noise over a ~2000 px baseline moves coefficients by well under 1 %
        assert!((t.a - truth.a).abs() < 1e-6 && (t.e - truth.e).abs() < 1e-6);
    }

    #[test]
    fn apply_and_invert_round_trip() {
        let t = AffineTransform { a: 1e-4, b: 3e-5, c: 13.0, d: -2e-5, e: -1e-4, f: 47.0, rms_residual_deg: 0.0 };
        assert_eq!(t.apply(PixelPoint::new(0.0, 0.0).unwrap()).unwrap(), pos(13.0, 47.0));
        for i in 0..10 {
            for j in 0..10 {
                let px = PixelPoint::new(i as f64 * 97.0, j as f64 * 53.0).unwrap();
                let w = apply_affine(&t, px).unwrap();
                assert!((w.lon() - (t.a * px.x + t.b * px.y + t.c)).abs() <= 1e-12);
                assert!((w.lat() - (t.d * px.x + t.e * px.y + t.f)).abs() <= 1e-12);
                let back = t.invert(w).unwrap();
                assert!((back[0] - px.x).abs() < 1e-9 && (back[1] - px.y).abs() < 1e-9);
            }
        }
        let flat = AffineTransform { a: 1.0, b: 2.0, c: 0.0, d: 2.0, e: 4.0, f: 0.0, rms_residual_deg: 0.0 };
        assert_eq!(flat.apply(PixelPoint::new(1.0, 1.0).unwrap()), Err(GeoError::DegenerateTransform));
    }
}
