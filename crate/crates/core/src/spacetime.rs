//! Flat spacetime with 1 to 3 spatial dimensions.
//!
//! Positions, light-speed propagation delays, light-cone accessibility,
//! simplex (segment, triangle, tetrahedron) containment and multilateration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::ExactTime;

/// Largest supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Absolute sphere-intersection tolerance for multilateration, in distance-units.
pub const TAU_GEO: f64 = 1e-9;

/// Slack on barycentric weights when testing closed-hull containment.
const BARYCENTRIC_SLACK: f64 = 1e-12;

/// Relative volume below which a simplex counts as degenerate.
const DEGENERACY_RATIO: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("dimension must be between 1 and {MAX_DIM}, got {0}")]
    BadDimension(usize),
    #[error("dimension mismatch: expected {expected} components, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinates must be finite")]
    NonFinite,
    #[error("signal speed c must be positive and finite, got {0}")]
    BadSpeed(f64),
    #[error("expected {expected} stations, got {got}")]
    StationCount { expected: usize, got: usize },
    #[error("stations must satisfy a_0 < a_1 (got a_0 = {a0}, a_1 = {a1})")]
    StationOrder { a0: f64, a1: f64 },
    #[error("tag must lie strictly between the stations: a_0 < t_plus < a_1 (t_plus = {0})")]
    TagOutside(f64),
    #[error("tag extent must satisfy a_0 < t_0 <= t_plus <= t_1 < a_1")]
    BadExtent,
    #[error("tag extent is only meaningful in one dimension")]
    ExtentNotOneDim,
    #[error("stations are degenerate (coplanar / collinear): simplex volume is zero")]
    Degenerate,
    #[error("distances must be finite and non-negative")]
    BadDistance,
}

/// A point in space with 1 to 3 components.
#[derive(Clone, Copy, PartialEq)]
pub struct Position {
    coords: [f64; MAX_DIM],
    dim: u8,
}

impl Position {
    pub fn new(coords: &[f64]) -> Result<Self, GeometryError> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(GeometryError::BadDimension(coords.len()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let mut buf = [0.0; MAX_DIM];
        buf[..coords.len()].copy_from_slice(coords);
        Ok(Position {
            coords: buf,
            dim: coords.len() as u8,
        })
    }

    pub fn x(x: f64) -> Self {
        Position::new(&[x]).expect("finite 1D coordinate")
    }

    pub fn xyz(x: f64, y: f64, z: f64) -> Self {
        Position::new(&[x, y, z]).expect("finite 3D coordinates")
    }

    pub fn origin(dim: usize) -> Self {
        Position::new(&vec![0.0; dim]).expect("valid dimension")
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.dim()]
    }

    pub fn distance(&self, other: &Position) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.coords().iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn add(&self, other: &Position) -> Position {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Position) -> Position {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Position {
        let mut out = *self;
        for c in &mut out.coords[..self.dim()] {
            *c *= s;
        }
        out
    }

    fn zip_with(&self, other: &Position, f: impl Fn(f64, f64) -> f64) -> Position {
        debug_assert_eq!(self.dim, other.dim);
        let mut out = *self;
        for (o, b) in out.coords[..self.dim()].iter_mut().zip(other.coords()) {
            *o = f(*o, *b);
        }
        out
    }

    fn check_dim(&self, expected: usize) -> Result<(), GeometryError> {
        if self.dim() != expected {
            return Err(GeometryError::DimensionMismatch {
                expected,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

impl std::fmt::Debug for Position {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.coords()).finish()
    }
}

impl Serialize for Position {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Position {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Position::new(&v).map_err(serde::de::Error::custom)
    }
}

/// A (time, position) pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacetimeEvent {
    pub t: ExactTime,
    pub x: Position,
}

impl SpacetimeEvent {
    pub fn new(t: ExactTime, x: Position) -> Self {
        SpacetimeEvent { t, x }
    }
}

/// Station layout, claimed tag position and signal speed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    dimension: usize,
    c: f64,
    stations: Vec<Position>,
    tag: Position,
    tag_extent: Option<(f64, f64)>,
}

impl Geometry {
    /// Validates and builds a geometry.
    ///
    /// Stations must form a non-degenerate simplex: two stations with
    /// `a_0 < t_plus < a_1` in 1D, three non-collinear stations in 2D, four
    /// non-coplanar stations in 3D. In 2D and 3D the tag may lie outside the
    /// hull; authentication rejects such claims later.
    pub fn new(
        dimension: usize,
        c: f64,
        stations: Vec<Position>,
        tag: Position,
        tag_extent: Option<(f64, f64)>,
    ) -> Result<Self, GeometryError> {
        if dimension == 0 || dimension > MAX_DIM {
            return Err(GeometryError::BadDimension(dimension));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(GeometryError::BadSpeed(c));
        }
        for p in stations.iter().chain(std::iter::once(&tag)) {
            p.check_dim(dimension)?;
        }
        if stations.len() != dimension + 1 {
            return Err(GeometryError::StationCount {
                expected: dimension + 1,
                got: stations.len(),
            });
        }
        if dimension == 1 {
            let (a0, a1, t) = (stations[0].coords[0], stations[1].coords[0], tag.coords[0]);
            if a0 >= a1 {
                return Err(GeometryError::StationOrder { a0, a1 });
            }
            if !(a0 < t && t < a1) {
                return Err(GeometryError::TagOutside(t));
            }
            if let Some((t0, t1)) = tag_extent {
                if !(t0.is_finite() && t1.is_finite() && a0 < t0 && t0 <= t && t <= t1 && t1 < a1) {
                    return Err(GeometryError::BadExtent);
                }
            }
        } else {
            if tag_extent.is_some() {
                return Err(GeometryError::ExtentNotOneDim);
            }
            check_simplex(&stations)?;
        }
        Ok(Geometry {
            dimension,
            c,
            stations,
            tag,
            tag_extent,
        })
    }

    /// Two-station line geometry with `c = 1`.
    pub fn line(a0: f64, a1: f64, t_plus: f64) -> Result<Self, GeometryError> {
        Geometry::new(
            1,
            1.0,
            vec![Position::x(a0), Position::x(a1)],
            Position::x(t_plus),
            None,
        )
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn stations(&self) -> &[Position] {
        &self.stations
    }

    pub fn station(&self, i: usize) -> Position {
        self.stations[i]
    }

    /// Claimed tag position `t_plus`.
    pub fn tag(&self) -> Position {
        self.tag
    }

    pub fn tag_extent(&self) -> Option<(f64, f64)> {
        self.tag_extent
    }

    /// Same stations and speed, different claimed tag position.
    pub fn with_tag(&self, tag: Position) -> Result<Self, GeometryError> {
        Geometry::new(self.dimension, self.c, self.stations.clone(), tag, None)
    }

    /// Exact (quantized) light-speed delay between two points.
    ///
    /// Panics on dimension mismatch; use [`propagation_delay`] for the
    /// checked form.
    pub fn delay(&self, p: &Position, q: &Position) -> ExactTime {
        ExactTime::from_units_ceil(p.distance(q) / self.c)
    }

    /// Largest station-to-station delay.
    pub fn station_diameter(&self) -> ExactTime {
        let mut best = ExactTime::ZERO;
        for (i, p) in self.stations.iter().enumerate() {
            for q in &self.stations[i + 1..] {
                best = best.max(self.delay(p, q));
            }
        }
        best
    }
}

/// Light-speed delay `|p - q| / c`, quantized up to the tick grid.
pub fn propagation_delay(p: &Position, q: &Position, geom: &Geometry) -> Result<ExactTime, GeometryError> {
    p.check_dim(geom.dimension)?;
    q.check_dim(geom.dimension)?;
    Ok(geom.delay(p, q))
}

/// True iff a light-speed signal leaving `origin` can reach `query`.
pub fn causally_accessible(origin: &SpacetimeEvent, query: &SpacetimeEvent, geom: &Geometry) -> bool {
    match propagation_delay(&origin.x, &query.x, geom) {
        Ok(d) => query.t >= origin.t + d,
        Err(_) => false,
    }
}

/// Signed volume scale of the simplex (determinant of edge vectors).
fn edge_matrix(vertices: &[Position]) -> DMatrix<f64> {
    let n = vertices[0].dim();
    let v0 = vertices[0];
    DMatrix::from_fn(n, n, |r, c| vertices[c + 1].coords[r] - v0.coords[r])
}

fn check_simplex(vertices: &[Position]) -> Result<(), GeometryError> {
    let n = vertices[0].dim();
    if vertices.len() != n + 1 {
        return Err(GeometryError::StationCount {
            expected: n + 1,
            got: vertices.len(),
        });
    }
    for v in vertices {
        v.check_dim(n)?;
    }
    let m = edge_matrix(vertices);
    let scale = m
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    if m.determinant().abs() <= DEGENERACY_RATIO * scale.powi(n as i32) {
        return Err(GeometryError::Degenerate);
    }
    Ok(())
}

/// Barycentric weights of `p` with respect to a non-degenerate simplex.
pub fn barycentric(p: &Position, vertices: &[Position]) -> Result<Vec<f64>, GeometryError> {
    check_simplex(vertices)?;
    p.check_dim(vertices[0].dim())?;
    let rel = p.sub(&vertices[0]);
    let rhs = DVector::from_column_slice(rel.coords());
    let w = edge_matrix(vertices)
        .lu()
        .solve(&rhs)
        .ok_or(GeometryError::Degenerate)?;
    let mut out = Vec::with_capacity(w.len() + 1);
    out.push(1.0 - w.sum());
    out.extend(w.iter().copied());
    Ok(out)
}

/// Closed-hull containment for a simplex of any supported dimension.
pub fn in_simplex(p: &Position, vertices: &[Position]) -> Result<bool, GeometryError> {
    Ok(barycentric(p, vertices)?
        .iter()
        .all(|&w| (-BARYCENTRIC_SLACK..=1.0 + BARYCENTRIC_SLACK).contains(&w)))
}

/// Closed-hull containment in the tetrahedron spanned by four 3D vertices.
pub fn in_tetrahedron(p: &Position, vertices: &[Position; 4]) -> Result<bool, GeometryError> {
    p.check_dim(3)?;
    in_simplex(p, vertices)
}

/// Per-sphere residuals `|p - s_i| - d_i` when the spheres do not meet in a point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InconsistencyReport {
    /// Solution of the linearized system; satisfies every sphere difference
    /// equation but not the spheres themselves.
    pub candidate: Position,
    pub residuals: Vec<f64>,
}

impl InconsistencyReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SphereFix {
    Consistent(Position),
    Inconsistent(InconsistencyReport),
}

impl SphereFix {
    pub fn position(&self) -> Option<Position> {
        match self {
            SphereFix::Consistent(p) => Some(*p),
            SphereFix::Inconsistent(_) => None,
        }
    }
}

/// Recovers the point at distance `d_i` from each of `n + 1` stations.
///
/// Subtracting the sphere equation of station 0 from the others gives an
/// `n x n` linear system; its solution is accepted when it lies on all
/// spheres within [`TAU_GEO`].
pub fn multilaterate(stations: &[Position], distances: &[f64]) -> Result<SphereFix, GeometryError> {
    check_simplex(stations)?;
    if distances.len() != stations.len() {
        return Err(GeometryError::DimensionMismatch {
            expected: stations.len(),
            got: distances.len(),
        });
    }
    if distances.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(GeometryError::BadDistance);
    }
    let n = stations[0].dim();
    let s0 = stations[0];
    let d0 = distances[0];
    let m = edge_matrix(stations).transpose() * 2.0;
    let rhs = DVector::from_fn(n, |i, _| {
        let u = stations[i + 1].sub(&s0);
        let di = distances[i + 1];
        u.norm() * u.norm() + d0 * d0 - di * di
    });
    let q = m.lu().solve(&rhs).ok_or(GeometryError::Degenerate)?;
    let p = s0.add(&Position::new(q.as_slice())?);
    let residuals: Vec<f64> = stations.iter().zip(distances).map(|(s, d)| p.distance(s) - d).collect();
    if residuals.iter().all(|r| r.abs() <= TAU_GEO) {
        Ok(SphereFix::Consistent(p))
    } else {
        Ok(SphereFix::Inconsistent(InconsistencyReport {
            candidate: p,
            residuals,
        }))
    }
}

/// Exact distances from `p` to each station.
pub fn distances_from(p: &Position, stations: &[Position]) -> Vec<f64> {
    stations.iter().map(|s| s.distance(p)).collect()
}

pub fn centroid(points: &[Position]) -> Position {
    let n = points.len() as f64;
    points
        .iter()
        .skip(1)
        .fold(points[0], |acc, p| acc.add(p))
        .scale(1.0 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_tetra() -> [Position; 4] {
        [
            Position::xyz(0.0, 0.0, 0.0),
            Position::xyz(1.0, 0.0, 0.0),
            Position::xyz(0.0, 1.0, 0.0),
            Position::xyz(0.0, 0.0, 1.0),
        ]
    }

    fn ev(t: f64, x: f64) -> SpacetimeEvent {
        SpacetimeEvent::new(ExactTime::from_units(t), Position::x(x))
    }

    #[test]
    fn delay_examples() {
        let g = Geometry::line(0.0, 10.0, 5.0).unwrap();
        let p = Position::x(5.0);
        assert_eq!(propagation_delay(&p, &p, &g).unwrap(), ExactTime::ZERO);
        let d = propagation_delay(&Position::x(0.0), &Position::x(10.0), &g).unwrap();
        assert_eq!(d, ExactTime::from_int_units(10));

        let g3 = Geometry::new(3, 2.0, unit_tetra().to_vec(), Position::xyz(0.1, 0.1, 0.1), None).unwrap();
        let d = propagation_delay(&Position::xyz(0.0, 0.0, 0.0), &Position::xyz(3.0, 4.0, 0.0), &g3).unwrap();
        assert_eq!(d, ExactTime::from_units(2.5));
    }

    #[test]
    fn delay_rejects_dimension_mismatch() {
        let g = Geometry::line(0.0, 10.0, 5.0).unwrap();
        let err = propagation_delay(&Position::x(0.0), &Position::xyz(1.0, 0.0, 0.0), &g);
        assert!(matches!(err, Err(GeometryError::DimensionMismatch { .. })));
    }

    #[test]
    fn light_cone_examples() {
        let g = Geometry::line(-10.0, 10.0, 0.0).unwrap();
        assert!(causally_accessible(&ev(0.0, 0.0), &ev(0.0, 0.0), &g));
        assert!(causally_accessible(&ev(0.0, 0.0), &ev(1.0, 0.5), &g));
        assert!(!causally_accessible(&ev(0.0, 0.0), &ev(0.3, 0.5), &g));
    }

    #[test]
    fn line_geometry_rules() {
        assert!(matches!(
            Geometry::line(10.0, 0.0, 5.0),
            Err(GeometryError::StationOrder { .. })
        ));
        assert!(matches!(
            Geometry::line(0.0, 10.0, 10.0),
            Err(GeometryError::TagOutside(_))
        ));
        let st = vec![Position::x(0.0), Position::x(10.0)];
        assert!(Geometry::new(1, 1.0, st.clone(), Position::x(5.0), Some((4.0, 6.0))).is_ok());
        assert_eq!(
            Geometry::new(1, 1.0, st.clone(), Position::x(5.0), Some((0.0, 6.0))),
            Err(GeometryError::BadExtent)
        );
        assert_eq!(
            Geometry::new(1, 0.0, st, Position::x(5.0), None),
            Err(GeometryError::BadSpeed(0.0))
        );
    }

    #[test]
    fn coplanar_stations_rejected() {
        let flat = vec![
            Position::xyz(0.0, 0.0, 0.0),
            Position::xyz(1.0, 0.0, 0.0),
            Position::xyz(0.0, 1.0, 0.0),
            Position::xyz(1.0, 1.0, 0.0),
        ];
        assert_eq!(
            Geometry::new(3, 1.0, flat.clone(), Position::xyz(0.2, 0.2, 0.0), None),
            Err(GeometryError::Degenerate)
        );
        let flat4: [Position; 4] = flat.try_into().unwrap();
        assert_eq!(
            in_tetrahedron(&Position::xyz(0.0, 0.0, 0.0), &flat4),
            Err(GeometryError::Degenerate)
        );
    }

    #[test]
    fn tetrahedron_examples() {
        let t = unit_tetra();
        assert!(in_tetrahedron(&centroid(&t), &t).unwrap());
        for v in &t {
            assert!(in_tetrahedron(v, &t).unwrap());
        }
        // weights for (1,1,1): (-2, 1, 1, 1)
        let w = barycentric(&Position::xyz(1.0, 1.0, 1.0), &t).unwrap();
        assert!((w[0] + 2.0).abs() < 1e-12);
        assert!(!in_tetrahedron(&Position::xyz(1.0, 1.0, 1.0), &t).unwrap());
    }

    #[test]
    fn multilateration_examples() {
        let st = vec![
            Position::xyz(0.0, 0.0, 0.0),
            Position::xyz(10.0, 0.0, 0.0),
            Position::xyz(0.0, 10.0, 0.0),
            Position::xyz(0.0, 0.0, 10.0),
        ];
        let truth = Position::xyz(2.0, 3.0, 1.5);
        let d = distances_from(&truth, &st);
        let p = multilaterate(&st, &d).unwrap().position().unwrap();
        assert!(p.distance(&truth) < 1e-9);

        let c = centroid(&st);
        let p = multilaterate(&st, &distances_from(&c, &st))
            .unwrap()
            .position()
            .unwrap();
        assert!(p.distance(&c) < 1e-9);

        let mut bad = d.clone();
        bad[0] += 1.0;
        match multilaterate(&st, &bad).unwrap() {
            SphereFix::Inconsistent(rep) => {
                assert_eq!(rep.residuals.len(), 4);
                assert!(rep.residuals[0].abs() > 0.1, "{:?}", rep.residuals);
                assert!(rep.residuals[0].abs() < 10.0, "{:?}", rep.residuals);
            }
            other => panic!("expected inconsistency, got {other:?}"),
        }
    }

    fn arb_point() -> impl Strategy<Value = Position> {
        prop::array::uniform3(-50.0..50.0f64).prop_map(|a| Position::xyz(a[0], a[1], a[2]))
    }

    proptest! {
        #[test]
        fn delay_is_a_scaled_metric(p in arb_point(), q in arb_point(), r in arb_point(), c in 0.1..10.0f64) {
            let g = Geometry::new(3, c, unit_tetra().to_vec(), Position::xyz(0.1,0.1,0.1), None).unwrap();
            let pq = propagation_delay(&p, &q, &g).unwrap();
            prop_assert!(pq >= ExactTime::ZERO);
            prop_assert_eq!(pq, propagation_delay(&q, &p, &g).unwrap());
            let pr = propagation_delay(&p, &r, &g).unwrap();
            let rq = propagation_delay(&r, &q, &g).unwrap();
            // each leg may round up by one tick
            prop_assert!(pq <= pr + rq + ExactTime::from_ticks(2));
        }

        #[test]
        fn accessibility_is_monotone_in_time(x in -20.0..20.0f64, t in -5.0..40.0f64, later in 0.0..10.0f64) {
            let g = Geometry::line(-30.0, 30.0, 0.0).unwrap();
            let o = ev(0.0, 0.0);
            if causally_accessible(&o, &ev(t, x), &g) {
                prop_assert!(causally_accessible(&o, &ev(t + later, x), &g));
            }
        }
    }
}
