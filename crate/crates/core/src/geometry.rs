//! Homogeneous-transformation mathematics in the plane.
//!
//! A homogeneous deformation maps every reference position `r0` to
//! `Q r0 + d`. Three non-collinear leaders determine `(Q, d)` uniquely, and
//! any other point is an affine (barycentric) combination of the leaders, so
//! its desired position can be evaluated either through the transform or
//! through its barycentric weights.

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

/// Planar position in meters.
pub type Point2 = Vector2<f64>;

/// Triangles with `|signed area|` below this are treated as degenerate (m²).
pub const DEGENERACY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("degenerate triangle (signed area {area:e} m²)")]
    DegenerateTriangle { area: f64 },
    #[error("singular transform (det Q = {det:e})")]
    SingularTransform { det: f64 },
}

/// Signed area of the triangle `(a, b, c)`; positive for counter-clockwise order.
pub fn signed_area(a: &Point2, b: &Point2, c: &Point2) -> f64 {
    0.5 * cross(&(b - a), &(c - a))
}

#[inline]
pub(crate) fn cross(u: &Vector2<f64>, v: &Vector2<f64>) -> f64 {
    u.x * v.y - u.y * v.x
}

/// An ordered, non-degenerate triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    vertices: [Point2; 3],
}

impl Triangle {
    pub fn new(a: Point2, b: Point2, c: Point2) -> Result<Self, GeometryError> {
        let area = signed_area(&a, &b, &c);
        if !area.is_finite() || area.abs() < DEGENERACY_TOL {
            return Err(GeometryError::DegenerateTriangle { area });
        }
        Ok(Self { vertices: [a, b, c] })
    }

    pub fn from_vertices(v: [Point2; 3]) -> Result<Self, GeometryError> {
        Self::new(v[0], v[1], v[2])
    }

    pub fn vertices(&self) -> &[Point2; 3] {
        &self.vertices
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices[0], &self.vertices[1], &self.vertices[2])
    }

    pub fn centroid(&self) -> Point2 {
        (self.vertices[0] + self.vertices[1] + self.vertices[2]) / 3.0
    }
}

/// Affine weights of a point with respect to the three vertices of a triangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarycentricWeights(pub [f64; 3]);

impl BarycentricWeights {
    pub fn as_array(&self) -> [f64; 3] {
        self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// All weights non-negative, i.e. the point lies in the closed triangle.
    pub fn is_inside(&self) -> bool {
        self.min() >= 0.0
    }
}

/// Solves `[x; y; 1] = M α` where `M` stacks the vertex coordinates over a row
/// of ones.
///
/// The first two weights are signed-area ratios measured relative to `p`;
/// the third closes the partition of unity.
pub fn barycentric_coords(p: &Point2, tri: &Triangle) -> BarycentricWeights {
    let [v1, v2, v3] = tri.vertices;
    let twice_area = cross(&(v2 - v1), &(v3 - v1));
    let a1 = cross(&(v2 - p), &(v3 - p)) / twice_area;
    let a2 = cross(&(v3 - p), &(v1 - p)) / twice_area;
    BarycentricWeights([a1, a2, 1.0 - a1 - a2])
}

/// Checked variant of [`barycentric_coords`] for raw vertex triples.
pub fn barycentric_coords_of(p: &Point2, vertices: [Point2; 3]) -> Result<BarycentricWeights, GeometryError> {
    Ok(barycentric_coords(p, &Triangle::from_vertices(vertices)?))
}

/// `r ↦ Q r + d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogeneousTransform {
    pub q: Matrix2<f64>,
    pub d: Vector2<f64>,
}

impl HomogeneousTransform {
    pub fn identity() -> Self {
        Self {
            q: Matrix2::identity(),
            d: Vector2::zeros(),
        }
    }

    pub fn apply(&self, r0: &Point2) -> Point2 {
        self.q * r0 + self.d
    }

    pub fn det(&self) -> f64 {
        self.q.determinant()
    }
}

/// Identifies the unique homogeneous transform carrying the reference leaders
/// onto the desired leaders.
pub fn solve_transform(reference: &Triangle, desired: &[Point2; 3]) -> Result<HomogeneousTransform, GeometryError> {
    let [r1, r2, r3] = reference.vertices;
    let [p1, p2, p3] = *desired;
    let ref_edges = Matrix2::from_columns(&[r2 - r1, r3 - r1]);
    let des_edges = Matrix2::from_columns(&[p2 - p1, p3 - p1]);
    let inv = ref_edges
        .try_inverse()
        .ok_or(GeometryError::DegenerateTriangle {
            area: reference.signed_area(),
        })?;
    let q = des_edges * inv;
    let desired_area = signed_area(&p1, &p2, &p3);
    if !desired_area.is_finite() || desired_area.abs() < DEGENERACY_TOL {
        return Err(GeometryError::SingularTransform { det: q.determinant() });
    }
    let d = p1 - q * r1;
    Ok(HomogeneousTransform { q, d })
}

/// `Q = R U` with `R` a proper rotation and `U` symmetric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarFactors {
    pub rotation: Matrix2<f64>,
    pub stretch: Matrix2<f64>,
    /// Eigenvalues of `stretch`, sorted so that `eigenvalues.0 >= eigenvalues.1`.
    pub eigenvalues: (f64, f64),
}

/// Closed-form 2×2 polar decomposition.
///
/// Writing `Q` as a conformal part `[[p, -s], [s, p]]` plus an anti-conformal
/// part, the rotation angle is `atan2(s, p)`; `Rᵀ Q` is then symmetric, and
/// equals `sqrt(QᵀQ)` whenever `det Q > 0`.
pub fn polar_decompose(t: &HomogeneousTransform) -> Result<PolarFactors, GeometryError> {
    let q = t.q;
    let det = q.determinant();
    if !det.is_finite() || det == 0.0 {
        return Err(GeometryError::SingularTransform { det });
    }
    let p = q[(0, 0)] + q[(1, 1)];
    let s = q[(1, 0)] - q[(0, 1)];
    let norm = p.hypot(s);
    let rotation = if norm > 0.0 {
        let (c, sn) = (p / norm, s / norm);
        Matrix2::new(c, -sn, sn, c)
    } else {
        // Only reachable for det Q < 0 with a vanishing conformal part.
        Matrix2::identity()
    };
    let mut stretch = rotation.transpose() * q;
    let off = 0.5 * (stretch[(0, 1)] + stretch[(1, 0)]);
    stretch[(0, 1)] = off;
    stretch[(1, 0)] = off;
    let eigenvalues = symmetric_eigenvalues(&stretch);
    Ok(PolarFactors {
        rotation,
        stretch,
        eigenvalues,
    })
}

/// Eigenvalues of a symmetric 2×2 matrix, largest first.
pub fn symmetric_eigenvalues(m: &Matrix2<f64>) -> (f64, f64) {
    let mean = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let radius = half_diff.hypot(m[(0, 1)]);
    (mean + radius, mean - radius)
}

/// `Σ α_j r_j` over the three leader positions.
pub fn desired_position(w: &BarycentricWeights, leaders: &[Point2; 3]) -> Point2 {
    leaders[0] * w.0[0] + leaders[1] * w.0[1] + leaders[2] * w.0[2]
}
