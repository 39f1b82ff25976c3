use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{orient, polygon_area, polygon_centroid, Point, GEOM_EPS};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// A convex polygon with counter-clockwise vertices inside the unit square.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexShape {
    vertices: Vec<Point>,
}

/// On-disk form of a generated shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeFile {
    pub vertices: Vec<Point>,
    pub seed: u64,
    pub n_boundary: usize,
}

impl ConvexShape {
    /// Validates and wraps a vertex list.
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::invalid(format!("convex shape needs >= 3 vertices, got {n}")));
        }
        for (i, p) in vertices.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::invalid(format!("vertex {i} is not finite")));
            }
            if p.x < -GEOM_EPS || p.x > 1.0 + GEOM_EPS || p.y < -GEOM_EPS || p.y > 1.0 + GEOM_EPS {
                return Err(Error::invalid(format!("vertex {i} lies outside the unit square")));
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                if vertices[i].dist(vertices[j]) <= 1e-9 {
                    return Err(Error::invalid(format!("vertices {i} and {j} coincide")));
                }
            }
        }
        if polygon_area(&vertices) <= 0.0 {
            return Err(Error::invalid("vertices are not in counter-clockwise order"));
        }
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            if orient(a, b, c) < -GEOM_EPS {
                return Err(Error::invalid(format!("polygon is not convex at vertex {}", (i + 1) % n)));
            }
        }
        Ok(ConvexShape { vertices })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.vertices)
    }

    pub fn centroid(&self) -> Point {
        polygon_centroid(&self.vertices)
    }

    /// Inside-or-on-boundary test against every edge's half-plane.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| orient(self.vertices[i], self.vertices[(i + 1) % n], p) >= -GEOM_EPS)
    }

    /// Minimum distance from `p` to the polygon boundary.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| segment_distance(p, self.vertices[i], self.vertices[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Returns a copy with every coordinate multiplied by `s` (may leave the unit square).
    pub fn scaled_unchecked(&self, s: f64) -> Vec<Point> {
        self.vertices.iter().map(|p| Point::new(p.x * s, p.y * s)).collect()
    }

    pub fn to_file(&self, seed: u64) -> ShapeFile {
        ShapeFile { vertices: self.vertices.clone(), seed, n_boundary: self.vertices.len() }
    }
}

impl TryFrom<ShapeFile> for ConvexShape {
    type Error = Error;

    fn try_from(f: ShapeFile) -> Result<Self> {
        ConvexShape::new(f.vertices)
    }
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.x * ab.x + ab.y * ab.y;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.dist(Point::new(a.x + t * ab.x, a.y + t * ab.y))
}

/// Random convex polygon via Valtr's construction, fitted into [0.05, 0.95]^2.
pub fn gen_convex_shape(n_boundary: usize, seed: u64) -> Result<ConvexShape> {
    if n_boundary < 3 {
        return Err(Error::invalid(format!("n_boundary must be >= 3, got {n_boundary}")));
    }
    let mut rng = rng_from_seed(seed);
    // Redraw on the (measure-zero) event of parallel edge vectors or coincident points.
    for _ in 0..64 {
        let xs = chain_components(&mut rng, n_boundary);
        let mut ys = chain_components(&mut rng, n_boundary);
        ys.shuffle(&mut rng);

        let mut vecs: Vec<Point> = xs.iter().zip(&ys).map(|(&x, &y)| Point::new(x, y)).collect();
        vecs.sort_by(|a, b| a.y.atan2(a.x).total_cmp(&b.y.atan2(b.x)));

        let mut pts = Vec::with_capacity(n_boundary);
        let mut cur = Point::new(0.0, 0.0);
        for v in &vecs {
            pts.push(cur);
            cur = Point::new(cur.x + v.x, cur.y + v.y);
        }
        let pts = fit_to_box(&pts, 0.05, 0.95);
        if let Ok(shape) = ConvexShape::new(pts) {
            let n = shape.len();
            let strictly_convex = (0..n).all(|i| {
                orient(shape.vertices[i], shape.vertices[(i + 1) % n], shape.vertices[(i + 2) % n]) > GEOM_EPS
            });
            if strictly_convex {
                return Ok(shape);
            }
        }
    }
    Err(Error::invalid(format!("could not generate a convex {n_boundary}-gon for seed {seed}")))
}

/// One coordinate's worth of edge-vector components: sorted samples split into two chains.
fn chain_components(rng: &mut impl rand::Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    v.sort_by(f64::total_cmp);
    let (min, max) = (v[0], v[n - 1]);
    let mut out = Vec::with_capacity(n);
    let (mut last_a, mut last_b) = (min, min);
    for &x in &v[1..n - 1] {
        if rng.random_bool(0.5) {
            out.push(x - last_a);
            last_a = x;
        } else {
            out.push(last_b - x);
            last_b = x;
        }
    }
    out.push(max - last_a);
    out.push(last_b - max);
    out
}

fn fit_to_box(pts: &[Point], lo: f64, hi: f64) -> Vec<Point> {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in pts {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let span = (x1 - x0).max(y1 - y0);
    let s = (hi - lo) / span;
    let mid = 0.5 * (lo + hi);
    let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    pts.iter().map(|p| Point::new(mid + (p.x - cx) * s, mid + (p.y - cy) * s)).collect()
}
