use std::collections::BTreeSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{orient, ConvexShape, Point, GEOM_EPS};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

const NONE: usize = usize::MAX;

/// Triangle mesh with counter-clockwise faces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    #[serde(rename = "V")]
    pub vertices: Vec<Point>,
    #[serde(rename = "F")]
    pub faces: Vec<[usize; 3]>,
}

impl TriMesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn triangle(&self, f: usize) -> [Point; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.triangle(f);
        0.5 * orient(a, b, c)
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.signed_area(f)).sum()
    }

    /// Undirected edge set, each edge as (min, max).
    pub fn edges(&self) -> BTreeSet<(usize, usize)> {
        let mut set = BTreeSet::new();
        for f in &self.faces {
            for i in 0..3 {
                let (a, b) = (f[i], f[(i + 1) % 3]);
                set.insert((a.min(b), a.max(b)));
            }
        }
        set
    }

    /// Edges that belong to exactly one face, in face orientation.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut directed = BTreeSet::new();
        for f in &self.faces {
            for i in 0..3 {
                directed.insert((f[i], f[(i + 1) % 3]));
            }
        }
        directed.iter().copied().filter(|&(a, b)| !directed.contains(&(b, a))).collect()
    }

    /// Face containing `p` and its barycentric weights, if any.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        for f in 0..self.faces.len() {
            let [a, b, c] = self.triangle(f);
            let o = [orient(b, c, p), orient(c, a, p), orient(a, b, p)];
            if o.iter().all(|&v| v >= -GEOM_EPS) {
                let d = o[0] + o[1] + o[2];
                let (w0, w1, w2) = (o[0] / d, o[1] / d, o[2] / d);
                return Some((f, [w0, w1, w2]));
            }
        }
        None
    }

    /// Largest in-circle violation over all (face, vertex) pairs; <= tolerance for Delaunay.
    pub fn max_incircle_violation(&self) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for f in &self.faces {
            let [a, b, c] = [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]];
            for (i, &p) in self.vertices.iter().enumerate() {
                if f.contains(&i) {
                    continue;
                }
                worst = worst.max(incircle(a, b, c, p));
            }
        }
        worst
    }

    /// Returns a copy with all vertex positions multiplied by `s`.
    pub fn scaled(&self, s: f64) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|p| Point::new(p.x * s, p.y * s)).collect(),
            faces: self.faces.clone(),
        }
    }
}

/// Positive when `d` lies strictly inside the circumcircle of CCW triangle (a, b, c).
pub fn incircle(a: Point, b: Point, c: Point, d: Point) -> f64 {
    let (adx, ady) = (a.x - d.x, a.y - d.y);
    let (bdx, bdy) = (b.x - d.x, b.y - d.y);
    let (cdx, cdy) = (c.x - d.x, c.y - d.y);
    let ad = adx * adx + ady * ady;
    let bd = bdx * bdx + bdy * bdy;
    let cd = cdx * cdx + cdy * cdy;
    adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx)
}

/// Delaunay triangulation of the shape's vertices plus uniformly sampled interior points.
///
/// For a convex polygon with `h` vertices and `n` interior points the triangulation has
/// exactly `h + 2n - 2` faces, so the interior count is chosen from `target_triangles`
/// directly. Parity makes some small targets unreachable; the nearest count is used.
pub fn triangulate(shape: &ConvexShape, target_triangles: usize, seed: u64) -> Result<TriMesh> {
    if !(4..=4096).contains(&target_triangles) {
        return Err(Error::invalid(format!(
            "target_triangles must be in [4, 4096], got {target_triangles}"
        )));
    }
    let h = shape.len();
    let n_interior = ((target_triangles as f64 + 2.0 - h as f64) / 2.0).round().max(0.0) as usize;
    let interior = sample_interior(shape, n_interior, seed);
    triangulate_points(shape.vertices(), &interior)
}

/// Triangulation with a given total vertex count (boundary + interior).
pub fn triangulate_with_vertices(shape: &ConvexShape, n_vertices: usize, seed: u64) -> Result<TriMesh> {
    let h = shape.len();
    if n_vertices < h {
        return Err(Error::invalid(format!("{n_vertices} vertices is fewer than the {h} boundary vertices")));
    }
    let interior = sample_interior(shape, n_vertices - h, seed);
    triangulate_points(shape.vertices(), &interior)
}

/// Rejection sampling inside the polygon with a small exclusion radius so that no
/// sample sits on top of another point or the boundary.
fn sample_interior(shape: &ConvexShape, n: usize, seed: u64) -> Vec<Point> {
    if n == 0 {
        return Vec::new();
    }
    let mut rng = rng_from_seed(seed ^ 0xD1B5_4A32_D192_ED03);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in shape.vertices() {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let spacing = (shape.area() / n as f64).sqrt();
    let mut radius = 0.3 * spacing;
    let mut out: Vec<Point> = Vec::with_capacity(n);
    let mut grid = SpatialHash::new(radius.max(1e-6));
    let mut failures = 0usize;
    while out.len() < n {
        let p = Point::new(rng.random_range(x0..x1), rng.random_range(y0..y1));
        let ok = shape.contains(p)
            && shape.boundary_distance(p) > radius.max(1e-9)
            && !grid.any_within(&out, p, radius.max(1e-9));
        if ok {
            grid.insert(out.len(), p);
            out.push(p);
            failures = 0;
        } else {
            failures += 1;
            if failures > 2000 {
                radius *= 0.8;
                grid = SpatialHash::rebuilt(&out, radius.max(1e-6));
                failures = 0;
            }
        }
    }
    out
}

struct SpatialHash {
    cell: f64,
    buckets: std::collections::HashMap<(i64, i64), Vec<usize>>,
}

impl SpatialHash {
    fn new(cell: f64) -> Self {
        SpatialHash { cell, buckets: Default::default() }
    }

    fn rebuilt(pts: &[Point], cell: f64) -> Self {
        let mut h = SpatialHash::new(cell);
        for (i, &p) in pts.iter().enumerate() {
            h.insert(i, p);
        }
        h
    }

    fn key(&self, p: Point) -> (i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64)
    }

    fn insert(&mut self, i: usize, p: Point) {
        let k = self.key(p);
        self.buckets.entry(k).or_default().push(i);
    }

    fn any_within(&self, pts: &[Point], p: Point, r: f64) -> bool {
        let (kx, ky) = self.key(p);
        let reach = (r / self.cell).ceil() as i64;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                if let Some(b) = self.buckets.get(&(kx + dx, ky + dy)) {
                    if b.iter().any(|&i| pts[i].dist(p) < r) {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Delaunay triangulation of a convex polygon (CCW `boundary`) and points strictly inside it.
///
/// Starts from a fan of the polygon, flips it to Delaunay, then inserts interior points
/// one by one with Lawson legalization. Hull edges are never flipped, so the mesh
/// boundary is exactly the polygon boundary.
pub fn triangulate_points(boundary: &[Point], interior: &[Point]) -> Result<TriMesh> {
    if boundary.len() < 3 {
        return Err(Error::invalid("triangulation needs at least 3 boundary points"));
    }
    let mut points: Vec<Point> = boundary.to_vec();
    points.extend_from_slice(interior);
    let mut t = Triangulation { pts: points, tris: Vec::new(), nbr: Vec::new() };
    t.fan(boundary.len());
    t.legalize_all();
    let mut hint = 0;
    for idx in boundary.len()..t.pts.len() {
        hint = t.insert(idx, hint)?;
    }
    Ok(TriMesh { vertices: t.pts, faces: t.tris })
}

struct Triangulation {
    pts: Vec<Point>,
    tris: Vec<[usize; 3]>,
    /// nbr[t][i] is the triangle across the edge opposite vertex i.
    nbr: Vec<[usize; 3]>,
}

impl Triangulation {
    fn fan(&mut self, h: usize) {
        for i in 1..h - 1 {
            self.tris.push([0, i, i + 1]);
            let across_next = if i + 1 < h - 1 { i } else { NONE };
            let across_prev = if i > 1 { i - 2 } else { NONE };
            // Opposite 0: hull edge (i, i+1). Opposite i: edge (i+1, 0). Opposite i+1: edge (0, i).
            self.nbr.push([NONE, across_next, across_prev]);
        }
    }

    fn replace_nbr(&mut self, tri: usize, old: usize, new: usize) {
        if tri == NONE {
            return;
        }
        for k in 0..3 {
            if self.nbr[tri][k] == old {
                self.nbr[tri][k] = new;
                return;
            }
        }
    }

    fn is_illegal(&self, t: usize, i: usize) -> bool {
        let u = self.nbr[t][i];
        if u == NONE {
            return false;
        }
        let j = (0..3).find(|&j| self.nbr[u][j] == t).expect("neighbor links are symmetric");
        let d = self.pts[self.tris[u][j]];
        let [a, b, c] = self.tris[t];
        incircle(self.pts[a], self.pts[b], self.pts[c], d) > GEOM_EPS
    }

    /// Flips the edge opposite vertex i of t. Afterwards t = [a, b, d] and u = [a, d, c]
    /// where a = t[i] and d is the apex of the neighbor.
    fn flip(&mut self, t: usize, i: usize) -> usize {
        let u = self.nbr[t][i];
        let j = (0..3).find(|&j| self.nbr[u][j] == t).expect("neighbor links are symmetric");
        let a = self.tris[t][i];
        let b = self.tris[t][(i + 1) % 3];
        let c = self.tris[t][(i + 2) % 3];
        let d = self.tris[u][j];
        let n_ab = self.nbr[t][(i + 2) % 3];
        let n_ca = self.nbr[t][(i + 1) % 3];
        let n_bd = self.nbr[u][(j + 1) % 3];
        let n_dc = self.nbr[u][(j + 2) % 3];
        self.tris[t] = [a, b, d];
        self.nbr[t] = [n_bd, u, n_ab];
        self.tris[u] = [a, d, c];
        self.nbr[u] = [n_dc, n_ca, t];
        self.replace_nbr(n_bd, u, t);
        self.replace_nbr(n_ca, t, u);
        u
    }

    fn legalize_all(&mut self) {
        let mut stack: Vec<(usize, usize)> =
            (0..self.tris.len()).flat_map(|t| (0..3).map(move |i| (t, i))).collect();
        while let Some((t, i)) = stack.pop() {
            if self.is_illegal(t, i) {
                let u = self.flip(t, i);
                stack.extend([(t, 0), (t, 2), (u, 0), (u, 1)]);
            }
        }
    }

    /// Legalizes edges opposite the newly inserted point (at index 0 of each entry's rotation).
    fn legalize_from(&mut self, mut stack: Vec<(usize, usize)>) {
        while let Some((t, i)) = stack.pop() {
            if self.is_illegal(t, i) {
                let p = self.tris[t][i];
                let u = self.flip(t, i);
                debug_assert_eq!(self.tris[t][0], p);
                stack.push((t, 0));
                stack.push((u, 0));
            }
        }
    }

    fn locate(&self, p: Point, hint: usize) -> Option<(usize, Option<usize>)> {
        let n = self.tris.len();
        // Scan starting from the hint; insertion order is random so a walk gains little.
        for off in 0..n {
            let t = (hint + off) % n;
            let [a, b, c] = self.tris[t];
            let o = [
                orient(self.pts[b], self.pts[c], p),
                orient(self.pts[c], self.pts[a], p),
                orient(self.pts[a], self.pts[b], p),
            ];
            if o.iter().all(|&v| v >= -GEOM_EPS) {
                let on_edge = (0..3).find(|&k| o[k] <= GEOM_EPS);
                return Some((t, on_edge));
            }
        }
        None
    }

    fn insert(&mut self, pi: usize, hint: usize) -> Result<usize> {
        let p = self.pts[pi];
        let (t, on_edge) = self
            .locate(p, hint)
            .ok_or_else(|| Error::invalid(format!("point ({}, {}) is outside the polygon", p.x, p.y)))?;
        match on_edge {
            None => self.split_triangle(t, pi),
            Some(i) => {
                if self.nbr[t][i] == NONE {
                    return Err(Error::invalid(format!("interior point ({}, {}) lies on the boundary", p.x, p.y)));
                }
                self.split_edge(t, i, pi)
            }
        }
        Ok(t)
    }

    fn split_triangle(&mut self, t: usize, p: usize) {
        let [a, b, c] = self.tris[t];
        let [na, nb, nc] = self.nbr[t];
        let t1 = self.tris.len();
        let t2 = t1 + 1;
        self.tris[t] = [p, b, c];
        self.nbr[t] = [na, t1, t2];
        self.tris.push([p, c, a]);
        self.nbr.push([nb, t2, t]);
        self.tris.push([p, a, b]);
        self.nbr.push([nc, t, t1]);
        self.replace_nbr(nb, t, t1);
        self.replace_nbr(nc, t, t2);
        self.legalize_from(vec![(t, 0), (t1, 0), (t2, 0)]);
    }

    fn split_edge(&mut self, t: usize, i: usize, p: usize) {
        let u = self.nbr[t][i];
        let j = (0..3).find(|&j| self.nbr[u][j] == t).expect("neighbor links are symmetric");
        let a = self.tris[t][i];
        let b = self.tris[t][(i + 1) % 3];
        let c = self.tris[t][(i + 2) % 3];
        let d = self.tris[u][j];
        let n_ab = self.nbr[t][(i + 2) % 3];
        let n_ca = self.nbr[t][(i + 1) % 3];
        let n_bd = self.nbr[u][(j + 1) % 3];
        let n_dc = self.nbr[u][(j + 2) % 3];
        let (t1, u1) = (t, u);
        let t2 = self.tris.len();
        let u2 = t2 + 1;
        self.tris[t1] = [p, a, b];
        self.nbr[t1] = [n_ab, u2, t2];
        self.tris.push([p, c, a]);
        self.nbr.push([n_ca, t1, u1]);
        self.tris[u1] = [p, d, c];
        self.nbr[u1] = [n_dc, t2, u2];
        self.tris.push([p, b, d]);
        self.nbr.push([n_bd, u1, t1]);
        self.replace_nbr(n_ca, t, t2);
        self.replace_nbr(n_bd, u, u2);
        self.legalize_from(vec![(t1, 0), (t2, 0), (u1, 0), (u2, 0)]);
    }
}
