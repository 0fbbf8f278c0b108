//! Vectors, rays, triangle intersection and a bounding volume hierarchy.

use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub const fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    #[inline]
    pub fn splat(v: T) -> Self {
        Self::new(v, v, v)
    }

    pub fn from_f64(v: [f64; 3]) -> Self {
        Self::new(T::lit(v[0]), T::lit(v[1]), T::lit(v[2]))
    }

    pub fn to_f64(self) -> [f64; 3] {
        [self.x.as_f64(), self.y.as_f64(), self.z.as_f64()]
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm_squared().sqrt()
    }

    /// Unit vector in the same direction; `None` for the zero vector.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if n > T::zero() && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    #[inline]
    pub fn mul_elem(self, o: Self) -> Self {
        Self::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    #[inline]
    pub fn min(self, o: Self) -> Self {
        Self::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    #[inline]
    pub fn max(self, o: Self) -> Self {
        Self::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn distance(self, o: Self) -> T {
        (self - o).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

/// Row-major 3×3 matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat3<T> {
    pub rows: [[T; 3]; 3],
}

impl<T: Real> Mat3<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            rows: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    pub fn from_columns(a: Vec3<T>, b: Vec3<T>, c: Vec3<T>) -> Self {
        Self {
            rows: [[a.x, b.x, c.x], [a.y, b.y, c.y], [a.z, b.z, c.z]],
        }
    }

    /// Rotation by `angle` radians about a unit `axis` (Rodrigues).
    pub fn rotation(axis: Vec3<T>, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let t = T::one() - c;
        let Vec3 { x, y, z } = axis;
        Self {
            rows: [
                [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
                [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
                [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
            ],
        }
    }

    pub fn column(&self, j: usize) -> Vec3<T> {
        Vec3::new(self.rows[0][j], self.rows[1][j], self.rows[2][j])
    }

    pub fn transpose(&self) -> Self {
        let r = &self.rows;
        Self {
            rows: [
                [r[0][0], r[1][0], r[2][0]],
                [r[0][1], r[1][1], r[2][1]],
                [r[0][2], r[1][2], r[2][2]],
            ],
        }
    }

    pub fn mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        let r = &self.rows;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut rows = [[T::zero(); 3]; 3];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).fold(T::zero(), |acc, k| acc + self.rows[i][k] * o.rows[k][j]);
            }
        }
        Self { rows }
    }

    pub fn determinant(&self) -> T {
        let r = &self.rows;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }

    /// Largest absolute entry of `selfᵀ·self − I`.
    pub fn orthonormality_error(&self) -> T {
        let g = self.transpose().mul_mat(self);
        let id = Self::identity();
        let mut worst = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((g.rows[i][j] - id.rows[i][j]).abs());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, o: &Self) -> T {
        let mut worst = T::zero();
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((self.rows[i][j] - o.rows[i][j]).abs());
            }
        }
        worst
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Ray<T> {
    pub origin: Vec3<T>,
    pub dir: Vec3<T>,
}

impl<T: Real> Ray<T> {
    pub fn new(origin: Vec3<T>, dir: Vec3<T>) -> Self {
        Self { origin, dir }
    }

    #[inline]
    pub fn at(&self, t: T) -> Vec3<T> {
        self.origin + self.dir * t
    }
}

/// Möller–Trumbore intersection. Edges are inclusive so rays through a shared edge hit
/// both neighbours; callers break the tie. Returns `(t, u, v)` for `t > t_min`.
#[inline]
pub fn intersect_triangle<T: Real>(
    ray: &Ray<T>,
    a: Vec3<T>,
    b: Vec3<T>,
    c: Vec3<T>,
    t_min: T,
) -> Option<(T, T, T)> {
    let e1 = b - a;
    let e2 = c - a;
    let p = ray.dir.cross(e2);
    let det = e1.dot(p);
    if det == T::zero() || !det.is_finite() {
        return None;
    }
    let inv = T::one() / det;
    let s = ray.origin - a;
    let u = s.dot(p) * inv;
    if u < T::zero() || u > T::one() {
        return None;
    }
    let q = s.cross(e1);
    let v = ray.dir.dot(q) * inv;
    if v < T::zero() || u + v > T::one() {
        return None;
    }
    let t = e2.dot(q) * inv;
    (t > t_min).then_some((t, u, v))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn empty() -> Self {
        Self {
            min: Vec3::splat(T::infinity()),
            max: Vec3::splat(T::neg_infinity()),
        }
    }

    pub fn grow(&mut self, p: Vec3<T>) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    pub fn union(&self, o: &Self) -> Self {
        Self {
            min: self.min.min(o.min),
            max: self.max.max(o.max),
        }
    }

    pub fn longest_axis(&self) -> usize {
        let d = self.max - self.min;
        if d.x >= d.y && d.x >= d.z {
            0
        } else if d.y >= d.z {
            1
        } else {
            2
        }
    }

    /// Slab test; returns the entry distance when the ray overlaps `[t_min, t_max]`.
    #[inline]
    pub fn hit(&self, origin: Vec3<T>, inv_dir: Vec3<T>, t_min: T, t_max: T) -> Option<T> {
        let mut lo = t_min;
        let mut hi = t_max;
        for axis in 0..3 {
            let inv = inv_dir[axis];
            let mut t0 = (self.min[axis] - origin[axis]) * inv;
            let mut t1 = (self.max[axis] - origin[axis]) * inv;
            if t0.is_nan() || t1.is_nan() {
                // Ray parallel to the slab and lying exactly on its plane.
                if origin[axis] < self.min[axis] || origin[axis] > self.max[axis] {
                    return None;
                }
                continue;
            }
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            lo = lo.max(t0);
            hi = hi.min(t1);
            if lo > hi {
                return None;
            }
        }
        Some(lo)
    }
}

/// Identifies one triangle of one scene object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PrimId {
    pub object: u32,
    pub triangle: u32,
}

#[derive(Clone, Copy, Debug)]
pub struct Hit<T> {
    pub t: T,
    pub prim: PrimId,
    pub u: T,
    pub v: T,
}

#[derive(Clone, Copy, Debug)]
struct Prim<T> {
    id: PrimId,
    verts: [Vec3<T>; 3],
}

#[derive(Clone, Debug)]
enum Node<T> {
    Leaf { bounds: Aabb<T>, start: u32, count: u32 },
    Inner { bounds: Aabb<T>, left: u32, right: u32 },
}

impl<T: Real> Node<T> {
    fn bounds(&self) -> &Aabb<T> {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

const LEAF_SIZE: usize = 4;

/// Median-split BVH over triangles. Nearest-hit queries resolve equal distances to the
/// lowest `PrimId` (object index first), independent of tree layout.
#[derive(Clone, Debug)]
pub struct Bvh<T> {
    prims: Vec<Prim<T>>,
    nodes: Vec<Node<T>>,
}

impl<T: Real> Bvh<T> {
    pub fn build(triangles: impl IntoIterator<Item = (PrimId, [Vec3<T>; 3])>) -> Self {
        let mut prims: Vec<Prim<T>> = triangles
            .into_iter()
            .map(|(id, verts)| Prim { id, verts })
            .collect();
        let mut nodes = Vec::new();
        if !prims.is_empty() {
            let n = prims.len();
            build_node(&mut prims, 0, n, &mut nodes);
        }
        Self { prims, nodes }
    }

    pub fn len(&self) -> usize {
        self.prims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prims.is_empty()
    }

    pub fn triangle(&self, id: PrimId) -> Option<[Vec3<T>; 3]> {
        self.prims.iter().find(|p| p.id == id).map(|p| p.verts)
    }

    /// Nearest hit with `t_min < t < t_max`.
    pub fn nearest(&self, ray: &Ray<T>, t_min: T, t_max: T) -> Option<Hit<T>> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv_dir = Vec3::new(T::one() / ray.dir.x, T::one() / ray.dir.y, T::one() / ray.dir.z);
        let mut best: Option<Hit<T>> = None;
        let mut stack = vec![0u32];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx as usize];
            let limit = best.map_or(t_max, |h| h.t);
            if node.bounds().hit(ray.origin, inv_dir, t_min, limit).is_none() {
                continue;
            }
            match *node {
                Node::Leaf { start, count, .. } => {
                    for prim in &self.prims[start as usize..(start + count) as usize] {
                        let [a, b, c] = prim.verts;
                        if let Some((t, u, v)) = intersect_triangle(ray, a, b, c, t_min) {
                            if t >= t_max {
                                continue;
                            }
                            let better = match best {
                                None => true,
                                Some(h) => t < h.t || (t == h.t && prim.id < h.prim),
                            };
                            if better {
                                best = Some(Hit { t, prim: prim.id, u, v });
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        best
    }

    /// True if any triangle other than `skip` is hit with `t_min < t < t_max`.
    pub fn occluded(&self, ray: &Ray<T>, t_min: T, t_max: T, skip: Option<PrimId>) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let inv_dir = Vec3::new(T::one() / ray.dir.x, T::one() / ray.dir.y, T::one() / ray.dir.z);
        let mut stack = vec![0u32];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx as usize];
            if node.bounds().hit(ray.origin, inv_dir, t_min, t_max).is_none() {
                continue;
            }
            match *node {
                Node::Leaf { start, count, .. } => {
                    for prim in &self.prims[start as usize..(start + count) as usize] {
                        if Some(prim.id) == skip {
                            continue;
                        }
                        let [a, b, c] = prim.verts;
                        if let Some((t, _, _)) = intersect_triangle(ray, a, b, c, t_min) {
                            if t < t_max {
                                return true;
                            }
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        false
    }
}

fn prim_bounds<T: Real>(p: &Prim<T>) -> Aabb<T> {
    let mut b = Aabb::empty();
    for v in p.verts {
        b.grow(v);
    }
    b
}

fn centroid<T: Real>(p: &Prim<T>) -> Vec3<T> {
    (p.verts[0] + p.verts[1] + p.verts[2]) / T::lit(3.0)
}

fn build_node<T: Real>(prims: &mut [Prim<T>], start: usize, end: usize, nodes: &mut Vec<Node<T>>) -> u32 {
    let bounds = prims[start..end]
        .iter()
        .fold(Aabb::empty(), |acc, p| acc.union(&prim_bounds(p)));
    let idx = nodes.len() as u32;
    let count = end - start;
    if count <= LEAF_SIZE {
        nodes.push(Node::Leaf { bounds, start: start as u32, count: count as u32 });
        return idx;
    }
    let mut cbounds = Aabb::empty();
    for p in &prims[start..end] {
        cbounds.grow(centroid(p));
    }
    let axis = cbounds.longest_axis();
    let mid = count / 2;
    prims[start..end].select_nth_unstable_by(mid, |a, b| {
        centroid(a)[axis]
            .partial_cmp(&centroid(b)[axis])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
    // Placeholder, patched once both children exist.
    nodes.push(Node::Leaf { bounds, start: 0, count: 0 });
    let left = build_node(prims, start, start + mid, nodes);
    let right = build_node(prims, start + mid, end, nodes);
    nodes[idx as usize] = Node::Inner { bounds, left, right };
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_nearest(tris: &[(PrimId, [Vec3<f64>; 3])], ray: &Ray<f64>) -> Option<(f64, PrimId)> {
        let mut best: Option<(f64, PrimId)> = None;
        for (id, [a, b, c]) in tris {
            if let Some((t, _, _)) = intersect_triangle(ray, *a, *b, *c, 1e-9) {
                if best.is_none_or(|(bt, bid)| t < bt || (t == bt && *id < bid)) {
                    best = Some((t, *id));
                }
            }
        }
        best
    }

    #[test]
    fn triangle_hit_and_miss() {
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(1.0, 0.0, 0.0);
        let c = Vec3::new(0.0, 1.0, 0.0);
        let down = Vec3::new(0.0, 0.0, -1.0);
        let hit = intersect_triangle(&Ray::new(Vec3::new(0.25, 0.25, 2.0), down), a, b, c, 0.0);
        assert_eq!(hit.map(|h| h.0), Some(2.0));
        assert!(intersect_triangle(&Ray::new(Vec3::new(0.75, 0.75, 2.0), down), a, b, c, 0.0).is_none());
        // Behind the origin.
        assert!(intersect_triangle(&Ray::new(Vec3::new(0.25, 0.25, -2.0), down), a, b, c, 0.0).is_none());
    }

    #[test]
    fn rotation_is_orthonormal() {
        let axis = Vec3::new(1.0, 2.0, -0.5).normalized().unwrap();
        let r = Mat3::<f64>::rotation(axis, 0.7);
        assert!(r.orthonormality_error() < 1e-14);
        assert!((r.determinant() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bvh_matches_brute_force_on_random_soup() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut tris = Vec::new();
        for i in 0..200u32 {
            let base = Vec3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let mut v = || base + Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            tris.push((PrimId { object: i / 7, triangle: i % 7 }, [v(), v(), v()]));
        }
        let bvh = Bvh::build(tris.clone());
        for _ in 0..2000 {
            let o = Vec3::new(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
            let d = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let ray = Ray::new(o, d);
            let got = bvh.nearest(&ray, 1e-9, f64::INFINITY).map(|h| (h.t, h.prim));
            assert_eq!(got, brute_nearest(&tris, &ray));
            assert_eq!(bvh.occluded(&ray, 1e-9, f64::INFINITY, None), got.is_some());
        }
    }

    #[test]
    fn shared_edge_tie_goes_to_lowest_object() {
        // Two coplanar triangles sharing the diagonal, owned by different objects.
        let a = Vec3::new(0.0, 0.0, 0.0);
        let b = Vec3::new(1.0, 0.0, 0.0);
        let c = Vec3::new(1.0, 1.0, 0.0);
        let d = Vec3::new(0.0, 1.0, 0.0);
        let tris = vec![
            (PrimId { object: 1, triangle: 0 }, [a, b, c]),
            (PrimId { object: 0, triangle: 0 }, [a, c, d]),
        ];
        let bvh = Bvh::build(tris);
        let ray = Ray::new(Vec3::new(0.5, 0.5, 1.0), Vec3::new(0.0, 0.0, -1.0));
        assert_eq!(bvh.nearest(&ray, 1e-9, f64::INFINITY).unwrap().prim.object, 0);
    }
}
