//! Conforming triangulations of convex polygons.
//!
//! Triangles are stored counterclockwise. Local edge `(0, 1)` is the refinement edge used by
//! newest-vertex bisection, so local vertex 2 is the newest vertex.

use std::collections::{HashMap, HashSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_flags: Vec<bool>,
    pub level: usize,
    /// For each triangle, the index of the triangle it was cut from in the previous mesh.
    pub parents: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSet {
    /// Vertex pairs with `v[0] < v[1]`.
    pub edges: Vec<[usize; 2]>,
    /// First adjacent triangle and, for interior edges, the second.
    pub adjacent: Vec<(usize, Option<usize>)>,
    /// Unit normal pointing out of the first adjacent triangle.
    pub normals: Vec<[f64; 2]>,
    pub lengths: Vec<f64>,
    pub interior: Vec<bool>,
    /// `tri_edges[t][k]` joins local vertices `k` and `(k + 1) % 3` of triangle `t`.
    pub tri_edges: Vec<[usize; 3]>,
}

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn num_interior(&self) -> usize {
        self.interior.iter().filter(|&&i| i).count()
    }
}

fn key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

fn midpoint(p: [f64; 2], q: [f64; 2]) -> [f64; 2] {
    [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
}

/// Structured mesh of `rect` with every cell cut along its lower-left to upper-right diagonal.
pub fn build_structured(nx: usize, ny: usize, rect: Rect) -> TriMesh {
    assert!(nx >= 1 && ny >= 1, "build_structured needs nx, ny >= 1");
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut boundary_flags = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            let x = rect.x0 + (rect.x1 - rect.x0) * i as f64 / nx as f64;
            let y = rect.y0 + (rect.y1 - rect.y0) * j as f64 / ny as f64;
            vertices.push([x, y]);
            boundary_flags.push(i == 0 || i == nx || j == 0 || j == ny);
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
            triangles.push([v11, v00, v10]);
            triangles.push([v00, v11, v01]);
        }
    }
    TriMesh {
        vertices,
        triangles,
        boundary_flags,
        level: 0,
        parents: None,
    }
}

/// Red refinement: every triangle is split into four congruent children through its edge
/// midpoints. Each child's refinement edge is its longest edge.
pub fn refine_uniform(m: &TriMesh) -> TriMesh {
    let mut out = Splitter::new(m);
    let mut triangles = Vec::with_capacity(4 * m.triangles.len());
    let mut parents = Vec::with_capacity(4 * m.triangles.len());
    for (t, &[a, b, c]) in m.triangles.iter().enumerate() {
        let mab = out.midpoint(a, b);
        let mbc = out.midpoint(b, c);
        let mca = out.midpoint(c, a);
        for child in [[a, mab, mca], [mab, b, mbc], [mca, mbc, c], [mbc, mca, mab]] {
            triangles.push(longest_edge_first(&out.vertices, child));
            parents.push(t);
        }
    }
    out.finish(triangles, parents, m.level + 1)
}

/// Newest-vertex bisection of the marked triangles followed by the conformity closure.
pub fn refine_marked(m: &TriMesh, marked: &[usize]) -> TriMesh {
    if marked.is_empty() {
        return m.clone();
    }
    let mut marked_edges: HashSet<(usize, usize)> = HashSet::new();
    for &t in marked {
        let [a, b, _] = m.triangles[t];
        marked_edges.insert(key(a, b));
    }
    // Closure: a triangle with any marked edge must also bisect its refinement edge.
    loop {
        let mut changed = false;
        for tri in &m.triangles {
            let refinement = key(tri[0], tri[1]);
            if marked_edges.contains(&refinement) {
                continue;
            }
            let touched = (0..3).any(|k| marked_edges.contains(&key(tri[k], tri[(k + 1) % 3])));
            if touched {
                marked_edges.insert(refinement);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut out = Splitter::new(m);
    let mut sorted: Vec<_> = marked_edges.into_iter().collect();
    sorted.sort_unstable();
    for (a, b) in sorted {
        out.midpoint(a, b);
    }
    let mut triangles = Vec::new();
    let mut parents = Vec::new();
    for (t, &tri) in m.triangles.iter().enumerate() {
        let mut stack = vec![tri];
        while let Some([a, b, c]) = stack.pop() {
            match out.mids.get(&key(a, b)) {
                Some(&mid) => {
                    stack.push([b, c, mid]);
                    stack.push([c, a, mid]);
                }
                None => {
                    triangles.push([a, b, c]);
                    parents.push(t);
                }
            }
        }
    }
    out.finish(triangles, parents, m.level + 1)
}

fn longest_edge_first(vertices: &[[f64; 2]], t: [usize; 3]) -> [usize; 3] {
    let len = |k: usize| dist(vertices[t[k]], vertices[t[(k + 1) % 3]]);
    let mut best = 0;
    for k in 1..3 {
        if len(k) > len(best) * (1.0 + 1e-12) {
            best = k;
        }
    }
    [t[best], t[(best + 1) % 3], t[(best + 2) % 3]]
}

struct Splitter {
    vertices: Vec<[f64; 2]>,
    boundary_flags: Vec<bool>,
    boundary_edges: HashMap<(usize, usize), bool>,
    mids: HashMap<(usize, usize), usize>,
}

impl Splitter {
    fn new(m: &TriMesh) -> Self {
        let mut count: HashMap<(usize, usize), bool> = HashMap::new();
        for tri in &m.triangles {
            for k in 0..3 {
                count
                    .entry(key(tri[k], tri[(k + 1) % 3]))
                    .and_modify(|b| *b = false)
                    .or_insert(true);
            }
        }
        Splitter {
            vertices: m.vertices.clone(),
            boundary_flags: m.boundary_flags.clone(),
            boundary_edges: count,
            mids: HashMap::new(),
        }
    }

    fn midpoint(&mut self, a: usize, b: usize) -> usize {
        let k = key(a, b);
        if let Some(&m) = self.mids.get(&k) {
            return m;
        }
        let idx = self.vertices.len();
        self.vertices.push(midpoint(self.vertices[a], self.vertices[b]));
        self.boundary_flags
            .push(self.boundary_edges.get(&k).copied().unwrap_or(false));
        self.mids.insert(k, idx);
        idx
    }

    fn finish(self, triangles: Vec<[usize; 3]>, parents: Vec<usize>, level: usize) -> TriMesh {
        TriMesh {
            vertices: self.vertices,
            triangles,
            boundary_flags: self.boundary_flags,
            level,
            parents: Some(parents),
        }
    }
}

/// Edge list with adjacency, normals and the per-triangle edge map.
pub fn edge_topology(m: &TriMesh) -> EdgeSet {
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut adjacent: Vec<(usize, Option<usize>)> = Vec::new();
    let mut tri_edges = Vec::with_capacity(m.triangles.len());
    for (t, tri) in m.triangles.iter().enumerate() {
        let mut local = [0; 3];
        for k in 0..3 {
            let e = key(tri[k], tri[(k + 1) % 3]);
            local[k] = match index.get(&e) {
                Some(&i) => {
                    adjacent[i].1 = Some(t);
                    i
                }
                None => {
                    let i = edges.len();
                    index.insert(e, i);
                    edges.push([e.0, e.1]);
                    adjacent.push((t, None));
                    i
                }
            };
        }
        tri_edges.push(local);
    }
    let mut normals = Vec::with_capacity(edges.len());
    let mut lengths = Vec::with_capacity(edges.len());
    for (i, &[a, b]) in edges.iter().enumerate() {
        let (p, q) = (m.vertices[a], m.vertices[b]);
        let len = dist(p, q);
        let mut n = [(q[1] - p[1]) / len, -(q[0] - p[0]) / len];
        // orient away from the first triangle's centroid
        let c = m.centroid(adjacent[i].0);
        if (p[0] - c[0]) * n[0] + (p[1] - c[1]) * n[1] < 0.0 {
            n = [-n[0], -n[1]];
        }
        normals.push(n);
        lengths.push(len);
    }
    let interior = adjacent.iter().map(|a| a.1.is_some()).collect();
    EdgeSet {
        edges,
        adjacent,
        normals,
        lengths,
        interior,
        tri_edges,
    }
}

impl TriMesh {
    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [p, q, r] = self.coords(t);
        0.5 * ((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))
    }

    pub fn centroid(&self, t: usize) -> [f64; 2] {
        let [p, q, r] = self.coords(t);
        [(p[0] + q[0] + r[0]) / 3.0, (p[1] + q[1] + r[1]) / 3.0]
    }

    /// `h_T`, the longest edge.
    pub fn diameter(&self, t: usize) -> f64 {
        let [p, q, r] = self.coords(t);
        dist(p, q).max(dist(q, r)).max(dist(r, p))
    }

    pub fn h_max(&self) -> f64 {
        (0..self.num_triangles())
            .map(|t| self.diameter(t))
            .fold(0.0, f64::max)
    }

    pub fn h_min(&self) -> f64 {
        (0..self.num_triangles())
            .map(|t| self.diameter(t))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.signed_area(t)).sum()
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        let mut min = f64::INFINITY;
        for t in 0..self.num_triangles() {
            let x = self.coords(t);
            for k in 0..3 {
                let (o, p, q) = (x[k], x[(k + 1) % 3], x[(k + 2) % 3]);
                let u = [p[0] - o[0], p[1] - o[1]];
                let v = [q[0] - o[0], q[1] - o[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                min = min.min(cos.clamp(-1.0, 1.0).acos());
            }
        }
        min
    }

    /// Structural validity for a convex domain: positive areas, at most two triangles per edge,
    /// every edge with a single neighbour on the convex hull, flags matching the hull, and the
    /// Euler relation. Together these rule out hanging nodes and overlaps.
    pub fn check(&self) -> Result<(), String> {
        for t in 0..self.num_triangles() {
            if self.signed_area(t) <= 0.0 {
                return Err(format!("triangle {t} has nonpositive signed area"));
            }
        }
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for k in 0..3 {
                *count.entry(key(tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
        }
        let scale = self.h_max();
        for (&(a, b), &c) in &count {
            if c > 2 {
                return Err(format!("edge ({a}, {b}) shared by {c} triangles"));
            }
            if c == 1 {
                let (p, q) = (self.vertices[a], self.vertices[b]);
                let mut side = 0.0f64;
                for v in &self.vertices {
                    let s = (q[0] - p[0]) * (v[1] - p[1]) - (q[1] - p[1]) * (v[0] - p[0]);
                    if s.abs() > 1e-12 * scale * scale {
                        if side * s < 0.0 {
                            return Err(format!("edge ({a}, {b}) has one neighbour but is not on the hull"));
                        }
                        side = s;
                    }
                }
                if !(self.boundary_flags[a] && self.boundary_flags[b]) {
                    return Err(format!("hull edge ({a}, {b}) has an unflagged endpoint"));
                }
            }
        }
        let euler = self.num_vertices() as i64 - count.len() as i64 + self.num_triangles() as i64;
        if euler != 1 {
            return Err(format!("Euler characteristic {euler}, expected 1"));
        }
        Ok(())
    }

    /// Reference coordinates of physical point `x` in triangle `t`.
    pub fn to_reference(&self, t: usize, x: [f64; 2]) -> [f64; 2] {
        let [p, q, r] = self.coords(t);
        let (a, b, c, d) = (q[0] - p[0], r[0] - p[0], q[1] - p[1], r[1] - p[1]);
        let det = a * d - b * c;
        let (dx, dy) = (x[0] - p[0], x[1] - p[1]);
        [(d * dx - b * dy) / det, (a * dy - c * dx) / det]
    }

    pub fn to_physical(&self, t: usize, xi: [f64; 2]) -> [f64; 2] {
        let [p, q, r] = self.coords(t);
        [
            p[0] + (q[0] - p[0]) * xi[0] + (r[0] - p[0]) * xi[1],
            p[1] + (q[1] - p[1]) * xi[0] + (r[1] - p[1]) * xi[1],
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    // Exhaustive pairwise test: two distinct triangles may share nothing, one vertex, or one
    // full edge, and their interiors may not overlap.
    fn pairwise_conforming(m: &TriMesh) -> bool {
        let n = m.num_triangles();
        for s in 0..n {
            for t in (s + 1)..n {
                let shared = m.triangles[s]
                    .iter()
                    .filter(|v| m.triangles[t].contains(v))
                    .count();
                if shared == 3 {
                    return false;
                }
                // no vertex of one may lie in the closed triangle of the other unless shared
                for (a, b) in [(s, t), (t, s)] {
                    for &v in &m.triangles[a] {
                        if m.triangles[b].contains(&v) {
                            continue;
                        }
                        if inside_closed(m, b, m.vertices[v]) {
                            return false;
                        }
                    }
                }
            }
        }
        (m.area() - 1.0).abs() < 1e-12
    }

    fn inside_closed(m: &TriMesh, t: usize, x: [f64; 2]) -> bool {
        let l = m.to_reference(t, x);
        let tol = 1e-12;
        l[0] >= -tol && l[1] >= -tol && l[0] + l[1] <= 1.0 + tol
    }

    #[test]
    fn structured_counts() {
        let m = build_structured(1, 1, Rect::UNIT);
        assert_eq!((m.num_vertices(), m.num_triangles()), (4, 2));
        let m = build_structured(2, 2, Rect::UNIT);
        assert_eq!((m.num_vertices(), m.num_triangles()), (9, 8));
        for n in 1..6 {
            let m = build_structured(n, n + 1, Rect::UNIT);
            let e = edge_topology(&m);
            assert_eq!(m.num_vertices() as i64 - e.len() as i64 + m.num_triangles() as i64, 1);
            m.check().unwrap();
        }
    }

    #[test]
    fn two_triangle_edges() {
        let m = build_structured(1, 1, Rect::UNIT);
        let e = edge_topology(&m);
        assert_eq!(e.len(), 5);
        assert_eq!(e.num_interior(), 1);
        let boundary = e.len() - e.num_interior();
        assert_eq!(3 * m.num_triangles(), 2 * e.num_interior() + boundary);
    }

    #[test]
    fn normals_unit_and_outward() {
        let m = refine_uniform(&build_structured(3, 2, Rect::UNIT));
        let e = edge_topology(&m);
        for i in 0..e.len() {
            let n = e.normals[i];
            assert!((n[0].hypot(n[1]) - 1.0).abs() < 1e-14);
            let [a, b] = e.edges[i];
            let mid = midpoint(m.vertices[a], m.vertices[b]);
            let c = m.centroid(e.adjacent[i].0);
            assert!((mid[0] - c[0]) * n[0] + (mid[1] - c[1]) * n[1] > 0.0);
            assert_eq!(e.interior[i], e.adjacent[i].1.is_some());
        }
    }

    #[test]
    fn uniform_refinement() {
        let m0 = build_structured(1, 1, Rect::UNIT);
        let m1 = refine_uniform(&m0);
        assert_eq!((m1.num_vertices(), m1.num_triangles()), (9, 8));
        let mut m = m0.clone();
        for _ in 0..4 {
            let next = refine_uniform(&m);
            assert_eq!(next.num_triangles(), 4 * m.num_triangles());
            assert_eq!(next.h_max() / m.h_max(), 0.5);
            next.check().unwrap();
            assert_eq!(next.level, m.level + 1);
            m = next;
        }
        assert!(pairwise_conforming(&refine_uniform(&m0)));
    }

    #[test]
    fn uniform_refinement_splits_interior_edges() {
        let m = build_structured(2, 2, Rect::UNIT);
        let r = refine_uniform(&m);
        let fine = edge_topology(&r);
        let fine_edges: std::collections::HashSet<_> = fine.edges.iter().copied().collect();
        let coarse = edge_topology(&m);
        let lookup: HashMap<[u64; 2], usize> = r
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| ([v[0].to_bits(), v[1].to_bits()], i))
            .collect();
        for (i, &[a, b]) in coarse.edges.iter().enumerate() {
            if !coarse.interior[i] {
                continue;
            }
            let mid = midpoint(m.vertices[a], m.vertices[b]);
            let mi = lookup[&[mid[0].to_bits(), mid[1].to_bits()]];
            let k1 = key(a, mi);
            let k2 = key(mi, b);
            assert!(fine_edges.contains(&[k1.0, k1.1]));
            assert!(fine_edges.contains(&[k2.0, k2.1]));
        }
    }

    #[test]
    fn marked_refinement_trivial_cases() {
        let m = build_structured(2, 2, Rect::UNIT);
        assert_eq!(refine_marked(&m, &[]), m);
        let all: Vec<usize> = (0..m.num_triangles()).collect();
        let r = refine_marked(&m, &all);
        let parents = r.parents.as_ref().unwrap();
        for t in 0..m.num_triangles() {
            assert!(parents.iter().filter(|&&p| p == t).count() >= 2);
        }
        r.check().unwrap();
        assert!(pairwise_conforming(&r));
    }

    #[test]
    fn boundary_flags_follow_domain() {
        let mut m = build_structured(2, 2, Rect::UNIT);
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..4 {
            let marks: Vec<usize> = (0..m.num_triangles()).filter(|_| rng.gen_bool(0.3)).collect();
            m = refine_marked(&m, &marks);
        }
        for (v, &flag) in m.vertices.iter().zip(&m.boundary_flags) {
            let on = v[0] == 0.0 || v[0] == 1.0 || v[1] == 0.0 || v[1] == 1.0;
            assert_eq!(on, flag);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_marks_stay_conforming(seed in any::<u64>(), p in 0.05f64..0.6) {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let m0 = build_structured(2, 2, Rect::UNIT);
            let angle0 = m0.min_angle();
            let mut m = m0;
            for _ in 0..5 {
                let marks: Vec<usize> =
                    (0..m.num_triangles()).filter(|_| rng.gen_bool(p)).collect();
                m = refine_marked(&m, &marks);
                prop_assert!(m.check().is_ok());
                prop_assert!(m.min_angle() >= 0.5 * angle0 - 1e-12);
                let e = edge_topology(&m);
                let boundary = e.len() - e.num_interior();
                prop_assert_eq!(3 * m.num_triangles(), 2 * e.num_interior() + boundary);
            }
            prop_assert!(pairwise_conforming(&m));
        }

        #[test]
        fn marked_triangles_are_cut(seed in any::<u64>()) {
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let m = refine_uniform(&build_structured(2, 2, Rect::UNIT));
            let marks: Vec<usize> = (0..m.num_triangles()).filter(|_| rng.gen_bool(0.2)).collect();
            let r = refine_marked(&m, &marks);
            let parents = r.parents.as_ref().unwrap();
            for &t in &marks {
                prop_assert!(parents.iter().filter(|&&p| p == t).count() >= 2);
            }
        }
    }
}
