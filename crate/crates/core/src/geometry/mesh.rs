//! Structured triangulations of truncated outlet domains.
//!
//! The mesh is a mapped grid: uniform columns in x1, each column subdividing
//! the local wall-to-wall segment into `ny` equal pieces, every quad split
//! along the same diagonal. Regular connectivity gives O(1) point location
//! and bitwise-reproducible meshes, and keeps the x1 grid aligned across
//! truncations of the same domain whenever the spacings match.

use super::{GeometryError, TruncatedDomain};

/// Classification of boundary edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    /// Lateral wall (a graph profile); no-slip side.
    Wall,
    /// Artificial truncation face at x1 = +-t.
    Cut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub v: [usize; 2],
    pub tag: BoundaryTag,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    /// Leftmost column coordinate.
    x0: f64,
    /// Column spacing (uniform).
    dx: f64,
    nx: usize,
    ny: usize,
    /// Per-column wall heights (lo, hi), length nx + 1.
    cols: Vec<(f64, f64)>,
}

impl Mesh {
    /// Mesh of a truncated outlet domain. Column count is chosen so the
    /// spacing is exactly `h` whenever `h` divides `2t`.
    pub(super) fn from_truncation(trunc: &TruncatedDomain, h: f64) -> Result<Mesh, GeometryError> {
        let t = trunc.t();
        let nx = ((2.0 * t) / h - 1e-9).ceil().max(1.0) as usize;
        let dx = 2.0 * t / nx as f64;
        let cols: Vec<(f64, f64)> = (0..=nx)
            .map(|j| trunc.domain().walls(-t + dx * j as f64))
            .collect();
        let max_width = cols.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
        let ny = ((max_width / h).ceil() as usize).max(2);
        Ok(Mesh::structured(-t, dx, nx, ny, cols, BoundaryTag::Cut))
    }

    /// Uniform mesh of the rectangle [0, a] x [0, b]; every boundary edge is
    /// tagged `Wall`. Used for inequality studies on model domains.
    pub fn rectangle(a: f64, b: f64, h: f64) -> Result<Mesh, GeometryError> {
        if !(a > 0.0 && b > 0.0 && h > 0.0) {
            return Err(GeometryError::MeshFailure(format!(
                "rectangle needs positive a, b, h; got {a}, {b}, {h}"
            )));
        }
        let nx = ((a / h - 1e-9).ceil().max(1.0)) as usize;
        let ny = ((b / h - 1e-9).ceil().max(1.0)) as usize;
        let dx = a / nx as f64;
        let cols = vec![(0.0, b); nx + 1];
        Ok(Mesh::structured(0.0, dx, nx, ny, cols, BoundaryTag::Wall))
    }

    fn structured(
        x0: f64,
        dx: f64,
        nx: usize,
        ny: usize,
        cols: Vec<(f64, f64)>,
        cut_tag: BoundaryTag,
    ) -> Mesh {
        debug_assert_eq!(cols.len(), nx + 1);
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for (j, &(lo, hi)) in cols.iter().enumerate() {
            let x1 = x0 + dx * j as f64;
            let step = (hi - lo) / ny as f64;
            for k in 0..=ny {
                // Pin the top row to the wall exactly; lo + ny*step can land
                // half an ulp off hi.
                let x2 = if k == ny { hi } else { lo + step * k as f64 };
                vertices.push([x1, x2]);
            }
        }
        let vid = |j: usize, k: usize| j * (ny + 1) + k;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..nx {
            for k in 0..ny {
                let (v00, v10) = (vid(j, k), vid(j + 1, k));
                let (v01, v11) = (vid(j, k + 1), vid(j + 1, k + 1));
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        let mut boundary = Vec::with_capacity(2 * nx + 2 * ny);
        for j in 0..nx {
            boundary.push(BoundaryEdge {
                v: [vid(j, 0), vid(j + 1, 0)],
                tag: BoundaryTag::Wall,
            });
            boundary.push(BoundaryEdge {
                v: [vid(j, ny), vid(j + 1, ny)],
                tag: BoundaryTag::Wall,
            });
        }
        for k in 0..ny {
            boundary.push(BoundaryEdge {
                v: [vid(0, k), vid(0, k + 1)],
                tag: cut_tag,
            });
            boundary.push(BoundaryEdge {
                v: [vid(nx, k), vid(nx, k + 1)],
                tag: cut_tag,
            });
        }
        Mesh {
            vertices,
            triangles,
            boundary,
            x0,
            dx,
            nx,
            ny,
            cols,
        }
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    /// Sorted unique vertex ids lying on the boundary.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.boundary.iter().flat_map(|e| e.v).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn tri_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn tri_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.tri_coords(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.tri_area(t)).sum()
    }

    /// Longest edge over the mesh.
    pub fn h_max(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in 0..self.num_triangles() {
            let p = self.tri_coords(t);
            for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                let d = ((p[i][0] - p[j][0]).powi(2) + (p[i][1] - p[j][1]).powi(2)).sqrt();
                h = h.max(d);
            }
        }
        h
    }

    fn barycentric(&self, t: usize, x: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.tri_coords(t);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((b[0] - x[0]) * (c[1] - x[1]) - (c[0] - x[0]) * (b[1] - x[1])) / det;
        let l2 = ((c[0] - x[0]) * (a[1] - x[1]) - (a[0] - x[0]) * (c[1] - x[1])) / det;
        [l1, l2, 1.0 - l1 - l2]
    }

    /// Constant-time point location. Returns the containing triangle and the
    /// barycentric coordinates of `x` within it, or `None` outside the mesh.
    pub fn locate(&self, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
        const TOL: f64 = 1e-10;
        let xi = (x[0] - self.x0) / self.dx;
        if !(-TOL..=self.nx as f64 + TOL).contains(&xi) {
            return None;
        }
        let j = (xi.floor() as isize).clamp(0, self.nx as isize - 1) as usize;
        let frac = xi - j as f64;
        let (lo_l, hi_l) = self.cols[j];
        let (lo_r, hi_r) = self.cols[j + 1];
        let lo = (1.0 - frac) * lo_l + frac * lo_r;
        let w = (1.0 - frac) * (hi_l - lo_l) + frac * (hi_r - lo_r);
        let eta = (x[1] - lo) / w * self.ny as f64;
        let k0 = (eta.floor() as isize).clamp(0, self.ny as isize - 1) as usize;
        // Rounding near a k-line can put the point in a neighbor row; probe
        // the predicted quad first, then its vertical neighbors.
        for dk in [0isize, -1, 1] {
            let k = k0 as isize + dk;
            if k < 0 || k >= self.ny as isize {
                continue;
            }
            let quad = 2 * (j * self.ny + k as usize);
            for t in [quad, quad + 1] {
                let l = self.barycentric(t, x);
                if l.iter().all(|&v| v >= -TOL) {
                    return Some((t, l));
                }
            }
        }
        None
    }
}
