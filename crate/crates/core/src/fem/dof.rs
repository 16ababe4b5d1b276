//! Degree-of-freedom numbering for the quadratic/linear pair.
//!
//! Scalar nodes are mesh vertices followed by edge midpoints, in
//! first-appearance order over the triangle list, so numbering is a pure
//! function of the mesh. Velocity components interleave (node n has dofs
//! 2n, 2n+1); pressure dofs follow all velocity dofs; the single gauge
//! multiplier sits last.

use crate::geometry::Mesh;
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct DofMap {
    n_vertices: usize,
    edges: Vec<[usize; 2]>,
    tri_edges: Vec<[usize; 3]>,
    /// Constrained flags over velocity dofs (whole-boundary Dirichlet).
    constrained: Vec<bool>,
    node_coords: Vec<[f64; 2]>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let nv = mesh.num_vertices();
        let mut edge_ids: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges: Vec<[usize; 2]> = Vec::new();
        let mut tri_edges = Vec::with_capacity(mesh.num_triangles());
        for tri in mesh.triangles() {
            let mut local = [0usize; 3];
            for (slot, (a, b)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
                let key = sorted_pair(tri[a], tri[b]);
                let id = *edge_ids.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edges.len() - 1
                });
                local[slot] = id;
            }
            tri_edges.push(local);
        }
        let mut node_coords = Vec::with_capacity(nv + edges.len());
        node_coords.extend_from_slice(mesh.vertices());
        for e in &edges {
            let (a, b) = (mesh.vertices()[e[0]], mesh.vertices()[e[1]]);
            node_coords.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
        }
        let mut constrained = vec![false; 2 * (nv + edges.len())];
        for be in mesh.boundary_edges() {
            let key = sorted_pair(be.v[0], be.v[1]);
            let mid = nv + edge_ids[&key];
            for node in [be.v[0], be.v[1], mid] {
                constrained[2 * node] = true;
                constrained[2 * node + 1] = true;
            }
        }
        DofMap {
            n_vertices: nv,
            edges,
            tri_edges,
            constrained,
            node_coords,
        }
    }

    pub fn n_scalar_nodes(&self) -> usize {
        self.n_vertices + self.edges.len()
    }

    pub fn n_velocity_dofs(&self) -> usize {
        2 * self.n_scalar_nodes()
    }

    pub fn n_pressure_dofs(&self) -> usize {
        self.n_vertices
    }

    /// Velocity + pressure + one gauge multiplier.
    pub fn n_total(&self) -> usize {
        self.n_velocity_dofs() + self.n_pressure_dofs() + 1
    }

    /// Scalar nodes of a triangle: three vertices, then the midpoints of
    /// edges (v0,v1), (v1,v2), (v2,v0).
    pub fn tri_nodes(&self, tri: usize, verts: &[usize; 3]) -> [usize; 6] {
        let e = &self.tri_edges[tri];
        [
            verts[0],
            verts[1],
            verts[2],
            self.n_vertices + e[0],
            self.n_vertices + e[1],
            self.n_vertices + e[2],
        ]
    }

    pub fn velocity_dof(node: usize, comp: usize) -> usize {
        2 * node + comp
    }

    pub fn pressure_dof(&self, vertex: usize) -> usize {
        self.n_velocity_dofs() + vertex
    }

    pub fn multiplier_dof(&self) -> usize {
        self.n_velocity_dofs() + self.n_vertices
    }

    /// Midpoint-node id of the mesh edge {a, b}, if present.
    pub fn edge_node(&self, a: usize, b: usize) -> Option<usize> {
        let key = sorted_pair(a, b);
        self.edges
            .iter()
            .position(|e| *e == key)
            .map(|i| self.n_vertices + i)
    }

    pub fn is_constrained(&self, velocity_dof: usize) -> bool {
        self.constrained[velocity_dof]
    }

    pub fn constrained_flags(&self) -> &[bool] {
        &self.constrained
    }

    pub fn node_coords(&self, node: usize) -> [f64; 2] {
        self.node_coords[node]
    }
}

fn sorted_pair(a: usize, b: usize) -> [usize; 2] {
    if a < b {
        [a, b]
    } else {
        [b, a]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::straight_channel;

    #[test]
    fn counts_satisfy_euler_relation() {
        let mesh = straight_channel().truncate(2.0).unwrap().mesh(0.2).unwrap();
        let dofs = DofMap::new(&mesh);
        let v = mesh.num_vertices() as isize;
        let e = dofs.edges.len() as isize;
        let f = mesh.num_triangles() as isize + 1;
        assert_eq!(v - e + f, 2, "Euler characteristic of a disk");
        assert_eq!(dofs.n_total(), dofs.n_velocity_dofs() + dofs.n_pressure_dofs() + 1);
    }

    #[test]
    fn numbering_is_deterministic() {
        let mesh = straight_channel().truncate(2.0).unwrap().mesh(0.2).unwrap();
        let (a, b) = (DofMap::new(&mesh), DofMap::new(&mesh));
        assert_eq!(a.edges, b.edges);
        assert_eq!(a.constrained, b.constrained);
    }

    #[test]
    fn boundary_flags_cover_exactly_the_boundary_nodes() {
        let mesh = straight_channel().truncate(2.0).unwrap().mesh(0.2).unwrap();
        let dofs = DofMap::new(&mesh);
        for node in 0..dofs.n_scalar_nodes() {
            let [x1, x2] = dofs.node_coords(node);
            let on_boundary = x2.abs() > 0.5 - 1e-12 || x1.abs() > 2.0 - 1e-12;
            assert_eq!(
                dofs.is_constrained(DofMap::velocity_dof(node, 0)),
                on_boundary,
                "node at ({x1}, {x2})"
            );
        }
    }

    #[test]
    fn midpoints_sit_between_endpoints() {
        let mesh = straight_channel().truncate(1.0).unwrap().mesh(0.2).unwrap();
        let dofs = DofMap::new(&mesh);
        for (id, e) in dofs.edges.iter().enumerate() {
            let m = dofs.node_coords(dofs.n_vertices + id);
            let (a, b) = (mesh.vertices()[e[0]], mesh.vertices()[e[1]]);
            assert_eq!(m, [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
        }
    }
}
