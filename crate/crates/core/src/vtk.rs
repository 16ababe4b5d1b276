//! Legacy ASCII VTK export of solved states, plus a small parser used to
//! check format fidelity.
//!
//! Points are the mesh vertices, cells linear triangles. Point data holds
//! the full velocity v = u + a, the vertex pressure, and the strain norm
//! |D(v)| averaged over the elements meeting each vertex. Numbers print in
//! shortest round-trip form, so parse-back reproduces the written values
//! exactly and reruns are byte-identical.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::fem::{element_geometry, p2_basis, strain_rate, tensor_norm, FemSystem};
use crate::fem::DofMap;

#[derive(Debug, Error)]
pub enum VtkError {
    #[error("io failure: {0}")]
    Io(#[from] io::Error),
    #[error("malformed vtk: {0}")]
    Malformed(String),
}

/// Vertex arrays of an exported solution.
#[derive(Debug, Clone)]
pub struct VtkSolution {
    pub points: Vec<[f64; 2]>,
    pub cells: Vec<[usize; 3]>,
    pub velocity: Vec<[f64; 2]>,
    pub pressure: Vec<f64>,
    pub strain_norm: Vec<f64>,
}

/// Vertex values of v = u + a, vertex pressures, and the element-averaged
/// strain norm, in mesh vertex order.
fn vertex_fields(sys: &FemSystem, state: &[f64]) -> (Vec<[f64; 2]>, Vec<f64>, Vec<f64>) {
    let mesh = sys.mesh();
    let dofs = sys.dofs();
    let nv = mesh.vertices().len();
    let mut velocity = vec![[0.0; 2]; nv];
    let mut pressure = vec![0.0; nv];
    for (i, x) in mesh.vertices().iter().enumerate() {
        let (a, _) = sys.background().eval_with_grad(*x);
        for c in 0..2 {
            velocity[i][c] = state[DofMap::velocity_dof(i, c)] + a[c];
        }
        pressure[i] = state[dofs.pressure_dof(i)];
    }
    let mut strain_sum = vec![0.0; nv];
    let mut strain_cnt = vec![0usize; nv];
    let corners = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for tri in 0..mesh.num_triangles() {
        let verts = mesh.triangles()[tri];
        let coords = mesh.tri_coords(tri);
        let geo = element_geometry(&coords);
        let nodes = dofs.tri_nodes(tri, &verts);
        for (k, corner) in corners.iter().enumerate() {
            let (_, gn) = p2_basis(*corner, &geo.grad_l);
            let (_, mut grad) = sys.background().eval_with_grad(coords[k]);
            for (a, node) in nodes.iter().enumerate() {
                for c in 0..2 {
                    let coef = state[DofMap::velocity_dof(*node, c)];
                    grad[c][0] += coef * gn[a][0];
                    grad[c][1] += coef * gn[a][1];
                }
            }
            strain_sum[verts[k]] += tensor_norm(&strain_rate(&grad));
            strain_cnt[verts[k]] += 1;
        }
    }
    let strain: Vec<f64> = strain_sum
        .iter()
        .zip(&strain_cnt)
        .map(|(s, c)| if *c > 0 { s / *c as f64 } else { 0.0 })
        .collect();
    (velocity, pressure, strain)
}

/// Write a solved state as legacy ASCII VTK.
pub fn write_solution<W: Write>(
    mut out: W,
    sys: &FemSystem,
    state: &[f64],
) -> Result<(), VtkError> {
    let mesh = sys.mesh();
    let (velocity, pressure, strain) = vertex_fields(sys, state);
    let nv = mesh.vertices().len();
    let nt = mesh.num_triangles();
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 3.0\n");
    s.push_str("flow solution\n");
    s.push_str("ASCII\n");
    s.push_str("DATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(s, "POINTS {nv} double");
    for x in mesh.vertices() {
        let _ = writeln!(s, "{} {} 0", x[0], x[1]);
    }
    let _ = writeln!(s, "CELLS {nt} {}", 4 * nt);
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {nt}");
    for _ in 0..nt {
        s.push_str("5\n");
    }
    let _ = writeln!(s, "POINT_DATA {nv}");
    s.push_str("VECTORS velocity double\n");
    for v in &velocity {
        let _ = writeln!(s, "{} {} 0", v[0], v[1]);
    }
    s.push_str("SCALARS pressure double 1\n");
    s.push_str("LOOKUP_TABLE default\n");
    for p in &pressure {
        let _ = writeln!(s, "{p}");
    }
    s.push_str("SCALARS strain_norm double 1\n");
    s.push_str("LOOKUP_TABLE default\n");
    for v in &strain {
        let _ = writeln!(s, "{v}");
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn write_solution_file(
    path: &Path,
    sys: &FemSystem,
    state: &[f64],
) -> Result<(), VtkError> {
    let file = std::fs::File::create(path)?;
    write_solution(io::BufWriter::new(file), sys, state)
}

struct Tokens<'a> {
    iter: std::str::SplitWhitespace<'a>,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Result<&'a str, VtkError> {
        self.iter
            .next()
            .ok_or_else(|| VtkError::Malformed("unexpected end of file".into()))
    }

    fn expect(&mut self, word: &str) -> Result<(), VtkError> {
        let tok = self.next()?;
        if tok != word {
            return Err(VtkError::Malformed(format!("expected {word}, got {tok}")));
        }
        Ok(())
    }

    fn usize(&mut self) -> Result<usize, VtkError> {
        let tok = self.next()?;
        tok.parse()
            .map_err(|_| VtkError::Malformed(format!("bad integer {tok}")))
    }

    fn f64(&mut self) -> Result<f64, VtkError> {
        let tok = self.next()?;
        tok.parse()
            .map_err(|_| VtkError::Malformed(format!("bad number {tok}")))
    }
}

/// Parse a file produced by `write_solution`. Covers exactly the layout we
/// emit, which is all the round-trip check needs.
pub fn parse_solution(text: &str) -> Result<VtkSolution, VtkError> {
    let mut lines = text.lines();
    for expected in ["# vtk DataFile Version 3.0", "flow solution", "ASCII"] {
        let line = lines
            .next()
            .ok_or_else(|| VtkError::Malformed("truncated header".into()))?;
        if line != expected {
            return Err(VtkError::Malformed(format!("bad header line: {line}")));
        }
    }
    let rest: String = lines.collect::<Vec<_>>().join("\n");
    let mut t = Tokens {
        iter: rest.split_whitespace(),
    };
    t.expect("DATASET")?;
    t.expect("UNSTRUCTURED_GRID")?;
    t.expect("POINTS")?;
    let nv = t.usize()?;
    t.expect("double")?;
    let mut points = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x = t.f64()?;
        let y = t.f64()?;
        let _z = t.f64()?;
        points.push([x, y]);
    }
    t.expect("CELLS")?;
    let nt = t.usize()?;
    let _list_len = t.usize()?;
    let mut cells = Vec::with_capacity(nt);
    for _ in 0..nt {
        let k = t.usize()?;
        if k != 3 {
            return Err(VtkError::Malformed(format!("cell arity {k}, want 3")));
        }
        cells.push([t.usize()?, t.usize()?, t.usize()?]);
    }
    t.expect("CELL_TYPES")?;
    let n_types = t.usize()?;
    for _ in 0..n_types {
        let ty = t.usize()?;
        if ty != 5 {
            return Err(VtkError::Malformed(format!("cell type {ty}, want 5")));
        }
    }
    t.expect("POINT_DATA")?;
    let n_data = t.usize()?;
    if n_data != nv {
        return Err(VtkError::Malformed("point data size mismatch".into()));
    }
    t.expect("VECTORS")?;
    t.expect("velocity")?;
    t.expect("double")?;
    let mut velocity = Vec::with_capacity(nv);
    for _ in 0..nv {
        let x = t.f64()?;
        let y = t.f64()?;
        let _z = t.f64()?;
        velocity.push([x, y]);
    }
    let scalar = |name: &str, t: &mut Tokens| -> Result<Vec<f64>, VtkError> {
        t.expect("SCALARS")?;
        t.expect(name)?;
        t.expect("double")?;
        t.expect("1")?;
        t.expect("LOOKUP_TABLE")?;
        t.expect("default")?;
        (0..nv).map(|_| t.f64()).collect()
    };
    let pressure = scalar("pressure", &mut t)?;
    let strain_norm = scalar("strain_norm", &mut t)?;
    Ok(VtkSolution {
        points,
        cells,
        velocity,
        pressure,
        strain_norm,
    })
}
