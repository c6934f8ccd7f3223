//! Closed triangle meshes: validation, OFF input/output and builders for
//! the test surfaces.
//!
//! A mesh is either embedded in ℝ³ or periodic in the plane (a flat torus
//! given by two period vectors); in the periodic case every edge vector is
//! taken as the shortest periodic image.

mod builders;
mod operator;

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

pub use builders::{flat_torus_mesh, icosphere, voxel_genus1, voxel_genus2, voxel_surface};
pub use operator::{canonical_residual, CotanOperator, MeshRobin, MeshSurface, MESH_SOLVER_TOLERANCE};

/// Smallest corner angle accepted, in degrees.
pub const MIN_ANGLE_DEGREES: f64 = 1.0;
/// Corner angles below this are accepted with a warning.
pub const WARN_ANGLE_DEGREES: f64 = 10.0;

pub(crate) fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

/// Triangle mesh of a closed orientable surface.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    positions: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    periods: Option<[[f64; 3]; 2]>,
}

/// Summary of a validated mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshInfo {
    pub vertices: usize,
    pub edges: usize,
    pub faces: usize,
    pub euler_characteristic: i64,
    pub genus: i64,
    pub min_angle_degrees: f64,
    pub area: f64,
}

impl TriMesh {
    /// Mesh embedded in ℝ³.
    pub fn new(positions: Vec<[f64; 3]>, faces: Vec<[usize; 3]>) -> Self {
        Self { positions, faces, periods: None }
    }

    /// Planar mesh of the torus `ℝ²/(ℤa + ℤb)`; positions lie in `z = 0`.
    pub fn periodic(positions: Vec<[f64; 3]>, faces: Vec<[usize; 3]>, periods: [[f64; 3]; 2]) -> Self {
        Self { positions, faces, periods: Some(periods) }
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn periods(&self) -> Option<[[f64; 3]; 2]> {
        self.periods
    }

    pub fn vertex_count(&self) -> usize {
        self.positions.len()
    }

    /// Vector from vertex `a` to vertex `b`, shortest image if periodic.
    pub fn displacement(&self, a: usize, b: usize) -> [f64; 3] {
        let d = sub(self.positions[b], self.positions[a]);
        match self.periods {
            None => d,
            Some([p, q]) => {
                // lattice coordinates of d, then the nearest images around them
                let det = p[0] * q[1] - p[1] * q[0];
                let s = (d[0] * q[1] - d[1] * q[0]) / det;
                let t = (p[0] * d[1] - p[1] * d[0]) / det;
                let (s0, t0) = (s.round(), t.round());
                let mut best = d;
                let mut best_len = f64::INFINITY;
                for i in -1..=1 {
                    for j in -1..=1 {
                        let (ks, kt) = (s0 + i as f64, t0 + j as f64);
                        let c = [d[0] - ks * p[0] - kt * q[0], d[1] - ks * p[1] - kt * q[1], d[2]];
                        let l = dot(c, c);
                        if l < best_len {
                            best_len = l;
                            best = c;
                        }
                    }
                }
                best
            }
        }
    }

    /// Straight-line distance between two vertices (shortest periodic image).
    pub fn chord(&self, a: usize, b: usize) -> f64 {
        norm(self.displacement(a, b))
    }

    /// Edge vectors `(b − a, c − a)` of a face.
    pub(crate) fn face_vectors(&self, f: usize) -> ([f64; 3], [f64; 3]) {
        let [a, b, c] = self.faces[f];
        (self.displacement(a, b), self.displacement(a, c))
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let (u, v) = self.face_vectors(f);
        0.5 * norm(cross(u, v))
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Corner angles of a face, in the order of its vertices.
    pub fn corner_angles(&self, f: usize) -> [f64; 3] {
        let [a, b, c] = self.faces[f];
        let angle = |o: usize, x: usize, y: usize| {
            let u = self.displacement(o, x);
            let v = self.displacement(o, y);
            norm(cross(u, v)).atan2(dot(u, v))
        };
        [angle(a, b, c), angle(b, c, a), angle(c, a, b)]
    }

    /// Undirected edges, each once, as `(min, max)`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut seen = HashMap::new();
        for face in &self.faces {
            for k in 0..3 {
                let (a, b) = (face[k], face[(k + 1) % 3]);
                seen.entry((a.min(b), a.max(b))).or_insert(());
            }
        }
        let mut edges: Vec<_> = seen.into_keys().collect();
        edges.sort_unstable();
        edges
    }

    /// Mean length over all edges.
    pub fn mean_edge_length(&self) -> f64 {
        let edges = self.edges();
        edges.iter().map(|&(a, b)| self.chord(a, b)).sum::<f64>() / edges.len() as f64
    }

    /// Checks closedness, orientability, non-degeneracy and angle quality.
    pub fn validate(&self) -> Result<MeshInfo> {
        let v = self.positions.len();
        if v == 0 || self.faces.is_empty() {
            return Err(Error::MeshQuality("mesh has no vertices or faces".into()));
        }
        if let Some(i) = self.positions.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::MeshQuality(format!("vertex {i} has a non-finite coordinate")));
        }
        let mut directed: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (f, face) in self.faces.iter().enumerate() {
            if face.iter().any(|&i| i >= v) {
                return Err(Error::MeshQuality(format!("face {f} references a missing vertex")));
            }
            if face[0] == face[1] || face[1] == face[2] || face[0] == face[2] {
                return Err(Error::MeshQuality(format!("face {f} repeats a vertex")));
            }
            for k in 0..3 {
                let e = (face[k], face[(k + 1) % 3]);
                if let Some(g) = directed.insert(e, f) {
                    return Err(Error::MeshQuality(format!(
                        "edge {}–{} is traversed in the same direction by faces {g} and {f} \
                         (non-orientable or non-manifold)",
                        e.0, e.1
                    )));
                }
            }
        }
        for &(a, b) in directed.keys() {
            if !directed.contains_key(&(b, a)) {
                return Err(Error::MeshQuality(format!("edge {a}–{b} is a boundary edge")));
            }
        }
        let mut used = vec![false; v];
        self.faces.iter().flatten().for_each(|&i| used[i] = true);
        if let Some(i) = used.iter().position(|u| !u) {
            return Err(Error::MeshQuality(format!("vertex {i} belongs to no face")));
        }
        let e = directed.len() / 2;
        let chi = v as i64 - e as i64 + self.faces.len() as i64;
        if chi > 2 || chi % 2 != 0 {
            return Err(Error::MeshQuality(format!("Euler characteristic {chi} is not that of a closed orientable surface")));
        }

        let mut min_angle = f64::INFINITY;
        let mut warned = 0usize;
        for f in 0..self.faces.len() {
            if !(self.face_area(f) > 0.0) {
                return Err(Error::MeshQuality(format!("face {f} is degenerate (zero area)")));
            }
            let smallest = self.corner_angles(f).into_iter().fold(f64::INFINITY, f64::min).to_degrees();
            let largest = self.corner_angles(f).into_iter().fold(0.0, f64::max).to_degrees();
            let worst = smallest.min(180.0 - largest);
            if worst < MIN_ANGLE_DEGREES {
                return Err(Error::MeshQuality(format!(
                    "face {f} has a corner angle within {worst:.3}° of degenerate (minimum {MIN_ANGLE_DEGREES}°)"
                )));
            }
            if worst < WARN_ANGLE_DEGREES {
                warned += 1;
            }
            min_angle = min_angle.min(smallest);
        }
        if warned > 0 {
            log::warn!("{warned} face(s) have corner angles below {WARN_ANGLE_DEGREES}°");
        }
        Ok(MeshInfo {
            vertices: v,
            edges: e,
            faces: self.faces.len(),
            euler_characteristic: chi,
            genus: (2 - chi) / 2,
            min_angle_degrees: min_angle,
            area: self.total_area(),
        })
    }

    /// Rescales to unit area; returns the original area.
    pub fn normalize_area(&mut self) -> f64 {
        let area = self.total_area();
        let s = 1.0 / area.sqrt();
        for p in &mut self.positions {
            p.iter_mut().for_each(|c| *c *= s);
        }
        if let Some(periods) = &mut self.periods {
            for p in periods.iter_mut() {
                p.iter_mut().for_each(|c| *c *= s);
            }
        }
        log::info!("mesh rescaled to unit area (original area {area:.16e}, length scale {s:.16e})");
        area
    }

    /// Writes ASCII OFF. Periodic meshes carry their periods in a
    /// `# periods` comment, which [`TriMesh::read_off`] understands.
    pub fn write_off<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "OFF")?;
        if let Some([p, q]) = self.periods {
            writeln!(
                out,
                "# periods {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                p[0], p[1], p[2], q[0], q[1], q[2]
            )?;
        }
        writeln!(out, "{} {} 0", self.positions.len(), self.faces.len())?;
        for p in &self.positions {
            writeln!(out, "{:.16e} {:.16e} {:.16e}", p[0], p[1], p[2])?;
        }
        for f in &self.faces {
            writeln!(out, "3 {} {} {}", f[0], f[1], f[2])?;
        }
        Ok(())
    }

    /// Parses ASCII OFF; polygons with more than three corners are split
    /// into fans.
    pub fn read_off<R: BufRead>(input: R) -> Result<Self> {
        let mut periods = None;
        let mut tokens: Vec<(usize, String)> = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let (content, comment) = match line.split_once('#') {
                Some((c, rest)) => (c, Some(rest)),
                None => (line.as_str(), None),
            };
            if let Some(rest) = comment.and_then(|c| c.trim().strip_prefix("periods")) {
                let v: Vec<f64> = rest
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Parse { line: i + 1, message: format!("bad periods: {e}") })?;
                if v.len() != 6 {
                    return Err(Error::Parse { line: i + 1, message: "periods need six numbers".into() });
                }
                periods = Some([[v[0], v[1], v[2]], [v[3], v[4], v[5]]]);
            }
            tokens.extend(content.split_whitespace().map(|t| (i + 1, t.to_string())));
        }
        let mut it = tokens.into_iter();
        match it.next() {
            Some((_, h)) if h == "OFF" => {}
            Some((line, h)) => return Err(Error::Parse { line, message: format!("expected OFF header, found `{h}`") }),
            None => return Err(Error::Parse { line: 1, message: "empty OFF file".into() }),
        }
        let mut next = |what: &str| -> Result<(usize, String)> {
            it.next().ok_or_else(|| Error::Parse { line: 0, message: format!("unexpected end of file reading {what}") })
        };
        let parse_usize = |(line, t): (usize, String)| -> Result<usize> {
            t.parse().map_err(|e| Error::Parse { line, message: format!("`{t}`: {e}") })
        };
        let parse_f64 = |(line, t): (usize, String)| -> Result<f64> {
            t.parse().map_err(|e| Error::Parse { line, message: format!("`{t}`: {e}") })
        };
        let nv = parse_usize(next("vertex count")?)?;
        let nf = parse_usize(next("face count")?)?;
        let _ne = parse_usize(next("edge count")?)?;
        let mut positions = Vec::with_capacity(nv);
        for _ in 0..nv {
            let x = parse_f64(next("vertex")?)?;
            let y = parse_f64(next("vertex")?)?;
            let z = parse_f64(next("vertex")?)?;
            positions.push([x, y, z]);
        }
        let mut faces = Vec::with_capacity(nf);
        for _ in 0..nf {
            let (line, t) = next("face")?;
            let k = parse_usize((line, t))?;
            if k < 3 {
                return Err(Error::Parse { line, message: format!("face with {k} corners") });
            }
            let corners: Vec<usize> = (0..k).map(|_| next("face").and_then(parse_usize)).collect::<Result<_>>()?;
            for j in 1..k - 1 {
                faces.push([corners[0], corners[j], corners[j + 1]]);
            }
        }
        Ok(Self { positions, faces, periods })
    }
}
