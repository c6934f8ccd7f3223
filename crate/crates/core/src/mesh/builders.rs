//! Meshes of the standard test surfaces, all scaled to unit area.

use std::collections::{BTreeSet, HashMap};

use super::{cross, dot, sub, TriMesh};
use crate::torus::TorusModulus;

/// Periodic mesh of the unit-area flat torus: `n × n` lattice cells, each
/// split along its short diagonal, `2n²` triangles.
pub fn flat_torus_mesh(modulus: TorusModulus, n: usize) -> TriMesh {
    let n = n.max(3);
    let [a, b] = modulus.basis();
    let positions = (0..n * n)
        .map(|v| {
            let (i, j) = (v / n, v % n);
            let p = modulus.to_physical(i as f64 / n as f64, j as f64 / n as f64);
            [p[0], p[1], 0.0]
        })
        .collect();
    let idx = |i: usize, j: usize| (i % n) * n + (j % n);
    // diagonal (0,0)-(1,1) is |a + b|, the other |a − b|
    let sum = (a[0] + b[0]).hypot(a[1] + b[1]);
    let diff = (a[0] - b[0]).hypot(a[1] - b[1]);
    let mut faces = Vec::with_capacity(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            let (p00, p10, p11, p01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            if sum <= diff {
                faces.push([p00, p10, p11]);
                faces.push([p00, p11, p01]);
            } else {
                faces.push([p00, p10, p01]);
                faces.push([p10, p11, p01]);
            }
        }
    }
    let periods = [[a[0], a[1], 0.0], [b[0], b[1], 0.0]];
    TriMesh::periodic(positions, faces, periods)
}

/// Icosahedron refined `level` times by edge midpoints, projected to the
/// sphere and scaled to unit area.
pub fn icosphere(level: usize) -> TriMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut positions: Vec<[f64; 3]> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let project = |p: [f64; 3]| {
        let r = dot(p, p).sqrt();
        [p[0] / r, p[1] / r, p[2] / r]
    };
    positions.iter_mut().for_each(|p| *p = project(*p));
    for _ in 0..level {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, positions: &mut Vec<[f64; 3]>| {
            *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (positions[a], positions[b]);
                positions.push(project([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                positions.len() - 1
            })
        };
        let mut refined = Vec::with_capacity(4 * faces.len());
        for &[a, b, c] in &faces {
            let ab = mid(a, b, &mut positions);
            let bc = mid(b, c, &mut positions);
            let ca = mid(c, a, &mut positions);
            refined.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = refined;
    }
    // outward orientation
    for f in &mut faces {
        let [a, b, c] = *f;
        let n = cross(sub(positions[b], positions[a]), sub(positions[c], positions[a]));
        if dot(n, positions[a]) < 0.0 {
            f.swap(1, 2);
        }
    }
    let mut mesh = TriMesh::new(positions, faces);
    mesh.normalize_area();
    mesh
}

/// Boundary of a union of unit cubes, each square face split into `k × k`
/// cells and each cell into two triangles; scaled to unit area.
///
/// Cubes must meet only along whole faces (no edge-only contact) for the
/// result to be a manifold.
pub fn voxel_surface(cells: &[(i64, i64, i64)], k: usize) -> TriMesh {
    let k = k.max(1) as i64;
    let occupied: BTreeSet<_> = cells.iter().copied().collect();
    let mut index: HashMap<[i64; 3], usize> = HashMap::new();
    let mut positions = Vec::new();
    let mut vertex = |p: [i64; 3], positions: &mut Vec<[f64; 3]>| {
        *index.entry(p).or_insert_with(|| {
            positions.push([p[0] as f64 / k as f64, p[1] as f64 / k as f64, p[2] as f64 / k as f64]);
            positions.len() - 1
        })
    };
    let mut faces = Vec::new();
    for &c in &occupied {
        let c = [c.0, c.1, c.2];
        for axis in 0..3 {
            for sign in [-1i64, 1] {
                let mut nb = c;
                nb[axis] += sign;
                if occupied.contains(&(nb[0], nb[1], nb[2])) {
                    continue;
                }
                let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
                let mut origin = [c[0] * k, c[1] * k, c[2] * k];
                if sign > 0 {
                    origin[axis] += k;
                }
                let point = |i: i64, j: i64| {
                    let mut p = origin;
                    p[u] += i;
                    p[v] += j;
                    p
                };
                for i in 0..k {
                    for j in 0..k {
                        let p00 = vertex(point(i, j), &mut positions);
                        let p10 = vertex(point(i + 1, j), &mut positions);
                        let p11 = vertex(point(i + 1, j + 1), &mut positions);
                        let p01 = vertex(point(i, j + 1), &mut positions);
                        // e_u × e_v = e_axis points outward for sign > 0
                        if sign > 0 {
                            faces.push([p00, p10, p11]);
                            faces.push([p00, p11, p01]);
                        } else {
                            faces.push([p00, p11, p10]);
                            faces.push([p00, p01, p11]);
                        }
                    }
                }
            }
        }
    }
    let mut mesh = TriMesh::new(positions, faces);
    mesh.normalize_area();
    mesh
}

/// Square ring of eight cubes around a one-cube hole.
pub fn voxel_genus1(k: usize) -> TriMesh {
    let cells: Vec<_> = (0..3)
        .flat_map(|x| (0..3).map(move |y| (x, y, 0)))
        .filter(|&(x, y, _)| (x, y) != (1, 1))
        .collect();
    voxel_surface(&cells, k)
}

/// A 5 × 3 slab of cubes with two one-cube holes.
pub fn voxel_genus2(k: usize) -> TriMesh {
    let cells: Vec<_> = (0..5)
        .flat_map(|x| (0..3).map(move |y| (x, y, 0)))
        .filter(|&(x, y, _)| (x, y) != (1, 1) && (x, y) != (3, 1))
        .collect();
    voxel_surface(&cells, k)
}
