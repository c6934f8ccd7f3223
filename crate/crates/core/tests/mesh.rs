use std::f64::consts::PI;

use deltamass::mesh::{canonical_residual, flat_torus_mesh, icosphere, voxel_genus1, voxel_genus2, TriMesh};
use deltamass::{integrate, Error, MeshSurface, SphereGrid, Surface, TorusGrid, TorusModulus};
use proptest::prelude::*;

const M_SQUARE: f64 = -0.2085777932435014;
const ROUND: f64 = -0.17067218146492423;

#[test]
fn constants_are_in_the_kernel() {
    for mesh in [icosphere(2), voxel_genus1(2), flat_torus_mesh(TorusModulus::new(0.2, 1.3).unwrap(), 10)] {
        let s = MeshSurface::new(mesh).unwrap();
        assert!(s.laplacian(&s.constant(3.0)).unwrap().sup_norm() < 1e-10);
        let l = s.operator().stiffness();
        for i in 0..s.node_count() {
            let row: f64 = l.row(i).map(|(_, v)| v).sum();
            assert!(row.abs() < 1e-12);
            for (j, v) in l.row(i) {
                assert!((v - l.get(j, i)).abs() < 1e-14);
            }
        }
        let total: f64 = s.operator().lumped_mass().iter().sum();
        assert!((total - 1.0).abs() < 1e-13);
    }
}

#[test]
fn eigenvalues_of_torus_and_sphere() {
    let t = MeshSurface::new(flat_torus_mesh(TorusModulus::square(), 40)).unwrap();
    let lam = t.first_eigenvalue(3).unwrap();
    // five-point stencil: (4N²)·sin²(π/N)·... → 4π² − O(N⁻²)
    let n = 40.0;
    let exact = 4.0 * n * n * (PI / n).sin().powi(2);
    assert!((lam - exact).abs() < 1e-8 * exact, "{lam} vs {exact}");
    assert!((lam - 4.0 * PI * PI).abs() < 0.01 * lam);

    let s = MeshSurface::new(icosphere(4)).unwrap();
    let lam = s.first_eigenvalue(3).unwrap();
    assert!((lam - 8.0 * PI).abs() < 0.005 * 8.0 * PI, "{lam}");
}

#[test]
fn green_column_invariants() {
    let s = MeshSurface::new(voxel_genus2(3)).unwrap();
    let cols: Vec<_> = [0usize, 50, 333, 440].iter().map(|&p| (p, s.green_column(p).unwrap())).collect();
    for (p, col) in &cols {
        assert!(integrate(col, s.quadrature()).unwrap().abs() < 1e-10);
        assert!(s.green_residual(*p, col).unwrap() < 1e-6);
        for (q, other) in &cols {
            assert!((col.get(*q) - other.get(*p)).abs() < 1e-9);
        }
    }
}

#[test]
fn mesh_green_agrees_with_grid_green() {
    let n = 64;
    let tau = TorusModulus::square();
    let mesh = MeshSurface::new(flat_torus_mesh(tau, n)).unwrap();
    let grid = TorusGrid::<f64>::square(tau, n).unwrap();
    let a = mesh.green_column(0).unwrap();
    let b = grid.green_column(0);
    // both index nodes as i·n + j; compare away from the pole
    let h2 = 1.0 / (n * n) as f64;
    for q in [grid.index(16, 0), grid.index(32, 32), grid.index(10, 50)] {
        assert!((a.get(q) - b.get(q)).abs() < 10.0 * h2 + 1e-5, "{} vs {}", a.get(q), b.get(q));
    }
}

#[test]
fn robin_on_flat_torus_and_sphere() {
    let t = MeshSurface::new(flat_torus_mesh(TorusModulus::square(), 80)).unwrap();
    let r0 = t.robin_at(0).unwrap();
    let r1 = t.robin_at(3217).unwrap();
    assert!((r0.value - M_SQUARE).abs() < r0.error_bar);
    assert!((r0.value - r1.value).abs() < 2.0 * r0.error_bar.max(r1.error_bar));

    for level in [4, 5] {
        let s = MeshSurface::new(icosphere(level)).unwrap();
        let r = s.robin_at(7).unwrap();
        assert!((r.value - ROUND).abs() < r.error_bar, "{r:?}");
    }
}

#[test]
fn coarse_mesh_is_an_accuracy_error() {
    let s = MeshSurface::new(icosphere(1)).unwrap();
    assert!(matches!(s.robin_at(0), Err(Error::Accuracy { .. })));
}

#[test]
fn discrete_gauss_bonnet() {
    let cases = [
        (flat_torus_mesh(TorusModulus::hexagonal(), 12), 0),
        (icosphere(0), 2),
        (icosphere(3), 2),
        (voxel_genus1(3), 0),
        (voxel_genus2(2), -2),
    ];
    for (mesh, chi) in cases {
        let s = MeshSurface::new(mesh).unwrap();
        assert_eq!(s.euler_characteristic(), chi);
        let total: f64 = s.angle_defects().iter().sum();
        assert!((total - 2.0 * PI * chi as f64).abs() < 1e-10);
        let k = s.curvature().unwrap();
        assert!((integrate(&k, s.quadrature()).unwrap() - 2.0 * PI * chi as f64).abs() < 1e-10);
    }
    let flat = MeshSurface::new(flat_torus_mesh(TorusModulus::square(), 8)).unwrap();
    assert!(flat.curvature().unwrap().sup_norm() < 1e-12);
}

#[test]
fn canonical_residual_examples() {
    let t = MeshSurface::new(flat_torus_mesh(TorusModulus::square(), 16)).unwrap();
    assert!(canonical_residual(&t, &t.constant(M_SQUARE)).unwrap().sup_norm() < 1e-10);
    let bump = t.smooth_noise(4, 2, 0.1).unwrap();
    let res = canonical_residual(&t, &bump.shift(M_SQUARE)).unwrap();
    assert!(res.sub(&t.laplacian(&bump).unwrap()).unwrap().sup_norm() < 1e-10);

    let s = SphereGrid::<f64>::with_order(16).unwrap();
    assert!(canonical_residual(&s, &s.constant(ROUND)).unwrap().sup_norm() < 1e-12);
}

#[test]
fn off_files_round_trip_through_surface() {
    let mesh = voxel_genus2(2);
    let mut buf = Vec::new();
    mesh.write_off(&mut buf).unwrap();
    let back = TriMesh::read_off(buf.as_slice()).unwrap();
    let a = MeshSurface::new(mesh).unwrap();
    let b = MeshSurface::new(back).unwrap();
    assert_eq!(a.domain(), b.domain());
}

#[test]
fn area_is_normalized() {
    let mut m = icosphere(2);
    let scaled: Vec<[f64; 3]> = m.positions().iter().map(|p| [3.0 * p[0], 3.0 * p[1], 3.0 * p[2]]).collect();
    m = TriMesh::new(scaled, m.faces().to_vec());
    let s = MeshSurface::new(m).unwrap();
    assert!((s.original_area() - 9.0).abs() < 1e-12);
    assert!((s.area() - 1.0).abs() < 1e-13);
}

#[test]
fn thin_triangle_is_rejected() {
    let positions = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.5, 0.001, 0.0], [0.5, 0.0, 1.0]];
    let faces = vec![[0, 1, 2], [0, 3, 1], [1, 3, 2], [2, 3, 0]];
    match TriMesh::new(positions, faces).validate() {
        Err(Error::MeshQuality(msg)) => assert!(msg.contains("face 0"), "{msg}"),
        other => panic!("{other:?}"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn inverse_laplacian_round_trip(seed in any::<u64>()) {
        let s = MeshSurface::new(icosphere(2)).unwrap();
        let f = s.smooth_noise(seed, 3, 1.0).unwrap();
        let u = s.inverse_laplacian(&f).unwrap();
        let mean = integrate(&f, s.quadrature()).unwrap();
        prop_assert!(s.laplacian(&u).unwrap().sub(&f.shift(-mean)).unwrap().sup_norm() < 1e-6);
        prop_assert!(integrate(&u, s.quadrature()).unwrap().abs() < 1e-12);
    }
}
