use evolvefem::analysis::{eoc, ErrorRow, ErrorTable};
use evolvefem::assembly::{assemble_mass, assemble_stiffness};
use evolvefem::evolution::bdf_coefficients;
use evolvefem::mesh::{generate_disk_mesh, NodalVector};
use evolvefem::ref_elem::ReferenceElement;
use proptest::prelude::*;

fn to_simplex(dim: usize, mut p: [f64; 3]) -> [f64; 3] {
    if dim == 2 {
        p[2] = 0.0;
    }
    let s: f64 = p.iter().sum();
    if s > 1.0 {
        for c in p.iter_mut() {
            *c /= s;
        }
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shape_functions_partition_unity(dim in 2usize..=3, degree in 1usize..=2, raw in prop::array::uniform3(0.0f64..1.0)) {
        let p = to_simplex(dim, raw);
        let elem = ReferenceElement::new(dim, degree).unwrap();
        let values = elem.shape_values(&p).unwrap();
        prop_assert!((values.iter().sum::<f64>() - 1.0).abs() < 1e-13);
        let grads = elem.shape_gradients(&p).unwrap();
        for d in 0..dim {
            prop_assert!(grads.iter().map(|g| g[d]).sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn power_law_slope_recovered(rate in 0.5f64..4.0, c in 1e-6f64..1e3, n in 2usize..8) {
        let rows: Vec<(f64, f64)> = (0..n).map(|i| {
            let h = 0.5 * 0.7f64.powi(i as i32);
            (h, c * h.powf(rate))
        }).collect();
        let fit = eoc(&rows).unwrap();
        prop_assert!((fit.least_squares - rate).abs() < 1e-10);
        for s in fit.pairwise {
            prop_assert!((s - rate).abs() < 1e-10);
        }
    }

    #[test]
    fn csv_round_trip(values in prop::collection::vec(prop::option::of(1e-12f64..1e2), 6), h in 0.01f64..1.0) {
        let mut errors = [None; 6];
        errors.copy_from_slice(&values);
        let table = ErrorTable { rows: vec![ErrorRow { h, tau: 1e-3, errors }] };
        let back = ErrorTable::from_csv(&table.to_csv()).unwrap();
        prop_assert_eq!(back, table);
    }

    #[test]
    fn bdf_weights_annihilate_constants(q in 1usize..=4) {
        let (delta, gamma) = bdf_coefficients(q).unwrap();
        prop_assert!(delta.iter().sum::<f64>().abs() < 1e-13);
        prop_assert!((gamma.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn matrices_invariant_under_rigid_motion(angle in 0.0f64..6.3, sx in -2.0f64..2.0, sy in -2.0f64..2.0) {
        let (topo, x) = generate_disk_mesh(0.35, 2).unwrap();
        let (c, s) = (angle.cos(), angle.sin());
        let mut y = NodalVector::zeros(2, topo.n_nodes);
        for j in 0..topo.n_nodes {
            let p = x.node(j);
            y.set_node(j, &[c * p[0] - s * p[1] + sx, s * p[0] + c * p[1] + sy, 0.0]);
        }
        for (a, b) in [
            (assemble_mass(&topo, &x).unwrap(), assemble_mass(&topo, &y).unwrap()),
            (assemble_stiffness(&topo, &x).unwrap(), assemble_stiffness(&topo, &y).unwrap()),
        ] {
            let scale = a.max_abs();
            let diff = a.linear_combination(1.0, &b, -1.0).max_abs();
            prop_assert!(diff <= 1e-12 * scale, "{diff} vs {scale}");
        }
    }
}
