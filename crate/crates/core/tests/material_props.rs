use anisokin::material::*;
use nalgebra::{Matrix6, SymmetricEigen};
use proptest::prelude::*;

fn triclinic_upper() -> impl Strategy<Value = [f64; 21]> {
    prop::array::uniform21(-20.0..20.0f64).prop_map(|mut u| {
        // strong diagonal keeps the matrix positive definite
        let mut k = 0;
        for i in 0..6 {
            for j in i..6 {
                if i == j {
                    u[k] = 300.0 + u[k].abs();
                }
                k += 1;
            }
        }
        u
    })
}

proptest! {
    #[test]
    fn voigt_blocked_round_trip_is_bit_exact(u in triclinic_upper(), rho in 1000.0..20000.0f64) {
        let m = build_triclinic(u.map(|x| x * GPA), rho).unwrap();
        let b = m.to_blocked();
        prop_assert_eq!(&b.to_voigt(), m.voigt());
        for i in 0..3 {
            for k in 0..3 {
                let bik = b.block(i, k);
                let bki = b.block(k, i);
                for j in 0..3 {
                    for l in 0..3 {
                        prop_assert_eq!(bik[j][l], bki[l][j]);
                    }
                }
            }
        }
    }

    #[test]
    fn voigt_index_is_symmetric(i in 1usize..=3, j in 1usize..=3) {
        prop_assert_eq!(voigt_index(i, j).unwrap(), voigt_index(j, i).unwrap());
    }
}

#[test]
fn voigt_index_is_bijective_on_pairs() {
    let mut seen = std::collections::BTreeSet::new();
    for i in 1..=3 {
        for j in i..=3 {
            assert!(seen.insert(voigt_index(i, j).unwrap()));
        }
    }
    assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![1, 2, 3, 4, 5, 6]);
    assert!(voigt_index(0, 1).is_err());
    assert!(voigt_index(1, 4).is_err());
}

#[test]
fn unstable_cubic_detected_by_eigenvalues() {
    let v = Matrix6::from_row_slice(&[
        1.0, 2.0, 2.0, 0.0, 0.0, 0.0, //
        2.0, 1.0, 2.0, 0.0, 0.0, 0.0, //
        2.0, 2.0, 1.0, 0.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, 0.0, 0.0, 1.0, 0.0, //
        0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
    ]);
    let min = SymmetricEigen::new(v).eigenvalues.min();
    assert!(min < 0.0);
    assert!(build_cubic(GPA, 2.0 * GPA, GPA, 1000.0).is_err());
    let m = ElasticityMatrix::from_constants_unchecked(
        SymmetryClass::Cubic,
        &[GPA, 2.0 * GPA, GPA],
        1000.0,
    )
    .unwrap();
    assert!(!m.validate_stability().is_stable());
}

#[test]
fn isotropic_constructor_examples() {
    let m = build_isotropic(0.0, GPA, 1000.0).unwrap();
    let v = m.voigt() / GPA;
    for i in 0..3 {
        assert_eq!(v[(i, i)], 2.0);
        assert_eq!(v[(i + 3, i + 3)], 1.0);
        for j in 0..3 {
            if i != j {
                assert_eq!(v[(i, j)], 0.0);
            }
        }
    }
    let m = build_isotropic(3.0 * GPA, 3.0 * GPA, 1000.0).unwrap();
    assert_eq!(m.voigt()[(0, 0)], 9.0 * GPA);
    assert_eq!(m.voigt()[(0, 1)], 3.0 * GPA);
    assert!(build_isotropic(-GPA, 0.1 * GPA, 1000.0).is_err());
    let b = build_isotropic(2.0 * GPA, GPA, 1000.0)
        .unwrap()
        .to_blocked()
        .block(0, 0);
    assert_eq!([b[0][0], b[1][1], b[2][2]], [4.0 * GPA, GPA, GPA]);
}

#[test]
fn material_file_with_unknown_class_is_rejected() {
    let text = r#"{"name":"x","class":"monoclinic","constants_gpa":[1],"density_kg_m3":1000}"#;
    assert!(serde_json::from_str::<MaterialFile>(text).is_err());
}
