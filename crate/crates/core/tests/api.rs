use frgm::features::{shape_context_cost, Orientation};
use frgm::{
    hungarian, io, match_deformable, match_euclidean, match_general, DeformConfig, DeformProblem, EuclideanConfig,
    EuclideanProblem, FrgmError, GeneralConfig, GeneralProblem, Permutation, PointSet, PointSet32, PointSet64,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cloud(seed: u64, n: usize) -> DMatrix<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, 2, |_, _| r.random_range(-1.0..1.0))
}

fn permuted(v: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    // row perm[i] of the result is row i of v
    let mut out = DMatrix::zeros(v.nrows(), v.ncols());
    for (i, &j) in perm.iter().enumerate() {
        out.set_row(j, &v.row(i));
    }
    out
}

#[test]
fn euclidean_recovers_permutation_in_f64_and_f32() {
    let v = cloud(1, 15);
    let perm: Vec<usize> = (0..15).map(|i| (i * 4 + 3) % 15).collect();
    let v2 = permuted(&v, &perm);

    let prob = EuclideanProblem::new(
        PointSet64::new(v.clone()).unwrap(),
        PointSet64::new(v2.clone()).unwrap(),
        None,
        &EuclideanConfig::default(),
    )
    .unwrap();
    assert_eq!(match_euclidean(&prob).unwrap().assignment.assign(), &perm[..]);

    let prob = EuclideanProblem::new(
        PointSet32::new(v.cast()).unwrap(),
        PointSet32::new(v2.cast()).unwrap(),
        None,
        &EuclideanConfig::default(),
    )
    .unwrap();
    assert_eq!(match_euclidean(&prob).unwrap().assignment.assign(), &perm[..]);
}

#[test]
fn general_matches_permuted_distance_graph() {
    let v = cloud(2, 12);
    let perm: Vec<usize> = (0..12).rev().collect();
    let p1 = PointSet::new(v.clone()).unwrap();
    let p2 = PointSet::new(permuted(&v, &perm)).unwrap();
    let unary = shape_context_cost(&p1, &p2, Orientation::Absolute).unwrap();
    let prob = GeneralProblem::new(
        &p1.distance_matrix(),
        &p2.distance_matrix(),
        None,
        Some(unary),
        &GeneralConfig::default(),
    )
    .unwrap();
    assert_eq!(match_general(&prob).unwrap().assignment.assign(), &perm[..]);
}

#[test]
fn subgraph_assignment_is_injective() {
    let v2 = cloud(3, 14);
    let v1 = v2.rows(0, 9).into_owned();
    let prob = EuclideanProblem::new(
        PointSet::new(v1).unwrap(),
        PointSet::new(v2).unwrap(),
        None,
        &EuclideanConfig::default(),
    )
    .unwrap();
    let a = match_euclidean(&prob).unwrap().assignment;
    let mut seen = a.assign().to_vec();
    seen.sort_unstable();
    seen.dedup();
    assert_eq!(seen.len(), 9);
    assert!(a.assign().iter().all(|&j| j < 14));
}

#[test]
fn points_round_trip_through_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let v = PointSet::new(cloud(4, 7) * 1e-3 + DMatrix::from_element(7, 2, 1.0 / 3.0)).unwrap();
    for name in ["v.csv", "v.json"] {
        let path = dir.path().join(name);
        io::write_points(&path, &v).unwrap();
        assert_eq!(io::read_points(&path).unwrap(), v);
    }
}

#[test]
fn bad_inputs_are_typed_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "1,2\n3\n").unwrap();
    assert!(matches!(io::read_points(&path), Err(FrgmError::Input(_))));
    assert!(matches!(
        io::read_points(dir.path().join("missing.csv")),
        Err(FrgmError::Input(_))
    ));

    let big = PointSet::new(cloud(5, 6)).unwrap();
    let small = PointSet::new(cloud(6, 4)).unwrap();
    assert!(EuclideanProblem::new(big, small, None, &EuclideanConfig::default()).is_err());

    assert!(Permutation::new(vec![0, 0], 3).is_err());
    assert!(hungarian(&DMatrix::from_element(2, 2, f64::NAN)).is_err());
}

#[test]
fn general_and_deformable_run_in_single_precision() {
    let v = cloud(7, 12);
    let perm: Vec<usize> = (0..12).map(|i| (i * 5 + 1) % 12).collect();
    let p1 = PointSet32::new(v.clone().cast()).unwrap();
    let p2 = PointSet32::new(permuted(&v, &perm).cast()).unwrap();
    let unary = shape_context_cost(&p1, &p2, Orientation::Absolute).unwrap();
    let prob = GeneralProblem::new(
        &p1.distance_matrix(),
        &p2.distance_matrix(),
        None,
        Some(unary),
        &GeneralConfig::default(),
    )
    .unwrap();
    assert_eq!(match_general(&prob).unwrap().assignment.assign(), &perm[..]);

    let rotated = permuted(&v, &perm) * DMatrix::from_row_slice(2, 2, &[0.8, 0.6, -0.6, 0.8]) * 1.5;
    let cfg = DeformConfig::default();
    let prob = DeformProblem::new(p1, PointSet32::new(rotated.cast()).unwrap(), &cfg).unwrap();
    let r = match_deformable(&prob).unwrap();
    assert_eq!(r.assignment.assign(), &perm[..]);
}
