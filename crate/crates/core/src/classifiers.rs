//! Binary classifiers over feature matrices.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::labels::LabelSequence;
use crate::seed::{derive_seed, rng_from_seed, tag};

pub const KMEANS_RESTARTS: usize = 10;
pub const KMEANS_MAX_ITER: usize = 300;
pub const GI_ROUNDS: usize = 100;
pub const GI_SUBSAMPLE_RATIO: f64 = 0.3;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn sq_dist_on(a: &[f64], b: &[f64], subset: &[usize]) -> f64 {
    subset.iter().map(|&j| (a[j] - b[j]) * (a[j] - b[j])).sum()
}

fn mean_of(matrix: &FeatureMatrix, rows: impl Iterator<Item = usize>) -> (Vec<f64>, usize) {
    let mut acc = vec![0.0; matrix.ncols()];
    let mut n = 0;
    for i in rows {
        for (a, v) in acc.iter_mut().zip(matrix.row(i)) {
            *a += v;
        }
        n += 1;
    }
    if n > 0 {
        acc.iter_mut().for_each(|a| *a /= n as f64);
    }
    (acc, n)
}

/// Within-cluster sum of squared distances of a two-way assignment.
pub fn inertia(matrix: &FeatureMatrix, labels: &[u8]) -> f64 {
    let (c0, _) = mean_of(matrix, (0..matrix.nrows()).filter(|&i| labels[i] == 0));
    let (c1, _) = mean_of(matrix, (0..matrix.nrows()).filter(|&i| labels[i] == 1));
    (0..matrix.nrows())
        .map(|i| sq_dist(matrix.row(i), if labels[i] == 0 { &c0 } else { &c1 }))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansRun {
    pub labels: Vec<u8>,
    pub inertia: f64,
    pub iterations: usize,
}

fn plus_plus_init<R: Rng>(matrix: &FeatureMatrix, rng: &mut R) -> [Vec<f64>; 2] {
    let m = matrix.nrows();
    let first = rng.random_range(0..m);
    let c0 = matrix.row(first).to_vec();
    let d2: Vec<f64> = (0..m).map(|i| sq_dist(matrix.row(i), &c0)).collect();
    let total: f64 = d2.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut second = m - 1;
    for (i, d) in d2.iter().enumerate() {
        acc += d;
        if *d > 0.0 && acc > target {
            second = i;
            break;
        }
    }
    if d2[second] == 0.0 {
        // rounding pushed the target past the last positive weight
        second = d2
            .iter()
            .rposition(|&d| d > 0.0)
            .expect("distinct rows were checked");
    }
    [c0, matrix.row(second).to_vec()]
}

fn lloyd(matrix: &FeatureMatrix, mut centers: [Vec<f64>; 2]) -> KMeansRun {
    let m = matrix.nrows();
    let mut labels: Vec<u8> = vec![u8::MAX; m];
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        let next: Vec<u8> = (0..m)
            .map(|i| {
                let row = matrix.row(i);
                u8::from(sq_dist(row, &centers[1]) < sq_dist(row, &centers[0]))
            })
            .collect();
        let stable = next == labels;
        labels = next;
        if stable {
            break;
        }
        for k in 0..2u8 {
            let (c, n) = mean_of(matrix, (0..m).filter(|&i| labels[i] == k));
            if n > 0 {
                centers[k as usize] = c;
            } else {
                // Empty cluster: move it onto the point farthest from the other center.
                let other = &centers[1 - k as usize];
                let far = (0..m)
                    .max_by(|&a, &b| {
                        sq_dist(matrix.row(a), other).total_cmp(&sq_dist(matrix.row(b), other))
                    })
                    .expect("non-empty matrix");
                centers[k as usize] = matrix.row(far).to_vec();
            }
        }
    }
    let inertia = inertia(matrix, &labels);
    KMeansRun {
        labels,
        inertia,
        iterations,
    }
}

fn check_clusterable(matrix: &FeatureMatrix) -> Result<()> {
    if matrix.nrows() < 2 {
        return Err(Error::InsufficientData(format!(
            "2-means needs at least two rows, got {}",
            matrix.nrows()
        )));
    }
    let first = matrix.row(0);
    if matrix.rows().all(|r| r == first) {
        return Err(Error::DegenerateClustering);
    }
    Ok(())
}

/// Every restart of [`two_means`], in restart order.
pub fn two_means_restarts(matrix: &FeatureMatrix, seed: u64) -> Result<Vec<KMeansRun>> {
    check_clusterable(matrix)?;
    Ok((0..KMEANS_RESTARTS)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(seed, &[tag("kmeans"), r as u64]));
            let centers = plus_plus_init(matrix, &mut rng);
            lloyd(matrix, centers)
        })
        .collect())
}

fn canonical_order(matrix: &FeatureMatrix) -> Vec<usize> {
    let mut order: Vec<usize> = (0..matrix.nrows()).collect();
    order.sort_by(|&a, &b| {
        matrix
            .row(a)
            .iter()
            .zip(matrix.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Euclidean 2-means: k-means++ seeding, ten restarts, lowest inertia wins
/// (earliest restart on ties). Which cluster is called 1 is arbitrary.
///
/// Rows are clustered in lexicographic order and the labels mapped back, so
/// the result depends only on the multiset of rows: permuting the input
/// permutes the output the same way.
pub fn two_means(matrix: &FeatureMatrix, seed: u64) -> Result<LabelSequence> {
    let order = canonical_order(matrix);
    let sorted = matrix.select_rows(&order);
    let runs = two_means_restarts(&sorted, seed)?;
    let best = runs
        .into_iter()
        .reduce(|best, run| if run.inertia < best.inertia { run } else { best })
        .expect("at least one restart");
    let mut labels = vec![0u8; matrix.nrows()];
    for (k, &i) in order.iter().enumerate() {
        labels[i] = best.labels[k];
    }
    LabelSequence::new(labels)
}

/// Arithmetic means of the two label groups of a training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedCentroids {
    pub centroid0: Vec<f64>,
    pub centroid1: Vec<f64>,
}

impl TrainedCentroids {
    pub fn fit(train: &FeatureMatrix, labels: &LabelSequence) -> Result<Self> {
        if labels.len() != train.nrows() {
            return Err(Error::Contract(format!(
                "{} training labels for {} rows",
                labels.len(),
                train.nrows()
            )));
        }
        let l = labels.as_slice();
        let (centroid0, n0) = mean_of(train, (0..train.nrows()).filter(|&i| l[i] == 0));
        let (centroid1, n1) = mean_of(train, (0..train.nrows()).filter(|&i| l[i] == 1));
        if n0 == 0 || n1 == 0 {
            return Err(Error::Config("training data must contain both labels".into()));
        }
        Ok(TrainedCentroids {
            centroid0,
            centroid1,
        })
    }

    pub fn feature_count(&self) -> usize {
        self.centroid0.len()
    }
}

fn check_shapes(train: &FeatureMatrix, test: &FeatureMatrix) -> Result<()> {
    if train.ncols() != test.ncols() {
        return Err(Error::Contract(format!(
            "train has {} features, test has {}",
            train.ncols(),
            test.ncols()
        )));
    }
    Ok(())
}

/// Feature-subset size used by each imposter round.
pub fn gi_subset_size(f: usize, ratio: f64) -> usize {
    ((ratio * f as f64).round() as usize).clamp(1, f.max(1))
}

/// General Imposters style voting: each round picks a random feature subset
/// and assigns every test row to the nearer centroid on that subset. The
/// majority over rounds decides; ties go to label 0.
pub fn gi_classify(
    train: &FeatureMatrix,
    train_labels: &LabelSequence,
    test: &FeatureMatrix,
    rounds: usize,
    subsample_ratio: f64,
    seed: u64,
) -> Result<LabelSequence> {
    check_shapes(train, test)?;
    if rounds == 0 {
        return Err(Error::Config("GI needs at least one round".into()));
    }
    if !(subsample_ratio > 0.0 && subsample_ratio <= 1.0) {
        return Err(Error::Config(format!(
            "GI subsample ratio must be in (0, 1], got {subsample_ratio}"
        )));
    }
    let centroids = TrainedCentroids::fit(train, train_labels)?;
    let f = train.ncols();
    let k = gi_subset_size(f, subsample_ratio);

    let votes: Vec<Vec<u32>> = (0..rounds)
        .into_par_iter()
        .map(|round| {
            let mut rng = rng_from_seed(derive_seed(seed, &[tag("gi"), round as u64]));
            let subset = index::sample(&mut rng, f, k).into_vec();
            (0..test.nrows())
                .map(|i| {
                    let row = test.row(i);
                    let d0 = sq_dist_on(row, &centroids.centroid0, &subset);
                    let d1 = sq_dist_on(row, &centroids.centroid1, &subset);
                    u32::from(d1 < d0)
                })
                .collect()
        })
        .collect();

    let labels = (0..test.nrows()).map(|i| {
        let ones: u32 = votes.iter().map(|v| v[i]).sum();
        2 * ones as usize > rounds
    });
    Ok(LabelSequence::from_bools(labels))
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

/// Assigns each test row to the centroid with the larger cosine similarity
/// over all features; exact ties go to label 0.
pub fn cosine_classify(
    train: &FeatureMatrix,
    train_labels: &LabelSequence,
    test: &FeatureMatrix,
) -> Result<LabelSequence> {
    check_shapes(train, test)?;
    let c = TrainedCentroids::fit(train, train_labels)?;
    let mut labels = Vec::with_capacity(test.nrows());
    for i in 0..test.nrows() {
        let row = test.row(i);
        let s0 = cosine(row, &c.centroid0);
        let s1 = cosine(row, &c.centroid1);
        match (s0, s1) {
            (Some(s0), Some(s1)) => labels.push(u8::from(s1 > s0)),
            _ => {
                return Err(Error::DegenerateGeometry(format!(
                    "zero-norm vector at test row {i} or a centroid"
                )))
            }
        }
    }
    LabelSequence::new(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::MatrixKind;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn mat(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows.iter().map(|r| r.to_vec()).collect(), MatrixKind::External)
            .unwrap()
    }

    fn labels(v: &[u8]) -> LabelSequence {
        LabelSequence::new(v.to_vec()).unwrap()
    }

    fn same_partition(a: &[u8], b: &[u8]) -> bool {
        a == b || a.iter().zip(b).all(|(x, y)| x != y)
    }

    #[test]
    fn separated_clouds() {
        let m = mat(&[&[0.0, 0.0], &[0.1, 0.0], &[10.0, 10.0], &[10.1, 10.0]]);
        let l = two_means(&m, 1).unwrap();
        assert!(same_partition(l.as_slice(), &[0, 0, 1, 1]));
    }

    #[test]
    fn deterministic() {
        let m = mat(&[&[0.0, 1.0], &[0.3, 0.2], &[5.0, 4.0], &[4.1, 6.0], &[2.0, 2.5]]);
        assert_eq!(two_means(&m, 9).unwrap(), two_means(&m, 9).unwrap());
    }

    #[test]
    fn identical_rows_are_degenerate() {
        let m = mat(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        assert!(matches!(two_means(&m, 0), Err(Error::DegenerateClustering)));
    }

    /// Minimum within-cluster SSE over all non-trivial bipartitions.
    fn brute_force_best(matrix: &FeatureMatrix) -> (Vec<u8>, f64) {
        let m = matrix.nrows();
        let mut best = (Vec::new(), f64::INFINITY);
        for mask in 1u32..(1 << m) - 1 {
            let l: Vec<u8> = (0..m).map(|i| ((mask >> i) & 1) as u8).collect();
            let sse = {
                let mut total = 0.0;
                for g in 0..2u8 {
                    let members: Vec<usize> = (0..m).filter(|&i| l[i] == g).collect();
                    let d = matrix.ncols();
                    let mut c = vec![0.0; d];
                    for &i in &members {
                        for j in 0..d {
                            c[j] += matrix.get(i, j) / members.len() as f64;
                        }
                    }
                    for &i in &members {
                        for j in 0..d {
                            total += (matrix.get(i, j) - c[j]).powi(2);
                        }
                    }
                }
                total
            };
            if sse < best.1 {
                best = (l, sse);
            }
        }
        best
    }

    #[test]
    fn gaussian_blobs_match_brute_force() {
        let mut rng = rng_from_seed(11);
        let mut rows = Vec::new();
        for blob in 0..2 {
            for _ in 0..3 {
                let x: f64 = StandardNormal.sample(&mut rng);
                let y: f64 = StandardNormal.sample(&mut rng);
                rows.push(vec![x + 5.0 * blob as f64, y]);
            }
        }
        let m = FeatureMatrix::from_rows(rows, MatrixKind::External).unwrap();
        let (oracle, sse) = brute_force_best(&m);
        let got = two_means(&m, 3).unwrap();
        assert!(same_partition(got.as_slice(), &oracle));
        assert!((inertia(&m, got.as_slice()) - sse).abs() < 1e-9);
    }

    #[test]
    fn returned_run_has_minimal_inertia() {
        let mut rng = rng_from_seed(4);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let m = FeatureMatrix::from_rows(rows, MatrixKind::External).unwrap();
        let runs = two_means_restarts(&m.select_rows(&canonical_order(&m)), 8).unwrap();
        let chosen = two_means(&m, 8).unwrap();
        let chosen_inertia = inertia(&m, chosen.as_slice());
        assert!(runs.iter().all(|r| chosen_inertia <= r.inertia));
    }

    #[test]
    fn gi_zero_distance_to_centroid0() {
        let train = mat(&[&[0.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 0.0], &[4.0, 4.0, 4.0, 4.0]]);
        let tl = labels(&[0, 0, 1]);
        let test = mat(&[&[0.0, 0.0, 0.0, 0.0]]);
        let got = gi_classify(&train, &tl, &test, 100, 0.3, 1).unwrap();
        assert_eq!(got.as_slice(), &[0]);
    }

    #[test]
    fn gi_separated_blobs() {
        let train = mat(&[&[0.0, 0.1, 0.0], &[0.1, 0.0, 0.0], &[9.0, 9.0, 9.0], &[9.1, 8.9, 9.0]]);
        let tl = labels(&[0, 0, 1, 1]);
        let test = mat(&[&[8.5, 9.2, 9.0], &[9.3, 8.7, 8.8]]);
        let got = gi_classify(&train, &tl, &test, 100, 0.3, 5).unwrap();
        assert_eq!(got.as_slice(), &[1, 1]);
    }

    #[test]
    fn gi_missing_label_is_config_error() {
        let train = mat(&[&[0.0], &[1.0]]);
        let test = mat(&[&[0.5]]);
        assert!(matches!(
            gi_classify(&train, &labels(&[1, 1]), &test, 10, 0.3, 0),
            Err(Error::Config(_))
        ));
    }

    /// Straight-line restatement of the voting procedure.
    fn gi_oracle(
        train: &[Vec<f64>],
        tl: &[u8],
        test: &[Vec<f64>],
        rounds: usize,
        ratio: f64,
        seed: u64,
    ) -> Vec<u8> {
        let f = train[0].len();
        let mut c = [vec![0.0; f], vec![0.0; f]];
        let mut n = [0.0; 2];
        for (row, &l) in train.iter().zip(tl) {
            n[l as usize] += 1.0;
            for j in 0..f {
                c[l as usize][j] += row[j];
            }
        }
        for k in 0..2 {
            for j in 0..f {
                c[k][j] /= n[k];
            }
        }
        let size = ((ratio * f as f64).round() as usize).max(1);
        let mut w = vec![vec![0u8; test.len()]; rounds];
        for (r, wr) in w.iter_mut().enumerate() {
            let mut rng = rng_from_seed(derive_seed(seed, &[tag("gi"), r as u64]));
            let subset = index::sample(&mut rng, f, size).into_vec();
            for (k, row) in test.iter().enumerate() {
                let mut d = [0.0; 2];
                for lab in 0..2 {
                    for &j in &subset {
                        d[lab] += (row[j] - c[lab][j]).powi(2);
                    }
                }
                wr[k] = if d[1] < d[0] { 1 } else { 0 };
            }
        }
        (0..test.len())
            .map(|k| {
                let ones = w.iter().filter(|wr| wr[k] == 1).count();
                if ones > rounds - ones { 1 } else { 0 }
            })
            .collect()
    }

    #[test]
    fn gi_matches_straight_line_oracle() {
        let mut rng = rng_from_seed(21);
        let train: Vec<Vec<f64>> = (0..10)
            .map(|i| (0..4).map(|_| StandardNormal.sample(&mut rng)).map(|x: f64| x + (i % 2) as f64).collect())
            .collect();
        let tl: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
        let test: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..4).map(|_| { let x: f64 = StandardNormal.sample(&mut rng); 1.5 * x }).collect())
            .collect();
        let expected = gi_oracle(&train, &tl, &test, 100, 0.3, 77);
        let got = gi_classify(
            &FeatureMatrix::from_rows(train, MatrixKind::External).unwrap(),
            &labels(&tl),
            &FeatureMatrix::from_rows(test, MatrixKind::External).unwrap(),
            100,
            0.3,
            77,
        )
        .unwrap();
        assert_eq!(got.as_slice(), expected.as_slice());
    }

    #[test]
    fn cosine_examples() {
        let train = mat(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let tl = labels(&[0, 1]);
        let test = mat(&[&[0.0, 3.0], &[0.0, 0.5], &[1.0, 1.0]]);
        // parallel to centroid1, orthogonal to centroid0, exact tie
        assert_eq!(cosine_classify(&train, &tl, &test).unwrap().as_slice(), &[1, 1, 0]);

        let zero = mat(&[&[0.0, 0.0]]);
        assert!(matches!(
            cosine_classify(&train, &tl, &zero),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn cosine_matches_hand_formula() {
        let mut rng = rng_from_seed(2);
        let train: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..8).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let tl = [0u8, 1, 0, 1, 1];
        let test: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..8).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let centroid = |lab: u8| -> Vec<f64> {
            let members: Vec<&Vec<f64>> =
                train.iter().zip(&tl).filter(|(_, &l)| l == lab).map(|(r, _)| r).collect();
            (0..8)
                .map(|j| members.iter().map(|r| r[j]).sum::<f64>() / members.len() as f64)
                .collect()
        };
        let (c0, c1) = (centroid(0), centroid(1));
        let cos = |a: &[f64], b: &[f64]| {
            let dot: f64 = (0..8).map(|j| a[j] * b[j]).sum();
            let na: f64 = (0..8).map(|j| a[j] * a[j]).sum::<f64>().sqrt();
            let nb: f64 = (0..8).map(|j| b[j] * b[j]).sum::<f64>().sqrt();
            dot / (na * nb)
        };
        let expected: Vec<u8> = test.iter().map(|r| u8::from(cos(r, &c1) > cos(r, &c0))).collect();
        let got = cosine_classify(
            &FeatureMatrix::from_rows(train.clone(), MatrixKind::External).unwrap(),
            &labels(&tl),
            &FeatureMatrix::from_rows(test, MatrixKind::External).unwrap(),
        )
        .unwrap();
        assert_eq!(got.as_slice(), expected.as_slice());
    }

    fn matrix_strategy() -> impl Strategy<Value = FeatureMatrix> {
        (4usize..14, 1usize..4).prop_flat_map(|(m, d)| {
            proptest::collection::vec(-10.0f64..10.0, m * d).prop_map(move |v| {
                FeatureMatrix::from_flat(m, d, v, MatrixKind::External).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn gi_full_ratio_is_nearest_centroid(train in matrix_strategy(), seed in any::<u64>()) {
            let m = train.nrows();
            let tl = LabelSequence::from_bools((0..m).map(|i| i % 2 == 1));
            let c = TrainedCentroids::fit(&train, &tl).unwrap();
            let got = gi_classify(&train, &tl, &train, 7, 1.0, seed).unwrap();
            for i in 0..m {
                let d0 = sq_dist(train.row(i), &c.centroid0);
                let d1 = sq_dist(train.row(i), &c.centroid1);
                prop_assert_eq!(got.as_slice()[i], u8::from(d1 < d0));
            }
        }

        #[test]
        fn cosine_invariant_to_row_rescaling(train in matrix_strategy(), scale in 0.01f64..100.0, row in 0usize..4) {
            let tl = LabelSequence::from_bools((0..train.nrows()).map(|i| i % 2 == 1));
            let test = train.clone();
            let Ok(base) = cosine_classify(&train, &tl, &test) else { return Ok(()); };
            let mut rows: Vec<Vec<f64>> = test.rows().map(<[f64]>::to_vec).collect();
            let row = row % rows.len();
            rows[row].iter_mut().for_each(|v| *v *= scale);
            let scaled = FeatureMatrix::from_rows(rows, MatrixKind::External).unwrap();
            let got = cosine_classify(&train, &tl, &scaled).unwrap();
            // Rescaling may only flip a row that sits on a rounding-level tie.
            let c = TrainedCentroids::fit(&train, &tl).unwrap();
            let r = test.row(row);
            let margin = (cosine(r, &c.centroid1).unwrap() - cosine(r, &c.centroid0).unwrap()).abs();
            if margin > 1e-12 {
                prop_assert_eq!(got, base);
            }
        }

        #[test]
        fn two_means_scale_invariant(m in matrix_strategy(), exp in -3i32..4, seed in any::<u64>()) {
            prop_assume!(check_clusterable(&m).is_ok());
            let c = 2f64.powi(exp);
            let a = two_means(&m, seed).unwrap();
            let b = two_means(&m.scaled(c), seed).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn two_means_permutation_equivariant(m in matrix_strategy(), seed in any::<u64>(), rot in 0usize..14) {
            prop_assume!(check_clusterable(&m).is_ok());
            let n = m.nrows();
            let perm: Vec<usize> = (0..n).rev().map(|i| (i + rot) % n).collect();
            let a = two_means(&m, seed).unwrap();
            let b = two_means(&m.select_rows(&perm), seed).unwrap();
            let mut back = vec![0u8; n];
            for (k, &i) in perm.iter().enumerate() {
                back[i] = b.as_slice()[k];
            }
            prop_assert_eq!(a.as_slice(), back.as_slice());
        }
    }
}
