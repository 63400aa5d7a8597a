//! Correlation-matrix diversity penalty over generated samples.
//!
//! For representations `s₁ … sₙ` (each of dimension `d`), `A_S[i][j]` is the
//! Pearson correlation of the `d` components of `sᵢ` and `sⱼ`. The penalty is
//! `R = ‖I − A_S‖_F`; it vanishes only when every pair of representations is
//! uncorrelated, which forces all of them to be distinct.

use crate::error::{Error, Result};
use crate::neural::{Graph, NodeId, Tensor};

/// Smoothing added to variances in the differentiable penalty so that
/// gradients stay finite for near-constant representations.
pub const STD_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `‖I − A_S‖_F`.
    pub fn distance_from_identity(&self) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                let target = if i == j { 1.0 } else { 0.0 };
                total += (target - self.get(i, j)).powi(2);
            }
        }
        total.sqrt()
    }
}

/// Pearson correlation between every pair of rows of `reps`.
///
/// A zero-variance row correlates with nothing: its diagonal entry is 1 and
/// its off-diagonal entries are 0.
pub fn correlation_matrix(reps: &Tensor) -> Result<CorrelationMatrix> {
    let (n, d) = (reps.rows(), reps.cols());
    if d < 2 {
        return Err(Error::TooFewComponents(d));
    }
    let centered: Vec<Option<Vec<f64>>> = reps
        .iter_rows()
        .map(|row| {
            let mean = row.iter().sum::<f64>() / d as f64;
            let c: Vec<f64> = row.iter().map(|v| v - mean).collect();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = 1.0 + row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            // rows whose spread is pure rounding noise are degenerate
            (norm > 1e-12 * scale * (d as f64).sqrt()).then(|| c.iter().map(|v| v / norm).collect())
        })
        .collect();

    let mut entries = vec![0.0; n * n];
    for i in 0..n {
        entries[i * n + i] = 1.0;
        for j in (i + 1)..n {
            if let (Some(a), Some(b)) = (&centered[i], &centered[j]) {
                let r = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0);
                entries[i * n + j] = r;
                entries[j * n + i] = r;
            }
        }
    }
    Ok(CorrelationMatrix { n, entries })
}

/// `‖I − A_S‖_F` for the rows of `reps`.
pub fn r_g(reps: &Tensor) -> Result<f64> {
    if reps.rows() < 2 {
        return Err(Error::Config(format!(
            "correlation penalty needs at least 2 representations, got {}",
            reps.rows()
        )));
    }
    Ok(correlation_matrix(reps)?.distance_from_identity())
}

/// Differentiable `‖I − A_S‖_F` of the rows of the `n×d` node `reps`.
///
/// Standard deviations are smoothed by [`STD_EPS`], and the diagonal is taken
/// as exactly one, so only off-diagonal correlations contribute.
pub fn r_g_node(g: &mut Graph, reps: NodeId) -> Result<NodeId> {
    let (n, d) = {
        let v = g.value(reps);
        (v.rows(), v.cols())
    };
    if d < 2 {
        return Err(Error::TooFewComponents(d));
    }
    if n < 2 {
        return Err(Error::Config(format!(
            "correlation penalty needs at least 2 representations, got {n}"
        )));
    }
    let mean = g.mean_cols(reps)?;
    let centered = g.sub_col(reps, mean)?;
    let sq = g.square(centered)?;
    let var = g.mean_cols(sq)?;
    let var = g.offset(var, STD_EPS)?;
    let std = g.sqrt(var)?;
    let z = g.div_col(centered, std)?;
    let gram = g.matmul_transb(z, z)?;
    let corr = g.scale(gram, 1.0 / d as f64)?;
    let mut mask = Tensor::full(n, n, 1.0);
    for i in 0..n {
        mask.data_mut()[i * n + i] = 0.0;
    }
    let mask = g.constant(mask);
    let off = g.mul(corr, mask)?;
    let off_sq = g.square(off)?;
    let total = g.sum(off_sq)?;
    g.sqrt(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::check::{max_relative_error, numeric_gradients, ParamMap, FD_STEP};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_reps(rng: &mut impl Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn identical_and_opposite_vectors() {
        let s = [0.3, -1.0, 2.0];
        let a = correlation_matrix(&Tensor::from_rows(&[s, s]).unwrap()).unwrap();
        assert!((a.get(0, 1) - 1.0).abs() < 1e-15);
        let b = correlation_matrix(&Tensor::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]).unwrap()).unwrap();
        assert!((b.get(0, 1) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn matches_definitional_pearson() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let reps = random_reps(&mut rng, 4, 8);
        let a = correlation_matrix(&Tensor::from_rows(&reps).unwrap()).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        for i in 0..4 {
            for j in 0..4 {
                let (mi, mj) = (mean(&reps[i]), mean(&reps[j]));
                let cov: f64 = (0..8).map(|k| (reps[i][k] - mi) * (reps[j][k] - mj)).sum::<f64>() / 8.0;
                let si = ((0..8).map(|k| (reps[i][k] - mi).powi(2)).sum::<f64>() / 8.0).sqrt();
                let sj = ((0..8).map(|k| (reps[j][k] - mj).powi(2)).sum::<f64>() / 8.0).sqrt();
                assert!((a.get(i, j) - cov / (si * sj)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn degenerate_rows() {
        let a = correlation_matrix(&Tensor::from_rows(&[[2.0, 2.0, 2.0], [1.0, 0.0, -1.0]]).unwrap()).unwrap();
        assert_eq!(a.entries(), &[1.0, 0.0, 0.0, 1.0]);
        assert!(matches!(
            correlation_matrix(&Tensor::from_rows(&[[1.0], [2.0]]).unwrap()),
            Err(Error::TooFewComponents(1))
        ));
    }

    #[test]
    fn r_g_examples() {
        // orthogonal zero-mean rows are uncorrelated
        let reps = Tensor::from_rows(&[[1.0, -1.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0]]).unwrap();
        assert!(r_g(&reps).unwrap() < 1e-15);
        let dup = Tensor::from_rows(&[[0.1, 0.5, -0.3], [0.1, 0.5, -0.3]]).unwrap();
        assert!((r_g(&dup).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!(r_g(&Tensor::from_rows(&[[0.1, 0.5]]).unwrap()).is_err());
    }

    #[test]
    fn collapsed_batch_scores_worse_than_orthogonalized_copy() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let base: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let collapsed: Vec<Vec<f64>> = (0..4)
            .map(|_| base.iter().map(|v| v + rng.random_range(-0.01..0.01)).collect())
            .collect();
        // Gram-Schmidt on the centered rows gives pairwise Pearson 0
        let mut ortho: Vec<Vec<f64>> = Vec::new();
        for row in &collapsed {
            let m = row.iter().sum::<f64>() / row.len() as f64;
            let mut v: Vec<f64> = row.iter().map(|x| x - m).collect();
            for u in &ortho {
                let p: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum::<f64>()
                    / u.iter().map(|b| b * b).sum::<f64>();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
            }
            ortho.push(v);
        }
        let rc = r_g(&Tensor::from_rows(&collapsed).unwrap()).unwrap();
        let ro = r_g(&Tensor::from_rows(&ortho).unwrap()).unwrap();
        assert!(rc > ro);
        assert!(ro < 1e-8);
    }

    #[test]
    fn graph_penalty_tracks_exact_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reps = Tensor::from_rows(&random_reps(&mut rng, 6, 5)).unwrap();
        let mut g = Graph::new();
        let x = g.constant(reps.clone());
        let r = r_g_node(&mut g, x).unwrap();
        assert!((g.scalar(r) - r_g(&reps).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn graph_penalty_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let reps = Tensor::from_rows(&random_reps(&mut rng, 5, 4)).unwrap();
        let mut store = ParamMap([("x".to_owned(), reps)].into_iter().collect());
        let eval = |s: &ParamMap| -> Result<(Graph, NodeId)> {
            let mut g = Graph::new();
            let x = g.param("x", &s.0["x"]);
            let r = r_g_node(&mut g, x)?;
            Ok((g, r))
        };
        let (g, r) = eval(&store).unwrap();
        let analytic = g.backward(r).unwrap();
        let numeric = numeric_gradients(&mut store, FD_STEP, |s| Ok(eval(s)?.0.scalar(r))).unwrap();
        assert!(max_relative_error(&analytic, &numeric) < 1e-4);
    }

    proptest::proptest! {
        #[test]
        fn duplicates_always_penalized(
            seed in 0u64..10_000, n in 2usize..=8, d in 2usize..10,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut reps = random_reps(&mut rng, n, d);
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            if i != j {
                reps[j] = reps[i].clone();
            } else {
                reps[(i + 1) % n] = reps[i].clone();
            }
            proptest::prop_assert!(r_g(&Tensor::from_rows(&reps).unwrap()).unwrap() > 0.0);
        }

        #[test]
        fn pearson_invariances(
            seed in 0u64..10_000, n in 2usize..7,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let reps = random_reps(&mut rng, n, 6);
            let base = r_g(&Tensor::from_rows(&reps).unwrap()).unwrap();
            let moved: Vec<Vec<f64>> = reps.iter().map(|r| {
                let shift = rng.random_range(-5.0..5.0);
                let scale = rng.random_range(0.1..10.0);
                r.iter().map(|v| scale * v + shift).collect()
            }).collect();
            let after = r_g(&Tensor::from_rows(&moved).unwrap()).unwrap();
            proptest::prop_assert!((base - after).abs() < 1e-10);

            let mut perm: Vec<usize> = (0..n).collect();
            perm.rotate_left(1);
            let permuted: Vec<Vec<f64>> = perm.iter().map(|&k| reps[k].clone()).collect();
            let pa = correlation_matrix(&Tensor::from_rows(&permuted).unwrap()).unwrap();
            let a = correlation_matrix(&Tensor::from_rows(&reps).unwrap()).unwrap();
            for p in 0..n {
                for q in 0..n {
                    proptest::prop_assert_eq!(pa.get(p, q), a.get(perm[p], perm[q]));
                }
            }
            proptest::prop_assert!((pa.distance_from_identity() - base).abs() < 1e-12);
        }
    }
}
