//! Seeded synthetic instances: Gaussian designs, ridge and kernel-ridge
//! instances, the basis-copy lower-bound instance with its sign-vector
//! packing, and an instance whose labeled rows cover a shifted corner of the
//! covariate space.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{Dataset, Matrix};
use crate::regression::{kernel_ridge_to_ssal, ridge_to_ssal};
use crate::rng::{seeded_rng, TrialRng};

/// A generated dataset with its hidden labels and the model that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedInstance {
    pub dataset: Dataset,
    /// Labels of the unlabeled rows.
    pub hidden_labels: Vec<f64>,
    /// Coefficients of the generating linear model.
    pub beta: Vec<f64>,
}

impl GeneratedInstance {
    /// Labels of every stacked row, unlabeled rows first.
    pub fn full_labels(&self) -> Vec<f64> {
        let mut y = self.hidden_labels.clone();
        y.extend_from_slice(self.dataset.y_labeled());
        y
    }
}

fn gaussian_rows(rng: &mut TrialRng, rows: usize, cols: usize, scale: f64) -> Result<Matrix> {
    let entries = (0..rows * cols)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut *rng);
            scale * g
        })
        .collect();
    Matrix::from_row_major(rows, cols, entries)
}

fn gaussian_vec(rng: &mut TrialRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect()
}

fn noisy_labels(x: &Matrix, beta: &[f64], noise: &[f64], sigma: f64) -> Result<Vec<f64>> {
    Ok(x
        .mul_vec(beta)?
        .into_iter()
        .zip(noise)
        .map(|(v, z)| v + sigma * z)
        .collect())
}

fn check_sigma(noise_sigma: f64) -> Result<()> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "noise_sigma must be nonnegative, got {noise_sigma}"
        )));
    }
    Ok(())
}

/// Rows are standard Gaussian scaled by `1/sqrt(d)`; labels follow a Gaussian
/// `beta0` plus `N(0, noise_sigma^2)` noise.
pub fn gen_random_instance(
    n1: usize,
    n2: usize,
    d: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<GeneratedInstance> {
    gen_biased_instance(n1, n2, d, &vec![0.0; d], noise_sigma, seed)
}

/// Like [`gen_random_instance`], but the labeled rows are drawn from a small
/// ball around `bias_shift` whose radius shrinks as the shift grows. A zero
/// shift reproduces [`gen_random_instance`] exactly.
pub fn gen_biased_instance(
    n1: usize,
    n2: usize,
    d: usize,
    bias_shift: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<GeneratedInstance> {
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    if bias_shift.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "shift of length {} in dimension {d}",
            bias_shift.len()
        )));
    }
    if bias_shift.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite shift".into()));
    }
    check_sigma(noise_sigma)?;
    let scale = 1.0 / (d as f64).sqrt();
    let shift_norm = bias_shift.iter().map(|v| v * v).sum::<f64>().sqrt();
    let spread = scale / (1.0 + shift_norm).powi(2);

    let mut rng = seeded_rng(seed);
    let x1 = gaussian_rows(&mut rng, n1, d, scale)?;
    let g2 = gaussian_rows(&mut rng, n2, d, 1.0)?;
    let mut x2 = g2.as_dmatrix() * spread;
    for mut row in x2.row_iter_mut() {
        for (v, s) in row.iter_mut().zip(bias_shift) {
            *v += s;
        }
    }
    let x2 = Matrix::from_dmatrix(x2)?;
    let beta = gaussian_vec(&mut rng, d);
    let z1 = gaussian_vec(&mut rng, n1);
    let z2 = gaussian_vec(&mut rng, n2);
    let hidden_labels = noisy_labels(&x1, &beta, &z1, noise_sigma)?;
    let y2 = noisy_labels(&x2, &beta, &z2, noise_sigma)?;
    Ok(GeneratedInstance {
        dataset: Dataset::new(x1, x2, y2)?,
        hidden_labels,
        beta,
    })
}

/// Ridge instance on a Gaussian `n1 x d` design (rows scaled by `1/sqrt(d)`).
pub fn gen_ridge_instance(
    n1: usize,
    d: usize,
    lambda: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<GeneratedInstance> {
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    check_sigma(noise_sigma)?;
    let mut rng = seeded_rng(seed);
    let x1 = gaussian_rows(&mut rng, n1, d, 1.0 / (d as f64).sqrt())?;
    let beta = gaussian_vec(&mut rng, d);
    let z1 = gaussian_vec(&mut rng, n1);
    let hidden_labels = noisy_labels(&x1, &beta, &z1, noise_sigma)?;
    Ok(GeneratedInstance {
        dataset: ridge_to_ssal(&x1, lambda)?,
        hidden_labels,
        beta,
    })
}

/// A kernel-ridge instance with low-rank Gram matrix `K = G G' / rank`,
/// `G` an `n x rank` Gaussian matrix. Labels are `K alpha + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelInstance {
    pub kernel: Matrix,
    pub instance: GeneratedInstance,
}

pub fn gen_kernel_instance(
    n: usize,
    rank: usize,
    lambda: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<KernelInstance> {
    if n == 0 || rank == 0 || rank > n {
        return Err(Error::InvalidInput(format!(
            "kernel instance needs 0 < rank <= n, got rank {rank}, n {n}"
        )));
    }
    check_sigma(noise_sigma)?;
    let mut rng = seeded_rng(seed);
    let g = gaussian_rows(&mut rng, n, rank, 1.0)?;
    let gd = g.as_dmatrix();
    let k = gd * gd.transpose() / rank as f64;
    let kernel = Matrix::from_dmatrix((&k + k.transpose()) * 0.5)?;
    let alpha: Vec<f64> = gaussian_vec(&mut rng, n)
        .into_iter()
        .map(|v| v / n as f64)
        .collect();
    let z = gaussian_vec(&mut rng, n);
    let hidden_labels = noisy_labels(&kernel, &alpha, &z, noise_sigma)?;
    Ok(KernelInstance {
        instance: GeneratedInstance {
            dataset: kernel_ridge_to_ssal(&kernel, lambda)?,
            hidden_labels,
            beta: alpha,
        },
        kernel,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundSpec {
    pub d: usize,
    pub n_copies: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub rng_seed: u64,
}

impl LowerBoundSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_copies == 0 {
            return Err(Error::InvalidInput("d and n_copies must be positive".into()));
        }
        check_packing_params(self.epsilon, self.lambda)
    }

    /// The limiting optimum `d (lambda (1 + lambda) + (1 + lambda) / epsilon)`.
    pub fn limit_opt(&self) -> f64 {
        let l = self.lambda;
        self.d as f64 * (l * (1.0 + l) + (1.0 + l) / self.epsilon)
    }
}

fn check_packing_params(epsilon: f64, lambda: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 0.01) {
        return Err(Error::InvalidInput(format!(
            "epsilon must lie in (0, 1/100], got {epsilon}"
        )));
    }
    if !(1.0..=50.0).contains(&lambda) {
        return Err(Error::InvalidInput(format!("lambda must lie in [1, 50], got {lambda}")));
    }
    Ok(())
}

/// `n_copies` copies of each `e_i / sqrt(n_copies)` as the unlabeled block,
/// ridge-reduced with parameter `lambda`. Coordinates of the hidden model are
/// `±(1 + lambda)`; each copy of `e_i` carries the label
/// `(beta_i + z) / sqrt(n_copies)` with `z ~ N(0, (1 + lambda) / epsilon)`.
pub fn gen_lower_bound_instance(spec: &LowerBoundSpec) -> Result<GeneratedInstance> {
    spec.validate()?;
    let (d, n) = (spec.d, spec.n_copies);
    let mut rng = seeded_rng(spec.rng_seed);
    let beta: Vec<f64> = (0..d)
        .map(|_| if rng.random::<bool>() { 1.0 + spec.lambda } else { -(1.0 + spec.lambda) })
        .collect();
    let noise = Normal::new(0.0, ((1.0 + spec.lambda) / spec.epsilon).sqrt())
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let root_n = (n as f64).sqrt();
    let mut x1 = nalgebra::DMatrix::<f64>::zeros(n * d, d);
    let mut hidden_labels = Vec::with_capacity(n * d);
    for (i, b) in beta.iter().enumerate() {
        for c in 0..n {
            x1[(i * n + c, i)] = 1.0 / root_n;
            hidden_labels.push((b + noise.sample(&mut rng)) / root_n);
        }
    }
    Ok(GeneratedInstance {
        dataset: ridge_to_ssal(&Matrix::from_dmatrix(x1)?, spec.lambda)?,
        hidden_labels,
        beta,
    })
}

/// Largest dimension for which the sign hypercube is enumerated.
pub const MAX_PACKING_DIM: usize = 20;

/// A greedy packing of `{±1}^d` under `||X b - X b'||^2 = 4 * hamming(b, b')`,
/// the distance induced by the basis-copy design.
#[derive(Debug, Clone, PartialEq)]
pub struct PackingSet {
    pub d: usize,
    /// Members as bit masks; bit `d - 1 - k` set means coordinate `k` is `+1`.
    pub members: Vec<u32>,
    /// Squared-distance threshold: members are strictly farther apart than this.
    pub separation: f64,
}

impl PackingSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn sign_vector(&self, mask: u32) -> Vec<i8> {
        mask_to_signs(mask, self.d)
    }

    pub fn sign_vectors(&self) -> impl Iterator<Item = Vec<i8>> + '_ {
        self.members.iter().map(|&m| mask_to_signs(m, self.d))
    }

    /// The cardinality guarantee `2^((1 - 0.011 (1 + lambda)) d - 1)`.
    pub fn cardinality_bound(d: usize, lambda: f64) -> f64 {
        2f64.powf((1.0 - 0.011 * (1.0 + lambda)) * d as f64 - 1.0)
    }
}

pub fn mask_to_signs(mask: u32, d: usize) -> Vec<i8> {
    (0..d)
        .map(|k| if mask >> (d - 1 - k) & 1 == 1 { 1 } else { -1 })
        .collect()
}

pub fn signs_to_mask(signs: &[i8]) -> Result<u32> {
    if signs.len() > MAX_PACKING_DIM {
        return Err(Error::ResourceLimit(format!(
            "sign vectors longer than {MAX_PACKING_DIM} are not supported"
        )));
    }
    signs.iter().try_fold(0u32, |acc, &s| match s {
        1 => Ok(acc << 1 | 1),
        -1 => Ok(acc << 1),
        other => Err(Error::InvalidInput(format!("sign entry {other}"))),
    })
}

/// `||X b - X b'||^2` for the basis-copy design: four times the Hamming distance.
pub fn packing_distance(a: u32, b: u32) -> f64 {
    4.0 * (a ^ b).count_ones() as f64
}

pub fn packing_threshold(d: usize, epsilon: f64, lambda: f64) -> f64 {
    0.002 * d as f64 * (epsilon * lambda * (1.0 + lambda) + 1.0 + lambda)
}

/// Flip masks of Hamming weight at most `radius` in dimension `d`.
fn ball_masks(d: usize, radius: usize) -> Vec<u32> {
    fn extend(start: usize, d: usize, left: usize, mask: u32, out: &mut Vec<u32>) {
        out.push(mask);
        if left == 0 {
            return;
        }
        for bit in start..d {
            extend(bit + 1, d, left - 1, mask | 1 << bit, out);
        }
    }
    let mut out = Vec::new();
    extend(0, d, radius.min(d), 0, &mut out);
    out
}

/// Greedy maximal packing over `{±1}^d` in lexicographic order (`-1 < +1`,
/// first coordinate most significant). Checks both packing guarantees.
pub fn construct_packing(d: usize, epsilon: f64, lambda: f64) -> Result<PackingSet> {
    if d == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    if d > MAX_PACKING_DIM {
        return Err(Error::ResourceLimit(format!(
            "hypercube enumeration limited to d <= {MAX_PACKING_DIM}, got {d}"
        )));
    }
    check_packing_params(epsilon, lambda)?;
    let threshold = packing_threshold(d, epsilon, lambda);
    // 4h <= threshold  <=>  h <= floor(threshold / 4)
    let radius = (threshold / 4.0).floor() as usize;
    let ball = ball_masks(d, radius);
    let total = 1usize << d;
    let mut alive = vec![true; total];
    let mut members = Vec::new();
    for mask in 0..total {
        if !alive[mask] {
            continue;
        }
        members.push(mask as u32);
        for &flip in &ball {
            alive[mask ^ flip as usize] = false;
        }
    }
    let packing = PackingSet {
        d,
        members,
        separation: threshold,
    };
    let bound = PackingSet::cardinality_bound(d, lambda);
    if (packing.len() as f64) < bound {
        return Err(Error::InvariantViolated(format!(
            "packing has {} members, guarantee is {bound}",
            packing.len()
        )));
    }
    let mut member = vec![false; total];
    packing.members.iter().for_each(|&m| member[m as usize] = true);
    for &m in &packing.members {
        for &flip in ball.iter().filter(|&&f| f != 0) {
            if member[(m ^ flip) as usize] {
                return Err(Error::InvariantViolated(format!(
                    "members {m:#b} and {:#b} are within the threshold",
                    m ^ flip
                )));
            }
        }
    }
    Ok(packing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{reduced_rank, statistical_dimension, DEFAULT_RANK_TOL};
    use crate::regression::exact_solution;

    #[test]
    fn random_instance_is_deterministic_and_realizable() {
        let a = gen_random_instance(30, 10, 4, 0.0, 7).unwrap();
        let b = gen_random_instance(30, 10, 4, 0.0, 7).unwrap();
        assert_eq!(a, b);
        let (_, opt) = exact_solution(&a.dataset, &a.full_labels()).unwrap();
        assert!(opt < 1e-20);
        assert_ne!(a, gen_random_instance(30, 10, 4, 0.0, 8).unwrap());
    }

    #[test]
    fn random_instance_reduced_rank_strictly_inside() {
        let inst = gen_random_instance(500, 100, 5, 1.0, 3).unwrap();
        let r = reduced_rank(&inst.dataset, DEFAULT_RANK_TOL).unwrap();
        assert!(r > 0.0 && r < 5.0);
    }

    #[test]
    fn zero_shift_matches_random_instance() {
        let a = gen_random_instance(20, 15, 3, 0.5, 11).unwrap();
        let b = gen_biased_instance(20, 15, 3, &[0.0; 3], 0.5, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn biased_rows_cluster_near_shift() {
        let shift = [4.0, -3.0];
        let inst = gen_biased_instance(50, 40, 2, &shift, 0.1, 2).unwrap();
        let x2 = inst.dataset.x_labeled();
        for i in 0..x2.rows() {
            let dist = ((x2[(i, 0)] - 4.0).powi(2) + (x2[(i, 1)] + 3.0).powi(2)).sqrt();
            assert!(dist < 0.5);
        }
    }

    #[test]
    fn lower_bound_instance_structure() {
        let spec = LowerBoundSpec {
            d: 3,
            n_copies: 50,
            epsilon: 0.01,
            lambda: 2.0,
            rng_seed: 5,
        };
        let inst = gen_lower_bound_instance(&spec).unwrap();
        assert_eq!(inst.dataset.n_unlabeled(), 150);
        assert!(inst.beta.iter().all(|b| b.abs() == 3.0));
        let sigma = vec![1.0; 3];
        let sd = statistical_dimension(&sigma, 2.0).unwrap();
        assert!((sd - 1.0).abs() < 1e-12);
        let r = reduced_rank(&inst.dataset, DEFAULT_RANK_TOL).unwrap();
        assert!((r - 1.0).abs() < 1e-10);
        // Ridge optimum: (beta + mean noise) / (1 + lambda) per coordinate.
        let (beta_star, _) = exact_solution(&inst.dataset, &inst.full_labels()).unwrap();
        for (b, block) in beta_star.iter().zip(inst.hidden_labels.chunks(50)) {
            let expect = block.iter().sum::<f64>() / 50f64.sqrt() / 3.0;
            assert!((b - expect).abs() < 1e-10);
        }
    }

    #[test]
    fn lower_bound_spec_ranges() {
        let mut spec = LowerBoundSpec {
            d: 2,
            n_copies: 2,
            epsilon: 0.02,
            lambda: 2.0,
            rng_seed: 0,
        };
        assert!(gen_lower_bound_instance(&spec).is_err());
        spec.epsilon = 0.01;
        spec.lambda = 0.5;
        assert!(gen_lower_bound_instance(&spec).is_err());
    }

    #[test]
    fn sign_mask_round_trip() {
        let s = vec![1, -1, 1, 1];
        let m = signs_to_mask(&s).unwrap();
        assert_eq!(m, 0b1011);
        assert_eq!(mask_to_signs(m, 4), s);
        assert!(signs_to_mask(&[1, 0]).is_err());
    }

    #[test]
    fn ball_enumeration_sizes() {
        assert_eq!(ball_masks(5, 0), vec![0]);
        assert_eq!(ball_masks(5, 1).len(), 6);
        assert_eq!(ball_masks(5, 2).len(), 16);
        assert_eq!(ball_masks(3, 7).len(), 8);
    }

    #[test]
    fn packing_dimension_one() {
        let p = construct_packing(1, 0.01, 1.0).unwrap();
        // Threshold 0.00404 is below the only nonzero distance 4.
        assert_eq!(p.len(), 2);
        assert_eq!(p.sign_vectors().collect::<Vec<_>>(), vec![vec![-1], vec![1]]);
    }

    #[test]
    fn packing_rejects_large_dimension() {
        assert!(matches!(
            construct_packing(21, 0.01, 1.0),
            Err(Error::ResourceLimit(_))
        ));
    }
}
