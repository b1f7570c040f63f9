//! Synthetic multi-subspace benchmark: a chain of rotated orthonormal
//! bases, i.i.d. Gaussian loadings and optional dense Gaussian corruption.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::Mat;

/// Shape and seed of one generated benchmark.
///
/// Defaults give ten 10-dimensional subspaces of R^200 with 9 samples
/// each, so the data matrix is 200 x 90.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub num_subspaces: usize,
    pub ambient_dim: usize,
    pub basis_dim: usize,
    pub samples_per_subspace: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_subspaces: 10,
            ambient_dim: 200,
            basis_dim: 10,
            samples_per_subspace: 9,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("num_subspaces", self.num_subspaces),
            ("ambient_dim", self.ambient_dim),
            ("basis_dim", self.basis_dim),
            ("samples_per_subspace", self.samples_per_subspace),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.basis_dim > self.ambient_dim {
            return Err(Error::invalid(format!(
                "basis_dim = {} exceeds ambient_dim = {}",
                self.basis_dim, self.ambient_dim
            )));
        }
        Ok(())
    }
}

// All draws go through this column-major fill so the stream layout is
// pinned independently of any matrix-constructor implementation detail.
fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    let mut m = Mat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

// Thin QR orthonormalization with the R-diagonal sign convention, making
// the factor a deterministic function of the input.
fn orthonormalize(a: Mat) -> Mat {
    let qr = a.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub(crate) struct SubspaceChain {
    pub bases: Vec<Mat>,
    #[allow(dead_code)] // observed by the orthogonality tests
    pub rotation: Mat,
}

pub(crate) fn subspace_chain(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> SubspaceChain {
    let d = spec.ambient_dim;
    let mut rotation = orthonormalize(standard_normal_matrix(d, d, rng));
    if rotation.determinant() < 0.0 {
        rotation.column_mut(d - 1).neg_mut();
    }
    let first = orthonormalize(standard_normal_matrix(d, spec.basis_dim, rng));
    let mut bases = Vec::with_capacity(spec.num_subspaces);
    bases.push(first);
    for i in 1..spec.num_subspaces {
        let next = &rotation * &bases[i - 1];
        bases.push(next);
    }
    SubspaceChain { bases, rotation }
}

/// Draws the benchmark: subspace `i+1` is the random rotation of subspace
/// `i`, and every sample is a standard-normal combination of its basis
/// columns. Labels record the generating subspace. The output is a pure
/// function of the spec (ChaCha8 stream seeded by `spec.seed`).
pub fn generate_subspace_data(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let chain = subspace_chain(spec, &mut rng);

    let per = spec.samples_per_subspace;
    let total = spec.num_subspaces * per;
    let mut x = Mat::zeros(spec.ambient_dim, total);
    let mut labels = Vec::with_capacity(total);
    for (i, basis) in chain.bases.iter().enumerate() {
        let loadings = standard_normal_matrix(spec.basis_dim, per, &mut rng);
        x.view_mut((0, i * per), (spec.ambient_dim, per))
            .copy_from(&(basis * loadings));
        labels.extend(std::iter::repeat(i).take(per));
    }
    Dataset::new(x, Some(labels))
}

/// Adds i.i.d. zero-mean Gaussian noise of the given variance to every
/// entry; deterministic per seed, and the zero-variance call returns the
/// input bit-for-bit.
pub fn add_gaussian_noise(x: &Mat, variance: f64, seed: u64) -> Result<Mat> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(Error::invalid(format!(
            "noise variance must be finite and nonnegative, got {variance}"
        )));
    }
    if variance == 0.0 {
        return Ok(x.clone());
    }
    let normal = Normal::new(0.0, variance.sqrt())
        .map_err(|e| Error::invalid(format!("bad noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = x.clone();
    for j in 0..out.ncols() {
        for i in 0..out.nrows() {
            out[(i, j)] += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            num_subspaces: 4,
            ambient_dim: 30,
            basis_dim: 5,
            samples_per_subspace: 6,
            seed,
        }
    }

    #[test]
    fn default_shape_and_labels() {
        let data = generate_subspace_data(&SyntheticSpec::default()).unwrap();
        assert_eq!(data.x().shape(), (200, 90));
        let labels = data.labels().unwrap();
        assert_eq!(labels.len(), 90);
        for (j, &l) in labels.iter().enumerate() {
            assert_eq!(l, j / 9);
        }
        assert_eq!(data.num_classes(), Some(10));
    }

    #[test]
    fn bases_stay_orthonormal_down_the_chain() {
        let spec = small_spec(5);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let chain = subspace_chain(&spec, &mut rng);
        for (i, h) in chain.bases.iter().enumerate() {
            let gram = h.transpose() * h;
            let dev = (&gram - Mat::identity(5, 5)).amax();
            assert!(dev <= 1e-10, "basis {i} gram deviates by {dev}");
        }
    }

    #[test]
    fn rotation_is_special_orthogonal() {
        let spec = small_spec(9);
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let g = subspace_chain(&spec, &mut rng).rotation;
        let dev = (g.transpose() * &g - Mat::identity(30, 30)).amax();
        assert!(dev <= 1e-10, "G^T G deviates by {dev}");
        assert!((g.determinant() - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn samples_lie_in_their_subspace() {
        let spec = small_spec(13);
        let data = generate_subspace_data(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let chain = subspace_chain(&spec, &mut rng);
        for i in 0..spec.num_subspaces {
            let block = data
                .x()
                .view((0, i * spec.samples_per_subspace), (30, spec.samples_per_subspace))
                .into_owned();
            let h = &chain.bases[i];
            let residual = (&block - h * (h.transpose() * &block)).norm();
            assert!(residual <= 1e-8, "subspace {i} residual {residual}");
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = generate_subspace_data(&small_spec(77)).unwrap();
        let b = generate_subspace_data(&small_spec(77)).unwrap();
        assert_eq!(a.x(), b.x());
        let c = generate_subspace_data(&small_spec(78)).unwrap();
        assert_ne!(a.x(), c.x());
    }

    #[test]
    fn rejects_basis_wider_than_ambient() {
        let mut spec = small_spec(1);
        spec.basis_dim = 31;
        assert!(generate_subspace_data(&spec).is_err());
    }

    #[test]
    fn noise_variance_zero_is_identity() {
        let x = generate_subspace_data(&small_spec(3)).unwrap().x().clone();
        assert_eq!(add_gaussian_noise(&x, 0.0, 99).unwrap(), x);
        assert!(add_gaussian_noise(&x, -1.0, 99).is_err());
    }

    #[test]
    fn noise_hits_the_requested_variance() {
        let x = Mat::zeros(100, 200);
        let noisy = add_gaussian_noise(&x, 500.0, 2024).unwrap();
        let n = (100 * 200) as f64;
        let mean = noisy.sum() / n;
        let var = noisy.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        assert!(
            (var - 500.0).abs() <= 0.05 * 500.0,
            "sample variance {var} misses the 500 target"
        );
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let x = Mat::zeros(10, 10);
        let a = add_gaussian_noise(&x, 2.0, 5).unwrap();
        let b = add_gaussian_noise(&x, 2.0, 5).unwrap();
        let c = add_gaussian_noise(&x, 2.0, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
