//! Shared helpers for the acceptance suite.
//!
//! The centerpiece is [`GaussianVineReference`]: for a vine whose every edge
//! carries a Gaussian or independence copula, the joint law of the normal
//! scores is exactly multivariate normal, and each edge parameter is the
//! partial correlation of its conditioned pair given its conditioning set.
//! The reference recovers that correlation matrix and then *proves* it
//! against the structure by pure linear algebra — every edge's partial
//! correlation is recomputed from inverted submatrices and compared to the
//! edge parameter — so densities and conditionals derived from it do not
//! lean on the library's own evaluation routines.

use copar_core::copar::CoparModel;
use copar_core::pair_copulas::{Family, PairCopula};
use copar_core::special::norm_quantile;
use copar_core::vine::RVineMatrix;
use nalgebra::{DMatrix, DVector};

/// Relative closeness: `|a - b| <= tol * max(1, |a|, |b|)`.
pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Evenly spaced interior grid: `n` points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// The exact multivariate normal described by an all-Gaussian vine, on the
/// normal-score scale. `sigma` is a correlation matrix (unit diagonal).
pub struct GaussianVineReference {
    pub sigma: DMatrix<f64>,
    precision: DMatrix<f64>,
    log_det_sigma: f64,
}

/// Per-edge Gaussian parameter, with independence read as zero. Panics on any
/// other family: the reference only exists for all-Gaussian vines.
fn edge_rho(cop: &PairCopula) -> f64 {
    match cop.family() {
        Family::Independence => 0.0,
        Family::Gaussian => cop.params()[0],
        other => panic!("the Gaussian reference got a {} edge", other.name()),
    }
}

impl GaussianVineReference {
    /// Builds the reference from a structure matrix whose cells hold Gaussian
    /// or independence copulas.
    ///
    /// On the score scale every Gaussian conditional quantile map is linear,
    /// so running the vine's column recursion with coefficient vectors in
    /// place of numbers expresses each column's fully conditioned residual as
    /// a linear map `z = L x` of the scores. Those residuals are independent
    /// standard normals, hence `Cov(x) = (L' L)^{-1}`. The construction is
    /// then validated edge by edge: the partial correlation of each
    /// conditioned pair given its conditioning set, computed from inverted
    /// submatrices of the result, must equal the edge parameter.
    pub fn from_matrix(mat: &RVineMatrix) -> GaussianVineReference {
        let d = mat.dim();
        let s = mat.structure();
        // Column-suffix maxima drive the partner lookups.
        let mut maxmat = vec![vec![0usize; d]; d];
        for c in 0..d {
            let mut running = 0;
            for r in (c..d).rev() {
                running = running.max(s[r][c]);
                maxmat[r][c] = running;
            }
        }

        let zero = DVector::zeros(d);
        let mut vdir = vec![vec![zero.clone(); d]; d];
        let mut vind = vec![vec![zero.clone(); d]; d];
        let mut rows: Vec<DVector<f64>> = Vec::with_capacity(d);
        for i in (0..d).rev() {
            let g = s[i][i];
            let mut direct = DVector::zeros(d);
            direct[g - 1] = 1.0;
            for r in (i + 1..d).rev() {
                let b = s[r][i];
                let partner: DVector<f64> = if r == d - 1 {
                    let mut e = DVector::zeros(d);
                    e[b - 1] = 1.0;
                    e
                } else {
                    let mt = maxmat[r][i];
                    let j = d - mt;
                    if mt == b {
                        vdir[r + 1][j].clone()
                    } else {
                        vind[r + 1][j].clone()
                    }
                };
                let rho = edge_rho(mat.copula(r, i));
                let scale = (1.0 - rho * rho).sqrt();
                let hdir = (&direct - &partner * rho) / scale;
                let hind = (&partner - &direct * rho) / scale;
                vdir[r][i] = hdir.clone();
                vind[r][i] = hind;
                direct = hdir;
            }
            rows.push(direct);
        }

        let l = DMatrix::from_rows(&rows.iter().map(|r| r.transpose()).collect::<Vec<_>>());
        let precision = l.transpose() * &l;
        let chol = precision
            .clone()
            .cholesky()
            .expect("the implied precision matrix must be positive definite");
        let log_det_sigma = -2.0 * chol.l().diagonal().map(f64::ln).sum();
        let sigma = chol.inverse();

        let reference = GaussianVineReference {
            sigma,
            precision,
            log_det_sigma,
        };
        for label in 1..=d {
            let var = reference.sigma[(label - 1, label - 1)];
            assert!(
                (var - 1.0).abs() <= 1e-9,
                "implied variance of variable {label} is {var}, expected 1"
            );
        }
        for c in 0..d {
            for r in c + 1..d {
                let a = s[c][c];
                let b = s[r][c];
                let cond: Vec<usize> = (r + 1..d).map(|q| s[q][c]).collect();
                let expected = edge_rho(mat.copula(r, c));
                let got = reference.partial_correlation(a, b, &cond);
                assert!(
                    (got - expected).abs() <= 1e-9,
                    "edge ({a},{b} | {cond:?}): partial correlation {got} vs parameter {expected}"
                );
            }
        }
        reference
    }

    /// Partial correlation of variables `a` and `b` (1-based labels) given
    /// the variables in `cond`, from the inverted submatrix over
    /// `{a, b} ∪ cond`.
    pub fn partial_correlation(&self, a: usize, b: usize, cond: &[usize]) -> f64 {
        let mut idx = vec![a - 1, b - 1];
        idx.extend(cond.iter().map(|&v| v - 1));
        let n = idx.len();
        let sub = DMatrix::from_fn(n, n, |r, c| self.sigma[(idx[r], idx[c])]);
        let omega = sub
            .try_inverse()
            .expect("submatrix of a positive definite matrix is invertible");
        -omega[(0, 1)] / (omega[(0, 0)] * omega[(1, 1)]).sqrt()
    }

    /// Log-density of the Gaussian copula with this correlation matrix at a
    /// point of the unit hypercube.
    pub fn log_copula_density(&self, u: &[f64]) -> f64 {
        let z = DVector::from_iterator(u.len(), u.iter().map(|&p| norm_quantile(p)));
        let quad = z.dot(&(&self.precision * &z)) - z.dot(&z);
        -0.5 * self.log_det_sigma - 0.5 * quad
    }

    /// Mean and covariance, on the score scale, of the `targets` variables
    /// given observed scores `z_given` for the `given` variables (all
    /// 1-based labels).
    pub fn conditional(
        &self,
        targets: &[usize],
        given: &[usize],
        z_given: &[f64],
    ) -> (DVector<f64>, DMatrix<f64>) {
        let nt = targets.len();
        let ng = given.len();
        let s_tt = DMatrix::from_fn(nt, nt, |r, c| self.sigma[(targets[r] - 1, targets[c] - 1)]);
        let s_tg = DMatrix::from_fn(nt, ng, |r, c| self.sigma[(targets[r] - 1, given[c] - 1)]);
        let s_gg = DMatrix::from_fn(ng, ng, |r, c| self.sigma[(given[r] - 1, given[c] - 1)]);
        let z = DVector::from_column_slice(z_given);
        let chol = s_gg
            .cholesky()
            .expect("conditioning block must be positive definite");
        let mean = &s_tg * chol.solve(&z);
        let cov = &s_tt - &s_tg * chol.solve(&s_tg.transpose());
        (mean, cov)
    }
}

/// A two-series model document with standard-normal margins and the given
/// blocks: `Some(tau)` becomes a Gaussian block with `rho = sin(pi tau / 2)`,
/// `None` an independence block.
pub fn two_series_model(k: usize, blocks: &[(&str, Option<f64>)]) -> CoparModel {
    let mut text = format!("copar-model\nm 2\nk {k}\nmargins\n1 norm 0 1\n2 norm 0 1\nblocks\n");
    for (label, tau) in blocks {
        match tau {
            Some(t) => {
                let rho = (std::f64::consts::PI * t / 2.0).sin();
                text.push_str(&format!("{label} gaussian {rho}\n"));
            }
            None => text.push_str(&format!("{label} independence\n")),
        }
    }
    text.push_str("end\n");
    let (model, _) =
        CoparModel::from_text(&text).expect("the generated model document is well formed");
    model
}
