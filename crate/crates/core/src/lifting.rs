//! Basis-function liftings and closed-form Koopman operator fits.
//!
//! A state `x` is lifted through a dictionary of basis terms into a vector
//! `psi(x)` whose leading block is the state itself, so that one linear
//! operator advances the lifted vector and the state stays readable.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One entry of the lifting dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisTerm {
    /// The raw state channel `x[i]`.
    Identity { i: usize },
    /// Pairwise product `x[i] * x[j]`.
    Product { i: usize, j: usize },
    /// Cubic monomial `x[i]^3`.
    Cube { i: usize },
    /// `sin(omega * x[i])`.
    Sin { i: usize, omega: f64 },
    /// `cos(omega * x[i])`.
    Cos { i: usize, omega: f64 },
    /// Constant 1.
    Constant,
}

impl BasisTerm {
    fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            BasisTerm::Identity { i } => x[i],
            BasisTerm::Product { i, j } => x[i] * x[j],
            BasisTerm::Cube { i } => x[i].powi(3),
            BasisTerm::Sin { i, omega } => (omega * x[i]).sin(),
            BasisTerm::Cos { i, omega } => (omega * x[i]).cos(),
            BasisTerm::Constant => 1.0,
        }
    }

    fn max_index(&self) -> Option<usize> {
        match *self {
            BasisTerm::Identity { i } | BasisTerm::Cube { i } => Some(i),
            BasisTerm::Product { i, j } => Some(i.max(j)),
            BasisTerm::Sin { i, .. } | BasisTerm::Cos { i, .. } => Some(i),
            BasisTerm::Constant => None,
        }
    }
}

/// Declarative description of the lifting dictionary.
///
/// The first `state_dim` terms are always the identity channels so the
/// original state is recoverable as the leading block of any lifted vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    state_dim: usize,
    terms: Vec<BasisTerm>,
}

impl BasisSpec {
    /// Builds a spec from the full ordered term list, validating invariants.
    pub fn new(state_dim: usize, terms: Vec<BasisTerm>) -> Result<Self> {
        if state_dim == 0 {
            return Err(Error::Parameter("state_dim must be positive".into()));
        }
        if terms.len() < state_dim {
            return Err(Error::Parameter(format!(
                "basis needs at least {state_dim} terms, got {}",
                terms.len()
            )));
        }
        for (k, term) in terms.iter().take(state_dim).enumerate() {
            if *term != (BasisTerm::Identity { i: k }) {
                return Err(Error::Parameter(format!(
                    "term {k} must be identity({k}) so the state block is recoverable"
                )));
            }
        }
        for term in &terms {
            if let Some(i) = term.max_index() {
                if i >= state_dim {
                    return Err(Error::Parameter(format!(
                        "basis term {term:?} indexes past state_dim {state_dim}"
                    )));
                }
            }
        }
        for (a, term) in terms.iter().enumerate() {
            if terms[..a].contains(term) {
                return Err(Error::Parameter(format!("duplicate basis term {term:?}")));
            }
        }
        Ok(Self { state_dim, terms })
    }

    /// Identity-only basis (purely linear model of the raw channels).
    pub fn identity(state_dim: usize) -> Self {
        let terms = (0..state_dim).map(|i| BasisTerm::Identity { i }).collect();
        Self::new(state_dim, terms).expect("identity basis is always valid")
    }

    /// Identity channels plus extra terms, in order.
    pub fn with_terms(state_dim: usize, extra: impl IntoIterator<Item = BasisTerm>) -> Result<Self> {
        let mut terms: Vec<BasisTerm> = (0..state_dim).map(|i| BasisTerm::Identity { i }).collect();
        terms.extend(extra);
        Self::new(state_dim, terms)
    }

    /// Identities, constant, and all pairwise products (i <= j).
    pub fn quadratic(state_dim: usize) -> Self {
        let mut extra = vec![BasisTerm::Constant];
        for i in 0..state_dim {
            for j in i..state_dim {
                extra.push(BasisTerm::Product { i, j });
            }
        }
        Self::with_terms(state_dim, extra).expect("quadratic basis is always valid")
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Lifted dimension N.
    pub fn lifted_dim(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[BasisTerm] {
        &self.terms
    }

    /// Evaluates the lifting at `x`.
    pub fn lift(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.state_dim {
            return Err(Error::RejectedInput(format!(
                "state has {} channels, basis expects {}",
                x.len(),
                self.state_dim
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::RejectedInput("non-finite state".into()));
        }
        Ok(DVector::from_iterator(
            self.terms.len(),
            self.terms.iter().map(|t| t.eval(x)),
        ))
    }

    /// Lift without the finiteness/dimension checks; used in hot loops after
    /// the caller has validated dimensions once.
    pub(crate) fn lift_unchecked(&self, x: &[f64], out: &mut DVector<f64>) {
        for (k, t) in self.terms.iter().enumerate() {
            out[k] = t.eval(x);
        }
    }
}

/// Evaluates the lifting of `x` under `basis`.
pub fn lift(x: &[f64], basis: &BasisSpec) -> Result<DVector<f64>> {
    basis.lift(x)
}

/// Time-shifted snapshot pairs (x_k, x_{k+1}) extracted from trajectories.
#[derive(Debug, Clone)]
pub struct SnapshotPairs {
    xs: Vec<Vec<f64>>,
    ys: Vec<Vec<f64>>,
    state_dim: usize,
}

impl SnapshotPairs {
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<Vec<f64>>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::RejectedInput(format!(
                "need equal nonzero pair counts, got {} and {}",
                xs.len(),
                ys.len()
            )));
        }
        let state_dim = xs[0].len();
        for v in xs.iter().chain(ys.iter()) {
            if v.len() != state_dim {
                return Err(Error::RejectedInput("inconsistent state dimension".into()));
            }
            if v.iter().any(|c| !c.is_finite()) {
                return Err(Error::RejectedInput("non-finite snapshot value".into()));
            }
        }
        Ok(Self { xs, ys, state_dim })
    }

    /// Consecutive pairs from a single time-ordered sequence of states.
    pub fn from_sequence(states: &[Vec<f64>]) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::RejectedInput("need at least two samples".into()));
        }
        Self::new(states[..states.len() - 1].to_vec(), states[1..].to_vec())
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.xs
            .iter()
            .zip(self.ys.iter())
            .map(|(a, b)| (a.as_slice(), b.as_slice()))
    }
}

/// Finite Koopman operator over a basis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KoopmanModel {
    pub k: DMatrix<f64>,
    pub basis: BasisSpec,
    pub ridge: f64,
}

impl KoopmanModel {
    pub fn lifted_dim(&self) -> usize {
        self.basis.lifted_dim()
    }
}

/// Accumulates the normal-equation matrices
/// G = (1/P) sum psi(x_k) psi(x_k)^T and A = (1/P) sum psi(x_{k+1}) psi(x_k)^T,
/// where P is the number of pairs. The normalization cancels in A * G^+.
pub fn gram_matrices(pairs: &SnapshotPairs, basis: &BasisSpec) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if pairs.state_dim() != basis.state_dim() {
        return Err(Error::RejectedInput(format!(
            "pairs have state_dim {}, basis expects {}",
            pairs.state_dim(),
            basis.state_dim()
        )));
    }
    let n = basis.lifted_dim();
    let mut g = DMatrix::zeros(n, n);
    let mut a = DMatrix::zeros(n, n);
    let mut zx = DVector::zeros(n);
    let mut zy = DVector::zeros(n);
    for (x, y) in pairs.iter() {
        basis.lift_unchecked(x, &mut zx);
        basis.lift_unchecked(y, &mut zy);
        g.ger(1.0, &zx, &zx, 1.0);
        a.ger(1.0, &zy, &zx, 1.0);
    }
    let scale = 1.0 / pairs.len() as f64;
    g *= scale;
    a *= scale;
    Ok((g, a))
}

/// Pseudoinverse of a symmetric PSD matrix through its eigendecomposition,
/// dropping eigenvalues below `cutoff_ratio` times the largest.
pub fn pinv_psd(g: &DMatrix<f64>, cutoff_ratio: f64) -> DMatrix<f64> {
    let eig = g.clone().symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = cutoff_ratio * max_ev;
    let n = g.nrows();
    let mut inv_diag = DMatrix::zeros(n, n);
    for (i, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev > cutoff && ev > 0.0 {
            inv_diag[(i, i)] = 1.0 / ev;
        }
    }
    &eig.eigenvectors * inv_diag * eig.eigenvectors.transpose()
}

const PINV_CUTOFF: f64 = 1e-10;

/// Fits the operator minimizing sum ||psi(y_k) - K psi(x_k)||^2.
///
/// With `ridge > 0` solves K = A (G + ridge I)^-1; with `ridge == 0` uses the
/// PSD pseudoinverse K = A G^+.
pub fn fit_koopman(pairs: &SnapshotPairs, basis: &BasisSpec, ridge: f64) -> Result<KoopmanModel> {
    if ridge < 0.0 {
        return Err(Error::Parameter("ridge must be nonnegative".into()));
    }
    let (mut g, a) = gram_matrices(pairs, basis)?;
    let n = basis.lifted_dim();
    let k = if ridge > 0.0 {
        for i in 0..n {
            g[(i, i)] += ridge;
        }
        match g.clone().cholesky() {
            // (G + rI) K^T = A^T since G is symmetric
            Some(chol) => chol.solve(&a.transpose()).transpose(),
            None => &a * pinv_psd(&g, PINV_CUTOFF),
        }
    } else {
        &a * pinv_psd(&g, PINV_CUTOFF)
    };
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalRank("operator fit produced non-finite entries".into()));
    }
    Ok(KoopmanModel { k, basis: basis.clone(), ridge })
}

/// Multi-step prediction: advances z = K z from z0 = psi(x) and reads the
/// leading state block after each step. With `relift` the state block is
/// re-lifted between steps instead of evolving purely in lifted space.
pub fn predict(model: &KoopmanModel, x: &[f64], steps: usize, relift: bool) -> Result<Vec<Vec<f64>>> {
    if steps == 0 {
        return Err(Error::Parameter("steps must be positive".into()));
    }
    let d = model.basis.state_dim();
    let mut z = model.basis.lift(x)?;
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        z = &model.k * z;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step });
        }
        let state: Vec<f64> = z.as_slice()[..d].to_vec();
        if relift {
            model.basis.lift_unchecked(&state, &mut z);
        }
        out.push(state);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn basis_1d() -> BasisSpec {
        BasisSpec::identity(1)
    }

    #[test]
    fn lift_evaluates_terms_in_order() {
        let basis = BasisSpec::with_terms(
            2,
            [BasisTerm::Product { i: 0, j: 0 }, BasisTerm::Product { i: 1, j: 1 }],
        )
        .unwrap();
        let z = lift(&[1.0, 2.0], &basis).unwrap();
        assert_eq!(z.as_slice(), &[1.0, 2.0, 1.0, 4.0]);
    }

    #[test]
    fn lift_zero_state_polynomial_basis_is_zero() {
        let basis = BasisSpec::with_terms(
            2,
            [BasisTerm::Product { i: 0, j: 1 }, BasisTerm::Cube { i: 0 }],
        )
        .unwrap();
        let z = lift(&[0.0, 0.0], &basis).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lift_trig_term() {
        let basis = BasisSpec::with_terms(1, [BasisTerm::Sin { i: 0, omega: 1.0 }]).unwrap();
        let z = lift(&[std::f64::consts::FRAC_PI_2], &basis).unwrap();
        assert_relative_eq!(z[0], std::f64::consts::FRAC_PI_2);
        assert_relative_eq!(z[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lift_rejects_dimension_mismatch() {
        let basis = BasisSpec::identity(2);
        assert!(matches!(lift(&[1.0], &basis), Err(Error::RejectedInput(_))));
    }

    #[test]
    fn basis_requires_identity_prefix() {
        let terms = vec![BasisTerm::Constant, BasisTerm::Identity { i: 0 }];
        assert!(BasisSpec::new(1, terms).is_err());
    }

    #[test]
    fn basis_rejects_duplicates() {
        let res = BasisSpec::with_terms(1, [BasisTerm::Constant, BasisTerm::Constant]);
        assert!(res.is_err());
    }

    #[test]
    fn gram_single_pair() {
        let pairs = SnapshotPairs::new(vec![vec![1.0]], vec![vec![2.0]]).unwrap();
        let (g, a) = gram_matrices(&pairs, &basis_1d()).unwrap();
        assert_relative_eq!(g[(0, 0)], 1.0);
        assert_relative_eq!(a[(0, 0)], 2.0);
    }

    #[test]
    fn gram_identical_states_gives_a_equal_g() {
        let xs = vec![vec![1.5, -2.0]; 7];
        let pairs = SnapshotPairs::new(xs.clone(), xs).unwrap();
        let basis = BasisSpec::quadratic(2);
        let (g, a) = gram_matrices(&pairs, &basis).unwrap();
        assert_relative_eq!(g, a, epsilon = 1e-12);
    }

    #[test]
    fn gram_matches_bruteforce_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let basis = BasisSpec::quadratic(3);
        let n = basis.lifted_dim();
        let xs: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let ys: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let pairs = SnapshotPairs::new(xs.clone(), ys.clone()).unwrap();
        let (g, a) = gram_matrices(&pairs, &basis).unwrap();

        // independent double-loop summation
        let mut g_ref = DMatrix::zeros(n, n);
        let mut a_ref = DMatrix::zeros(n, n);
        for (x, y) in xs.iter().zip(ys.iter()) {
            let zx = basis.lift(x).unwrap();
            let zy = basis.lift(y).unwrap();
            for r in 0..n {
                for c in 0..n {
                    g_ref[(r, c)] += zx[r] * zx[c] / 50.0;
                    a_ref[(r, c)] += zy[r] * zx[c] / 50.0;
                }
            }
        }
        assert_relative_eq!(g, g_ref, epsilon = 1e-12);
        assert_relative_eq!(a, a_ref, epsilon = 1e-12);
    }

    #[test]
    fn fit_scalar_decay() {
        let xs: Vec<Vec<f64>> = (0..20).map(|k| vec![1.0 + k as f64 * 0.1]).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![0.5 * x[0]]).collect();
        let pairs = SnapshotPairs::new(xs, ys).unwrap();
        let model = fit_koopman(&pairs, &basis_1d(), 0.0).unwrap();
        assert_relative_eq!(model.k[(0, 0)], 0.5, epsilon = 1e-10);
    }

    #[test]
    fn fit_identity_dynamics_reproduces_training_samples() {
        let xs: Vec<Vec<f64>> = (0..10).map(|k| vec![k as f64, (k as f64).sin()]).collect();
        let pairs = SnapshotPairs::new(xs.clone(), xs.clone()).unwrap();
        let basis = BasisSpec::identity(2);
        let model = fit_koopman(&pairs, &basis, 0.0).unwrap();
        for x in &xs {
            let z = basis.lift(x).unwrap();
            let pred = &model.k * &z;
            assert_relative_eq!(pred, z, epsilon = 1e-8);
        }
    }

    #[test]
    fn fit_recovers_linear_system_against_normal_equations_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        let xs: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..2).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let ys: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| {
                let v = &m * DVector::from_vec(x.clone());
                v.as_slice().to_vec()
            })
            .collect();
        let pairs = SnapshotPairs::new(xs.clone(), ys.clone()).unwrap();
        let basis = BasisSpec::identity(2);
        let model = fit_koopman(&pairs, &basis, 0.0).unwrap();
        assert_relative_eq!(model.k, m, epsilon = 1e-8);

        // independent normal-equations solve
        let (g, a) = gram_matrices(&pairs, &basis).unwrap();
        let k_oracle = g
            .clone()
            .lu()
            .solve(&a.transpose())
            .expect("G invertible")
            .transpose();
        assert_relative_eq!(model.k, k_oracle, epsilon = 1e-8);
    }

    #[test]
    fn predict_identity_operator_repeats_state() {
        let basis = BasisSpec::identity(2);
        let model = KoopmanModel { k: DMatrix::identity(2, 2), basis, ridge: 0.0 };
        let states = predict(&model, &[3.0, -1.0], 5, false).unwrap();
        assert_eq!(states.len(), 5);
        for s in states {
            assert_eq!(s, vec![3.0, -1.0]);
        }
    }

    #[test]
    fn predict_geometric_decay() {
        let model = KoopmanModel {
            k: DMatrix::from_element(1, 1, 0.5),
            basis: basis_1d(),
            ridge: 0.0,
        };
        let states = predict(&model, &[8.0], 3, false).unwrap();
        assert_eq!(states, vec![vec![4.0], vec![2.0], vec![1.0]]);
    }

    #[test]
    fn predict_rotation_matches_closed_form() {
        let theta: f64 = 0.07;
        let rot = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        let basis = BasisSpec::identity(2);
        // fit from data so the whole path is exercised
        let mut x = vec![1.0, 0.0];
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..200 {
            let next = &rot * DVector::from_vec(x.clone());
            xs.push(x.clone());
            ys.push(next.as_slice().to_vec());
            x = next.as_slice().to_vec();
        }
        let pairs = SnapshotPairs::new(xs, ys).unwrap();
        let model = fit_koopman(&pairs, &basis, 0.0).unwrap();
        let preds = predict(&model, &[1.0, 0.0], 100, false).unwrap();
        for (k, p) in preds.iter().enumerate() {
            let ang = theta * (k + 1) as f64;
            assert_relative_eq!(p[0], ang.cos(), epsilon = 1e-6);
            assert_relative_eq!(p[1], ang.sin(), epsilon = 1e-6);
        }
    }

    #[test]
    fn predict_divergence_reports_step() {
        let model = KoopmanModel {
            k: DMatrix::from_element(1, 1, 1e200),
            basis: basis_1d(),
            ridge: 0.0,
        };
        match predict(&model, &[1e200], 5, false) {
            Err(Error::Divergence { step }) => assert!(step <= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn fitted_operator_beats_random_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let basis = BasisSpec::quadratic(2);
        let n = basis.lifted_dim();
        let xs: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let ys: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| vec![0.9 * x[0] + 0.1 * x[1] * x[1], 0.8 * x[1]])
            .collect();
        let pairs = SnapshotPairs::new(xs, ys).unwrap();
        let model = fit_koopman(&pairs, &basis, 0.0).unwrap();

        let objective = |k: &DMatrix<f64>| -> f64 {
            pairs
                .iter()
                .map(|(x, y)| {
                    let zx = basis.lift(x).unwrap();
                    let zy = basis.lift(y).unwrap();
                    (zy - k * zx).norm_squared()
                })
                .sum()
        };
        let best = objective(&model.k);
        for _ in 0..50 {
            let delta = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let perturbed = &model.k + delta * 1e-3;
            assert!(objective(&perturbed) >= best - 1e-9);
        }
    }

    #[test]
    fn gram_concatenation_is_weighted_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let basis = BasisSpec::identity(2);
        let gen = |rng: &mut ChaCha8Rng, n: usize| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
            let xs: Vec<Vec<f64>> =
                (0..n).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let ys: Vec<Vec<f64>> =
                (0..n).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            (xs, ys)
        };
        let (xs1, ys1) = gen(&mut rng, 10);
        let (xs2, ys2) = gen(&mut rng, 30);
        let p1 = SnapshotPairs::new(xs1.clone(), ys1.clone()).unwrap();
        let p2 = SnapshotPairs::new(xs2.clone(), ys2.clone()).unwrap();
        let both = SnapshotPairs::new(
            xs1.into_iter().chain(xs2).collect(),
            ys1.into_iter().chain(ys2).collect(),
        )
        .unwrap();
        let (g1, a1) = gram_matrices(&p1, &basis).unwrap();
        let (g2, a2) = gram_matrices(&p2, &basis).unwrap();
        let (g, a) = gram_matrices(&both, &basis).unwrap();
        let w1 = 10.0 / 40.0;
        let w2 = 30.0 / 40.0;
        assert_relative_eq!(g, g1 * w1 + g2 * w2, epsilon = 1e-12);
        assert_relative_eq!(a, a1 * w1 + a2 * w2, epsilon = 1e-12);
    }
}
