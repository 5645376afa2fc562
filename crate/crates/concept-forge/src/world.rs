//! Ground-truth generative model: a Gaussian-mixture base distribution over
//! latents, an injective mixing into observation space, and the exact
//! log-densities the rest of the crate treats as oracles.

use crate::concepts::EnvironmentSystem;
use crate::error::{ForgeError, Result};
use crate::linalg::{svd_rank, to_na, RANK_REL_TOL};
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, Normal};

pub const LEAKY_SLOPE: f64 = 0.2;

pub(crate) fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Mixture of axis-aligned Gaussians over the latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmBase {
    weights: Vec<f64>,
    means: Array2<f64>,
    diag_vars: Array2<f64>,
}

impl GmmBase {
    pub fn new(weights: Vec<f64>, means: Array2<f64>, diag_vars: Array2<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 {
            return Err(ForgeError::DegenerateSystem("GMM needs a component".into()));
        }
        if means.dim() != diag_vars.dim() || means.nrows() != k {
            return Err(ForgeError::DimensionMismatch(format!(
                "GMM shapes disagree: {} weights, means {:?}, vars {:?}",
                k,
                means.dim(),
                diag_vars.dim()
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(ForgeError::DegenerateSystem(format!(
                "GMM weights sum to {total}, not 1"
            )));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(ForgeError::DegenerateSystem("negative GMM weight".into()));
        }
        if diag_vars.iter().any(|&v| !(v > 0.0)) {
            return Err(ForgeError::DegenerateSystem(
                "GMM variances must be positive".into(),
            ));
        }
        Ok(Self {
            weights,
            means,
            diag_vars,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn d_z(&self) -> usize {
        self.means.ncols()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn diag_vars(&self) -> &Array2<f64> {
        &self.diag_vars
    }

    /// Mean and variance of the scalar projection `a . z` under the mixture.
    pub fn projection_moments(&self, a: ArrayView1<f64>) -> (f64, f64) {
        let mut mean = 0.0;
        let mut second = 0.0;
        for (c, &w) in self.weights.iter().enumerate() {
            let mu = a.dot(&self.means.row(c));
            let var: f64 = a
                .iter()
                .zip(self.diag_vars.row(c).iter())
                .map(|(&ai, &vi)| ai * ai * vi)
                .sum();
            mean += w * mu;
            second += w * (mu * mu + var);
        }
        (mean, second - mean * mean)
    }
}

/// Ancestral sampling: component from the weights, then the component's
/// axis-aligned Gaussian.
pub fn sample_base(gmm: &GmmBase, rng: &mut impl Rng, n: usize) -> Array2<f64> {
    let d_z = gmm.d_z();
    let mut out = Array2::zeros((n, d_z));
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    for mut row in out.rows_mut() {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut comp = gmm.k() - 1;
        for (k, &w) in gmm.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                comp = k;
                break;
            }
        }
        for j in 0..d_z {
            let eps: f64 = std_normal.sample(rng);
            row[j] = gmm.means[[comp, j]] + eps * gmm.diag_vars[[comp, j]].sqrt();
        }
    }
    out
}

/// Log of the mixture density, evaluated by log-sum-exp over components.
pub fn log_density_base(gmm: &GmmBase, z: ArrayView1<f64>) -> f64 {
    debug_assert_eq!(z.len(), gmm.d_z());
    let mut terms = Vec::with_capacity(gmm.k());
    for k in 0..gmm.k() {
        if gmm.weights[k] == 0.0 {
            continue;
        }
        let mut log_term = gmm.weights[k].ln();
        for j in 0..gmm.d_z() {
            let v = gmm.diag_vars[[k, j]];
            let diff = z[j] - gmm.means[[k, j]];
            log_term += -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + diff * diff / v);
        }
        terms.push(log_term);
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Observation map. Linear mixing must have full column rank; the MLP keeps
/// every width at least d_z so generic weights stay injective.
#[derive(Debug, Clone, PartialEq)]
pub enum MixingFunction {
    Linear {
        w: Array2<f64>,
    },
    Mlp {
        w1: Array2<f64>,
        b1: Array1<f64>,
        w2: Array2<f64>,
        b2: Array1<f64>,
    },
}

impl MixingFunction {
    pub fn linear(w: Array2<f64>) -> Result<Self> {
        let (d_x, d_z) = w.dim();
        if d_x < d_z {
            return Err(ForgeError::DimensionMismatch(format!(
                "linear mixing must not reduce dimension: {d_x} < {d_z}"
            )));
        }
        if svd_rank(&to_na(&w), RANK_REL_TOL) != d_z {
            return Err(ForgeError::RankDeficiency(
                "linear mixing is not full column rank".into(),
            ));
        }
        Ok(MixingFunction::Linear { w })
    }

    pub fn mlp(w1: Array2<f64>, b1: Array1<f64>, w2: Array2<f64>, b2: Array1<f64>) -> Result<Self> {
        let (hidden, d_z) = w1.dim();
        let (d_x, hidden2) = w2.dim();
        if hidden != hidden2 || b1.len() != hidden || b2.len() != d_x {
            return Err(ForgeError::DimensionMismatch(
                "MLP mixing layer shapes disagree".into(),
            ));
        }
        if hidden < d_z || d_x < d_z {
            return Err(ForgeError::DimensionMismatch(format!(
                "MLP mixing widths must stay >= d_z={d_z}: hidden {hidden}, out {d_x}"
            )));
        }
        Ok(MixingFunction::Mlp { w1, b1, w2, b2 })
    }

    pub fn d_z(&self) -> usize {
        match self {
            MixingFunction::Linear { w } => w.ncols(),
            MixingFunction::Mlp { w1, .. } => w1.ncols(),
        }
    }

    pub fn d_x(&self) -> usize {
        match self {
            MixingFunction::Linear { w } => w.nrows(),
            MixingFunction::Mlp { w2, .. } => w2.nrows(),
        }
    }
}

/// Applies the mixing row-wise: N x d_z latents to N x d_x observations.
pub fn mix(f: &MixingFunction, z: &Array2<f64>) -> Result<Array2<f64>> {
    if z.ncols() != f.d_z() {
        return Err(ForgeError::DimensionMismatch(format!(
            "latents have {} columns, mixing expects {}",
            z.ncols(),
            f.d_z()
        )));
    }
    match f {
        MixingFunction::Linear { w } => Ok(z.dot(&w.t())),
        MixingFunction::Mlp { w1, b1, w2, b2 } => {
            let mut hidden = z.dot(&w1.t());
            for mut row in hidden.rows_mut() {
                for (j, h) in row.iter_mut().enumerate() {
                    *h = leaky_relu(*h + b1[j], LEAKY_SLOPE);
                }
            }
            let mut out = hidden.dot(&w2.t());
            for mut row in out.rows_mut() {
                for (j, o) in row.iter_mut().enumerate() {
                    *o += b2[j];
                }
            }
            Ok(out)
        }
    }
}

/// The z-dependent part of ln p^e(z) - ln p(z): the sum over constrained
/// atoms of -M_ei <a_i,z>^2 / 2 + B_ei <a_i,z>. The omitted additive
/// constant depends on the environment only, so consumers work with
/// differences or derivatives.
pub fn log_odds_true(system: &EnvironmentSystem, e: usize, z: ArrayView1<f64>) -> f64 {
    let spec = system.concept(e);
    let inv_var = 1.0 / spec.noise_variance;
    let mut total = 0.0;
    for (k, &i) in spec.atom_indices.iter().enumerate() {
        let t = system.atoms().atom(i).dot(&z);
        total += -0.5 * inv_var * t * t + spec.valuation[k] * inv_var * t;
    }
    total
}

/// ln p(z) plus the log Gaussian filter terms, i.e. the log of the
/// unnormalized concept-conditional density: equals ln p_C(z) + ln N_C.
pub fn unnorm_log_density_concept(
    system: &EnvironmentSystem,
    e: usize,
    gmm: &GmmBase,
    z: ArrayView1<f64>,
) -> f64 {
    let spec = system.concept(e);
    let var = spec.noise_variance;
    let mut total = log_density_base(gmm, z);
    for (k, &i) in spec.atom_indices.iter().enumerate() {
        let resid = system.atoms().atom(i).dot(&z) - spec.valuation[k];
        total += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - resid * resid / (2.0 * var);
    }
    total
}

/// Complete ground-truth world: concept system, base distribution, mixing.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub system: EnvironmentSystem,
    pub gmm: GmmBase,
    pub mixing: MixingFunction,
}

impl World {
    pub fn new(system: EnvironmentSystem, gmm: GmmBase, mixing: MixingFunction) -> Result<Self> {
        if gmm.d_z() != system.d_z() || mixing.d_z() != system.d_z() {
            return Err(ForgeError::DimensionMismatch(format!(
                "latent dimensions disagree: system {}, gmm {}, mixing {}",
                system.d_z(),
                gmm.d_z(),
                mixing.d_z()
            )));
        }
        Ok(Self {
            system,
            gmm,
            mixing,
        })
    }

    pub fn d_x(&self) -> usize {
        self.mixing.d_x()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixingKind {
    Linear,
    Mlp,
}

impl std::fmt::Display for MixingKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MixingKind::Linear => write!(f, "linear"),
            MixingKind::Mlp => write!(f, "nonlinear"),
        }
    }
}

const MLP_MIXING_HIDDEN: usize = 16;

/// Random GMM base with 3 components: weights Uniform(0.3,1) normalized,
/// means Uniform(-1,1), diagonal variances Uniform(0.01, 0.015).
pub fn generate_random_gmm(d_z: usize, rng: &mut impl Rng) -> GmmBase {
    let k = 3;
    let mut weights: Vec<f64> = (0..k).map(|_| 0.3 + 0.7 * rng.random::<f64>()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    // Exact renormalization so the simplex invariant holds to strict tolerance.
    let correction: f64 = weights.iter().sum::<f64>() - 1.0;
    weights[k - 1] -= correction;
    let means = Array2::from_shape_fn((k, d_z), |_| rng.random::<f64>() * 2.0 - 1.0);
    let diag_vars = Array2::from_shape_fn((k, d_z), |_| 0.01 + 0.005 * rng.random::<f64>());
    GmmBase::new(weights, means, diag_vars).expect("construction satisfies invariants")
}

fn uniform_fan_in(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let bound = 1.0 / (cols as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
}

/// Random mixing function of the requested kind. Linear entries are
/// Uniform(-1,1) resampled until well-conditioned; MLP weights and biases
/// are Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) with a hidden width of 16.
pub fn generate_random_mixing(
    d_z: usize,
    d_x: usize,
    kind: MixingKind,
    rng: &mut impl Rng,
) -> Result<MixingFunction> {
    if d_x < d_z {
        return Err(ForgeError::DimensionMismatch(format!(
            "observation dimension {d_x} below latent dimension {d_z}"
        )));
    }
    match kind {
        MixingKind::Linear => {
            for _ in 0..64 {
                let w = Array2::from_shape_fn((d_x, d_z), |_| rng.random::<f64>() * 2.0 - 1.0);
                if let Ok(f) = MixingFunction::linear(w) {
                    return Ok(f);
                }
            }
            Err(ForgeError::RankDeficiency(
                "could not draw a full-rank linear mixing".into(),
            ))
        }
        MixingKind::Mlp => {
            let hidden = MLP_MIXING_HIDDEN.max(d_z);
            let w1 = uniform_fan_in(hidden, d_z, rng);
            let b1 = Array1::from_shape_fn(hidden, |_| {
                (rng.random::<f64>() * 2.0 - 1.0) / (d_z as f64).sqrt()
            });
            let w2 = uniform_fan_in(d_x, hidden, rng);
            let b2 = Array1::from_shape_fn(d_x, |_| {
                (rng.random::<f64>() * 2.0 - 1.0) / (hidden as f64).sqrt()
            });
            MixingFunction::mlp(w1, b1, w2, b2)
        }
    }
}

/// Random world: system, GMM, and mixing drawn from one stream.
///
/// Valuations are re-anchored onto the base distribution: each environment
/// draws one private latent point from the GMM and uses its projections as
/// the valuations. The filter then cuts through real probability mass at a
/// random interior offset, which keeps rejection sampling tractable at every
/// seed; a valuation far outside the base support would make the acceptance
/// probability vanish.
pub fn generate_random_world(
    n: usize,
    d_z: usize,
    d_x: usize,
    m: usize,
    sigma2: f64,
    kind: MixingKind,
    rng: &mut impl Rng,
) -> Result<World> {
    let system = crate::concepts::generate_random_system(n, d_z, m, sigma2, rng)?;
    let gmm = generate_random_gmm(d_z, rng);

    let mut concepts = system.concepts().to_vec();
    for spec in &mut concepts {
        let anchor = sample_base(&gmm, rng, 1);
        for (slot, &i) in spec.atom_indices.iter().enumerate() {
            spec.valuation[slot] = system.atoms().atom(i).dot(&anchor.row(0));
        }
    }
    let atoms = crate::concepts::AtomicConceptSet::new(system.atoms().vectors().clone())?;
    let system = crate::concepts::EnvironmentSystem::new(atoms, concepts)?;

    let mixing = generate_random_mixing(d_z, d_x, kind, rng)?;
    World::new(system, gmm, mixing)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concepts::{AtomicConceptSet, ConceptSpec};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn standard_normal_1d() -> GmmBase {
        GmmBase::new(vec![1.0], array![[0.0]], array![[1.0]]).unwrap()
    }

    fn single_atom_system_1d(b: f64, sigma2: f64) -> EnvironmentSystem {
        let atoms = AtomicConceptSet::new(array![[1.0]]).unwrap();
        EnvironmentSystem::new(
            atoms,
            vec![ConceptSpec {
                atom_indices: vec![0],
                valuation: vec![b],
                noise_variance: sigma2,
            }],
        )
        .unwrap()
    }

    fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
        xs.windows(2)
            .zip(ys.windows(2))
            .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
            .sum()
    }

    #[test]
    fn sample_base_matches_mean_and_component_choice() {
        let gmm = GmmBase::new(vec![1.0], array![[0.0, 0.0]], array![[1.0, 1.0]]).unwrap();
        let mut rng = crate::rng::stream(0, "base");
        let z = sample_base(&gmm, &mut rng, 100_000);
        for j in 0..2 {
            let mean = z.column(j).mean().unwrap();
            assert!(mean.abs() < 0.02, "coordinate {j} mean {mean}");
        }

        let gmm = GmmBase::new(
            vec![1.0, 0.0, 0.0],
            array![[0.0], [100.0], [-100.0]],
            array![[1.0], [1.0], [1.0]],
        )
        .unwrap();
        let z = sample_base(&gmm, &mut rng, 1000);
        assert!(z.iter().all(|&v| v.abs() < 50.0));

        assert_eq!(sample_base(&gmm, &mut rng, 0).dim(), (0, 1));
    }

    #[test]
    fn projection_moments_match_closed_form_and_samples() {
        // Two components with distinct means: mean = sum of w * a.mu,
        // var = sum of w * ((a.mu)^2 + a^2 . sigma^2) - mean^2.
        let gmm = GmmBase::new(
            vec![0.25, 0.75],
            array![[1.0, -2.0], [0.0, 4.0]],
            array![[0.5, 1.0], [2.0, 0.25]],
        )
        .unwrap();
        let a = array![2.0, -1.0];
        let (mean, var) = gmm.projection_moments(a.view());
        let mu1 = 2.0 * 1.0 - 1.0 * -2.0;
        let mu2 = 2.0 * 0.0 - 1.0 * 4.0;
        let v1 = 4.0 * 0.5 + 1.0 * 1.0;
        let v2 = 4.0 * 2.0 + 1.0 * 0.25;
        let want_mean = 0.25 * mu1 + 0.75 * mu2;
        let want_var =
            0.25 * (mu1 * mu1 + v1) + 0.75 * (mu2 * mu2 + v2) - want_mean * want_mean;
        assert_abs_diff_eq!(mean, want_mean, epsilon = 1e-14);
        assert_abs_diff_eq!(var, want_var, epsilon = 1e-14);

        let mut rng = crate::rng::stream(3, "proj");
        let z = sample_base(&gmm, &mut rng, 200_000);
        let proj = z.dot(&a);
        let emp_mean = proj.mean().unwrap();
        let emp_var = proj.mapv(|v| (v - emp_mean) * (v - emp_mean)).mean().unwrap();
        assert!((emp_mean - mean).abs() < 0.03, "{emp_mean} vs {mean}");
        assert!((emp_var - var).abs() / var < 0.02, "{emp_var} vs {var}");
    }

    #[test]
    fn log_density_standard_normal_at_origin() {
        let gmm = standard_normal_1d();
        let expected = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_abs_diff_eq!(
            log_density_base(&gmm, array![0.0].view()),
            expected,
            epsilon = 1e-14
        );
    }

    #[test]
    fn log_density_integrates_to_one_1d() {
        let mut rng = crate::rng::stream(5, "gmm");
        let gmm = generate_random_gmm(1, &mut rng);
        let xs: Vec<f64> = (0..4001).map(|i| -4.0 + 8.0 * i as f64 / 4000.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| log_density_base(&gmm, array![x].view()).exp())
            .collect();
        assert_abs_diff_eq!(trapezoid(&xs, &ys), 1.0, epsilon = 1e-3);
    }

    #[test]
    fn log_density_integrates_to_one_2d() {
        let mut rng = crate::rng::stream(6, "gmm");
        let gmm = generate_random_gmm(2, &mut rng);
        let steps = 201;
        let lo = -3.0;
        let hi = 3.0;
        let h = (hi - lo) / (steps - 1) as f64;
        let mut total = 0.0;
        for i in 0..steps {
            for j in 0..steps {
                let z = array![lo + i as f64 * h, lo + j as f64 * h];
                let w_i = if i == 0 || i == steps - 1 { 0.5 } else { 1.0 };
                let w_j = if j == 0 || j == steps - 1 { 0.5 } else { 1.0 };
                total += w_i * w_j * log_density_base(&gmm, z.view()).exp() * h * h;
            }
        }
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn identical_components_collapse() {
        let one = GmmBase::new(vec![1.0], array![[0.3]], array![[0.5]]).unwrap();
        let two = GmmBase::new(
            vec![0.5, 0.5],
            array![[0.3], [0.3]],
            array![[0.5], [0.5]],
        )
        .unwrap();
        for z in [-2.0, -0.5, 0.0, 1.0, 3.0] {
            assert_abs_diff_eq!(
                log_density_base(&one, array![z].view()),
                log_density_base(&two, array![z].view()),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn log_odds_direct_values() {
        let atoms = AtomicConceptSet::new(array![[1.0, 0.0]]).unwrap();
        let system = EnvironmentSystem::new(
            atoms,
            vec![ConceptSpec {
                atom_indices: vec![0],
                valuation: vec![0.0],
                noise_variance: 1.0,
            }],
        )
        .unwrap();
        assert_abs_diff_eq!(
            log_odds_true(&system, 0, array![2.0, 5.0].view()),
            -2.0,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            log_odds_true(&system, 0, array![0.0, 7.0].view()),
            0.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn log_odds_matches_quadrature_up_to_constant() {
        let system = single_atom_system_1d(0.15, 0.05);
        let mut rng = crate::rng::stream(7, "gmm");
        let gmm = generate_random_gmm(1, &mut rng);
        let xs: Vec<f64> = (0..1001).map(|i| -3.0 + 6.0 * i as f64 / 1000.0).collect();
        let unnorm: Vec<f64> = xs
            .iter()
            .map(|&x| unnorm_log_density_concept(&system, 0, &gmm, array![x].view()).exp())
            .collect();
        let n_c = trapezoid(&xs, &unnorm);
        let diffs: Vec<f64> = xs
            .iter()
            .zip(&unnorm)
            .map(|(&x, &u)| {
                let log_pc = u.ln() - n_c.ln();
                let log_p = log_density_base(&gmm, array![x].view());
                (log_pc - log_p) - log_odds_true(&system, 0, array![x].view())
            })
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let max_dev = diffs
            .iter()
            .map(|d| (d - mean).abs())
            .fold(0.0f64, f64::max);
        assert!(max_dev < 1e-6, "centered deviation {max_dev}");
    }

    #[test]
    fn unnorm_log_density_at_exact_valuation() {
        let system = single_atom_system_1d(0.4, 1.0);
        let gmm = standard_normal_1d();
        let z = array![0.4];
        let expected =
            log_density_base(&gmm, z.view()) - 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert_abs_diff_eq!(
            unnorm_log_density_concept(&system, 0, &gmm, z.view()),
            expected,
            epsilon = 1e-14
        );
    }

    #[test]
    fn mix_identity_and_constant_mlp() {
        let f = MixingFunction::linear(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let z = array![[0.3, -0.7], [1.5, 2.5]];
        assert_eq!(mix(&f, &z).unwrap(), z);

        let f = MixingFunction::mlp(
            Array2::zeros((16, 2)),
            Array1::zeros(16),
            Array2::zeros((3, 16)),
            array![1.0, -2.0, 0.5],
        )
        .unwrap();
        let x = mix(&f, &z).unwrap();
        for row in x.rows() {
            assert_eq!(row.to_vec(), vec![1.0, -2.0, 0.5]);
        }

        let bad = mix(&f, &array![[1.0, 2.0, 3.0]]);
        assert!(matches!(bad, Err(ForgeError::DimensionMismatch(_))));
    }

    #[test]
    fn linear_mixing_inverts_by_least_squares() {
        let mut rng = crate::rng::stream(8, "mix");
        let f = generate_random_mixing(3, 5, MixingKind::Linear, &mut rng).unwrap();
        let z = Array2::from_shape_fn((50, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
        let x = mix(&f, &z).unwrap();
        let MixingFunction::Linear { w } = &f else {
            unreachable!()
        };
        let w_na = crate::linalg::to_na(w);
        let x_na = crate::linalg::to_na(&x);
        let z_rec = crate::linalg::lstsq(&w_na, &x_na.transpose(), 1e-12);
        for i in 0..50 {
            for j in 0..3 {
                assert_abs_diff_eq!(z_rec[(j, i)], z[[i, j]], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn linear_mixing_is_injective_on_samples() {
        let mut rng = crate::rng::stream(9, "mix");
        let f = generate_random_mixing(2, 4, MixingKind::Linear, &mut rng).unwrap();
        for _ in 0..1000 {
            let z1 = array![[rng.random::<f64>(), rng.random::<f64>()]];
            let z2 = array![[rng.random::<f64>(), rng.random::<f64>()]];
            if z1 == z2 {
                continue;
            }
            let diff = &mix(&f, &z1).unwrap() - &mix(&f, &z2).unwrap();
            assert!(diff.iter().map(|d| d * d).sum::<f64>() > 0.0);
        }
    }

    #[test]
    fn mix_is_deterministic() {
        let mut rng = crate::rng::stream(10, "mix");
        let f = generate_random_mixing(3, 6, MixingKind::Mlp, &mut rng).unwrap();
        let z = Array2::from_shape_fn((20, 3), |_| rng.random::<f64>());
        let a = mix(&f, &z).unwrap();
        let b = mix(&f, &z).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn log_odds_hessian_is_constant_and_matches_formula() {
        let mut rng = crate::rng::stream(11, "hess");
        let system = crate::concepts::generate_random_system(2, 3, 3, 0.01, &mut rng).unwrap();
        let mats = crate::concepts::build_env_matrices(&system);
        let e = 2;
        let d_z = 3;
        let step = 1e-4;
        let hessian_at = |z0: &Array1<f64>| {
            let mut h = Array2::zeros((d_z, d_z));
            for a in 0..d_z {
                for b in 0..d_z {
                    let mut zpp = z0.clone();
                    let mut zpm = z0.clone();
                    let mut zmp = z0.clone();
                    let mut zmm = z0.clone();
                    zpp[a] += step;
                    zpp[b] += step;
                    zpm[a] += step;
                    zpm[b] -= step;
                    zmp[a] -= step;
                    zmp[b] += step;
                    zmm[a] -= step;
                    zmm[b] -= step;
                    h[[a, b]] = (log_odds_true(&system, e, zpp.view())
                        - log_odds_true(&system, e, zpm.view())
                        - log_odds_true(&system, e, zmp.view())
                        + log_odds_true(&system, e, zmm.view()))
                        / (4.0 * step * step);
                }
            }
            h
        };
        let points: Vec<Array1<f64>> = (0..5)
            .map(|_| Array1::from_shape_fn(d_z, |_| rng.random::<f64>() * 2.0 - 1.0))
            .collect();
        let h0 = hessian_at(&points[0]);
        let scale = h0.iter().map(|x| x.abs()).fold(0.0f64, f64::max);
        for p in &points[1..] {
            let h = hessian_at(p);
            for (a, b) in h.iter().zip(h0.iter()) {
                assert!((a - b).abs() <= 1e-4 * scale.max(1.0));
            }
        }
        // Hessian of g^e = -log_odds equals sum of M_ei a_i a_i^T.
        let mut expected: Array2<f64> = Array2::zeros((d_z, d_z));
        for i in 0..system.n() {
            if mats.m[[e, i]] == 0.0 {
                continue;
            }
            let a = system.atoms().atom(i);
            for r in 0..d_z {
                for c in 0..d_z {
                    expected[[r, c]] += mats.m[[e, i]] * a[r] * a[c];
                }
            }
        }
        for (got, want) in h0.iter().zip(expected.iter()) {
            assert!(
                (-got - want).abs() <= 1e-4 * scale.max(1.0),
                "got {got}, want {want}"
            );
        }
    }
}
