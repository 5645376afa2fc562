//! Steering vectors and context-dependent steering matrices built from
//! counterfactual activation pairs, plus a synthetic activation world that
//! scores how well a steering construction moves one concept's valuation
//! while leaving orthogonal concepts untouched.
//!
//! For a concept direction a with valuations b0 (false) and b1 (true), the
//! ideal intervention is the pseudoinverse shift a(b1-b0)/|a|^2: it moves
//! ⟨a,h⟩ from b0 to b1 exactly and every direction orthogonal to a not at
//! all. The constructions here approximate that shift from pairs
//! (h_false, h_true): the plain steering vector is the normalized mean
//! difference; the steering matrix M = Σ_i (h_true_i − h_false_i) λ_iᵀ
//! turns a context embedding into the similarity-weighted combination
//! η(x) = M λ(x) of the pair differences. Per-pair fluctuations orthogonal
//! to the concept average out at the O(1/√N) rate.

use crate::error::{ForgeError, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

const ZERO_NORM_TOL: f64 = 1e-12;
const UNIT_NORM_TOL: f64 = 1e-9;

/// One counterfactual observation: the activation of a statement that
/// violates the concept, the activation of its corrected counterpart, and a
/// unit-norm embedding of the shared context.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualPair {
    pub h_false: Array1<f64>,
    pub h_true: Array1<f64>,
    pub ctx_embedding: Array1<f64>,
}

impl CounterfactualPair {
    pub fn new(
        h_false: Array1<f64>,
        h_true: Array1<f64>,
        ctx_embedding: Array1<f64>,
    ) -> Result<Self> {
        if h_false.len() != h_true.len() {
            return Err(ForgeError::DimensionMismatch(format!(
                "activation pair has lengths {} and {}",
                h_false.len(),
                h_true.len()
            )));
        }
        let norm = ctx_embedding.dot(&ctx_embedding).sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(ForgeError::Format(format!(
                "context embedding must be unit norm, got {norm}"
            )));
        }
        Ok(CounterfactualPair {
            h_false,
            h_true,
            ctx_embedding,
        })
    }

    pub fn difference(&self) -> Array1<f64> {
        &self.h_true - &self.h_false
    }
}

fn check_consistent(pairs: &[CounterfactualPair]) -> Result<(usize, usize)> {
    let first = pairs.first().ok_or_else(|| {
        ForgeError::ZeroDirection("no counterfactual pairs given".into())
    })?;
    let (d_act, d_emb) = (first.h_false.len(), first.ctx_embedding.len());
    for (i, p) in pairs.iter().enumerate() {
        if p.h_false.len() != d_act || p.ctx_embedding.len() != d_emb {
            return Err(ForgeError::DimensionMismatch(format!(
                "pair {i} has activation/embedding dims {}/{}, expected {d_act}/{d_emb}",
                p.h_false.len(),
                p.ctx_embedding.len()
            )));
        }
    }
    Ok((d_act, d_emb))
}

/// Normalized mean of the pair differences.
pub fn mean_steering_vector(pairs: &[CounterfactualPair]) -> Result<Array1<f64>> {
    let (d_act, _) = check_consistent(pairs)?;
    let mut mean = Array1::zeros(d_act);
    for p in pairs {
        mean += &p.difference();
    }
    mean /= pairs.len() as f64;
    let norm = mean.dot(&mean).sqrt();
    if norm < ZERO_NORM_TOL {
        return Err(ForgeError::ZeroDirection(format!(
            "mean activation difference has norm {norm:e}"
        )));
    }
    Ok(mean / norm)
}

/// d_act × d_emb matrix turning a context embedding into a steering
/// direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringMatrix {
    pub m: Array2<f64>,
}

/// Exact sum of outer products Σ_i (h_true_i − h_false_i) · embedding_iᵀ.
pub fn build_steering_matrix(pairs: &[CounterfactualPair]) -> Result<SteeringMatrix> {
    let (d_act, d_emb) = check_consistent(pairs)?;
    let mut m = Array2::zeros((d_act, d_emb));
    for p in pairs {
        let diff = p.difference();
        for r in 0..d_act {
            for c in 0..d_emb {
                m[[r, c]] += diff[r] * p.ctx_embedding[c];
            }
        }
    }
    Ok(SteeringMatrix { m })
}

/// η = M·λ(x): the similarity-weighted combination of the training pair
/// differences, optionally unit-normalized.
pub fn apply_steering(
    matrix: &SteeringMatrix,
    ctx_embedding: ArrayView1<f64>,
    normalize: bool,
) -> Result<Array1<f64>> {
    if ctx_embedding.len() != matrix.m.ncols() {
        return Err(ForgeError::DimensionMismatch(format!(
            "embedding has {} entries, steering matrix expects {}",
            ctx_embedding.len(),
            matrix.m.ncols()
        )));
    }
    let eta = matrix.m.dot(&ctx_embedding);
    if !normalize {
        return Ok(eta);
    }
    let norm = eta.dot(&eta).sqrt();
    if norm < ZERO_NORM_TOL {
        return Err(ForgeError::ZeroDirection(format!(
            "steered direction has norm {norm:e}"
        )));
    }
    Ok(eta / norm)
}

/// Sample standard deviation (denominator N−1) of the activations'
/// projections onto a unit direction.
pub fn dynamic_sigma(activations: ArrayView2<f64>, direction: ArrayView1<f64>) -> Result<f64> {
    let n = activations.nrows();
    if n < 2 {
        return Err(ForgeError::Config(format!(
            "need at least two reference activations, got {n}"
        )));
    }
    if activations.ncols() != direction.len() {
        return Err(ForgeError::DimensionMismatch(format!(
            "activations have {} columns, direction has {}",
            activations.ncols(),
            direction.len()
        )));
    }
    let norm = direction.dot(&direction).sqrt();
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(ForgeError::Config(format!(
            "direction must be unit norm, got {norm}"
        )));
    }
    let proj = activations.dot(&direction);
    let mean = proj.sum() / n as f64;
    let ss: f64 = proj.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok((ss / (n - 1) as f64).sqrt())
}

/// Synthetic activation space with one designated concept direction and a
/// bank of held-out unit directions orthogonal to it, used to score steering
/// constructions against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingWorld {
    /// Concept direction a.
    pub concept: Array1<f64>,
    /// Valuation of "false" statements: ⟨a,h⟩ = b_false.
    pub b_false: f64,
    /// Valuation of "true" statements.
    pub b_true: f64,
    /// Rows are unit directions orthogonal to `concept`; steering should not
    /// move projections onto them.
    pub orthogonal: Array2<f64>,
    /// Unit center of the context-embedding cluster.
    pub context_center: Array1<f64>,
}

fn random_unit(dim: usize, rng: &mut impl Rng) -> Array1<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    loop {
        let v: Array1<f64> = Array1::from_shape_fn(dim, |_| normal.sample(rng));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-6 {
            return v / norm;
        }
    }
}

impl EmbeddingWorld {
    /// Random world: a unit concept direction, `n_orthogonal` orthonormal
    /// held-out directions perpendicular to it, and a unit context center in
    /// `d_emb` dimensions.
    pub fn random(
        d_act: usize,
        d_emb: usize,
        n_orthogonal: usize,
        b_false: f64,
        b_true: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n_orthogonal + 1 > d_act {
            return Err(ForgeError::DimensionMismatch(format!(
                "cannot fit {n_orthogonal} orthogonal directions plus the concept in {d_act} dims"
            )));
        }
        if (b_true - b_false).abs() < ZERO_NORM_TOL {
            return Err(ForgeError::DegenerateSystem(
                "false and true valuations coincide".into(),
            ));
        }
        let concept = random_unit(d_act, rng);
        let mut rows: Vec<Array1<f64>> = Vec::with_capacity(n_orthogonal);
        while rows.len() < n_orthogonal {
            let mut v = random_unit(d_act, rng);
            let mut proj = &concept * concept.dot(&v);
            for r in &rows {
                proj += &(r * r.dot(&v));
            }
            v -= &proj;
            let norm = v.dot(&v).sqrt();
            if norm > 1e-6 {
                rows.push(v / norm);
            }
        }
        let mut orthogonal = Array2::zeros((n_orthogonal, d_act));
        for (i, r) in rows.iter().enumerate() {
            orthogonal.row_mut(i).assign(r);
        }
        Ok(EmbeddingWorld {
            concept,
            b_false,
            b_true,
            orthogonal,
            context_center: random_unit(d_emb, rng),
        })
    }

    pub fn d_act(&self) -> usize {
        self.concept.len()
    }

    pub fn d_emb(&self) -> usize {
        self.context_center.len()
    }

    /// The ideal intervention a(b_true−b_false)/‖a‖².
    pub fn pseudoinverse_shift(&self) -> Array1<f64> {
        let scale = (self.b_true - self.b_false) / self.concept.dot(&self.concept);
        &self.concept * scale
    }

    fn random_activation_at(&self, valuation: f64, rng: &mut impl Rng) -> Array1<f64> {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut h = Array1::from_shape_fn(self.d_act(), |_| normal.sample(rng));
        let a = &self.concept;
        let correction = (a.dot(&h) - valuation) / a.dot(a);
        h -= &(a * correction);
        h
    }

    fn clustered_embedding(&self, spread: f64, rng: &mut impl Rng) -> Array1<f64> {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut e = self.context_center.clone();
        for v in e.iter_mut() {
            *v += spread * normal.sample(rng);
        }
        let norm = e.dot(&e).sqrt();
        e / norm
    }

    /// Pairs whose activation difference is the exact concept shift plus
    /// `ortho_noise` times a standard-normal draw projected orthogonal to
    /// the concept. Context embeddings cluster around the world's center
    /// with the given spread.
    pub fn counterfactual_pairs(
        &self,
        count: usize,
        ortho_noise: f64,
        embedding_spread: f64,
        rng: &mut impl Rng,
    ) -> Result<Vec<CounterfactualPair>> {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let shift = self.pseudoinverse_shift();
        let a = &self.concept;
        (0..count)
            .map(|_| {
                let h_false = self.random_activation_at(self.b_false, rng);
                let mut diff = shift.clone();
                if ortho_noise != 0.0 {
                    let mut eps =
                        Array1::from_shape_fn(self.d_act(), |_| normal.sample(rng));
                    let correction = a.dot(&eps) / a.dot(a);
                    eps -= &(a * correction);
                    diff += &(eps * ortho_noise);
                }
                let h_true = &h_false + &diff;
                CounterfactualPair::new(
                    h_false,
                    h_true,
                    self.clustered_embedding(embedding_spread, rng),
                )
            })
            .collect()
    }

    /// Query activations sitting exactly on the false valuation, with
    /// embeddings from the same context cluster.
    pub fn queries(
        &self,
        count: usize,
        embedding_spread: f64,
        rng: &mut impl Rng,
    ) -> Vec<SteerQuery> {
        (0..count)
            .map(|_| SteerQuery {
                activation: self.random_activation_at(self.b_false, rng),
                embedding: self.clustered_embedding(embedding_spread, rng),
            })
            .collect()
    }
}

/// A point to steer: its activation and its context embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct SteerQuery {
    pub activation: Array1<f64>,
    pub embedding: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteerReport {
    /// Mean |⟨a,h′⟩ − b_true| / |b_true − b_false| over queries: 0 is a
    /// perfect move, 1 is no move.
    pub concept_shift: f64,
    /// Mean |⟨B_j,h′⟩ − ⟨B_j,h⟩| / ‖B_j‖ over queries and held-out
    /// directions.
    pub orthogonal_leakage: f64,
}

/// Builds the steering matrix from the pairs, then steers every query by
/// h′ = h + α·σ·η(x) with η(x) the normalized matrix output oriented along
/// the mean difference direction (similarity weights can flip the sign; the
/// mean fixes the hemisphere) and σ the sample deviation of the training
/// activations along η(x).
pub fn steer_and_score(
    world: &EmbeddingWorld,
    pairs: &[CounterfactualPair],
    alpha: f64,
    queries: &[SteerQuery],
) -> Result<SteerReport> {
    let (d_act, _) = check_consistent(pairs)?;
    if d_act != world.d_act() {
        return Err(ForgeError::DimensionMismatch(format!(
            "pairs live in {d_act} dims, world in {}",
            world.d_act()
        )));
    }
    let matrix = build_steering_matrix(pairs)?;
    let mean_direction = mean_steering_vector(pairs)?;
    let mut reference = Array2::zeros((2 * pairs.len(), d_act));
    for (i, p) in pairs.iter().enumerate() {
        reference.row_mut(2 * i).assign(&p.h_false);
        reference.row_mut(2 * i + 1).assign(&p.h_true);
    }

    let a = &world.concept;
    let denom = (world.b_true - world.b_false).abs();
    let mut shift_sum = 0.0;
    let mut leak_sum = 0.0;
    let mut leak_count = 0usize;
    for query in queries {
        let mut eta = apply_steering(&matrix, query.embedding.view(), true)?;
        if eta.dot(&mean_direction) < 0.0 {
            eta.iter_mut().for_each(|v| *v = -*v);
        }
        let sigma = dynamic_sigma(reference.view(), eta.view())?;
        let steered = &query.activation + &(&eta * (alpha * sigma));
        shift_sum += (a.dot(&steered) - world.b_true).abs() / denom;
        for j in 0..world.orthogonal.nrows() {
            let b_j = world.orthogonal.row(j);
            let norm = b_j.dot(&b_j).sqrt();
            leak_sum += (b_j.dot(&steered) - b_j.dot(&query.activation)).abs() / norm;
            leak_count += 1;
        }
    }
    let n_queries = queries.len().max(1) as f64;
    Ok(SteerReport {
        concept_shift: shift_sum / n_queries,
        orthogonal_leakage: leak_sum / leak_count.max(1) as f64,
    })
}
