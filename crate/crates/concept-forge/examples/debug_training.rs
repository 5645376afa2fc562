//! Temporary training diagnostics (not part of the public example set).

use concept_forge::evaluation::{evaluate, true_valuations};
use concept_forge::learner::{encode, train, Activation, EncoderKind, StructureMode, TrainConfig};
use concept_forge::rng;
use concept_forge::sampler::generate_dataset;
use concept_forge::world::{generate_random_world, mix, sample_base, MixingKind};

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let epochs: usize = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(100);
    let structure_mode = match std::env::args().nth(3).as_deref() {
        Some("dense") => StructureMode::Dense,
        _ => StructureMode::KnownStructure,
    };
    let lr_head: f64 = std::env::args()
        .nth(4)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.5);
    let lr_encoder: f64 = std::env::args()
        .nth(5)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.005);

    let anchored = std::env::args().nth(6).as_deref() != Some("raw");
    let sigma2: f64 = std::env::args()
        .nth(7)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.005);
    let l1_weight: f64 = std::env::args()
        .nth(8)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1e-4);
    let restarts: usize = std::env::args()
        .nth(9)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let restart_period_epochs: usize = std::env::args()
        .nth(10)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let batch_size: usize = std::env::args()
        .nth(11)
        .and_then(|s| s.parse().ok())
        .unwrap_or(256);
    let mixing_kind = match std::env::args().nth(12).as_deref() {
        Some("mlp") => MixingKind::Mlp,
        _ => MixingKind::Linear,
    };
    let n: usize = std::env::args()
        .nth(13)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2);
    let d_z: usize = std::env::args()
        .nth(14)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3);
    let d_x: usize = std::env::args()
        .nth(15)
        .and_then(|s| s.parse().ok())
        .unwrap_or(4);
    let encoder_activation = match std::env::args().nth(16).as_deref() {
        Some("tanh") => Activation::Tanh,
        _ => Activation::LeakyRelu,
    };
    let mut world_rng = rng::stream(seed, "world");
    let world = if anchored {
        generate_random_world(n, d_z, d_x, n + 1, sigma2, mixing_kind, &mut world_rng)?
    } else {
        let system =
            concept_forge::concepts::generate_random_system(n, d_z, n + 1, sigma2, &mut world_rng)?;
        let gmm = concept_forge::world::generate_random_gmm(d_z, &mut world_rng);
        let mixing = concept_forge::world::generate_random_mixing(
            d_z,
            d_x,
            mixing_kind,
            &mut world_rng,
        )?;
        concept_forge::world::World::new(system, gmm, mixing)?
    };
    let mut sampler_rng = rng::stream(seed, "sampler");
    let data = generate_dataset(&world.system, &world.gmm, &world.mixing, &mut sampler_rng, 5000)?;
    for (e, s) in data.stats.iter().enumerate() {
        println!("env {e}: rate {:.4} ({} trials)", s.empirical_rate, s.trials);
    }

    let config = TrainConfig {
        encoder: match mixing_kind {
            MixingKind::Linear => EncoderKind::Linear,
            MixingKind::Mlp => EncoderKind::Mlp,
        },
        structure: structure_mode,
        seed,
        epochs,
        lr_head,
        lr_encoder,
        l1_weight,
        restarts,
        restart_period_epochs,
        batch_size,
        encoder_activation,
        ..TrainConfig::default()
    };
    let structure: Vec<Vec<usize>> = world
        .system
        .concepts()
        .iter()
        .map(|c| c.atom_indices.clone())
        .collect();
    let (model, history) = train(&data, n, Some(&structure), &config)?;
    for h in history.iter().step_by(10.max(epochs / 10)) {
        println!(
            "epoch {:3}  total {:.5}  ce {:.5}  l1 {:.6}",
            h.epoch, h.total_loss, h.ce_loss, h.l1_loss
        );
    }
    if let Some(h) = history.last() {
        println!(
            "epoch {:3}  total {:.5}  ce {:.5}  l1 {:.6}  (final)",
            h.epoch, h.total_loss, h.ce_loss, h.l1_loss
        );
    }
    for (e, head) in model.heads.iter().enumerate() {
        println!(
            "head {e}: alpha {:.3}  beta {:?}  gamma {:?}  slots {:?}",
            head.alpha,
            head.beta.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            head.gamma.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            head.slots
        );
    }
    // Compare against the oracle head values in the aligned gauge.
    let mats = concept_forge::concepts::build_env_matrices(&world.system);
    println!("oracle beta = sqrt(M/2): {:?}", (0..world.system.m()).map(|e| {
        world.system.concept(e).atom_indices.iter().map(|&i| (mats.m[[e, i]] / 2.0).sqrt()).collect::<Vec<_>>()
    }).collect::<Vec<_>>());

    // Bayes-level CE: oracle logit = log_odds_true + c_e on the stored latents.
    let mut oracle_total = 0.0;
    for e in 0..world.system.m() {
        let spec = world.system.concept(e);
        let s2 = spec.noise_variance;
        let mut nrng = rng::stream(seed, "oracle-nc");
        let nc = concept_forge::sampler::estimate_normalizer(
            &world.system, e, &world.gmm, &mut nrng, 200_000,
        ).value;
        let c_e = -spec.valuation.iter().map(|b| b * b).sum::<f64>() / (2.0 * s2)
            - spec.dim() as f64 * 0.5 * (2.0 * std::f64::consts::PI * s2).ln()
            - nc.ln();
        let softplus = |x: f64| x.max(0.0) + (-x.abs()).exp().ln_1p();
        let mut ce = 0.0;
        for r in 0..data.env_z[e].nrows() {
            let g = concept_forge::world::log_odds_true(&world.system, e, data.env_z[e].row(r)) + c_e;
            ce += softplus(-g);
        }
        for r in 0..data.base_z.nrows() {
            let g = concept_forge::world::log_odds_true(&world.system, e, data.base_z.row(r)) + c_e;
            ce += softplus(g);
        }
        oracle_total += ce / (data.env_z[e].nrows() + data.base_z.nrows()) as f64;
    }
    println!("oracle (Bayes-level) ce = {oracle_total:.5}");

    let mut eval_rng = rng::stream(seed, "eval");
    let z_eval = sample_base(&world.gmm, &mut eval_rng, 5000);
    let x_eval = mix(&world.mixing, &z_eval)?;
    let recovered = encode(&model.encoder, &x_eval)?;
    let truth = true_valuations(&world.system, z_eval.view());
    let report = evaluate(recovered.view(), truth.view())?;
    println!(
        "R^2 = {:.4}  MCC = {:.4}  residual = {:.3e}  perm = {:?}  corr = {:?}",
        report.r2, report.mcc, report.affine_residual, report.permutation, report.per_atom_corr
    );

    // Same metrics over the pooled training rows (base + every environment).
    let rows = data.base_z.nrows() + data.env_z.iter().map(|z| z.nrows()).sum::<usize>();
    let mut z_pool = ndarray::Array2::zeros((rows, d_z));
    let mut r = 0;
    for src in std::iter::once(&data.base_z).chain(data.env_z.iter()) {
        for row in src.rows() {
            z_pool.row_mut(r).assign(&row);
            r += 1;
        }
    }
    let x_pool = mix(&world.mixing, &z_pool)?;
    let rec_pool = encode(&model.encoder, &x_pool)?;
    let truth_pool = true_valuations(&world.system, z_pool.view());
    let pooled = evaluate(rec_pool.view(), truth_pool.view())?;
    println!(
        "POOLED R^2 = {:.4}  MCC = {:.4}  corr = {:?}",
        pooled.r2, pooled.mcc, pooled.per_atom_corr
    );
    Ok(())
}
