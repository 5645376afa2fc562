//! File formats: the "CFMX" binary matrix container, CSV matrices, and the
//! JSON world file. All floating-point round trips are bit-exact.

use crate::concepts::{AtomicConceptSet, ConceptSpec, EnvironmentSystem};
use crate::error::{ForgeError, Result};
use crate::learner::{Activation, DenseLayer, EncoderMlp, EpochLoss, Head, Model, TrainConfig};
use crate::world::{GmmBase, MixingFunction, World};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MATRIX_MAGIC: &[u8; 4] = b"CFMX";
const CHECKPOINT_MAGIC: &[u8; 4] = b"CFCP";

/// Writes a matrix as magic bytes, u32 row and column counts, then
/// little-endian f64 entries in row-major order.
pub fn write_matrix_binary<W: Write>(mut out: W, m: &Array2<f64>) -> Result<()> {
    let (rows, cols) = m.dim();
    if rows > u32::MAX as usize || cols > u32::MAX as usize {
        return Err(ForgeError::Format("matrix too large for format".into()));
    }
    out.write_all(MATRIX_MAGIC)?;
    out.write_all(&(rows as u32).to_le_bytes())?;
    out.write_all(&(cols as u32).to_le_bytes())?;
    for row in m.rows() {
        for v in row {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix_binary<R: Read>(mut input: R) -> Result<Array2<f64>> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MATRIX_MAGIC {
        return Err(ForgeError::Format(format!(
            "bad matrix magic {magic:?}, expected {MATRIX_MAGIC:?}"
        )));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let rows = u32::from_le_bytes(word) as usize;
    input.read_exact(&mut word)?;
    let cols = u32::from_le_bytes(word) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| ForgeError::Format("matrix size overflow".into()))?;
    let mut data = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        input.read_exact(&mut buf)?;
        data.push(f64::from_le_bytes(buf));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| ForgeError::Format(format!("matrix shape: {e}")))
}

pub fn save_matrix_binary(path: &Path, m: &Array2<f64>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_matrix_binary(std::io::BufWriter::new(file), m)
}

pub fn load_matrix_binary(path: &Path) -> Result<Array2<f64>> {
    let file = std::fs::File::open(path)?;
    read_matrix_binary(std::io::BufReader::new(file))
}

/// CSV with a `c0..c{k-1}` header row and one sample per line.
pub fn save_matrix_csv(path: &Path, m: &Array2<f64>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("c{j}")).collect();
    writer.write_record(&header).map_err(csv_err)?;
    for row in m.rows() {
        let record: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writer.write_record(&record).map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let cols = reader.headers().map_err(csv_err)?.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        if record.len() != cols {
            return Err(ForgeError::Format(format!(
                "row {rows} has {} fields, expected {cols}",
                record.len()
            )));
        }
        for field in record.iter() {
            data.push(
                field
                    .parse::<f64>()
                    .map_err(|e| ForgeError::Format(format!("bad float {field:?}: {e}")))?,
            );
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| ForgeError::Format(format!("matrix shape: {e}")))
}

fn csv_err(e: csv::Error) -> ForgeError {
    ForgeError::Format(format!("csv: {e}"))
}

/// Provenance stamp embedded in JSON outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct WireConcept {
    atom_indices: Vec<usize>,
    valuation: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise_variance: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct WireSystem {
    n: usize,
    d_z: usize,
    sigma2: f64,
    /// Row-major n x d_z atom matrix.
    atoms: Vec<f64>,
    concepts: Vec<WireConcept>,
}

#[derive(Serialize, Deserialize)]
struct WireGmm {
    k: usize,
    weights: Vec<f64>,
    /// Row-major K x d_z.
    means: Vec<f64>,
    /// Row-major K x d_z.
    diag_vars: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum WireMixing {
    Linear {
        d_x: usize,
        /// Row-major d_x x d_z.
        w: Vec<f64>,
    },
    Mlp {
        hidden: usize,
        d_x: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    },
}

#[derive(Serialize, Deserialize)]
struct WireWorld {
    #[serde(flatten)]
    system: WireSystem,
    gmm: WireGmm,
    mixing: WireMixing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

fn system_to_wire(system: &EnvironmentSystem) -> WireSystem {
    let sigma2 = system.concept(0).noise_variance;
    WireSystem {
        n: system.n(),
        d_z: system.d_z(),
        sigma2,
        atoms: system.atoms().vectors().iter().copied().collect(),
        concepts: system
            .concepts()
            .iter()
            .map(|c| WireConcept {
                atom_indices: c.atom_indices.clone(),
                valuation: c.valuation.clone(),
                noise_variance: (c.noise_variance != sigma2).then_some(c.noise_variance),
            })
            .collect(),
    }
}

fn system_from_wire(wire: &WireSystem) -> Result<EnvironmentSystem> {
    if wire.atoms.len() != wire.n * wire.d_z {
        return Err(ForgeError::Format(format!(
            "atoms array has {} entries, expected n*d_z = {}",
            wire.atoms.len(),
            wire.n * wire.d_z
        )));
    }
    let vectors = Array2::from_shape_vec((wire.n, wire.d_z), wire.atoms.clone())
        .map_err(|e| ForgeError::Format(e.to_string()))?;
    let atoms = AtomicConceptSet::new(vectors)?;
    let concepts = wire
        .concepts
        .iter()
        .map(|c| ConceptSpec {
            atom_indices: c.atom_indices.clone(),
            valuation: c.valuation.clone(),
            noise_variance: c.noise_variance.unwrap_or(wire.sigma2),
        })
        .collect();
    EnvironmentSystem::new(atoms, concepts)
}

fn world_to_wire(world: &World, provenance: Option<Provenance>) -> WireWorld {
    let gmm = WireGmm {
        k: world.gmm.k(),
        weights: world.gmm.weights().to_vec(),
        means: world.gmm.means().iter().copied().collect(),
        diag_vars: world.gmm.diag_vars().iter().copied().collect(),
    };
    let mixing = match &world.mixing {
        MixingFunction::Linear { w } => WireMixing::Linear {
            d_x: w.nrows(),
            w: w.iter().copied().collect(),
        },
        MixingFunction::Mlp { w1, b1, w2, b2 } => WireMixing::Mlp {
            hidden: w1.nrows(),
            d_x: w2.nrows(),
            w1: w1.iter().copied().collect(),
            b1: b1.to_vec(),
            w2: w2.iter().copied().collect(),
            b2: b2.to_vec(),
        },
    };
    WireWorld {
        system: system_to_wire(&world.system),
        gmm,
        mixing,
        provenance,
    }
}

fn world_from_wire(wire: &WireWorld) -> Result<World> {
    let system = system_from_wire(&wire.system)?;
    let d_z = wire.system.d_z;
    let shape_err = |what: &str| ForgeError::Format(format!("{what} has the wrong length"));
    if wire.gmm.means.len() != wire.gmm.k * d_z || wire.gmm.diag_vars.len() != wire.gmm.k * d_z {
        return Err(shape_err("gmm parameter array"));
    }
    let gmm = GmmBase::new(
        wire.gmm.weights.clone(),
        Array2::from_shape_vec((wire.gmm.k, d_z), wire.gmm.means.clone())
            .map_err(|e| ForgeError::Format(e.to_string()))?,
        Array2::from_shape_vec((wire.gmm.k, d_z), wire.gmm.diag_vars.clone())
            .map_err(|e| ForgeError::Format(e.to_string()))?,
    )?;
    let mixing = match &wire.mixing {
        WireMixing::Linear { d_x, w } => {
            if w.len() != d_x * d_z {
                return Err(shape_err("linear mixing matrix"));
            }
            MixingFunction::linear(
                Array2::from_shape_vec((*d_x, d_z), w.clone())
                    .map_err(|e| ForgeError::Format(e.to_string()))?,
            )?
        }
        WireMixing::Mlp {
            hidden,
            d_x,
            w1,
            b1,
            w2,
            b2,
        } => {
            if w1.len() != hidden * d_z || w2.len() != d_x * hidden {
                return Err(shape_err("mlp mixing matrix"));
            }
            MixingFunction::mlp(
                Array2::from_shape_vec((*hidden, d_z), w1.clone())
                    .map_err(|e| ForgeError::Format(e.to_string()))?,
                Array1::from_vec(b1.clone()),
                Array2::from_shape_vec((*d_x, *hidden), w2.clone())
                    .map_err(|e| ForgeError::Format(e.to_string()))?,
                Array1::from_vec(b2.clone()),
            )?
        }
    };
    World::new(system, gmm, mixing)
}

pub fn world_to_json(world: &World, provenance: Option<Provenance>) -> Result<String> {
    serde_json::to_string_pretty(&world_to_wire(world, provenance))
        .map_err(|e| ForgeError::Format(e.to_string()))
}

pub fn world_from_json(json: &str) -> Result<World> {
    let wire: WireWorld =
        serde_json::from_str(json).map_err(|e| ForgeError::Format(e.to_string()))?;
    world_from_wire(&wire)
}

pub fn save_world(path: &Path, world: &World, provenance: Option<Provenance>) -> Result<()> {
    std::fs::write(path, world_to_json(world, provenance)?)?;
    Ok(())
}

pub fn load_world(path: &Path) -> Result<World> {
    world_from_json(&std::fs::read_to_string(path)?)
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    seed: u64,
    activation: Activation,
    /// (rows, cols) of each encoder weight matrix, input side last.
    layer_dims: Vec<(usize, usize)>,
    head_slots: Vec<Vec<usize>>,
    config: TrainConfig,
}

const CHECKPOINT_FORMAT: &str = "concept-forge/checkpoint-v1";

/// Writes a trained model as a JSON header (architecture, training config,
/// seed) followed by one CFMX blob holding the flattened parameter vector.
pub fn write_checkpoint<W: Write>(mut out: W, model: &Model, config: &TrainConfig) -> Result<()> {
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        seed: config.seed,
        activation: model.encoder.activation,
        layer_dims: model.encoder.layers.iter().map(|l| l.w.dim()).collect(),
        head_slots: model.heads.iter().map(|h| h.slots.clone()).collect(),
        config: config.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| ForgeError::Format(e.to_string()))?;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    let params = model.flat_params();
    let blob = Array2::from_shape_vec((1, params.len()), params)
        .map_err(|e| ForgeError::Format(e.to_string()))?;
    write_matrix_binary(out, &blob)
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<(Model, TrainConfig)> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(ForgeError::Format(format!(
            "bad checkpoint magic {magic:?}, expected {CHECKPOINT_MAGIC:?}"
        )));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let mut json = vec![0u8; u32::from_le_bytes(word) as usize];
    input.read_exact(&mut json)?;
    let header: CheckpointHeader =
        serde_json::from_slice(&json).map_err(|e| ForgeError::Format(e.to_string()))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(ForgeError::Format(format!(
            "unsupported checkpoint format {:?}",
            header.format
        )));
    }
    if header.layer_dims.is_empty() || header.head_slots.is_empty() {
        return Err(ForgeError::Format("checkpoint has no layers or heads".into()));
    }
    for pair in header.layer_dims.windows(2) {
        if pair[1].1 != pair[0].0 {
            return Err(ForgeError::Format(format!(
                "layer dims do not chain: {:?} then {:?}",
                pair[0], pair[1]
            )));
        }
    }
    let n = header.layer_dims.last().unwrap().0;
    let layers = header
        .layer_dims
        .iter()
        .map(|&(rows, cols)| DenseLayer {
            w: Array2::zeros((rows, cols)),
            b: Array1::zeros(rows),
        })
        .collect();
    let heads = header
        .head_slots
        .iter()
        .map(|slots| {
            if slots.iter().any(|&s| s >= n) {
                return Err(ForgeError::Format(format!(
                    "head slot out of range for {n} encoder outputs: {slots:?}"
                )));
            }
            Ok(Head {
                alpha: 0.0,
                beta: Array1::zeros(slots.len()),
                gamma: Array1::zeros(slots.len()),
                slots: slots.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model = Model {
        encoder: EncoderMlp {
            layers,
            activation: header.activation,
        },
        heads,
    };
    let blob = read_matrix_binary(input)?;
    let expected = model.flat_params().len();
    if blob.len() != expected {
        return Err(ForgeError::Format(format!(
            "checkpoint blob has {} parameters, architecture needs {expected}",
            blob.len()
        )));
    }
    model.set_flat_params(blob.as_slice().unwrap());
    Ok((model, header.config))
}

pub fn save_checkpoint(path: &Path, model: &Model, config: &TrainConfig) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(std::io::BufWriter::new(file), model, config)
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, TrainConfig)> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file))
}

/// Training-curve CSV: one row per epoch.
pub fn save_history_csv(path: &Path, history: &[EpochLoss]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
    writer
        .write_record(["epoch", "total_loss", "ce_loss", "l1_loss"])
        .map_err(csv_err)?;
    for row in history {
        writer
            .write_record([
                row.epoch.to_string(),
                format!("{:?}", row.total_loss),
                format!("{:?}", row.ce_loss),
                format!("{:?}", row.l1_loss),
            ])
            .map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_history_csv(path: &Path) -> Result<Vec<EpochLoss>> {
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for record in reader.deserialize() {
        let (epoch, total_loss, ce_loss, l1_loss): (usize, f64, f64, f64) =
            record.map_err(csv_err)?;
        out.push(EpochLoss {
            epoch,
            total_loss,
            ce_loss,
            l1_loss,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_random_world, MixingKind};
    use ndarray::array;

    #[test]
    fn binary_matrix_round_trip_is_bit_exact() {
        let m = array![
            [1.0, std::f64::consts::PI, -0.0],
            [f64::MIN_POSITIVE, 1e300, -7.25]
        ];
        let mut buf = Vec::new();
        write_matrix_binary(&mut buf, &m).unwrap();
        assert_eq!(&buf[..4], b"CFMX");
        let back = read_matrix_binary(buf.as_slice()).unwrap();
        assert_eq!(m.dim(), back.dim());
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn binary_matrix_rejects_bad_magic() {
        let buf = b"NOPE\x01\x00\x00\x00\x01\x00\x00\x00".to_vec();
        assert!(matches!(
            read_matrix_binary(buf.as_slice()),
            Err(ForgeError::Format(_))
        ));
    }

    #[test]
    fn csv_matrix_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = array![[0.1, 0.2, 0.30000000000000004], [-1e-17, 2.5e10, 0.0]];
        save_matrix_csv(&path, &m).unwrap();
        let back = load_matrix_csv(&path).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("c0,c1,c2\n"));
    }

    #[test]
    fn world_json_round_trip_is_bit_exact() {
        for kind in [MixingKind::Linear, MixingKind::Mlp] {
            let mut rng = crate::rng::stream(21, "world");
            let world = generate_random_world(2, 3, 4, 3, 0.005, kind, &mut rng).unwrap();
            let json = world_to_json(
                &world,
                Some(Provenance {
                    config_hash: "deadbeef".into(),
                    seed: 21,
                }),
            )
            .unwrap();
            let back = world_from_json(&json).unwrap();
            assert_eq!(world, back);
            let json2 = world_to_json(
                &back,
                Some(Provenance {
                    config_hash: "deadbeef".into(),
                    seed: 21,
                }),
            )
            .unwrap();
            assert_eq!(json, json2);
        }
    }

    #[test]
    fn world_json_has_expected_keys() {
        let mut rng = crate::rng::stream(22, "world");
        let world = generate_random_world(2, 3, 4, 3, 0.005, MixingKind::Linear, &mut rng).unwrap();
        let json = world_to_json(&world, None).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        for key in ["n", "d_z", "sigma2", "atoms", "concepts", "gmm", "mixing"] {
            assert!(value.get(key).is_some(), "missing key {key}");
        }
        assert_eq!(value["n"], 2);
        assert_eq!(value["sigma2"], 0.005);
        assert_eq!(value["atoms"].as_array().unwrap().len(), 6);
        let c0 = &value["concepts"][0];
        assert!(c0.get("atom_indices").is_some());
        assert!(c0.get("valuation").is_some());
        // Uniform noise stays at the top level only.
        assert!(c0.get("noise_variance").is_none());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        use crate::learner::{train, EncoderKind, StructureMode, TrainConfig};
        use crate::sampler::generate_dataset;
        use crate::world::{generate_random_world, MixingKind};

        let mut rng = crate::rng::stream(7, "world");
        let world = generate_random_world(2, 3, 4, 3, 0.03, MixingKind::Linear, &mut rng).unwrap();
        let mut srng = crate::rng::stream(7, "sampler");
        let data = generate_dataset(&world.system, &world.gmm, &world.mixing, &mut srng, 200).unwrap();
        let config = TrainConfig {
            epochs: 2,
            encoder: EncoderKind::Mlp,
            structure: StructureMode::KnownStructure,
            seed: 7,
            ..TrainConfig::default()
        };
        let structure: Vec<Vec<usize>> = world
            .system
            .concepts()
            .iter()
            .map(|c| c.atom_indices.clone())
            .collect();
        let (model, _) = train(&data, 2, Some(&structure), &config).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.cfcp");
        save_checkpoint(&path, &model, &config).unwrap();
        let (back, back_config) = load_checkpoint(&path).unwrap();
        assert_eq!(back_config, config);
        assert_eq!(back.encoder.activation, model.encoder.activation);
        assert_eq!(back.heads.len(), model.heads.len());
        for (a, b) in model.flat_params().iter().zip(back.flat_params().iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (ha, hb) in model.heads.iter().zip(back.heads.iter()) {
            assert_eq!(ha.slots, hb.slots);
        }
    }

    #[test]
    fn checkpoint_rejects_corrupt_input() {
        assert!(matches!(
            read_checkpoint(&b"XXXX"[..]),
            Err(ForgeError::Format(_))
        ));
        // Truncated header length.
        let mut buf = b"CFCP".to_vec();
        buf.extend_from_slice(&100u32.to_le_bytes());
        buf.extend_from_slice(b"{}");
        assert!(read_checkpoint(buf.as_slice()).is_err());
    }

    #[test]
    fn checkpoint_rejects_parameter_count_mismatch() {
        let model = Model {
            encoder: EncoderMlp {
                layers: vec![DenseLayer {
                    w: Array2::zeros((2, 4)),
                    b: Array1::zeros(2),
                }],
                activation: Activation::LeakyRelu,
            },
            heads: vec![Head {
                alpha: 0.0,
                beta: Array1::ones(2),
                gamma: Array1::zeros(2),
                slots: vec![0, 1],
            }],
        };
        let config = TrainConfig::default();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &model, &config).unwrap();
        // Chop off the last parameter's bytes.
        buf.truncate(buf.len() - 8);
        assert!(read_checkpoint(buf.as_slice()).is_err());
    }

    #[test]
    fn history_csv_round_trip() {
        use crate::learner::EpochLoss;

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        let history = vec![
            EpochLoss {
                epoch: 0,
                total_loss: 1.386294361119890_6,
                ce_loss: 1.386,
                l1_loss: 0.0002943611198906,
            },
            EpochLoss {
                epoch: 1,
                total_loss: 0.9,
                ce_loss: 0.85,
                l1_loss: 0.05,
            },
        ];
        save_history_csv(&path, &history).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("epoch,total_loss,ce_loss,l1_loss\n"));
        let back = load_history_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in history.iter().zip(back.iter()) {
            assert_eq!(a.epoch, b.epoch);
            assert_eq!(a.total_loss.to_bits(), b.total_loss.to_bits());
            assert_eq!(a.ce_loss.to_bits(), b.ce_loss.to_bits());
            assert_eq!(a.l1_loss.to_bits(), b.l1_loss.to_bits());
        }
    }

    #[test]
    fn heterogeneous_noise_round_trips() {
        let atoms = crate::concepts::AtomicConceptSet::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let system = crate::concepts::EnvironmentSystem::new(
            atoms,
            vec![
                crate::concepts::ConceptSpec {
                    atom_indices: vec![0],
                    valuation: vec![0.1],
                    noise_variance: 0.005,
                },
                crate::concepts::ConceptSpec {
                    atom_indices: vec![1],
                    valuation: vec![-0.2],
                    noise_variance: 0.02,
                },
                crate::concepts::ConceptSpec {
                    atom_indices: vec![0, 1],
                    valuation: vec![0.0, 0.0],
                    noise_variance: 0.005,
                },
            ],
        )
        .unwrap();
        let gmm = crate::world::GmmBase::new(vec![1.0], array![[0.0, 0.0]], array![[1.0, 1.0]])
            .unwrap();
        let mixing = MixingFunction::linear(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let world = World::new(system, gmm, mixing).unwrap();
        let json = world_to_json(&world, None).unwrap();
        let back = world_from_json(&json).unwrap();
        assert_eq!(world, back);
    }
}
