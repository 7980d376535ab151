//! Datasets of channel realisations with field labels and oracle precoding
//! targets, and scoring of externally produced predictions.
//!
//! A dataset on disk is a JSON manifest plus a little-endian binary blob next
//! to it (same stem, `.nfld` extension). The manifest carries the blob's
//! SHA-256. Predictions use the same binary framing in a single file.

mod codec;
mod score;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex32;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::{
    derive_seed, label_field, near_channel, sample_users, ArrayConfig, ChannelMatrix, ChannelVec, FieldLabel,
    PathGain, UserBox, UserPos,
};
use crate::precoding::{oracle_lambda, PrecodeProblem, DEFAULT_ORACLE_BUDGET};
use crate::{Error, Result, C64};

pub use codec::{decode_dataset, decode_predictions, encode_dataset, encode_predictions, BlobHeader};
pub use score::{score, PrecodeScore, ScoreReport, FEASIBILITY_TOL};

pub const MAGIC: [u8; 4] = *b"NFLD";
pub const FORMAT_VERSION: u32 = 1;
pub const BLOB_EXTENSION: &str = "nfld";

/// Parameters of one generation run.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSpec {
    pub cfg: ArrayConfig,
    pub path_gain: PathGain,
    pub k_users: usize,
    pub user_box: UserBox,
    pub count: usize,
    pub seed: u64,
    /// Id of the first record; ids are consecutive. Record `id` is drawn from
    /// the stream `(seed, id)`, so disjoint id ranges give disjoint splits.
    pub first_record_id: u64,
    /// Transmit SNR `P/σ²` in dB, with `P = 1`.
    pub snr_db: f64,
    pub with_oracle: bool,
    pub oracle_budget: usize,
}

impl Default for GenerateSpec {
    fn default() -> Self {
        Self {
            cfg: ArrayConfig::default(),
            path_gain: PathGain::default(),
            k_users: 4,
            user_box: UserBox::default(),
            count: 1,
            seed: 0,
            first_record_id: 0,
            snr_db: 30.0,
            with_oracle: true,
            oracle_budget: DEFAULT_ORACLE_BUDGET,
        }
    }
}

impl GenerateSpec {
    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        self.user_box.validate()?;
        if self.count == 0 {
            return Err(Error::InvalidConfig("count must be at least 1".into()));
        }
        if self.k_users == 0 {
            return Err(Error::InvalidConfig("k_users must be at least 1".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidConfig("snr_db must be finite".into()));
        }
        if self.with_oracle && self.oracle_budget == 0 {
            return Err(Error::InvalidConfig("oracle budget must be at least 1".into()));
        }
        if self.first_record_id.checked_add(self.count as u64).is_none() {
            return Err(Error::InvalidConfig("record ids overflow u64".into()));
        }
        u32::try_from(self.k_users).map_err(|_| Error::InvalidConfig("k_users too large".into()))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTarget {
    pub duals: Vec<f64>,
    pub powers: Vec<f64>,
    pub sum_se: f64,
    pub budget_exhausted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub record_id: u64,
    pub users: Vec<UserPos>,
    pub labels: Vec<FieldLabel>,
    /// `N × K` as stored.
    pub channels: DMatrix<Complex32>,
    pub oracle: Option<OracleTarget>,
}

impl DatasetRecord {
    /// Stored channels widened to `f64`.
    pub fn channel_matrix(&self) -> ChannelMatrix {
        ChannelMatrix::from_matrix(self.channels.map(|c| C64::new(c.re as f64, c.im as f64)))
    }

    /// The precoding problem the oracle was solved for.
    pub fn problem(&self, snr_db: f64) -> Result<PrecodeProblem> {
        PrecodeProblem::from_snr_db(self.channel_matrix(), snr_db)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub cfg: ArrayConfig,
    pub k_users: usize,
    pub seed: u64,
    pub snr_db: f64,
    pub with_oracle: bool,
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Generates on the global rayon pool. Output does not depend on the number
/// of threads.
pub fn generate(spec: &GenerateSpec) -> Result<Dataset> {
    spec.validate()?;
    let records = (0..spec.count as u64)
        .into_par_iter()
        .map(|i| generate_record(spec, spec.first_record_id + i))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        cfg: spec.cfg,
        k_users: spec.k_users,
        seed: spec.seed,
        snr_db: spec.snr_db,
        with_oracle: spec.with_oracle,
        records,
    })
}

/// [`generate`] on a dedicated pool of `threads` workers.
pub fn generate_with_threads(spec: &GenerateSpec, threads: usize) -> Result<Dataset> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    pool.install(|| generate(spec))
}

fn generate_record(spec: &GenerateSpec, record_id: u64) -> Result<DatasetRecord> {
    let cfg = &spec.cfg;
    let users = sample_users(spec.k_users, &spec.user_box, derive_seed(spec.seed, record_id))?;
    let labels = users.iter().map(|&u| label_field(cfg, u)).collect();
    let cols = users
        .iter()
        .map(|&u| near_channel(cfg, u, spec.path_gain))
        .collect::<Result<Vec<ChannelVec>>>()?;
    let h = ChannelMatrix::from_columns(&cols)?;
    let channels = h.matrix().map(|c| Complex32::new(c.re as f32, c.im as f32));

    let mut record = DatasetRecord {
        record_id,
        users,
        labels,
        channels,
        oracle: None,
    };
    if spec.with_oracle {
        // solve on the stored precision so scoring reproduces the target
        record.oracle = record
            .problem(spec.snr_db)
            .and_then(|p| oracle_lambda(&p, spec.oracle_budget))
            .ok()
            .map(|o| OracleTarget {
                duals: o.duals,
                powers: o.powers,
                sum_se: o.sum_se,
                budget_exhausted: o.budget_exhausted,
            });
    }
    Ok(record)
}

/// JSON manifest. Field order is the canonical key order on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub cfg: ArrayConfig,
    pub k_users: u32,
    pub count: u64,
    pub seed: u64,
    pub snr_db: f64,
    pub with_oracle: bool,
    pub blob_sha256: String,
}

/// Blob path belonging to a manifest path.
pub fn blob_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension(BLOB_EXTENSION)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Writes the blob and then the manifest; returns the manifest.
pub fn write(dataset: &Dataset, manifest_path: &Path) -> Result<Manifest> {
    let blob = encode_dataset(dataset)?;
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        cfg: dataset.cfg,
        k_users: dataset.k_users as u32,
        count: dataset.records.len() as u64,
        seed: dataset.seed,
        snr_db: dataset.snr_db,
        with_oracle: dataset.with_oracle,
        blob_sha256: sha256_hex(&blob),
    };
    write_atomic(&blob_path(manifest_path), &blob)?;
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_atomic(manifest_path, json.as_bytes())?;
    Ok(manifest)
}

pub fn read_manifest(manifest_path: &Path) -> Result<Manifest> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(manifest_path)?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    manifest.cfg.validate()?;
    Ok(manifest)
}

/// Reads and fully validates a dataset. Nothing is returned unless the blob
/// parses completely, agrees with the manifest, and matches its checksum.
pub fn read(manifest_path: &Path) -> Result<Dataset> {
    let manifest = read_manifest(manifest_path)?;
    let blob = fs::read(blob_path(manifest_path))?;
    let (header, records) = decode_dataset(&blob)?;
    let mismatch = |what: &str| Error::Format {
        offset: 0,
        msg: format!("blob header {what} disagrees with manifest"),
    };
    if header.n_antennas as usize != manifest.cfg.n_antennas {
        return Err(mismatch("N"));
    }
    if header.k_users != manifest.k_users {
        return Err(mismatch("K"));
    }
    if header.count != manifest.count {
        return Err(mismatch("count"));
    }
    if sha256_hex(&blob) != manifest.blob_sha256.to_ascii_lowercase() {
        return Err(Error::ChecksumMismatch);
    }
    Ok(Dataset {
        cfg: manifest.cfg,
        k_users: manifest.k_users as usize,
        seed: manifest.seed,
        snr_db: manifest.snr_db,
        with_oracle: manifest.with_oracle,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classify,
    Precode,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Classify(Vec<FieldLabel>),
    Precode { duals: Vec<f64>, powers: Vec<f64> },
}

impl Prediction {
    pub fn task(&self) -> Task {
        match self {
            Prediction::Classify(_) => Task::Classify,
            Prediction::Precode { .. } => Task::Precode,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub record_id: u64,
    pub prediction: Prediction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub n_antennas: usize,
    pub k_users: usize,
    pub records: Vec<PredictionRecord>,
}

impl PredictionSet {
    /// The dataset's own labels and oracle targets, in prediction form.
    pub fn from_truth(dataset: &Dataset, task: Task) -> Result<Self> {
        let records = dataset
            .records
            .iter()
            .map(|r| {
                let prediction = match task {
                    Task::Classify => Prediction::Classify(r.labels.clone()),
                    Task::Precode => {
                        let o = r.oracle.as_ref().ok_or(Error::MissingOracle)?;
                        Prediction::Precode {
                            duals: o.duals.clone(),
                            powers: o.powers.clone(),
                        }
                    }
                };
                Ok(PredictionRecord {
                    record_id: r.record_id,
                    prediction,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            n_antennas: dataset.cfg.n_antennas,
            k_users: dataset.k_users,
            records,
        })
    }
}

pub fn write_predictions(predictions: &PredictionSet, path: &Path) -> Result<()> {
    write_atomic(path, &encode_predictions(predictions)?)
}

pub fn read_predictions(path: &Path) -> Result<PredictionSet> {
    decode_predictions(&fs::read(path)?)
}
