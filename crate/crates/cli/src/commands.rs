use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::json;

use nearfield::beams::{
    angular_codebook, focus_vector, gain_map, polar_codebook, steer_vector, write_gain_map_csv, Codebook,
};
use nearfield::datastore::{self, read_predictions, score, write_atomic, GenerateSpec};
use nearfield::fieldsplit::{add_csi_noise, calibrate_threshold, confusion, label_for, FarFieldFitter, FieldStat};
use nearfield::geometry::{derive_seed, near_channel, stream_rng, ArrayConfig, ChannelMatrix, FieldLabel, UserPos};
use nearfield::precoding::{
    codebook_precoder, equal_powers, mrt, oracle_lambda, same_angle_sweep, sum_se, zf_waterfill, PowerRule,
    PrecodeProblem, SameAngleSweep,
};
use nearfield::{Error, Result};

use crate::config::{BeamSpec, RunConfig};

pub const SWEEP_HEADER: [&str; 3] = ["snr_db", "scheme", "sum_se"];
pub const LDMA_HEADER: [&str; 3] = ["delta_r_m", "se_ldma", "se_sdma"];
pub const CLASSIFY_HEADER: [&str; 4] = ["csi_snr_db", "accuracy", "precision_near", "recall_near"];
pub const SCHEMES: [&str; 5] = ["mrt", "zf", "sdma", "ldma", "oracle"];

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

fn out_path(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out_dir)?;
    Ok(cfg.out_dir.join(name))
}

/// Train, validation and test datasets with disjoint record ids.
pub fn gen(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let g = &cfg.gen;
    let splits = [("train", g.train), ("val", g.val), ("test", g.test)];
    if let Some((name, _)) = splits.iter().find(|s| s.1 == 0) {
        return Err(Error::InvalidConfig(format!("gen.{name} must be at least 1")));
    }
    let mut first = 0u64;
    let mut written = vec![];
    for (name, count) in splits {
        let spec = GenerateSpec {
            cfg: cfg.array,
            path_gain: cfg.path_gain,
            k_users: cfg.k_users,
            user_box: cfg.user_box,
            count,
            seed: cfg.seed,
            first_record_id: first,
            snr_db: g.snr_db,
            with_oracle: g.with_oracle,
            oracle_budget: g.oracle_budget,
        };
        let data = datastore::generate(&spec)?;
        let path = out_path(cfg, &format!("{name}.json"))?;
        let manifest = datastore::write(&data, &path)?;
        println!("{name}: {count} records, sha256 {}", manifest.blob_sha256);
        written.push(path);
        first += count as u64;
    }
    Ok(written)
}

fn codebooks(cfg: &RunConfig, array: &ArrayConfig) -> Result<(Codebook, Codebook)> {
    let c = &cfg.codebook;
    let sector = nearfield::beams::ServiceSector::from_box(array, &cfg.user_box);
    Ok((
        angular_codebook(array, sector, c.n_angles)?,
        polar_codebook(array, sector, c.n_angles, c.n_dist_slots, c.r_min_m)?,
    ))
}

/// Sum SE of every scheme; ZF is NaN when the channel is rank deficient.
fn scheme_se(
    prob: &PrecodeProblem,
    sdma: &Codebook,
    ldma: &Codebook,
    rule: PowerRule,
    budget: usize,
) -> Result<[f64; 5]> {
    let k = prob.n_users();
    let m = sum_se(prob, &mrt(prob, &equal_powers(k, prob.total_power))?)?;
    let z = match zf_waterfill(prob) {
        Ok(sol) => sum_se(prob, &sol)?,
        Err(Error::RankDeficient { .. }) => f64::NAN,
        Err(e) => return Err(e),
    };
    let s = sum_se(prob, &codebook_precoder(prob, sdma, rule)?)?;
    let l = sum_se(prob, &codebook_precoder(prob, ldma, rule)?)?;
    let o = oracle_lambda(prob, budget)?.sum_se;
    Ok([m, z, s, l, o])
}

pub fn sweep_snr(cfg: &RunConfig) -> Result<PathBuf> {
    let p = &cfg.sweep_snr;
    if p.snr_db.is_empty() || p.snr_db.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidConfig("sweep_snr.snr_db must be a non-empty list of numbers".into()));
    }
    let (array, channels): (ArrayConfig, Vec<ChannelMatrix>) = match &p.dataset {
        Some(path) => {
            let d = datastore::read(path)?;
            (d.cfg, d.records.iter().map(|r| r.channel_matrix()).collect())
        }
        None => {
            if p.records == 0 {
                return Err(Error::InvalidConfig("sweep_snr.records must be at least 1".into()));
            }
            let spec = GenerateSpec {
                cfg: cfg.array,
                path_gain: cfg.path_gain,
                k_users: cfg.k_users,
                user_box: cfg.user_box,
                count: p.records,
                seed: cfg.seed,
                with_oracle: false,
                ..GenerateSpec::default()
            };
            let d = datastore::generate(&spec)?;
            (d.cfg, d.records.iter().map(|r| r.channel_matrix()).collect())
        }
    };
    if channels.is_empty() {
        return Err(Error::InvalidConfig("dataset has no records".into()));
    }
    let (sdma, ldma) = codebooks(cfg, &array)?;
    let mut rows = vec![];
    for &snr in &p.snr_db {
        let per_record = channels
            .par_iter()
            .map(|h| {
                let prob = PrecodeProblem::from_snr_db(h.clone(), snr)?;
                scheme_se(&prob, &sdma, &ldma, cfg.codebook.power_rule, p.oracle_budget)
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, name) in SCHEMES.iter().enumerate() {
            let mean = per_record.iter().map(|v| v[i]).sum::<f64>() / per_record.len() as f64;
            rows.push(vec![snr.to_string(), name.to_string(), mean.to_string()]);
        }
    }
    let path = out_path(cfg, "sweep_snr.csv")?;
    write_csv(&path, &SWEEP_HEADER, &rows)?;
    Ok(path)
}

pub fn ldma_vs_sdma(cfg: &RunConfig) -> Result<PathBuf> {
    let p = &cfg.ldma_vs_sdma;
    let sweep = SameAngleSweep {
        near_r_m: p.near_r_m,
        deltas_m: p.deltas_m.clone(),
        n_seeds: p.n_seeds,
        snr_db: p.snr_db,
        path_gain: cfg.path_gain,
        power_rule: cfg.codebook.power_rule,
        user_box: cfg.user_box,
        n_angles: cfg.codebook.n_angles,
        n_dist_slots: cfg.codebook.n_dist_slots,
        r_min_m: cfg.codebook.r_min_m,
    };
    let rows: Vec<Vec<String>> = same_angle_sweep(&cfg.array, &sweep, cfg.seed)?
        .iter()
        .map(|g| vec![g.delta_r_m.to_string(), g.se_ldma.to_string(), g.se_sdma.to_string()])
        .collect();
    let path = out_path(cfg, "ldma_vs_sdma.csv")?;
    write_csv(&path, &LDMA_HEADER, &rows)?;
    Ok(path)
}

fn stats(
    fitter: &FarFieldFitter,
    h: &[nalgebra::DVector<nearfield::C64>],
    csi_snr_db: Option<f64>,
    noise_seed: u64,
) -> Result<Vec<f64>> {
    h.par_iter()
        .enumerate()
        .map(|(i, h)| {
            let s = match csi_snr_db {
                None => fitter.stat(h)?,
                Some(snr) => fitter.stat(&add_csi_noise(h, snr, &mut stream_rng(noise_seed, i as u64)))?,
            };
            Ok(s.0)
        })
        .collect()
}

/// Calibrates a threshold on the validation population and reports test
/// metrics at every CSI SNR.
pub fn classify(cfg: &RunConfig) -> Result<PathBuf> {
    let p = &cfg.classify;
    if p.val_per_class == 0 || p.test_per_class == 0 {
        return Err(Error::InvalidConfig("classify needs non-empty validation and test splits".into()));
    }
    if p.noise_draws == 0 || p.csi_snr_db.is_empty() {
        return Err(Error::InvalidConfig("classify needs noise_draws >= 1 and a CSI SNR grid".into()));
    }
    if p.csi_snr_db.iter().flatten().any(|s| !s.is_finite()) {
        return Err(Error::InvalidConfig("CSI SNR values must be finite".into()));
    }
    let array = &cfg.array;
    let grid = p.angle_grid_size.unwrap_or(4 * array.n_antennas);
    let fitter = FarFieldFitter::new(array, grid)?;
    let channels = |users: &[(UserPos, FieldLabel)]| -> Result<Vec<_>> {
        users
            .iter()
            .map(|(u, _)| Ok(near_channel(array, *u, cfg.path_gain)?.entries))
            .collect()
    };
    let val = p.population(p.val_per_class).sample(array, derive_seed(cfg.seed, 0))?;
    let test = p.population(p.test_per_class).sample(array, derive_seed(cfg.seed, 1))?;
    let (val_h, test_h) = (channels(&val)?, channels(&test)?);
    let test_truth: Vec<FieldLabel> = test.iter().map(|t| t.1).collect();

    let mut rows = vec![];
    for (li, &snr) in p.csi_snr_db.iter().enumerate() {
        let draws = if snr.is_some() { p.noise_draws } else { 1 };
        let level_seed = derive_seed(cfg.seed, 2 + li as u64);
        let (mut acc, mut prec, mut rec) = (0.0, 0.0, 0.0);
        for d in 0..draws as u64 {
            let vs = stats(&fitter, &val_h, snr, derive_seed(level_seed, 2 * d))?;
            let ts = stats(&fitter, &test_h, snr, derive_seed(level_seed, 2 * d + 1))?;
            let samples: Vec<(f64, FieldLabel)> = vs.into_iter().zip(val.iter().map(|v| v.1)).collect();
            let threshold = calibrate_threshold(&samples)?.threshold;
            let pred: Vec<FieldLabel> = ts.iter().map(|&s| label_for(FieldStat(s), threshold)).collect();
            let c = confusion(&pred, &test_truth)?;
            acc += c.accuracy;
            prec += c.near.precision;
            rec += c.near.recall;
        }
        let n = draws as f64;
        let label = snr.map_or("inf".to_string(), |s| s.to_string());
        rows.push(vec![label, (acc / n).to_string(), (prec / n).to_string(), (rec / n).to_string()]);
    }
    let path = out_path(cfg, "classify.csv")?;
    write_csv(&path, &CLASSIFY_HEADER, &rows)?;
    Ok(path)
}

pub fn gainmap(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate_gainmap()?;
    let g = &cfg.gainmap;
    let array = &cfg.array;
    let beam = match g.beam {
        BeamSpec::Focus { angle_rad, r_m } => {
            if !(r_m.is_finite() && r_m > 0.0) {
                return Err(Error::InvalidConfig("focus distance must be positive".into()));
            }
            focus_vector(array, array.from_polar(angle_rad, r_m))?
        }
        BeamSpec::Steer { angle_rad } => steer_vector(array, angle_rad),
    };
    let cells = gain_map(array, &beam, &g.angles_rad.values(), &g.distances_m.values())?;
    let mut bytes = Vec::new();
    write_gain_map_csv(&mut bytes, &cells)?;
    let path = out_path(cfg, "gainmap.csv")?;
    write_atomic(&path, &bytes)?;
    Ok(path)
}

pub fn score_cmd(cfg: &RunConfig) -> Result<PathBuf> {
    let (Some(data_path), Some(pred_path)) = (&cfg.score.dataset, &cfg.score.predictions) else {
        return Err(Error::InvalidConfig("score needs score.dataset and score.predictions".into()));
    };
    let data = datastore::read(data_path)?;
    let preds = read_predictions(pred_path)?;
    let report = score(&data, &preds)?;
    let classify = report.classify.map(|c| {
        json!({
            "accuracy": c.accuracy,
            "balanced_accuracy": c.balanced_accuracy,
            "precision_near": c.near.precision,
            "recall_near": c.near.recall,
            "precision_far": c.far.precision,
            "recall_far": c.far.recall,
            "counts": {
                "near_as_near": c.near_as_near,
                "near_as_far": c.near_as_far,
                "far_as_near": c.far_as_near,
                "far_as_far": c.far_as_far,
            },
        })
    });
    let precode = report.precode.map(|p| {
        json!({
            "scored": p.scored,
            "infeasible": p.infeasible,
            "mean_ratio": p.mean_ratio,
            "mean_se": p.mean_se,
            "mean_oracle_se": p.mean_oracle_se,
        })
    });
    let doc = json!({ "classify": classify, "precode": precode });
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    print!("{text}");
    let path = out_path(cfg, "score.json")?;
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}
