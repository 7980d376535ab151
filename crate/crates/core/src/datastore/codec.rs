//! Binary framing shared by dataset blobs and prediction files.
//!
//! ```text
//! "NFLD" | version u32 | N u32 | K u32 | count u64 | count × record
//! ```
//!
//! Dataset record: `id u64 | K × (x f64, h f64) | K × label u8 |
//! N·K × (re f32, im f32) column-major | flag u8 | [K × λ f64, K × p f64, se f64]`.
//! Flag bit 0 marks an oracle target, bit 1 an exhausted oracle budget.
//!
//! Prediction record: `id u64 | task u8 | K × label u8` for classification
//! or `id u64 | task u8 | K × λ f64 | K × p f64` for precoding.
//!
//! Everything is little-endian. Decoding is strict: unknown tags, flags or
//! trailing bytes are errors.

use nalgebra::DMatrix;
use num_complex::Complex32;

use super::{
    Dataset, DatasetRecord, OracleTarget, Prediction, PredictionRecord, PredictionSet, FORMAT_VERSION, MAGIC,
};
use crate::geometry::{FieldLabel, UserPos};
use crate::{Error, Result};

const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8;
const ORACLE_PRESENT: u8 = 1;
const ORACLE_EXHAUSTED: u8 = 2;
const TASK_CLASSIFY: u8 = 0;
const TASK_PRECODE: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlobHeader {
    pub version: u32,
    pub n_antennas: u32,
    pub k_users: u32,
    pub count: u64,
}

fn label_byte(l: FieldLabel) -> u8 {
    match l {
        FieldLabel::Far => 0,
        FieldLabel::Near => 1,
    }
}

fn dims(n: usize, k: usize) -> Result<(u32, u32)> {
    let n = u32::try_from(n).map_err(|_| Error::InvalidConfig("N does not fit in u32".into()))?;
    let k = u32::try_from(k).map_err(|_| Error::InvalidConfig("K does not fit in u32".into()))?;
    Ok((n, k))
}

fn put_header(out: &mut Vec<u8>, n: u32, k: u32, count: usize) {
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&k.to_le_bytes());
    out.extend_from_slice(&(count as u64).to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn expect_len(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::InvalidConfig(format!("{what}: expected {expected} entries, got {got}")));
    }
    Ok(())
}

pub fn encode_dataset(d: &Dataset) -> Result<Vec<u8>> {
    let (n, k) = (d.cfg.n_antennas, d.k_users);
    let (n32, k32) = dims(n, k)?;
    let mut out = Vec::with_capacity(HEADER_LEN + d.records.len() * (9 + 17 * k + 8 * n * k));
    put_header(&mut out, n32, k32, d.records.len());
    for r in &d.records {
        expect_len("users", k, r.users.len())?;
        expect_len("labels", k, r.labels.len())?;
        if r.channels.shape() != (n, k) {
            return Err(Error::InvalidConfig(format!(
                "channel matrix is {:?}, expected ({n}, {k})",
                r.channels.shape()
            )));
        }
        out.extend_from_slice(&r.record_id.to_le_bytes());
        for u in &r.users {
            put_f64s(&mut out, &[u.x_m, u.h_m]);
        }
        out.extend(r.labels.iter().map(|&l| label_byte(l)));
        // nalgebra storage is column-major
        for c in r.channels.iter() {
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }
        match &r.oracle {
            None => out.push(0),
            Some(o) => {
                expect_len("oracle duals", k, o.duals.len())?;
                expect_len("oracle powers", k, o.powers.len())?;
                let flag = ORACLE_PRESENT | if o.budget_exhausted { ORACLE_EXHAUSTED } else { 0 };
                out.push(flag);
                put_f64s(&mut out, &o.duals);
                put_f64s(&mut out, &o.powers);
                put_f64s(&mut out, &[o.sum_se]);
            }
        }
    }
    Ok(out)
}

pub fn encode_predictions(p: &PredictionSet) -> Result<Vec<u8>> {
    let k = p.k_users;
    let (n32, k32) = dims(p.n_antennas, k)?;
    let mut out = Vec::new();
    put_header(&mut out, n32, k32, p.records.len());
    for r in &p.records {
        out.extend_from_slice(&r.record_id.to_le_bytes());
        match &r.prediction {
            Prediction::Classify(labels) => {
                expect_len("predicted labels", k, labels.len())?;
                out.push(TASK_CLASSIFY);
                out.extend(labels.iter().map(|&l| label_byte(l)));
            }
            Prediction::Precode { duals, powers } => {
                expect_len("predicted duals", k, duals.len())?;
                expect_len("predicted powers", k, powers.len())?;
                out.push(TASK_PRECODE);
                put_f64s(&mut out, duals);
                put_f64s(&mut out, powers);
            }
        }
    }
    Ok(out)
}

/// Bounds-checked little-endian cursor that reports byte offsets.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn error(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos as u64,
            msg: msg.into(),
        }
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < len {
            return Err(self.error(format!("unexpected end of file reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64(what)).collect()
    }

    fn label(&mut self) -> Result<FieldLabel> {
        match self.u8("label")? {
            0 => Ok(FieldLabel::Far),
            1 => Ok(FieldLabel::Near),
            b => {
                self.pos -= 1;
                Err(self.error(format!("invalid label byte {b}")))
            }
        }
    }

    fn header(&mut self) -> Result<BlobHeader> {
        if self.take(4, "magic")? != MAGIC {
            self.pos = 0;
            return Err(self.error("bad magic"));
        }
        let version = self.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let h = BlobHeader {
            version,
            n_antennas: self.u32("N")?,
            k_users: self.u32("K")?,
            count: self.u64("count")?,
        };
        if h.n_antennas == 0 || h.k_users == 0 {
            return Err(self.error("N and K must be positive"));
        }
        Ok(h)
    }

    /// Rejects counts that cannot fit in the remaining bytes before anything
    /// is allocated.
    fn check_count(&self, count: u64, min_record: usize) -> Result<usize> {
        let remaining = (self.buf.len() - self.pos) as u128;
        if count as u128 * min_record as u128 > remaining {
            return Err(self.error(format!("{count} records cannot fit in {remaining} bytes")));
        }
        Ok(count as usize)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.error("trailing bytes after last record"));
        }
        Ok(())
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<(BlobHeader, Vec<DatasetRecord>)> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let h = c.header()?;
    let (n, k) = (h.n_antennas as usize, h.k_users as usize);
    let min_record = 8 + 17 * k + 8 * n * k + 1;
    let count = c.check_count(h.count, min_record)?;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let record_id = c.u64("record id")?;
        let users = (0..k)
            .map(|_| {
                Ok(UserPos {
                    x_m: c.f64("user x")?,
                    h_m: c.f64("user h")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let labels = (0..k).map(|_| c.label()).collect::<Result<Vec<_>>>()?;
        let mut entries = Vec::with_capacity(n * k);
        for _ in 0..n * k {
            entries.push(Complex32::new(c.f32("channel")?, c.f32("channel")?));
        }
        let channels = DMatrix::from_vec(n, k, entries);
        let flag = c.u8("oracle flag")?;
        if flag & !(ORACLE_PRESENT | ORACLE_EXHAUSTED) != 0 || flag == ORACLE_EXHAUSTED {
            c.pos -= 1;
            return Err(c.error(format!("invalid oracle flag {flag:#04x}")));
        }
        let oracle = if flag & ORACLE_PRESENT != 0 {
            Some(OracleTarget {
                duals: c.f64s(k, "oracle duals")?,
                powers: c.f64s(k, "oracle powers")?,
                sum_se: c.f64("oracle se")?,
                budget_exhausted: flag & ORACLE_EXHAUSTED != 0,
            })
        } else {
            None
        };
        records.push(DatasetRecord {
            record_id,
            users,
            labels,
            channels,
            oracle,
        });
    }
    c.finish()?;
    Ok((h, records))
}

pub fn decode_predictions(bytes: &[u8]) -> Result<PredictionSet> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let h = c.header()?;
    let k = h.k_users as usize;
    let count = c.check_count(h.count, 9 + k)?;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let record_id = c.u64("record id")?;
        let prediction = match c.u8("task tag")? {
            TASK_CLASSIFY => Prediction::Classify((0..k).map(|_| c.label()).collect::<Result<_>>()?),
            TASK_PRECODE => Prediction::Precode {
                duals: c.f64s(k, "predicted duals")?,
                powers: c.f64s(k, "predicted powers")?,
            },
            t => {
                c.pos -= 1;
                return Err(c.error(format!("unknown task tag {t}")));
            }
        };
        records.push(PredictionRecord {
            record_id,
            prediction,
        });
    }
    c.finish()?;
    Ok(PredictionSet {
        n_antennas: h.n_antennas as usize,
        k_users: k,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ArrayConfig;

    fn tiny() -> Dataset {
        let cfg = ArrayConfig::half_wavelength(2, 30e9, 15.0, 0.0).unwrap();
        Dataset {
            cfg,
            k_users: 1,
            seed: 3,
            snr_db: 10.0,
            with_oracle: true,
            records: vec![DatasetRecord {
                record_id: 0x0102_0304_0506_0708,
                users: vec![UserPos { x_m: 1.5, h_m: -2.0 }],
                labels: vec![FieldLabel::Near],
                channels: DMatrix::from_vec(2, 1, vec![Complex32::new(1.0, -1.0), Complex32::new(0.5, 0.25)]),
                oracle: Some(OracleTarget {
                    duals: vec![1.0],
                    powers: vec![1.0],
                    sum_se: 3.25,
                    budget_exhausted: true,
                }),
            }],
        }
    }

    #[test]
    fn known_layout() {
        let b = encode_dataset(&tiny()).unwrap();
        assert_eq!(&b[..4], b"NFLD");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[8..12], &2u32.to_le_bytes());
        assert_eq!(&b[12..16], &1u32.to_le_bytes());
        assert_eq!(&b[16..24], &1u64.to_le_bytes());
        assert_eq!(&b[24..32], &[8, 7, 6, 5, 4, 3, 2, 1]);
        assert_eq!(&b[32..40], &1.5f64.to_le_bytes());
        assert_eq!(&b[40..48], &(-2.0f64).to_le_bytes());
        assert_eq!(b[48], 1);
        assert_eq!(&b[49..53], &1.0f32.to_le_bytes());
        assert_eq!(&b[53..57], &(-1.0f32).to_le_bytes());
        assert_eq!(&b[57..61], &0.5f32.to_le_bytes());
        assert_eq!(b[65], ORACLE_PRESENT | ORACLE_EXHAUSTED);
        assert_eq!(&b[82..90], &3.25f64.to_le_bytes());
        assert_eq!(b.len(), 90);
    }

    #[test]
    fn every_truncation_is_a_format_error() {
        let b = encode_dataset(&tiny()).unwrap();
        for len in 0..b.len() {
            match decode_dataset(&b[..len]) {
                Err(Error::Format { offset, .. }) => assert!(offset as usize <= len),
                other => panic!("length {len}: {other:?}"),
            }
        }
    }

    #[test]
    fn corrupt_fields() {
        let b = encode_dataset(&tiny()).unwrap();
        let mut v = b.clone();
        v[4] = 2;
        assert!(matches!(
            decode_dataset(&v),
            Err(Error::VersionMismatch { found: 2, expected: 1 })
        ));
        let mut v = b.clone();
        v[48] = 7;
        assert!(matches!(decode_dataset(&v), Err(Error::Format { offset: 48, .. })));
        let mut v = b.clone();
        v[65] = ORACLE_EXHAUSTED;
        assert!(matches!(decode_dataset(&v), Err(Error::Format { offset: 65, .. })));
        let mut v = b.clone();
        v.push(0);
        assert!(matches!(decode_dataset(&v), Err(Error::Format { offset: 90, .. })));
        let mut v = b.clone();
        v[0] = b'X';
        assert!(matches!(decode_dataset(&v), Err(Error::Format { offset: 0, .. })));
        let mut v = b;
        v[16..24].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(decode_dataset(&v), Err(Error::Format { offset: 24, .. })));
    }

    #[test]
    fn encode_rejects_inconsistent_records() {
        let mut d = tiny();
        d.records[0].labels.push(FieldLabel::Far);
        assert!(encode_dataset(&d).is_err());
        let mut d = tiny();
        d.records[0].oracle.as_mut().unwrap().powers.clear();
        assert!(encode_dataset(&d).is_err());
        let mut d = tiny();
        d.records[0].channels = DMatrix::zeros(3, 1);
        assert!(encode_dataset(&d).is_err());
    }

    #[test]
    fn prediction_round_trip_and_bad_tag() {
        let p = PredictionSet {
            n_antennas: 4,
            k_users: 2,
            records: vec![
                PredictionRecord {
                    record_id: 9,
                    prediction: Prediction::Classify(vec![FieldLabel::Far, FieldLabel::Near]),
                },
                PredictionRecord {
                    record_id: 10,
                    prediction: Prediction::Precode {
                        duals: vec![0.25, 0.75],
                        powers: vec![0.5, 0.5],
                    },
                },
            ],
        };
        let b = encode_predictions(&p).unwrap();
        assert_eq!(b.len(), 24 + (9 + 2) + (9 + 32));
        assert_eq!(decode_predictions(&b).unwrap(), p);
        let mut v = b;
        v[32] = 5;
        assert!(matches!(decode_predictions(&v), Err(Error::Format { offset: 32, .. })));
    }
}
