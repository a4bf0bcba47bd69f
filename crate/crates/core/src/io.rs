//! File formats: sample CSV (header `value`) with a JSON sidecar, and JSON
//! for mixing distributions and configuration files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::model::{ComponentFamily, MixingDistribution, Provenance, Sample};

/// Contents of the metadata file written next to a sample CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetadata {
    pub seed: u64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<ComponentFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing: Option<MixingDistribution>,
}

/// `samples/foo.csv` → `samples/foo.meta.json`
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

#[derive(Serialize, Deserialize)]
struct Row {
    value: f64,
}

pub fn write_sample(sample: &Sample, csv_path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(csv_path)?;
    for &value in sample.values() {
        w.serialize(Row { value })?;
    }
    w.flush()?;
    let meta = SampleMetadata {
        seed: sample.seed,
        n: sample.len(),
        family: sample.provenance.as_ref().map(|p| p.family),
        mixing: sample.provenance.as_ref().map(|p| p.mixing.clone()),
    };
    write_json(&meta, &sidecar_path(csv_path))
}

/// Reads a sample CSV; the sidecar is optional and supplies seed and provenance.
pub fn read_sample(csv_path: &Path) -> Result<Sample> {
    let mut r = csv::Reader::from_path(csv_path)?;
    let headers = r.headers()?.clone();
    if headers.len() != 1 || &headers[0] != "value" {
        return Err(contract(format!(
            "{}: expected a single `value` column, found {:?}",
            csv_path.display(),
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let values = r
        .deserialize::<Row>()
        .map(|row| row.map(|r| r.value))
        .collect::<std::result::Result<Vec<f64>, csv::Error>>()?;
    let meta_path = sidecar_path(csv_path);
    let mut sample;
    if meta_path.exists() {
        let meta: SampleMetadata = read_json(&meta_path)?;
        if meta.n != values.len() {
            return Err(contract(format!(
                "{} declares n = {} but the CSV holds {} rows",
                meta_path.display(),
                meta.n,
                values.len()
            )));
        }
        sample = Sample::new(values, meta.seed)?;
        if let (Some(family), Some(mixing)) = (meta.family, meta.mixing) {
            sample = sample.with_provenance(Provenance { family, mixing });
        }
    } else {
        sample = Sample::new(values, 0)?;
    }
    Ok(sample)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let reader = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(reader)?)
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_mixture;

    #[test]
    fn sample_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let g = MixingDistribution::from_pairs(&[(0.0, 1.0), (3.0, 0.5)], &[0.25, 0.75]).unwrap();
        let s = sample_mixture(ComponentFamily::NormalFreeVariance, &g, 50, 9).unwrap();
        write_sample(&s, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("value\n"));
        assert_eq!(read_sample(&path).unwrap(), s);
    }

    #[test]
    fn csv_without_sidecar_gets_seed_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plain.csv");
        std::fs::write(&path, "value\n1\n2\n5\n").unwrap();
        let s = read_sample(&path).unwrap();
        assert_eq!(s.values(), &[1.0, 2.0, 5.0]);
        assert_eq!(s.seed, 0);
        assert!(s.provenance.is_none());
    }

    #[test]
    fn wrong_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x\n1\n").unwrap();
        assert!(read_sample(&path).is_err());
    }
}
