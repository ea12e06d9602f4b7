//! CSV and JSON file formats.
//!
//! * datasets: `x1,x2,label` with labels `1` / `-1`, floats at 17 significant digits
//! * kernel pairs: `i,j`; kernel estimates: `i,j,estimate,shots`
//! * boundary grids: `x1,x2,f`

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::point::Point2;
use crate::shot_sim::KernelEstimate;
use crate::svm::{Label, LabeledDataset};
use crate::{Error, Result};

/// 17 significant digits: enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_dataset<W: Write>(w: W, data: &LabeledDataset) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["x1", "x2", "label"])?;
    for (p, l) in data.iter() {
        wr.write_record([fmt_f64(p.x1), fmt_f64(p.x2), i8::from(l).to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(r: R) -> Result<LabeledDataset> {
    let mut rd = csv::Reader::from_reader(r);
    let mut data = LabeledDataset::default();
    for (n, rec) in rd.records().enumerate() {
        let rec = rec?;
        let field = |k: usize| -> Result<&str> {
            rec.get(k).ok_or_else(|| Error::InvalidDataset(format!("row {n}: missing column {k}")))
        };
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| Error::InvalidDataset(format!("row {n}: bad number '{s}'")))
        };
        let label: i8 = field(2)?
            .trim()
            .parse()
            .map_err(|_| Error::InvalidDataset(format!("row {n}: bad label")))?;
        let label = Label::try_from(label).map_err(Error::InvalidDataset)?;
        let p = Point2::new(parse(field(0)?)?, parse(field(1)?)?);
        if !p.is_finite() {
            return Err(Error::InvalidDataset(format!("row {n}: non-finite coordinate")));
        }
        data.push(p, label);
    }
    Ok(data)
}

pub fn save_dataset(path: impl AsRef<Path>, data: &LabeledDataset) -> Result<()> {
    write_dataset(File::create(path)?, data)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    read_dataset(File::open(path)?)
}

pub fn read_pairs<R: Read>(r: R) -> Result<Vec<(usize, usize)>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rd.deserialize() {
        let (i, j): (usize, usize) = rec?;
        out.push((i, j));
    }
    Ok(out)
}

pub fn write_estimates<W: Write>(w: W, est: &[KernelEstimate]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["i", "j", "estimate", "shots"])?;
    for e in est {
        wr.write_record([e.i.to_string(), e.j.to_string(), fmt_f64(e.estimate), e.shots.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn save_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}
