//! Observations `(x, y, z)` and their CSV form.
//!
//! The CSV schema is a header `x,y,z1,...,zq` followed by one record per
//! row, with `y` written as `-1` or `1`. The intercept column, when the model
//! has one, is an ordinary `z` column of ones.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A patient-reported outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn from_sign(y: i64) -> Result<Self> {
        match y {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(Error::Input(format!("label must be -1 or 1, got {other}"))),
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }
}

/// One observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Datum {
    pub x: f64,
    pub y: Label,
    pub z: Vec<f64>,
}

/// `n` observations stored column-wise; `z` is row-major `n × q`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    y: Vec<Label>,
    z: Vec<f64>,
    q: usize,
}

impl Dataset {
    pub fn new(x: Vec<f64>, y: Vec<Label>, z: Vec<f64>, q: usize) -> Result<Self> {
        if x.len() != y.len() || z.len() != x.len() * q {
            return Err(Error::Input(format!(
                "inconsistent dataset shapes: {} x, {} y, {} z entries with q = {q}",
                x.len(),
                y.len(),
                z.len()
            )));
        }
        if x.iter().chain(&z).any(|v| !v.is_finite()) {
            return Err(Error::Input("dataset contains non-finite values".into()));
        }
        Ok(Self { x, y, z, q })
    }

    pub fn empty(q: usize) -> Self {
        Self {
            x: vec![],
            y: vec![],
            z: vec![],
            q,
        }
    }

    pub fn from_records(records: &[Datum], q: usize) -> Result<Self> {
        let mut d = Self::empty(q);
        for r in records {
            d.push(r.clone())?;
        }
        Ok(d)
    }

    pub fn push(&mut self, d: Datum) -> Result<()> {
        if d.z.len() != self.q {
            return Err(Error::Input(format!(
                "record has {} covariates, dataset has {}",
                d.z.len(),
                self.q
            )));
        }
        if !d.x.is_finite() || d.z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("record contains non-finite values".into()));
        }
        self.x.push(d.x);
        self.y.push(d.y);
        self.z.extend_from_slice(&d.z);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Number of covariates, intercept included.
    pub fn dim(&self) -> usize {
        self.q
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[Label] {
        &self.y
    }

    pub fn z_row(&self, i: usize) -> &[f64] {
        &self.z[i * self.q..(i + 1) * self.q]
    }

    pub fn datum(&self, i: usize) -> Datum {
        Datum {
            x: self.x[i],
            y: self.y[i],
            z: self.z_row(i).to_vec(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Datum> + '_ {
        (0..self.len()).map(|i| self.datum(i))
    }

    /// Dataset made of the rows `idx` (with repetition).
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut z = Vec::with_capacity(idx.len() * self.q);
        for &i in idx {
            z.extend_from_slice(self.z_row(i));
        }
        Self {
            x: idx.iter().map(|&i| self.x[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            z,
            q: self.q,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["x".to_string(), "y".to_string()];
        header.extend((1..=self.q).map(|j| format!("z{j}")));
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.x[i].to_string(), (self.y[i].sign() as i64).to_string()];
            row.extend(self.z_row(i).iter().map(|v| v.to_string()));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.len() < 3 || &header[0] != "x" || &header[1] != "y" {
            return Err(Error::Input("CSV header must be x,y,z1..zq with q >= 1".into()));
        }
        let q = header.len() - 2;
        for (j, name) in header.iter().skip(2).enumerate() {
            if name != format!("z{}", j + 1) {
                return Err(Error::Input(format!("expected column z{} but found {name:?}", j + 1)));
            }
        }
        let mut data = Self::empty(q);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Input(format!("row {}: {e}: {s:?}", line + 1)))
            };
            let y = parse(&rec[1])?;
            if y.fract() != 0.0 {
                return Err(Error::Input(format!("row {}: label {y} is not -1 or 1", line + 1)));
            }
            let z = rec.iter().skip(2).map(parse).collect::<Result<Vec<_>>>()?;
            data.push(Datum {
                x: parse(&rec[0])?,
                y: Label::from_sign(y as i64)?,
                z,
            })?;
        }
        Ok(data)
    }
}
