//! Newline-delimited JSON snapshots: one configuration per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::geometry::{Point, PointConfig};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub n: usize,
    pub beta: f64,
    pub seed: u64,
    pub step: u64,
    pub points: Vec<[f64; 2]>,
}

impl Snapshot {
    pub fn new<T: Scalar>(config: &PointConfig<T>, beta: T, seed: u64, step: u64) -> Self {
        Self {
            n: config.n(),
            beta: beta.as_f64(),
            seed,
            step,
            points: config.iter().map(|p| [p.x.as_f64(), p.y.as_f64()]).collect(),
        }
    }

    pub fn config<T: Scalar>(&self) -> crate::Result<PointConfig<T>> {
        PointConfig::new(self.points.iter().map(|&[x, y]| Point::new(T::c(x), T::c(y))).collect())
    }
}

pub fn write_snapshots<W: Write>(mut w: W, snaps: &[Snapshot]) -> std::io::Result<()> {
    for s in snaps {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_snapshots<R: BufRead>(r: R) -> std::io::Result<Vec<Snapshot>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
    }
    Ok(out)
}
