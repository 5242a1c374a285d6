use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const RESULTS_HEADER: &str = "algorithm,snr_db,mse_rad2,crb_rad2,trials_used,failures";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub algorithm: String,
    pub snr_db: f64,
    /// NaN when no trial succeeded.
    pub mse_rad2: f64,
    /// Empty in the CSV when the bound was not requested or not identifiable.
    pub crb_rad2: Option<f64>,
    pub trials_used: usize,
    /// Trials that errored plus trials that did not converge.
    pub failures: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MseTable {
    pub rows: Vec<MseRow>,
}

impl MseTable {
    pub fn get(&self, algorithm: &str, snr_db: f64) -> Option<&MseRow> {
        self.rows.iter().find(|r| r.algorithm == algorithm && r.snr_db == snr_db)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        // header written by hand so an empty table still has one
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        wtr.write_record(RESULTS_HEADER.split(','))?;
        for row in &self.rows {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if header.join(",") != RESULTS_HEADER {
            return Err(Error::Config(format!("unexpected results header {:?}", header.join(","))));
        }
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<MseRow>, _>>()?;
        Ok(Self { rows })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}
