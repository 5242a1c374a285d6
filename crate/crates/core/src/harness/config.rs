use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};

use super::{parse_algorithms, parse_degrees, parse_snr_grid, Algorithm, ExperimentSpec};

/// A list given either as a TOML array or as the string form used on the command line.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ListOrString<T> {
    List(Vec<T>),
    Text(String),
}

/// Experiment overrides keyed like the command-line flags. Unset fields keep
/// the value already in the `ExperimentSpec`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConfigOverrides {
    pub scenario: Option<u8>,
    pub users: Option<usize>,
    pub antennas: Option<usize>,
    pub targets: Option<ListOrString<f64>>,
    pub snr: Option<ListOrString<f64>>,
    pub trials: Option<usize>,
    pub algos: Option<ListOrString<String>>,
    pub crb: Option<bool>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub dump_spectra: Option<bool>,
    pub dump_trace: Option<bool>,
    pub grid_step: Option<f64>,
    pub eps: Option<f64>,
    pub max_iters: Option<usize>,
    pub naive_include_dl: Option<bool>,
}

impl ConfigOverrides {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn apply(&self, spec: &mut ExperimentSpec) -> Result<()> {
        macro_rules! set {
            ($src:ident => $dst:ident) => {
                if let Some(v) = &self.$src {
                    spec.$dst = v.clone();
                }
            };
        }
        set!(scenario => scenario);
        set!(users => users);
        set!(antennas => antennas);
        set!(trials => trials);
        set!(crb => include_crb);
        set!(seed => master_seed);
        set!(out => output_dir);
        set!(dump_spectra => dump_spectra);
        set!(dump_trace => dump_trace);
        set!(grid_step => grid_step_deg);
        set!(eps => eps);
        set!(max_iters => max_iters);
        set!(naive_include_dl => naive_include_dl);
        match &self.targets {
            Some(ListOrString::List(v)) => spec.targets_deg = v.clone(),
            Some(ListOrString::Text(s)) => spec.targets_deg = parse_degrees(s)?,
            None => {}
        }
        match &self.snr {
            Some(ListOrString::List(v)) => spec.snr_grid_db = v.clone(),
            Some(ListOrString::Text(s)) => spec.snr_grid_db = parse_snr_grid(s)?,
            None => {}
        }
        match &self.algos {
            Some(ListOrString::List(v)) => {
                spec.algorithms = v.iter().map(|s| s.parse()).collect::<Result<Vec<Algorithm>>>()?
            }
            Some(ListOrString::Text(s)) => spec.algorithms = parse_algorithms(s)?,
            None => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_keys_match_flags() {
        let c = ConfigOverrides::from_toml_str(
            r#"
scenario = 2
users = 4
targets = [0.0, 20.0]
snr = "-4:2:0"
algos = "fml,naive"
crb = true
grid-step = 0.25
naive-include-dl = false
"#,
        )
        .unwrap();
        let mut spec = ExperimentSpec::default();
        c.apply(&mut spec).unwrap();
        assert_eq!(spec.scenario, 2);
        assert_eq!(spec.users, 4);
        assert_eq!(spec.targets_deg, vec![0.0, 20.0]);
        assert_eq!(spec.snr_grid_db, vec![-4.0, -2.0, 0.0]);
        assert_eq!(spec.algorithms, vec![Algorithm::Fml, Algorithm::Naive]);
        assert!(spec.include_crb && !spec.naive_include_dl);
        assert_eq!(spec.grid_step_deg, 0.25);
        assert!(ConfigOverrides::from_toml_str("bogus = 1").is_err());
    }
}
