//! TOML configuration for grid and orthogonal runs.
//!
//! Every grid field accepts a scalar or a list. Fields left out of the file
//! are filled from the selected profile; `alpha = -inf` requests the
//! no-signal cells.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data_gen::{SimulationConfig, NO_SIGNAL};
use crate::error::{Error, Result};
use crate::model_selection::DEFAULT_FOLDS;
use crate::rng::mix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[default]
    Desk,
    Full,
}

impl Profile {
    pub const FULL_WARNING: &'static str =
        "full profile: 1240 cells of B replications each; expect many CPU-hours";
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" => Ok(Profile::Full),
            _ => Err(Error::InvalidConfig(format!("unknown profile {s:?}"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Desk => "desk",
            Profile::Full => "full",
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    profile: Option<Profile>,
    seed: Option<u64>,
    reps: Option<usize>,
    folds: Option<usize>,
    n: Option<OneOrMany<usize>>,
    p: Option<OneOrMany<usize>>,
    rho: Option<OneOrMany<f64>>,
    alpha: Option<OneOrMany<f64>>,
    snr: Option<OneOrMany<f64>>,
    sigma: Option<OneOrMany<f64>>,
    persist_raw: Option<bool>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
}

pub const ALPHA_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const SNR_GRID: [f64; 6] = [0.5, 1.0, 2.0, 5.0, 10.0, 20.0];
pub const RHO_GRID: [f64; 5] = [0.0, 0.2, 0.4, 0.6, 0.8];
pub const P_GRID: [usize; 4] = [100, 200, 500, 1000];

/// A fully resolved simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridConfig {
    pub profile: Profile,
    pub seed: u64,
    pub reps: usize,
    pub folds: usize,
    pub n: Vec<usize>,
    pub p: Vec<usize>,
    pub rho: Vec<f64>,
    pub alpha: Vec<f64>,
    pub snr: Vec<f64>,
    pub sigma: Vec<f64>,
    pub persist_raw: bool,
}

impl GridConfig {
    pub fn profile_defaults(profile: Profile) -> Self {
        let alpha = ALPHA_GRID.iter().copied().chain([NO_SIGNAL]).collect();
        let (p, rho, sigma) = match profile {
            Profile::Desk => (vec![100, 500], vec![0.0, 0.8], vec![1.0]),
            Profile::Full => (P_GRID.to_vec(), RHO_GRID.to_vec(), vec![1.0, 3.0]),
        };
        Self {
            profile,
            seed: 1,
            reps: 100,
            folds: DEFAULT_FOLDS,
            n: vec![100],
            p,
            rho,
            alpha,
            snr: SNR_GRID.to_vec(),
            sigma,
            persist_raw: true,
        }
    }

    pub fn from_toml_str(text: &str, overrides: Overrides) -> Result<Self> {
        let file: GridFile = toml::from_str(text)?;
        let profile = overrides.profile.or(file.profile).unwrap_or_default();
        let d = Self::profile_defaults(profile);
        let cfg = Self {
            profile,
            seed: overrides.seed.or(file.seed).unwrap_or(d.seed),
            reps: file.reps.unwrap_or(d.reps),
            folds: file.folds.unwrap_or(d.folds),
            n: file.n.map_or(d.n, OneOrMany::into_vec),
            p: file.p.map_or(d.p, OneOrMany::into_vec),
            rho: file.rho.map_or(d.rho, OneOrMany::into_vec),
            alpha: file.alpha.map_or(d.alpha, OneOrMany::into_vec),
            snr: file.snr.map_or(d.snr, OneOrMany::into_vec),
            sigma: file.sigma.map_or(d.sigma, OneOrMany::into_vec),
            persist_raw: file.persist_raw.unwrap_or(d.persist_raw),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: Overrides) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, empty) in [
            ("n", self.n.is_empty()),
            ("p", self.p.is_empty()),
            ("rho", self.rho.is_empty()),
            ("alpha", self.alpha.is_empty()),
            ("snr", self.snr.is_empty()),
            ("sigma", self.sigma.is_empty()),
        ] {
            if empty {
                return Err(Error::InvalidConfig(format!("grid field {name} is empty")));
            }
        }
        for cell in self.cells() {
            cell.simulation(self).validate()?;
        }
        Ok(())
    }

    /// Cells in grid order `n, p, ρ, σ, α, snr`. No-signal cells do not
    /// depend on snr and appear once, at the first listed snr.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &p in &self.p {
                for &rho in &self.rho {
                    for &sigma in &self.sigma {
                        for &alpha in &self.alpha {
                            let snrs = if alpha == NO_SIGNAL { &self.snr[..1] } else { &self.snr[..] };
                            for &snr in snrs {
                                let cell = Cell { n, p, rho, alpha, snr, sigma };
                                if !out.contains(&cell) {
                                    out.push(cell);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// SHA-256 of the resolved configuration, hex encoded.
    pub fn hash(&self) -> String {
        let text = format!("{self:?}");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// One point of the simulation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub alpha: f64,
    pub snr: f64,
    pub sigma: f64,
}

impl Cell {
    fn digest(&self) -> [u8; 32] {
        // snr has no effect without signal
        let snr = if self.alpha == NO_SIGNAL { 0.0f64 } else { self.snr };
        let text = format!(
            "n={};p={};rho={:016x};alpha={:016x};snr={:016x};sigma={:016x}",
            self.n,
            self.p,
            self.rho.to_bits(),
            self.alpha.to_bits(),
            snr.to_bits(),
            self.sigma.to_bits()
        );
        Sha256::digest(text.as_bytes()).into()
    }

    /// Stable identifier: the first 8 bytes of the parameter digest.
    pub fn id(&self) -> String {
        hex::encode(&self.digest()[..8])
    }

    /// Seed for this cell, independent of which other cells are in the grid.
    pub fn seed(&self, base: u64) -> u64 {
        let d = self.digest();
        let h = u64::from_le_bytes(d[..8].try_into().expect("8 bytes"));
        mix64(base ^ mix64(h))
    }

    pub fn simulation(&self, cfg: &GridConfig) -> SimulationConfig {
        SimulationConfig {
            n: self.n,
            p: self.p,
            rho: self.rho,
            alpha: self.alpha,
            snr: self.snr,
            sigma: self.sigma,
            num_reps: cfg.reps,
            seed: self.seed(cfg.seed),
            folds: cfg.folds,
        }
    }
}

/// Orthogonal-design experiment settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrthoConfig {
    pub seed: u64,
    pub reps: usize,
    pub n: usize,
    pub sigma: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Sample sizes for the certainty-equivalent sequence.
    pub ce_n: Vec<usize>,
    pub lemma_n: Vec<usize>,
    pub lemma_reps: usize,
    pub lemma_alpha: f64,
    pub lemma_beta: f64,
}

impl Default for OrthoConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            reps: 100,
            n: 100,
            sigma: 1.0,
            alpha: vec![0.0, 0.1, 0.3, 0.5],
            beta: (0..=24).map(|i| i as f64 * 0.25).collect(),
            ce_n: vec![100, 1_000, 10_000, 100_000],
            lemma_n: vec![100, 1_000, 10_000],
            lemma_reps: 2000,
            lemma_alpha: 0.3,
            lemma_beta: 1.0,
        }
    }
}

impl OrthoConfig {
    pub fn from_toml_str(text: &str, seed: Option<u64>) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 || self.lemma_reps < 2 || self.n == 0 {
            return Err(Error::InvalidConfig("reps, lemma_reps and n must be positive".into()));
        }
        if self.alpha.is_empty() || self.beta.is_empty() {
            return Err(Error::InvalidConfig("alpha and beta grids must be non-empty".into()));
        }
        if self.lemma_n.iter().chain(&self.ce_n).any(|&n| n < 2) {
            return Err(Error::InvalidConfig("sample sizes must be at least 2".into()));
        }
        for &a in &self.alpha {
            crate::orthogonal::OrthoModel::new(self.n, a, 0.0, self.sigma)?;
        }
        crate::orthogonal::OrthoModel::new(self.n, self.lemma_alpha, self.lemma_beta, self.sigma)?;
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidConfig("beta values must be finite".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(format!("{self:?}").as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_profile_cells() {
        let cfg = GridConfig::from_toml_str("", Overrides::default()).unwrap();
        assert_eq!(cfg.profile, Profile::Desk);
        // 2 p x 2 rho x (5 alpha x 6 snr + 1 no-signal)
        assert_eq!(cfg.cells().len(), 2 * 2 * 31);
        let full = GridConfig::profile_defaults(Profile::Full);
        assert_eq!(full.cells().len(), 4 * 5 * 2 * 31);
    }

    #[test]
    fn file_values_and_overrides() {
        let text = "seed = 7\np = 100\nalpha = [-inf, 0.5]\nsnr = [1.0, 20.0]\nreps = 5\n";
        let cfg = GridConfig::from_toml_str(text, Overrides { seed: Some(9), ..Default::default() })
            .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.p, vec![100]);
        assert!(cfg.alpha[0].is_infinite());
        assert_eq!(cfg.cells().len(), 2 * (1 + 2));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(GridConfig::from_toml_str("rho = 1.0", Overrides::default()).is_err());
        assert!(GridConfig::from_toml_str("bogus = 1", Overrides::default()).is_err());
        assert!(GridConfig::from_toml_str("p = []", Overrides::default()).is_err());
        assert!(OrthoConfig::from_toml_str("alpha = [1.5]", None).is_err());
    }

    #[test]
    fn cell_seed_ignores_neighbours() {
        let a = GridConfig::from_toml_str("p = [100, 500]", Overrides::default()).unwrap();
        let b = GridConfig::from_toml_str("p = 500", Overrides::default()).unwrap();
        let pick = |cfg: &GridConfig| {
            cfg.cells().into_iter().find(|c| c.p == 500).unwrap().simulation(cfg).seed
        };
        assert_eq!(pick(&a), pick(&b));
        assert_ne!(a.hash(), b.hash());
    }
}
