//! Sectioned TOML configuration shared by the CLI and the bench harness.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::approx::CompParams;
use crate::dataio::GenConfig;
use crate::equality::EeqMode;
use crate::error::{Error, Result};
use crate::he::{Backend, HeParams};
use crate::protocol::{PipelineConfig, Variant};
use crate::seed::RootSeed;

/// Noise applied when the leveled backend is selected without an explicit sigma.
pub const DEFAULT_LEVELED_SIGMA: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub variant: Variant,
    pub eeq_mode: EeqMode,
    pub chunk_size: usize,
    pub threshold: f64,
    pub parallel: bool,
    pub workers: usize,
    pub oblivious_rows: bool,
    pub token_domain: Option<u32>,
    pub xi: Option<f64>,
    pub unsafe_debug_fields: bool,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            variant: p.variant,
            eeq_mode: p.eeq_mode,
            chunk_size: p.chunk_size,
            threshold: p.threshold,
            parallel: p.parallel,
            workers: p.workers,
            oblivious_rows: p.oblivious_rows,
            token_domain: p.token_domain,
            xi: p.xi,
            unsafe_debug_fields: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Raw generator output and `prep` input.
    pub raw_dir: PathBuf,
    /// Normalized datasets and truth.
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            raw_dir: "data/raw".into(),
            data_dir: "data".into(),
            out_dir: "out".into(),
        }
    }
}

impl PathsSection {
    pub fn d1(&self) -> PathBuf {
        self.data_dir.join("d1.csv")
    }
    pub fn d2(&self) -> PathBuf {
        self.data_dir.join("d2.csv")
    }
    pub fn truth(&self) -> PathBuf {
        self.data_dir.join("truth.csv")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub n1: usize,
    pub n2: usize,
    pub overlap: usize,
    pub variants: Vec<Variant>,
    pub eeq_modes: Vec<EeqMode>,
    pub chunk_sizes: Vec<usize>,
    pub parallel: Vec<bool>,
    /// Chunk size used outside the chunk-size sweep.
    pub base_chunk_size: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            n1: 100,
            n2: 400,
            overlap: 40,
            variants: vec![Variant::Optimized, Variant::AmppereBase, Variant::NaiveHe],
            eeq_modes: vec![EeqMode::Interactive, EeqMode::NonInteractive],
            chunk_sizes: vec![25, 50, 100],
            parallel: vec![false, true],
            base_chunk_size: 100,
        }
    }
}

fn default_he(mode: EeqMode) -> HeParams {
    match mode {
        EeqMode::Interactive => HeParams::default(),
        EeqMode::NonInteractive => HeParams::bootstrapped(),
    }
}

/// On-disk layout of the config file. `he` is optional so that the default
/// parameter set can follow the equality mode.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    he: Option<HeParams>,
    approx: CompParams,
    pipeline: PipelineSection,
    gen: GenConfig,
    paths: PathsSection,
    bench: BenchSection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppConfig {
    pub seed: u64,
    pub he: HeParams,
    pub approx: CompParams,
    pub pipeline: PipelineSection,
    pub gen: GenConfig,
    pub paths: PathsSection,
    pub bench: BenchSection,
    /// Whether `[he]` was given explicitly; otherwise it follows the mode.
    #[serde(skip)]
    pub he_explicit: bool,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self::from_raw(RawConfig::default())
    }
}

/// Command-line overrides; `None` keeps the file value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub variant: Option<Variant>,
    pub eeq_mode: Option<EeqMode>,
    pub chunk_size: Option<usize>,
    pub threshold: Option<f64>,
    pub workers: Option<usize>,
    pub parallel: Option<bool>,
    pub backend: Option<Backend>,
    pub seed: Option<u64>,
    pub unsafe_debug_fields: Option<bool>,
}

impl AppConfig {
    fn from_raw(raw: RawConfig) -> Self {
        let he_explicit = raw.he.is_some();
        let he = raw.he.unwrap_or_else(|| default_he(raw.pipeline.eeq_mode));
        let seed = raw.seed.unwrap_or(PipelineConfig::default().seed);
        let mut cfg = Self {
            seed,
            he,
            approx: raw.approx,
            pipeline: raw.pipeline,
            gen: raw.gen,
            paths: raw.paths,
            bench: raw.bench,
            he_explicit,
        };
        cfg.gen.seed = RootSeed(seed).u64("gen", &[]);
        cfg
    }

    /// Parse TOML text without validating.
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.message().replace('\n', " ")))?;
        Ok(Self::from_raw(raw))
    }

    /// Read and parse `path`, or defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(mode) = o.eeq_mode {
            // Default HE parameters follow the mode; explicit ones are kept
            // and validated.
            if !self.he_explicit {
                self.he = default_he(mode);
            }
            self.pipeline.eeq_mode = mode;
        }
        if let Some(v) = o.variant {
            self.pipeline.variant = v;
        }
        if let Some(c) = o.chunk_size {
            self.pipeline.chunk_size = c;
        }
        if let Some(t) = o.threshold {
            self.pipeline.threshold = t;
        }
        if let Some(w) = o.workers {
            self.pipeline.workers = w;
        }
        if let Some(p) = o.parallel {
            self.pipeline.parallel = p;
        }
        if let Some(b) = o.backend {
            self.he.backend = b;
            if b == Backend::Leveled && self.he.noise_sigma == 0.0 {
                self.he.noise_sigma = DEFAULT_LEVELED_SIGMA;
            }
        }
        if let Some(s) = o.seed {
            self.seed = s;
            self.gen.seed = RootSeed(s).u64("gen", &[]);
        }
        if let Some(d) = o.unsafe_debug_fields {
            self.pipeline.unsafe_debug_fields = d;
        }
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        let p = &self.pipeline;
        PipelineConfig {
            variant: p.variant,
            eeq_mode: p.eeq_mode,
            chunk_size: p.chunk_size,
            threshold: p.threshold,
            he: self.he.clone(),
            approx: self.approx,
            parallel: p.parallel,
            workers: p.workers,
            seed: self.seed,
            oblivious_rows: p.oblivious_rows,
            token_domain: p.token_domain,
            xi: p.xi,
        }
    }

    /// Cross-field checks; run before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.gen.validate()?;
        self.pipeline_config().validate()?;
        let b = &self.bench;
        if b.chunk_sizes.is_empty() || b.variants.is_empty() || b.eeq_modes.is_empty() || b.parallel.is_empty() {
            return Err(Error::Config("bench grid lists must be non-empty".into()));
        }
        if b.overlap > b.n1.min(b.n2) {
            return Err(Error::Config(format!(
                "bench overlap {} exceeds min(n1, n2) = {}",
                b.overlap,
                b.n1.min(b.n2)
            )));
        }
        for &c in b.chunk_sizes.iter().chain([&b.base_chunk_size]) {
            if c == 0 || c > self.he.batch_size {
                return Err(Error::Config(format!(
                    "bench chunk size {c} must lie in 1..={} (batch_size)",
                    self.he.batch_size
                )));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        AppConfig::default().validate().unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = AppConfig::default();
        c.pipeline.chunk_size = 50;
        c.seed = 7;
        let back = AppConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back.pipeline.chunk_size, 50);
        assert_eq!(back.seed, 7);
        assert_eq!(back.he, c.he);
        assert_eq!(back.gen.seed, RootSeed(7).u64("gen", &[]));
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = AppConfig::parse("[pipeline]\nchunk = 3\n").unwrap_err();
        assert_eq!(e.kind(), "config");
    }

    #[test]
    fn non_interactive_without_bootstrapping_is_rejected() {
        let text = "[pipeline]\neeq_mode = \"non_interactive\"\n[he]\nmultiplicative_depth = 2\n";
        let c = AppConfig::parse(text).unwrap();
        assert!(c.validate().unwrap_err().to_string().contains("bootstrapping"));
    }

    #[test]
    fn non_interactive_section_defaults_to_bootstrapped() {
        let c = AppConfig::parse("[pipeline]\neeq_mode = \"non_interactive\"\n").unwrap();
        assert!(c.he.bootstrapping_enabled);
        c.validate().unwrap();
    }

    #[test]
    fn chunk_larger_than_batch_is_rejected() {
        let c = AppConfig::parse("[pipeline]\nchunk_size = 129\n").unwrap();
        assert_eq!(c.validate().unwrap_err().kind(), "config");
    }

    #[test]
    fn overrides_win_over_file() {
        let mut c = AppConfig::parse("seed = 3\n[pipeline]\nchunk_size = 25\n").unwrap();
        c.apply(&Overrides {
            chunk_size: Some(50),
            seed: Some(9),
            backend: Some(Backend::Leveled),
            ..Overrides::default()
        });
        assert_eq!(c.pipeline.chunk_size, 50);
        assert_eq!(c.pipeline_config().seed, 9);
        assert_eq!(c.he.noise_sigma, DEFAULT_LEVELED_SIGMA);
    }

    #[test]
    fn mode_flag_switches_default_he_params() {
        let mut c = AppConfig::default();
        c.apply(&Overrides {
            eeq_mode: Some(EeqMode::NonInteractive),
            ..Overrides::default()
        });
        assert!(c.he.bootstrapping_enabled);
        c.validate().unwrap();

        let mut c = AppConfig::parse("[he]\nmultiplicative_depth = 2\n").unwrap();
        c.apply(&Overrides {
            eeq_mode: Some(EeqMode::NonInteractive),
            ..Overrides::default()
        });
        assert!(c.validate().is_err());
    }
}
