//! Flat `key=value` run configuration.
//!
//! Every key can also be given as a `--key value` flag; flags override the
//! file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

macro_rules! config_keys {
    ($($key:ident => $help:literal),* $(,)?) => {
        #[derive(clap::Args, Debug, Default)]
        pub struct KeyFlags {
            $(
                #[arg(long = stringify!($key), value_name = "VALUE", help = $help, global = true)]
                pub $key: Option<String>,
            )*
        }

        pub const KEYS: &[&str] = &[$(stringify!($key)),*];

        impl KeyFlags {
            fn pairs(&self) -> Vec<(&'static str, Option<&str>)> {
                vec![$((stringify!($key), self.$key.as_deref())),*]
            }
        }
    };
}

config_keys! {
    images => "Folder of database images",
    query_images => "Folder of query images (defaults to images)",
    descriptors => "Folder of local descriptor files",
    pca => "PCA model file",
    gmm => "GMM model file",
    global => "Global descriptor file; for multi-transform indexes a comma-separated list in grid order",
    queries => "Query descriptor file (defaults to global)",
    index => "Index file",
    manifest => "Dataset manifest",
    out => "Output file (CSV for evaluate, sweep and fuse)",
    global_a => "Database descriptors of fusion family a",
    global_b => "Database descriptors of fusion family b",
    queries_a => "Query descriptors of family a (defaults to global_a)",
    queries_b => "Query descriptors of family b (defaults to global_b)",
    max_side => "Canonical maximum image side [640]",
    sift_scales => "Comma-separated SIFT bin sizes [4]",
    stride => "SIFT grid stride in pixels [4]",
    magnification => "SIFT patch side per bin size [6]",
    pca_dim => "PCA output dimension [64]",
    components => "GMM components [256]",
    sample_budget => "Maximum training descriptors [200000]",
    max_iters => "EM iteration cap [100]",
    tol => "EM relative tolerance [1e-5]",
    power_alpha => "Power-law exponent [0.5]",
    posterior_floor => "Posterior truncation threshold, 0 disables [1e-4]",
    pooling => "none|max|avg|mindist|pwl [none]",
    grid => "none|rotation|scale [none]",
    pool_limit => "Rotation pooling limit P in degrees",
    step => "Rotation step s in degrees [10]",
    extra_scales => "Extra scale count SP",
    closed_loop => "Close the PWL polyline (P=180 only)",
    renormalize => "L2-normalize pooled max/avg vectors [false]",
    circular_crop => "Crop circularly (required for rotation grids and sweeps)",
    fill => "Fill intensity outside crops [0.456]",
    kind => "Sweep kind: rotation|scale",
    angles => "Sweep angles, list or start:end:step [-180:180:10]",
    ratios => "Sweep ratios, comma-separated [all]",
    seed => "Random seed [0]",
    threads => "Worker threads [all cores]",
}

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn load(file: Option<&Path>, flags: &KeyFlags) -> Result<Self> {
        let mut cfg = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config {}", path.display()))?;
                Self::parse(&text).with_context(|| format!("in config {}", path.display()))?
            }
            None => RunConfig::default(),
        };
        for (key, value) in flags.pairs() {
            if let Some(v) = value {
                cfg.values.insert(key.to_string(), v.to_string());
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key=value", n + 1))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                bail!("line {}: unknown key `{k}`", n + 1);
            }
            if values.insert(k.to_string(), v.trim().to_string()).is_some() {
                bail!("line {}: key `{k}` given twice", n + 1);
            }
        }
        Ok(RunConfig { values })
    }

    #[cfg(test)]
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| anyhow!("config error: missing required key `{key}`"))
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        self.require(key).map(PathBuf::from)
    }

    /// A path that must already exist.
    pub fn input(&self, key: &str) -> Result<PathBuf> {
        let p = self.path(key)?;
        if !p.exists() {
            bail!("config error: `{key}` path {} does not exist", p.display());
        }
        Ok(p)
    }

    pub fn input_or(&self, key: &str, fallback: &str) -> Result<PathBuf> {
        if self.get(key).is_some() {
            self.input(key)
        } else {
            self.input(fallback)
        }
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| anyhow!("config error: `{key}={v}`: {e}")))
            .transpose()
    }

    pub fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn flag(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some("true" | "1" | "yes") => Ok(Some(true)),
            Some("false" | "0" | "no") => Ok(Some(false)),
            Some(v) => bail!("config error: `{key}={v}` is not a boolean"),
        }
    }

    pub fn list_f64(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        parse_number_list(v)
            .map(Some)
            .map_err(|e| anyhow!("config error: `{key}={v}`: {e}"))
    }

    pub fn list_paths(&self, key: &str) -> Result<Vec<PathBuf>> {
        let paths: Vec<PathBuf> = self.require(key)?.split(',').map(|s| PathBuf::from(s.trim())).collect();
        for p in &paths {
            if !p.exists() {
                bail!("config error: `{key}` path {} does not exist", p.display());
            }
        }
        Ok(paths)
    }
}

/// `a,b,c` or an inclusive range `start:end:step`.
pub fn parse_number_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
    let parts: Vec<&str> = v.split(':').collect();
    match parts.as_slice() {
        [start, end, step] => {
            let (start, end, step) = (num(start)?, num(end)?, num(step)?);
            if !(step > 0.0) || end < start {
                return Err("range needs start <= end and a positive step".into());
            }
            let n = ((end - start) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|i| start + i as f64 * step).collect())
        }
        [_] => v.split(',').map(num).collect(),
        _ => Err("expected a comma list or start:end:step".into()),
    }
}
