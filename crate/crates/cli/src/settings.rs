use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use har_core::experiments::ConvergenceConfig;
use har_core::KernelFamily;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelArg {
    Har,
    Sobolev,
    Rbf,
}

impl KernelArg {
    pub fn family(self, order: u32) -> KernelFamily {
        match self {
            KernelArg::Har => KernelFamily::Har { order },
            KernelArg::Sobolev => KernelFamily::MixedSobolev,
            KernelArg::Rbf => KernelFamily::Rbf,
        }
    }
}

/// Every tunable of every subcommand. Each field may come from a flag or from
/// the `--config` file; flags win.
#[derive(Args, Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Input CSV with a header row.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,

    /// Target column name (default: last column).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,

    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelArg>,

    /// Spline order of the HAR kernel.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub order: Option<u32>,

    /// Suppression level that anchors the top of the lambda grid.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,

    /// Number of lambda grid points.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    #[arg(long = "train-frac")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_frac: Option<f64>,

    /// Keep only the first rows of each dataset.
    #[arg(long = "max-rows")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_rows: Option<usize>,

    /// Benchmark repeats (fresh split each time).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repeats: Option<usize>,

    /// Comma-separated dataset files.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub datasets: Option<Vec<PathBuf>>,

    /// Comma-separated kernel families to compare.
    #[arg(long, value_enum, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<KernelArg>>,

    /// Convergence replications per sample size.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,

    /// Comma-separated, strictly increasing sample sizes.
    #[arg(long = "n-values", value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_values: Option<Vec<usize>>,

    /// Points in each convergence test draw.
    #[arg(long = "test-size")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_size: Option<usize>,

    /// Training points in the demonstration draw.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,

    /// Evaluation grid size for the demonstration.
    #[arg(long = "grid-points")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,

    /// Model file written by `fit`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,

    /// Output file.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f.clone(); } )*
    };
}

macro_rules! given_fields {
    ($s:ident; $($f:ident),*) => {{
        let mut v: Vec<&'static str> = Vec::new();
        $( if $s.$f.is_some() { v.push(stringify!($f)); } )*
        v
    }};
}

impl Settings {
    /// Fill unset fields from `other`.
    pub fn or(mut self, other: &Settings) -> Settings {
        let s = &mut self;
        merge_fields!(s, other; data, target, kernel, order, epsilon, grid, seed, train_frac, max_rows, repeats,
            datasets, methods, reps, n_values, test_size, n, grid_points, model, out);
        self
    }

    pub fn given(&self) -> Vec<&'static str> {
        given_fields!(self; data, target, kernel, order, epsilon, grid, seed, train_frac, max_rows, repeats,
            datasets, methods, reps, n_values, test_size, n, grid_points, model, out)
    }

    /// Keep only the fields in `keep`.
    pub fn restrict(self, keep: &[&str]) -> Settings {
        let json = serde_json::to_value(&self).expect("settings serialize");
        let mut map = json.as_object().cloned().unwrap_or_default();
        map.retain(|k, _| keep.contains(&k.as_str()));
        serde_json::from_value(serde_json::Value::Object(map)).expect("settings deserialize")
    }

    pub fn from_file(path: &Path) -> Result<Settings, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid config file {}: {e}", path.display()))
    }
}

/// Flag names (snake case) each subcommand understands.
pub fn accepted(subcommand: &str) -> &'static [&'static str] {
    match subcommand {
        "fit" | "tune" => &["data", "target", "kernel", "order", "epsilon", "grid", "seed", "out"],
        "predict" => &["model", "data", "out"],
        "simulate" => &["n", "grid_points", "methods", "epsilon", "grid", "seed", "out"],
        "convergence" => &["n_values", "reps", "test_size", "epsilon", "grid", "seed", "out"],
        "bench" => &[
            "datasets", "methods", "target", "repeats", "max_rows", "train_frac", "epsilon", "grid", "seed", "out",
        ],
        _ => &[],
    }
}

/// Fill defaults for the fields `subcommand` uses.
pub fn with_defaults(subcommand: &str, mut s: Settings) -> Settings {
    let conv = ConvergenceConfig::default();
    let uses = |f: &str| accepted(subcommand).contains(&f);
    if uses("kernel") {
        s.kernel.get_or_insert(KernelArg::Har);
    }
    if uses("order") {
        s.order.get_or_insert(0);
    }
    if uses("epsilon") {
        s.epsilon.get_or_insert(1e-3);
    }
    if uses("grid") {
        s.grid.get_or_insert(50);
    }
    if uses("seed") {
        s.seed.get_or_insert(0);
    }
    if uses("train_frac") {
        s.train_frac.get_or_insert(0.8);
    }
    if uses("max_rows") {
        s.max_rows.get_or_insert(2000);
    }
    if uses("repeats") {
        s.repeats.get_or_insert(5);
    }
    if uses("methods") {
        s.methods
            .get_or_insert_with(|| vec![KernelArg::Har, KernelArg::Sobolev, KernelArg::Rbf]);
    }
    if uses("reps") {
        s.reps.get_or_insert(conv.replications);
    }
    if uses("n_values") {
        s.n_values.get_or_insert(conv.n_values);
    }
    if uses("test_size") {
        s.test_size.get_or_insert(conv.test_size);
    }
    if uses("n") {
        s.n.get_or_insert(50);
    }
    if uses("grid_points") {
        s.grid_points.get_or_insert(401);
    }
    s
}

/// Resolved configuration echoed into every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub settings: Settings,
}

impl RunConfig {
    pub fn new(subcommand: &str, settings: Settings) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand: subcommand.to_string(),
            settings,
        }
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("run config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_file() {
        let flags = Settings {
            seed: Some(7),
            ..Settings::default()
        };
        let file = Settings {
            seed: Some(1),
            grid: Some(10),
            ..Settings::default()
        };
        let m = flags.or(&file);
        assert_eq!((m.seed, m.grid), (Some(7), Some(10)));
    }

    #[test]
    fn restrict_drops_foreign_fields() {
        let s = Settings {
            seed: Some(3),
            repeats: Some(2),
            ..Settings::default()
        };
        let r = s.restrict(accepted("fit"));
        assert_eq!((r.seed, r.repeats), (Some(3), None));
    }

    #[test]
    fn defaults_only_touch_used_fields() {
        let s = with_defaults("predict", Settings::default());
        assert_eq!(s.grid, None);
        let s = with_defaults("bench", Settings::default());
        assert_eq!((s.max_rows, s.train_frac, s.repeats), (Some(2000), Some(0.8), Some(5)));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(serde_json::from_str::<Settings>(r#"{"sed": 1}"#).is_err());
        let s: Settings = serde_json::from_str(r#"{"seed": 1, "kernel": "rbf"}"#).unwrap();
        assert_eq!(s.kernel, Some(KernelArg::Rbf));
    }
}
