use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, PatientParams};
use crate::solver::SolverOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McOptions {
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_runs() -> usize {
    10_000
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            n_runs: default_runs(),
            seed: 0,
        }
    }
}

/// Output locations. Relative paths are resolved against the directory of
/// the configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub table: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub comparison: Option<PathBuf>,
}

/// Everything needed for a solve / simulate / compare run, as read from a
/// TOML file with the sections `[patient]`, `[model]` (and `[model.grid]`),
/// `[solver]`, `[mc]` and `[outputs]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub patient: PatientParams,
    pub model: ModelConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub mc: McOptions,
    #[serde(default)]
    pub outputs: Outputs,
    /// Directory of the file the configuration was read from.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<RunConfig> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.patient.validate(self.model.n_inj)?;
        if !(self.solver.tol > 0.0) {
            return Err(Error::Config("solver.tol must be > 0".into()));
        }
        if self.mc.n_runs == 0 {
            return Err(Error::Config("mc.n_runs must be at least 1".into()));
        }
        for path in [&self.outputs.table, &self.outputs.report, &self.outputs.comparison]
            .into_iter()
            .flatten()
        {
            let full = self.resolve(path);
            if let Some(dir) = full.parent().filter(|d| !d.as_os_str().is_empty()) {
                if !dir.is_dir() {
                    return Err(Error::Config(format!(
                        "output directory {} does not exist",
                        dir.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn build_model(&self) -> Result<Model> {
        Model::new(self.patient.clone(), self.model.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: &str = r#"
[patient]
lambda = 2.55
rho = 2.06
pi0 = 0.049
mu_r = 0.054
mu_p = 0.068
beta_pi = [0.918, 0.721]
r0 = 332.0
p0 = 8.0

[model]
doses = [0.0, 10.0, 20.0]
n_inj = 2
horizon = 365
sigma_min = 70
alpha = 0.001
eta = 0.1

[model.grid]
p_min = 0.0
p_max = 300.0
h_p = 10.0
r_min = 0.0
r_max = 1500.0
h_r = 25.0
"#;

    const A_REORDERED: &str = r#"
[model]
eta = 0.1
alpha = 0.001
sigma_min = 70
horizon = 365
n_inj = 2
doses = [0.0, 10.0, 20.0]

[model.grid]
h_r = 25.0
r_max = 1500.0
r_min = 0.0
h_p = 10.0
p_max = 300.0
p_min = 0.0

[patient]
p0 = 8.0
r0 = 332.0
beta_pi = [0.918, 0.721]
mu_p = 0.068
mu_r = 0.054
pi0 = 0.049
rho = 2.06
lambda = 2.55
"#;

    #[test]
    fn hash_is_stable_under_key_reordering() {
        let a = RunConfig::from_toml(A, Path::new(".")).unwrap();
        let b = RunConfig::from_toml(A_REORDERED, Path::new(".")).unwrap();
        assert_eq!(a, b);
        let (ha, hb) = (a.build_model().unwrap().config_hash(), b.build_model().unwrap().config_hash());
        assert_eq!(ha, hb);
        assert_eq!(ha.len(), 64);
        let mut c = a.clone();
        c.model.eta = 0.2;
        assert_ne!(c.build_model().unwrap().config_hash(), ha);
    }

    #[test]
    fn defaults_and_errors() {
        let a = RunConfig::from_toml(A, Path::new(".")).unwrap();
        assert_eq!(a.solver, SolverOptions::default());
        assert_eq!(a.mc.n_runs, 10_000);
        assert!(RunConfig::from_toml(&A.replace("eta = 0.1", "eta = 0.1\nfoo = 1"), Path::new(".")).is_err());
        assert!(RunConfig::from_toml(&A.replace("n_inj = 2", "n_inj = 3"), Path::new(".")).is_err());
        let bad_out = format!("{A}\n[outputs]\ntable = \"/nonexistent/dir/w.tbl\"\n");
        assert!(matches!(RunConfig::from_toml(&bad_out, Path::new(".")), Err(Error::Config(_))));
    }
}
