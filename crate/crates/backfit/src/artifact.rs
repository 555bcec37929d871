//! Versioned JSON serialization of fitted models, with provenance fields
//! (seed, input digest) for reproducibility audits.

use crate::curve::ComponentCurve;
use crate::error::{Error, Result};
use crate::grid::EvalGrid;
use crate::kernel::Bandwidths;
use crate::sbf::{AdditiveFit, FitDiagnostics};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

/// Where a fit came from: the RNG seed of the run and a SHA-256 digest of
/// the input data file, when known.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub input_digest: Option<String>,
}

/// Self-contained snapshot of an [`AdditiveFit`]: everything needed to
/// predict, plus an echo of the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub schema_version: u32,
    pub intercept: f64,
    pub grid: Vec<f64>,
    pub components: Vec<ComponentCurve>,
    pub active_set: Vec<usize>,
    pub bandwidths: Vec<f64>,
    pub kernel: String,
    pub smoother: String,
    pub config: serde_json::Value,
    pub provenance: Provenance,
}

impl FitArtifact {
    pub fn from_fit(fit: &AdditiveFit, config: serde_json::Value, provenance: Provenance) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            intercept: fit.intercept,
            grid: fit.grid.points().to_vec(),
            components: fit.components.clone(),
            active_set: fit.active_set.clone(),
            bandwidths: fit.bandwidths.per_covariate().to_vec(),
            kernel: fit.kernel.name().to_string(),
            smoother: fit.smoother.name().to_string(),
            config,
            provenance,
        }
    }

    /// Rebuilds a predictable fit, validating the array-length invariants
    /// and the uniform grid.
    pub fn to_fit(&self) -> Result<AdditiveFit> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Artifact {
                reason: format!(
                    "unsupported schema version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            });
        }
        if !self.intercept.is_finite() {
            return Err(Error::Artifact {
                reason: "non-finite intercept".into(),
            });
        }
        let grid = EvalGrid::new(self.grid.len())?;
        for (a, b) in self.grid.iter().zip(grid.points()) {
            if (a - b).abs() > 1e-12 {
                return Err(Error::Artifact {
                    reason: format!("grid point {a} is not on the uniform [0,1] grid"),
                });
            }
        }
        if self.components.len() != self.bandwidths.len() {
            return Err(Error::Artifact {
                reason: format!(
                    "{} components but {} bandwidths",
                    self.components.len(),
                    self.bandwidths.len()
                ),
            });
        }
        for (j, c) in self.components.iter().enumerate() {
            if c.len() != grid.len() || c.deriv.len() != grid.len() {
                return Err(Error::Artifact {
                    reason: format!(
                        "component {j} has {} nodes, expected {}",
                        c.len(),
                        grid.len()
                    ),
                });
            }
        }
        if let Some(&bad) = self.active_set.iter().find(|&&j| j >= self.components.len()) {
            return Err(Error::Artifact {
                reason: format!("active index {bad} out of range"),
            });
        }
        Ok(AdditiveFit {
            intercept: self.intercept,
            components: self.components.clone(),
            active_set: self.active_set.clone(),
            bandwidths: Bandwidths::new(self.bandwidths.clone())?,
            grid,
            kernel: self.kernel.parse()?,
            smoother: self.smoother.parse()?,
            diagnostics: FitDiagnostics {
                outer_iters: 0,
                objective_trace: Vec::new(),
                converged: true,
            },
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Artifact {
            reason: format!("serialization failed: {e}"),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Artifact {
            reason: format!("parse failed: {e}"),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&text)
    }
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(digest_bytes(&bytes))
}
