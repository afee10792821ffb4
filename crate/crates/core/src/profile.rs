//! Variance profiles: the N x n array of entry variances sigma^2_ij that
//! shapes the random Gram matrix, with the structural metadata needed by the
//! downstream solvers (boundedness and the minimum-column-average condition).

use std::fmt;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the profile was constructed. Separable profiles keep their factors so
/// the rank-one closed forms can be exercised exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileKind {
    Generic,
    /// Sampled from a function on [0,1]^2 at the 1-based grid (i/N, j/n).
    Sampled,
    Separable {
        d: Vec<f64>,
        d_tilde: Vec<f64>,
    },
}

/// The variance profile sigma^2_ij, immutable after construction.
#[derive(Debug, Clone)]
pub struct VarianceProfile {
    sigma_sq: Array2<f64>,
    kind: ProfileKind,
    sigma_sq_max: f64,
    sigma_sq_min: f64,
}

impl VarianceProfile {
    /// Validate a dense matrix of variances and record the bounds:
    /// all entries finite and >= 0, max entry sigma^2_max, and every column
    /// average (1/n) sum_i sigma^2_ij >= sigma^2_min > 0.
    fn from_matrix(sigma_sq: Array2<f64>, kind: ProfileKind) -> Result<Self> {
        let (n_rows, n_cols) = sigma_sq.dim();
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::Validation("profile must be non-empty".into()));
        }
        let mut max = 0.0f64;
        for &v in sigma_sq.iter() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Validation(format!(
                    "profile entries must be finite and >= 0, got {v}"
                )));
            }
            max = max.max(v);
        }
        let mut min_col_avg = f64::INFINITY;
        for j in 0..n_cols {
            let avg = sigma_sq.column(j).sum() / n_cols as f64;
            min_col_avg = min_col_avg.min(avg);
        }
        if min_col_avg <= 0.0 {
            return Err(Error::Validation(format!(
                "every column average of sigma^2 must be > 0 (min found {min_col_avg})"
            )));
        }
        Ok(VarianceProfile {
            sigma_sq,
            kind,
            sigma_sq_max: max,
            sigma_sq_min: min_col_avg,
        })
    }

    /// Constant profile: all entries equal to `s2`.
    pub fn constant(n_rows: usize, n_cols: usize, s2: f64) -> Result<Self> {
        if !(s2 > 0.0) || !s2.is_finite() {
            return Err(Error::Validation(format!("s2 must be finite and > 0, got {s2}")));
        }
        Self::from_matrix(Array2::from_elem((n_rows.max(1), n_cols.max(1)), s2), ProfileKind::Generic)
            .and_then(|p| {
                if n_rows == 0 || n_cols == 0 {
                    Err(Error::Validation("dimensions must be >= 1".into()))
                } else {
                    Ok(p)
                }
            })
    }

    /// Separable profile sigma^2_ij = d_i * d~_j. Both factors must be
    /// strictly positive.
    pub fn separable(d: &[f64], d_tilde: &[f64]) -> Result<Self> {
        if d.is_empty() || d_tilde.is_empty() {
            return Err(Error::Validation("separable factors must be non-empty".into()));
        }
        for &v in d.iter().chain(d_tilde.iter()) {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Validation(format!(
                    "separable factors must be finite and > 0, got {v}"
                )));
            }
        }
        let mut m = Array2::zeros((d.len(), d_tilde.len()));
        for (i, &di) in d.iter().enumerate() {
            for (j, &dj) in d_tilde.iter().enumerate() {
                m[[i, j]] = di * dj;
            }
        }
        Self::from_matrix(
            m,
            ProfileKind::Separable {
                d: d.to_vec(),
                d_tilde: d_tilde.to_vec(),
            },
        )
    }

    /// Sampled profile sigma^2_ij = f(i/N, j/n) with 1-based i, j.
    pub fn sampled<F: Fn(f64, f64) -> f64>(f: F, n_rows: usize, n_cols: usize) -> Result<Self> {
        if n_rows == 0 || n_cols == 0 {
            return Err(Error::Validation("dimensions must be >= 1".into()));
        }
        let mut m = Array2::zeros((n_rows, n_cols));
        for i in 0..n_rows {
            for j in 0..n_cols {
                let v = f((i + 1) as f64 / n_rows as f64, (j + 1) as f64 / n_cols as f64);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Validation(format!(
                        "sampled function returned {v} at grid point ({}, {})",
                        (i + 1) as f64 / n_rows as f64,
                        (j + 1) as f64 / n_cols as f64
                    )));
                }
                m[[i, j]] = v;
            }
        }
        Self::from_matrix(m, ProfileKind::Sampled)
    }

    /// Generic profile from an explicit matrix.
    pub fn from_sigma_sq(sigma_sq: Array2<f64>) -> Result<Self> {
        Self::from_matrix(sigma_sq, ProfileKind::Generic)
    }

    /// Load a profile from CSV text: comma-separated rows of sigma^2 values,
    /// no header, row i = receive index i.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|cell| {
                    cell.trim().parse::<f64>().map_err(|_| {
                        Error::Parse(format!(
                            "non-numeric cell {:?} on line {}",
                            cell.trim(),
                            lineno + 1
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(Error::Parse(format!(
                        "ragged row on line {}: expected {} cells, got {}",
                        lineno + 1,
                        first.len(),
                        row.len()
                    )));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse("empty profile file".into()));
        }
        let n_cols = rows[0].len();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let m = Array2::from_shape_vec((rows.len(), n_cols), flat)
            .map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_matrix(m, ProfileKind::Generic)
    }

    /// Load a profile from a CSV file on disk.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }

    /// Canonical text form: one CSV row per receive index, round-trip exact.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n_rows() {
            let row: Vec<String> = self
                .sigma_sq
                .row(i)
                .iter()
                .map(|v| format!("{v}"))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn n_rows(&self) -> usize {
        self.sigma_sq.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.sigma_sq.ncols()
    }

    /// Aspect ratio c = N/n.
    pub fn aspect_ratio(&self) -> f64 {
        self.n_rows() as f64 / self.n_cols() as f64
    }

    pub fn sigma_sq(&self) -> &Array2<f64> {
        &self.sigma_sq
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn sigma_sq_max(&self) -> f64 {
        self.sigma_sq_max
    }

    /// Minimum column average of sigma^2, recorded at construction.
    pub fn sigma_sq_min(&self) -> f64 {
        self.sigma_sq_min
    }
}

impl PartialEq for VarianceProfile {
    fn eq(&self, other: &Self) -> bool {
        self.sigma_sq == other.sigma_sq
    }
}

impl fmt::Display for VarianceProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{} profile (sigma^2 in [{:.3e}, {:.3e}])",
            self.n_rows(),
            self.n_cols(),
            self.sigma_sq_min,
            self.sigma_sq_max
        )
    }
}

/// JSON descriptor consumed by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProfileDescriptor {
    Constant {
        n_rows: usize,
        n_cols: usize,
        s2: f64,
    },
    Separable {
        d: Vec<f64>,
        d_tilde: Vec<f64>,
    },
    File {
        path: String,
    },
}

impl ProfileDescriptor {
    pub fn build(&self) -> Result<VarianceProfile> {
        match self {
            ProfileDescriptor::Constant { n_rows, n_cols, s2 } => {
                VarianceProfile::constant(*n_rows, *n_cols, *s2)
            }
            ProfileDescriptor::Separable { d, d_tilde } => VarianceProfile::separable(d, d_tilde),
            ProfileDescriptor::File { path } => VarianceProfile::load(Path::new(path)),
        }
    }
}
