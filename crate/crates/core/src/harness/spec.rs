//! Study specifications.

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::deepnet::TrainConfig;
use crate::econometrics::ModelKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Oos,
    Grid,
    Linearity,
    #[serde(alias = "generalization")]
    Generalisation,
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StudyKind::Oos => "oos",
            StudyKind::Grid => "grid",
            StudyKind::Linearity => "linearity",
            StudyKind::Generalisation => "generalisation",
        })
    }
}

impl FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oos" => Ok(StudyKind::Oos),
            "grid" => Ok(StudyKind::Grid),
            "linearity" => Ok(StudyKind::Linearity),
            "generalisation" | "generalization" => Ok(StudyKind::Generalisation),
            other => Err(Error::invalid(format!(
                "unknown study kind '{other}' (expected oos, grid, linearity or generalisation)"
            ))),
        }
    }
}

/// A forecaster taking part in a study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelSpec {
    Classical(ModelKind),
    DeepVol,
    /// DeepVol with the linear realised-variance fusion term.
    DeepVolRv,
}

impl ModelSpec {
    pub fn label(&self) -> String {
        self.to_string()
    }

    pub fn is_deep(&self) -> bool {
        matches!(self, ModelSpec::DeepVol | ModelSpec::DeepVolRv)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Classical(k) => k.fmt(f),
            ModelSpec::DeepVol => f.write_str("deepvol"),
            ModelSpec::DeepVolRv => f.write_str("deepvol+rv"),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "deepvol" => Ok(ModelSpec::DeepVol),
            "deepvol+rv" | "deepvol-rv" => Ok(ModelSpec::DeepVolRv),
            other => Ok(ModelSpec::Classical(other.parse()?)),
        }
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> String {
        m.to_string()
    }
}

/// Parses a comma-separated model list; commas inside parentheses belong to
/// the model orders.
pub fn parse_models(list: &str) -> Result<Vec<ModelSpec>> {
    let mut depth = 0i32;
    list.split(|c: char| {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            _ => {}
        }
        c == ',' && depth == 0
    })
    .filter(|s| !s.trim().is_empty())
    .map(|s| s.trim().parse())
    .collect()
}

/// One (granularity, receptive field) grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCell {
    pub granularity: u32,
    pub receptive_field_days: usize,
}

/// The default grid: 1 min × {1}; 5 min × {1, 2, 3}; 15 min × {1, 2, 3, 5};
/// 30 and 60 min × {1, 2, 3, 5, 10}.
pub fn default_grid() -> Vec<GridCell> {
    let axes: [(u32, &[usize]); 5] = [
        (1, &[1]),
        (5, &[1, 2, 3]),
        (15, &[1, 2, 3, 5]),
        (30, &[1, 2, 3, 5, 10]),
        (60, &[1, 2, 3, 5, 10]),
    ];
    axes.iter()
        .flat_map(|&(g, rfs)| {
            rfs.iter().map(move |&rf| GridCell {
                granularity: g,
                receptive_field_days: rf,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub kind: StudyKind,
    /// Last date of the training fold (inclusive).
    pub train_end: NaiveDate,
    /// Last date of the test fold (inclusive); the panel's last date when unset.
    #[serde(default)]
    pub test_end: Option<NaiveDate>,
    #[serde(default = "default_models")]
    pub models: Vec<ModelSpec>,
    /// Generalisation ticker split; defaults to the first half / second half.
    #[serde(default)]
    pub train_tickers: Option<Vec<String>>,
    #[serde(default)]
    pub test_tickers: Option<Vec<String>>,
    /// Grid cells; defaults to [`default_grid`].
    #[serde(default)]
    pub grid: Option<Vec<GridCell>>,
    /// Receptive fields of the linearity study.
    #[serde(default = "default_linearity_rfs")]
    pub linearity_receptive_fields: Vec<usize>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_models() -> Vec<ModelSpec> {
    vec![
        ModelSpec::Classical(ModelKind::Martingale),
        ModelSpec::Classical(ModelKind::Garch { p: 1, q: 1 }),
        ModelSpec::Classical(ModelKind::Heavy),
        ModelSpec::DeepVol,
    ]
}

fn default_linearity_rfs() -> Vec<usize> {
    vec![1, 2, 3]
}

impl StudySpec {
    pub fn new(kind: StudyKind, train_end: NaiveDate) -> Self {
        StudySpec {
            kind,
            train_end,
            test_end: None,
            models: default_models(),
            train_tickers: None,
            test_tickers: None,
            grid: None,
            linearity_receptive_fields: default_linearity_rfs(),
            train: TrainConfig::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(end) = self.test_end {
            if end <= self.train_end {
                return Err(Error::invalid(format!("test end {end} must follow train end {}", self.train_end)));
            }
        }
        if self.models.is_empty() && matches!(self.kind, StudyKind::Oos | StudyKind::Generalisation) {
            return Err(Error::invalid("no models requested"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.models {
            if !seen.insert(m.label()) {
                return Err(Error::invalid(format!("model {m} listed twice")));
            }
        }
        if let (Some(a), Some(b)) = (&self.train_tickers, &self.test_tickers) {
            if a.is_empty() || b.is_empty() {
                return Err(Error::invalid("ticker sets must be nonempty"));
            }
            if let Some(t) = a.iter().find(|t| b.contains(t)) {
                return Err(Error::invalid(format!("ticker {t} is in both the train and test sets")));
            }
        }
        if self.kind == StudyKind::Linearity && self.linearity_receptive_fields.iter().any(|&r| r == 0) {
            return Err(Error::invalid("receptive fields must be at least one day"));
        }
        self.train.validate()
    }
}

/// Seed for the `index`-th training run of a study.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(seed ^ mix(index))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_specs_parse() {
        let m = parse_models("martingale,garch,heavy,deepvol,deepvol+rv,egarch(2,1)").unwrap();
        assert_eq!(m.len(), 6);
        assert_eq!(m[5].label(), "egarch(2,1)");
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<Vec<ModelSpec>>(&json).unwrap(), m);
        assert!(parse_models("lstm").is_err());
    }

    #[test]
    fn default_grid_shape() {
        let g = default_grid();
        assert_eq!(g.len(), 1 + 3 + 4 + 5 + 5);
        assert!(g.contains(&GridCell {
            granularity: 5,
            receptive_field_days: 1
        }));
    }

    #[test]
    fn overlapping_tickers_rejected() {
        let mut s = StudySpec::new(StudyKind::Generalisation, NaiveDate::from_ymd_opt(2020, 1, 1).unwrap());
        s.train_tickers = Some(vec!["A".into(), "B".into()]);
        s.test_tickers = Some(vec!["B".into()]);
        assert!(s.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = r#"{"kind":"oos","train_end":"2020-01-01","bogus":1}"#;
        assert!(serde_json::from_str::<StudySpec>(bad).is_err());
    }
}
