//! Microdata CSV to count tables, and the hospitalization weighting used for
//! the vaccine data.
//!
//! A spec file is TOML:
//!
//! ```toml
//! exposure = "marijuana"
//! outcome = "hard_drugs"
//! covariates = ["age35", "gender"]
//! derive = ["age35 = age >= 35"]
//! truthy = ["yes", "1"]
//! falsy = ["no", "0"]
//! missing = "drop"
//! ```
//!
//! Derived columns evaluate to `1` or `0`. Value matching is trimmed and
//! case-insensitive. Rows whose exposure, outcome or covariates cannot be
//! resolved are counted and dropped, or abort the load under `strict`.

mod derive;

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

pub use derive::{CompareOp, DerivedColumn};

use crate::covariate::{Stratum, StratifiedTable};
use crate::error::{Error, Result};
use crate::tables::Counts2x2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    #[default]
    Drop,
    Strict,
}

fn default_truthy() -> Vec<String> {
    ["1", "yes", "y", "true", "t"].map(String::from).to_vec()
}

fn default_falsy() -> Vec<String> {
    ["0", "no", "n", "false", "f"].map(String::from).to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    exposure: String,
    outcome: String,
    #[serde(default)]
    covariates: Vec<String>,
    #[serde(default = "default_truthy")]
    truthy: Vec<String>,
    #[serde(default = "default_falsy")]
    falsy: Vec<String>,
    #[serde(default)]
    missing: MissingPolicy,
    #[serde(default)]
    derive: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicrodataSpec {
    pub exposure: String,
    pub outcome: String,
    pub covariates: Vec<String>,
    pub truthy: Vec<String>,
    pub falsy: Vec<String>,
    pub missing: MissingPolicy,
    pub derived: Vec<DerivedColumn>,
}

impl MicrodataSpec {
    pub fn new(exposure: &str, outcome: &str) -> Self {
        Self {
            exposure: exposure.into(),
            outcome: outcome.into(),
            covariates: Vec::new(),
            truthy: default_truthy(),
            falsy: default_falsy(),
            missing: MissingPolicy::Drop,
            derived: Vec::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawSpec = toml::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        let derived = raw
            .derive
            .iter()
            .map(|d| d.parse())
            .collect::<Result<Vec<DerivedColumn>>>()?;
        let norm = |v: Vec<String>| v.into_iter().map(|s| s.trim().to_lowercase()).collect::<Vec<_>>();
        let truthy = norm(raw.truthy);
        let falsy = norm(raw.falsy);
        if let Some(both) = truthy.iter().find(|t| falsy.contains(t)) {
            return Err(Error::Spec(format!("`{both}` is listed as both truthy and falsy")));
        }
        Ok(Self {
            exposure: raw.exposure,
            outcome: raw.outcome,
            covariates: raw.covariates,
            truthy,
            falsy,
            missing: raw.missing,
            derived,
        })
    }

    fn binary(&self, raw: &str) -> Option<bool> {
        let v = raw.trim().to_lowercase();
        if self.truthy.contains(&v) {
            Some(true)
        } else if self.falsy.contains(&v) {
            Some(false)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tabulation {
    pub counts: Counts2x2,
    pub excluded: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedTabulation {
    pub table: StratifiedTable,
    pub excluded: u64,
}

/// Where each needed value comes from: a CSV column or a derived column.
enum Source {
    Column(usize),
    Derived(usize),
}

struct Resolver {
    headers: Vec<String>,
    derived_inputs: Vec<usize>,
}

impl Resolver {
    fn new(headers: &csv::StringRecord, spec: &MicrodataSpec) -> Result<Self> {
        let headers: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
        let derived_inputs = spec
            .derived
            .iter()
            .map(|d| {
                headers
                    .iter()
                    .position(|h| *h == d.input)
                    .ok_or_else(|| Error::MissingColumn(d.input.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            headers,
            derived_inputs,
        })
    }

    fn source(&self, name: &str, spec: &MicrodataSpec) -> Result<Source> {
        if let Some(i) = spec.derived.iter().position(|d| d.name == name) {
            return Ok(Source::Derived(i));
        }
        self.headers
            .iter()
            .position(|h| h == name)
            .map(Source::Column)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    fn value(&self, src: &Source, rec: &csv::StringRecord, spec: &MicrodataSpec) -> Option<String> {
        match *src {
            Source::Column(i) => rec.get(i).map(|s| s.trim().to_string()),
            Source::Derived(i) => {
                let raw = rec.get(self.derived_inputs[i])?;
                spec.derived[i].eval(raw).map(|b| if b { "1" } else { "0" }.to_string())
            }
        }
    }
}

fn unmappable(row: usize, column: &str, value: Option<String>) -> Error {
    Error::UnmappableValue {
        row,
        column: column.to_string(),
        value: value.unwrap_or_default(),
    }
}

/// One pass over the file, keyed by the joined covariate values (the empty
/// string when not stratifying).
fn tabulate<R: Read>(
    input: R,
    spec: &MicrodataSpec,
    stratify: bool,
) -> Result<(BTreeMap<String, [u64; 4]>, u64)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = reader.headers()?.clone();
    let resolver = Resolver::new(&headers, spec)?;
    let exp = resolver.source(&spec.exposure, spec)?;
    let out = resolver.source(&spec.outcome, spec)?;
    let covs: Vec<(String, Source)> = if stratify {
        spec.covariates
            .iter()
            .map(|c| resolver.source(c, spec).map(|s| (c.clone(), s)))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let mut cells: BTreeMap<String, [u64; 4]> = BTreeMap::new();
    let mut excluded = 0;
    for (idx, rec) in reader.records().enumerate() {
        let rec = rec?;
        // 1-based data row number, header excluded
        let row = idx + 1;
        let e_raw = resolver.value(&exp, &rec, spec);
        let d_raw = resolver.value(&out, &rec, spec);
        let e = e_raw.as_deref().and_then(|v| spec.binary(v));
        let d = d_raw.as_deref().and_then(|v| spec.binary(v));
        let mut key = Vec::with_capacity(covs.len());
        let mut bad: Option<Error> = match (e, d) {
            (None, _) => Some(unmappable(row, &spec.exposure, e_raw)),
            (_, None) => Some(unmappable(row, &spec.outcome, d_raw)),
            _ => None,
        };
        if bad.is_none() {
            for (name, src) in &covs {
                match resolver.value(src, &rec, spec) {
                    Some(v) if !v.is_empty() => key.push(v),
                    other => {
                        bad = Some(unmappable(row, name, other));
                        break;
                    }
                }
            }
        }
        if let Some(err) = bad {
            match spec.missing {
                MissingPolicy::Drop => {
                    excluded += 1;
                    continue;
                }
                MissingPolicy::Strict => return Err(err),
            }
        }
        let slot = match (e.unwrap(), d.unwrap()) {
            (false, true) => 0,
            (true, true) => 1,
            (false, false) => 2,
            (true, false) => 3,
        };
        cells.entry(key.join("/")).or_insert([0; 4])[slot] += 1;
    }
    Ok((cells, excluded))
}

pub fn load_counts<R: Read>(input: R, spec: &MicrodataSpec) -> Result<Tabulation> {
    let (cells, excluded) = tabulate(input, spec, false)?;
    let c = cells.into_values().next().unwrap_or([0; 4]);
    Ok(Tabulation {
        counts: Counts2x2::from_array(c),
        excluded,
    })
}

/// One stratum per distinct combination of covariate values, labelled by
/// the values joined with `/` and sorted by label.
pub fn load_stratified<R: Read>(input: R, spec: &MicrodataSpec) -> Result<StratifiedTabulation> {
    if spec.covariates.is_empty() {
        return Err(Error::Spec("stratified load needs at least one covariate".into()));
    }
    let (cells, excluded) = tabulate(input, spec, true)?;
    let strata = cells
        .into_iter()
        .map(|(label, c)| Stratum {
            label,
            counts: Counts2x2::from_array(c),
        })
        .collect();
    Ok(StratifiedTabulation {
        table: StratifiedTable::new(strata)?,
        excluded,
    })
}

/// Inflates survivors to undo selection on hospitalization:
/// `round((a + b)/(1 − eff)) − a`, rounding half away from zero.
pub fn ipw_hospitalized_adjust(deaths: u64, survivors: u64, effectiveness: f64) -> Result<u64> {
    if !(0.0..1.0).contains(&effectiveness) {
        return Err(Error::Domain {
            what: "effectiveness",
            value: effectiveness,
            domain: "[0, 1)",
        });
    }
    let total = deaths + survivors;
    let factor = 1.0 / (1.0 - effectiveness);
    let nearest = factor.round();
    let scaled = if (factor - nearest).abs() < 1e-9 {
        // integer factor (e.g. 10 at 90%): exact arithmetic
        total.checked_mul(nearest as u64).ok_or(Error::Domain {
            what: "adjusted survivors",
            value: total as f64 * factor,
            domain: "u64",
        })?
    } else {
        (total as f64 * factor).round() as u64
    };
    Ok(scaled - deaths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> MicrodataSpec {
        MicrodataSpec::new("e", "d")
    }

    #[test]
    fn four_rows_give_unit_table() {
        let csv = "e,d\n0,1\n1,1\n0,0\n1,0\n";
        let t = load_counts(csv.as_bytes(), &spec()).unwrap();
        assert_eq!(t.counts, Counts2x2::new(1, 1, 1, 1));
        assert_eq!(t.excluded, 0);
    }

    #[test]
    fn unmappable_rows_are_dropped_or_fatal() {
        let csv = "e,d\n0,1\n1,maybe\n0,0\n";
        let t = load_counts(csv.as_bytes(), &spec()).unwrap();
        assert_eq!(t.counts, Counts2x2::new(1, 0, 1, 0));
        assert_eq!(t.excluded, 1);
        let mut strict = spec();
        strict.missing = MissingPolicy::Strict;
        match load_counts(csv.as_bytes(), &strict) {
            Err(Error::UnmappableValue { row, column, value }) => {
                assert_eq!((row, column.as_str(), value.as_str()), (2, "d", "maybe"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_column_is_reported() {
        let csv = "e,x\n0,1\n";
        assert_eq!(
            load_counts(csv.as_bytes(), &spec()),
            Err(Error::MissingColumn("d".into()))
        );
    }

    #[test]
    fn mapping_is_case_insensitive() {
        let csv = "e,d\nYes,NO\n yes ,True\n";
        let t = load_counts(csv.as_bytes(), &spec()).unwrap();
        assert_eq!(t.counts, Counts2x2::new(0, 1, 0, 1));
    }

    #[test]
    fn parses_spec_file() {
        let s = MicrodataSpec::parse(
            r#"
            exposure = "mj"
            outcome = "hd"
            covariates = ["age35", "sex"]
            derive = ["age35 = age >= 35"]
            truthy = ["Used"]
            falsy = ["Never"]
            missing = "strict"
            "#,
        )
        .unwrap();
        assert_eq!(s.truthy, vec!["used"]);
        assert_eq!(s.missing, MissingPolicy::Strict);
        assert_eq!(s.derived[0].op, CompareOp::Ge);
        assert!(MicrodataSpec::parse("exposure = \"a\"").is_err());
        assert!(MicrodataSpec::parse("exposure = \"a\"\noutcome = \"b\"\ncolour = 1").is_err());
        assert!(MicrodataSpec::parse("exposure = \"a\"\noutcome = \"b\"\ntruthy = [\"x\"]\nfalsy = [\"X\"]").is_err());
    }

    #[test]
    fn derived_covariate_stratifies() {
        let mut s = spec();
        s.covariates = vec!["old".into()];
        s.derived = vec!["old = age >= 35".parse().unwrap()];
        let csv = "e,d,age\n0,1,20\n1,1,40\n0,0,35\n1,0,34\n0,1,50\n1,1,18\n0,0,19\n1,0,60\n";
        let t = load_stratified(csv.as_bytes(), &s).unwrap();
        let labels: Vec<&str> = t.table.strata().iter().map(|s| s.label.as_str()).collect();
        assert_eq!(labels, ["0", "1"]);
        assert_eq!(t.table.strata()[0].counts, Counts2x2::new(1, 1, 1, 1));
        assert_eq!(t.table.weights(), vec![0.5, 0.5]);
    }

    #[test]
    fn constant_covariate_matches_unstratified() {
        let mut s = spec();
        s.covariates = vec!["site".into()];
        let csv = "e,d,site\n0,1,a\n1,1,a\n0,0,a\n1,0,a\n1,1,a\n";
        let strat = load_stratified(csv.as_bytes(), &s).unwrap();
        let flat = load_counts(csv.as_bytes(), &s).unwrap();
        assert_eq!(strat.table.len(), 1);
        assert_eq!(strat.table.strata()[0].counts, flat.counts);
    }

    #[test]
    fn degenerate_stratum_names_label() {
        let mut s = spec();
        s.covariates = vec!["g".into()];
        let csv = "e,d,g\n0,1,a\n1,1,a\n0,0,a\n1,0,a\n1,1,b\n1,0,b\n";
        match load_stratified(csv.as_bytes(), &s) {
            Err(Error::DegenerateStratum { label, .. }) => assert_eq!(label, "b"),
            other => panic!("{other:?}"),
        }
        s.covariates.clear();
        assert!(load_stratified(csv.as_bytes(), &s).is_err());
    }

    #[test]
    fn ipw_adjustment() {
        for b in [0, 1, 33, 1523, 2_666] {
            assert_eq!(ipw_hospitalized_adjust(7, b, 0.9).unwrap(), (7 + b) * 10 - 7);
        }
        assert_eq!(ipw_hospitalized_adjust(0, 5, 0.9).unwrap(), 50);
        assert_eq!(ipw_hospitalized_adjust(3, 11, 0.0).unwrap(), 11);
        assert_eq!(ipw_hospitalized_adjust(1, 2, 0.5).unwrap(), 5);
        assert_eq!(ipw_hospitalized_adjust(2, 1, 0.3).unwrap(), 2);
        assert!(ipw_hospitalized_adjust(1, 1, 1.0).is_err());
        assert!(ipw_hospitalized_adjust(1, 1, -0.1).is_err());
    }
}
