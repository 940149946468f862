//! File formats.
//!
//! - curves: one JSON object `{"id", "t", "y"}` per line
//! - fit configuration and simulation scenarios: TOML with a
//!   `schema_version` key; unknown keys are rejected
//! - fit results and true eigen-elements: JSON documents
//!
//! Floats are written in shortest round-trip form, so reading back what was
//! written reproduces every time and value bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{Curve, FunctionalSample, Grid};
use crate::eigen::EigenResult;
use crate::error::{FpcaError, Result};
use crate::pipeline::{FitConfig, FitResult};
use crate::simulator::{DesignSpec, MfbmSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveRecord {
    id: u64,
    t: Vec<f64>,
    y: Vec<f64>,
}

/// Reads newline-delimited curve records; blank lines are skipped. The
/// design is common iff every curve has the same times.
pub fn read_curves(reader: impl BufRead) -> Result<FunctionalSample> {
    let mut curves = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| FpcaError::Parse { line: k + 1, message };
        let rec: CurveRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        curves.push(Curve::new(rec.id, rec.t, rec.y).map_err(|e| parse_err(e.to_string()))?);
    }
    FunctionalSample::infer_design(curves)
}

pub fn write_curves(mut writer: impl Write, sample: &FunctionalSample) -> Result<()> {
    for c in sample.curves() {
        let rec = CurveRecord {
            id: c.id(),
            t: c.times().to_vec(),
            y: c.values().to_vec(),
        };
        serde_json::to_writer(&mut writer, &rec).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_curves_file(path: &Path) -> Result<FunctionalSample> {
    read_curves(BufReader::new(File::open(path)?))
}

pub fn write_curves_file(path: &Path, sample: &FunctionalSample) -> Result<()> {
    write_curves(BufWriter::new(File::create(path)?), sample)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line on which `key = …` first appears, if any.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        l.trim_start()
            .strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|k| k + 1)
}

fn toml_error(text: &str, e: toml::de::Error) -> FpcaError {
    let message = e.message().trim().to_string();
    let line = match e.span() {
        Some(span) => line_of_offset(text, span.start),
        None => message
            .split('`')
            .nth(1)
            .and_then(|key| line_of_key(text, key))
            .unwrap_or(0),
    };
    FpcaError::Parse { line, message }
}

fn check_schema(version: Option<&toml::Value>) -> Result<()> {
    match version.and_then(toml::Value::as_integer) {
        Some(v) if v == i64::from(SCHEMA_VERSION) => Ok(()),
        Some(v) => Err(FpcaError::Config(format!(
            "unsupported schema_version {v}, expected {SCHEMA_VERSION}"
        ))),
        None => Err(FpcaError::Config("missing integer key schema_version".into())),
    }
}

/// Parses a TOML fit configuration; unset keys take their defaults.
pub fn parse_config(text: &str) -> Result<FitConfig> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    check_schema(table.get("schema_version"))?;
    table.remove("schema_version");
    let config: FitConfig = toml::Value::Table(table).try_into().map_err(|e| toml_error(text, e))?;
    config.validate()?;
    Ok(config)
}

/// TOML text that [`parse_config`] reads back to `config`.
pub fn config_to_toml(config: &FitConfig) -> String {
    let mut table = toml::Table::new();
    table.insert("schema_version".into(), toml::Value::Integer(SCHEMA_VERSION.into()));
    let body = toml::Table::try_from(config).expect("configuration serializes to a table");
    table.extend(body);
    toml::to_string(&table).expect("table serializes")
}

pub fn read_config_file(path: &Path) -> Result<FitConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Resolution of the true eigen-elements written next to simulated data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruthSettings {
    pub n_elements: usize,
    /// Grid the truth is reported on; should match the fit's `grid_size`.
    pub grid_size: usize,
    /// Grid of the high-resolution decomposition.
    pub fine_points: usize,
}

impl Default for TruthSettings {
    fn default() -> Self {
        Self {
            n_elements: 9,
            grid_size: 101,
            fine_points: 501,
        }
    }
}

/// A simulation scenario: process, design and truth resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub process: MfbmSpec,
    pub design: DesignSpec,
    #[serde(default)]
    pub truth: TruthSettings,
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let table: toml::Table = toml::from_str(text).map_err(|e| toml_error(text, e))?;
    check_schema(table.get("schema_version"))?;
    let scenario: Scenario = toml::Value::Table(table).try_into().map_err(|e| toml_error(text, e))?;
    scenario.process.validate()?;
    scenario.design.validate()?;
    Ok(scenario)
}

pub fn read_scenario_file(path: &Path) -> Result<Scenario> {
    parse_scenario(&std::fs::read_to_string(path)?)
}

/// Output of `fit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDocument {
    pub schema_version: u32,
    /// Curve file the fit was computed from.
    pub data_path: Option<String>,
    pub result: FitResult,
}

/// True eigen-elements of a simulated scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthDocument {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub truth: EigenResult,
}

impl TruthDocument {
    pub fn grid(&self) -> &Grid {
        &self.truth.grid
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, value).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| FpcaError::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

/// Serde adapter writing `±∞` and NaN as `null` and reading `null` as `+∞`.
/// JSON has no infinities, and infeasible bound terms are `+∞`.
pub(crate) mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_some(x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::ErrorClass;
    use crate::simulator::simulate;

    fn sample() -> FunctionalSample {
        let spec = MfbmSpec {
            sigma0: 0.3,
            ..MfbmSpec::fbm(0.4)
        };
        simulate(&spec, &DesignSpec::Independent { n_curves: 8, mean_points: 12.0 }, 5).unwrap()
    }

    #[test]
    fn curves_round_trip_bit_exactly() {
        let s = sample();
        let mut buf = Vec::new();
        write_curves(&mut buf, &s).unwrap();
        let back = read_curves(buf.as_slice()).unwrap();
        assert_eq!(back.n_curves(), s.n_curves());
        for (a, b) in s.curves().iter().zip(back.curves()) {
            assert_eq!(a.id(), b.id());
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a.times()), bits(b.times()));
            assert_eq!(bits(a.values()), bits(b.values()));
        }
    }

    #[test]
    fn seventeen_digit_decimals_survive() {
        let text = "{\"id\":0,\"t\":[0.10000000000000001,0.5],\"y\":[1.2345678901234567,-3e-300]}\n\
                    {\"id\":1,\"t\":[0.25,0.75],\"y\":[0.0,1.0]}\n";
        let s = read_curves(text.as_bytes()).unwrap();
        assert_eq!(s.curves()[0].values()[0], 1.2345678901234567);
        assert_eq!(s.curves()[0].values()[1], -3e-300);
        let mut buf = Vec::new();
        write_curves(&mut buf, &s).unwrap();
        assert_eq!(read_curves(buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn common_design_is_inferred() {
        let s = simulate(&MfbmSpec::fbm(0.5), &DesignSpec::Common { n_curves: 3, points: 5 }, 1).unwrap();
        let mut buf = Vec::new();
        write_curves(&mut buf, &s).unwrap();
        assert_eq!(read_curves(buf.as_slice()).unwrap().design(), crate::data::Design::Common);
    }

    #[test]
    fn malformed_records_name_the_line() {
        let text = "{\"id\":0,\"t\":[0.1],\"y\":[1.0]}\n\n{\"id\":1,\"t\":[0.5,0.2],\"y\":[1.0,2.0]}\n";
        match read_curves(text.as_bytes()).unwrap_err() {
            FpcaError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        let text = "{\"id\":0,\"t\":[0.1],\"y\":[1.0]}\n{\"id\":1,\"t\":[0.5],\"y\":[1.0],\"z\":2}\n";
        match read_curves(text.as_bytes()).unwrap_err() {
            FpcaError::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
        assert!(read_curves("not json\n".as_bytes()).is_err());
    }

    #[test]
    fn config_defaults_and_round_trip() {
        let c = parse_config("schema_version = 1\n").unwrap();
        assert_eq!(c, FitConfig::default());
        let c = parse_config("schema_version = 1\nn_elements = 3\nk0 = 5\nh_grid_min = 0.01\nkernel = \"uniform\"\nh_clip = [0.1, 0.9]\n").unwrap();
        assert_eq!((c.n_elements, c.k0, c.h_grid_min), (3, 5, Some(0.01)));
        assert_eq!(c.kernel, crate::kernel::Kernel::Uniform);
        assert_eq!(parse_config(&config_to_toml(&c)).unwrap(), c);
    }

    #[test]
    fn config_errors() {
        let e = parse_config("schema_version = 1\nn_elements = 3\nbogus = 2\n").unwrap_err();
        assert!(matches!(e, FpcaError::Parse { line: 3, .. }), "{e}");
        assert!(matches!(parse_config("n_elements = 3\n").unwrap_err(), FpcaError::Config(_)));
        assert!(matches!(parse_config("schema_version = 2\n").unwrap_err(), FpcaError::Config(_)));
        let e = parse_config("schema_version = 1\nk0 = = 3\n").unwrap_err();
        assert!(matches!(e, FpcaError::Parse { line: 2, .. }), "{e}");
        assert_eq!(e.class(), ErrorClass::Parse);
        assert_eq!(parse_config("schema_version = 1\nn_elements = 12\n").unwrap_err().class(), ErrorClass::Infeasible);
    }

    #[test]
    fn scenario_parses() {
        let text = r#"
schema_version = 1
seed = 7

[process]
H = { constant = 0.5 }
L = { constant = 1.0 }
mu = { preset = "sine" }
sigma0 = 0.25

[design]
kind = "independent"
n_curves = 200
mean_points = 100.0
"#;
        let s = parse_scenario(text).unwrap();
        assert_eq!(s.seed, 7);
        assert_eq!(s.design, DesignSpec::Independent { n_curves: 200, mean_points: 100.0 });
        assert_eq!(s.truth, TruthSettings::default());
        let again = parse_scenario(&toml::to_string(&s).unwrap()).unwrap();
        assert_eq!(again, s);
        let bad = text.replace("sigma0", "sigma_zero");
        let e = parse_scenario(&bad).unwrap_err();
        assert!(matches!(e, FpcaError::Parse { line: 9, .. }), "{e:?}");
    }

    #[test]
    fn infinite_terms_round_trip_through_json() {
        use crate::bounds::BoundTerms;
        let v = vec![BoundTerms::INFEASIBLE, BoundTerms { b1: 1.5, b2: 0.25, b3: 0.0 }];
        let text = serde_json::to_string(&v).unwrap();
        assert_eq!(serde_json::from_str::<Vec<BoundTerms>>(&text).unwrap(), v);
    }
}
