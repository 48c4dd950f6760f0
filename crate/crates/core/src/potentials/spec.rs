use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{Potential, Table};
use crate::error::{Error, Result};

/// Text-config description of a potential.
///
/// ```toml
/// kind = "polynomial"          # polynomial | power | tabulated | constant | sum
/// coefficients = [0.0, 0.0, 1.0]
/// ```
///
/// Tensor-product polynomials give `factors = [[...], [...]]` instead of
/// `coefficients`; `dimension` then has to match the number of factors.
/// Tabulated potentials name a CSV file (`table`) with columns
/// `coordinate,value` on a uniform grid; relative paths resolve against the
/// config file's directory. Any kind accepts an optional `scale`.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    pub kind: String,
    #[serde(default)]
    pub coefficients: Option<Vec<f64>>,
    #[serde(default)]
    pub factors: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub exponent: Option<f64>,
    #[serde(default)]
    pub dimension: Option<usize>,
    #[serde(default)]
    pub table: Option<PathBuf>,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub scale: Option<f64>,
    #[serde(default)]
    pub terms: Option<Vec<PotentialSpec>>,
}

fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl PotentialSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config(e.to_string()))
    }

    /// Builds the potential; `base` resolves relative table paths.
    pub fn build(&self, base: &Path) -> Result<Potential> {
        let v = match self.kind.as_str() {
            "polynomial" => match (&self.coefficients, &self.factors) {
                (Some(c), None) => Potential::polynomial(c.clone()),
                (None, Some(f)) => Potential::tensor_polynomial(f.clone())?,
                _ => {
                    return Err(config(
                        "polynomial needs exactly one of `coefficients` or `factors`",
                    ))
                }
            },
            "constant" => Potential::constant(
                self.value
                    .ok_or_else(|| config("constant potential needs `value`"))?,
            ),
            "power" => Potential::power(
                self.exponent
                    .ok_or_else(|| config("power potential needs `exponent`"))?,
            )?,
            "tabulated" => {
                let path = self
                    .table
                    .as_ref()
                    .ok_or_else(|| config("tabulated potential needs `table`"))?;
                let path = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                Potential::Tabulated(load_table(&path)?)
            }
            "sum" => {
                let terms = self
                    .terms
                    .as_ref()
                    .ok_or_else(|| config("sum potential needs `terms`"))?;
                Potential::sum(terms.iter().map(|t| t.build(base)).collect::<Result<_>>()?)?
            }
            other => return Err(config(format!("unknown potential kind `{other}`"))),
        };
        let v = match self.scale {
            Some(s) => Potential::scaled(s, v)?,
            None => v,
        };
        if let Some(n) = self.dimension {
            if n != v.dimension() {
                return Err(config(format!(
                    "declared dimension {n} but potential has dimension {}",
                    v.dimension()
                )));
            }
        }
        Ok(v)
    }
}

/// Reads a `coordinate,value` CSV on a uniform grid. Lines whose first field
/// is not a number (headers) are skipped.
pub fn load_table(path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| config(format!("{}: {e}", path.display())))?;
    let mut xs = Vec::new();
    let mut vs = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| config(format!("{}: {e}", path.display())))?;
        if record.len() != 2 {
            return Err(config(format!(
                "{}: expected 2 columns (coordinate, value), found {}",
                path.display(),
                record.len()
            )));
        }
        let (Ok(x), Ok(v)) = (record[0].parse::<f64>(), record[1].parse::<f64>()) else {
            if xs.is_empty() {
                continue;
            }
            return Err(config(format!("{}: unparsable row {record:?}", path.display())));
        };
        xs.push(x);
        vs.push(v);
    }
    if xs.len() < 2 {
        return Err(config(format!("{}: need at least two rows", path.display())));
    }
    let spacing = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
    for (i, x) in xs.iter().enumerate() {
        let expected = xs[0] + spacing * i as f64;
        if (x - expected).abs() > 1e-9 * spacing.abs().max(1.0) {
            return Err(config(format!(
                "{}: grid is not uniform at row {i}",
                path.display()
            )));
        }
    }
    Table::new(xs[0], spacing, vs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_polynomial_and_power() {
        let spec = PotentialSpec::from_toml("kind = \"polynomial\"\ncoefficients = [1.0, 0.0, 2.0]").unwrap();
        let v = spec.build(Path::new(".")).unwrap();
        assert_eq!(v.eval1(2.0).unwrap(), 9.0);
        let spec = PotentialSpec::from_toml("kind = \"power\"\nexponent = -0.5\nscale = 2.0").unwrap();
        assert_eq!(spec.build(Path::new(".")).unwrap().eval1(4.0).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(PotentialSpec::from_toml("kind = \"power\"\nbogus = 1").is_err());
        let spec = PotentialSpec::from_toml("kind = \"power\"").unwrap();
        assert!(matches!(spec.build(Path::new(".")), Err(Error::Config(_))));
        let spec = PotentialSpec::from_toml("kind = \"polynomial\"\ncoefficients=[1.0]\ndimension = 2").unwrap();
        assert!(spec.build(Path::new(".")).is_err());
    }
}
