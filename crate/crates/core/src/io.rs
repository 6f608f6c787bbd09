//! Surface description files (TOML) and result tables (CSV).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::builtins;
use crate::distributions::EmpiricalCCDF;
use crate::geom::{Mat2, Vec2};
use crate::surface::{EdgeGluing, EdgeRef, SurfaceError, TranslationSurface};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("surface file: {0}")]
    Toml(String),
    #[error("surface file: {0}")]
    Spec(String),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
}

/// On-disk surface description.
///
/// Either `builtin` (with `params`) or explicit `polygons` and `gluings`.
/// Gluings are pairs `[[polygon, edge], [polygon, edge]]`. An optional
/// `matrix = [a, b, c, d]` acts on the result.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub polygons: Vec<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gluings: Vec<[[usize; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<[f64; 4]>,
}

impl SurfaceSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, IoError> {
        toml::from_str(text).map_err(|e| IoError::Toml(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("surface specs always serialize")
    }

    pub fn builtin(name: &str, params: &[f64]) -> Self {
        Self {
            name: Some(name.to_string()),
            builtin: Some(name.to_string()),
            params: params.to_vec(),
            ..Self::default()
        }
    }

    /// Description of an existing surface as explicit polygons.
    pub fn from_surface<T: Scalar>(name: &str, surface: &TranslationSurface<T>) -> Self {
        let (polys, gluings) = surface.to_raw();
        Self {
            name: Some(name.to_string()),
            polygons: polys
                .iter()
                .map(|p| p.iter().map(|v| [v.x.as_f64(), v.y.as_f64()]).collect())
                .collect(),
            gluings: gluings
                .iter()
                .map(|g| {
                    [
                        [g.side_a.polygon, g.side_a.edge],
                        [g.side_b.polygon, g.side_b.edge],
                    ]
                })
                .collect(),
            ..Self::default()
        }
    }

    pub fn display_name(&self) -> String {
        self.name
            .clone()
            .or_else(|| self.builtin.clone())
            .unwrap_or_else(|| "surface".to_string())
    }

    pub fn build<T: Scalar>(&self) -> Result<TranslationSurface<T>, IoError> {
        let base = match &self.builtin {
            Some(name) => {
                if !self.polygons.is_empty() || !self.gluings.is_empty() {
                    return Err(IoError::Spec(
                        "give either `builtin` or `polygons`/`gluings`, not both".into(),
                    ));
                }
                let params: Vec<T> = self.params.iter().map(|&p| T::lit(p)).collect();
                builtins::by_name(name, &params).map_err(IoError::Spec)?
            }
            None => {
                if self.polygons.is_empty() {
                    return Err(IoError::Spec("no `builtin` and no `polygons`".into()));
                }
                if !self.params.is_empty() {
                    return Err(IoError::Spec("`params` only apply to a `builtin`".into()));
                }
                let polys = self
                    .polygons
                    .iter()
                    .map(|p| {
                        p.iter()
                            .map(|&[x, y]| Vec2::new(T::lit(x), T::lit(y)))
                            .collect()
                    })
                    .collect();
                let gluings = self
                    .gluings
                    .iter()
                    .map(|&[[pa, ea], [pb, eb]]| {
                        EdgeGluing::new(EdgeRef::new(pa, ea), EdgeRef::new(pb, eb))
                    })
                    .collect();
                TranslationSurface::build(polys, gluings)?
            }
        };
        match self.matrix {
            Some([a, b, c, d]) => {
                Ok(base.apply_matrix(&Mat2::new(T::lit(a), T::lit(b), T::lit(c), T::lit(d)))?)
            }
            None => Ok(base),
        }
    }
}

/// `# key=value` lines written above a result table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CsvMetadata {
    pub entries: Vec<(String, String)>,
}

impl CsvMetadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.set(key, value);
        self
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

pub const CSV_HEADER: &str = "t,value,stderr";

/// Renders a result table. Counts from `ccdf` overwrite any same-named metadata.
/// Floats use the shortest representation that parses back to the same value.
pub fn write_ccdf_csv(meta: &CsvMetadata, ccdf: &EmpiricalCCDF) -> String {
    let mut meta = meta.clone();
    meta.set("samples", ccdf.n_samples);
    meta.set("censored", ccdf.n_censored);
    meta.set("aborted", ccdf.n_aborted);
    let mut out = String::new();
    for (k, v) in &meta.entries {
        let _ = writeln!(out, "# {k}={v}");
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let rows = ccdf.grid.iter().zip(&ccdf.values).zip(&ccdf.stderr);
    let result = w
        .write_record(CSV_HEADER.split(','))
        .and_then(|_| {
            rows.map(|((t, v), e)| w.write_record([t.to_string(), v.to_string(), e.to_string()]))
                .collect::<Result<(), _>>()
        })
        .and_then(|_| w.flush().map_err(csv::Error::from));
    result.expect("writing to memory");
    let body = w.into_inner().expect("writing to memory");
    out.push_str(std::str::from_utf8(&body).expect("ascii output"));
    out
}

pub fn parse_ccdf_csv(text: &str) -> Result<(CsvMetadata, EmpiricalCCDF), IoError> {
    let mut meta = CsvMetadata::new();
    let mut ccdf = EmpiricalCCDF {
        grid: Vec::new(),
        values: Vec::new(),
        stderr: Vec::new(),
        n_samples: 0,
        n_censored: 0,
        n_aborted: 0,
    };
    // body line index -> line number in `text`
    let mut lines = Vec::new();
    let mut body = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix('#') {
            let (k, v) = rest.trim().split_once('=').ok_or_else(|| IoError::Csv {
                line: idx + 1,
                message: "metadata lines look like `# key=value`".into(),
            })?;
            meta.set(k.trim(), v.trim());
            continue;
        }
        lines.push(idx + 1);
        body.push_str(trimmed);
        body.push('\n');
    }
    let source_line = |pos: Option<&csv::Position>| {
        pos.and_then(|p| lines.get(p.line() as usize - 1).copied())
            .unwrap_or(0)
    };
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let header = reader.headers().map_err(|e| IoError::Csv {
        line: source_line(e.position()),
        message: e.to_string(),
    })?;
    if lines.is_empty() {
        return Err(IoError::Csv {
            line: 0,
            message: format!("missing header `{CSV_HEADER}`"),
        });
    }
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(IoError::Csv {
            line: lines[0],
            message: format!(
                "expected header `{CSV_HEADER}`, found `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    for record in reader.records() {
        let record = record.map_err(|e| IoError::Csv {
            line: source_line(e.position()),
            message: e.to_string(),
        })?;
        let line = source_line(record.position());
        let err = |message: String| IoError::Csv { line, message };
        if record.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", record.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("`{s}`: {e}")));
        ccdf.grid.push(num(&record[0])?);
        ccdf.values.push(num(&record[1])?);
        ccdf.stderr.push(num(&record[2])?);
    }
    let count = |key: &str| -> Result<usize, IoError> {
        match meta.get(key) {
            Some(v) => v.parse().map_err(|e| IoError::Csv {
                line: 0,
                message: format!("metadata `{key}`: {e}"),
            }),
            None => Ok(0),
        }
    };
    ccdf.n_samples = count("samples")?;
    ccdf.n_censored = count("censored")?;
    ccdf.n_aborted = count("aborted")?;
    Ok((meta, ccdf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtins::l_surface;

    #[test]
    fn builtin_spec_builds() {
        let spec =
            SurfaceSpec::from_toml_str("builtin = \"l_surface\"\nparams = [1.0, 2.0]\n").unwrap();
        let s = spec.build::<f64>().unwrap();
        assert_eq!(s.stratum().kappa, 3);
        assert_eq!(spec.display_name(), "l_surface");
    }

    #[test]
    fn explicit_spec_round_trips() {
        let l = l_surface::<f64>(1.0, 1.0).unwrap();
        let spec = SurfaceSpec::from_surface("L", &l);
        let back = SurfaceSpec::from_toml_str(&spec.to_toml_string()).unwrap();
        assert_eq!(spec, back);
        let rebuilt = back.build::<f64>().unwrap();
        assert_eq!(rebuilt.stratum(), l.stratum());
        assert!((rebuilt.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spec_errors_are_reported() {
        assert!(matches!(
            SurfaceSpec::from_toml_str("polygons = 3"),
            Err(IoError::Toml(_))
        ));
        assert!(matches!(
            SurfaceSpec::from_toml_str("colour = 3"),
            Err(IoError::Toml(_))
        ));
        let unpaired = "polygons = [[[0,0],[1,0],[1,1],[0,1]]]\ngluings = [[[0,0],[0,2]]]\n";
        let err = SurfaceSpec::from_toml_str(unpaired)
            .unwrap()
            .build::<f64>()
            .unwrap_err();
        assert!(
            matches!(err, IoError::Surface(SurfaceError::UnpairedEdge(_))),
            "{err}"
        );
        let unknown = SurfaceSpec::builtin("klein_bottle", &[]);
        assert!(matches!(unknown.build::<f64>(), Err(IoError::Spec(_))));
    }

    #[test]
    fn matrix_is_applied() {
        let mut spec = SurfaceSpec::builtin("square_torus", &[]);
        spec.matrix = Some([2.0, 0.0, 0.0, 0.5]);
        let s = spec.build::<f64>().unwrap();
        let v = s.polygon(0).vertices();
        assert!(v.iter().any(|p| (p.x - 2.0).abs() < 1e-12));
        spec.matrix = Some([1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            spec.build::<f64>(),
            Err(IoError::Surface(SurfaceError::DegenerateMatrix { .. }))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let grid = [0.0, 0.1, 0.30000000000000004, 1.0 / 3.0];
        let times = [0.05, 0.2, f64::INFINITY, 0.31, 0.7, 1e-17];
        let ccdf = EmpiricalCCDF::from_times(&grid, &times, 2);
        let meta = CsvMetadata::new()
            .with("surface", "square_torus")
            .with("epsilon", 0.05);
        let text = write_ccdf_csv(&meta, &ccdf);
        let (m, back) = parse_ccdf_csv(&text).unwrap();
        assert_eq!(back, ccdf);
        assert_eq!(m.get("surface"), Some("square_torus"));
        assert_eq!(m.get("censored"), Some("1"));
        assert_eq!(write_ccdf_csv(&m, &back), text);
    }

    #[test]
    fn csv_errors_name_the_line() {
        let err = parse_ccdf_csv("# a=1\nt,value,stderr\n0,1\n").unwrap_err();
        assert_eq!(
            err,
            IoError::Csv {
                line: 3,
                message: "expected 3 fields, found 2".into()
            }
        );
        assert!(parse_ccdf_csv("0,1,0\n").is_err());
    }
}
