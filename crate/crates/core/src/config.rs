//! Run configuration files (TOML).
//!
//! ```toml
//! seed = 7
//! scalar = "real"          # or "complex"
//!
//! [model]
//! kind = "chain"           # or "cylinder" (then `width` instead of `spin`)
//! spin = 0.5
//! length = 16
//! field = 1.0
//!
//! [tebd]
//! chi = 32
//! delta_e = 1e-10
//!
//! [method]
//! kind = "rsvd"            # or "tsvd"
//! oversample_ratio = 2.0
//! power = 4
//! ```
//!
//! Everything except the model and `tebd.chi` has a default. Unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::SectorRankKind;
use crate::factorize::{Method, RsvdSettings};
use crate::models::{GateForm, Model};
use crate::mps::TebdConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{}{key}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        line: Option<usize>,
        key: String,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarKind {
    #[default]
    Real,
    Complex,
}

/// Grid for `bench-compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub fields: Vec<f64>,
    /// Empty means the run's χ.
    pub chis: Vec<usize>,
    pub repeats: usize,
    pub reference: Method,
    pub candidate: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: Model,
    pub tebd: TebdConfig,
    pub scalar: ScalarKind,
    pub out: Option<PathBuf>,
    pub grid: Option<GridConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ModelKind {
    Chain,
    Cylinder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum MethodKind {
    Tsvd,
    Rsvd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PolicyKind {
    Estimate,
    Maximal,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    kind: ModelKind,
    length: Option<usize>,
    field: Option<f64>,
    spin: Option<f64>,
    width: Option<usize>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawTebd {
    chi: Option<usize>,
    delta_e: Option<f64>,
    dt0: Option<f64>,
    step_factor: Option<f64>,
    check_interval: Option<usize>,
    dt_min: Option<f64>,
    max_sweeps: Option<usize>,
    gate_form: Option<GateForm>,
    schmidt_tol: Option<f64>,
    audit: Option<bool>,
    record_spectra: Option<bool>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawMethod {
    kind: Option<MethodKind>,
    oversample_ratio: Option<f64>,
    power: Option<usize>,
    min_dim: Option<usize>,
    sector_policy: Option<PolicyKind>,
    slack: Option<usize>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    fields: Vec<f64>,
    chis: Option<Vec<usize>>,
    repeats: Option<usize>,
    methods: Option<[MethodKind; 2]>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    scalar: Option<ScalarKind>,
    out: Option<PathBuf>,
    model: RawModel,
    #[serde(default)]
    tebd: RawTebd,
    #[serde(default)]
    method: RawMethod,
    grid: Option<RawGrid>,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].matches('\n').count() + 1
}

/// Line of the first `key = ...` assignment, if any.
fn key_line(src: &str, key: &str) -> Option<usize> {
    src.lines()
        .position(|l| {
            let t = l.trim_start();
            t.strip_prefix(key)
                .map(|rest| rest.trim_start().starts_with('='))
                .unwrap_or(false)
        })
        .map(|i| i + 1)
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&src)
    }

    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(src).map_err(|e| ConfigError::Parse {
            line: e.span().map(|s| line_of(src, s.start)).unwrap_or(0),
            message: e.message().to_string(),
        })?;
        let invalid = |key: &str, message: String| ConfigError::Invalid {
            line: key_line(src, key.rsplit('.').next().unwrap_or(key)),
            key: key.to_string(),
            message,
        };
        let missing = |key: &str| ConfigError::Invalid {
            line: None,
            key: key.to_string(),
            message: "required key is missing".into(),
        };

        let m = &raw.model;
        let length = m.length.ok_or_else(|| missing("model.length"))?;
        let field = m.field.ok_or_else(|| missing("model.field"))?;
        let model = match m.kind {
            ModelKind::Chain => {
                if m.width.is_some() {
                    return Err(invalid("model.width", "only valid for the cylinder".into()));
                }
                let spin = m.spin.ok_or_else(|| missing("model.spin"))?;
                Model::chain(length, field, spin)
            }
            ModelKind::Cylinder => {
                if m.spin.is_some() {
                    return Err(invalid("model.spin", "only valid for the chain".into()));
                }
                let width = m.width.ok_or_else(|| missing("model.width"))?;
                Model::cylinder(length, width, field)
            }
        }
        .map_err(|e| invalid("model", e.to_string()))?;

        let d = TebdConfig::default();
        let rs = RsvdSettings::default();
        let t = &raw.tebd;
        let mm = &raw.method;
        let settings = RsvdSettings {
            oversample_ratio: mm.oversample_ratio.unwrap_or(rs.oversample_ratio),
            power: mm.power.unwrap_or(rs.power),
            seed: 0,
            min_dim: mm.min_dim.unwrap_or(rs.min_dim),
        };
        let to_method = |k: MethodKind| match k {
            MethodKind::Tsvd => Method::Tsvd,
            MethodKind::Rsvd => Method::Rsvd(settings),
        };
        let tebd = TebdConfig {
            chi: t.chi.ok_or_else(|| missing("tebd.chi"))?,
            delta_e: t.delta_e.unwrap_or(d.delta_e),
            dt0: t.dt0.unwrap_or(d.dt0),
            step_factor: t.step_factor.unwrap_or(d.step_factor),
            check_interval: t.check_interval.unwrap_or(d.check_interval),
            dt_min: t.dt_min.unwrap_or(d.dt_min),
            max_sweeps: t.max_sweeps.unwrap_or(d.max_sweeps),
            method: to_method(mm.kind.unwrap_or(MethodKind::Tsvd)),
            gate_form: t.gate_form.unwrap_or(d.gate_form),
            sector_policy: match mm.sector_policy {
                Some(PolicyKind::Maximal) => SectorRankKind::Maximal,
                _ => SectorRankKind::PerSectorEstimate,
            },
            slack: mm.slack,
            schmidt_tol: t.schmidt_tol.unwrap_or(d.schmidt_tol),
            seed: raw.seed.unwrap_or(0),
            audit: t.audit.unwrap_or(d.audit),
            record_spectra: t.record_spectra.unwrap_or(d.record_spectra),
        };
        if settings.oversample_ratio < 1.0 || !settings.oversample_ratio.is_finite() {
            return Err(invalid(
                "method.oversample_ratio",
                format!("must be at least 1, got {}", settings.oversample_ratio),
            ));
        }
        if let Err(e) = tebd.validate() {
            let msg = e.to_string();
            let key = msg.split_whitespace().next().unwrap_or("tebd").to_string();
            return Err(invalid(&format!("tebd.{key}"), msg));
        }
        if !(tebd.schmidt_tol >= 0.0) {
            return Err(invalid("tebd.schmidt_tol", "must be nonnegative".into()));
        }

        let grid = match &raw.grid {
            None => None,
            Some(g) => {
                if g.fields.is_empty() {
                    return Err(invalid("grid.fields", "at least one field is required".into()));
                }
                if let Some(h) = g.fields.iter().find(|h| !h.is_finite()) {
                    return Err(invalid("grid.fields", format!("field {h} is not finite")));
                }
                let chis = g.chis.clone().unwrap_or_default();
                if chis.contains(&0) {
                    return Err(invalid("grid.chis", "chi must be at least 1".into()));
                }
                let repeats = g.repeats.unwrap_or(1);
                if repeats == 0 {
                    return Err(invalid("grid.repeats", "must be at least 1".into()));
                }
                let [r, c] = g.methods.unwrap_or([MethodKind::Tsvd, MethodKind::Rsvd]);
                Some(GridConfig {
                    fields: g.fields.clone(),
                    chis,
                    repeats,
                    reference: to_method(r),
                    candidate: to_method(c),
                })
            }
        };

        Ok(RunConfig {
            model,
            tebd,
            scalar: raw.scalar.unwrap_or_default(),
            out: raw.out.clone(),
            grid,
        })
    }

    /// Canonical TOML with every key spelled out; parses back to `self`.
    pub fn to_toml(&self) -> String {
        let (kind, spin, width) = match self.model {
            Model::Chain(c) => (ModelKind::Chain, Some(c.spin), None),
            Model::Cylinder(c) => (ModelKind::Cylinder, None, Some(c.width)),
        };
        let t = &self.tebd;
        let settings = match (&t.method, self.grid.as_ref()) {
            (Method::Rsvd(s), _) => *s,
            (
                _,
                Some(GridConfig {
                    candidate: Method::Rsvd(s),
                    ..
                }),
            ) => *s,
            (
                _,
                Some(GridConfig {
                    reference: Method::Rsvd(s),
                    ..
                }),
            ) => *s,
            _ => RsvdSettings::default(),
        };
        let kind_of = |m: &Method| match m {
            Method::Tsvd => MethodKind::Tsvd,
            Method::Rsvd(_) => MethodKind::Rsvd,
        };
        let raw = RawConfig {
            seed: Some(t.seed),
            scalar: Some(self.scalar),
            out: self.out.clone(),
            model: RawModel {
                kind,
                length: Some(self.model.length()),
                field: Some(self.model.field()),
                spin,
                width,
            },
            tebd: RawTebd {
                chi: Some(t.chi),
                delta_e: Some(t.delta_e),
                dt0: Some(t.dt0),
                step_factor: Some(t.step_factor),
                check_interval: Some(t.check_interval),
                dt_min: Some(t.dt_min),
                max_sweeps: Some(t.max_sweeps),
                gate_form: Some(t.gate_form),
                schmidt_tol: Some(t.schmidt_tol),
                audit: Some(t.audit),
                record_spectra: Some(t.record_spectra),
            },
            method: RawMethod {
                kind: Some(kind_of(&t.method)),
                oversample_ratio: Some(settings.oversample_ratio),
                power: Some(settings.power),
                min_dim: Some(settings.min_dim),
                sector_policy: Some(match t.sector_policy {
                    SectorRankKind::Maximal => PolicyKind::Maximal,
                    SectorRankKind::PerSectorEstimate => PolicyKind::Estimate,
                }),
                slack: t.slack,
            },
            grid: self.grid.as_ref().map(|g| RawGrid {
                fields: g.fields.clone(),
                chis: Some(g.chis.clone()),
                repeats: Some(g.repeats),
                methods: Some([kind_of(&g.reference), kind_of(&g.candidate)]),
            }),
        };
        toml::to_string(&raw).expect("plain data serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
[model]
kind = \"chain\"
spin = 0.5
length = 16
field = 1.0

[tebd]
chi = 32
";

    #[test]
    fn minimal_chain_gets_defaults() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.model, Model::chain(16, 1.0, 0.5).unwrap());
        assert_eq!(c.tebd.chi, 32);
        assert_eq!(c.tebd.dt0, 0.4);
        assert_eq!(c.tebd.step_factor, 0.7);
        assert_eq!(c.tebd.method, Method::Tsvd);
        assert_eq!(c.scalar, ScalarKind::Real);
        assert!(c.grid.is_none());
    }

    #[test]
    fn rsvd_defaults() {
        let src = format!("{MINIMAL}\n[method]\nkind = \"rsvd\"\n");
        let c = RunConfig::parse(&src).unwrap();
        let Method::Rsvd(s) = c.tebd.method else { panic!() };
        assert_eq!(s.oversample_ratio, 2.0);
        assert_eq!(s.power, 4);
        assert_eq!(s.params_for(10, 0).oversample, 20);
    }

    #[test]
    fn zero_chi_rejected_with_line() {
        let src = MINIMAL.replace("chi = 32", "chi = 0");
        let err = RunConfig::parse(&src).unwrap_err();
        match err {
            ConfigError::Invalid { line, key, .. } => {
                assert_eq!(key, "tebd.chi");
                assert_eq!(line, Some(9));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn unknown_key_rejected_with_line() {
        let src = MINIMAL.replace("field = 1.0", "field = 1.0\ncolour = 3");
        let err = RunConfig::parse(&src).unwrap_err();
        let ConfigError::Parse { line, message } = err else {
            panic!()
        };
        assert_eq!(line, 7);
        assert!(message.contains("colour"), "{message}");
    }

    #[test]
    fn missing_keys_reported() {
        let src = MINIMAL.replace("spin = 0.5\n", "");
        let err = RunConfig::parse(&src).unwrap_err().to_string();
        assert!(err.contains("model.spin"), "{err}");
        let src = MINIMAL.replace("chi = 32\n", "");
        assert!(RunConfig::parse(&src).unwrap_err().to_string().contains("tebd.chi"));
    }

    #[test]
    fn out_of_range_values_rejected() {
        for (from, to) in [("spin = 0.5", "spin = 0.7"), ("length = 16", "length = 1")] {
            assert!(RunConfig::parse(&MINIMAL.replace(from, to)).is_err(), "{to}");
        }
        let src = format!("{MINIMAL}step_factor = 1.5\n");
        assert!(RunConfig::parse(&src).is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let src = "
seed = 11
scalar = \"complex\"
out = \"runs/cyl\"

[model]
kind = \"cylinder\"
width = 3
length = 6
field = 3.0

[tebd]
chi = 20
gate_form = \"product\"

[method]
kind = \"rsvd\"
power = 2
slack = 3

[grid]
fields = [2.0, 3.0]
repeats = 2
";
        let c = RunConfig::parse(src).unwrap();
        let again = RunConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        let minimal = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(minimal, RunConfig::parse(&minimal.to_toml()).unwrap());
    }
}
