use serde::{Deserialize, Serialize};

use super::CliError;
use crate::assembly::{AcousticMaterial, EmMaterial};
use crate::c64;
use crate::spaces::{levels_for_macroelement, BoxGeometry, Partition};
use crate::sparse::Discretization;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    /// Layered conductive medium; gyroscopic quadratic pencil.
    Em,
    /// Curl-curl generalized problem `-K u = λ M u`.
    EmNonconductive,
    Acoustic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShiftValue {
    Real(f64),
    Complex([f64; 2]),
}

impl ShiftValue {
    pub fn value(self) -> c64 {
        match self {
            ShiftValue::Real(r) => c64::new(r, 0.0),
            ShiftValue::Complex([r, i]) => c64::new(r, i),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialConfig {
    pub rho: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub eps: f64,
    /// `none` or `three-layer`; only read for `problem = "em"`.
    pub conductivity: String,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        let a = AcousticMaterial::absorbing_lid();
        Self {
            rho: a.rho,
            c: a.c,
            alpha: a.alpha,
            beta: a.beta,
            mu: 1.0,
            eps: 1.0,
            conductivity: "three-layer".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub ne: Vec<usize>,
    pub p: Vec<usize>,
    pub discretization: Vec<Discretization>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// `(i, j)` Maxwell modes.
    pub modes: Vec<[u32; 2]>,
    /// Acoustic modes as `(j, branch)`.
    pub acoustic: Vec<[u32; 2]>,
    /// Relative distance beyond which the nearest eigenvalue counts as a miss.
    pub miss_tolerance: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            modes: vec![[23, 23]],
            acoustic: vec![[10, 2]],
            miss_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub p: usize,
    pub ne: usize,
    pub discretization: Discretization,
    /// rIGA partition levels; omitted means 16×16-element macroelements.
    pub levels: Option<u32>,
    pub domain: BoxGeometry,
    pub material: MaterialConfig,
    /// Defaults per problem when omitted.
    pub shift: Option<ShiftValue>,
    pub nev: usize,
    pub m: Option<usize>,
    pub keep: Option<usize>,
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
    pub scale: bool,
    pub check_krylov: bool,
    pub out: Option<String>,
    pub sweep: SweepConfig,
    pub verify: VerifyConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: Problem::Acoustic,
            p: 3,
            ne: 32,
            discretization: Discretization::Iga,
            levels: None,
            domain: BoxGeometry::unit(),
            material: MaterialConfig::default(),
            shift: None,
            nev: 20,
            m: None,
            keep: None,
            tol: 1e-8,
            max_restarts: 100,
            seed: 0,
            scale: true,
            check_krylov: true,
            out: None,
            sweep: SweepConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

pub const MACROELEMENT: usize = 16;

impl ExperimentConfig {
    /// Parses TOML text, then applies `key=value` overrides (dotted keys reach into tables).
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config {
            field: None,
            msg: e.to_string(),
        })?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config {
            field: None,
            msg: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn shift(&self) -> c64 {
        match self.shift {
            Some(s) => s.value(),
            None => match self.problem {
                Problem::Em => c64::new(60.0, 0.0),
                Problem::EmNonconductive => c64::new(100.0, 0.0),
                Problem::Acoustic => c64::new(-300.0, 0.0),
            },
        }
    }

    /// Partition levels actually used (0 for IGA).
    pub fn levels_for(&self, ne: usize, disc: Discretization) -> Result<u32, CliError> {
        match disc {
            Discretization::Iga => Ok(0),
            Discretization::Riga => match self.levels {
                Some(l) => Partition::new(ne, l).map(|_| l).map_err(|e| bad("levels", e.to_string())),
                None => levels_for_macroelement(ne, MACROELEMENT)
                    .filter(|&l| l > 0)
                    .ok_or_else(|| bad("ne", format!("ne = {ne} is not a power-of-two multiple of {MACROELEMENT}; set levels"))),
            },
        }
    }

    pub fn em_material(&self) -> Result<EmMaterial, CliError> {
        let mut m = match (self.problem, self.material.conductivity.as_str()) {
            (Problem::EmNonconductive, _) | (_, "none") => EmMaterial::nonconductive(),
            (_, "three-layer") => EmMaterial::three_layer(self.domain.y),
            (_, other) => {
                return Err(bad(
                    "material.conductivity",
                    format!("unknown profile {other:?} (expected none or three-layer)"),
                ))
            }
        };
        m.mu = self.material.mu;
        m.eps = self.material.eps;
        Ok(m)
    }

    pub fn acoustic_material(&self) -> AcousticMaterial {
        AcousticMaterial {
            rho: self.material.rho,
            c: self.material.c,
            alpha: self.material.alpha,
            beta: self.material.beta,
            ..AcousticMaterial::absorbing_lid()
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.p < 2 {
            return Err(bad("p", format!("degree must be at least 2, got {}", self.p)));
        }
        if self.ne < 2 {
            return Err(bad("ne", format!("need at least 2 elements, got {}", self.ne)));
        }
        if self.nev == 0 {
            return Err(bad("nev", "must be positive".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(bad("tol", format!("must lie in (0, 1), got {}", self.tol)));
        }
        if let Some(m) = self.m {
            if m <= self.nev {
                return Err(bad("m", format!("subspace size {m} must exceed nev = {}", self.nev)));
            }
        }
        self.domain
            .check()
            .map_err(|e| bad("domain", e.to_string()))?;
        self.levels_for(self.ne, self.discretization)?;
        if self.problem == Problem::Em {
            self.em_material()?;
        }
        for (name, v) in [
            ("material.rho", self.material.rho),
            ("material.c", self.material.c),
            ("material.alpha", self.material.alpha),
            ("material.beta", self.material.beta),
            ("material.mu", self.material.mu),
            ("material.eps", self.material.eps),
        ] {
            if !(v > 0.0) {
                return Err(bad(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Copy with a different mesh cell; re-validated.
    pub fn cell(&self, ne: usize, p: usize, disc: Discretization) -> Result<Self, CliError> {
        let mut c = self.clone();
        c.ne = ne;
        c.p = p;
        c.discretization = disc;
        c.validate()?;
        Ok(c)
    }
}

fn bad(field: &str, msg: String) -> CliError {
    CliError::Config {
        field: Some(field.to_string()),
        msg,
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| bad(spec, "override must look like key=value".into()))?;
    let key = key.trim();
    let raw = raw.trim();
    // bare words such as `acoustic` are taken as strings
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| bad(key, "empty key".into()))?;
    let mut t = table;
    for p in parts {
        t = t
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| bad(key, format!("{p} is not a table")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}
