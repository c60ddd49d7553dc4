//! Run configuration shared by the library suites and the CLI. Every table
//! is optional; missing keys take the defaults below.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::EvolutionConfig;
use crate::hanzawa::GateParams;
use crate::operators::FluidParams;
use crate::surface::{ReferenceSurface, SurfaceKind};
use crate::verify::Suite;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeName {
    Sphere,
    Ellipsoid,
    Torus,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub nu: usize,
    pub nv: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { nu: 16, nv: 32 }
    }
}

/// `{ kind, params: {R | a,b,c | R,r}, grid: {nu, nv}, rho0, center }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub kind: ShapeName,
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub rho0: Option<f64>,
    #[serde(default)]
    pub center: [f64; 3],
}

impl SurfaceSpec {
    pub fn shape(&self) -> Result<SurfaceKind> {
        let keys: &[&str] = match self.kind {
            ShapeName::Sphere => &["R"],
            ShapeName::Ellipsoid => &["a", "b", "c"],
            ShapeName::Torus => &["R", "r"],
        };
        if let Some(k) = self.params.keys().find(|k| !keys.contains(&k.as_str())) {
            return Err(Error::Config(format!("surface params: unexpected key {k:?} for {:?}, expected {keys:?}", self.kind)));
        }
        let get = |k: &str| {
            self.params.get(k).copied().ok_or_else(|| Error::Config(format!("surface params: missing {k:?} for {:?}", self.kind)))
        };
        Ok(match self.kind {
            ShapeName::Sphere => SurfaceKind::Sphere { r: get("R")? },
            ShapeName::Ellipsoid => SurfaceKind::Ellipsoid { a: get("a")?, b: get("b")?, c: get("c")? },
            ShapeName::Torus => SurfaceKind::Torus { major: get("R")?, minor: get("r")? },
        })
    }

    pub fn build(&self) -> Result<Arc<ReferenceSurface>> {
        Ok(Arc::new(ReferenceSurface::new(self.shape()?, self.center, self.rho0, self.grid.nu, self.grid.nv)?))
    }

    pub fn validate(&self) -> Result<()> {
        self.shape()?;
        if self.grid.nu < 8 || self.grid.nv < 8 {
            return Err(Error::Config("surface grid needs at least 8 nodes per direction".into()));
        }
        if self.rho0.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::Config("surface rho0 must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub suites: Vec<Suite>,
    /// Seeds of the Fréchet catalogue; the other randomized suites draw
    /// from the first one.
    pub seeds: Vec<u64>,
    pub identity_draws: usize,
    pub linearization_draws: usize,
    pub norm_pairs: usize,
    pub probe_trials: usize,
    /// Surface grid `[nu, nv]` for the suites that do not refine.
    pub grid: [usize; 2],
    /// Per-check tolerance overrides, keyed by check name.
    pub tolerances: BTreeMap<String, f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            suites: Suite::ALL.to_vec(),
            seeds: (0..10).collect(),
            identity_draws: 50,
            linearization_draws: 20,
            norm_pairs: 100,
            probe_trials: 200,
            grid: [16, 32],
            tolerances: BTreeMap::new(),
        }
    }
}

impl VerifyConfig {
    pub fn tol(&self, name: &str, default: f64) -> f64 {
        self.tolerances.get(name).copied().unwrap_or(default)
    }

    pub fn first_seed(&self) -> u64 {
        self.seeds.first().copied().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VelocityName {
    /// Rotation about the box centre plus two smooth modes.
    Probe,
    Zero,
    /// `u(x) = x − c`, radial about the box centre.
    Expansion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldName {
    Zero,
    /// Product of sines vanishing on the box boundary.
    Bump,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeightName {
    Zero,
    /// `sin(8(x − ½))` restricted to the surface.
    Wave,
    /// Degree-2 harmonic about the surface centre.
    Harmonic,
}

/// Initial data for `evolve`, by builtin name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialData {
    pub velocity: VelocityName,
    pub b0: FieldName,
    pub b_amp: f64,
    pub h0: HeightName,
    pub h_amp: f64,
    /// Height CSV `(u, v, h, dh_dt)`; replaces `h0` when set.
    pub h_csv: Option<String>,
}

impl Default for InitialData {
    fn default() -> Self {
        InitialData {
            velocity: VelocityName::Probe,
            b0: FieldName::Bump,
            b_amp: 1e-2,
            h0: HeightName::Wave,
            h_amp: 5e-3,
            h_csv: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "reports".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub surface: Option<SurfaceSpec>,
    #[serde(rename = "hanzawa")]
    pub gate: GateParams,
    pub fluid: FluidParams,
    pub verify: VerifyConfig,
    pub evolution: EvolutionConfig,
    pub initial: InitialData,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Checks that need no computation: positivity, non-empty seed list,
    /// grid sizes, referenced files.
    pub fn validate(&self) -> Result<()> {
        self.fluid.validate()?;
        self.evolution.validate()?;
        if !(self.gate.delta0 > 0.0 && self.gate.newton_tol > 0.0) {
            return Err(Error::Config("hanzawa.delta0 and hanzawa.newton_tol must be positive".into()));
        }
        if self.verify.seeds.is_empty() {
            return Err(Error::Config("verify.seeds must not be empty".into()));
        }
        for (k, v) in &self.verify.tolerances {
            if !(*v > 0.0) {
                return Err(Error::Config(format!("tolerance {k} = {v} must be positive")));
            }
        }
        let [nu, nv] = self.verify.grid;
        if nu < 8 || nv < 8 || nv % 2 != 0 {
            return Err(Error::Config(format!("verify.grid = [{nu}, {nv}] needs >= 8 nodes and an even longitude count")));
        }
        if let Some(s) = &self.surface {
            s.validate()?;
        }
        if let Some(p) = &self.initial.h_csv {
            if !Path::new(p).is_file() {
                return Err(Error::Config(format!("initial.h_csv: no such file {p}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surface_params_checked() {
        let mut s = SurfaceSpec {
            kind: ShapeName::Torus,
            params: [("R".to_string(), 2.0), ("r".to_string(), 0.5)].into(),
            grid: GridSpec::default(),
            rho0: None,
            center: [0.0; 3],
        };
        assert_eq!(s.shape().unwrap(), SurfaceKind::Torus { major: 2.0, minor: 0.5 });
        s.params.remove("r");
        assert!(s.shape().is_err());
        s.params.insert("q".into(), 1.0);
        assert!(s.shape().is_err());
    }

    #[test]
    fn missing_csv_rejected() {
        let mut c = RunConfig::default();
        assert!(c.validate().is_ok());
        c.initial.h_csv = Some("/nonexistent/h.csv".into());
        assert!(c.validate().is_err());
        c.initial.h_csv = None;
        c.verify.seeds.clear();
        assert!(c.validate().is_err());
    }
}
