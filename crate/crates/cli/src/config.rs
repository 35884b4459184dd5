//! Scenario files: a strict TOML schema, validated before anything runs.

use std::path::PathBuf;

use driftflow_core::flow::FlowConfig;
use driftflow_core::geometry::{
    product_family, round_circle_family_with_weight, scaled_gaussian_family, AnalyticFamily,
    ContinuumFactor, ContinuumState, Resolution, TrigPoly,
};
use driftflow_core::splitting::SplittingTolerances;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const MAX_CIRCLE_NODES: usize = 1024;
pub const MAX_HERMITE_ORDER: usize = 64;
pub const MAX_TRIG_DEGREE: usize = 32;
pub const MAX_PRODUCT_FACTORS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Reference time of the initial state.
    #[serde(default)]
    pub t0: f64,
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub resolution: Resolution,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub verify: VerifySpec,
    /// Overrides for the splitting tolerances; the defaults depend on
    /// whether the run starts from a closed-form family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splitting: Option<SplittingTolerances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySpec {
    ScaledGaussian {
        u0: f64,
        #[serde(default = "one")]
        n: usize,
    },
    RoundCircle {
        a0: f64,
        #[serde(default)]
        f0: f64,
    },
    /// A general periodic state `a(θ) dθ²`, `f(θ)` given by Fourier
    /// coefficients.
    Circle {
        metric: TrigSpec,
        #[serde(default)]
        weight: TrigSpec,
    },
    Product {
        factors: Vec<GeometrySpec>,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigSpec {
    #[serde(default)]
    pub cos: Vec<f64>,
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl TrigSpec {
    fn poly(&self) -> TrigPoly {
        TrigPoly::new(self.cos.clone(), self.sin.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    pub bounds: bool,
    pub functionals: bool,
    pub commutator: bool,
    pub bochner: bool,
    pub splitting: bool,
    pub bound_slack: f64,
    pub identity_tolerance: f64,
    pub commutator_tolerance: f64,
    pub bochner_tolerance: f64,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            bounds: true,
            functionals: true,
            commutator: true,
            bochner: true,
            splitting: false,
            bound_slack: 1e-6,
            identity_tolerance: 1e-4,
            commutator_tolerance: 1e-5,
            bochner_tolerance: 1e-8,
        }
    }
}

/// The initial data a scenario resolves to.
#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Family(AnalyticFamily),
    State(ContinuumState),
}

impl Scenario {
    pub fn initial_state(&self) -> CliResult<ContinuumState> {
        match self {
            Scenario::Family(f) => f.evaluate(f.t0).map_err(CliError::from_setup),
            Scenario::State(s) => Ok(s.clone()),
        }
    }
}

/// Parses and validates a scenario file.
pub fn parse_config(text: &str) -> CliResult<ScenarioConfig> {
    let config: ScenarioConfig =
        toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}

fn positive(what: &str, v: f64) -> CliResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} must be positive and finite, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.name.is_empty()
            || self.name.len() > 128
            || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
            || self.name.starts_with('.')
        {
            return Err(CliError::Config(format!(
                "name {:?} must be 1-128 characters from [A-Za-z0-9._-] and not start with '.'",
                self.name
            )));
        }
        if !self.t0.is_finite() {
            return Err(CliError::Config("t0 must be finite".into()));
        }
        let r = self.resolution;
        if !(8..=MAX_CIRCLE_NODES).contains(&r.circle_nodes) {
            return Err(CliError::Config(format!(
                "circle_nodes must lie in [8, {MAX_CIRCLE_NODES}], got {}",
                r.circle_nodes
            )));
        }
        if !(4..=MAX_HERMITE_ORDER).contains(&r.hermite_order) {
            return Err(CliError::Config(format!(
                "hermite_order must lie in [4, {MAX_HERMITE_ORDER}], got {}",
                r.hermite_order
            )));
        }
        self.flow.validate().map_err(CliError::from_setup)?;
        if self.flow.horizon > 50.0 {
            return Err(CliError::Config("horizon must not exceed 50".into()));
        }
        if self.flow.horizon / self.flow.dt > 1e6 {
            return Err(CliError::Config("more than 10^6 steps requested".into()));
        }
        if self.flow.mode_cutoff > r.circle_nodes / 2 {
            return Err(CliError::Config(format!(
                "mode_cutoff {} exceeds the {} modes resolved by {} nodes",
                self.flow.mode_cutoff,
                r.circle_nodes / 2,
                r.circle_nodes
            )));
        }
        let v = &self.verify;
        for (what, x) in [
            ("bound_slack", v.bound_slack),
            ("identity_tolerance", v.identity_tolerance),
            ("commutator_tolerance", v.commutator_tolerance),
            ("bochner_tolerance", v.bochner_tolerance),
        ] {
            if !(x >= 0.0) || !x.is_finite() {
                return Err(CliError::Config(format!("{what} must be finite and nonnegative")));
            }
        }
        if let Some(t) = &self.splitting {
            for x in [t.eigenvalue, t.hessian_energy, t.gradient, t.decomposition, t.equations, t.stationarity] {
                if !(x >= 0.0) || !x.is_finite() {
                    return Err(CliError::Config("splitting tolerances must be finite and nonnegative".into()));
                }
            }
        }
        let scenario = self.scenario()?;
        let state = scenario.initial_state()?;
        let dim = resolved_dimension(&state, r);
        if dim > 1 << 16 {
            return Err(CliError::Config(format!("discrete dimension {dim} is too large")));
        }
        if let Scenario::Family(f) = &scenario {
            if let Some(ext) = f.extinction_time() {
                if f.t0 + self.flow.horizon >= ext {
                    return Err(CliError::Config(format!(
                        "horizon reaches the extinction time {ext} of the family"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Resolves the geometry to a closed-form family when possible.
    pub fn scenario(&self) -> CliResult<Scenario> {
        let depth_ok = depth(&self.geometry) <= 2;
        if !depth_ok {
            return Err(CliError::Config("products may not be nested".into()));
        }
        match family(&self.geometry, self.t0)? {
            Some(f) => Ok(Scenario::Family(f)),
            None => {
                let mut factors = Vec::new();
                state_factors(&self.geometry, self.t0, &mut factors)?;
                ContinuumState::new(factors, 0.0, self.t0)
                    .map(Scenario::State)
                    .map_err(CliError::from_setup)
            }
        }
    }
}

fn depth(g: &GeometrySpec) -> usize {
    match g {
        GeometrySpec::Product { factors } => 1 + factors.iter().map(depth).max().unwrap_or(0),
        _ => 1,
    }
}

fn resolved_dimension(state: &ContinuumState, r: Resolution) -> usize {
    state
        .factors
        .iter()
        .map(|f| match f {
            ContinuumFactor::Circle { .. } => r.circle_nodes,
            ContinuumFactor::Gaussian { .. } => r.hermite_order,
        })
        .fold(1usize, |acc, n| acc.saturating_mul(n))
}

fn family(g: &GeometrySpec, t0: f64) -> CliResult<Option<AnalyticFamily>> {
    let built = match g {
        GeometrySpec::ScaledGaussian { u0, n } => {
            if *n > MAX_PRODUCT_FACTORS {
                return Err(CliError::Config(format!("n must be at most {MAX_PRODUCT_FACTORS}")));
            }
            scaled_gaussian_family(*u0, *n, t0)
        }
        GeometrySpec::RoundCircle { a0, f0 } => {
            if !f0.is_finite() {
                return Err(CliError::Config("f0 must be finite".into()));
            }
            round_circle_family_with_weight(*a0, *f0, t0)
        }
        GeometrySpec::Circle { .. } => return Ok(None),
        GeometrySpec::Product { factors } => {
            check_product(factors)?;
            let mut fams = Vec::with_capacity(factors.len());
            for f in factors {
                match family(f, t0)? {
                    Some(f) => fams.push(f),
                    None => return Ok(None),
                }
            }
            product_family(fams)
        }
    };
    built.map(Some).map_err(CliError::from_setup)
}

fn check_product(factors: &[GeometrySpec]) -> CliResult<()> {
    if factors.is_empty() || factors.len() > MAX_PRODUCT_FACTORS {
        return Err(CliError::Config(format!(
            "a product needs 1 to {MAX_PRODUCT_FACTORS} factors, got {}",
            factors.len()
        )));
    }
    Ok(())
}

fn state_factors(g: &GeometrySpec, t0: f64, out: &mut Vec<ContinuumFactor>) -> CliResult<()> {
    match g {
        GeometrySpec::Circle { metric, weight } => {
            for t in [metric, weight] {
                if t.cos.len() > MAX_TRIG_DEGREE + 1 || t.sin.len() > MAX_TRIG_DEGREE + 1 {
                    return Err(CliError::Config(format!(
                        "trigonometric degree above {MAX_TRIG_DEGREE}"
                    )));
                }
                if t.cos.iter().chain(&t.sin).any(|c| !c.is_finite()) {
                    return Err(CliError::Config("non-finite Fourier coefficient".into()));
                }
            }
            if metric.cos.is_empty() {
                return Err(CliError::Config("circle metric needs a constant term".into()));
            }
            positive("metric mean", metric.cos[0])?;
            out.push(ContinuumFactor::Circle {
                metric: metric.poly(),
                weight: weight.poly(),
            });
        }
        GeometrySpec::Product { factors } => {
            check_product(factors)?;
            for f in factors {
                state_factors(f, t0, out)?;
            }
        }
        other => {
            let f = family(other, t0)?.expect("closed-form factor");
            let st = f.evaluate(t0).map_err(CliError::from_setup)?;
            out.extend(st.factors);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse_config(
            "name = \"s\"\n[geometry]\nkind = \"scaled_gaussian\"\nu0 = 2.0\n",
        )
        .unwrap();
        assert_eq!(c.resolution, Resolution::default());
        assert_eq!(c.flow, FlowConfig::default());
        assert!(matches!(c.scenario().unwrap(), Scenario::Family(_)));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let bad = [
            "name = \"s\"\nbogus = 1\n[geometry]\nkind = \"round_circle\"\na0 = 1.0\n",
            "name = \"s\"\n[geometry]\nkind = \"round_circle\"\na0 = 1.0\nextra = 2\n",
            "name = \"s\"\n[geometry]\nkind = \"round_circle\"\na0 = -1.0\n",
            "name = \"s\"\n[geometry]\nkind = \"torus\"\n",
            "name = \"../x\"\n[geometry]\nkind = \"round_circle\"\na0 = 1.0\n",
            "name = \"s\"\n[geometry]\nkind = \"round_circle\"\na0 = 1.0\n[flow]\ndt = 0.0\n",
            "name = \"s\"\n[geometry]\nkind = \"scaled_gaussian\"\nu0 = 0.5\n[flow]\nhorizon = 1.0\n",
            "name = \"s\"\n[geometry]\nkind = \"round_circle\"\na0 = 1.0\n[resolution]\ncircle_nodes = 4\n",
        ];
        for text in bad {
            assert!(matches!(parse_config(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn general_circle_inside_product_is_a_state() {
        let c = parse_config(
            r#"
name = "mixed"
[geometry]
kind = "product"
[[geometry.factors]]
kind = "scaled_gaussian"
u0 = 1.0
[[geometry.factors]]
kind = "circle"
metric = { cos = [1.0, 0.2] }
weight = { sin = [0.0, 0.1] }
"#,
        )
        .unwrap();
        match c.scenario().unwrap() {
            Scenario::State(s) => assert_eq!(s.factors.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let c = parse_config(
            "name = \"s\"\nseed = 7\n[geometry]\nkind = \"round_circle\"\na0 = 4.0\n[verify]\nsplitting = true\n",
        )
        .unwrap();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(parse_config(&text).unwrap(), c);
    }
}
