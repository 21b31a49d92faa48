//! Problem files: one JSON document with `map`, `potential`, optional
//! `numerics` and `anchors`. Any object may carry a free-text `_note`.

use std::path::Path;
use std::sync::Arc;

use ergopt_core::dynamics::{ExpandingMap, Orientation};
use ergopt_core::ergopt::{max_ergodic_average, ChainSearch, MaxAverage, SubactionOptions};
use ergopt_core::kernel::{check_schedule, KernelContext};
use ergopt_core::piecewise::{KernelRoute, ScanOptions, StudyOptions};
use ergopt_core::symbolic::EventuallyPeriodicPoint;
use ergopt_core::transfer::{EigenOptions, PotentialSpec, Transfer, MIN_NODES};
use ergopt_core::{Error, Result};
use serde::{Deserialize, Serialize};

/// Samples used to check `g > 0`.
pub const VALIDATION_SAMPLES: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(rename = "_note", default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub map: MapConfig,
    pub potential: PotentialConfig,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub anchors: Anchors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    #[serde(rename = "_note", default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub inverse_branches: Vec<String>,
    pub lambda: f64,
    #[serde(default = "preserving")]
    pub orientation: Orientation,
}

fn preserving() -> Orientation {
    Orientation::Preserving
}

/// Exactly one of `g` and `A = log g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialConfig {
    #[serde(rename = "_note", default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<String>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    #[serde(rename = "_note", skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub grid_n: usize,
    pub eigen_tol: f64,
    pub eigen_max_iter: usize,
    pub depth_cap: usize,
    pub series_depth: usize,
    pub series_tol: f64,
    pub kernel_tol: f64,
    pub beta_schedule: Vec<f64>,
    pub max_period: usize,
    pub table_depth: usize,
    pub table_tol: f64,
    pub table_max_iter: usize,
    pub n_bar: usize,
    pub tie_tol: f64,
    pub refine_tol: f64,
    pub scan_n: usize,
    pub twist_samples: usize,
    pub subaction_tol: f64,
    pub subaction_max_iter: usize,
    pub r_star_delta: f64,
    pub cross_tol: f64,
    pub kernel_route: KernelRoute,
    pub seed: u64,
    pub mane_eps: f64,
    pub mane_max_n: usize,
    pub mane_budget: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        let s = StudyOptions::default();
        let e = EigenOptions::default();
        let m = ChainSearch::default();
        Self {
            note: None,
            grid_n: 128,
            eigen_tol: e.tol,
            eigen_max_iter: e.max_iter,
            depth_cap: ergopt_core::kernel::DEFAULT_DEPTH_CAP,
            series_depth: s.series_depth,
            series_tol: ergopt_core::kernel::DEFAULT_SERIES_TOL,
            kernel_tol: s.kernel_tol,
            beta_schedule: s.schedule,
            max_period: s.max_period,
            table_depth: s.table_depth,
            table_tol: s.table_tol,
            table_max_iter: s.table_max_iter,
            n_bar: s.n_bar,
            tie_tol: s.scan.tie_tol,
            refine_tol: s.scan.refine_tol,
            scan_n: s.scan.grid_n,
            twist_samples: s.twist_samples,
            subaction_tol: s.subaction.tol,
            subaction_max_iter: s.subaction.max_iter,
            r_star_delta: s.r_star_delta,
            cross_tol: s.cross_tol,
            kernel_route: s.route,
            seed: s.scan.seed,
            mane_eps: m.eps,
            mane_max_n: m.max_n,
            mane_budget: m.budget,
        }
    }
}

/// Missing anchors default to the first point of the maximizing orbit and
/// to the periodic point of its itinerary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchors {
    #[serde(rename = "_note", default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_bar: Option<String>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| bad(format!("invalid problem file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

impl Numerics {
    fn check(&self) -> Result<()> {
        if self.grid_n < MIN_NODES {
            return Err(bad(format!("grid_n must be at least {MIN_NODES}")));
        }
        check_schedule(&self.beta_schedule)?;
        let positive = [
            ("eigen_tol", self.eigen_tol),
            ("series_tol", self.series_tol),
            ("kernel_tol", self.kernel_tol),
            ("table_tol", self.table_tol),
            ("tie_tol", self.tie_tol),
            ("refine_tol", self.refine_tol),
            ("subaction_tol", self.subaction_tol),
            ("cross_tol", self.cross_tol),
            ("mane_eps", self.mane_eps),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| !(*v > 0.0)) {
            return Err(bad(format!("{name} must be positive")));
        }
        let counts = [
            ("max_period", self.max_period),
            ("table_depth", self.table_depth),
            ("series_depth", self.series_depth),
            ("scan_n", self.scan_n),
            ("twist_samples", self.twist_samples),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(bad(format!("{name} must be at least 1")));
        }
        if self.table_depth > 20 {
            return Err(bad("table_depth above 20 is not supported"));
        }
        Ok(())
    }
}

/// A validated problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub config: ProblemConfig,
    pub map: Arc<ExpandingMap>,
    pub potential: Arc<PotentialSpec>,
}

impl Problem {
    pub fn new(config: ProblemConfig) -> Result<Self> {
        let map = ExpandingMap::from_exprs(&config.map.inverse_branches, config.map.lambda, config.map.orientation)?;
        let potential = match (&config.potential.g, &config.potential.a) {
            (Some(g), None) => PotentialSpec::parse_g(g)?,
            (None, Some(a)) => PotentialSpec::parse_a(a)?,
            _ => return Err(bad("potential needs exactly one of \"g\" and \"A\"")),
        };
        potential.validate(VALIDATION_SAMPLES)?;
        config.numerics.check()?;
        if let Some(x) = config.anchors.x_bar {
            if !(0.0..=1.0).contains(&x) {
                return Err(bad(format!("x_bar = {x} outside [0,1]")));
            }
        }
        if let Some(w) = &config.anchors.omega_bar {
            EventuallyPeriodicPoint::parse(w, map.degree())?;
        }
        Ok(Self {
            config,
            map: Arc::new(map),
            potential: Arc::new(potential),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(ProblemConfig::load(path)?)
    }

    pub fn numerics(&self) -> &Numerics {
        &self.config.numerics
    }

    pub fn transfer(&self) -> Result<Transfer> {
        Transfer::with_nodes(self.map.clone(), self.potential.clone(), self.numerics().grid_n)
    }

    pub fn eigen_options(&self) -> EigenOptions {
        EigenOptions {
            tol: self.numerics().eigen_tol,
            max_iter: self.numerics().eigen_max_iter,
        }
    }

    pub fn max_average(&self) -> Result<MaxAverage> {
        max_ergodic_average(&self.map, &self.potential, self.numerics().max_period)
    }

    /// `(x̄, ω̄)`, filling defaults from the maximizing orbit.
    pub fn anchors(&self, max: &MaxAverage) -> Result<(f64, EventuallyPeriodicPoint)> {
        let a = &self.config.anchors;
        let x_bar = a.x_bar.unwrap_or(max.orbit.points[0]);
        let omega_bar = match &a.omega_bar {
            Some(w) => EventuallyPeriodicPoint::parse(w, self.map.degree())?,
            None => EventuallyPeriodicPoint::periodic(&max.orbit.itinerary)?,
        };
        Ok((x_bar, omega_bar))
    }

    pub fn kernel_context(&self, max: &MaxAverage) -> Result<KernelContext> {
        let (x_bar, omega_bar) = self.anchors(max)?;
        let n = self.numerics();
        Ok(KernelContext::new(self.transfer()?, x_bar, omega_bar)?
            .with_eigen_options(self.eigen_options())
            .with_depth_cap(n.depth_cap)
            .with_series_tol(n.series_tol))
    }

    pub fn subaction_options(&self) -> SubactionOptions {
        SubactionOptions {
            tol: self.numerics().subaction_tol,
            max_iter: self.numerics().subaction_max_iter,
        }
    }

    pub fn chain_search(&self) -> ChainSearch {
        let n = self.numerics();
        ChainSearch {
            eps: n.mane_eps,
            max_n: n.mane_max_n,
            k_min: 0,
            budget: n.mane_budget,
        }
    }

    pub fn study_options(&self) -> StudyOptions {
        let n = self.numerics();
        StudyOptions {
            schedule: n.beta_schedule.clone(),
            kernel_tol: n.kernel_tol,
            series_depth: n.series_depth,
            max_period: n.max_period,
            table_depth: n.table_depth,
            table_tol: n.table_tol,
            table_max_iter: n.table_max_iter,
            n_bar: n.n_bar,
            r_star_delta: n.r_star_delta,
            twist_samples: n.twist_samples,
            scan: ScanOptions {
                grid_n: n.scan_n,
                refine_tol: n.refine_tol,
                tie_tol: n.tie_tol,
                seed: n.seed,
            },
            subaction: self.subaction_options(),
            cross_tol: n.cross_tol,
            route: n.kernel_route,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOUBLING: &str = r#"{
        "_note": "doubling map",
        "map": {"inverse_branches": ["x/2", "(x+1)/2"], "lambda": 0.5},
        "potential": {"A": "x"},
        "numerics": {"_note": "defaults otherwise", "grid_n": 64}
    }"#;

    #[test]
    fn parses_with_notes_and_defaults() {
        let p = Problem::new(ProblemConfig::from_json(DOUBLING).unwrap()).unwrap();
        assert_eq!(p.numerics().grid_n, 64);
        assert_eq!(p.numerics().beta_schedule, vec![8.0, 16.0, 32.0, 64.0]);
        assert_eq!(p.map.orientation(), Orientation::Preserving);
        let max = p.max_average().unwrap();
        let (x, w) = p.anchors(&max).unwrap();
        assert_eq!(x, 1.0);
        assert_eq!(w.to_string(), "|1");
    }

    #[test]
    fn rejects_bad_potentials() {
        let both = DOUBLING.replace(r#"{"A": "x"}"#, r#"{"A": "x", "g": "2"}"#);
        assert!(Problem::new(ProblemConfig::from_json(&both).unwrap()).is_err());
        let neither = DOUBLING.replace(r#"{"A": "x"}"#, "{}");
        assert!(Problem::new(ProblemConfig::from_json(&neither).unwrap()).is_err());
        let negative = DOUBLING.replace(r#"{"A": "x"}"#, r#"{"g": "x - 0.5"}"#);
        assert!(matches!(
            Problem::new(ProblemConfig::from_json(&negative).unwrap()),
            Err(Error::NonPositivePotential { .. })
        ));
    }

    #[test]
    fn rejects_unknown_keys() {
        let extra = DOUBLING.replace("\"lambda\"", "\"lamda\": 1, \"lambda\"");
        assert!(ProblemConfig::from_json(&extra).is_err());
    }
}
