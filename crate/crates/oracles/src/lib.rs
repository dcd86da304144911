//! Brute-force reference values for the engine's worked examples.
//!
//! [`closed_form`] holds formulas that share no code with the engine. The
//! report functions pit them, or Monte Carlo truths, against engine output.

use std::fmt;

pub mod closed_form;
mod derived;
mod trivial;

pub use derived::{fast_oracles, simulation_oracles};
pub use trivial::{exact_invariants, trivial_examples};

/// How the engine value must relate to the oracle value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Relation {
    /// `|engine − oracle| ≤ tolerance`
    Within,
    /// `engine ≥ oracle − tolerance`
    AtLeast,
    /// `engine < oracle`
    Below,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub id: String,
    pub oracle: f64,
    pub engine: f64,
    pub tolerance: f64,
    pub relation: Relation,
    pub pass: bool,
}

impl OracleReport {
    pub fn new(id: impl Into<String>, oracle: f64, engine: f64, tolerance: f64, relation: Relation) -> Self {
        let pass = match relation {
            Relation::Within => (engine - oracle).abs() <= tolerance,
            Relation::AtLeast => engine >= oracle - tolerance,
            Relation::Below => engine < oracle,
        };
        OracleReport {
            id: id.into(),
            oracle,
            engine,
            tolerance,
            relation,
            pass: pass && engine.is_finite() && oracle.is_finite(),
        }
    }

    pub fn within(id: impl Into<String>, oracle: f64, engine: f64, tolerance: f64) -> Self {
        Self::new(id, oracle, engine, tolerance, Relation::Within)
    }

    /// An exact yes/no check, recorded as 1 against an expected 1.
    pub fn holds(id: impl Into<String>, ok: bool) -> Self {
        Self::new(id, 1.0, if ok { 1.0 } else { 0.0 }, 0.0, Relation::Within)
    }

    /// Also requires `ok`.
    pub fn and(mut self, ok: bool) -> Self {
        self.pass &= ok;
        self
    }

    /// A check that hit an engine error before producing a value.
    pub fn failed(id: impl Into<String>, err: impl fmt::Display) -> Self {
        let mut r = Self::new(format!("{} ({err})", id.into()), f64::NAN, f64::NAN, 0.0, Relation::Within);
        r.pass = false;
        r
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.pass { "pass" } else { "FAIL" };
        let rel = match self.relation {
            Relation::Within => format!("within {:.3e} of", self.tolerance),
            Relation::AtLeast => format!("at least (tol {:.3e})", self.tolerance),
            Relation::Below => "below".to_string(),
        };
        write!(f, "{status}  {}: engine {:.6} {rel} oracle {:.6}", self.id, self.engine, self.oracle)
    }
}

/// Every closed-form and simulation example. Slow: the simulation oracles
/// take minutes.
pub fn run_all_oracles() -> Vec<OracleReport> {
    let mut all = fast_oracles();
    all.extend(simulation_oracles());
    all
}

/// Collapses an engine `Result` into a report.
pub(crate) fn report<E: fmt::Display>(id: &str, f: impl FnOnce() -> Result<OracleReport, E>) -> OracleReport {
    match f() {
        Ok(mut r) => {
            r.id = id.to_string();
            r
        }
        Err(e) => OracleReport::failed(id, e),
    }
}
