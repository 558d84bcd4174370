//! Verification records shared by every verifier, with convergence-order
//! estimation and JSON emission.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::ambient::SpaceForm;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Pass thresholds for a verifier.
///
/// `floor` is the residual level below which a value is treated as
/// roundoff: successive residuals both under it carry no order information,
/// so the order requirement is waived for such pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Criterion {
    pub tolerance: f64,
    pub min_order: Option<f64>,
    pub floor: f64,
}

impl Criterion {
    pub fn new(tolerance: f64, min_order: Option<f64>) -> Self {
        Self { tolerance, min_order, floor: tolerance * 1e-2 }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub identity: String,
    /// Surface description, set by the driver.
    pub scenario: String,
    pub model: String,
    pub n: usize,
    pub r: Option<usize>,
    pub theta: Option<f64>,
    pub resolutions: Vec<usize>,
    pub residuals: Vec<f64>,
    /// Per-level residuals of the sub-identities combined into `residuals`.
    pub components: BTreeMap<String, Vec<f64>>,
    /// Auxiliary scalars (eigenvalues, gaps, normalizers) per level.
    pub values: BTreeMap<String, Vec<f64>>,
    /// Measured roundoff level of the residual per level (0 when not
    /// measured).
    pub roundoff: Vec<f64>,
    pub order: Option<f64>,
    pub saturated: bool,
    pub criterion: Criterion,
    pub normalizer: String,
    pub notes: Vec<String>,
    pub verdict: Verdict,
    /// Failed an extra condition (see [`VerificationReport::gate`]).
    #[serde(skip)]
    gated: bool,
}

/// Order from the last pair of levels whose coarser residual is above both
/// the floor and the roundoff level of the finer grid. Returns
/// `(order, saturated)`; `saturated` means no pair qualifies.
pub fn estimate_order(resolutions: &[usize], residuals: &[f64], roundoff: &[f64], floor: f64) -> (Option<f64>, bool) {
    if resolutions.len() < 2 {
        return (None, false);
    }
    for k in (0..resolutions.len() - 1).rev() {
        let (a, b) = (residuals[k], residuals[k + 1]);
        let noise = roundoff.get(k + 1).copied().unwrap_or(0.0);
        // Both residuals must stand above the finer level's noise.
        if a > floor.max(noise) && b > noise {
            let ratio = resolutions[k + 1] as f64 / resolutions[k] as f64;
            let order = if b <= 0.0 { f64::INFINITY } else { (a / b).ln() / ratio.ln() };
            return (Some(order), false);
        }
    }
    (None, true)
}

impl VerificationReport {
    pub fn single(
        identity: &str,
        space: &SpaceForm,
        r: Option<usize>,
        theta: Option<f64>,
        resolution: usize,
        residual: f64,
        criterion: Criterion,
    ) -> Self {
        let mut rep = Self {
            schema_version: SCHEMA_VERSION,
            identity: identity.to_string(),
            scenario: String::new(),
            model: space.model.tag().to_string(),
            n: space.n,
            r,
            theta,
            resolutions: vec![resolution],
            residuals: vec![residual],
            components: BTreeMap::new(),
            values: BTreeMap::new(),
            roundoff: vec![0.0],
            order: None,
            saturated: false,
            criterion,
            normalizer: String::new(),
            notes: Vec::new(),
            verdict: Verdict::Fail,
            gated: false,
        };
        rep.judge();
        rep
    }

    pub fn component(mut self, name: &str, residual: f64) -> Self {
        self.components.insert(name.to_string(), vec![residual]);
        self
    }

    pub fn value(mut self, name: &str, v: f64) -> Self {
        self.values.insert(name.to_string(), vec![v]);
        self
    }

    pub fn with_roundoff(mut self, level: f64) -> Self {
        self.roundoff = vec![level];
        self.judge();
        self
    }

    pub fn normalized_by(mut self, what: &str) -> Self {
        self.normalizer = what.to_string();
        self
    }

    pub fn note(mut self, text: &str) -> Self {
        self.notes.push(text.to_string());
        self
    }

    /// Combines single-level runs of the same verifier into one sweep.
    pub fn sweep(levels: Vec<VerificationReport>) -> Option<VerificationReport> {
        let mut levels = levels;
        levels.sort_by_key(|l| l.resolutions[0]);
        let mut it = levels.into_iter();
        let mut out = it.next()?;
        for l in it {
            out.resolutions.extend(l.resolutions);
            out.residuals.extend(l.residuals);
            out.roundoff.extend(l.roundoff);
            out.gated |= l.gated;
            for (k, v) in l.components {
                out.components.entry(k).or_default().extend(v);
            }
            for (k, v) in l.values {
                out.values.entry(k).or_default().extend(v);
            }
            for note in l.notes {
                if !out.notes.contains(&note) {
                    out.notes.push(note);
                }
            }
        }
        out.judge();
        Some(out)
    }

    fn judge(&mut self) {
        let (order, saturated) = estimate_order(&self.resolutions, &self.residuals, &self.roundoff, self.criterion.floor);
        self.order = order;
        self.saturated = saturated;
        self.decide();
    }

    fn decide(&mut self) {
        let (order, saturated) = (self.order, self.saturated);
        let finest = *self.residuals.last().unwrap_or(&f64::INFINITY);
        let mut ok = finest.is_finite() && finest <= self.criterion.tolerance;
        if let (Some(min), true) = (self.criterion.min_order, self.resolutions.len() >= 2) {
            ok &= saturated || order.map(|o| o >= min).unwrap_or(false);
        }
        self.verdict = if ok && !self.gated { Verdict::Pass } else { Verdict::Fail };
    }

    /// Applies an extra condition; it can only turn a pass into a fail.
    pub fn gate(mut self, ok: bool, reason: &str) -> Self {
        if !ok {
            self.gated = true;
            self.verdict = Verdict::Fail;
            self.notes.push(reason.to_string());
        }
        self
    }

    /// Re-judges against another tolerance; the floor and gates are kept.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.criterion.tolerance = tolerance;
        self.decide();
        self
    }

    pub fn on(mut self, scenario: &str) -> Self {
        self.scenario = scenario.to_string();
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn finest(&self) -> f64 {
        *self.residuals.last().unwrap_or(&f64::NAN)
    }

    /// Short identifying label: `identity[model,n,r,theta]`.
    pub fn label(&self) -> String {
        let mut s = format!("{}[{},n={}", self.identity, self.model, self.n);
        if !self.scenario.is_empty() {
            s = format!("{}[{}", self.identity, self.scenario);
        }
        if let Some(r) = self.r {
            s.push_str(&format!(",r={r}"));
        }
        if let (Some(t), true) = (self.theta, self.scenario.is_empty()) {
            s.push_str(&format!(",theta={t:.6}"));
        }
        s.push(']');
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Full run output written by the driver.
#[derive(Debug, Clone, Serialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub subcommand: String,
    pub records: Vec<VerificationReport>,
    /// Combinations whose preconditions do not hold, with the reason.
    pub skipped: Vec<Skipped>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skipped {
    pub what: String,
    pub reason: String,
}

impl ReportFile {
    pub fn new(subcommand: &str, records: Vec<VerificationReport>) -> Self {
        let passed = records.iter().all(|r| r.passed());
        Self { schema_version: SCHEMA_VERSION, subcommand: subcommand.to_string(), records, skipped: Vec::new(), passed }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report file serializes")
    }

    pub fn failures(&self) -> impl Iterator<Item = &VerificationReport> {
        self.records.iter().filter(|r| !r.passed())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_from_geometric_decay() {
        let (o, sat) = estimate_order(&[16, 32, 64], &[1e-3, 2.5e-4, 6.25e-5], &[], 1e-12);
        assert!(!sat);
        assert!((o.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn floor_pairs_are_skipped() {
        let (o, sat) = estimate_order(&[16, 32, 64], &[1e-4, 1e-13, 2e-13], &[], 1e-10);
        assert!(!sat && o.unwrap() > 20.0);
        let (o, sat) = estimate_order(&[16, 32, 64], &[1e-13, 1e-14, 3e-14], &[], 1e-10);
        assert!(sat && o.is_none());
        // Coarser residual buried in the finer grid's roundoff.
        let (o, sat) = estimate_order(&[16, 32, 64], &[1e-2, 8e-7, 7e-7], &[0.0, 5e-8, 4e-6], 1e-7);
        assert!(!sat && o.unwrap() > 10.0);
    }

    #[test]
    fn sweep_orders_levels_and_judges() {
        let sp = SpaceForm::euclidean(2);
        let c = Criterion::new(1e-6, Some(2.0));
        let a = VerificationReport::single("x", &sp, Some(0), None, 32, 1e-5, c);
        let b = VerificationReport::single("x", &sp, Some(0), None, 16, 1e-3, c);
        let c2 = VerificationReport::single("x", &sp, Some(0), None, 64, 1e-7, c);
        assert!(!a.passed());
        let s = VerificationReport::sweep(vec![a, b, c2]).unwrap();
        assert_eq!(s.resolutions, vec![16, 32, 64]);
        assert!(s.passed());
        assert!((s.order.unwrap() - (100f64).log2()).abs() < 1e-12);
    }

    #[test]
    fn slow_decay_fails_order() {
        let sp = SpaceForm::euclidean(2);
        let c = Criterion::new(1e-2, Some(2.0));
        let s = VerificationReport::sweep(vec![
            VerificationReport::single("x", &sp, None, None, 16, 4e-3, c),
            VerificationReport::single("x", &sp, None, None, 32, 2e-3, c),
        ])
        .unwrap();
        assert!(!s.passed());
    }
}
