//! Verification matrices over built-in surfaces and the command-line front
//! end.
//!
//! A run walks every `(model, n, θ)` group of the configuration, builds the
//! round cap and its perturbation (or the single configured scenario),
//! discretizes each surface once per resolution and applies the verifiers of
//! the requested subcommand. Runs are sequential, so identical
//! configurations give byte-identical reports.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ambient::{FieldTag, Model, SpaceForm};
use crate::immersion::{cap_family, discretize, parse_scenario, perturbed_cap, DiscreteImmersion, ParametricPatch};
use crate::report::{Criterion, ReportFile, Skipped, VerificationReport};
use crate::variation::{ledger_closure, scenario_field, FlowScenario, VariationSweep};
use crate::{identities, operators, stability, Error, Result};

pub const AMBIENT_TOLERANCE: f64 = 1e-10;
pub const TEST_FUNCTION_TOLERANCE: f64 = 1e-8;
pub const CAP_REDUCTION_TOLERANCE: f64 = 1e-4;
const AMBIENT_POINTS: usize = 100;
const AMBIENT_SEED: u64 = 0x5eed;
const REDUCTION_FIELDS: usize = 20;
const REDUCTION_SEED: u64 = 0x2ed;
const LEDGER_DT: f64 = 0.01;
const LEDGER_STEPS: usize = 10;
const LEDGER_RES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    VerifyMinkowski,
    VerifyBoundary,
    VerifyJacobi,
    VerifyAmbient,
    Stability,
    RigidityGaps,
    FirstVariation,
    Convergence,
    All,
}

impl Subcommand {
    pub const ALL: [Subcommand; 9] = [
        Self::VerifyMinkowski,
        Self::VerifyBoundary,
        Self::VerifyJacobi,
        Self::VerifyAmbient,
        Self::Stability,
        Self::RigidityGaps,
        Self::FirstVariation,
        Self::Convergence,
        Self::All,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Self::VerifyMinkowski => "verify-minkowski",
            Self::VerifyBoundary => "verify-boundary",
            Self::VerifyJacobi => "verify-jacobi",
            Self::VerifyAmbient => "verify-ambient",
            Self::Stability => "stability",
            Self::RigidityGaps => "rigidity-gaps",
            Self::FirstVariation => "first-variation",
            Self::Convergence => "convergence",
            Self::All => "all",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL.iter().copied().find(|c| c.tag() == s).ok_or_else(|| Error::Usage(format!("unknown subcommand '{s}'")))
    }

    fn sections(self) -> &'static [Section] {
        use Section::*;
        match self {
            Self::VerifyMinkowski => &[Minkowski],
            Self::VerifyBoundary => &[Boundary],
            Self::VerifyJacobi => &[Jacobi],
            Self::VerifyAmbient => &[Ambient],
            Self::Stability => &[Stability],
            Self::RigidityGaps => &[Gaps],
            Self::FirstVariation => &[Flow],
            Self::Convergence => &[Minkowski, Boundary, Jacobi],
            Self::All => &[Ambient, Minkowski, Boundary, Jacobi, Stability, Gaps, Flow],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Ambient,
    Minkowski,
    Boundary,
    Jacobi,
    Stability,
    Gaps,
    Flow,
}

/// Run configuration; the JSON config file uses the same field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub models: Vec<Model>,
    pub n: Vec<usize>,
    /// Defaults to `0..n` for each `n`.
    pub r: Option<Vec<usize>>,
    pub theta: Vec<f64>,
    pub lambda: f64,
    pub res: Vec<usize>,
    /// Single surface instead of the cap matrix, e.g.
    /// `perturbed:model=euclid,n=2,lambda=1,theta=1.0472,amp=0.05,mode=2`.
    pub scenario: Option<String>,
    pub flows: Vec<String>,
    /// Resolution for single-level checks (stability, gaps, flows). Defaults
    /// to the finest listed resolution not above 32, or the coarsest.
    pub field_res: Option<usize>,
    /// Resolution for first-variation sweeps.
    pub flow_res: usize,
    pub basis_degree: usize,
    pub perturbation_amplitude: f64,
    pub perturbation_mode: u32,
    /// Identity name to tolerance.
    pub tolerances: BTreeMap<String, f64>,
    pub output: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            models: vec![Model::Euclidean, Model::Hyperbolic],
            n: vec![2, 3],
            r: None,
            theta: vec![PI / 3.0, PI / 2.0, 2.0 * PI / 3.0],
            lambda: 1.5,
            res: vec![16, 32, 64],
            scenario: None,
            flows: FlowScenario::ALL.iter().map(|f| f.tag().to_string()).collect(),
            field_res: None,
            flow_res: 40,
            basis_degree: 4,
            perturbation_amplitude: 0.05,
            perturbation_mode: 2,
            tolerances: BTreeMap::new(),
            output: None,
        }
    }
}

const KNOWN_IDENTITIES: &[&str] = &[
    "ambient_identities",
    "minkowski_euclidean",
    "minkowski_horoball",
    "boundary_flux_1",
    "boundary_flux_2",
    "cmc_boundary_identity",
    "jacobi",
    "robin",
    "stability",
    "test_function",
    "u_integral",
    "cap_reduction",
    "rigidity_gaps",
    "auxiliary",
    "first_variation",
    "wetting_rate",
    "ledger_closure",
];

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Usage(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let usage = |s: String| Err(Error::Usage(s));
        if self.scenario.is_none() && (self.models.is_empty() || self.n.is_empty() || self.theta.is_empty()) {
            return usage("models, n and theta lists must be nonempty".into());
        }
        if self.res.is_empty() {
            return usage("resolution list must be nonempty".into());
        }
        if self.res.windows(2).any(|w| w[0] >= w[1]) {
            return usage(format!("resolutions must be strictly increasing, got {:?}", self.res));
        }
        if self.res.iter().chain(&self.field_res).chain([&self.flow_res]).any(|&r| r < 4) {
            return usage("resolutions must be at least 4".into());
        }
        if let Some(n) = self.n.iter().find(|&&n| !(2..=3).contains(&n)) {
            return usage(format!("n = {n} is not discretized (expected 2 or 3)"));
        }
        if let Some(t) = self.theta.iter().find(|t| !(**t > 0.0 && **t < PI)) {
            return usage(format!("theta = {t} must lie in (0, pi)"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return usage(format!("lambda = {} must be finite and nonnegative", self.lambda));
        }
        if let Some(r) = &self.r {
            if r.is_empty() {
                return usage("r list must be nonempty".into());
            }
            let nmax = self.n.iter().max().copied().unwrap_or(3);
            if let Some(bad) = r.iter().find(|&&r| r >= nmax) {
                return usage(format!("r = {bad} needs n > {bad}"));
            }
        }
        for f in &self.flows {
            FlowScenario::parse(f)?;
        }
        if self.basis_degree == 0 {
            return usage("basis degree must be positive".into());
        }
        if let Some(k) = self.tolerances.keys().find(|k| !KNOWN_IDENTITIES.contains(&k.as_str())) {
            return usage(format!("tolerance override for unknown identity '{k}'"));
        }
        if let Some(s) = &self.scenario {
            parse_scenario(s)?;
        }
        Ok(())
    }

    fn field_resolution(&self) -> usize {
        self.field_res
            .or_else(|| self.res.iter().rev().find(|&&r| r <= 32).copied())
            .unwrap_or(self.res[0])
    }

    fn r_list(&self, n: usize) -> Vec<usize> {
        match &self.r {
            Some(list) => list.iter().copied().filter(|&r| r < n).collect(),
            None => (0..n).collect(),
        }
    }
}

/// A surface with discretizations cached by resolution.
struct Surface {
    label: String,
    space: SpaceForm,
    patch: ParametricPatch,
    theta: f64,
    umbilical: bool,
    first_of_group: bool,
    cache: BTreeMap<usize, DiscreteImmersion>,
}

impl Surface {
    fn new(label: String, space: SpaceForm, patch: ParametricPatch, theta: f64, first_of_group: bool) -> Self {
        let umbilical = patch.family.is_umbilical();
        Self { label, space, patch, theta, umbilical, first_of_group, cache: BTreeMap::new() }
    }

    fn at(&mut self, res: usize) -> Result<&DiscreteImmersion> {
        if !self.cache.contains_key(&res) {
            let m = discretize(&self.patch, &self.space, res)?;
            self.cache.insert(res, m);
        }
        Ok(&self.cache[&res])
    }

    fn levels(&mut self, res: &[usize]) -> Result<Vec<&DiscreteImmersion>> {
        for &k in res {
            self.at(k)?;
        }
        Ok(res.iter().map(|k| &self.cache[k]).collect())
    }
}

#[derive(Default)]
struct Collector {
    records: Vec<VerificationReport>,
    skipped: Vec<Skipped>,
}

impl Collector {
    fn push(&mut self, scenario: &str, rep: Result<VerificationReport>, fallback: impl FnOnce() -> VerificationReport) {
        match rep {
            Ok(r) => self.records.push(r.on(scenario)),
            Err(e) => self.records.push(fallback().on(scenario).note(&e.to_string())),
        }
    }

    fn skip(&mut self, what: String, reason: String) {
        self.skipped.push(Skipped { what, reason });
    }
}

fn failure(identity: &str, space: &SpaceForm, r: Option<usize>, theta: Option<f64>, res: usize) -> VerificationReport {
    VerificationReport::single(identity, space, r, theta, res, f64::INFINITY, Criterion::new(0.0, None))
}

fn cap_label(space: &SpaceForm, lambda: f64, theta: f64) -> String {
    format!("{}-cap:n={},lambda={lambda},theta={theta:.6}", space.model.tag(), space.n)
}

fn groups(cfg: &RunConfig, coll: &mut Collector) -> Result<Vec<Vec<Surface>>> {
    if let Some(s) = &cfg.scenario {
        let (space, patch) = parse_scenario(s)?;
        let theta = patch.family.theta().unwrap_or(PI / 2.0);
        return Ok(vec![vec![Surface::new(s.clone(), space, patch, theta, true)]]);
    }
    let mut out = Vec::new();
    for &model in &cfg.models {
        for &n in &cfg.n {
            let space = SpaceForm::new(model, n)?;
            for (k, &theta) in cfg.theta.iter().enumerate() {
                let label = cap_label(&space, cfg.lambda, theta);
                let cap = match cap_family(&space, n, cfg.lambda, theta) {
                    Ok(c) => c,
                    Err(e) => {
                        coll.records.push(failure("construction", &space, None, Some(theta), 0).on(&label).note(&e.to_string()));
                        continue;
                    }
                };
                let mut group = vec![Surface::new(label.clone(), space, cap.clone(), theta, k == 0)];
                let plabel = format!(
                    "perturbed:model={},n={n},lambda={},theta={theta:.6},amp={},mode={}",
                    model.tag(),
                    cfg.lambda,
                    cfg.perturbation_amplitude,
                    cfg.perturbation_mode
                );
                match perturbed_cap(&cap, cfg.perturbation_amplitude, cfg.perturbation_mode) {
                    Ok(p) => group.push(Surface::new(plabel, space, p, theta, k == 0)),
                    Err(e) => coll.records.push(failure("construction", &space, None, Some(theta), 0).on(&plabel).note(&e.to_string())),
                }
                out.push(group);
            }
        }
    }
    Ok(out)
}

/// Killing and conformal defects of the canonical fields and the potential
/// Hessian identity at seeded random points, in `ḡ`-orthonormal frames.
pub fn ambient_report(space: &SpaceForm, points: usize, seed: u64) -> Result<VerificationReport> {
    let n = space.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tags = vec![FieldTag::Position, FieldTag::Top, FieldTag::Shifted];
    tags.extend((0..n).map(FieldTag::Horizontal));
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    for _ in 0..points {
        let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        p.push(rng.gen_range(0.2..5.0));
        let frame = space.canonical_fields(&p)?.frame;
        let cols: Vec<Vec<f64>> = (0..=n).map(|a| frame.column(a).iter().copied().collect()).collect();
        for a in &cols {
            for b in &cols {
                for &tag in &tags {
                    let d = space.killing_defect(tag, &p, a, b)?.abs();
                    let key = match tag {
                        FieldTag::Horizontal(_) => "killing_horizontal".to_string(),
                        FieldTag::Position => "position".to_string(),
                        FieldTag::Top => "top".to_string(),
                        FieldTag::Shifted => "shifted".to_string(),
                    };
                    let e = worst.entry(key).or_insert(0.0);
                    *e = e.max(d);
                }
                if space.model == Model::Hyperbolic {
                    let d = space.hessian_v_residual(&p, a, b)?.abs();
                    let e = worst.entry("hessian_potential".to_string()).or_insert(0.0);
                    *e = e.max(d);
                }
            }
        }
    }
    let total = worst.values().fold(0.0f64, |a, b| a.max(*b));
    let mut rep = VerificationReport::single("ambient_identities", space, None, None, points, total, Criterion::new(AMBIENT_TOLERANCE, None))
        .normalized_by("absolute defects on g-orthonormal frames; resolution is the number of points");
    for (k, v) in worst {
        rep = rep.component(&k, v);
    }
    Ok(rep)
}

fn minkowski_section(s: &mut Surface, cfg: &RunConfig, coll: &mut Collector) -> Result<()> {
    let name = match s.space.model {
        Model::Euclidean => "minkowski_euclidean",
        Model::Hyperbolic => "minkowski_horoball",
    };
    let rs = cfg.r_list(s.space.n);
    let (space, theta, label) = (s.space, s.theta, s.label.clone());
    let levels = s.levels(&cfg.res)?;
    for r in rs {
        let rep = identities::sweep(levels.iter().copied(), |m| identities::run(name, m, r));
        coll.push(&label, rep, || failure(name, &space, Some(r), Some(theta), cfg.res[0]));
    }
    Ok(())
}

fn boundary_section(s: &mut Surface, cfg: &RunConfig, coll: &mut Collector) -> Result<()> {
    if s.space.model != Model::Hyperbolic {
        return Ok(());
    }
    let (space, theta, label, umbilical) = (s.space, s.theta, s.label.clone(), s.umbilical);
    let rs = cfg.r_list(space.n);
    let levels = s.levels(&cfg.res)?;
    for name in ["boundary_flux_1", "boundary_flux_2", "cmc_boundary_identity"] {
        for &r in &rs {
            if name == "cmc_boundary_identity" && !umbilical {
                coll.skip(format!("{name}[{label},r={r}]"), "sigma_{r+1} is not constant on a perturbed cap".into());
                continue;
            }
            let rep = identities::sweep(levels.iter().copied(), |m| identities::run(name, m, r));
            coll.push(&label, rep, || failure(name, &space, Some(r), Some(theta), cfg.res[0]));
        }
    }
    Ok(())
}

fn jacobi_section(s: &mut Surface, cfg: &RunConfig, coll: &mut Collector) -> Result<()> {
    let (space, theta, label) = (s.space, s.theta, s.label.clone());
    let rs = cfg.r_list(space.n);
    let levels = s.levels(&cfg.res)?;
    for &r in &rs {
        let rep = identities::sweep(levels.iter().copied(), |m| operators::jacobi_identity_residuals(m, r));
        coll.push(&label, rep, || failure("jacobi", &space, Some(r), Some(theta), cfg.res[0]));
        let rep = identities::sweep(levels.iter().copied(), |m| operators::robin_residuals(m, r));
        coll.push(&label, rep, || failure("robin", &space, Some(r), Some(theta), cfg.res[0]));
    }
    Ok(())
}

fn stability_section(s: &mut Surface, cfg: &RunConfig, coll: &mut Collector) -> Result<()> {
    if !s.umbilical {
        return Ok(());
    }
    let (space, theta, label) = (s.space, s.theta, s.label.clone());
    let res = cfg.field_resolution();
    let rs = cfg.r_list(space.n);
    let m = s.at(res)?;
    let area = m.area();
    for &r in &rs {
        coll.push(&label, stability::stability_report(m, r, cfg.basis_degree), || failure("stability", &space, Some(r), Some(theta), res));
        let tf = match space.model {
            Model::Euclidean => stability::test_function_euclidean(m, r),
            Model::Hyperbolic => stability::test_function_horoball(m, r),
        };
        let tf = tf.map(|phi| {
            let scale = phi.scale.max(f64::MIN_POSITIVE);
            VerificationReport::single("test_function", &space, Some(r), Some(theta), res, phi.phi.sup() / scale, Criterion::new(TEST_FUNCTION_TOLERANCE, None))
                .value("sup_phi", phi.phi.sup())
                .value("scale", scale)
                .normalized_by("sup|phi| / natural scale")
        });
        coll.push(&label, tf, || failure("test_function", &space, Some(r), Some(theta), res));
        let fields = stability::random_admissible_fields(m, cfg.basis_degree, REDUCTION_FIELDS, REDUCTION_SEED);
        let red = fields.and_then(|f| stability::cap_reduction_defect(m, r, &f)).map(|d| {
            VerificationReport::single("cap_reduction", &space, Some(r), Some(theta), res, d, Criterion::new(CAP_REDUCTION_TOLERANCE, None))
                .value("factor", stability::cap_reduction_factor(space.n, r, cfg.lambda))
                .value("fields", REDUCTION_FIELDS as f64)
                .normalized_by("max |Q_r - factor Q_0| / |Q_0| over seeded admissible fields")
        });
        coll.push(&label, red, || failure("cap_reduction", &space, Some(r), Some(theta), res));
    }
    if space.model == Model::Hyperbolic {
        // Bounded away from zero: pass iff |∫u| >= 1e-3 area.
        let u = stability::u_integral(m).map(|u| {
            let ratio = 1e-3 * area / u.abs().max(f64::MIN_POSITIVE);
            VerificationReport::single("u_integral", &space, None, Some(theta), res, ratio, Criterion::new(1.0, None))
                .value("u_integral", u)
                .value("area", area)
                .normalized_by("1e-3 area / |int u dA|")
        });
        coll.push(&label, u, || failure("u_integral", &space, None, Some(theta), res));
    }
    Ok(())
}

fn gaps_section(s: &mut Surface, cfg: &RunConfig, coll: &mut Collector) -> Result<()> {
    let (space, theta, label, umbilical) = (s.space, s.theta, s.label.clone(), s.umbilical);
    let res = cfg.field_resolution();
    let rs = cfg.r_list(space.n);
    let m = s.at(res)?;
    for &r in &rs {
        coll.push(&label, stability::rigidity_gap_report(m, r), || failure("rigidity_gaps", &space, Some(r), Some(theta), res));
        if space.model == Model::Hyperbolic && umbilical {
            coll.push(&label, stability::auxiliary_identity_residuals(m, r), || failure("auxiliary", &space, Some(r), Some(theta), res));
        }
    }
    Ok(())
}

fn flow_section(s: &mut Surface, cfg: &RunConfig, coll: &mut Collector) -> Result<()> {
    let (space, theta, label, umbilical, first) = (s.space, s.theta, s.label.clone(), s.umbilical, s.first_of_group);
    let res = cfg.flow_res;
    let rs = cfg.r_list(space.n);
    // One closure run per (model, n), on the cap of the first angle.
    if first && umbilical && cfg.flows.iter().any(|f| f == FlowScenario::FromPhi.tag()) {
        let m = s.at(LEDGER_RES)?;
        let rep = scenario_field(m, FlowScenario::FromPhi).and_then(|field| ledger_closure(m, &field, LEDGER_DT, LEDGER_STEPS));
        coll.push(&label, rep.map(|x| x.note(FlowScenario::FromPhi.tag())), || failure("ledger_closure", &space, None, Some(theta), LEDGER_RES));
        s.cache.remove(&LEDGER_RES);
    }
    let m = s.at(res)?;
    let flows: Vec<FlowScenario> = cfg.flows.iter().map(|f| FlowScenario::parse(f)).collect::<Result<_>>()?;
    for &flow in &flows {
        let tag = format!("{}[{label}]", flow.tag());
        let field = match scenario_field(m, flow) {
            Ok(f) => f,
            Err(e) => {
                coll.push(&label, Err(e), || failure("first_variation", &space, None, Some(theta), res).note(&tag));
                continue;
            }
        };
        let sweep = match VariationSweep::new(m, &field) {
            Ok(sw) => sw,
            Err(Error::Precondition(reason)) => {
                coll.skip(tag, reason);
                continue;
            }
            Err(e) => {
                coll.push(&label, Err(e), || failure("first_variation", &space, None, Some(theta), res).note(&tag));
                continue;
            }
        };
        for &r in &rs {
            coll.push(&label, sweep.first_variation(r).map(|x| x.note(flow.tag())), || failure("first_variation", &space, Some(r), Some(theta), res));
            coll.push(&label, sweep.wetting_rate(r).map(|x| x.note(flow.tag())), || failure("wetting_rate", &space, Some(r), Some(theta), res));
        }
    }
    Ok(())
}

/// Runs a subcommand over the configuration matrix.
pub fn run(sub: Subcommand, cfg: &RunConfig) -> Result<ReportFile> {
    cfg.validate()?;
    let mut coll = Collector::default();
    let sections = sub.sections();
    if sections.contains(&Section::Ambient) {
        let mut spaces: Vec<SpaceForm> = Vec::new();
        match &cfg.scenario {
            Some(s) => spaces.push(parse_scenario(s)?.0),
            None => {
                for &model in &cfg.models {
                    for &n in &cfg.n {
                        spaces.push(SpaceForm::new(model, n)?);
                    }
                }
            }
        }
        for sp in spaces {
            coll.push("", ambient_report(&sp, AMBIENT_POINTS, AMBIENT_SEED), || failure("ambient_identities", &sp, None, None, AMBIENT_POINTS));
        }
    }
    let surface_sections: Vec<Section> = sections.iter().copied().filter(|s| *s != Section::Ambient).collect();
    if !surface_sections.is_empty() {
        for mut group in groups(cfg, &mut coll)? {
            for s in group.iter_mut() {
                for sec in &surface_sections {
                    let out = match sec {
                        Section::Minkowski => minkowski_section(s, cfg, &mut coll),
                        Section::Boundary => boundary_section(s, cfg, &mut coll),
                        Section::Jacobi => jacobi_section(s, cfg, &mut coll),
                        Section::Stability => stability_section(s, cfg, &mut coll),
                        Section::Gaps => gaps_section(s, cfg, &mut coll),
                        Section::Flow => flow_section(s, cfg, &mut coll),
                        Section::Ambient => Ok(()),
                    };
                    if let Err(e) = out {
                        coll.records.push(failure("discretization", &s.space, None, Some(s.theta), 0).on(&s.label).note(&e.to_string()));
                    }
                }
                // Discretizations are not shared across surfaces.
                s.cache.clear();
            }
        }
    }
    let records: Vec<VerificationReport> = coll
        .records
        .into_iter()
        .map(|r| match cfg.tolerances.get(&r.identity) {
            Some(&t) => r.with_tolerance(t),
            None => r,
        })
        .collect();
    let mut file = ReportFile::new(sub.tag(), records);
    file.skipped = coll.skipped;
    Ok(file)
}

/// Exit code for a finished run: 0 when every record passes, 1 otherwise.
pub fn exit_code(file: &ReportFile) -> i32 {
    if file.passed {
        0
    } else {
        1
    }
}

#[derive(Debug, clap::Parser)]
#[command(name = "capillary", about = "Verification runs for capillary hypersurface identities")]
struct Cli {
    #[arg(value_parser = Subcommand::ALL.map(|s| s.tag()))]
    subcommand: String,
    /// euclid, horoball or both.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    r: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Comma-separated resolutions; an empty value is a usage error.
    #[arg(long, num_args = 0..=1, default_missing_value = "")]
    res: Option<String>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, value_delimiter = ',')]
    flow: Option<Vec<String>>,
    #[arg(long)]
    field_res: Option<usize>,
    #[arg(long)]
    flow_res: Option<usize>,
    #[arg(long)]
    basis_degree: Option<usize>,
    /// `identity=tolerance`, repeatable.
    #[arg(long = "tol")]
    tolerances: Vec<String>,
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// JSON config with the RunConfig fields; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn config_from(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_json(&std::fs::read_to_string(p)?)?,
        None => RunConfig::default(),
    };
    if let Some(m) = &cli.model {
        cfg.models = match m.as_str() {
            "both" => vec![Model::Euclidean, Model::Hyperbolic],
            other => vec![Model::parse(other)?],
        };
    }
    if let Some(n) = &cli.n {
        cfg.n = n.clone();
    }
    if let Some(r) = &cli.r {
        cfg.r = Some(r.clone());
    }
    if let Some(t) = &cli.theta {
        cfg.theta = t.clone();
    }
    if let Some(l) = cli.lambda {
        cfg.lambda = l;
    }
    if let Some(res) = &cli.res {
        cfg.res = res
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<usize>().map_err(|_| Error::Usage(format!("bad resolution '{s}'"))))
            .collect::<Result<_>>()?;
    }
    if let Some(s) = &cli.scenario {
        cfg.scenario = Some(s.clone());
    }
    if let Some(f) = &cli.flow {
        cfg.flows = f.clone();
    }
    if cli.field_res.is_some() {
        cfg.field_res = cli.field_res;
    }
    if let Some(k) = cli.flow_res {
        cfg.flow_res = k;
    }
    if let Some(d) = cli.basis_degree {
        cfg.basis_degree = d;
    }
    for t in &cli.tolerances {
        let (k, v) = t.split_once('=').ok_or_else(|| Error::Usage(format!("--tol expects identity=value, got '{t}'")))?;
        let v: f64 = v.parse().map_err(|_| Error::Usage(format!("bad tolerance '{v}'")))?;
        cfg.tolerances.insert(k.to_string(), v);
    }
    if cli.output.is_some() {
        cfg.output = cli.output.clone();
    }
    Ok(cfg)
}

/// Command-line entry point; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    use clap::Parser;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = config_from(&cli).and_then(|cfg| {
        let sub = Subcommand::parse(&cli.subcommand)?;
        let file = run(sub, &cfg)?;
        let text = file.to_json();
        match &cfg.output {
            Some(p) => std::fs::write(p, text + "\n")?,
            None => println!("{text}"),
        }
        Ok(file)
    });
    match outcome {
        Ok(file) => {
            for rec in file.failures() {
                eprintln!("FAIL {} residual {:e} order {:?}", rec.label(), rec.finest(), rec.order);
            }
            eprintln!("{} records, {} failed, {} skipped", file.records.len(), file.failures().count(), file.skipped.len());
            exit_code(&file)
        }
        Err(Error::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.res = vec![];
        assert!(matches!(cfg.validate(), Err(Error::Usage(_))));
        cfg.res = vec![32, 16];
        assert!(matches!(cfg.validate(), Err(Error::Usage(_))));
        let cfg = RunConfig { r: Some(vec![3]), ..RunConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Usage(_))));
        let cfg = RunConfig { flows: vec!["flow:spin".into()], ..RunConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Usage(_))));
        assert!(RunConfig::from_json(r#"{"res": [16, 32], "unknown": 1}"#).is_err());
        let cfg = RunConfig::from_json(r#"{"models": ["horoball"], "n": [2], "res": [16, 32]}"#).unwrap();
        assert_eq!(cfg.models, vec![Model::Hyperbolic]);
        assert_eq!(cfg.field_resolution(), 32);
    }

    #[test]
    fn empty_resolution_list_exits_with_usage() {
        assert_eq!(main_with_args(["capillary", "verify-minkowski", "--res", ""]), 2);
        assert_eq!(main_with_args(["capillary", "verify-minkowski", "--res"]), 2);
        assert_eq!(main_with_args(["capillary", "no-such-command"]), 2);
    }

    #[test]
    fn ambient_identities_hold() {
        for sp in [SpaceForm::euclidean(2), SpaceForm::hyperbolic(3)] {
            let rep = ambient_report(&sp, 20, 1).unwrap();
            assert!(rep.passed(), "{:?}", rep.components);
        }
    }

    #[test]
    fn small_minkowski_run() {
        let cfg = RunConfig {
            models: vec![Model::Euclidean],
            n: vec![2],
            r: Some(vec![0, 1]),
            theta: vec![1.0472],
            res: vec![16, 32],
            ..RunConfig::default()
        };
        let file = run(Subcommand::VerifyMinkowski, &cfg).unwrap();
        // Cap and perturbed cap at r = 0, 1.
        assert_eq!(file.records.len(), 4);
        assert!(file.passed, "{}", file.to_json());
        assert_eq!(file.to_json(), run(Subcommand::VerifyMinkowski, &cfg).unwrap().to_json());
    }
}
