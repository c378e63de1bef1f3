//! Alloy-type random potentials W(ω) = Σ_e ω_e u_e.
//!
//! Every edge carries a nonnegative piecewise-constant single-site profile
//! `u_e` and an independent coupling constant `ω_e` drawn from a law with a
//! piecewise-constant density on `[ω_−, ω_+]`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Edge, SubgraphView};

const BOUND_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PotentialError {
    #[error("no single-site potential for edge `{0}`")]
    MissingEdgeEntry(String),
    #[error("no coupling for edge `{0}` in the disorder sample")]
    MissingCoupling(String),
    #[error("x = {x} outside [0, {length}] on edge `{edge}`")]
    CoordinateOutOfRange { edge: String, x: f64, length: f64 },
    #[error("invalid piecewise-constant table: {0}")]
    InvalidTable(String),
    #[error("invalid coupling law: {0}")]
    InvalidLaw(String),
    #[error("alloy configuration is invalid: {0}")]
    Invalid(ValidationReport),
    #[error("alloy file: {0}")]
    Io(String),
}

/// One constant piece `[from, to) -> value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub from: f64,
    pub to: f64,
    pub value: f64,
}

/// A piecewise-constant function given by contiguous segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Segment>", into = "Vec<Segment>")]
pub struct PiecewiseConstant {
    segments: Vec<Segment>,
}

impl TryFrom<Vec<Segment>> for PiecewiseConstant {
    type Error = PotentialError;

    fn try_from(segments: Vec<Segment>) -> Result<Self, Self::Error> {
        Self::new(segments)
    }
}

impl From<PiecewiseConstant> for Vec<Segment> {
    fn from(p: PiecewiseConstant) -> Self {
        p.segments
    }
}

impl PiecewiseConstant {
    pub fn new(segments: Vec<Segment>) -> Result<Self, PotentialError> {
        if segments.is_empty() {
            return Err(PotentialError::InvalidTable("no segments".into()));
        }
        for s in &segments {
            if !(s.from < s.to) || !s.value.is_finite() {
                return Err(PotentialError::InvalidTable(format!(
                    "segment [{}, {}) -> {} is degenerate",
                    s.from, s.to, s.value
                )));
            }
        }
        for w in segments.windows(2) {
            if (w[0].to - w[1].from).abs() > 1e-12 * (1.0 + w[0].to.abs()) {
                return Err(PotentialError::InvalidTable(format!(
                    "segments not contiguous at {} / {}",
                    w[0].to, w[1].from
                )));
            }
        }
        Ok(Self { segments })
    }

    pub fn constant(from: f64, to: f64, value: f64) -> Self {
        Self {
            segments: vec![Segment { from, to, value }],
        }
    }

    /// `value` on `[a, b]` and zero elsewhere on `[0, length]`.
    pub fn indicator(length: f64, a: f64, b: f64, value: f64) -> Self {
        let mut segments = Vec::new();
        if a > 0.0 {
            segments.push(Segment { from: 0.0, to: a, value: 0.0 });
        }
        segments.push(Segment { from: a, to: b, value });
        if b < length {
            segments.push(Segment { from: b, to: length, value: 0.0 });
        }
        Self { segments }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn start(&self) -> f64 {
        self.segments[0].from
    }

    pub fn end(&self) -> f64 {
        self.segments[self.segments.len() - 1].to
    }

    /// Value at `x`; segments are half-open except the last one.
    pub fn value_at(&self, x: f64) -> f64 {
        let i = self.segments.partition_point(|s| s.to <= x);
        self.segments[i.min(self.segments.len() - 1)].value
    }

    /// Interior breakpoints together with both ends.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.segments.iter().map(|s| s.from).collect();
        out.push(self.end());
        out
    }

    pub fn integral(&self) -> f64 {
        self.segments.iter().map(|s| (s.to - s.from) * s.value).sum()
    }

    pub fn max_value(&self) -> f64 {
        self.segments.iter().map(|s| s.value).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.segments.iter().map(|s| s.value).fold(f64::INFINITY, f64::min)
    }

    /// Smallest value among segments overlapping `(a, b)` in positive length.
    pub fn min_on(&self, a: f64, b: f64) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.from.max(a) < s.to.min(b))
            .map(|s| s.value)
            .fold(f64::INFINITY, f64::min)
    }
}

/// The law μ_e of one coupling constant.
///
/// A law with `omega_minus == omega_plus` is a point mass ("frozen"
/// disorder); otherwise it has a piecewise-constant density on the interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingLaw {
    omega_minus: f64,
    omega_plus: f64,
    density: Option<PiecewiseConstant>,
    c_g: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LawFile {
    omega_minus: f64,
    omega_plus: f64,
    #[serde(default)]
    density: Option<Vec<Segment>>,
    #[serde(default)]
    c_g: Option<f64>,
}

impl CouplingLaw {
    pub fn uniform(omega_minus: f64, omega_plus: f64) -> Result<Self, PotentialError> {
        if !(omega_minus < omega_plus) {
            return Err(PotentialError::InvalidLaw(format!(
                "empty interval [{omega_minus}, {omega_plus}]"
            )));
        }
        let value = 1.0 / (omega_plus - omega_minus);
        Ok(Self {
            omega_minus,
            omega_plus,
            density: Some(PiecewiseConstant::constant(omega_minus, omega_plus, value)),
            c_g: value,
        })
    }

    /// Point mass at `omega`.
    pub fn frozen(omega: f64) -> Self {
        Self {
            omega_minus: omega,
            omega_plus: omega,
            density: None,
            c_g: f64::INFINITY,
        }
    }

    /// Law with an explicit density table; `c_g` defaults to the table maximum.
    pub fn with_density(
        omega_minus: f64,
        omega_plus: f64,
        density: PiecewiseConstant,
        c_g: Option<f64>,
    ) -> Result<Self, PotentialError> {
        if !(omega_minus < omega_plus) {
            return Err(PotentialError::InvalidLaw(format!(
                "empty interval [{omega_minus}, {omega_plus}]"
            )));
        }
        let span = omega_plus - omega_minus;
        if (density.start() - omega_minus).abs() > 1e-12 * span
            || (density.end() - omega_plus).abs() > 1e-12 * span
        {
            return Err(PotentialError::InvalidLaw(format!(
                "density covers [{}, {}], expected [{omega_minus}, {omega_plus}]",
                density.start(),
                density.end()
            )));
        }
        if density.min_value() < 0.0 {
            return Err(PotentialError::InvalidLaw("negative density".into()));
        }
        let mass = density.integral();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(PotentialError::InvalidLaw(format!("density integrates to {mass}")));
        }
        let c_g = c_g.unwrap_or_else(|| density.max_value());
        if density.max_value() > c_g * (1.0 + BOUND_TOL) {
            return Err(PotentialError::InvalidLaw(format!(
                "density maximum {} exceeds c_g = {c_g}",
                density.max_value()
            )));
        }
        Ok(Self {
            omega_minus,
            omega_plus,
            density: Some(density),
            c_g,
        })
    }

    pub fn omega_minus(&self) -> f64 {
        self.omega_minus
    }

    pub fn omega_plus(&self) -> f64 {
        self.omega_plus
    }

    pub fn c_g(&self) -> f64 {
        self.c_g
    }

    pub fn is_frozen(&self) -> bool {
        self.density.is_none()
    }

    pub fn density(&self) -> Option<&PiecewiseConstant> {
        self.density.as_ref()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let Some(density) = &self.density else {
            return if x >= self.omega_minus { 1.0 } else { 0.0 };
        };
        let mut acc = 0.0;
        for s in density.segments() {
            if x <= s.from {
                break;
            }
            acc += (x.min(s.to) - s.from) * s.value;
        }
        acc.clamp(0.0, 1.0)
    }

    /// Quantile function for `u ∈ [0, 1)`.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let Some(density) = &self.density else {
            return self.omega_minus;
        };
        let mut acc = 0.0;
        for s in density.segments() {
            let mass = (s.to - s.from) * s.value;
            if mass > 0.0 && u < acc + mass {
                let x = s.from + (u - acc) / s.value;
                return x.clamp(self.omega_minus, self.omega_plus);
            }
            acc += mass;
        }
        self.omega_plus
    }

    pub fn mean(&self) -> f64 {
        match &self.density {
            None => self.omega_minus,
            Some(d) => d
                .segments()
                .iter()
                .map(|s| s.value * 0.5 * (s.to * s.to - s.from * s.from))
                .sum(),
        }
    }

    /// max(|ω_−|, |ω_+|).
    pub fn magnitude(&self) -> f64 {
        self.omega_minus.abs().max(self.omega_plus.abs())
    }

    fn from_file(file: LawFile) -> Result<Self, PotentialError> {
        if file.omega_minus == file.omega_plus {
            return Ok(Self::frozen(file.omega_minus));
        }
        match file.density {
            None => {
                let law = Self::uniform(file.omega_minus, file.omega_plus)?;
                match file.c_g {
                    Some(c) if c < law.c_g * (1.0 - BOUND_TOL) => Err(PotentialError::InvalidLaw(
                        format!("uniform density exceeds c_g = {c}"),
                    )),
                    Some(c) => Ok(Self { c_g: c, ..law }),
                    None => Ok(law),
                }
            }
            Some(segs) => Self::with_density(
                file.omega_minus,
                file.omega_plus,
                PiecewiseConstant::new(segs)?,
                file.c_g,
            ),
        }
    }

    fn to_file(&self) -> LawFile {
        LawFile {
            omega_minus: self.omega_minus,
            omega_plus: self.omega_plus,
            density: self.density.clone().map(Into::into),
            c_g: self.c_g.is_finite().then_some(self.c_g),
        }
    }
}

/// The single-site potential u_e of one edge, in absolute edge coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleSitePotential {
    pub edge: String,
    pub support: (f64, f64),
    pub profile: PiecewiseConstant,
    pub c_minus: f64,
    pub c_plus: f64,
}

impl SingleSitePotential {
    /// u_e ≡ 1 on the whole edge with c_− = c_+ = 1.
    pub fn unit(edge: &Edge) -> Self {
        Self {
            edge: edge.id.clone(),
            support: (0.0, edge.length),
            profile: PiecewiseConstant::constant(0.0, edge.length, 1.0),
            c_minus: 1.0,
            c_plus: 1.0,
        }
    }

    pub fn support_length(&self) -> f64 {
        self.support.1 - self.support.0
    }

    /// Points of the edge that a mesh must resolve.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = self.profile.breakpoints();
        pts.push(self.support.0);
        pts.push(self.support.1);
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        pts
    }

    /// Whether u_e is exactly the indicator of S_e.
    pub fn is_support_indicator(&self) -> bool {
        let (a, b) = self.support;
        self.profile.segments().iter().all(|s| {
            let inside = s.from >= a - 1e-12 && s.to <= b + 1e-12;
            let outside = s.to <= a + 1e-12 || s.from >= b - 1e-12;
            (inside && s.value == 1.0) || (outside && s.value == 0.0)
        })
    }
}

/// A single-site shape applied to every edge, in fractions of the edge length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteTemplate {
    pub support: [f64; 2],
    #[serde(default)]
    pub profile: Option<Vec<Segment>>,
    #[serde(default = "one")]
    pub c_minus: f64,
    #[serde(default = "one")]
    pub c_plus: f64,
}

fn one() -> f64 {
    1.0
}

impl SiteTemplate {
    fn instantiate(&self, edge: &Edge) -> Result<SingleSitePotential, PotentialError> {
        let l = edge.length;
        let (a, b) = (self.support[0] * l, self.support[1] * l);
        let profile = match &self.profile {
            None => PiecewiseConstant::indicator(l, a, b, 1.0),
            Some(segs) => PiecewiseConstant::new(
                segs.iter()
                    .map(|s| Segment {
                        from: s.from * l,
                        to: s.to * l,
                        value: s.value,
                    })
                    .collect(),
            )?,
        };
        Ok(SingleSitePotential {
            edge: edge.id.clone(),
            support: (a, b),
            profile,
            c_minus: self.c_minus,
            c_plus: self.c_plus,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sites {
    /// u_e ≡ 1 on every edge.
    Unit,
    /// One shape for all edges, scaled to each edge's length.
    Template(SiteTemplate),
    PerEdge(BTreeMap<String, SingleSitePotential>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SiteEntry {
    edge: String,
    support: [f64; 2],
    #[serde(default)]
    profile: Option<Vec<Segment>>,
    #[serde(default = "one")]
    c_minus: f64,
    #[serde(default = "one")]
    c_plus: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum SitesFile {
    Keyword(String),
    Template { template: SiteTemplate },
    List(Vec<SiteEntry>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AlloyFile {
    law: LawFile,
    #[serde(default)]
    edge_laws: BTreeMap<String, LawFile>,
    #[serde(default = "default_sites")]
    sites: SitesFile,
    #[serde(default)]
    s: Option<f64>,
}

fn default_sites() -> SitesFile {
    SitesFile::Keyword("default".into())
}

/// The full specification of W(ω): profiles, coupling laws and the minimal support length.
#[derive(Debug, Clone, PartialEq)]
pub struct AlloyConfig {
    law: CouplingLaw,
    edge_laws: BTreeMap<String, CouplingLaw>,
    sites: Sites,
    s: f64,
}

impl AlloyConfig {
    pub fn new(law: CouplingLaw, sites: Sites, s: f64) -> Self {
        Self {
            law,
            edge_laws: BTreeMap::new(),
            sites,
            s,
        }
    }

    /// u_e ≡ 1 and a uniform law on `[omega_minus, omega_plus]`.
    pub fn unit_uniform(omega_minus: f64, omega_plus: f64) -> Result<Self, PotentialError> {
        Ok(Self::new(
            CouplingLaw::uniform(omega_minus, omega_plus)?,
            Sites::Unit,
            0.0,
        ))
    }

    /// W ≡ 0: unit profiles with every coupling frozen at zero.
    pub fn free() -> Self {
        Self::new(CouplingLaw::frozen(0.0), Sites::Unit, 0.0)
    }

    pub fn with_edge_law(mut self, edge: impl Into<String>, law: CouplingLaw) -> Self {
        self.edge_laws.insert(edge.into(), law);
        self
    }

    pub fn with_law(mut self, law: CouplingLaw) -> Self {
        self.law = law;
        self
    }

    pub fn law(&self) -> &CouplingLaw {
        &self.law
    }

    pub fn law_for(&self, edge: &str) -> &CouplingLaw {
        self.edge_laws.get(edge).unwrap_or(&self.law)
    }

    pub fn sites(&self) -> &Sites {
        &self.sites
    }

    pub fn min_support(&self) -> f64 {
        self.s
    }

    /// Same law and same site shape on every edge.
    pub fn is_homogeneous(&self) -> bool {
        self.edge_laws.is_empty() && !matches!(self.sites, Sites::PerEdge(_))
    }

    /// Whether every realization is W ≡ 0.
    pub fn is_free(&self) -> bool {
        std::iter::once(&self.law)
            .chain(self.edge_laws.values())
            .all(|l| l.is_frozen() && l.omega_minus() == 0.0)
    }

    pub fn site_for(&self, edge: &Edge) -> Result<SingleSitePotential, PotentialError> {
        match &self.sites {
            Sites::Unit => Ok(SingleSitePotential::unit(edge)),
            Sites::Template(t) => t.instantiate(edge),
            Sites::PerEdge(map) => map
                .get(&edge.id)
                .cloned()
                .ok_or_else(|| PotentialError::MissingEdgeEntry(edge.id.clone())),
        }
    }

    fn max_c_plus(&self) -> f64 {
        match &self.sites {
            Sites::Unit => 1.0,
            Sites::Template(t) => t.c_plus,
            Sites::PerEdge(map) => map.values().map(|s| s.c_plus).fold(0.0, f64::max),
        }
    }

    /// K = max(|ω_−|, |ω_+|)·c_+, a uniform bound on ‖W(ω)‖_∞.
    pub fn potential_bound(&self) -> f64 {
        let magnitude = std::iter::once(&self.law)
            .chain(self.edge_laws.values())
            .map(CouplingLaw::magnitude)
            .fold(0.0, f64::max);
        magnitude * self.max_c_plus()
    }

    /// Checks every per-edge invariant for the edges of `view`.
    pub fn validate(&self, view: &SubgraphView) -> ValidationReport {
        let mut violations = Vec::new();
        for edge in view.edges() {
            let site = match self.site_for(edge) {
                Ok(site) => site,
                Err(PotentialError::MissingEdgeEntry(e)) => {
                    violations.push(Violation::MissingEdgeEntry { edge: e });
                    continue;
                }
                Err(err) => {
                    violations.push(Violation::ProfileOutOfBounds {
                        edge: edge.id.clone(),
                        detail: err.to_string(),
                    });
                    continue;
                }
            };
            check_site(&site, edge, self.s, &mut violations);
        }
        ValidationReport { violations }
    }

    pub fn from_json(text: &str) -> Result<Self, PotentialError> {
        let file: AlloyFile =
            serde_json::from_str(text).map_err(|e| PotentialError::Io(e.to_string()))?;
        let law = CouplingLaw::from_file(file.law)?;
        let edge_laws = file
            .edge_laws
            .into_iter()
            .map(|(k, v)| Ok((k, CouplingLaw::from_file(v)?)))
            .collect::<Result<_, PotentialError>>()?;
        let sites = match file.sites {
            SitesFile::Keyword(k) if k == "default" => Sites::Unit,
            SitesFile::Keyword(k) => {
                return Err(PotentialError::Io(format!("unknown sites keyword `{k}`")))
            }
            SitesFile::Template { template } => Sites::Template(template),
            SitesFile::List(entries) => {
                let mut map = BTreeMap::new();
                for entry in entries {
                    let (a, b) = (entry.support[0], entry.support[1]);
                    let profile = match entry.profile {
                        Some(segs) => PiecewiseConstant::new(segs)?,
                        None => {
                            return Err(PotentialError::Io(format!(
                                "site `{}` needs an explicit profile",
                                entry.edge
                            )))
                        }
                    };
                    map.insert(
                        entry.edge.clone(),
                        SingleSitePotential {
                            edge: entry.edge,
                            support: (a, b),
                            profile,
                            c_minus: entry.c_minus,
                            c_plus: entry.c_plus,
                        },
                    );
                }
                Sites::PerEdge(map)
            }
        };
        Ok(Self {
            law,
            edge_laws,
            sites,
            s: file.s.unwrap_or(0.0),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PotentialError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PotentialError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Canonical JSON form; also used for config hashing.
    pub fn to_json(&self) -> String {
        let sites = match &self.sites {
            Sites::Unit => SitesFile::Keyword("default".into()),
            Sites::Template(t) => SitesFile::Template { template: t.clone() },
            Sites::PerEdge(map) => SitesFile::List(
                map.values()
                    .map(|s| SiteEntry {
                        edge: s.edge.clone(),
                        support: [s.support.0, s.support.1],
                        profile: Some(s.profile.clone().into()),
                        c_minus: s.c_minus,
                        c_plus: s.c_plus,
                    })
                    .collect(),
            ),
        };
        let file = AlloyFile {
            law: self.law.to_file(),
            edge_laws: self.edge_laws.iter().map(|(k, v)| (k.clone(), v.to_file())).collect(),
            sites,
            s: Some(self.s),
        };
        serde_json::to_string(&file).expect("alloy config serializes")
    }
}

fn check_site(site: &SingleSitePotential, edge: &Edge, s: f64, out: &mut Vec<Violation>) {
    let id = edge.id.clone();
    let (a, b) = site.support;
    let tol = 1e-12 * edge.length.max(1.0);
    if a < -tol || b > edge.length + tol || !(a <= b) {
        out.push(Violation::ProfileOutOfBounds {
            edge: id.clone(),
            detail: format!("support [{a}, {b}] not inside [0, {}]", edge.length),
        });
    }
    if site.support_length() < s - tol {
        out.push(Violation::SupportTooShort {
            edge: id.clone(),
            length: site.support_length(),
            s,
        });
    }
    if !(site.c_minus > 0.0) || site.c_minus > site.c_plus {
        out.push(Violation::CouplingBoundNotPositive {
            edge: id.clone(),
            c_minus: site.c_minus,
            c_plus: site.c_plus,
        });
    }
    if (site.profile.start()).abs() > tol || (site.profile.end() - edge.length).abs() > tol {
        out.push(Violation::ProfileOutOfBounds {
            edge: id.clone(),
            detail: format!(
                "profile covers [{}, {}], expected [0, {}]",
                site.profile.start(),
                site.profile.end(),
                edge.length
            ),
        });
    }
    if site.profile.min_value() < 0.0 || site.profile.max_value() > site.c_plus + BOUND_TOL {
        out.push(Violation::ProfileOutOfBounds {
            edge: id.clone(),
            detail: format!(
                "profile range [{}, {}] not within [0, c_plus = {}]",
                site.profile.min_value(),
                site.profile.max_value(),
                site.c_plus
            ),
        });
    }
    if a < b && site.profile.min_on(a, b) < site.c_minus - BOUND_TOL {
        out.push(Violation::ProfileOutOfBounds {
            edge: id,
            detail: format!(
                "profile drops to {} on the support, below c_minus = {}",
                site.profile.min_on(a, b),
                site.c_minus
            ),
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    MissingEdgeEntry { edge: String },
    SupportTooShort { edge: String, length: f64, s: f64 },
    ProfileOutOfBounds { edge: String, detail: String },
    CouplingBoundNotPositive { edge: String, c_minus: f64, c_plus: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingEdgeEntry { edge } => write!(f, "MissingEdgeEntry({edge})"),
            Violation::SupportTooShort { edge, length, s } => {
                write!(f, "SupportTooShort({edge}: |S_e| = {length} < s = {s})")
            }
            Violation::ProfileOutOfBounds { edge, detail } => {
                write!(f, "ProfileOutOfBounds({edge}: {detail})")
            }
            Violation::CouplingBoundNotPositive { edge, c_minus, c_plus } => write!(
                f,
                "CouplingBoundNotPositive({edge}: need 0 < c_minus = {c_minus} <= c_plus = {c_plus})"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<(), PotentialError> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(PotentialError::Invalid(self))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        write!(f, "{}", items.join("; "))
    }
}

/// Free-function form of [`AlloyConfig::validate`].
pub fn validate_alloy_config(config: &AlloyConfig, view: &SubgraphView) -> ValidationReport {
    config.validate(view)
}

/// One realization ω = (ω_e).
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderSample {
    omega: BTreeMap<String, f64>,
    provenance: Option<(u64, u64)>,
}

impl DisorderSample {
    /// A hand-built realization without seed provenance.
    pub fn from_map(omega: BTreeMap<String, f64>) -> Self {
        Self {
            omega,
            provenance: None,
        }
    }

    /// The same value on every edge of `view`.
    pub fn constant(view: &SubgraphView, value: f64) -> Self {
        Self::from_map(view.lambda().iter().map(|id| (id.clone(), value)).collect())
    }

    pub fn get(&self, edge: &str) -> Option<f64> {
        self.omega.get(edge).copied()
    }

    pub fn omega(&self) -> &BTreeMap<String, f64> {
        &self.omega
    }

    /// `(master_seed, index)` for seeded samples.
    pub fn provenance(&self) -> Option<(u64, u64)> {
        self.provenance
    }

    pub fn with_value(&self, edge: &str, value: f64) -> Self {
        let mut omega = self.omega.clone();
        omega.insert(edge.to_string(), value);
        Self {
            omega,
            provenance: None,
        }
    }

    /// Re-keys every coupling through `map`; entries mapped to `None` are dropped.
    pub fn rekeyed(&self, map: impl Fn(&str) -> Option<String>) -> Self {
        Self {
            omega: self
                .omega
                .iter()
                .filter_map(|(k, v)| map(k).map(|k2| (k2, *v)))
                .collect(),
            provenance: self.provenance,
        }
    }
}

/// Draws ω for the edges of `view` from the substream `(master_seed, index)`.
///
/// One uniform variate is consumed per edge in canonical edge order and
/// pushed through the inverse CDF of that edge's law, so the result depends
/// only on the seed pair and the edge ids.
pub fn sample_disorder(
    config: &AlloyConfig,
    view: &SubgraphView,
    master_seed: u64,
    index: u64,
) -> DisorderSample {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    let omega = view
        .lambda()
        .iter()
        .map(|id| {
            let u: f64 = rng.random();
            (id.clone(), config.law_for(id).inverse_cdf(u))
        })
        .collect();
    DisorderSample {
        omega,
        provenance: Some((master_seed, index)),
    }
}

/// W(ω) at coordinate `x` of `edge`: ω_e·u_e(x).
pub fn potential_value(
    config: &AlloyConfig,
    sample: &DisorderSample,
    edge: &Edge,
    x: f64,
) -> Result<f64, PotentialError> {
    if !(0.0..=edge.length).contains(&x) {
        return Err(PotentialError::CoordinateOutOfRange {
            edge: edge.id.clone(),
            x,
            length: edge.length,
        });
    }
    let omega = sample
        .get(&edge.id)
        .ok_or_else(|| PotentialError::MissingCoupling(edge.id.clone()))?;
    if omega == 0.0 {
        return Ok(0.0);
    }
    Ok(omega * config.site_for(edge)?.profile.value_at(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::MetricGraph;
    use std::sync::Arc;

    fn unit_edge_view() -> SubgraphView {
        let g = Arc::new(MetricGraph::new(["a", "b"], vec![Edge::new("e", "a", "b", 1.0)], 0.5, 2.0).unwrap());
        g.full_view()
    }

    fn per_edge(site: SingleSitePotential, s: f64) -> AlloyConfig {
        let mut map = BTreeMap::new();
        map.insert(site.edge.clone(), site);
        AlloyConfig::new(CouplingLaw::uniform(0.0, 1.0).unwrap(), Sites::PerEdge(map), s)
    }

    #[test]
    fn constant_profile_is_valid() {
        let view = unit_edge_view();
        let cfg = AlloyConfig::unit_uniform(0.0, 1.0).unwrap();
        assert!(cfg.validate(&view).is_valid());
    }

    #[test]
    fn short_support_rejected() {
        let view = unit_edge_view();
        let site = SingleSitePotential {
            edge: "e".into(),
            support: (0.0, 0.4),
            profile: PiecewiseConstant::indicator(1.0, 0.0, 0.4, 1.0),
            c_minus: 1.0,
            c_plus: 1.0,
        };
        let report = per_edge(site, 0.5).validate(&view);
        assert!(matches!(report.violations[..], [Violation::SupportTooShort { .. }]));
    }

    #[test]
    fn profile_above_c_plus_rejected() {
        let view = unit_edge_view();
        let site = SingleSitePotential {
            edge: "e".into(),
            support: (0.0, 1.0),
            profile: PiecewiseConstant::constant(0.0, 1.0, 1.2),
            c_minus: 1.0,
            c_plus: 1.0,
        };
        let report = per_edge(site, 0.5).validate(&view);
        assert!(matches!(report.violations[..], [Violation::ProfileOutOfBounds { .. }]));
    }

    #[test]
    fn missing_entry_and_zero_lower_bound() {
        let view = unit_edge_view();
        let cfg = AlloyConfig::new(
            CouplingLaw::uniform(0.0, 1.0).unwrap(),
            Sites::PerEdge(BTreeMap::new()),
            0.0,
        );
        assert!(matches!(
            cfg.validate(&view).violations[..],
            [Violation::MissingEdgeEntry { .. }]
        ));

        let zero = SingleSitePotential {
            edge: "e".into(),
            support: (0.0, 1.0),
            profile: PiecewiseConstant::constant(0.0, 1.0, 0.0),
            c_minus: 0.0,
            c_plus: 1.0,
        };
        let report = per_edge(zero, 0.0).validate(&view);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::CouplingBoundNotPositive { .. })));
    }

    #[test]
    fn sampling_is_deterministic_and_in_range() {
        let view = unit_edge_view();
        let cfg = AlloyConfig::unit_uniform(0.0, 1.0).unwrap();
        let a = sample_disorder(&cfg, &view, 7, 3);
        let b = sample_disorder(&cfg, &view, 7, 3);
        assert_eq!(a, b);
        assert_eq!(a.provenance(), Some((7, 3)));
        let c = sample_disorder(&cfg, &view, 7, 4);
        assert_ne!(a.get("e"), c.get("e"));
        for i in 0..200 {
            let w = sample_disorder(&cfg, &view, 1, i).get("e").unwrap();
            assert!((0.0..=1.0).contains(&w));
        }
    }

    #[test]
    fn potential_values() {
        let view = unit_edge_view();
        let edge = view.edge("e").unwrap().clone();
        let cfg = AlloyConfig::unit_uniform(0.0, 1.0).unwrap();
        let zero = DisorderSample::constant(&view, 0.0);
        assert_eq!(potential_value(&cfg, &zero, &edge, 0.3).unwrap(), 0.0);
        let s = DisorderSample::constant(&view, 0.7);
        for x in [0.0, 0.25, 1.0] {
            assert_eq!(potential_value(&cfg, &s, &edge, x).unwrap(), 0.7);
        }
        let half = per_edge(
            SingleSitePotential {
                edge: "e".into(),
                support: (0.0, 0.5),
                profile: PiecewiseConstant::indicator(1.0, 0.0, 0.5, 1.0),
                c_minus: 1.0,
                c_plus: 1.0,
            },
            0.0,
        );
        let one = DisorderSample::constant(&view, 1.0);
        assert_eq!(potential_value(&half, &one, &edge, 0.75).unwrap(), 0.0);
        assert_eq!(potential_value(&half, &one, &edge, 0.25).unwrap(), 1.0);
        assert!(matches!(
            potential_value(&half, &one, &edge, 1.5),
            Err(PotentialError::CoordinateOutOfRange { .. })
        ));
    }

    #[test]
    fn inverse_cdf_of_two_step_density() {
        let density = PiecewiseConstant::new(vec![
            Segment { from: 0.0, to: 0.5, value: 1.5 },
            Segment { from: 0.5, to: 1.0, value: 0.5 },
        ])
        .unwrap();
        let law = CouplingLaw::with_density(0.0, 1.0, density, None).unwrap();
        assert_eq!(law.c_g(), 1.5);
        assert!((law.inverse_cdf(0.75) - 0.5).abs() < 1e-15);
        assert!((law.cdf(law.inverse_cdf(0.3)) - 0.3).abs() < 1e-14);
        assert!((law.cdf(law.inverse_cdf(0.9)) - 0.9).abs() < 1e-14);
        assert!((law.mean() - (1.5 * 0.125 + 0.5 * 0.375)).abs() < 1e-15);
    }

    #[test]
    fn bad_density_rejected() {
        let density = PiecewiseConstant::constant(0.0, 1.0, 2.0);
        assert!(CouplingLaw::with_density(0.0, 1.0, density, None).is_err());
    }

    #[test]
    fn alloy_json_forms() {
        let text = r#"{"law": {"omega_minus": 0, "omega_plus": 2}, "sites": "default"}"#;
        let cfg = AlloyConfig::from_json(text).unwrap();
        assert_eq!(cfg.potential_bound(), 2.0);
        assert_eq!(AlloyConfig::from_json(&cfg.to_json()).unwrap(), cfg);

        let text = r#"{"law": {"omega_minus": 0, "omega_plus": 1,
            "density": [{"from": 0, "to": 1, "value": 1}], "c_g": 1},
            "sites": {"template": {"support": [0.25, 0.75]}}, "s": 0.5}"#;
        let cfg = AlloyConfig::from_json(text).unwrap();
        assert!(matches!(cfg.sites(), Sites::Template(_)));
        assert_eq!(AlloyConfig::from_json(&cfg.to_json()).unwrap(), cfg);

        let text = r#"{"law": {"omega_minus": 0, "omega_plus": 1},
            "sites": [{"edge": "e", "support": [0, 0.5],
                       "profile": [{"from": 0, "to": 0.5, "value": 1}, {"from": 0.5, "to": 1, "value": 0}]}]}"#;
        let cfg = AlloyConfig::from_json(text).unwrap();
        assert!(cfg.validate(&unit_edge_view()).is_valid());
        assert_eq!(AlloyConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}
