//! The threat screening game: categories, teams, utilities and the per-category
//! risk polytopes that bound the defender's worst-case detection utility.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::projection::{nonnegativity_rows, Polytope, ProjectionError};
use crate::rng::{stream, Stream};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("risk threshold unattainable for category {category} (method {method:?}): {reason}")]
    InfeasibleRisk { category: Category, method: Option<usize>, reason: String },
    #[error("requested {requested} distinct two-resource teams but only {available} exist")]
    TooManyTeams { requested: usize, available: usize },
    #[error("invalid instance: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskLevel {
    pub prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flight {
    pub departure_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resource {
    /// Passengers screened per minute.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Team {
    pub resources: Vec<usize>,
    /// Detection probability per attack method.
    pub efficacy: Vec<f64>,
}

/// Defender utilities indexed `[flight][method]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utilities {
    #[serde(rename = "U_plus")]
    pub plus: Vec<Vec<f64>>,
    #[serde(rename = "U_minus")]
    pub minus: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameInstance {
    pub num_methods: usize,
    pub risk_levels: Vec<RiskLevel>,
    pub flights: Vec<Flight>,
    pub resources: Vec<Resource>,
    pub teams: Vec<Team>,
    pub utilities: Utilities,
    pub risk_thresholds: Vec<f64>,
}

/// Passenger category `⟨θ, κ⟩`: risk level and flight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Category {
    pub theta: usize,
    pub kappa: usize,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<θ{}, κ{}>", self.theta, self.kappa)
    }
}

impl GameInstance {
    pub fn num_risk_levels(&self) -> usize {
        self.risk_levels.len()
    }

    pub fn num_flights(&self) -> usize {
        self.flights.len()
    }

    pub fn num_resources(&self) -> usize {
        self.resources.len()
    }

    pub fn num_teams(&self) -> usize {
        self.teams.len()
    }

    pub fn num_categories(&self) -> usize {
        self.risk_levels.len() * self.flights.len()
    }

    /// Categories are laid out risk-level major: `c = θ·|K| + κ`.
    pub fn category(&self, index: usize) -> Category {
        let k = self.flights.len();
        Category { theta: index / k, kappa: index % k }
    }

    pub fn category_index(&self, c: Category) -> usize {
        c.theta * self.flights.len() + c.kappa
    }

    pub fn categories(&self) -> impl Iterator<Item = Category> + '_ {
        (0..self.num_categories()).map(|i| self.category(i))
    }

    pub fn priors(&self) -> Vec<f64> {
        self.risk_levels.iter().map(|r| r.prior).collect()
    }

    pub fn rates(&self) -> Vec<f64> {
        self.resources.iter().map(|r| r.rate).collect()
    }

    pub fn efficacy(&self, team: usize, method: usize) -> f64 {
        self.teams[team].efficacy[method]
    }

    /// Same game with different risk thresholds.
    pub fn with_thresholds(&self, thresholds: Vec<f64>) -> GameInstance {
        GameInstance { risk_thresholds: thresholds, ..self.clone() }
    }

    /// Thresholds loose enough that every allocation satisfies them.
    pub fn vacuous_thresholds(&self) -> Vec<f64> {
        let worst = self.utilities.minus.iter().flatten().fold(0.0f64, |acc, u| acc.max(-u));
        self.risk_levels.iter().map(|r| r.prior * worst).collect()
    }

    /// Minimum detection probability `z̄` required against method `m` for
    /// category `c`, from `P_θ[z U⁺ + (1 − z) U⁻] >= −ψ_θ`.
    pub fn required_detection(&self, c: Category, m: usize) -> f64 {
        let p = self.risk_levels[c.theta].prior;
        let psi = self.risk_thresholds[c.theta];
        let up = self.utilities.plus[c.kappa][m];
        let um = self.utilities.minus[c.kappa][m];
        (-psi / p - um) / (up - um)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self).expect("instance serialises");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return write!(f, "valid");
        }
        write!(f, "{}", self.issues.join("; "))
    }
}

/// Checks the structural invariants of an instance.
pub fn validate_instance(inst: &GameInstance) -> ValidationReport {
    let mut issues = Vec::new();
    let m = inst.num_methods;
    let k = inst.flights.len();

    if m == 0 {
        issues.push("no attack methods".to_string());
    }
    if inst.risk_levels.is_empty() {
        issues.push("no risk levels".to_string());
    }
    if k == 0 {
        issues.push("no flights".to_string());
    }
    if inst.teams.is_empty() {
        issues.push("no teams".to_string());
    }
    let total: f64 = inst.risk_levels.iter().map(|r| r.prior).sum();
    if (total - 1.0).abs() > 1e-9 {
        issues.push(format!("prior sums to {total}"));
    }
    for (i, r) in inst.risk_levels.iter().enumerate() {
        if !(r.prior > 0.0) {
            issues.push(format!("prior of risk level {i} is {} (must be > 0)", r.prior));
        }
    }
    for (i, r) in inst.resources.iter().enumerate() {
        if !(r.rate > 0.0) || !r.rate.is_finite() {
            issues.push(format!("resource {i} has rate {} (must be > 0)", r.rate));
        }
    }
    for (i, f) in inst.flights.iter().enumerate() {
        if !f.departure_min.is_finite() {
            issues.push(format!("flight {i} has non-finite departure"));
        }
    }
    for (t, team) in inst.teams.iter().enumerate() {
        if team.resources.is_empty() {
            issues.push(format!("team {t} is empty"));
        }
        if let Some(r) = team.resources.iter().find(|&&r| r >= inst.resources.len()) {
            issues.push(format!("team {t} references unknown resource {r}"));
        }
        if team.efficacy.len() != m {
            issues.push(format!("team {t} has {} efficacies, expected {m}", team.efficacy.len()));
        }
        if let Some(e) = team.efficacy.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            issues.push(format!("team {t} efficacy {e} outside [0, 1]"));
        }
    }
    let u = &inst.utilities;
    if u.plus.len() != k || u.minus.len() != k {
        issues.push(format!("utilities must have one row per flight ({k})"));
    } else {
        for kappa in 0..k {
            if u.plus[kappa].len() != m || u.minus[kappa].len() != m {
                issues.push(format!("utilities of flight {kappa} must have {m} entries"));
                continue;
            }
            for mm in 0..m {
                let (p, n) = (u.plus[kappa][mm], u.minus[kappa][mm]);
                if !(p > n) || !p.is_finite() || !n.is_finite() {
                    issues.push(format!("degenerate utility pair at flight {kappa}, method {mm}: U+ = {p}, U- = {n}"));
                }
            }
        }
    }
    if inst.risk_thresholds.len() != inst.risk_levels.len() {
        issues.push(format!(
            "{} risk thresholds for {} risk levels",
            inst.risk_thresholds.len(),
            inst.risk_levels.len()
        ));
    }
    if let Some(psi) = inst.risk_thresholds.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        issues.push(format!("risk threshold {psi} must be finite and >= 0"));
    }
    ValidationReport { issues }
}

/// Counts and ranges for random instance generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    pub num_methods: usize,
    pub num_risk_levels: usize,
    pub num_resources: usize,
    pub num_teams: usize,
    pub num_flights: usize,
    /// Attacker success utility is drawn uniformly from this range.
    pub attacker_utility: (f64, f64),
    /// Screening rates (passengers per minute) drawn uniformly from this range.
    pub rate_range: (f64, f64),
    /// Flight departure times; a synthetic two-peak day is used when absent.
    pub departures: Option<Vec<f64>>,
    /// Risk-level prior; uniform when absent.
    pub priors: Option<Vec<f64>>,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            num_methods: 3,
            num_risk_levels: 5,
            num_resources: 5,
            num_teams: 10,
            num_flights: 10,
            attacker_utility: (1.0, 10.0),
            rate_range: (0.25, 0.5),
            departures: None,
            priors: None,
        }
    }
}

/// Detection probability of a team whose members detect independently.
pub fn combined_efficacy(member_efficacies: &[f64]) -> f64 {
    1.0 - member_efficacies.iter().map(|e| 1.0 - e).product::<f64>()
}

/// Draws a random instance. Identical seeds give identical instances.
pub fn sample_instance(cfg: &InstanceConfig, seed: u64) -> Result<GameInstance, GameError> {
    let available = cfg.num_resources * cfg.num_resources.saturating_sub(1) / 2;
    if cfg.num_teams > available {
        return Err(GameError::TooManyTeams { requested: cfg.num_teams, available });
    }
    let mut rng = stream(seed, Stream::Instance);
    let m = cfg.num_methods;

    let (lo, hi) = cfg.attacker_utility;
    let mut plus = Vec::with_capacity(cfg.num_flights);
    let mut minus = Vec::with_capacity(cfg.num_flights);
    for _ in 0..cfg.num_flights {
        let row: Vec<f64> = (0..m).map(|_| -rng.random_range(lo..=hi)).collect();
        plus.push(vec![0.0; m]);
        minus.push(row);
    }

    let resource_eff: Vec<Vec<f64>> = (0..cfg.num_resources).map(|_| (0..m).map(|_| rng.random::<f64>()).collect()).collect();
    let (rlo, rhi) = cfg.rate_range;
    let resources: Vec<Resource> = (0..cfg.num_resources).map(|_| Resource { rate: rng.random_range(rlo..=rhi) }).collect();

    let mut pairs: Vec<(usize, usize)> = (0..cfg.num_resources)
        .flat_map(|a| ((a + 1)..cfg.num_resources).map(move |b| (a, b)))
        .collect();
    pairs.shuffle(&mut rng);
    let mut chosen: Vec<(usize, usize)> = pairs.into_iter().take(cfg.num_teams).collect();
    chosen.sort_unstable();
    let teams = chosen
        .into_iter()
        .map(|(a, b)| Team {
            resources: vec![a, b],
            efficacy: (0..m).map(|mm| combined_efficacy(&[resource_eff[a][mm], resource_eff[b][mm]])).collect(),
        })
        .collect();

    let departures = match &cfg.departures {
        Some(d) => d.clone(),
        None => synthetic_departures(cfg.num_flights, &mut rng),
    };
    let flights = departures.into_iter().map(|departure_min| Flight { departure_min }).collect();

    let priors = cfg.priors.clone().unwrap_or_else(|| vec![1.0 / cfg.num_risk_levels as f64; cfg.num_risk_levels]);
    let risk_levels = priors.into_iter().map(|prior| RiskLevel { prior }).collect();

    let mut inst = GameInstance {
        num_methods: m,
        risk_levels,
        flights,
        resources,
        teams,
        utilities: Utilities { plus, minus },
        risk_thresholds: Vec::new(),
    };
    inst.risk_thresholds = inst.vacuous_thresholds();
    Ok(inst)
}

/// Departure times with a morning and an evening bank, sorted.
pub fn synthetic_departures<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let (centre, spread) = if i % 2 == 0 { (8.0 * 60.0, 90.0) } else { (18.0 * 60.0, 120.0) };
            let off: f64 = rng.random_range(-1.0..=1.0);
            (centre + off * spread).round()
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// `z_m = Σ_t E_{t,m} π_t`.
pub fn detection_prob(inst: &GameInstance, action: &[f64], method: usize) -> f64 {
    inst.teams.iter().zip(action).map(|(t, p)| t.efficacy[method] * p).sum()
}

/// Expected defender utility against attack `⟨κ, m⟩`.
pub fn defender_utility(inst: &GameInstance, action: &[f64], kappa: usize, method: usize) -> f64 {
    let z = detection_prob(inst, action, method);
    z * inst.utilities.plus[kappa][method] + (1.0 - z) * inst.utilities.minus[kappa][method]
}

/// Worst case over methods for a single category's allocation.
pub fn worst_case_utility(inst: &GameInstance, action: &[f64], kappa: usize) -> f64 {
    (0..inst.num_methods).map(|m| defender_utility(inst, action, kappa, m)).fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    /// `U_θ = min_{κ,m} U_{κ,m}` per risk level.
    pub per_level: Vec<f64>,
    /// `Σ_θ P_θ U_θ`.
    pub total: f64,
}

/// Worst-case utilities given one allocation per category.
pub fn risk_profile(inst: &GameInstance, actions: &[Vec<f64>]) -> RiskProfile {
    let mut per_level = vec![f64::INFINITY; inst.num_risk_levels()];
    for (idx, action) in actions.iter().enumerate().take(inst.num_categories()) {
        let c = inst.category(idx);
        let u = worst_case_utility(inst, action, c.kappa);
        per_level[c.theta] = per_level[c.theta].min(u);
    }
    let total = per_level.iter().zip(&inst.risk_levels).map(|(u, r)| r.prior * u).sum();
    RiskProfile { per_level, total }
}

/// Compiles the risk constraints of category `c` into `A·π <= b` form.
///
/// Each method contributes `−Σ_t E_{t,m} π_t <= −z̄_{c,m}`; rows with
/// `z̄ <= 0` are vacuous and dropped. Non-negativity rows `−π_t <= 0` are
/// always present. The anchor is the Chebyshev centre on the simplex.
pub fn build_polytope(inst: &GameInstance, c: Category) -> Result<Polytope, GameError> {
    let n = inst.num_teams();
    let (mut rows, mut bounds) = (Vec::new(), Vec::new());
    for m in 0..inst.num_methods {
        let zbar = inst.required_detection(c, m);
        if zbar <= 0.0 {
            continue;
        }
        let best = inst.teams.iter().map(|t| t.efficacy[m]).fold(f64::NEG_INFINITY, f64::max);
        if zbar > best {
            return Err(GameError::InfeasibleRisk {
                category: c,
                method: Some(m),
                reason: format!("requires detection {zbar:.6} but the best team reaches {best:.6}"),
            });
        }
        rows.push(inst.teams.iter().map(|t| -t.efficacy[m]).collect());
        bounds.push(-zbar);
    }
    let (nn_rows, nn_bounds) = nonnegativity_rows(n);
    rows.extend(nn_rows);
    bounds.extend(nn_bounds);
    Polytope::new(n, rows, bounds).map_err(|e| match e {
        ProjectionError::EmptyInterior { radius } => GameError::InfeasibleRisk {
            category: c,
            method: None,
            reason: format!("feasible allocations have no interior (chebyshev radius {radius:e})"),
        },
        other => GameError::InfeasibleRisk { category: c, method: None, reason: other.to_string() },
    })
}

/// One polytope per category, in category-index order.
pub fn build_polytopes(inst: &GameInstance) -> Result<Vec<Polytope>, GameError> {
    inst.categories().map(|c| build_polytope(inst, c)).collect()
}
