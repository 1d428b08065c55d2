//! Optimal user-choice schedules under a capacity constraint.
//!
//! The solution has a closed form in terms of the virtual functions: below
//! the marginal user the choice is the dummy class `q = 1`; above it the
//! choice is the extended inverse of the virtual capacity at
//! `G(θ)/μ`, where the shadow price `μ` is pinned down by the capacity
//! equation (fixed capacity) or by the marginal investment cost at the
//! consumption fixed point (variable capacity). Both conditions are monotone
//! in their unknown, so a single bracketed bisection resolves each scenario.

use crate::error::{Error, Result};
use crate::numerics::integrate_with_breakpoints;
use crate::primitives::{Extended, VirtualFunctions};

use std::fmt;
use std::sync::Arc;

/// Residual tolerance on the capacity equation and the consumption fixed
/// point.
pub const CAPACITY_RESIDUAL_TOL: f64 = 1e-8;

/// Initial lower bracket for the shadow price.
const MU_FLOOR: f64 = 1e-12;

/// Bracket expansion beyond this signals an inadmissible model.
const MU_CEILING: f64 = 1e9;

/// Consumption cap used when the abundance threshold is unbounded.
const CONSUMPTION_CAP: f64 = 1e6;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

// ---------------------------------------------------------------------------
// Capacity regimes and cost functions
// ---------------------------------------------------------------------------

/// Investment cost of total capacity consumption, with its derivative.
#[derive(Clone)]
pub struct CostFunction {
    kind: CostKind,
}

#[derive(Clone)]
enum CostKind {
    Linear {
        rate: f64,
    },
    /// Zero up to `base`, then `steepness·(c − base)²`: an existing network
    /// of size `base` plus quadratic expansion costs.
    FlatThenQuadratic {
        base: f64,
        steepness: f64,
    },
    Custom {
        cost: RealFn,
        marginal: RealFn,
    },
}

impl fmt::Debug for CostFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            CostKind::Linear { rate } => write!(f, "CostFunction::linear({rate})"),
            CostKind::FlatThenQuadratic { base, steepness } => {
                write!(f, "CostFunction::flat_then_quadratic({base}, {steepness})")
            }
            CostKind::Custom { .. } => write!(f, "CostFunction::custom"),
        }
    }
}

impl CostFunction {
    pub fn linear(rate: f64) -> Result<Self> {
        if !(rate >= 0.0) {
            return Err(Error::invalid(format!("cost rate must be >= 0, got {rate}")));
        }
        Ok(CostFunction {
            kind: CostKind::Linear { rate },
        })
    }

    pub fn flat_then_quadratic(base: f64, steepness: f64) -> Result<Self> {
        if !(base >= 0.0) || !(steepness >= 0.0) {
            return Err(Error::invalid(format!(
                "cost family parameters must be >= 0, got base {base}, steepness {steepness}"
            )));
        }
        Ok(CostFunction {
            kind: CostKind::FlatThenQuadratic { base, steepness },
        })
    }

    pub fn custom(
        cost: impl Fn(f64) -> f64 + Send + Sync + 'static,
        marginal: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CostFunction {
            kind: CostKind::Custom {
                cost: Arc::new(cost),
                marginal: Arc::new(marginal),
            },
        }
    }

    pub fn cost(&self, c: f64) -> f64 {
        match &self.kind {
            CostKind::Linear { rate } => rate * c,
            CostKind::FlatThenQuadratic { base, steepness } => {
                if c <= *base {
                    0.0
                } else {
                    steepness * (c - base) * (c - base)
                }
            }
            CostKind::Custom { cost, .. } => cost(c),
        }
    }

    pub fn marginal(&self, c: f64) -> f64 {
        match &self.kind {
            CostKind::Linear { rate } => *rate,
            CostKind::FlatThenQuadratic { base, steepness } => {
                if c <= *base {
                    0.0
                } else {
                    2.0 * steepness * (c - base)
                }
            }
            CostKind::Custom { marginal, .. } => marginal(c),
        }
    }

    /// Spot-check convexity, monotonicity and `S(0) = 0` on a grid over
    /// `[0, hi]`.
    fn validate_on(&self, hi: f64) -> Result<()> {
        let s0 = self.cost(0.0);
        if s0.abs() > 1e-12 {
            return Err(Error::assumption(
                "cost normalization",
                format!("S(0) = {s0}, expected 0"),
            ));
        }
        if !(hi > 0.0) {
            return Ok(());
        }
        let n = 256;
        let vals: Vec<f64> = (0..=n).map(|i| self.cost(hi * i as f64 / n as f64)).collect();
        let scale = vals.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for i in 1..=n {
            if vals[i] < vals[i - 1] - 1e-12 * scale {
                return Err(Error::assumption(
                    "cost monotonicity",
                    format!("cost decreases near c = {}", hi * i as f64 / n as f64),
                ));
            }
        }
        for i in 0..=(n - 2) {
            let mid = vals[i + 1];
            let avg = 0.5 * (vals[i] + vals[i + 2]);
            if mid > avg + 1e-9 * scale {
                return Err(Error::assumption(
                    "cost convexity",
                    format!(
                        "midpoint inequality fails near c = {}",
                        hi * (i + 1) as f64 / n as f64
                    ),
                ));
            }
        }
        Ok(())
    }
}

/// The two capacity scenarios a market can be solved under.
#[derive(Clone, Debug)]
pub enum CapacityRegime {
    Fixed { max_capacity: f64 },
    Variable { cost: CostFunction },
}

// ---------------------------------------------------------------------------
// Choice schedule
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// The capacity constraint binds; the schedule is graded by type.
    Interior,
    /// Capacity is abundant: one class at `q = 0` serves every type above
    /// the virtual valuation zero.
    SingleClassAbundant,
}

/// The solved user-choice schedule `θ ↦ q*(θ)` and its market constants.
#[derive(Clone, Debug)]
pub struct ChoiceSchedule {
    regime: Regime,
    shadow_price: f64,
    marginal_user: f64,
    bunching_onset: f64,
    total_consumption: f64,
    virtuals: VirtualFunctions,
}

impl ChoiceSchedule {
    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// Shadow price of capacity; for the variable scenario, the marginal
    /// cost at the optimal consumption level.
    pub fn shadow_price(&self) -> f64 {
        self.shadow_price
    }

    /// Lowest type that subscribes; everyone below takes the dummy class.
    pub fn marginal_user(&self) -> f64 {
        self.marginal_user
    }

    /// Type above which all users pool at the best class `q = 0`.
    /// Equals 1 when every subscriber is strictly differentiated.
    pub fn bunching_onset(&self) -> f64 {
        self.bunching_onset
    }

    /// Total capacity consumed by the schedule.
    pub fn total_consumption(&self) -> f64 {
        self.total_consumption
    }

    pub fn virtuals(&self) -> &VirtualFunctions {
        &self.virtuals
    }

    /// The chosen congestion level of type `theta`.
    pub fn choice(&self, theta: f64) -> f64 {
        match self.regime {
            Regime::SingleClassAbundant => {
                if theta < self.marginal_user {
                    1.0
                } else {
                    0.0
                }
            }
            Regime::Interior => {
                if theta < self.marginal_user {
                    1.0
                } else {
                    let z = self.virtuals.virtual_value(theta) / self.shadow_price;
                    self.virtuals.virtual_capacity_inv(z)
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Solvers
// ---------------------------------------------------------------------------

/// Capacity level beyond which the constraint never binds:
/// `(1 − F(θ₀))·w(0)`, infinite when `w(0)` is.
pub fn abundance_threshold(virtuals: &VirtualFunctions) -> Extended {
    let w0 = virtuals.quality().unit_capacity(0.0);
    if !w0.is_finite() {
        return Extended::Infinite;
    }
    let mass = 1.0 - virtuals.distribution().cdf(virtuals.virtual_zero());
    Extended::Finite(mass * w0)
}

/// Total capacity consumed by the schedule induced by shadow price `mu`.
fn consumption_at(virtuals: &VirtualFunctions, mu: f64) -> f64 {
    let quad_tol = virtuals.config().quad_tol;
    if mu <= 0.0 {
        return abundance_threshold(virtuals).as_f64();
    }
    let marginal_user = virtuals.virtual_value_inv(mu * virtuals.virtual_capacity_at_one());
    let onset = bunching_onset_at(virtuals, mu);
    let dist = virtuals.distribution();
    let quality = virtuals.quality();
    let inner = integrate_with_breakpoints(
        |t| {
            let q = virtuals.virtual_capacity_inv(virtuals.virtual_value(t) / mu);
            quality.unit_capacity(q) * dist.density(t)
        },
        marginal_user,
        onset,
        &[],
        quad_tol,
    );
    let pooled = if onset < 1.0 {
        quality.unit_capacity(0.0) * (1.0 - dist.cdf(onset))
    } else {
        0.0
    };
    inner + pooled
}

fn bunching_onset_at(virtuals: &VirtualFunctions, mu: f64) -> f64 {
    match virtuals.virtual_capacity_at_zero() {
        Extended::Finite(h0) => virtuals.virtual_value_inv(mu * h0).min(1.0),
        Extended::Infinite => 1.0,
    }
}

/// Solve the fixed-capacity scenario.
///
/// Below the abundance threshold the shadow price is found by bisection on
/// the capacity equation, which is monotone in `mu`; at or above it the
/// single-class schedule applies with `mu = 0`.
pub fn solve_fixed(virtuals: &VirtualFunctions, max_capacity: f64) -> Result<ChoiceSchedule> {
    if !(max_capacity > 0.0) || !max_capacity.is_finite() {
        return Err(Error::invalid(format!(
            "capacity must be positive and finite, got {max_capacity}"
        )));
    }
    let cbar = abundance_threshold(virtuals);
    if !cbar.exceeds(max_capacity) {
        return Ok(abundant_schedule(virtuals));
    }

    let residual = |mu: f64| consumption_at(virtuals, mu) - max_capacity;

    let mut lo = MU_FLOOR;
    let r_lo = residual(lo);
    if r_lo <= 0.0 {
        // Capacity is within a hair of the abundance threshold; the
        // vanishing shadow price already satisfies the capacity equation.
        return Ok(interior_schedule(virtuals, lo));
    }
    let mut hi = 1.0;
    let mut r_hi = residual(hi);
    while r_hi > 0.0 {
        hi *= 2.0;
        if hi > MU_CEILING {
            return Err(Error::NoSolution(format!(
                "shadow price bracket expansion exceeded {MU_CEILING}; \
                 the capacity equation has no root for C = {max_capacity}"
            )));
        }
        r_hi = residual(hi);
    }

    let mut best = (hi, r_hi.abs());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let r = residual(mid);
        if r.abs() < best.1 {
            best = (mid, r.abs());
        }
        if r.abs() <= CAPACITY_RESIDUAL_TOL {
            return Ok(interior_schedule(virtuals, mid));
        }
        if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    if best.1 <= CAPACITY_RESIDUAL_TOL {
        return Ok(interior_schedule(virtuals, best.0));
    }
    Err(Error::NoSolution(format!(
        "capacity equation residual {} did not reach {CAPACITY_RESIDUAL_TOL}",
        best.1
    )))
}

/// Solve the variable-capacity scenario: the consumption fixed point
/// `W = ∫ w(q*(θ; S′(W))) f(θ) dθ`, with the marginal cost playing the role
/// of the shadow price.
pub fn solve_variable(virtuals: &VirtualFunctions, cost: &CostFunction) -> Result<ChoiceSchedule> {
    let cbar = abundance_threshold(virtuals);
    let mut hi = match cbar {
        Extended::Finite(c) => c,
        Extended::Infinite => CONSUMPTION_CAP,
    };
    // Beyond the consumption level where the marginal cost reaches
    // G(1)/h(1), not even the top type subscribes.
    let vcap1 = virtuals.virtual_capacity_at_one();
    if vcap1 > 0.0 {
        let stop = virtuals.top_virtual_value() / vcap1;
        if cost.marginal(hi) > stop {
            if let Some(w) =
                crate::numerics::bisect(|c| cost.marginal(c) - stop, 0.0, hi, virtuals.config().root_tol)
            {
                hi = hi.min(w.max(1e-6));
            }
        }
    }
    cost.validate_on(hi)?;

    let gap = |w: f64| consumption_at(virtuals, cost.marginal(w)) - w;
    let mut lo = 0.0;
    let mut g_lo = gap(lo);
    if g_lo <= 0.0 {
        // Marginal cost at zero already chokes off all demand.
        return finish_variable(virtuals, cost, 0.0);
    }
    let mut g_hi = gap(hi);
    if g_hi > 0.0 {
        return Err(Error::NoSolution(format!(
            "no consumption fixed point in [0, {hi}]; marginal cost never \
             catches up with demand"
        )));
    }
    let mut best = (hi, g_hi.abs());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let g = gap(mid);
        if g.is_finite() && g.abs() < best.1 {
            best = (mid, g.abs());
        }
        if g.abs() <= CAPACITY_RESIDUAL_TOL {
            return finish_variable(virtuals, cost, mid);
        }
        if g > 0.0 {
            lo = mid;
            g_lo = g;
        } else {
            hi = mid;
            g_hi = g;
        }
        // A kink in S′ can make the residual arbitrarily steep; once the
        // bracket is at floating-point resolution the midpoint is the fixed
        // point to machine precision even if the residual granularity
        // exceeds the tolerance.
        if hi - lo <= 4.0 * f64::EPSILON * hi.max(1.0) {
            let w = if g_lo.abs() <= g_hi.abs() { lo } else { hi };
            return finish_variable(virtuals, cost, w);
        }
    }
    finish_variable(virtuals, cost, best.0)
}

fn finish_variable(
    virtuals: &VirtualFunctions,
    cost: &CostFunction,
    consumption: f64,
) -> Result<ChoiceSchedule> {
    let mu = cost.marginal(consumption);
    if mu <= 0.0 {
        return Ok(abundant_schedule(virtuals));
    }
    let mut sched = interior_schedule(virtuals, mu);
    sched.total_consumption = consumption;
    Ok(sched)
}

fn abundant_schedule(virtuals: &VirtualFunctions) -> ChoiceSchedule {
    let zero = virtuals.virtual_zero();
    ChoiceSchedule {
        regime: Regime::SingleClassAbundant,
        shadow_price: 0.0,
        marginal_user: zero,
        bunching_onset: zero,
        total_consumption: abundance_threshold(virtuals).as_f64(),
        virtuals: virtuals.clone(),
    }
}

fn interior_schedule(virtuals: &VirtualFunctions, mu: f64) -> ChoiceSchedule {
    ChoiceSchedule {
        regime: Regime::Interior,
        shadow_price: mu,
        marginal_user: virtuals.virtual_value_inv(mu * virtuals.virtual_capacity_at_one()),
        bunching_onset: bunching_onset_at(virtuals, mu),
        total_consumption: consumption_at(virtuals, mu),
        virtuals: virtuals.clone(),
    }
}

/// Dispatch on the capacity regime.
pub fn solve(virtuals: &VirtualFunctions, regime: &CapacityRegime) -> Result<ChoiceSchedule> {
    match regime {
        CapacityRegime::Fixed { max_capacity } => solve_fixed(virtuals, *max_capacity),
        CapacityRegime::Variable { cost } => solve_variable(virtuals, cost),
    }
}

/// Capacity level at which bunching first appears: consumption at the
/// shadow price `1/h(0)`. Unbounded `h(0)` means subscribers are always
/// strictly differentiated and the threshold is infinite.
pub fn bunching_threshold(virtuals: &VirtualFunctions) -> Extended {
    match virtuals.virtual_capacity_at_zero() {
        Extended::Infinite => Extended::Infinite,
        Extended::Finite(h0) => {
            // The top virtual value is 1 whenever F(1) = 1.
            let mu_hat = 1.0 / h0;
            Extended::Finite(consumption_at(virtuals, mu_hat))
        }
    }
}

/// Shadow prices along a grid of capacities, each strictly inside
/// `(0, abundance threshold)`.
pub fn shadow_price_curve(
    virtuals: &VirtualFunctions,
    capacities: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let cbar = abundance_threshold(virtuals);
    let mut out = Vec::with_capacity(capacities.len());
    for &c in capacities {
        if !(c > 0.0) || !cbar.exceeds(c) {
            return Err(Error::invalid(format!(
                "capacity {c} is not inside (0, {cbar})"
            )));
        }
        let sched = solve_fixed(virtuals, c)?;
        out.push((c, sched.shadow_price()));
    }
    Ok(out)
}
