//! Finite-menu market machinery: the threshold characterization of demand,
//! a grid-based choice simulation, the optimal single-class benchmark, and a
//! brute-force menu optimizer.
//!
//! This module deliberately avoids the virtual-function solution path: its
//! results come from the raw discrete objective (prices times demand masses
//! under the threshold partition), so they serve as an independent oracle
//! for the closed-form continuum solution.

use crate::error::{Error, Result};
use crate::numerics::golden_section_max;
use crate::primitives::{QualityModel, ValuationDistribution};

/// One offered class: a flat price for a promised congestion level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServiceClass {
    pub price: f64,
    pub congestion: f64,
}

/// A finite menu, ordered by descending price and ascending congestion.
/// The dummy opt-out class `(0, 1)` is implicit.
#[derive(Clone, Debug)]
pub struct ServiceMenu {
    classes: Vec<ServiceClass>,
}

impl ServiceMenu {
    pub fn new(classes: Vec<ServiceClass>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::invalid("menu must contain at least one class"));
        }
        for (i, c) in classes.iter().enumerate() {
            if !(c.price > 0.0) || !c.price.is_finite() {
                return Err(Error::invalid(format!(
                    "class {i} price must be positive, got {}",
                    c.price
                )));
            }
            if !(0.0..1.0).contains(&c.congestion) {
                return Err(Error::invalid(format!(
                    "class {i} congestion must lie in [0, 1), got {}",
                    c.congestion
                )));
            }
        }
        for i in 1..classes.len() {
            if classes[i].price >= classes[i - 1].price
                || classes[i].congestion <= classes[i - 1].congestion
            {
                return Err(Error::invalid(format!(
                    "classes must have strictly decreasing prices and strictly \
                     increasing congestion; violated between classes {} and {i}",
                    i - 1
                )));
            }
        }
        Ok(ServiceMenu { classes })
    }

    pub fn classes(&self) -> &[ServiceClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Demand partition and revenue of a menu.
#[derive(Clone, Debug)]
pub struct MarketOutcome {
    /// Thresholds `θ₀ = 1 ≥ θ₁ ≥ … ≥ θ_N`; users in `[θᵢ, θᵢ₋₁]` take
    /// class `i`.
    pub thresholds: Vec<f64>,
    /// Population mass captured by each class.
    pub demands: Vec<f64>,
    pub revenue: f64,
    /// Capacity allocated to each class, `dᵢ·w(qᵢ)`.
    pub capacities: Vec<f64>,
    pub total_capacity: f64,
}

impl MarketOutcome {
    /// Whether the outcome fits within a fixed capacity.
    pub fn is_feasible(&self, max_capacity: f64) -> bool {
        self.total_capacity <= max_capacity + 1e-12
    }
}

/// Demand partition via the indifference thresholds.
///
/// Rejects menus whose thresholds are out of order: such a menu contains a
/// class that captures no users and should be dropped instead.
pub fn partition_demand(
    menu: &ServiceMenu,
    dist: &ValuationDistribution,
    quality: &QualityModel,
) -> Result<MarketOutcome> {
    let classes = menu.classes();
    let n = classes.len();
    let sat: Vec<f64> = classes.iter().map(|c| quality.satisfaction(c.congestion)).collect();

    let mut thresholds = vec![1.0];
    for i in 0..n {
        let t = if i + 1 < n {
            (classes[i].price - classes[i + 1].price) / (sat[i] - sat[i + 1])
        } else {
            classes[i].price / sat[i]
        };
        thresholds.push(t);
    }
    for i in 1..=n {
        if thresholds[i] > thresholds[i - 1] + 1e-12 {
            return Err(Error::EmptyClass {
                index: i,
                detail: format!(
                    "threshold {} = {} exceeds threshold {} = {}",
                    i,
                    thresholds[i],
                    i - 1,
                    thresholds[i - 1]
                ),
            });
        }
    }

    let mut demands = Vec::with_capacity(n);
    let mut capacities = Vec::with_capacity(n);
    let mut revenue = 0.0;
    let mut total_capacity = 0.0;
    for i in 0..n {
        let d = (dist.cdf(thresholds[i]) - dist.cdf(thresholds[i + 1])).max(0.0);
        revenue += classes[i].price * d;
        let c = d * quality.unit_capacity(classes[i].congestion);
        total_capacity += c;
        demands.push(d);
        capacities.push(c);
    }
    Ok(MarketOutcome {
        thresholds,
        demands,
        revenue,
        capacities,
        total_capacity,
    })
}

/// Brute-force choice simulation: every grid cell's representative type
/// picks its argmax utility (including opting out), and the cell's
/// probability mass is tallied to that class. Ties go to the class with the
/// lower congestion. Agrees with [`partition_demand`] up to `O(1/grid_size)`.
pub fn simulate_choices(
    menu: &ServiceMenu,
    dist: &ValuationDistribution,
    quality: &QualityModel,
    grid_size: usize,
) -> Result<MarketOutcome> {
    if grid_size < 1_000 {
        return Err(Error::invalid(format!(
            "simulation grid must have at least 1000 cells, got {grid_size}"
        )));
    }
    let classes = menu.classes();
    let n = classes.len();
    let sat: Vec<f64> = classes.iter().map(|c| quality.satisfaction(c.congestion)).collect();

    let mut demands = vec![0.0; n];
    let mut lowest_center = vec![f64::INFINITY; n];
    let g = grid_size as f64;
    for cell in 0..grid_size {
        let lo = cell as f64 / g;
        let hi = (cell + 1) as f64 / g;
        let theta = 0.5 * (lo + hi);
        let mut best: Option<usize> = None;
        let mut best_u = 0.0; // opting out yields zero
        for j in 0..n {
            let u = theta * sat[j] - classes[j].price;
            if u > best_u || (u == best_u && best.is_none() && u > 0.0) {
                best = Some(j);
                best_u = u;
            }
        }
        if let Some(j) = best {
            demands[j] += dist.cdf(hi) - dist.cdf(lo);
            lowest_center[j] = lowest_center[j].min(theta);
        }
    }

    let mut thresholds = vec![1.0];
    let mut prev = 1.0;
    for &lowest in &lowest_center {
        let t = if lowest.is_finite() {
            lowest.min(prev)
        } else {
            prev
        };
        thresholds.push(t);
        prev = t;
    }

    let mut revenue = 0.0;
    let mut capacities = Vec::with_capacity(n);
    let mut total_capacity = 0.0;
    for j in 0..n {
        revenue += classes[j].price * demands[j];
        let c = demands[j] * quality.unit_capacity(classes[j].congestion);
        capacities.push(c);
        total_capacity += c;
    }
    Ok(MarketOutcome {
        thresholds,
        demands,
        revenue,
        capacities,
        total_capacity,
    })
}

/// The optimal single-class offer.
#[derive(Clone, Copy, Debug)]
pub struct SingleClassSolution {
    pub price: f64,
    pub congestion: f64,
    pub profit: f64,
    pub demand: f64,
    pub capacity_used: f64,
}

/// Best single-class menu: maximize `p·d` with `d = 1 − F(p/v(q))` subject
/// to `d·w(q) ≤ C`.
///
/// For each congestion level the optimal subscription threshold is either
/// the unconstrained revenue maximizer or the smallest threshold that fits
/// the capacity, whichever is larger; the outer search over congestion is a
/// grid scan refined by golden section.
pub fn optimal_single_class(
    dist: &ValuationDistribution,
    quality: &QualityModel,
    max_capacity: f64,
) -> Result<SingleClassSolution> {
    if !(max_capacity > 0.0) {
        return Err(Error::invalid(format!(
            "capacity must be positive, got {max_capacity}"
        )));
    }
    // Unconstrained revenue threshold: argmax of τ(1 − F(τ)).
    let (tau_free, _) = golden_section_max(|t| t * (1.0 - dist.cdf(t)), 0.0, 1.0, 1e-10);

    let threshold_for = |q: f64| -> f64 {
        let w = quality.unit_capacity(q);
        if w.is_finite() && (1.0 - dist.cdf(tau_free)) * w <= max_capacity {
            return tau_free;
        }
        if !w.is_finite() {
            return 1.0;
        }
        dist.quantile(1.0 - max_capacity / w, 1e-12).max(tau_free)
    };
    let profit_at = |q: f64| -> f64 {
        let v = quality.satisfaction(q);
        if v <= 0.0 {
            return 0.0;
        }
        let tau = threshold_for(q);
        tau * v * (1.0 - dist.cdf(tau))
    };

    // Coarse scan to bracket the peak, then golden-section refinement.
    let scan = 256;
    let mut best_i = 0;
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..scan {
        let q = i as f64 / scan as f64;
        let p = profit_at(q);
        if p > best_val {
            best_val = p;
            best_i = i;
        }
    }
    let lo = if best_i == 0 {
        0.0
    } else {
        (best_i - 1) as f64 / scan as f64
    };
    let hi = ((best_i + 1) as f64 / scan as f64).min(1.0 - 1e-12);
    let (q, profit) = golden_section_max(profit_at, lo, hi, 1e-8);

    let tau = threshold_for(q);
    let demand = 1.0 - dist.cdf(tau);
    Ok(SingleClassSolution {
        price: tau * quality.satisfaction(q),
        congestion: q,
        profit,
        demand,
        capacity_used: demand * quality.unit_capacity(q),
    })
}

// ---------------------------------------------------------------------------
// Brute-force menu search
// ---------------------------------------------------------------------------

/// Search state: thresholds descending, qualities ascending, one per class.
#[derive(Clone, Debug)]
struct MenuPoint {
    thetas: Vec<f64>,
    quals: Vec<f64>,
}

/// Revenue of a threshold/quality parameterization, or `None` when the
/// induced menu does not fit the capacity. Prices are recovered from the
/// indifference identities, which makes every candidate admissible by
/// construction.
fn menu_revenue(
    dist: &ValuationDistribution,
    quality: &QualityModel,
    max_capacity: f64,
    point: &MenuPoint,
) -> Option<f64> {
    let k = point.thetas.len();
    let mut prices = vec![0.0; k];
    let sat: Vec<f64> = point.quals.iter().map(|&q| quality.satisfaction(q)).collect();
    prices[k - 1] = point.thetas[k - 1] * sat[k - 1];
    for i in (0..k - 1).rev() {
        prices[i] = prices[i + 1] + point.thetas[i] * (sat[i] - sat[i + 1]);
    }
    let mut revenue = 0.0;
    let mut used = 0.0;
    let mut upper = 1.0;
    for ((&theta, &qual), &price) in point.thetas.iter().zip(&point.quals).zip(&prices) {
        let d = (dist.cdf(upper) - dist.cdf(theta)).max(0.0);
        revenue += price * d;
        used += d * quality.unit_capacity(qual);
        if used > max_capacity + 1e-12 {
            return None;
        }
        upper = theta;
    }
    Some(revenue)
}

fn spread_init(
    dist: &ValuationDistribution,
    quality: &QualityModel,
    max_capacity: f64,
    k: usize,
) -> Option<(MenuPoint, f64)> {
    // Serving types below the unconstrained revenue threshold never pays
    // (dropping them raises revenue and frees capacity), so spread the
    // initial thresholds over the range above it.
    let (tau_free, _) = golden_section_max(|t| t * (1.0 - dist.cdf(t)), 0.0, 1.0, 1e-10);
    let mut point = MenuPoint {
        thetas: (0..k)
            .map(|i| tau_free + (1.0 - tau_free) * (k - i) as f64 / (k + 1) as f64)
            .collect(),
        quals: (0..k).map(|i| (i + 1) as f64 / (k + 1) as f64).collect(),
    };
    for _ in 0..200 {
        if let Some(r) = menu_revenue(dist, quality, max_capacity, &point) {
            return Some((point, r));
        }
        // shift all qualities toward 1: cheaper classes need less capacity
        for q in &mut point.quals {
            *q = 0.5 * (*q + 1.0);
        }
    }
    None
}

/// Grow an incumbent by one class, inserted into the widest gap between
/// serving intervals (descent can still stretch the menu downward through
/// the bottom class's own coordinate).
fn extend_incumbent(
    dist: &ValuationDistribution,
    quality: &QualityModel,
    max_capacity: f64,
    incumbent: &MenuPoint,
) -> Option<(MenuPoint, f64)> {
    let k = incumbent.thetas.len();
    let mut slot = 0;
    let mut widest = -1.0;
    for j in 0..k {
        let upper = if j == 0 { 1.0 } else { incumbent.thetas[j - 1] };
        let lower = incumbent.thetas[j];
        if upper - lower > widest {
            widest = upper - lower;
            slot = j;
        }
    }
    let upper = if slot == 0 { 1.0 } else { incumbent.thetas[slot - 1] };
    let lower = if slot == k { 0.0 } else { incumbent.thetas[slot] };
    let q_lo = if slot == 0 { 0.0 } else { incumbent.quals[slot - 1] };
    let q_hi = if slot == k { 1.0 } else { incumbent.quals[slot] };

    let mut point = incumbent.clone();
    point.thetas.insert(slot, 0.5 * (upper + lower));
    let mut q_new = 0.5 * (q_lo + q_hi);
    point.quals.insert(slot, q_new);
    for _ in 0..60 {
        if let Some(r) = menu_revenue(dist, quality, max_capacity, &point) {
            return Some((point, r));
        }
        // push the new class toward its congested neighbor to free capacity
        q_new = 0.5 * (q_new + q_hi);
        point.quals[slot] = q_new;
    }
    None
}

/// Scan window for one coordinate: the full range between its neighbors in
/// round 0, then progressively narrower windows around the incumbent value.
fn scan_window(lo: f64, hi: f64, cur: f64, round: i32) -> (f64, f64) {
    if round == 0 {
        return (lo, hi);
    }
    let half = 0.5 * (hi - lo) * 0.1_f64.powi(round);
    ((cur - half).max(lo), (cur + half).min(hi))
}

fn bounds_theta(point: &MenuPoint, i: usize) -> (f64, f64) {
    let k = point.thetas.len();
    let upper = if i == 0 { 1.0 } else { point.thetas[i - 1] };
    let lower = if i == k - 1 { 0.0 } else { point.thetas[i + 1] };
    (lower, upper)
}

fn bounds_qual(point: &MenuPoint, i: usize) -> (f64, f64) {
    let k = point.quals.len();
    let lower = if i == 0 { 0.0 } else { point.quals[i - 1] };
    let upper = if i == k - 1 { 1.0 } else { point.quals[i + 1] };
    (lower, upper)
}

/// Block-coordinate descent with shrinking scan windows: one full-range pass
/// plus three local refinement rounds. Each sweep scans every threshold and
/// quality on its own grid and additionally moves each class's
/// (threshold, quality) pair jointly, which is what escapes the curved
/// feasibility boundary that blocks single-coordinate moves.
fn coordinate_descent(
    dist: &ValuationDistribution,
    quality: &QualityModel,
    max_capacity: f64,
    resolution: usize,
    start: (MenuPoint, f64),
) -> (MenuPoint, f64) {
    let (mut point, mut value) = start;
    let k = point.thetas.len();
    let joint = resolution.min(16);
    for round in 0..4 {
        for _sweep in 0..60 {
            let mut improved = false;
            // single-coordinate scans
            for coord in 0..2 * k {
                let (lo, hi, cur) = if coord < k {
                    let (lo, hi) = bounds_theta(&point, coord);
                    (lo, hi, point.thetas[coord])
                } else {
                    let (lo, hi) = bounds_qual(&point, coord - k);
                    (lo, hi, point.quals[coord - k])
                };
                let (scan_lo, scan_hi) = scan_window(lo, hi, cur, round);
                let mut best_x = cur;
                let mut found = false;
                for j in 0..resolution {
                    let x = scan_lo
                        + (scan_hi - scan_lo) * (j + 1) as f64 / (resolution + 1) as f64;
                    if x <= lo || x >= hi {
                        continue;
                    }
                    let mut trial = point.clone();
                    if coord < k {
                        trial.thetas[coord] = x;
                    } else {
                        trial.quals[coord - k] = x;
                    }
                    if let Some(r) = menu_revenue(dist, quality, max_capacity, &trial) {
                        if r > value + 1e-15 {
                            value = r;
                            best_x = x;
                            found = true;
                        }
                    }
                }
                if found {
                    if coord < k {
                        point.thetas[coord] = best_x;
                    } else {
                        point.quals[coord - k] = best_x;
                    }
                    improved = true;
                }
            }
            // joint (threshold, quality) moves per class
            for i in 0..k {
                let (tlo, thi) = bounds_theta(&point, i);
                let (qlo, qhi) = bounds_qual(&point, i);
                let (tslo, tshi) = scan_window(tlo, thi, point.thetas[i], round);
                let (qslo, qshi) = scan_window(qlo, qhi, point.quals[i], round);
                let mut best = None;
                for a in 0..joint {
                    let t = tslo + (tshi - tslo) * (a + 1) as f64 / (joint + 1) as f64;
                    if t <= tlo || t >= thi {
                        continue;
                    }
                    for b in 0..joint {
                        let q = qslo + (qshi - qslo) * (b + 1) as f64 / (joint + 1) as f64;
                        if q <= qlo || q >= qhi {
                            continue;
                        }
                        let mut trial = point.clone();
                        trial.thetas[i] = t;
                        trial.quals[i] = q;
                        if let Some(r) = menu_revenue(dist, quality, max_capacity, &trial) {
                            if r > value + 1e-15 {
                                value = r;
                                best = Some((t, q));
                            }
                        }
                    }
                }
                if let Some((t, q)) = best {
                    point.thetas[i] = t;
                    point.quals[i] = q;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }
    }
    (point, value)
}

/// Brute-force search for the best menu of at most `k` classes.
///
/// Classes are parameterized by their subscription thresholds and
/// congestion levels; prices follow from the indifference identities, so
/// every candidate is admissible by construction. The search ladders up the
/// class count, warm-starting each level from the previous incumbent, and
/// returns the best menu found anywhere along the ladder. Deterministic for
/// given parameters.
pub fn brute_force_menu(
    dist: &ValuationDistribution,
    quality: &QualityModel,
    max_capacity: f64,
    k: usize,
    resolution: usize,
) -> Result<(ServiceMenu, f64)> {
    if k == 0 || k > 8 {
        return Err(Error::invalid(format!(
            "class count must be between 1 and 8, got {k}"
        )));
    }
    if !(4..=64).contains(&resolution) {
        return Err(Error::invalid(format!(
            "resolution must be between 4 and 64, got {resolution}"
        )));
    }
    if !(max_capacity > 0.0) {
        return Err(Error::invalid(format!(
            "capacity must be positive, got {max_capacity}"
        )));
    }

    let mut incumbent: Option<(MenuPoint, f64)> = None;
    let mut best: Option<(MenuPoint, f64)> = None;
    for level in 1..=k {
        let mut starts = Vec::new();
        if let Some(s) = spread_init(dist, quality, max_capacity, level) {
            starts.push(s);
        }
        if let Some((pt, _)) = &incumbent {
            if pt.thetas.len() == level - 1 {
                if let Some(s) = extend_incumbent(dist, quality, max_capacity, pt) {
                    starts.push(s);
                }
            }
        }
        if starts.is_empty() {
            continue;
        }
        let mut level_best: Option<(MenuPoint, f64)> = None;
        for start in starts {
            let refined = coordinate_descent(dist, quality, max_capacity, resolution, start);
            if level_best.as_ref().is_none_or(|(_, v)| refined.1 > *v) {
                level_best = Some(refined);
            }
        }
        if let Some(lb) = level_best {
            if best.as_ref().is_none_or(|(_, v)| lb.1 > *v) {
                best = Some(lb.clone());
            }
            incumbent = Some(lb);
        }
    }

    let (point, value) = best.ok_or_else(|| {
        Error::NoSolution("no feasible menu found at any class count".into())
    })?;
    let k = point.thetas.len();
    let sat: Vec<f64> = point.quals.iter().map(|&q| quality.satisfaction(q)).collect();
    let mut prices = vec![0.0; k];
    prices[k - 1] = point.thetas[k - 1] * sat[k - 1];
    for i in (0..k - 1).rev() {
        prices[i] = prices[i + 1] + point.thetas[i] * (sat[i] - sat[i + 1]);
    }
    let classes = prices
        .iter()
        .zip(&point.quals)
        .map(|(&p, &q)| ServiceClass {
            price: p,
            congestion: q,
        })
        .collect();
    Ok((ServiceMenu::new(classes)?, value))
}
