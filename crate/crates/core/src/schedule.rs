//! Economic objects recovered from a solved choice schedule: the price
//! schedule over the offered quality interval, indirect utility, profit and
//! user surplus, and the cumulative capacity profile.
//!
//! Prices follow from the envelope representation: the price of quality `q`
//! is `ϑ·v(q) − V(ϑ)` where `ϑ` is the (smallest) type choosing `q` and
//! `V(θ) = ∫₀^θ v(q*(s)) ds` is the indirect utility, anchored at
//! `V(0) = 0`.

use crate::error::{Error, Result};
use crate::numerics::{bisect, integrate_with_breakpoints};
use crate::solver::{ChoiceSchedule, Regime};

/// Profit computed by two algebraically equivalent routes. The reported
/// value is the direct one; the virtual-surplus route is the cross-check.
#[derive(Clone, Copy, Debug)]
pub struct Profit {
    pub value: f64,
    pub direct: f64,
    pub virtual_surplus: f64,
}

/// Tolerance for the agreement between the two profit computations.
pub const PROFIT_CROSS_CHECK_TOL: f64 = 1e-6;

/// Price schedule over the offered quality interval, plus the dummy class
/// `(price 0, congestion 1)`.
#[derive(Clone, Debug)]
pub struct PriceSchedule {
    schedule: ChoiceSchedule,
    quality_lo: f64,
    quality_hi: f64,
}

/// Recover the price schedule from a solved choice schedule.
pub fn recover_prices(schedule: &ChoiceSchedule) -> Result<PriceSchedule> {
    let (quality_lo, quality_hi) = match schedule.regime() {
        Regime::SingleClassAbundant => (0.0, 0.0),
        Regime::Interior => (schedule.choice(1.0), 1.0),
    };
    Ok(PriceSchedule {
        schedule: schedule.clone(),
        quality_lo,
        quality_hi,
    })
}

impl PriceSchedule {
    /// The offered congestion interval `[q*(1), q*(θ̂)]`.
    pub fn quality_range(&self) -> (f64, f64) {
        (self.quality_lo, self.quality_hi)
    }

    pub fn source(&self) -> &ChoiceSchedule {
        &self.schedule
    }

    /// Indirect utility `V(θ)`: zero up to the marginal user, then the
    /// integral of the satisfaction along the schedule.
    pub fn indirect_utility(&self, theta: f64) -> f64 {
        let s = &self.schedule;
        let hat = s.marginal_user();
        if theta <= hat {
            return 0.0;
        }
        let bar = s.bunching_onset();
        let quality = s.virtuals().quality();
        let tol = s.virtuals().config().quad_tol;
        let mid = theta.min(bar);
        let graded = integrate_with_breakpoints(
            |t| quality.satisfaction(s.choice(t)),
            hat,
            mid,
            &[],
            tol,
        );
        let pooled = if theta > bar {
            (theta - bar) * quality.satisfaction(0.0)
        } else {
            0.0
        };
        graded + pooled
    }

    /// The (smallest) type whose optimal choice is congestion `q`.
    pub fn type_for_quality(&self, q: f64) -> Result<f64> {
        let s = &self.schedule;
        match s.regime() {
            Regime::SingleClassAbundant => Ok(s.marginal_user()),
            Regime::Interior => {
                if q >= 1.0 {
                    return Ok(s.marginal_user());
                }
                if q <= self.quality_lo + 1e-14 {
                    // lower endpoint: the onset of the bunched flat when
                    // there is one, otherwise the top type
                    return Ok(if s.bunching_onset() < 1.0 {
                        s.bunching_onset()
                    } else {
                        1.0
                    });
                }
                let tol = s.virtuals().config().root_tol;
                bisect(
                    |t| s.choice(t) - q,
                    s.marginal_user(),
                    s.bunching_onset(),
                    tol,
                )
                .ok_or_else(|| Error::Domain(format!("no type chooses congestion {q}")))
            }
        }
    }

    /// Price of congestion level `q`. Defined on the offered interval and
    /// the dummy class `q = 1` (price 0); anything else is a domain error.
    pub fn price(&self, q: f64) -> Result<f64> {
        if (q - 1.0).abs() <= 1e-12 {
            return Ok(0.0);
        }
        if q < self.quality_lo - 1e-9 || q > self.quality_hi + 1e-9 {
            return Err(Error::Domain(format!(
                "congestion {q} outside the offered interval [{}, {}] and not the dummy class",
                self.quality_lo, self.quality_hi
            )));
        }
        let q = q.clamp(self.quality_lo, self.quality_hi);
        let vartheta = self.type_for_quality(q)?;
        let v = self.schedule.virtuals().quality().satisfaction(q);
        Ok(vartheta * v - self.indirect_utility(vartheta))
    }

    /// Sampled `(congestion, price)` table over the offered interval,
    /// ending with the dummy class.
    pub fn sample(&self, n: usize) -> Vec<(f64, f64)> {
        let n = n.max(2);
        let (lo, hi) = (self.quality_lo, self.quality_hi);
        let mut rows = Vec::new();
        if hi - lo < 1e-12 {
            rows.push((lo, self.price(lo).unwrap_or(f64::NAN)));
        } else {
            for i in 0..n {
                let q = lo + (hi - lo) * i as f64 / (n - 1) as f64;
                rows.push((q, self.price(q).unwrap_or(f64::NAN)));
            }
        }
        if (rows.last().map(|r| r.0).unwrap_or(0.0) - 1.0).abs() > 1e-12 {
            rows.push((1.0, 0.0));
        }
        rows
    }
}

/// Profit of the schedule, computed both directly
/// (`∫ [θ·v(q*(θ)) − V(θ)] f(θ) dθ`) and through the virtual surplus
/// (`∫ G(θ)·v(q*(θ)) f(θ) dθ`). The two must agree; the direct value is
/// reported.
pub fn profit(prices: &PriceSchedule) -> Result<Profit> {
    let s = prices.source();
    let vf = s.virtuals();
    let quality = vf.quality();
    let dist = vf.distribution();
    let tol = vf.config().quad_tol;
    let hat = s.marginal_user();
    let bar = s.bunching_onset();

    let direct = integrate_with_breakpoints(
        |t| {
            let v = quality.satisfaction(s.choice(t));
            (t * v - prices.indirect_utility(t)) * dist.density(t)
        },
        hat,
        1.0,
        &[bar],
        tol,
    );
    let virtual_surplus = integrate_with_breakpoints(
        |t| vf.virtual_value(t) * quality.satisfaction(s.choice(t)) * dist.density(t),
        hat,
        1.0,
        &[bar],
        tol,
    );
    if (direct - virtual_surplus).abs() > PROFIT_CROSS_CHECK_TOL {
        return Err(Error::Inconsistency(format!(
            "profit routes disagree: direct {direct} vs virtual surplus {virtual_surplus}"
        )));
    }
    Ok(Profit {
        value: direct,
        direct,
        virtual_surplus,
    })
}

/// Total user surplus `∫₀¹ V(θ) dθ` and the sampled surplus curve.
pub fn user_surplus(prices: &PriceSchedule) -> (f64, Vec<(f64, f64)>) {
    let s = prices.source();
    let vf = s.virtuals();
    let tol = vf.config().quad_tol;
    let hat = s.marginal_user();
    let bar = s.bunching_onset();
    let total = integrate_with_breakpoints(
        |t| prices.indirect_utility(t),
        hat,
        1.0,
        &[bar],
        tol,
    );

    let n = vf.config().grid;
    let seg_tol = tol / n as f64;
    let quality = vf.quality();
    let mut curve = Vec::with_capacity(n);
    let mut acc = 0.0;
    let mut prev = 0.0;
    for i in 0..n {
        let theta = i as f64 / (n - 1) as f64;
        acc += integrate_with_breakpoints(
            |t| quality.satisfaction(s.choice(t)),
            prev,
            theta,
            &[hat, bar],
            seg_tol,
        );
        // below the marginal user the choice is the dummy class with zero
        // satisfaction, so the accumulator stays at zero there
        curve.push((theta, acc));
        prev = theta;
    }
    (total, curve)
}

/// Cumulative capacity consumption `W(θ)` sampled on the config grid, plus
/// the solver's total.
pub fn capacity_profile(schedule: &ChoiceSchedule) -> (Vec<(f64, f64)>, f64) {
    let vf = schedule.virtuals();
    let quality = vf.quality();
    let dist = vf.distribution();
    let n = vf.config().grid;
    let seg_tol = vf.config().quad_tol / n as f64;
    let hat = schedule.marginal_user();
    let bar = schedule.bunching_onset();
    let mut samples = Vec::with_capacity(n);
    let mut acc = 0.0;
    let mut prev = 0.0;
    for i in 0..n {
        let theta = i as f64 / (n - 1) as f64;
        acc += integrate_with_breakpoints(
            |t| quality.unit_capacity(schedule.choice(t)) * dist.density(t),
            prev,
            theta,
            &[hat, bar],
            seg_tol,
        );
        samples.push((theta, acc));
        prev = theta;
    }
    (samples, schedule.total_consumption())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{QualityModel, ValuationDistribution, VirtualFunctions};
    use crate::solver::{solve_fixed, solve_variable, CostFunction};

    fn uniform_canonical() -> VirtualFunctions {
        VirtualFunctions::derive(
            ValuationDistribution::power(1.0).unwrap(),
            QualityModel::canonical(),
        )
        .unwrap()
    }

    fn prices_at(c: f64) -> PriceSchedule {
        let vf = uniform_canonical();
        recover_prices(&solve_fixed(&vf, c).unwrap()).unwrap()
    }

    #[test]
    fn single_class_price_is_the_virtual_zero() {
        let p = prices_at(0.5);
        assert_eq!(p.quality_range(), (0.0, 0.0));
        assert!((p.price(0.0).unwrap() - 0.5).abs() < 1e-9);
        assert_eq!(p.price(1.0).unwrap(), 0.0);
        assert!(p.price(0.5).is_err());
        let table = p.sample(512);
        assert_eq!(table.len(), 2);
        assert_eq!(table[1], (1.0, 0.0));
    }

    #[test]
    fn dummy_class_is_always_free() {
        for c in [0.05, 0.1, 0.3, 0.5] {
            let p = prices_at(c);
            assert_eq!(p.price(1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn indirect_utility_boundary_values() {
        let p = prices_at(0.1);
        assert_eq!(p.indirect_utility(0.0), 0.0);
        assert!(p.indirect_utility(0.5).abs() < 1e-12);
        // frozen: V(1) at capacity 0.1
        let v1 = p.indirect_utility(1.0);
        assert!((v1 - 0.1376297747647517).abs() < 1e-6, "got {v1}");
        // nondecreasing
        let mut prev = -1.0;
        for i in 0..=256 {
            let v = p.indirect_utility(i as f64 / 256.0);
            assert!(v >= prev - 1e-12);
            assert!(v >= -1e-12, "individual rationality violated");
            prev = v;
        }
    }

    #[test]
    fn envelope_derivative_matches_satisfaction() {
        let p = prices_at(0.1);
        let s = p.source();
        let quality = s.virtuals().quality().clone();
        let eps = 1e-5;
        for i in 0..64 {
            let theta = 0.52 + 0.45 * i as f64 / 63.0;
            // skip the kink neighborhoods
            if (theta - s.bunching_onset()).abs() < 1e-3 {
                continue;
            }
            let fd = (p.indirect_utility(theta + eps) - p.indirect_utility(theta - eps))
                / (2.0 * eps);
            let expect = quality.satisfaction(s.choice(theta));
            assert!((fd - expect).abs() < 1e-4, "θ = {theta}: {fd} vs {expect}");
        }
    }

    #[test]
    fn prices_decrease_in_congestion() {
        let p = prices_at(0.1);
        let table = p.sample(256);
        for win in table.windows(2) {
            assert!(
                win[1].1 < win[0].1 + 1e-10,
                "price must fall with congestion: {:?}",
                win
            );
        }
    }

    #[test]
    fn incentive_compatibility_sweep() {
        let p = prices_at(0.1);
        let s = p.source();
        let quality = s.virtuals().quality().clone();
        let menu = p.sample(256);
        for i in 0..128 {
            let theta = i as f64 / 127.0;
            let q_own = s.choice(theta);
            let u_own = if q_own >= 1.0 - 1e-12 {
                0.0
            } else {
                theta * quality.satisfaction(q_own) - p.price(q_own).unwrap()
            };
            for &(q, price) in &menu {
                let u_alt = theta * quality.satisfaction(q) - price;
                assert!(
                    u_own >= u_alt - 1e-8,
                    "θ = {theta} prefers q = {q}: {u_alt} > {u_own}"
                );
            }
            assert!(u_own >= -1e-10, "participation violated at θ = {theta}");
        }
    }

    #[test]
    fn bunched_flat_price_is_anchor_invariant() {
        // Any type on the bunched flat reproduces the same price for q = 0.
        let p = prices_at(0.1);
        let s = p.source();
        let bar = s.bunching_onset();
        assert!(bar < 1.0);
        let v0 = s.virtuals().quality().satisfaction(0.0);
        let from_onset = bar * v0 - p.indirect_utility(bar);
        let from_top = 1.0 * v0 - p.indirect_utility(1.0);
        assert!((from_onset - from_top).abs() < 1e-8);
        assert!((p.price(0.0).unwrap() - from_onset).abs() < 1e-10);
    }

    #[test]
    fn profit_routes_agree_and_match_frozen_values() {
        let p = prices_at(0.1);
        let j = profit(&p).unwrap();
        assert!((j.direct - j.virtual_surplus).abs() <= PROFIT_CROSS_CHECK_TOL);
        // frozen golden value
        assert!((j.value - 0.10505190990589924).abs() < 1e-6, "got {}", j.value);

        let j2 = profit(&prices_at(0.2)).unwrap();
        assert!(j2.value > j.value);

        // abundance limit: θ₀·(1 − F(θ₀)) = 0.25 for the uniform case
        let jbar = profit(&prices_at(0.5)).unwrap();
        assert!((jbar.value - 0.25).abs() < 1e-9, "got {}", jbar.value);
    }

    #[test]
    fn empty_market_has_zero_profit() {
        // A linear cost above the top virtual value per unit capacity
        // excludes everyone (needs h(1) > 0).
        const E_INV: f64 = 0.36787944117144233;
        let quality = QualityModel::custom(
            |q| ((-q).exp() - E_INV) / (1.0 - E_INV),
            |q| 1.0 / q - 1.0,
            Some(std::sync::Arc::new(|q: f64| -(-q).exp() / (1.0 - E_INV))),
            Some(std::sync::Arc::new(|q: f64| -1.0 / (q * q))),
        )
        .unwrap();
        let vf =
            VirtualFunctions::derive(ValuationDistribution::power(1.0).unwrap(), quality).unwrap();
        let sched = solve_variable(&vf, &CostFunction::linear(10.0).unwrap()).unwrap();
        assert!(sched.marginal_user() > 1.0 - 1e-9);
        let p = recover_prices(&sched).unwrap();
        let j = profit(&p).unwrap();
        assert!(j.value.abs() < 1e-10);
        assert!(p.indirect_utility(1.0).abs() < 1e-12);
    }

    #[test]
    fn surplus_total_matches_curve_trapezoid() {
        let p = prices_at(0.1);
        let (total, curve) = user_surplus(&p);
        // frozen golden value
        assert!((total - 0.016288932438970345).abs() < 1e-6, "got {total}");
        let mut trap = 0.0;
        for win in curve.windows(2) {
            trap += 0.5 * (win[0].1 + win[1].1) * (win[1].0 - win[0].0);
        }
        assert!((total - trap).abs() < 1e-4);
        // excluded users get nothing
        for &(theta, v) in &curve {
            if theta <= 0.5 {
                assert!(v.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn capacity_profile_is_monotone_and_consistent() {
        let vf = uniform_canonical();
        let sched = solve_fixed(&vf, 0.1).unwrap();
        let (samples, total) = capacity_profile(&sched);
        assert!((total - 0.1).abs() <= 1e-8);
        assert_eq!(samples[0].1, 0.0);
        let mut prev = 0.0;
        for &(theta, w) in &samples {
            assert!(w >= prev - 1e-12);
            if theta < sched.marginal_user() {
                assert!(w.abs() < 1e-12, "no consumption below the marginal user");
            }
            prev = w;
        }
        let last = samples.last().unwrap().1;
        assert!((last - total).abs() < 1e-8, "W(1) = {last} vs {total}");
    }

    #[test]
    fn quality_intervals_nest_with_capacity() {
        let lo_small = prices_at(0.03).quality_range().0;
        let lo_mid = prices_at(0.05).quality_range().0;
        let lo_big = prices_at(0.1).quality_range().0;
        assert!(lo_small > lo_mid - 1e-12);
        assert!(lo_mid > lo_big - 1e-12);
        assert_eq!(lo_big, 0.0);
    }
}
