//! Market primitives: the user valuation distribution, the quality model,
//! and the virtual functions derived from them.
//!
//! A market is described by three ingredients:
//!
//! - a [`ValuationDistribution`] `(f, F)` of user values on `[0, 1]`,
//! - a [`QualityModel`] giving the satisfaction discount `v(q)` and the unit
//!   implied capacity `w(q)` over the congestion level `q ∈ [0, 1]`,
//! - the derived [`VirtualFunctions`]: the virtual valuation
//!   `G(θ) = θ − (1 − F(θ))/f(θ)` with its unique zero, and the virtual
//!   capacity `h(q) = w′(q)/v′(q)` with its extended inverse.
//!
//! Regularity of the derived functions (a unique zero of `G`, `G` increasing
//! above it, `h` decreasing) is not taken on faith: [`VirtualFunctions::derive`]
//! checks all of it eagerly on a fixed grid and fails loudly, naming the
//! requirement that does not hold.

use std::fmt;
use std::sync::Arc;

use crate::config::NumericsConfig;
use crate::error::{Error, Result};
use crate::numerics::{adaptive_simpson, central_diff, one_sided_diff};

/// Densities below this are treated as numerically zero; evaluating the
/// virtual valuation there reports an ill-conditioned error instead of
/// letting an infinity propagate into a root finder.
pub const MIN_DENSITY: f64 = 1e-12;

/// Grid size used by the eager regularity checks.
const VALIDATION_GRID: usize = 2048;

/// Step for filling in missing derivatives by finite differences.
const FILL_FD_EPS: f64 = 1e-6;

/// Step and point count for the derivative consistency check.
const CHECK_FD_EPS: f64 = 1e-5;
const CHECK_FD_POINTS: usize = 256;

const E_INV: f64 = 0.36787944117144233; // e^{-1}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A nonnegative quantity that may be unbounded.
///
/// Comparisons treat `Infinite` as larger than every finite value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Extended {
    Finite(f64),
    Infinite,
}

impl Extended {
    pub fn is_infinite(self) -> bool {
        matches!(self, Extended::Infinite)
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(x) => Some(x),
            Extended::Infinite => None,
        }
    }

    /// Collapse to `f64`, mapping `Infinite` to `f64::INFINITY`.
    pub fn as_f64(self) -> f64 {
        match self {
            Extended::Finite(x) => x,
            Extended::Infinite => f64::INFINITY,
        }
    }

    /// `self > x` in the extended order.
    pub fn exceeds(self, x: f64) -> bool {
        match self {
            Extended::Finite(v) => v > x,
            Extended::Infinite => true,
        }
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(x) => write!(f, "{x}"),
            Extended::Infinite => write!(f, "inf"),
        }
    }
}

// ---------------------------------------------------------------------------
// Valuation distribution
// ---------------------------------------------------------------------------

/// User value distribution on `[0, 1]`: a density/CDF pair.
#[derive(Clone)]
pub struct ValuationDistribution {
    kind: DistKind,
}

#[derive(Clone)]
enum DistKind {
    Power { alpha: f64 },
    Custom { density: RealFn, cdf: RealFn },
}

impl fmt::Debug for ValuationDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DistKind::Power { alpha } => write!(f, "ValuationDistribution::power({alpha})"),
            DistKind::Custom { .. } => write!(f, "ValuationDistribution::custom"),
        }
    }
}

impl ValuationDistribution {
    /// The power family `F(θ) = θ^α` with density `f(θ) = α·θ^{α−1}`.
    ///
    /// For `α < 1` the density blows up at zero; construction still succeeds
    /// and the regularity checks of [`VirtualFunctions::derive`] decide
    /// whether the model is usable.
    pub fn power(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::invalid(format!(
                "power distribution exponent must be positive, got {alpha}"
            )));
        }
        Ok(ValuationDistribution {
            kind: DistKind::Power { alpha },
        })
    }

    /// A user-supplied density/CDF pair.
    ///
    /// Checked on a fixed grid: positive density, `F(0) = 0`, `F(1) = 1`,
    /// `F` nondecreasing, and `F(b) − F(a)` consistent with `∫ₐᵇ f` on a few
    /// spot intervals.
    pub fn custom(
        density: impl Fn(f64) -> f64 + Send + Sync + 'static,
        cdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let dist = ValuationDistribution {
            kind: DistKind::Custom {
                density: Arc::new(density),
                cdf: Arc::new(cdf),
            },
        };
        dist.validate_custom()?;
        Ok(dist)
    }

    fn validate_custom(&self) -> Result<()> {
        let f0 = self.cdf(0.0);
        let f1 = self.cdf(1.0);
        if f0.abs() > 1e-9 {
            return Err(Error::assumption(
                "distribution normalization",
                format!("F(0) = {f0}, expected 0"),
            ));
        }
        if (f1 - 1.0).abs() > 1e-9 {
            return Err(Error::assumption(
                "distribution normalization",
                format!("F(1) = {f1}, expected 1"),
            ));
        }
        let mut prev = f0;
        for i in 1..=VALIDATION_GRID {
            let theta = i as f64 / (VALIDATION_GRID + 1) as f64;
            let d = self.density(theta);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::assumption(
                    "density positivity",
                    format!("f({theta}) = {d}"),
                ));
            }
            let c = self.cdf(theta);
            if c < prev - 1e-12 {
                return Err(Error::assumption(
                    "distribution monotonicity",
                    format!("F decreases near θ = {theta}"),
                ));
            }
            prev = c;
        }
        // Spot-check that the pair is actually a density and its integral.
        for &(a, b) in &[(0.25, 0.75), (0.5, 1.0), (0.1, 0.6), (0.75, 0.95)] {
            let mass = adaptive_simpson(|t| self.density(t), a, b, 1e-11);
            let delta = self.cdf(b) - self.cdf(a);
            if (mass - delta).abs() > 1e-8 {
                return Err(Error::assumption(
                    "density/CDF consistency",
                    format!("F({b})−F({a}) = {delta} but ∫f = {mass}"),
                ));
            }
        }
        Ok(())
    }

    pub fn density(&self, theta: f64) -> f64 {
        match &self.kind {
            DistKind::Power { alpha } => alpha * theta.powf(alpha - 1.0),
            DistKind::Custom { density, .. } => density(theta),
        }
    }

    pub fn cdf(&self, theta: f64) -> f64 {
        match &self.kind {
            DistKind::Power { alpha } => theta.clamp(0.0, 1.0).powf(*alpha),
            DistKind::Custom { cdf, .. } => cdf(theta),
        }
    }

    /// Inverse CDF, by closed form for the power family and bisection
    /// otherwise.
    pub fn quantile(&self, u: f64, x_tol: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        match &self.kind {
            DistKind::Power { alpha } => u.powf(1.0 / alpha),
            DistKind::Custom { .. } => {
                crate::numerics::bisect(|t| self.cdf(t) - u, 0.0, 1.0, x_tol).unwrap_or(1.0)
            }
        }
    }

    /// Exponent of the power family, if this is one.
    pub fn power_exponent(&self) -> Option<f64> {
        match &self.kind {
            DistKind::Power { alpha } => Some(*alpha),
            DistKind::Custom { .. } => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Quality model
// ---------------------------------------------------------------------------

/// Which constructor produced a [`QualityModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QualityModelKind {
    Canonical,
    Custom,
    PaygTransformed,
}

/// Quality model: satisfaction discount `v` and unit implied capacity `w`
/// over the congestion level, with derivatives.
///
/// Requirements: `v(0) = 1`, `v(1) = 0`, `v` strictly decreasing and `w`
/// decreasing with `w(1) = 0`, both continuously differentiable. `w(0)` may
/// be infinite (the regime where the congestion externality never vanishes).
#[derive(Clone)]
pub struct QualityModel {
    kind: QualityKind,
}

#[derive(Clone)]
enum QualityKind {
    Canonical,
    Custom {
        v: RealFn,
        dv: RealFn,
        w: RealFn,
        dw: RealFn,
    },
    Payg(Box<QualityModel>),
}

impl fmt::Debug for QualityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "QualityModel::{:?}", self.kind_tag())
    }
}

impl QualityModel {
    /// The built-in model: `v(q) = (e^{−q} − e^{−1})/(1 − e^{−1})` and
    /// `w(q) = (1 − q)²`.
    pub fn canonical() -> Self {
        QualityModel {
            kind: QualityKind::Canonical,
        }
    }

    /// A user-supplied model. Missing derivatives are filled in by central
    /// differences (one-sided at the endpoints) with step `1e−6`.
    pub fn custom(
        v: impl Fn(f64) -> f64 + Send + Sync + 'static,
        w: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dv: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
        dw: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
    ) -> Result<Self> {
        let v: RealFn = Arc::new(v);
        let w: RealFn = Arc::new(w);
        let dv = dv.unwrap_or_else(|| fd_derivative(v.clone()));
        let dw = dw.unwrap_or_else(|| fd_derivative(w.clone()));
        let model = QualityModel {
            kind: QualityKind::Custom { v, dv, w, dw },
        };
        model.validate()?;
        Ok(model)
    }

    /// Pay-as-you-go reduction: the same satisfaction discount, but the unit
    /// capacity becomes `w(q)·v(q)`. `w_new(1) = 0` holds automatically.
    pub fn payg_transform(&self) -> Result<QualityModel> {
        let model = QualityModel {
            kind: QualityKind::Payg(Box::new(self.clone())),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn kind_tag(&self) -> QualityModelKind {
        match &self.kind {
            QualityKind::Canonical => QualityModelKind::Canonical,
            QualityKind::Custom { .. } => QualityModelKind::Custom,
            QualityKind::Payg(_) => QualityModelKind::PaygTransformed,
        }
    }

    /// Satisfaction discount `v(q)`.
    pub fn satisfaction(&self, q: f64) -> f64 {
        match &self.kind {
            QualityKind::Canonical => ((-q).exp() - E_INV) / (1.0 - E_INV),
            QualityKind::Custom { v, .. } => v(q),
            QualityKind::Payg(inner) => inner.satisfaction(q),
        }
    }

    pub fn satisfaction_deriv(&self, q: f64) -> f64 {
        match &self.kind {
            QualityKind::Canonical => -(-q).exp() / (1.0 - E_INV),
            QualityKind::Custom { dv, .. } => dv(q),
            QualityKind::Payg(inner) => inner.satisfaction_deriv(q),
        }
    }

    /// Unit implied capacity `w(q)`: capacity per unit of demand needed to
    /// hold congestion at `q`.
    pub fn unit_capacity(&self, q: f64) -> f64 {
        match &self.kind {
            QualityKind::Canonical => (1.0 - q) * (1.0 - q),
            QualityKind::Custom { w, .. } => w(q),
            QualityKind::Payg(inner) => inner.unit_capacity(q) * inner.satisfaction(q),
        }
    }

    pub fn unit_capacity_deriv(&self, q: f64) -> f64 {
        match &self.kind {
            QualityKind::Canonical => -2.0 * (1.0 - q),
            QualityKind::Custom { dw, .. } => dw(q),
            QualityKind::Payg(inner) => {
                inner.unit_capacity_deriv(q) * inner.satisfaction(q)
                    + inner.unit_capacity(q) * inner.satisfaction_deriv(q)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let v0 = self.satisfaction(0.0);
        if (v0 - 1.0).abs() > 1e-9 {
            return Err(Error::assumption(
                "satisfaction normalization",
                format!("v(0) = {v0}, expected 1"),
            ));
        }
        let v1 = self.satisfaction(1.0);
        if v1.abs() > 1e-9 {
            return Err(Error::assumption(
                "satisfaction normalization",
                format!("v(1) = {v1}, expected 0"),
            ));
        }
        let w1 = self.unit_capacity(1.0);
        if w1.abs() > 1e-9 {
            return Err(Error::assumption(
                "unit capacity normalization",
                format!("w(1) = {w1}, expected 0"),
            ));
        }
        let mut prev_v = v0;
        let mut prev_w = self.unit_capacity(0.0);
        for i in 1..=VALIDATION_GRID {
            let q = i as f64 / VALIDATION_GRID as f64;
            let v = self.satisfaction(q);
            if v >= prev_v {
                return Err(Error::assumption(
                    "satisfaction monotonicity",
                    format!("v is not strictly decreasing near q = {q}"),
                ));
            }
            let w = self.unit_capacity(q);
            if !w.is_finite() {
                return Err(Error::assumption(
                    "unit capacity finiteness",
                    format!("w({q}) = {w}; only w(0) may be infinite"),
                ));
            }
            if prev_w.is_finite() && w > prev_w + 1e-12 {
                return Err(Error::assumption(
                    "unit capacity monotonicity",
                    format!("w increases near q = {q}"),
                ));
            }
            prev_v = v;
            prev_w = w;
        }
        self.check_derivative_consistency()?;
        Ok(())
    }

    /// Derivatives must agree with central finite differences at interior
    /// points. The tolerance scales with the derivative magnitude so that
    /// steep models (such as `w` unbounded at 0) are judged fairly.
    fn check_derivative_consistency(&self) -> Result<()> {
        for i in 1..=CHECK_FD_POINTS {
            let q = i as f64 / (CHECK_FD_POINTS + 1) as f64;
            let dv = self.satisfaction_deriv(q);
            let fd = central_diff(|x| self.satisfaction(x), q, CHECK_FD_EPS);
            let tol = 10.0 * CHECK_FD_EPS * dv.abs().max(1.0);
            if (fd - dv).abs() > tol {
                return Err(Error::assumption(
                    "satisfaction derivative consistency",
                    format!("at q = {q}: v′ = {dv} vs finite difference {fd}"),
                ));
            }
            let dw = self.unit_capacity_deriv(q);
            let fd = central_diff(|x| self.unit_capacity(x), q, CHECK_FD_EPS);
            let tol = 10.0 * CHECK_FD_EPS * dw.abs().max(1.0);
            if (fd - dw).abs() > tol {
                return Err(Error::assumption(
                    "unit capacity derivative consistency",
                    format!("at q = {q}: w′ = {dw} vs finite difference {fd}"),
                ));
            }
        }
        Ok(())
    }
}

fn fd_derivative(f: RealFn) -> RealFn {
    Arc::new(move |q: f64| {
        if q < 2.0 * FILL_FD_EPS {
            one_sided_diff(&*f, q, FILL_FD_EPS, 1.0)
        } else if q > 1.0 - 2.0 * FILL_FD_EPS {
            one_sided_diff(&*f, q, FILL_FD_EPS, -1.0)
        } else {
            central_diff(&*f, q, FILL_FD_EPS)
        }
    })
}

// ---------------------------------------------------------------------------
// Virtual functions
// ---------------------------------------------------------------------------

/// Virtual valuation and virtual capacity derived from a distribution and a
/// quality model, with validated regularity.
///
/// Construction locates the unique zero of the virtual valuation, verifies
/// monotonicity of both derived functions on a fixed grid, and classifies the
/// endpoint behavior of the virtual capacity.
#[derive(Clone)]
pub struct VirtualFunctions {
    dist: ValuationDistribution,
    quality: QualityModel,
    virtual_zero: f64,
    vcap_at_zero: Extended,
    vcap_at_one: f64,
    top_virtual_value: f64,
    cfg: NumericsConfig,
}

impl fmt::Debug for VirtualFunctions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VirtualFunctions")
            .field("virtual_zero", &self.virtual_zero)
            .field("vcap_at_zero", &self.vcap_at_zero)
            .field("vcap_at_one", &self.vcap_at_one)
            .finish()
    }
}

impl VirtualFunctions {
    pub fn derive(dist: ValuationDistribution, quality: QualityModel) -> Result<Self> {
        Self::derive_with(dist, quality, NumericsConfig::default())
    }

    pub fn derive_with(
        dist: ValuationDistribution,
        quality: QualityModel,
        cfg: NumericsConfig,
    ) -> Result<Self> {
        cfg.validate()?;

        let n = VALIDATION_GRID;
        let mut grid = Vec::with_capacity(n);
        let mut gvals = Vec::with_capacity(n);
        for i in 0..n {
            let theta = (i + 1) as f64 / (n + 1) as f64;
            grid.push(theta);
            gvals.push(checked_virtual_value(&dist, theta)?);
        }

        let (cell_lo, cell_hi) = locate_sign_change(&grid, &gvals)?;
        let g = |theta: f64| virtual_value_raw(&dist, theta);
        let virtual_zero = crate::numerics::bisect(g, cell_lo, cell_hi, cfg.root_tol)
            .ok_or_else(|| Error::NoSolution("virtual valuation zero refinement failed".into()))?;

        // G must be increasing above its zero.
        let mut prev = None;
        for (theta, gv) in grid.iter().zip(&gvals) {
            if *theta <= virtual_zero {
                continue;
            }
            if let Some(p) = prev {
                if *gv < p - 1e-12 {
                    return Err(Error::assumption(
                        "virtual valuation monotonicity",
                        format!("virtual valuation decreases near θ = {theta}"),
                    ));
                }
            }
            prev = Some(*gv);
        }

        // Virtual capacity must be decreasing on (0, 1).
        let mut prev_h = f64::INFINITY;
        for i in 0..n {
            let q = (i + 1) as f64 / (n + 1) as f64;
            let hv = quality.unit_capacity_deriv(q) / quality.satisfaction_deriv(q);
            if !hv.is_finite() {
                return Err(Error::IllConditioned(format!(
                    "virtual capacity is not finite at q = {q}"
                )));
            }
            if hv > prev_h + 1e-12 {
                return Err(Error::assumption(
                    "virtual capacity monotonicity",
                    format!("virtual capacity increases near q = {q}"),
                ));
            }
            prev_h = hv;
        }

        let vcap_at_one = vcap_endpoint_at_one(&quality)?;
        let vcap_at_zero = vcap_endpoint_at_zero(&quality)?;
        if let Extended::Finite(h0) = vcap_at_zero {
            if h0 <= vcap_at_one {
                return Err(Error::assumption(
                    "virtual capacity monotonicity",
                    format!("h(0) = {h0} does not exceed h(1) = {vcap_at_one}"),
                ));
            }
        }

        let top_virtual_value = checked_virtual_value(&dist, 1.0)?;

        Ok(VirtualFunctions {
            dist,
            quality,
            virtual_zero,
            vcap_at_zero,
            vcap_at_one,
            top_virtual_value,
            cfg,
        })
    }

    pub fn distribution(&self) -> &ValuationDistribution {
        &self.dist
    }

    pub fn quality(&self) -> &QualityModel {
        &self.quality
    }

    pub fn config(&self) -> &NumericsConfig {
        &self.cfg
    }

    /// The unique zero of the virtual valuation in `(0, 1)`.
    pub fn virtual_zero(&self) -> f64 {
        self.virtual_zero
    }

    /// Virtual valuation at the top type; equals 1 whenever `F(1) = 1`.
    pub fn top_virtual_value(&self) -> f64 {
        self.top_virtual_value
    }

    /// Virtual valuation `G(θ) = θ − (1 − F(θ))/f(θ)`.
    ///
    /// Conditioning was verified on the validation grid during `derive`; use
    /// [`Self::virtual_value_checked`] when the input is not known to be in
    /// the validated range.
    pub fn virtual_value(&self, theta: f64) -> f64 {
        virtual_value_raw(&self.dist, theta)
    }

    /// As [`Self::virtual_value`], but reports an ill-conditioned error where
    /// the density is numerically zero instead of returning an infinity.
    pub fn virtual_value_checked(&self, theta: f64) -> Result<f64> {
        checked_virtual_value(&self.dist, theta)
    }

    /// Inverse of the virtual valuation over `[virtual_zero, 1]`, clamped:
    /// arguments at or below 0 map to the zero, arguments at or above `G(1)`
    /// map to 1.
    pub fn virtual_value_inv(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return self.virtual_zero;
        }
        if y >= self.top_virtual_value {
            return 1.0;
        }
        // x_tol 0 runs the bracket down to floating-point exhaustion, well
        // inside the configured tolerance; solver integrands need the
        // inverses noise-free at machine level.
        crate::numerics::bisect(
            |t| virtual_value_raw(&self.dist, t) - y,
            self.virtual_zero,
            1.0,
            0.0,
        )
        .unwrap_or(self.virtual_zero)
    }

    /// Virtual capacity `h(q) = w′(q)/v′(q)`, with the classified endpoint
    /// values at `q = 0` and `q = 1`.
    pub fn virtual_capacity(&self, q: f64) -> f64 {
        if q <= 0.0 {
            return self.vcap_at_zero.as_f64();
        }
        if q >= 1.0 {
            return self.vcap_at_one;
        }
        self.quality.unit_capacity_deriv(q) / self.quality.satisfaction_deriv(q)
    }

    pub fn virtual_capacity_at_zero(&self) -> Extended {
        self.vcap_at_zero
    }

    pub fn virtual_capacity_at_one(&self) -> f64 {
        self.vcap_at_one
    }

    /// Extended inverse of the virtual capacity, defined on `[h(1), +∞)`:
    /// the true inverse on `[h(1), h(0)]` and 0 beyond `h(0)`.
    pub fn virtual_capacity_inv(&self, z: f64) -> f64 {
        if !self.vcap_at_zero.exceeds(z) {
            return 0.0;
        }
        if z <= self.vcap_at_one {
            return 1.0;
        }
        crate::numerics::bisect(|q| self.virtual_capacity(q) - z, 0.0, 1.0, 0.0).unwrap_or(
            if z > self.virtual_capacity(0.5) {
                0.0
            } else {
                1.0
            },
        )
    }
}

fn virtual_value_raw(dist: &ValuationDistribution, theta: f64) -> f64 {
    theta - (1.0 - dist.cdf(theta)) / dist.density(theta)
}

fn checked_virtual_value(dist: &ValuationDistribution, theta: f64) -> Result<f64> {
    let d = dist.density(theta);
    if !d.is_finite() && d > 0.0 {
        // Density blow-up: the hazard term vanishes.
        return Ok(theta);
    }
    if !(d > MIN_DENSITY) {
        return Err(Error::IllConditioned(format!(
            "density at θ = {theta} is {d}; virtual valuation undefined"
        )));
    }
    Ok(theta - (1.0 - dist.cdf(theta)) / d)
}

/// Find the single sign change of the tabulated virtual valuation and return
/// its bracketing cell. Exposed at module level so the detection logic is
/// testable on synthetic data.
fn locate_sign_change(grid: &[f64], gvals: &[f64]) -> Result<(f64, f64)> {
    let mut bracket = None;
    let mut changes = 0;
    for i in 1..grid.len() {
        if gvals[i - 1] < 0.0 && gvals[i] >= 0.0 || gvals[i - 1] >= 0.0 && gvals[i] < 0.0 {
            changes += 1;
            if bracket.is_none() {
                bracket = Some((grid[i - 1], grid[i]));
            }
        }
    }
    match (bracket, changes) {
        (Some(b), 1) => Ok(b),
        (None, _) => Err(Error::assumption(
            "unique virtual valuation zero",
            "virtual valuation has no sign change on (0, 1)".to_string(),
        )),
        (Some(_), n) => Err(Error::assumption(
            "unique virtual valuation zero",
            format!("virtual valuation changes sign {n} times on (0, 1)"),
        )),
    }
}

fn vcap_endpoint_at_one(quality: &QualityModel) -> Result<f64> {
    let direct = quality.unit_capacity_deriv(1.0) / quality.satisfaction_deriv(1.0);
    let value = if direct.is_finite() {
        direct
    } else {
        shrinking_limit(quality, 1.0)?
    };
    if value < -1e-9 {
        return Err(Error::assumption(
            "virtual capacity positivity",
            format!("h(1) = {value} is negative"),
        ));
    }
    Ok(value.max(0.0))
}

fn vcap_endpoint_at_zero(quality: &QualityModel) -> Result<Extended> {
    let direct = quality.unit_capacity_deriv(0.0) / quality.satisfaction_deriv(0.0);
    if direct.is_finite() {
        return Ok(Extended::Finite(direct));
    }
    if direct.is_infinite() && direct > 0.0 {
        return Ok(Extended::Infinite);
    }
    // 0/0 or other indeterminate form: classify by a shrinking one-sided grid.
    let probes: Vec<f64> = [1e-4, 1e-6, 1e-8]
        .iter()
        .map(|&eps| quality.unit_capacity_deriv(eps) / quality.satisfaction_deriv(eps))
        .collect();
    if probes.iter().any(|p| p.is_nan()) {
        return Err(Error::IllConditioned(
            "virtual capacity limit at q = 0 cannot be classified".into(),
        ));
    }
    if probes[2] > 1e12 || (probes[2] > 2.0 * probes[1] && probes[1] > 2.0 * probes[0]) {
        Ok(Extended::Infinite)
    } else {
        Ok(Extended::Finite(probes[2]))
    }
}

fn shrinking_limit(quality: &QualityModel, at: f64) -> Result<f64> {
    let mut last = f64::NAN;
    for &eps in &[1e-4, 1e-5, 1e-6, 1e-7, 1e-8] {
        let q = if at == 0.0 { eps } else { 1.0 - eps };
        let v = quality.unit_capacity_deriv(q) / quality.satisfaction_deriv(q);
        if v.is_finite() {
            last = v;
        }
    }
    if last.is_nan() {
        return Err(Error::IllConditioned(format!(
            "virtual capacity limit at q = {at} cannot be evaluated"
        )));
    }
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn uniform() -> ValuationDistribution {
        ValuationDistribution::power(1.0).unwrap()
    }

    #[test]
    fn power_family_closed_forms() {
        let d = uniform();
        assert_eq!(d.cdf(0.5), 0.5);
        assert_eq!(d.density(0.5), 1.0);

        let d = ValuationDistribution::power(2.0).unwrap();
        assert!((d.cdf(0.5) - 0.25).abs() < 1e-15);
        assert!((d.density(0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn power_rejects_nonpositive_exponent() {
        assert!(matches!(
            ValuationDistribution::power(0.0),
            Err(Error::InvalidParameter(_))
        ));
        assert!(ValuationDistribution::power(-1.0).is_err());
        assert!(ValuationDistribution::power(f64::NAN).is_err());
    }

    #[test]
    fn power_half_density_blows_up_near_zero() {
        // Construction succeeds; the density is unbounded as θ → 0⁺.
        let d = ValuationDistribution::power(0.5).unwrap();
        let mut prev = d.density(1.0);
        for &theta in &[1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6] {
            let f = d.density(theta);
            assert!(f > prev, "density should grow toward 0, got {f} at {theta}");
            prev = f;
        }
        assert!(d.density(1e-6) > 100.0);
        // ...and the derived functions are still admissible.
        let vf = VirtualFunctions::derive(d, QualityModel::canonical()).unwrap();
        assert!((vf.virtual_zero() - 4.0 / 9.0).abs() < 1e-9);
    }

    #[test]
    fn custom_distribution_round_trip() {
        // Triangle-free: F(θ) = θ² with f(θ) = 2θ fails positivity at 0? No:
        // the grid is interior, so f > 0 holds; this matches power(2).
        let d = ValuationDistribution::custom(|t| 2.0 * t, |t| t * t).unwrap();
        assert!((d.cdf(0.5) - 0.25).abs() < 1e-12);
        assert!((d.quantile(0.25, 1e-12) - 0.5).abs() < 1e-10);
    }

    #[test]
    fn custom_distribution_inconsistent_pair_rejected() {
        let err = ValuationDistribution::custom(|_| 1.0, |t| t * t).unwrap_err();
        assert!(matches!(err, Error::AssumptionViolation { .. }), "{err}");
    }

    #[test]
    fn canonical_quality_endpoints_and_derivatives() {
        let q = QualityModel::canonical();
        assert!((q.satisfaction(0.0) - 1.0).abs() < 1e-15);
        assert!(q.satisfaction(1.0).abs() < 1e-15);
        assert!((q.unit_capacity(0.0) - 1.0).abs() < 1e-15);
        assert_eq!(q.unit_capacity(1.0), 0.0);
        // frozen: v(0.5) computed independently
        assert!((q.satisfaction(0.5) - 0.3775406687981454).abs() < 1e-12);
        for i in 1..=CHECK_FD_POINTS {
            let x = i as f64 / (CHECK_FD_POINTS + 1) as f64;
            let fd = central_diff(|t| q.satisfaction(t), x, CHECK_FD_EPS);
            assert!((fd - q.satisfaction_deriv(x)).abs() <= 10.0 * CHECK_FD_EPS);
            let fd = central_diff(|t| q.unit_capacity(t), x, CHECK_FD_EPS);
            assert!((fd - q.unit_capacity_deriv(x)).abs() <= 10.0 * CHECK_FD_EPS);
        }
    }

    #[test]
    fn custom_quality_without_derivatives_gets_fd_fill() {
        let m = QualityModel::custom(
            |q| ((-q).exp() - E_INV) / (1.0 - E_INV),
            |q| (1.0 - q) * (1.0 - q),
            None,
            None,
        )
        .unwrap();
        assert!((m.satisfaction_deriv(0.3) - QualityModel::canonical().satisfaction_deriv(0.3))
            .abs()
            < 1e-6);
        assert_eq!(m.kind_tag(), QualityModelKind::Custom);
    }

    #[test]
    fn quality_rejects_bad_normalization() {
        let err = QualityModel::custom(|q| 2.0 - q, |q| 1.0 - q, None, None).unwrap_err();
        assert!(matches!(err, Error::AssumptionViolation { .. }), "{err}");
    }

    #[test]
    fn payg_transform_examples() {
        let base = QualityModel::canonical();
        let p = base.payg_transform().unwrap();
        assert_eq!(p.kind_tag(), QualityModelKind::PaygTransformed);
        assert_eq!(p.unit_capacity(1.0), 0.0);
        assert!((p.unit_capacity(0.0) - 1.0).abs() < 1e-12);
        // frozen: 0.25 · v(0.5)
        assert!((p.unit_capacity(0.5) - 0.09438516719953635).abs() < 1e-12);
        // derivative identity w′v + wv′
        let q = 0.37;
        let expect = base.unit_capacity_deriv(q) * base.satisfaction(q)
            + base.unit_capacity(q) * base.satisfaction_deriv(q);
        assert!((p.unit_capacity_deriv(q) - expect).abs() < 1e-14);
    }

    #[test]
    fn uniform_virtuals_match_closed_form() {
        let vf = VirtualFunctions::derive(uniform(), QualityModel::canonical()).unwrap();
        assert!((vf.virtual_zero() - 0.5).abs() < 1e-10);
        for &t in &[0.1, 0.5, 0.73, 1.0] {
            assert!((vf.virtual_value(t) - (2.0 * t - 1.0)).abs() < 1e-12);
        }
        assert!((vf.top_virtual_value() - 1.0).abs() < 1e-12);
        // G⁻¹ for the uniform case is (1 + y)/2
        for &y in &[0.0, 0.2, 0.55, 0.99] {
            assert!((vf.virtual_value_inv(y) - (1.0 + y) / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn power_two_virtual_zero() {
        let vf = VirtualFunctions::derive(
            ValuationDistribution::power(2.0).unwrap(),
            QualityModel::canonical(),
        )
        .unwrap();
        assert!((vf.virtual_zero() - 1.0 / 3.0_f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn canonical_virtual_capacity_endpoints() {
        let vf = VirtualFunctions::derive(uniform(), QualityModel::canonical()).unwrap();
        assert_eq!(vf.virtual_capacity_at_one(), 0.0);
        // frozen: 2(1 − e^{−1})
        let h0 = vf.virtual_capacity_at_zero().finite().unwrap();
        assert!((h0 - 1.2642411176571153).abs() < 1e-9);
        // one-sided probes agree with the endpoint classification
        assert!((vf.virtual_capacity(1e-8) - h0).abs() < 1e-7);
        assert!(vf.virtual_capacity(1.0 - 1e-8).abs() < 1e-7);
    }

    #[test]
    fn extended_inverse_contract() {
        let vf = VirtualFunctions::derive(uniform(), QualityModel::canonical()).unwrap();
        let h0 = vf.virtual_capacity_at_zero().finite().unwrap();
        // zero beyond h(0), one at h(1)
        assert_eq!(vf.virtual_capacity_inv(h0 + 0.5), 0.0);
        assert_eq!(vf.virtual_capacity_inv(1e9), 0.0);
        assert_eq!(vf.virtual_capacity_inv(0.0), 1.0);
        // true inverse inside [h(1), h(0)]
        for i in 1..64 {
            let z = h0 * i as f64 / 64.0;
            let q = vf.virtual_capacity_inv(z);
            assert!(
                (vf.virtual_capacity(q) - z).abs() < 1e-8,
                "round trip failed at z = {z}"
            );
        }
        // nonincreasing over the whole extended domain
        let mut prev = f64::INFINITY;
        for i in 0..1024 {
            let z = 2.0 * h0 * i as f64 / 1023.0;
            let q = vf.virtual_capacity_inv(z);
            assert!(q <= prev + 1e-12);
            prev = q;
        }
    }

    #[test]
    fn virtual_value_round_trip() {
        for alpha in [0.5, 1.0, 2.0, 4.0] {
            let vf = VirtualFunctions::derive(
                ValuationDistribution::power(alpha).unwrap(),
                QualityModel::canonical(),
            )
            .unwrap();
            assert!(vf.virtual_value(vf.virtual_zero()).abs() < 1e-9);
            for i in 0..=32 {
                let y = i as f64 / 32.0;
                let t = vf.virtual_value_inv(y);
                assert!(
                    (vf.virtual_value(t) - y).abs() < 1e-8,
                    "alpha {alpha}, y {y}"
                );
            }
        }
    }

    #[test]
    fn payg_preserves_admissibility() {
        let payg = QualityModel::canonical().payg_transform().unwrap();
        let vf = VirtualFunctions::derive(uniform(), payg).unwrap();
        // h_payg(q) = h(q)v(q) + w(q); at 0 this is h(0) + 1
        let expect = 1.2642411176571153 + 1.0;
        assert!((vf.virtual_capacity_at_zero().finite().unwrap() - expect).abs() < 1e-8);
        assert!(vf.virtual_capacity_at_one().abs() < 1e-9);
    }

    #[test]
    fn increasing_virtual_capacity_is_rejected() {
        // w(q) = sqrt(1 − q) is decreasing with w(1) = 0, but h = w′/v′ grows.
        let quality = QualityModel::custom(
            |q| ((-q).exp() - E_INV) / (1.0 - E_INV),
            |q| (1.0 - q).sqrt(),
            Some(Arc::new(|q: f64| -(-q).exp() / (1.0 - E_INV))),
            Some(Arc::new(|q: f64| -0.5 / (1.0 - q).max(1e-300).sqrt())),
        )
        .unwrap();
        let err = VirtualFunctions::derive(uniform(), quality).unwrap_err();
        match err {
            Error::AssumptionViolation { assumption, .. } => {
                assert!(assumption.contains("virtual capacity"), "{assumption}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn wiggly_virtual_valuation_is_rejected() {
        // Density with a sharp interior bump: the virtual valuation has a
        // unique zero but is not monotone above it.
        let (k, m, r) = (9.0_f64, 0.55_f64, 0.12_f64);
        let bint = |u: f64| u - 2.0 * u.powi(3) / 3.0 + u.powi(5) / 5.0;
        let bump_mass = k * r * (bint(1.0) - bint(-1.0));
        let c = 1.0 / (1.0 + bump_mass);
        let dens = move |x: f64| {
            let u = (x - m) / r;
            let b = if u.abs() <= 1.0 {
                k * (1.0 - u * u) * (1.0 - u * u)
            } else {
                0.0
            };
            c * (1.0 + b)
        };
        let cdf = move |x: f64| {
            let u = ((x - m) / r).clamp(-1.0, 1.0);
            c * (x + k * r * (bint(u) - bint(-1.0)))
        };
        let dist = ValuationDistribution::custom(dens, cdf).unwrap();
        let err = VirtualFunctions::derive(dist, QualityModel::canonical()).unwrap_err();
        match err {
            Error::AssumptionViolation { assumption, .. } => {
                assert!(assumption.contains("virtual valuation"), "{assumption}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn heavily_skewed_power_is_ill_conditioned() {
        let dist = ValuationDistribution::power(12.0).unwrap();
        let err = VirtualFunctions::derive(dist, QualityModel::canonical()).unwrap_err();
        assert!(matches!(err, Error::IllConditioned(_)), "{err}");
    }

    #[test]
    fn sign_change_detection_on_synthetic_data() {
        let grid = [0.1, 0.3, 0.5, 0.7, 0.9];
        // no sign change
        let err = locate_sign_change(&grid, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap_err();
        assert!(matches!(err, Error::AssumptionViolation { .. }));
        // multiple sign changes
        let err = locate_sign_change(&grid, &[-1.0, 1.0, -1.0, 1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::AssumptionViolation { .. }));
        // exactly one
        let (lo, hi) = locate_sign_change(&grid, &[-2.0, -1.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!((lo, hi), (0.3, 0.5));
    }

    #[test]
    fn infinite_unit_capacity_at_zero_is_classified() {
        // w(q) = 1/q − 1: unbounded at 0, w(1) = 0, h(0) = +∞, h(1) = e − 1.
        let quality = QualityModel::custom(
            |q| ((-q).exp() - E_INV) / (1.0 - E_INV),
            |q| 1.0 / q - 1.0,
            Some(Arc::new(|q: f64| -(-q).exp() / (1.0 - E_INV))),
            Some(Arc::new(|q: f64| -1.0 / (q * q))),
        )
        .unwrap();
        let vf = VirtualFunctions::derive(uniform(), quality).unwrap();
        assert!(vf.virtual_capacity_at_zero().is_infinite());
        assert!((vf.virtual_capacity_at_one() - (std::f64::consts::E - 1.0)).abs() < 1e-9);
    }

    #[test]
    fn types_are_send_and_sync() {
        fn check<T: Send + Sync>() {}
        check::<ValuationDistribution>();
        check::<QualityModel>();
        check::<VirtualFunctions>();
    }
}
