//! Kernel shapes and boundary-corrected smoothing kernels.
//!
//! ## Purpose
//!
//! Two-argument smoothing kernels `W_h(u, v)` built from a compactly
//! supported shape, rescaled by a bandwidth and linearly corrected near the
//! interval ends so that exact moment conditions hold on a closed interval.
//! Two correction sides exist, because the pair smoother needs
//! normalization in opposite arguments:
//!
//! * [`Side::Data`]: `∫ W_h(u, v) dv = 1` and `∫ (v-u) W_h(u, v) dv = 0`
//!   for every evaluation point `u` — the usual boundary kernel used when
//!   averaging over data.
//! * [`Side::Eval`]: `∫ W_h(u, v) du = 1` and `∫ (v-u) W_h(u, v) du = 0`
//!   for every data point `v` — so that integrating an estimate over its
//!   evaluation argument reproduces lower-order estimates exactly.
//!
//! ## Design notes
//!
//! * The correction factor is linear in the standardized lag: `W_h(u,v) =
//!   (A + B·t)·shape(t)/h` with `t = (v-u)/h`, where `A = μ₂/D`, `B = -μ₁/D`,
//!   `D = μ₀μ₂ - μ₁²`, and `μ_ℓ` are the shape moments clipped to the part
//!   of the support that stays inside the interval. For windows entirely
//!   inside the interval this reduces *exactly* to the conventional scaled
//!   kernel (`A = 1`, `B = 0`).
//! * [`Biweight`] carries closed-form clipped moments (polynomial
//!   antiderivatives). Any other [`KernelShape`] falls back to adaptive
//!   Simpson quadrature, which doubles as the test oracle for the closed
//!   forms.
//! * [`Compensating`] is the shape used on the [`Side::Eval`] axis of pair
//!   smoothing: a difference of two rescalings of the base shape with unit
//!   mass and *negative* second moment, arranged so that pair estimates
//!   marginalize onto the matching lower-order marginal estimates.
//!
//! ## Invariants
//!
//! * `Conventional` mode never applies a correction on either side.
//! * Bandwidths must satisfy `h < (hi - lo)/2`; construction fails otherwise.

use crate::error::{Error, Result};

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Guard threshold for the correction denominator `μ₀μ₂ - μ₁²`.
const SINGULAR_TOL: f64 = 1e-12;

/// A symmetric, compactly supported kernel shape with unit mass.
pub trait KernelShape: Send + Sync {
    /// Shape value at standardized lag `u`; zero outside the support.
    fn eval(&self, u: f64) -> f64;

    /// Half-width `s` of the support `[-s, s]`.
    fn support_halfwidth(&self) -> f64;

    /// Clipped moment `∫_a^b t^ℓ shape(t) dt`, with `[a, b]` intersected
    /// against the support. Returns 0 when the intersection is empty.
    ///
    /// The default implementation integrates numerically; shapes with
    /// closed forms should override it.
    fn incomplete_moment(&self, ell: u32, a: f64, b: f64) -> f64 {
        let s = self.support_halfwidth();
        let lo = a.max(-s);
        let hi = b.min(s);
        if hi <= lo {
            return 0.0;
        }
        adaptive_simpson(&|t: f64| t.powi(ell as i32) * self.eval(t), lo, hi, 1e-12)
    }
}

/// Quartic (biweight) shape `(15/16)(1-u²)²` on `[-1, 1]`.
///
/// Key constants: mass 1, second moment `1/7`, roughness `∫ shape² = 5/7`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Biweight;

impl Biweight {
    /// Second moment of the shape (its "curvature constant").
    pub const SECOND_MOMENT: f64 = 1.0 / 7.0;
    /// `∫ shape(u)² du`.
    pub const ROUGHNESS: f64 = 5.0 / 7.0;
}

impl KernelShape for Biweight {
    fn eval(&self, u: f64) -> f64 {
        if u.abs() <= 1.0 {
            let w = 1.0 - u * u;
            0.9375 * w * w
        } else {
            0.0
        }
    }

    fn support_halfwidth(&self) -> f64 {
        1.0
    }

    fn incomplete_moment(&self, ell: u32, a: f64, b: f64) -> f64 {
        let lo = a.max(-1.0);
        let hi = b.min(1.0);
        if hi <= lo {
            return 0.0;
        }
        // t^ℓ (1-t²)² = t^ℓ - 2 t^(ℓ+2) + t^(ℓ+4); integrate term by term.
        let anti = |t: f64| {
            let l = ell as i32;
            0.9375
                * (t.powi(l + 1) / f64::from(l + 1) - 2.0 * t.powi(l + 3) / f64::from(l + 3)
                    + t.powi(l + 5) / f64::from(l + 5))
        };
        anti(hi) - anti(lo)
    }
}

/// Difference-of-rescalings shape with unit mass, zero first moment and
/// second moment equal to *minus* the base's: the shape that compensates
/// the evaluation-side smoothing of pair estimates.
///
/// `L(u) = 2·K_{1/√2}(u) - K_{√2}(u)` where `K_b(u) = K(u/b)/b`. The support
/// half-width is `√2` times the base's.
#[derive(Debug, Clone, Copy)]
pub struct Compensating<S: KernelShape> {
    base: S,
}

/// Build the compensating shape for a base shape.
pub fn make_compensating<S: KernelShape>(base: S) -> Compensating<S> {
    Compensating { base }
}

impl<S: KernelShape> KernelShape for Compensating<S> {
    fn eval(&self, u: f64) -> f64 {
        2.0 * SQRT_2 * self.base.eval(SQRT_2 * u) - self.base.eval(u / SQRT_2) / SQRT_2
    }

    fn support_halfwidth(&self) -> f64 {
        SQRT_2 * self.base.support_halfwidth()
    }

    fn incomplete_moment(&self, ell: u32, a: f64, b: f64) -> f64 {
        // ∫_a^b t^ℓ K_c(t) dt = c^ℓ ∫_{a/c}^{b/c} s^ℓ K(s) ds
        let narrow = 1.0 / SQRT_2;
        let wide = SQRT_2;
        2.0 * narrow.powi(ell as i32) * self.base.incomplete_moment(ell, a / narrow, b / narrow)
            - wide.powi(ell as i32) * self.base.incomplete_moment(ell, a / wide, b / wide)
    }
}

/// Which argument of `W_h(u, v)` the moment conditions are imposed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Conditions hold integrating over `v` (the data argument).
    Data,
    /// Conditions hold integrating over `u` (the evaluation argument).
    Eval,
}

/// Whether boundary correction is applied at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelMode {
    /// Linear boundary correction near the interval ends.
    Corrected,
    /// Plain rescaled shape everywhere (loses mass near the ends).
    Conventional,
}

impl std::str::FromStr for KernelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corrected" => Ok(KernelMode::Corrected),
            "conventional" => Ok(KernelMode::Conventional),
            other => Err(Error::Config(format!(
                "unknown kernel mode '{other}' (expected 'corrected' or 'conventional')"
            ))),
        }
    }
}

impl std::fmt::Display for KernelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KernelMode::Corrected => "corrected",
            KernelMode::Conventional => "conventional",
        })
    }
}

/// A bandwidth-scaled kernel tied to a closed interval, with optional
/// boundary correction on one side.
#[derive(Debug, Clone)]
pub struct BoundaryKernel<S: KernelShape> {
    shape: S,
    h: f64,
    lo: f64,
    hi: f64,
    side: Side,
    mode: KernelMode,
}

impl<S: KernelShape> BoundaryKernel<S> {
    pub fn new(shape: S, h: f64, lo: f64, hi: f64, side: Side, mode: KernelMode) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!(
                "kernel interval [{lo}, {hi}] must be finite with lo < hi"
            )));
        }
        if !(h.is_finite() && h > 0.0 && h < (hi - lo) / 2.0) {
            return Err(Error::Config(format!(
                "bandwidth {h} must satisfy 0 < h < (hi - lo)/2 = {}",
                (hi - lo) / 2.0
            )));
        }
        Ok(BoundaryKernel {
            shape,
            h,
            lo,
            hi,
            side,
            mode,
        })
    }

    pub fn shape(&self) -> &S {
        &self.shape
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    /// Reach of the scaled shape in `x` units.
    pub fn reach(&self) -> f64 {
        self.h * self.shape.support_halfwidth()
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if x >= self.lo && x <= self.hi {
            Ok(())
        } else {
            Err(Error::Domain {
                x,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }

    /// Clipped shape moment `μ_ℓ(x)` in the side's own argument: the
    /// integral of `t^ℓ shape(t)` over the standardized lags that keep the
    /// *other* argument inside the interval.
    pub fn mu(&self, ell: u32, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        Ok(self.mu_unchecked(ell, x))
    }

    fn mu_unchecked(&self, ell: u32, x: f64) -> f64 {
        match self.side {
            // v = x + h t must stay in [lo, hi]
            Side::Data => self
                .shape
                .incomplete_moment(ell, (self.lo - x) / self.h, (self.hi - x) / self.h),
            // u = x - h t must stay in [lo, hi]
            Side::Eval => self
                .shape
                .incomplete_moment(ell, (x - self.hi) / self.h, (x - self.lo) / self.h),
        }
    }

    /// Whether the scaled support around `x` sits entirely inside the
    /// interval, so that clipping (and hence correction) is a no-op.
    fn window_is_interior(&self, x: f64) -> bool {
        let reach = self.reach();
        x - self.lo >= reach && self.hi - x >= reach
    }

    /// Correction coefficients `(A, B)` at `x`, with
    /// `W_h = (A + B·t)·shape(t)/h`. Conventional mode — and any window that
    /// does not touch the interval ends — returns exactly `(1, 0)`.
    pub fn correction(&self, x: f64) -> Result<(f64, f64)> {
        self.check_domain(x)?;
        if self.mode == KernelMode::Conventional || self.window_is_interior(x) {
            return Ok((1.0, 0.0));
        }
        let m0 = self.mu_unchecked(0, x);
        let m1 = self.mu_unchecked(1, x);
        let m2 = self.mu_unchecked(2, x);
        let det = m0 * m2 - m1 * m1;
        let scale = m0.abs() * m2.abs() + m1 * m1;
        if det.abs() <= SINGULAR_TOL * scale || det == 0.0 {
            return Err(Error::SingularCorrection { x });
        }
        Ok((m2 / det, -m1 / det))
    }

    /// Kernel value `W_h(u, v)`. The side's own argument must lie in the
    /// interval; the lag argument is free (the shape vanishes off-support).
    pub fn eval(&self, u: f64, v: f64) -> Result<f64> {
        let x = match self.side {
            Side::Data => u,
            Side::Eval => v,
        };
        let (a, b) = self.correction(x)?;
        let t = (v - u) / self.h;
        Ok((a + b * t) * self.shape.eval(t) / self.h)
    }

    /// Moment of the *effective* (corrected) kernel at `x`:
    /// `(μ₂ μ_ℓ - μ₁ μ_{ℓ+1}) / (μ₀ μ₂ - μ₁²)`.
    ///
    /// Identically 1 for `ell = 0` and 0 for `ell = 1`; for `ell = 2` it is
    /// the local curvature constant entering bias expansions, equal to the
    /// shape's second moment wherever the window avoids the boundary.
    pub fn effective_moment(&self, ell: u32, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        let m0 = self.mu_unchecked(0, x);
        let m1 = self.mu_unchecked(1, x);
        let m2 = self.mu_unchecked(2, x);
        let det = m0 * m2 - m1 * m1;
        let scale = m0.abs() * m2.abs() + m1 * m1;
        if det.abs() <= SINGULAR_TOL * scale || det == 0.0 {
            return Err(Error::SingularCorrection { x });
        }
        let me = self.mu_unchecked(ell, x);
        let me1 = self.mu_unchecked(ell + 1, x);
        Ok((m2 * me - m1 * me1) / det)
    }
}

/// Adaptive Simpson quadrature (recursive bisection with error control).
///
/// Backs the generic [`KernelShape::incomplete_moment`] path; exact shapes
/// override that method and never touch this.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let err = left + right - whole;
        if depth == 0 || err.abs() <= 15.0 * tol {
            left + right + err / 15.0
        } else {
            rec(f, a, fa, m, fm, left, lm, flm, tol * 0.5, depth - 1)
                + rec(f, m, fm, b, fb, right, rm, frm, tol * 0.5, depth - 1)
        }
    }
    if b <= a {
        return 0.0;
    }
    let (fa, fb) = (f(a), f(b));
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, whole, m, fm, tol, 48)
}
