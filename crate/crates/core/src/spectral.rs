//! Spectral representation of return laws.
//!
//! A law `P` is embedded through its centred characteristic function
//! `Phi(P)^(w) = phi_P(w) - 1`. For atomic laws this is a finite exponential
//! sum, stored exactly as a [`SignedExpSum`]. The regularised geometry `H_eps`
//! weights spectra by `(w^2 + eps)^-1`; for exponential sums its inner product
//! has the closed form
//!
//! ```text
//! <u, v> = 1 / (2 sqrt(eps)) * sum_jk u_j v_k exp(-|x_j - y_k| sqrt(eps))
//! ```
//!
//! from `integral e^{iwd} / (w^2 + eps) dw = pi / sqrt(eps) * exp(-|d| sqrt(eps))`.
//! Quadrature versions of every norm are kept alongside as oracles.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bellman::{bellman_apply, field_distance, BellmanConfig};
use crate::distributions::{
    cramer_distance, merge_signed_terms, signed_difference, AtomicDistribution, JumpFunction,
    MASS_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::mdp::{Backend, FiniteMdp, Policy, ReturnField, Support};
use crate::quadrature::{geometric_layout, subdivisions, GaussLegendre, PanelIntegral, PanelRule};

/// Finite exponential sum `w -> sum_j c_j e^{i w x_j}` with real coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SignedExpSum {
    terms: Vec<(f64, f64)>,
}

impl SignedExpSum {
    /// Sorts by location, merges coincident locations and drops zero terms.
    pub fn new(mut terms: Vec<(f64, f64)>) -> Result<Self> {
        if terms.iter().any(|(x, c)| !x.is_finite() || !c.is_finite()) {
            return Err(Error::NonFinite("exponential sum term".into()));
        }
        merge_signed_terms(&mut terms);
        Ok(Self { terms })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn terms(&self) -> &[(f64, f64)] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.1).sum()
    }

    pub fn eval(&self, omega: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|&(x, c)| {
                let (s, co) = (omega * x).sin_cos();
                Complex64::new(c * co, c * s)
            })
            .sum()
    }

    pub fn sub(&self, other: &SignedExpSum) -> SignedExpSum {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().map(|&(x, c)| (x, -c)));
        merge_signed_terms(&mut terms);
        SignedExpSum { terms }
    }

    /// Coefficient at location `x`, zero if absent.
    pub fn coefficient_at(&self, x: f64) -> f64 {
        self.terms
            .binary_search_by(|t| t.0.total_cmp(&x))
            .map(|i| self.terms[i].1)
            .unwrap_or(0.0)
    }
}

/// `phi_P(w) = E e^{i w X}`.
pub fn char_fn_eval(law: &AtomicDistribution, omega: f64) -> Complex64 {
    law.atoms()
        .map(|(x, p)| {
            let (s, c) = (omega * x).sin_cos();
            Complex64::new(p * c, p * s)
        })
        .sum()
}

/// `Phi(P)`: the atoms of `P` plus coefficient `-1` at the origin.
pub fn spectral_embed(law: &AtomicDistribution) -> SignedExpSum {
    let mut terms: Vec<(f64, f64)> = law.atoms().collect();
    terms.push((0.0, -1.0));
    merge_signed_terms(&mut terms);
    SignedExpSum { terms }
}

/// Regularisation strength of `H_eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsGeometry {
    epsilon: f64,
}

impl EpsGeometry {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "epsilon {epsilon} must be positive"
            )));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Closed-form `H_eps` inner product of two exponential sums.
///
/// Evaluated as `sum u_j v_k expm1(-|d| s) / (2s) + (sum u)(sum v) / (2s)`
/// with `s = sqrt(eps)`, which is the kernel sum rearranged so that nothing
/// cancels when the coefficient sums vanish and `eps` is small.
pub fn h_eps_inner(u: &SignedExpSum, v: &SignedExpSum, geom: EpsGeometry) -> f64 {
    let s = geom.epsilon.sqrt();
    let mut acc = 0.0;
    for &(x, a) in &u.terms {
        for &(y, b) in &v.terms {
            acc += a * b * (-(x - y).abs() * s).exp_m1();
        }
    }
    (acc + u.coefficient_sum() * v.coefficient_sum()) / (2.0 * s)
}

pub fn h_eps_norm(u: &SignedExpSum, geom: EpsGeometry) -> f64 {
    h_eps_inner(u, u, geom).max(0.0).sqrt()
}

/// `|| Phi(P1) - Phi(P2) ||_{H_eps}`.
pub fn reg_distance(p1: &AtomicDistribution, p2: &AtomicDistribution, geom: EpsGeometry) -> f64 {
    let delta = SignedExpSum {
        terms: signed_difference(p1, p2),
    };
    h_eps_norm(&delta, geom)
}

/// Fourier transform of `F_{P1} - F_{P2}` (symmetric convention) at `w != 0`:
/// `(phi_1(-w) - phi_2(-w)) / (i w sqrt(2 pi))`.
pub fn cdf_diff_fourier(
    p1: &AtomicDistribution,
    p2: &AtomicDistribution,
    omega: f64,
) -> Result<Complex64> {
    if omega == 0.0 || !omega.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "frequency {omega} must be finite and nonzero"
        )));
    }
    let num = char_fn_eval(p1, -omega) - char_fn_eval(p2, -omega);
    Ok(num / Complex64::new(0.0, omega * (2.0 * PI).sqrt()))
}

/// Direct numerical Fourier transform `(2 pi)^{-1/2} integral H(x) e^{-iwx} dx`
/// of a jump function, integrating each constant piece by Gauss–Legendre.
pub fn numerical_fourier_transform(h: &JumpFunction, omega: f64, rule: &PanelRule) -> Complex64 {
    let max_width = if omega == 0.0 {
        f64::INFINITY
    } else {
        PI / omega.abs()
    };
    let mut re = 0.0;
    let mut im = 0.0;
    for (a, b, level) in h.pieces() {
        re += level
            * rule
                .integrate_uniform(&|x: f64| (omega * x).cos(), a, b, max_width)
                .value;
        im -= level
            * rule
                .integrate_uniform(&|x: f64| (omega * x).sin(), a, b, max_width)
                .value;
    }
    Complex64::new(re, im) / (2.0 * PI).sqrt()
}

/// Truncation and resolution parameters of the quadrature oracle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Upper frequency cut-off.
    pub omega_max: f64,
    pub panels_per_decade: usize,
    pub nodes_per_panel: usize,
    /// Frequencies below this are handled analytically for the singular weight.
    pub omega_inner: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            omega_max: 1e4,
            panels_per_decade: 8,
            nodes_per_panel: 32,
            omega_inner: 1e-6,
        }
    }
}

impl QuadratureSpec {
    pub fn with_omega_max(mut self, omega_max: f64) -> Self {
        self.omega_max = omega_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_inner >= 0.0 && self.omega_max > self.omega_inner)
            || !self.omega_max.is_finite()
        {
            return Err(Error::InvalidParameter(format!(
                "quadrature needs omega_max > omega_inner >= 0, got {} and {}",
                self.omega_max, self.omega_inner
            )));
        }
        if self.panels_per_decade == 0 || self.nodes_per_panel == 0 {
            return Err(Error::InvalidParameter(
                "panel and node counts must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn rule(&self) -> PanelRule {
        PanelRule::new(self.nodes_per_panel)
    }

    /// Start of the geometric panels for non-singular weights.
    fn split(&self) -> f64 {
        if self.omega_inner > 0.0 {
            self.omega_inner
        } else {
            1e-6_f64.min(self.omega_max / 10.0)
        }
    }
}

/// Error accounting of a quadrature estimate of a squared norm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    /// Bound on the error of the analytic tail beyond `omega_max`.
    pub tail_bound: f64,
    /// Analytic contribution of `|w| < omega_inner` (singular weight only).
    pub inner_correction: f64,
    /// Sum over panels of the fine-vs-coarse rule discrepancy.
    pub panel_estimate: f64,
    /// Analytic contribution of `|w| > omega_max`, already added to the estimate.
    pub tail_correction: f64,
    /// Bound on the error of `inner_correction`.
    pub inner_bound: f64,
}

impl ErrorBudget {
    /// Total error bound on the squared quantity.
    pub fn total(&self) -> f64 {
        self.tail_bound + self.panel_estimate + self.inner_bound
    }
}

/// A quadrature estimate of a norm together with its error budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub value_sq: f64,
    pub value: f64,
    pub budget: ErrorBudget,
    /// Error bound transferred from the squared quantity to `value`.
    pub value_budget: f64,
}

impl SpectralEstimate {
    fn new(value_sq: f64, budget: ErrorBudget) -> Self {
        let value = value_sq.max(0.0).sqrt();
        let b = budget.total();
        let value_budget = if value > 0.0 {
            b.sqrt().min(b / value)
        } else {
            b.sqrt()
        };
        Self {
            value_sq,
            value,
            budget,
            value_budget,
        }
    }
}

/// Sine integral complement `pi/2 - Si(x)` for `x >= 0`.
fn sine_integral_complement(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= 2.0 {
        // Si(x) = sum (-1)^k x^(2k+1) / ((2k+1) (2k+1)!)
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= -x * x / ((2.0 * k) * (2.0 * k + 1.0));
            let add = term / (2.0 * k + 1.0);
            sum += add;
            if add.abs() < 1e-18 * sum.abs().max(1e-300) {
                break;
            }
        }
        FRAC_PI_2 - sum
    } else {
        // Continued fraction for E1(ix), evaluated by the modified Lentz method.
        let tiny = 1e-300;
        let mut b = Complex64::new(1.0, x);
        let mut c = Complex64::new(1.0 / tiny, 0.0);
        let mut d = Complex64::new(1.0, 0.0) / b;
        let mut h = d;
        for i in 2..100_000 {
            let a = -((i - 1) * (i - 1)) as f64;
            b += Complex64::new(2.0, 0.0);
            d = Complex64::new(1.0, 0.0) / (d * a + b);
            c = b + Complex64::new(a, 0.0) / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).norm() < 1e-16 {
                break;
            }
        }
        let (s, co) = x.sin_cos();
        let h = Complex64::new(co, -s) * h;
        -h.im
    }
}

/// `integral_W^inf cos(w d) / w^2 dw = cos(W d) / W - |d| (pi/2 - Si(W |d|))`.
fn cosine_tail(d: f64, w: f64) -> f64 {
    let d = d.abs();
    (w * d).cos() / w - d * sine_integral_complement(w * d)
}

/// Analytic tail `(1/pi) integral_W^inf |sum c_j e^{iwx_j}|^2 / w^2 dw`
/// and a bound on its evaluation error.
fn inverse_square_tail(terms: &[(f64, f64)], w: f64) -> (f64, f64) {
    let mut value = 0.0;
    let mut bound = 0.0;
    for &(x, a) in terms {
        for &(y, b) in terms {
            let d = (x - y).abs();
            value += a * b * cosine_tail(d, w);
            bound += (a * b).abs() * 1e-14 * (1.0 / w + d);
        }
    }
    (value / PI, bound / PI)
}

/// `integral |sum_j c_j e^{iwx_j}|^2 weight(w) dw` over a panel layout.
///
/// All sub-panels of one layout entry share their width, so the phase
/// factors `e^{i t x_j}` at the node offsets `t` are computed once per entry
/// and each sub-panel only needs `e^{i w_mid x_j}`.
fn power_quadrature<W: Fn(f64) -> f64>(
    terms: &[(f64, f64)],
    weight: W,
    layout: &[(f64, f64, usize)],
    rule: &PanelRule,
) -> PanelIntegral {
    let offsets = |g: &GaussLegendre, half: f64| -> Vec<Vec<Complex64>> {
        g.nodes()
            .iter()
            .map(|t| {
                terms
                    .iter()
                    .map(|&(x, c)| {
                        let (s, co) = (half * t * x).sin_cos();
                        Complex64::new(c * co, c * s)
                    })
                    .collect()
            })
            .collect()
    };
    let mut total = PanelIntegral::default();
    let mut base = vec![Complex64::new(0.0, 0.0); terms.len()];
    for &(lo, hi, count) in layout {
        let h = (hi - lo) / count as f64;
        let half = 0.5 * h;
        let fine = offsets(rule.fine(), half);
        let coarse = offsets(rule.coarse(), half);
        let sum_rule = |base: &[Complex64], g: &GaussLegendre, rot: &[Vec<Complex64>], mid: f64| {
            g.nodes()
                .iter()
                .zip(g.weights())
                .zip(rot)
                .map(|((t, w), r)| {
                    let z: Complex64 = base.iter().zip(r).map(|(b, r)| b * r).sum();
                    w * z.norm_sqr() * weight(mid + half * t)
                })
                .sum::<f64>()
                * half
        };
        for k in 0..count {
            let mid = lo + (k as f64 + 0.5) * h;
            for (b, &(x, _)) in base.iter_mut().zip(terms) {
                let (s, co) = (mid * x).sin_cos();
                *b = Complex64::new(co, s);
            }
            let f = sum_rule(&base, rule.fine(), &fine, mid);
            let c = sum_rule(&base, rule.coarse(), &coarse, mid);
            total = total
                + PanelIntegral {
                    value: f,
                    error_estimate: (f - c).abs(),
                    panels: 1,
                };
        }
    }
    total
}

/// Terms shifted to be centred on their span; `|sum c e^{iwx}|` is unchanged.
fn centred_terms(terms: &[(f64, f64)]) -> (Vec<(f64, f64)>, f64) {
    let lo = terms.first().map_or(0.0, |t| t.0);
    let hi = terms.last().map_or(0.0, |t| t.0);
    let mid = 0.5 * (lo + hi);
    (terms.iter().map(|&(x, c)| (x - mid, c)).collect(), hi - lo)
}

fn oscillation_width(span: f64) -> f64 {
    if span > 0.0 {
        8.0 * PI / span
    } else {
        f64::INFINITY
    }
}

/// Quadrature of `(1/2pi) integral |phi_1 - phi_2|^2 / w^2 dw`, the
/// characteristic-function form of the squared Cramér distance.
///
/// `|w| < omega_inner` contributes `(mean_1 - mean_2)^2 omega_inner / pi` to
/// leading order; `|w| > omega_max` is added analytically via the sine
/// integral. Both are reported in the budget.
pub fn cramer_via_spectrum(
    p1: &AtomicDistribution,
    p2: &AtomicDistribution,
    quad: &QuadratureSpec,
) -> Result<SpectralEstimate> {
    quad.validate()?;
    let diff = signed_difference(p1, p2);
    if diff.is_empty() {
        return Ok(SpectralEstimate::new(0.0, ErrorBudget::default()));
    }
    let (terms, span) = centred_terms(&diff);
    let lo = quad.omega_inner.max(quad.omega_max * 1e-300);
    let layout = geometric_layout(
        lo,
        quad.omega_max,
        quad.panels_per_decade,
        oscillation_width(span),
    );
    let body = power_quadrature(&terms, |w| 1.0 / (PI * w * w), &layout, &quad.rule());
    let dmean: f64 = terms.iter().map(|(x, c)| x * c).sum();
    let s2: f64 = terms.iter().map(|(x, c)| c.abs() * x * x).sum();
    let w0 = quad.omega_inner;
    let inner_correction = dmean * dmean * w0 / PI;
    let inner_bound = (s2 * dmean.abs() * w0 * w0 / 2.0 + s2 * s2 * w0.powi(3) / 12.0) / PI;
    let (tail_correction, tail_bound) = inverse_square_tail(&terms, quad.omega_max);
    let budget = ErrorBudget {
        tail_bound,
        inner_correction,
        panel_estimate: body.error_estimate,
        tail_correction,
        inner_bound,
    };
    Ok(SpectralEstimate::new(
        body.value + inner_correction + tail_correction,
        budget,
    ))
}

/// Panels for the regularised weights: uniform on `[0, split]`, geometric above.
fn regularised_layout(span: f64, quad: &QuadratureSpec) -> Vec<(f64, f64, usize)> {
    let split = quad.split();
    let width = oscillation_width(span);
    let mut layout = vec![(0.0, split, subdivisions(0.0, split, width))];
    layout.extend(geometric_layout(
        split,
        quad.omega_max,
        quad.panels_per_decade,
        width,
    ));
    layout
}

/// Adds the analytic tail of `(1/pi) integral_W^inf |sum c e^{iwx}|^2 / (w^2 + eps)`
/// to a panel integral over `[0, W]`.
fn with_regularised_tail(
    body: PanelIntegral,
    tail_terms: &[(f64, f64)],
    geom: EpsGeometry,
    quad: &QuadratureSpec,
) -> SpectralEstimate {
    let eps = geom.epsilon;
    // 1/(w^2 + eps) = 1/w^2 - eps / (w^2 (w^2 + eps)); the second part of the
    // tail is at most eps (sum |c|)^2 / (3 W^3) / pi.
    let (tail, rounding) = inverse_square_tail(tail_terms, quad.omega_max);
    let l1: f64 = tail_terms.iter().map(|t| t.1.abs()).sum();
    let tail_bound = rounding + eps * l1 * l1 / (3.0 * PI * quad.omega_max.powi(3));
    let budget = ErrorBudget {
        tail_bound,
        inner_correction: 0.0,
        panel_estimate: body.error_estimate,
        tail_correction: tail,
        inner_bound: 0.0,
    };
    SpectralEstimate::new(body.value + tail, budget)
}

/// Quadrature of `(1/2pi) integral |phi_1 - phi_2|^2 / (w^2 + eps) dw`.
pub fn reg_distance_quadrature(
    p1: &AtomicDistribution,
    p2: &AtomicDistribution,
    geom: EpsGeometry,
    quad: &QuadratureSpec,
) -> Result<SpectralEstimate> {
    quad.validate()?;
    let diff = signed_difference(p1, p2);
    if diff.is_empty() {
        return Ok(SpectralEstimate::new(0.0, ErrorBudget::default()));
    }
    let (terms, span) = centred_terms(&diff);
    let eps = geom.epsilon;
    let body = power_quadrature(
        &terms,
        |w| 1.0 / (PI * (w * w + eps)),
        &regularised_layout(span, quad),
        &quad.rule(),
    );
    Ok(with_regularised_tail(body, &terms, geom, quad))
}

/// Quadrature of `||H||^2_{H^cdf_eps} = integral w^2 / (w^2 + eps) |H^(w)|^2 dw`,
/// with `H^` computed in the x-domain from the constant pieces of `H`:
/// `w H^(w) = (2 pi)^{-1/2} i sum_i h_i (e^{-iwb_i} - e^{-iwa_i})`.
pub fn cdf_side_norm_quadrature(
    h: &JumpFunction,
    geom: EpsGeometry,
    quad: &QuadratureSpec,
) -> Result<SpectralEstimate> {
    if !h.is_admissible() {
        return Err(Error::NotInRange(
            "jump function is not compactly supported".into(),
        ));
    }
    let pieces = h.pieces();
    if pieces.is_empty() {
        return Ok(SpectralEstimate::new(0.0, ErrorBudget::default()));
    }
    let lo = pieces[0].0;
    let hi = pieces.last().unwrap().1;
    let mid = 0.5 * (lo + hi);
    let pieces: Vec<(f64, f64, f64)> = pieces
        .into_iter()
        .map(|(a, b, l)| (a - mid, b - mid, l))
        .collect();
    let g = |w: f64| {
        let mut re = 0.0;
        let mut im = 0.0;
        for &(a, b, level) in &pieces {
            let (sa, ca) = (w * a).sin_cos();
            let (sb, cb) = (w * b).sin_cos();
            re += level * (ca - cb);
            im += level * (sb - sa);
        }
        re * re + im * im
    };
    // Breakpoint coefficients of the same sum, for the analytic tail.
    let mut tail_terms: Vec<(f64, f64)> = pieces
        .iter()
        .flat_map(|&(a, b, l)| [(a, l), (b, -l)])
        .collect();
    merge_signed_terms(&mut tail_terms);
    let eps = geom.epsilon;
    let integrand = |w: f64| g(w) / (PI * (w * w + eps));
    let rule = quad.rule();
    let body = regularised_layout(hi - lo, quad)
        .into_iter()
        .map(|(a, b, count)| rule.integrate_uniform(&integrand, a, b, (b - a) / count as f64))
        .fold(PanelIntegral::default(), |acc, p| acc + p);
    Ok(with_regularised_tail(body, &tail_terms, geom, quad))
}

/// `U`: centred CDF differences to spectral coordinates.
///
/// For `H = sum_j c_j 1{x >= x_j}` with `sum c_j = 0`,
/// `H^(w) = (2 pi)^{-1/2} sum_j c_j e^{-iwx_j} / (iw)` and
/// `(U H)^ = -sqrt(2 pi) i w conj(H^) = sum_j c_j e^{iwx_j}`, so `U` carries
/// the jumps over as exponential-sum coefficients.
pub fn transport_u(h: &JumpFunction) -> Result<SignedExpSum> {
    if !h.is_admissible() {
        return Err(Error::NotInRange(format!(
            "jumps sum to {}, not 0",
            h.total_jump()
        )));
    }
    Ok(SignedExpSum {
        terms: h.jumps().to_vec(),
    })
}

/// `U^{-1}`: `(U^{-1} f)^ = conj(f^) / (sqrt(2 pi) i w)`, i.e. the
/// coefficients become jumps again.
pub fn transport_u_inv(f: &SignedExpSum) -> Result<JumpFunction> {
    let h = JumpFunction::new(f.terms.clone())?;
    if !h.is_admissible() {
        return Err(Error::NotInRange(format!(
            "coefficients sum to {}, not 0",
            h.total_jump()
        )));
    }
    Ok(h)
}

/// `V(F_P) = U(F_P - F_{delta_0})`, which equals `Phi(P)`.
pub fn transport_v(law: &AtomicDistribution) -> SignedExpSum {
    let centred = crate::distributions::centre(law);
    transport_u(&centred.jump_function()).expect("centred CDFs are admissible")
}

/// Reads the law back out of `Phi(P)`: `p_0 = c_0 + 1` at the origin and
/// `p_k = c_k` elsewhere.
pub fn embedding_inverse(f: &SignedExpSum) -> Result<AtomicDistribution> {
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(f.terms.len() + 1);
    let mut saw_origin = false;
    for &(x, c) in &f.terms {
        let w = if x == 0.0 {
            saw_origin = true;
            c + 1.0
        } else {
            c
        };
        if w < -MASS_TOLERANCE {
            return Err(Error::NotInRange(format!(
                "negative mass {w} at location {x}"
            )));
        }
        pairs.push((x, w.max(0.0)));
    }
    if !saw_origin {
        pairs.push((0.0, 1.0));
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::NotInRange(format!("total mass {total}, expected 1")));
    }
    AtomicDistribution::new(pairs)
}

/// Field of spectral embeddings, one per `(s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    n_states: usize,
    n_actions: usize,
    support: Support,
    entries: Vec<SignedExpSum>,
}

impl SpectralField {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn entries(&self) -> &[SignedExpSum] {
        &self.entries
    }

    pub fn entry(&self, s: usize, a: usize) -> &SignedExpSum {
        &self.entries[s * self.n_actions + a]
    }

    /// Every entry has coefficients summing to zero, as embeddings of
    /// probability laws do.
    pub fn coefficients_balanced(&self) -> bool {
        self.entries.iter().all(|e| {
            let scale: f64 = e.terms.iter().map(|t| t.1.abs()).sum::<f64>().max(1.0);
            e.coefficient_sum().abs() <= MASS_TOLERANCE * scale
        })
    }
}

/// Pointwise `V` over a field: `(V F)(s, a) = V(F_{Z(s, a)})`.
pub fn lift_v(field: &ReturnField) -> Result<SpectralField> {
    let entries = field
        .atomic_entries()
        .ok_or_else(|| Error::Backend("spectral lift is defined on atomic fields".into()))?;
    Ok(SpectralField {
        n_states: field.n_states(),
        n_actions: field.n_actions(),
        support: field.support(),
        entries: entries.iter().map(transport_v).collect(),
    })
}

/// Inverse lift; fails on sums that are not embeddings of probability laws.
pub fn lift_v_inv(mu: &SpectralField) -> Result<ReturnField> {
    let laws = mu
        .entries
        .iter()
        .map(embedding_inverse)
        .collect::<Result<Vec<_>>>()?;
    ReturnField::atomic(mu.n_states, mu.n_actions, mu.support, laws)
}

/// Spectral Bellman operator by conjugation: `V T V^{-1}`.
pub fn spectral_bellman_apply(
    mu: &SpectralField,
    mdp: &FiniteMdp,
    policy: &Policy,
    config: &BellmanConfig,
) -> Result<SpectralField> {
    if config.backend != Backend::Atomic {
        return Err(Error::Backend(
            "spectral conjugation uses the atomic backend".into(),
        ));
    }
    let field = lift_v_inv(mu)?;
    lift_v(&bellman_apply(&field, mdp, policy, config)?)
}

/// Direct frequency-domain update, used to cross-check the conjugation:
/// `phi_new(w) = E_{r, (s', a')} e^{iwr} phi_{s', a'}(gamma w)` and the result
/// is re-centred by subtracting 1.
pub fn spectral_bellman_direct(
    mu: &SpectralField,
    mdp: &FiniteMdp,
    policy: &Policy,
) -> Result<SpectralField> {
    if mu.n_states != mdp.n_states() || mu.n_actions != mdp.n_actions() {
        return Err(Error::Dimension(
            "spectral field does not match the MDP".into(),
        ));
    }
    policy.check_compatible(mdp)?;
    let gamma = mdp.gamma();
    let na = mdp.n_actions();
    // phi = Phi + 1 at the origin.
    let phis: Vec<Vec<(f64, f64)>> = mu
        .entries
        .iter()
        .map(|e| {
            let mut t = e.terms.clone();
            t.push((0.0, 1.0));
            merge_signed_terms(&mut t);
            t
        })
        .collect();
    let mut entries = Vec::with_capacity(mu.entries.len());
    for s in 0..mdp.n_states() {
        for a in 0..na {
            let mut terms = Vec::new();
            for (sp, &p) in mdp.transition_row(s, a).iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let reward = mdp.reward(s, a, sp);
                for (ap, &q) in policy.row(sp).iter().enumerate() {
                    if q == 0.0 {
                        continue;
                    }
                    let w = p * q;
                    for (r, rw) in reward.atoms() {
                        let wr = w * rw;
                        terms.extend(
                            phis[sp * na + ap]
                                .iter()
                                .map(|&(x, c)| (r + gamma * x, wr * c)),
                        );
                    }
                }
            }
            terms.push((0.0, -1.0));
            merge_signed_terms(&mut terms);
            entries.push(SignedExpSum { terms });
        }
    }
    Ok(SpectralField {
        n_states: mu.n_states,
        n_actions: mu.n_actions,
        support: mu.support,
        entries,
    })
}

/// Pullback of the sup-Cramér metric through `V^{-1}`.
pub fn induced_field_distance(mu1: &SpectralField, mu2: &SpectralField) -> Result<f64> {
    field_distance(&lift_v_inv(mu1)?, &lift_v_inv(mu2)?)
}

/// `{1, 1e-1, ..., 1e-8}`.
pub fn default_eps_list() -> Vec<f64> {
    (0..=8).map(|k| 10f64.powi(-k)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub reg_distance: f64,
    pub cdf_side_distance: f64,
    pub gap: f64,
    /// `reg_distance` did not decrease relative to the previous row.
    pub monotone: bool,
}

pub fn validate_eps_list(eps_list: &[f64]) -> Result<()> {
    if eps_list.is_empty() {
        return Err(Error::InvalidParameter("empty epsilon list".into()));
    }
    if let Some(e) = eps_list.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "epsilon {e} must be positive"
        )));
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter(
            "epsilon list must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Regularised distances along a decreasing `eps` schedule, with the gap to
/// the Cramér distance.
pub fn eps_sweep(
    p1: &AtomicDistribution,
    p2: &AtomicDistribution,
    eps_list: &[f64],
) -> Result<Vec<SweepRow>> {
    validate_eps_list(eps_list)?;
    let cdf_side = cramer_distance(p1, p2);
    let mut prev = f64::NEG_INFINITY;
    eps_list
        .iter()
        .map(|&eps| {
            let d = reg_distance(p1, p2, EpsGeometry::new(eps)?);
            let row = SweepRow {
                epsilon: eps,
                reg_distance: d,
                cdf_side_distance: cdf_side,
                gap: cdf_side - d,
                monotone: d >= prev,
            };
            prev = d;
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(x: f64) -> AtomicDistribution {
        AtomicDistribution::point_mass(x)
    }

    fn bern() -> AtomicDistribution {
        AtomicDistribution::two_point(0.0, 1.0, 0.5).unwrap()
    }

    #[test]
    fn char_fn_examples() {
        for w in [-3.0, 0.0, 0.7, 12.0] {
            assert_eq!(char_fn_eval(&d(0.0), w), Complex64::new(1.0, 0.0));
        }
        let p = 0.3;
        let b = AtomicDistribution::two_point(0.0, 1.0, p).unwrap();
        let w = 1.3;
        let want = Complex64::new(1.0 - p, 0.0) + Complex64::new(0.0, w).exp() * p;
        assert!((char_fn_eval(&b, w) - want).norm() < 1e-15);
        let r = AtomicDistribution::new([(-0.3, 0.2), (0.4, 0.5), (2.0, 0.3)]).unwrap();
        assert!((char_fn_eval(&r, 0.0) - 1.0).norm() < 1e-15);
    }

    #[test]
    fn embed_examples() {
        assert!(spectral_embed(&d(0.0)).is_zero());
        assert_eq!(spectral_embed(&d(2.5)).terms(), &[(0.0, -1.0), (2.5, 1.0)]);
        assert_eq!(spectral_embed(&bern()).terms(), &[(0.0, -0.5), (1.0, 0.5)]);
        let w = 0.9;
        let want = char_fn_eval(&bern(), w) - 1.0;
        assert!((spectral_embed(&bern()).eval(w) - want).norm() < 1e-15);
    }

    #[test]
    fn inner_product_examples() {
        let geom = EpsGeometry::new(1.0).unwrap();
        let u = spectral_embed(&d(1.0)).sub(&spectral_embed(&d(0.0)));
        assert_eq!(h_eps_inner(&SignedExpSum::zero(), &u, geom), 0.0);
        assert!((h_eps_inner(&u, &u, geom) - (1.0 - (-1f64).exp())).abs() < 1e-15);
        assert!((h_eps_inner(&u, &u, geom) - 0.632_120_558_828_557_7).abs() < 1e-12);
        for (a, eps) in [(0.5, 0.3), (2.0, 1e-4), (3.0, 7.0)] {
            let geom = EpsGeometry::new(eps).unwrap();
            let u = spectral_embed(&d(a)).sub(&spectral_embed(&d(0.0)));
            let s: f64 = eps.sqrt();
            let want = (1.0 - (-a * s).exp()) / s;
            assert!((h_eps_inner(&u, &u, geom) - want).abs() < 1e-13 * want.max(1.0));
        }
        assert!(EpsGeometry::new(0.0).is_err());
        assert!(EpsGeometry::new(-1.0).is_err());
    }

    #[test]
    fn inner_product_is_symmetric_and_bilinear() {
        let geom = EpsGeometry::new(0.37).unwrap();
        let u = SignedExpSum::new(vec![(0.0, 1.0), (0.4, -2.0), (1.1, 0.5)]).unwrap();
        let v = SignedExpSum::new(vec![(-0.2, 0.3), (0.4, 0.7)]).unwrap();
        let w = SignedExpSum::new(vec![(0.9, -1.2), (2.0, 0.1)]).unwrap();
        assert!((h_eps_inner(&u, &v, geom) - h_eps_inner(&v, &u, geom)).abs() < 1e-15);
        let mut vw_terms = v.terms().to_vec();
        vw_terms.extend(w.terms().iter().map(|&(x, c)| (x, 2.0 * c)));
        let vw = SignedExpSum::new(vw_terms).unwrap();
        let lhs = h_eps_inner(&u, &vw, geom);
        let rhs = h_eps_inner(&u, &v, geom) + 2.0 * h_eps_inner(&u, &w, geom);
        assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn reg_distance_examples() {
        let geom = EpsGeometry::new(1.0).unwrap();
        assert_eq!(reg_distance(&bern(), &bern(), geom), 0.0);
        let v = reg_distance(&d(0.0), &d(1.0), geom);
        assert!((v - (1.0 - (-1f64).exp()).sqrt()).abs() < 1e-15);
        assert!((v - 0.795_060_1).abs() < 1e-7);
        let mut prev = 0.0;
        for eps in default_eps_list() {
            let v = reg_distance(&d(0.0), &d(1.0), EpsGeometry::new(eps).unwrap());
            assert!(v > prev && v < 1.0);
            prev = v;
        }
        assert!(1.0 - prev < 3e-5);
    }

    #[test]
    fn sine_integral_values() {
        // Si(1) = 0.946083070367183, Si(5) = 1.549931244944674, Si(20) = 1.548241701043439
        for (x, si) in [
            (1.0, 0.946_083_070_367_183),
            (5.0, 1.549_931_244_944_674),
            (20.0, 1.548_241_701_043_439_5),
        ] {
            assert!(
                (FRAC_PI_2 - sine_integral_complement(x) - si).abs() < 1e-14,
                "x={x}"
            );
        }
        assert!((sine_integral_complement(0.0) - FRAC_PI_2).abs() < 1e-16);
        // pi/2 - Si(x) ~ cos(x)/x for large x.
        let x = 1e6;
        assert!((sine_integral_complement(x) - x.cos() / x).abs() < 1e-11);
    }

    #[test]
    fn cosine_tail_matches_quadrature() {
        let rule = PanelRule::new(32);
        for d in [0.0, 0.3, 2.0] {
            let w = 50.0;
            let upper = 2e5;
            let body = rule
                .integrate_uniform(&|t: f64| (t * d).cos() / (t * t), w, upper, 1.0)
                .value;
            let rest = cosine_tail(d, upper);
            assert!((body + rest - cosine_tail(d, w)).abs() < 1e-12, "d={d}");
        }
    }

    #[test]
    fn cdf_diff_fourier_examples() {
        let w = 0.8;
        let a = 1.7;
        let want = (Complex64::new(1.0, 0.0) - Complex64::new(0.0, -w * a).exp())
            / Complex64::new(0.0, w * (2.0 * PI).sqrt());
        assert!((cdf_diff_fourier(&d(0.0), &d(a), w).unwrap() - want).norm() < 1e-15);
        assert_eq!(
            cdf_diff_fourier(&bern(), &bern(), 3.0).unwrap(),
            Complex64::new(0.0, 0.0)
        );
        let want = Complex64::new(2.0, 0.0) / Complex64::new(0.0, PI * (2.0 * PI).sqrt());
        assert!((cdf_diff_fourier(&d(0.0), &d(1.0), PI).unwrap() - want).norm() < 1e-15);
        assert!(cdf_diff_fourier(&d(0.0), &d(1.0), 0.0).is_err());
        // Direct integral of H = 1 on [0, a).
        let h = JumpFunction::cdf_difference(&d(0.0), &d(a));
        let num = numerical_fourier_transform(&h, w, &PanelRule::new(32));
        assert!((num - cdf_diff_fourier(&d(0.0), &d(a), w).unwrap()).norm() < 1e-14);
    }

    #[test]
    fn cramer_via_spectrum_examples() {
        let quad = QuadratureSpec::default();
        let e = cramer_via_spectrum(&d(0.0), &d(1.0), &quad).unwrap();
        assert!((e.value - 1.0).abs() <= e.value_budget + 1e-12, "{e:?}");
        assert!(e.value_budget <= 1e-3);
        let e = cramer_via_spectrum(&bern(), &bern(), &quad).unwrap();
        assert_eq!(e.value, 0.0);
        let e = cramer_via_spectrum(&d(0.0), &bern(), &quad).unwrap();
        assert!((e.value - 0.5).abs() <= e.value_budget + 1e-12, "{e:?}");
        let bad = QuadratureSpec {
            omega_max: 1e-7,
            ..QuadratureSpec::default()
        };
        assert!(cramer_via_spectrum(&d(0.0), &d(1.0), &bad).is_err());
    }

    #[test]
    fn transports_examples() {
        let a = 1.5;
        let h = JumpFunction::cdf_difference(&d(0.0), &d(a));
        let uh = transport_u(&h).unwrap();
        assert_eq!(uh.terms(), &[(0.0, 1.0), (a, -1.0)]);
        assert_eq!(uh, spectral_embed(&d(0.0)).sub(&spectral_embed(&d(a))));
        assert!(transport_u(&JumpFunction::zero()).unwrap().is_zero());
        assert_eq!(transport_u_inv(&uh).unwrap(), h);
        let bad = JumpFunction::new(vec![(0.0, 1.0)]).unwrap();
        assert!(matches!(transport_u(&bad), Err(Error::NotInRange(_))));

        assert!(transport_v(&d(0.0)).is_zero());
        assert_eq!(transport_v(&d(1.0)).terms(), &[(0.0, -1.0), (1.0, 1.0)]);
        let r = AtomicDistribution::new([(-0.3, 0.2), (0.4, 0.5), (2.0, 0.3)]).unwrap();
        assert_eq!(transport_v(&r), spectral_embed(&r));
    }

    #[test]
    fn isometry_on_point_masses() {
        let geom = EpsGeometry::new(0.5).unwrap();
        let h = JumpFunction::cdf_difference(&d(-0.4), &d(1.1));
        let lhs = h_eps_norm(&transport_u(&h).unwrap(), geom);
        let rhs = cdf_side_norm_quadrature(&h, geom, &QuadratureSpec::default()).unwrap();
        assert!((lhs - rhs.value).abs() < 1e-8 * lhs, "{lhs} vs {rhs:?}");
    }

    #[test]
    fn embedding_inverse_rejects_non_laws() {
        let f = SignedExpSum::new(vec![(0.0, -1.0), (1.0, 0.5)]).unwrap();
        assert!(embedding_inverse(&f).is_err());
        let f = SignedExpSum::new(vec![(0.0, -1.0), (1.0, 1.5), (2.0, -0.5)]).unwrap();
        assert!(embedding_inverse(&f).is_err());
        assert_eq!(embedding_inverse(&SignedExpSum::zero()).unwrap(), d(0.0));
    }

    #[test]
    fn sweep_examples() {
        let rows = eps_sweep(&d(0.0), &d(1.0), &default_eps_list()).unwrap();
        assert!(rows.iter().all(|r| r.monotone));
        let last = rows.last().unwrap();
        let s = 1e-4_f64;
        let want = (-(-s).exp_m1() / s).sqrt();
        assert!((last.reg_distance - want).abs() < 1e-12);
        assert!((last.gap - (1.0 - want)).abs() < 1e-12);
        let rows = eps_sweep(&bern(), &bern(), &[1.0, 0.1]).unwrap();
        assert!(rows.iter().all(|r| r.reg_distance == 0.0));
        assert!(eps_sweep(&d(0.0), &d(1.0), &[0.1, 1.0]).is_err());
        assert!(eps_sweep(&d(0.0), &d(1.0), &[1.0, 0.0]).is_err());
        let rows = eps_sweep(&d(0.0), &bern(), &default_eps_list()).unwrap();
        assert!(rows.iter().all(|r| r.reg_distance < 0.5));
        assert!(0.5 - rows.last().unwrap().reg_distance < 1e-4);
    }
}
