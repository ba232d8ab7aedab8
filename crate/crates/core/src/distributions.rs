//! Return-distribution carriers on the real line.
//!
//! [`AtomicDistribution`] is the exact workhorse: a finite-support law stored
//! as strictly increasing locations with positive weights. [`GridCdf`] samples
//! a right-continuous CDF on a uniform grid and is used by the approximate
//! Bellman backend. Both implement [`ReturnLaw`], which is all the Cramér
//! distance needs.

use std::borrow::Cow;

use crate::error::{Error, Result};

/// Absolute tolerance on total mass accepted at construction.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Finite-support probability law with strictly increasing atom locations.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicDistribution {
    locations: Vec<f64>,
    weights: Vec<f64>,
}

impl AtomicDistribution {
    /// Builds a law from `(location, weight)` pairs.
    ///
    /// Weights are normalised to unit mass, coincident locations are merged by
    /// adding their weights and zero-weight pairs are dropped.
    pub fn new<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let pairs: Vec<(f64, f64)> = pairs.into_iter().collect();
        if pairs.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        for &(x, w) in &pairs {
            if !x.is_finite() || !w.is_finite() {
                return Err(Error::NonFinite(format!("atom ({x}, {w})")));
            }
            if w < 0.0 {
                return Err(Error::NegativeWeight {
                    location: x,
                    weight: w,
                });
            }
        }
        if pairs.iter().all(|&(_, w)| w == 0.0) {
            return Err(Error::ZeroMass);
        }
        Ok(Self::from_pairs_unchecked(pairs))
    }

    /// Takes stored atoms as they are: locations strictly increasing, weights
    /// positive and summing to 1 within [`MASS_TOLERANCE`]. Nothing is
    /// renormalised, so a serialised law reloads bit for bit.
    pub fn from_atoms(pairs: Vec<(f64, f64)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        for &(x, w) in &pairs {
            if !x.is_finite() || !w.is_finite() {
                return Err(Error::NonFinite(format!("atom ({x}, {w})")));
            }
            if w < 0.0 {
                return Err(Error::NegativeWeight {
                    location: x,
                    weight: w,
                });
            }
            if w == 0.0 {
                return Err(Error::InvalidParameter(format!("zero-weight atom at {x}")));
            }
        }
        if pairs.windows(2).any(|p| p[1].0 <= p[0].0) {
            return Err(Error::InvalidParameter(
                "atom locations must be strictly increasing".into(),
            ));
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "atom weights sum to {total}, not 1"
            )));
        }
        let (locations, weights) = pairs.into_iter().unzip();
        Ok(Self { locations, weights })
    }

    /// Sort, merge and normalise pairs already known to be finite with
    /// nonnegative weights and positive total mass.
    pub(crate) fn from_pairs_unchecked(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.retain(|&(_, w)| w > 0.0);
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut locations = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            match locations.last() {
                Some(&last) if last == x => *weights.last_mut().unwrap() += w,
                _ => {
                    locations.push(x);
                    weights.push(w);
                }
            }
        }
        let total: f64 = weights.iter().sum();
        if total != 1.0 {
            for w in &mut weights {
                *w /= total;
            }
        }
        Self { locations, weights }
    }

    pub fn point_mass(x: f64) -> Self {
        assert!(x.is_finite(), "point mass location must be finite");
        Self {
            locations: vec![x],
            weights: vec![1.0],
        }
    }

    /// Two-point law with mass `1 - p` at `lo` and `p` at `hi`.
    pub fn two_point(lo: f64, hi: f64, p: f64) -> Result<Self> {
        Self::new([(lo, 1.0 - p), (hi, p)])
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.locations
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn min_location(&self) -> f64 {
        self.locations[0]
    }

    pub fn max_location(&self) -> f64 {
        *self.locations.last().unwrap()
    }

    pub fn mean(&self) -> f64 {
        self.atoms().map(|(x, w)| x * w).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.atoms().map(|(x, w)| w * (x - m) * (x - m)).sum()
    }

    /// Right-continuous CDF, `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.locations.partition_point(|&l| l <= x);
        if k == 0 {
            0.0
        } else if k == self.locations.len() {
            1.0
        } else {
            self.weights[..k].iter().sum()
        }
    }

    /// Pushforward under `x -> factor * x` for `factor > 0`.
    pub fn scale(&self, factor: f64) -> Self {
        debug_assert!(factor > 0.0);
        Self {
            locations: self.locations.iter().map(|x| factor * x).collect(),
            weights: self.weights.clone(),
        }
    }

    /// Law of `X + R` for independent `X ~ self` and `R ~ shift`.
    pub fn convolve(&self, shift: &AtomicDistribution) -> Self {
        let mut pairs = Vec::with_capacity(self.len() * shift.len());
        for (r, q) in shift.atoms() {
            for (x, p) in self.atoms() {
                pairs.push((x + r, p * q));
            }
        }
        Self::from_pairs_unchecked(pairs)
    }

    /// Convex combination of laws; weights must be nonnegative with positive sum.
    pub fn mixture<'a, I>(components: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, &'a AtomicDistribution)>,
    {
        let mut pairs = Vec::new();
        for (w, d) in components {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidParameter(format!("mixture weight {w}")));
            }
            if w > 0.0 {
                pairs.extend(d.atoms().map(|(x, p)| (x, w * p)));
            }
        }
        if pairs.is_empty() {
            return Err(Error::ZeroMass);
        }
        Ok(Self::from_pairs_unchecked(pairs))
    }

    /// Collapses clusters of atoms spanning at most `delta` to their
    /// weighted mean location. See [`AtomicDistribution::merge_atoms_with_bound`].
    pub fn merge_atoms(&self, delta: f64) -> Self {
        self.merge_atoms_with_bound(delta).0
    }

    /// As [`merge_atoms`](Self::merge_atoms), also returning a bound on the
    /// Cramér distance between input and output.
    ///
    /// Each cluster only perturbs the CDF on its own span, by at most its
    /// mass, so the squared distance is at most `sum mass^2 * diameter`.
    pub fn merge_atoms_with_bound(&self, delta: f64) -> (Self, f64) {
        if delta <= 0.0 || self.len() < 2 {
            return (self.clone(), 0.0);
        }
        let mut locations = Vec::new();
        let mut weights = Vec::new();
        let mut bound_sq = 0.0;
        let mut start = 0;
        while start < self.len() {
            let lo = self.locations[start];
            let mut end = start + 1;
            while end < self.len() && self.locations[end] - lo <= delta {
                end += 1;
            }
            let hi = self.locations[end - 1];
            let mass: f64 = self.weights[start..end].iter().sum();
            let moment: f64 = self.locations[start..end]
                .iter()
                .zip(&self.weights[start..end])
                .map(|(x, w)| x * w)
                .sum();
            let centre = if end - start == 1 {
                lo
            } else {
                (moment / mass).clamp(lo, hi)
            };
            bound_sq += mass * mass * (hi - lo);
            locations.push(centre);
            weights.push(mass);
            start = end;
        }
        (Self { locations, weights }, bound_sq.sqrt())
    }

    /// Cramér projection onto atoms at the nodes `x_min + k * step`, `k < n`:
    /// an atom between two nodes is split between them in proportion to
    /// proximity, which makes the projected CDF the cell average of the
    /// original and keeps the mean. Returns the projection and the exact
    /// Cramér distance it moved the law.
    pub fn project_to_lattice(&self, x_min: f64, step: f64, n: usize) -> Result<(Self, f64)> {
        if !(step > 0.0 && step.is_finite()) || !x_min.is_finite() || n < 2 {
            return Err(Error::InvalidGrid(format!(
                "x_min={x_min}, step={step}, n={n}"
            )));
        }
        let x_max = grid_node(x_min, step, n - 1);
        // Atoms within rounding distance of the ends are clamped onto them.
        let slack = 1e-9 * (x_max - x_min).max(1.0);
        if self.min_location() < x_min - slack || self.max_location() > x_max + slack {
            return Err(Error::GridCoverage {
                lo: self.min_location(),
                hi: self.max_location(),
                grid_lo: x_min,
                grid_hi: x_max,
            });
        }
        let mut mass = vec![0.0; n];
        for (x, w) in self.atoms() {
            let t = (x - x_min) / step;
            let k = (t.floor() as usize).min(n - 2);
            let frac = (t - k as f64).clamp(0.0, 1.0);
            mass[k] += w * (1.0 - frac);
            mass[k + 1] += w * frac;
        }
        let (locations, weights): (Vec<f64>, Vec<f64>) = mass
            .into_iter()
            .enumerate()
            .filter(|&(_, m)| m > 0.0)
            .map(|(k, m)| (grid_node(x_min, step, k), m))
            .unzip();
        let projected = Self { locations, weights };
        let moved = cramer_distance_sq_atomic(self, &projected).sqrt();
        Ok((projected, moved))
    }

    /// Right-continuous sampling of the CDF on `n` nodes starting at `x_min`.
    pub fn to_grid(&self, x_min: f64, step: f64, n: usize) -> Result<GridCdf> {
        if !(step > 0.0 && step.is_finite()) || !x_min.is_finite() || n < 2 {
            return Err(Error::InvalidGrid(format!(
                "x_min={x_min}, step={step}, n={n}"
            )));
        }
        let x_max = grid_node(x_min, step, n - 1);
        if self.min_location() < x_min || self.max_location() > x_max {
            return Err(Error::GridCoverage {
                lo: self.min_location(),
                hi: self.max_location(),
                grid_lo: x_min,
                grid_hi: x_max,
            });
        }
        let mut values: Vec<f64> = (0..n)
            .map(|i| self.cdf(grid_node(x_min, step, i)))
            .collect();
        values[n - 1] = 1.0;
        GridCdf::new(x_min, step, values)
    }
}

#[inline]
pub(crate) fn grid_node(x_min: f64, step: f64, i: usize) -> f64 {
    x_min + i as f64 * step
}

/// CDF sampled on the uniform grid `x_min + i * step`.
///
/// As a law it has step semantics: the value at a node holds until the next
/// node, so the grid is equivalent to an atomic law with atoms at the nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct GridCdf {
    x_min: f64,
    step: f64,
    values: Vec<f64>,
}

impl GridCdf {
    pub fn new(x_min: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) || !x_min.is_finite() {
            return Err(Error::InvalidGrid(format!("x_min={x_min}, step={step}")));
        }
        if values.len() < 2 {
            return Err(Error::InvalidGrid("at least two nodes are required".into()));
        }
        if values
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(Error::InvalidGrid("values must lie in [0, 1]".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidGrid("values must be nondecreasing".into()));
        }
        let last = *values.last().unwrap();
        if (last - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidGrid(format!("last value {last} is not 1")));
        }
        Ok(Self {
            x_min,
            step,
            values,
        })
    }

    /// Builds a grid from raw samples: clamps to `[0, 1]`, restores
    /// monotonicity with a running maximum and pins the last node to 1.
    pub(crate) fn from_raw(x_min: f64, step: f64, mut values: Vec<f64>) -> Self {
        let mut running = 0.0_f64;
        for v in values.iter_mut() {
            running = running.max(v.clamp(0.0, 1.0));
            *v = running;
        }
        if let Some(last) = values.last_mut() {
            *last = 1.0;
        }
        Self {
            x_min,
            step,
            values,
        }
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn x_max(&self) -> f64 {
        grid_node(self.x_min, self.step, self.values.len() - 1)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn node(&self, i: usize) -> f64 {
        grid_node(self.x_min, self.step, i)
    }

    /// Step (right-continuous) evaluation.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < self.x_min {
            return 0.0;
        }
        let k = ((x - self.x_min) / self.step).floor();
        if k >= (self.values.len() - 1) as f64 {
            return 1.0;
        }
        let mut k = k as usize;
        // Guard against the division landing one cell off near a node.
        if self.node(k + 1) <= x {
            k += 1;
        } else if k > 0 && self.node(k) > x {
            k -= 1;
        }
        self.values[k]
    }

    /// Linear interpolation between nodes, 0 left of the grid and 1 right of it.
    pub fn interp(&self, x: f64) -> f64 {
        if x < self.x_min {
            return 0.0;
        }
        let t = (x - self.x_min) / self.step;
        let last = (self.values.len() - 1) as f64;
        if t >= last {
            return 1.0;
        }
        let k = t.floor() as usize;
        let frac = t - k as f64;
        self.values[k] + frac * (self.values[k + 1] - self.values[k])
    }

    /// The grid's jumps as an atomic law (step semantics).
    pub fn to_atomic(&self) -> AtomicDistribution {
        let mut prev = 0.0;
        let mut pairs = Vec::new();
        for (i, &v) in self.values.iter().enumerate() {
            if v > prev {
                pairs.push((self.node(i), v - prev));
            }
            prev = v;
        }
        AtomicDistribution::from_pairs_unchecked(pairs)
    }

    pub fn mean(&self) -> f64 {
        self.to_atomic().mean()
    }
}

/// Anything with a CDF that can be expressed through its jumps.
pub trait ReturnLaw {
    fn cdf(&self, x: f64) -> f64;

    /// The law as a finite set of atoms.
    fn jumps(&self) -> Cow<'_, AtomicDistribution>;
}

impl ReturnLaw for AtomicDistribution {
    fn cdf(&self, x: f64) -> f64 {
        AtomicDistribution::cdf(self, x)
    }

    fn jumps(&self) -> Cow<'_, AtomicDistribution> {
        Cow::Borrowed(self)
    }
}

impl ReturnLaw for GridCdf {
    fn cdf(&self, x: f64) -> f64 {
        GridCdf::cdf(self, x)
    }

    fn jumps(&self) -> Cow<'_, AtomicDistribution> {
        Cow::Owned(self.to_atomic())
    }
}

/// Checked CDF evaluation.
pub fn cdf_eval<L: ReturnLaw + ?Sized>(law: &L, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("cdf argument {x}")));
    }
    Ok(law.cdf(x))
}

/// Exact squared Cramér distance between atomic laws by integrating the
/// piecewise-constant CDF difference over merged breakpoints.
pub fn cramer_distance_sq_atomic(a: &AtomicDistribution, b: &AtomicDistribution) -> f64 {
    let (la, wa) = (a.locations(), a.weights());
    let (lb, wb) = (b.locations(), b.weights());
    let (mut i, mut j) = (0, 0);
    let mut diff = 0.0_f64;
    let mut acc = 0.0_f64;
    let mut prev: Option<f64> = None;
    while i < la.len() || j < lb.len() {
        let x = match (la.get(i), lb.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        if let Some(p) = prev {
            acc += diff * diff * (x - p);
        }
        while i < la.len() && la[i] == x {
            diff += wa[i];
            i += 1;
        }
        while j < lb.len() && lb[j] == x {
            diff -= wb[j];
            j += 1;
        }
        prev = Some(x);
    }
    acc
}

/// Cramér distance `(integral (F1 - F2)^2 dx)^(1/2)`.
pub fn cramer_distance<A, B>(a: &A, b: &B) -> f64
where
    A: ReturnLaw + ?Sized,
    B: ReturnLaw + ?Sized,
{
    cramer_distance_sq_atomic(&a.jumps(), &b.jumps()).sqrt()
}

/// Signed atom list of `a - b`, sorted by location with coincident
/// locations merged and exact zeros removed.
pub fn signed_difference(a: &AtomicDistribution, b: &AtomicDistribution) -> Vec<(f64, f64)> {
    let mut terms: Vec<(f64, f64)> = a.atoms().chain(b.atoms().map(|(x, w)| (x, -w))).collect();
    merge_signed_terms(&mut terms);
    terms
}

pub(crate) fn merge_signed_terms(terms: &mut Vec<(f64, f64)>) {
    terms.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(terms.len());
    for &(x, c) in terms.iter() {
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 += c,
            _ => out.push((x, c)),
        }
    }
    out.retain(|&(_, c)| c != 0.0);
    *terms = out;
}

/// Energy-distance form of the squared Cramér distance,
/// `-1/2 sum_jk c_j c_k |x_j - x_k|` over the signed atoms of `a - b`.
pub fn cramer_distance_energy_form(a: &AtomicDistribution, b: &AtomicDistribution) -> f64 {
    let terms = signed_difference(a, b);
    let mut acc = 0.0;
    for (j, &(xj, cj)) in terms.iter().enumerate() {
        for &(xk, ck) in &terms[j + 1..] {
            acc += cj * ck * (xk - xj);
        }
    }
    // Off-diagonal pairs appear twice in the full double sum.
    (-acc).max(0.0).sqrt()
}

/// `H(x) = sum_j c_j 1{x >= x_j}`: a finite jump function.
///
/// Differences of CDFs and centred CDFs are jump functions whose jumps sum to
/// zero, which makes them compactly supported.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpFunction {
    jumps: Vec<(f64, f64)>,
}

impl JumpFunction {
    pub fn new(mut jumps: Vec<(f64, f64)>) -> Result<Self> {
        if jumps.iter().any(|(x, c)| !x.is_finite() || !c.is_finite()) {
            return Err(Error::NonFinite("jump function".into()));
        }
        merge_signed_terms(&mut jumps);
        Ok(Self { jumps })
    }

    pub fn zero() -> Self {
        Self { jumps: Vec::new() }
    }

    /// `F_{P1} - F_{P2}`.
    pub fn cdf_difference(p1: &AtomicDistribution, p2: &AtomicDistribution) -> Self {
        Self {
            jumps: signed_difference(p1, p2),
        }
    }

    pub fn jumps(&self) -> &[(f64, f64)] {
        &self.jumps
    }

    pub fn total_jump(&self) -> f64 {
        self.jumps.iter().map(|j| j.1).sum()
    }

    /// Compactly supported, i.e. the jumps cancel.
    pub fn is_admissible(&self) -> bool {
        let scale: f64 = self.jumps.iter().map(|j| j.1.abs()).sum::<f64>().max(1.0);
        self.total_jump().abs() <= MASS_TOLERANCE * scale
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.jumps
            .iter()
            .take_while(|(xj, _)| *xj <= x)
            .map(|j| j.1)
            .sum()
    }

    /// Constant pieces `(a, b, level)` between consecutive jumps; the function
    /// vanishes left of the first jump and (if admissible) right of the last.
    pub fn pieces(&self) -> Vec<(f64, f64, f64)> {
        let mut level = 0.0;
        let mut out = Vec::with_capacity(self.jumps.len().saturating_sub(1));
        for w in self.jumps.windows(2) {
            level += w[0].1;
            if level != 0.0 {
                out.push((w[0].0, w[1].0, level));
            }
        }
        out
    }

    /// Exact `||H||_{L^2}^2` via the constant pieces.
    pub fn l2_norm_sq(&self) -> f64 {
        self.pieces().iter().map(|(a, b, h)| h * h * (b - a)).sum()
    }
}

/// Centred CDF `H = F_P - F_{delta_0}`.
#[derive(Clone, Debug, PartialEq)]
pub struct CentredCdf {
    law: AtomicDistribution,
}

impl CentredCdf {
    pub fn law(&self) -> &AtomicDistribution {
        &self.law
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.law.cdf(x) - if x >= 0.0 { 1.0 } else { 0.0 }
    }

    /// Undo the centring.
    pub fn uncentre(&self) -> AtomicDistribution {
        self.law.clone()
    }

    pub fn jump_function(&self) -> JumpFunction {
        JumpFunction::cdf_difference(&self.law, &AtomicDistribution::point_mass(0.0))
    }
}

/// Centring `P -> F_P - F_{delta_0}`.
pub fn centre(law: &AtomicDistribution) -> CentredCdf {
    CentredCdf { law: law.clone() }
}
