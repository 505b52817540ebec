//! Centered packings, partition sums, the pre-packing supremum computed
//! exactly by antichain dynamic programming, and Lq-spectrum estimation.
//!
//! Everything runs on the dyadic grid: a ball of radius 2^-d centered
//! anywhere in a depth-d cylinder *is* that cylinder, so packings are
//! antichains of cylinders and the supremum over packings is the tree
//! recursion best(c) = max(term(c), best(c0) + best(c1)).

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::cascade::{CascadeMeasure, SelectionRule, SubtreeKind};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, KernelVariant, ParamVector};
use crate::numeric::{fit_deepest_half, log2_sum_exp2, Log2Sum};
use crate::space::{ball_of, Cylinder, DyadicRadius, Point, Word};

/// Finite-depth stand-in for a subset A of X: an antichain of cylinders
/// whose union is the set. Mixed depths are allowed; a coarse member stands
/// for its whole subtree.
#[derive(Clone, Debug, Serialize)]
pub struct TargetSet {
    cylinders: Vec<Cylinder>,
}

impl TargetSet {
    pub fn whole_space() -> Self {
        TargetSet {
            cylinders: vec![Cylinder::root()],
        }
    }

    /// Normalize a union of cylinders into an antichain: drop any cylinder
    /// contained in another.
    pub fn from_cylinders(mut cyls: Vec<Cylinder>) -> Self {
        cyls.sort();
        cyls.dedup();
        let mut out: Vec<Cylinder> = Vec::with_capacity(cyls.len());
        for c in cyls {
            // sorted order puts a prefix right before its extensions
            if let Some(last) = out.last() {
                if last.contains(&c) {
                    continue;
                }
            }
            out.push(c);
        }
        TargetSet { cylinders: out }
    }

    pub fn cylinders(&self) -> &[Cylinder] {
        &self.cylinders
    }

    pub fn is_empty(&self) -> bool {
        self.cylinders.is_empty()
    }

    pub fn is_whole_space(&self) -> bool {
        self.cylinders.len() == 1 && self.cylinders[0].depth() == 0
    }

    /// Does the cylinder intersect the set? (Nested either way.)
    pub fn meets(&self, c: &Cylinder) -> bool {
        self.cylinders
            .iter()
            .any(|a| a.contains(c) || c.contains(a))
    }

    /// Is the cylinder entirely inside the set? True iff some member
    /// contains it: members are pairwise disjoint, so deeper members never
    /// cover a strict ancestor between them.
    pub fn covers(&self, c: &Cylinder) -> bool {
        self.cylinders.iter().any(|a| a.contains(c))
    }

    /// A canonical point of c's intersection with the set, if any.
    pub fn canonical_center(&self, c: &Cylinder) -> Option<Point> {
        if self.covers(c) {
            return Some(c.canonical_point());
        }
        self.cylinders
            .iter()
            .filter(|a| c.contains(a))
            .min_by_key(|a| *a.word())
            .map(|a| a.canonical_point())
    }

    pub fn point_in(&self, p: &Point) -> bool {
        self.cylinders.iter().any(|a| p.in_cylinder(a))
    }

    /// All depth-m cylinders meeting the set, canonical order. Exponential
    /// when the set has coarse members; intended for tests and oracles.
    pub fn cylinders_at_depth(&self, m: usize, budget: usize) -> Result<Vec<Cylinder>> {
        let mut out = Vec::new();
        for a in &self.cylinders {
            if a.depth() >= m {
                out.push(Cylinder(a.word().prefix(m)));
            } else {
                let extra = m - a.depth();
                if out.len() + (1usize << extra.min(40)) > budget {
                    return Err(Error::BudgetExceeded(format!(
                        "depth-{m} enumeration over a coarse set member"
                    )));
                }
                expand(a.word(), extra, &mut out)?;
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }
}

fn expand(w: &Word, extra: usize, out: &mut Vec<Cylinder>) -> Result<()> {
    if extra == 0 {
        out.push(Cylinder(*w));
        return Ok(());
    }
    expand(&w.push(0)?, extra - 1, out)?;
    expand(&w.push(1)?, extra - 1, out)?;
    Ok(())
}

/// A centered packing: balls with centers in the target set, pairwise
/// disjoint as cylinders, radii at most the packing scale.
#[derive(Clone, Debug)]
pub struct CenteredPacking {
    pub balls: Vec<(Point, DyadicRadius)>,
}

impl CenteredPacking {
    pub fn new(balls: Vec<(Point, DyadicRadius)>) -> Self {
        CenteredPacking { balls }
    }

    pub fn cylinders(&self) -> Result<Vec<Cylinder>> {
        self.balls.iter().map(|(p, r)| ball_of(p, *r)).collect()
    }

    /// Violations of the packing contract against a target set and scale.
    pub fn validate(&self, target: &TargetSet, eps: DyadicRadius) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        let cyls = self.cylinders()?;
        for (i, (p, r)) in self.balls.iter().enumerate() {
            if !target.point_in(p) {
                bad.push(format!("ball {i}: center outside the target set"));
            }
            if r.exponent() < eps.exponent() {
                bad.push(format!("ball {i}: radius {} exceeds eps", r.value()));
            }
        }
        for i in 0..cyls.len() {
            for j in i + 1..cyls.len() {
                if !cyls[i].is_disjoint(&cyls[j]) {
                    bad.push(format!("balls {i},{j}: cylinders overlap"));
                }
            }
        }
        Ok(bad)
    }

    /// The maximal uniform packing of a set at one depth.
    pub fn uniform_over(target: &TargetSet, m: usize, budget: usize) -> Result<Self> {
        let r = DyadicRadius::new(m as u32)?;
        let balls = target
            .cylinders_at_depth(m, budget)?
            .into_iter()
            .filter_map(|c| target.canonical_center(&c).map(|p| (p, r)))
            .collect();
        Ok(CenteredPacking { balls })
    }
}

/// A ball family splittable into at most k centered packings.
#[derive(Clone, Debug)]
pub struct BesicovitchPacking {
    pub balls: Vec<(Point, DyadicRadius)>,
    /// groups[i] is the group index of ball i.
    pub groups: Vec<usize>,
}

/// Check the Besicovitch-packing contract: at most k groups, per-group
/// disjointness, radii <= u_eps, centers in the target set.
pub fn validate_besicovitch(
    p: &BesicovitchPacking,
    k: usize,
    target: &TargetSet,
    u_eps: DyadicRadius,
) -> Result<(bool, Vec<String>)> {
    let mut bad = Vec::new();
    if p.groups.len() != p.balls.len() {
        bad.push("groups and balls differ in length".into());
    }
    let mut group_ids: Vec<usize> = p.groups.clone();
    group_ids.sort_unstable();
    group_ids.dedup();
    if group_ids.len() > k {
        bad.push(format!("{} groups exceed k = {k}", group_ids.len()));
    }
    let mut cyls = Vec::with_capacity(p.balls.len());
    for (i, (pt, r)) in p.balls.iter().enumerate() {
        cyls.push(ball_of(pt, *r)?);
        if r.exponent() < u_eps.exponent() {
            bad.push(format!("ball {i}: radius exceeds u_eps"));
        }
        if !target.point_in(pt) {
            bad.push(format!("ball {i}: center outside the target set"));
        }
    }
    for i in 0..cyls.len() {
        for j in i + 1..cyls.len() {
            if p.groups.get(i) == p.groups.get(j) && !cyls[i].is_disjoint(&cyls[j]) {
                bad.push(format!("balls {i},{j}: overlap within group"));
            }
        }
    }
    Ok((bad.is_empty(), bad))
}

/// Sum_i r_i^t e^<q,chi(x_i,r_i)> for an explicit packing, in log2 space.
pub fn packing_sum_log2(
    p: &CenteredPacking,
    kernel: &Kernel,
    q: &ParamVector,
    t: f64,
) -> Result<f64> {
    let mut acc = Log2Sum::new();
    for (pt, r) in &p.balls {
        let ball = ball_of(pt, *r)?;
        let w = kernel.weight_log2(q, &ball)?;
        acc.push(t * (-(r.exponent() as f64)) + w);
    }
    Ok(acc.value())
}

pub fn packing_sum(p: &CenteredPacking, kernel: &Kernel, q: &ParamVector, t: f64) -> Result<f64> {
    Ok(packing_sum_log2(p, kernel, q, t)?.exp2())
}

fn rational_pow(base: &BigRational, e: i64) -> BigRational {
    if e >= 0 {
        let mut acc = BigRational::one();
        for _ in 0..e {
            acc *= base;
        }
        acc
    } else {
        let mut acc = BigRational::one();
        let inv = base.recip();
        for _ in 0..(-e) {
            acc *= &inv;
        }
        acc
    }
}

fn term_exact(c: &Cylinder, measure: &CascadeMeasure, theta: i64, t: i64) -> Result<BigRational> {
    let mu = measure.mass(c)?;
    let half = BigRational::new(1.into(), 2.into());
    let r_pow = rational_pow(&half, t * c.depth() as i64);
    Ok(rational_pow(&mu, theta) * r_pow)
}

/// Exact packing sum over an antichain of cylinders for integer Olsen
/// exponents: sum mu^theta (2^-d)^t. The ground-truth evaluator shared with
/// the oracle module.
pub fn packing_sum_exact(
    cyls: &[Cylinder],
    measure: &CascadeMeasure,
    theta: i64,
    t: i64,
) -> Result<BigRational> {
    let mut acc = BigRational::zero();
    for c in cyls {
        acc += term_exact(c, measure, theta, t)?;
    }
    Ok(acc)
}

/// Exact pre-packing supremum over dyadic packings with radii in
/// [2^-depth_max, 2^-m]: best(c) = max(term(c), best(c0) + best(c1)) over
/// cylinders meeting the target, for integer Olsen exponents.
pub fn sup_packing_exact(
    target: &TargetSet,
    measure: &CascadeMeasure,
    theta: i64,
    t: i64,
    m: usize,
    depth_max: usize,
) -> Result<BigRational> {
    if m > depth_max {
        return Err(Error::InvalidConfig("need m <= depth_max".into()));
    }
    if depth_max > 20 {
        return Err(Error::DepthExceeded("exact DP capped at depth 20".into()));
    }
    if target.is_empty() {
        return Err(Error::EmptyTarget("sup over an empty set".into()));
    }
    fn rec(
        c: Cylinder,
        target: &TargetSet,
        measure: &CascadeMeasure,
        theta: i64,
        t: i64,
        m: usize,
        depth_max: usize,
    ) -> Result<Option<BigRational>> {
        if !target.meets(&c) {
            return Ok(None);
        }
        let d = c.depth();
        let term = if d >= m {
            Some(term_exact(&c, measure, theta, t)?)
        } else {
            None
        };
        if d == depth_max {
            return Ok(term);
        }
        let l = rec(c.child(0)?, target, measure, theta, t, m, depth_max)?;
        let r = rec(c.child(1)?, target, measure, theta, t, m, depth_max)?;
        let children = match (l, r) {
            (Some(a), Some(b)) => Some(a + b),
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            (None, None) => None,
        };
        Ok(match (term, children) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            (None, None) => None,
        })
    }
    Ok(rec(Cylinder::root(), target, measure, theta, t, m, depth_max)?
        .unwrap_or_else(BigRational::zero))
}

/// Same DP in log2 space for arbitrary kernels and real t.
pub fn sup_packing_log2(
    target: &TargetSet,
    kernel: &Kernel,
    q: &ParamVector,
    t: f64,
    m: usize,
    depth_max: usize,
) -> Result<f64> {
    if m > depth_max {
        return Err(Error::InvalidConfig("need m <= depth_max".into()));
    }
    if depth_max > 20 {
        return Err(Error::DepthExceeded(
            "tree DP capped at depth 20; use lq_spectrum for deep scales".into(),
        ));
    }
    if target.is_empty() {
        return Err(Error::EmptyTarget("sup over an empty set".into()));
    }
    fn rec(
        c: Cylinder,
        target: &TargetSet,
        kernel: &Kernel,
        q: &ParamVector,
        t: f64,
        m: usize,
        depth_max: usize,
    ) -> Result<Option<f64>> {
        if !target.meets(&c) {
            return Ok(None);
        }
        let d = c.depth();
        let term = if d >= m {
            Some(t * (-(d as f64)) + kernel.weight_log2(q, &c)?)
        } else {
            None
        };
        if d == depth_max {
            return Ok(term);
        }
        let l = rec(c.child(0)?, target, kernel, q, t, m, depth_max)?;
        let r = rec(c.child(1)?, target, kernel, q, t, m, depth_max)?;
        let children = match (l, r) {
            (Some(a), Some(b)) => Some(log2_sum_exp2(&[a, b])),
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            (None, None) => None,
        };
        Ok(match (term, children) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(b),
            (None, None) => None,
        })
    }
    Ok(rec(Cylinder::root(), target, kernel, q, t, m, depth_max)?.unwrap_or(f64::NEG_INFINITY))
}

/// sup_packing as a plain value (fine at DP-tractable depths).
pub fn sup_packing_value(
    target: &TargetSet,
    kernel: &Kernel,
    q: &ParamVector,
    t: f64,
    m: usize,
    depth_max: usize,
) -> Result<f64> {
    Ok(sup_packing_log2(target, kernel, q, t, m, depth_max)?.exp2())
}

/// log2 of the full-antichain block sum at depth m: the sum over depth-m
/// cylinders meeting A of e^<q,chi>.
///
/// Off-skeleton and Bernoulli subtrees collapse to closed forms, so the walk
/// touches only the selected skeleton and the example cascade evaluates at
/// depth 48 instantly. The perturbed kernel has no closed form and recurses
/// fully under a node budget.
pub fn antichain_sum_log2(
    target: &TargetSet,
    kernel: &Kernel,
    q: &ParamVector,
    m: usize,
) -> Result<f64> {
    struct Ctx<'a> {
        target: &'a TargetSet,
        kernel: &'a Kernel,
        q: &'a ParamVector,
        theta: f64,
        closed_forms: bool,
        m: usize,
    }

    fn rec(c: Cylinder, ctx: &Ctx, terms: &mut Vec<f64>, budget: &mut u64) -> Result<()> {
        if !ctx.target.meets(&c) {
            return Ok(());
        }
        if *budget == 0 {
            return Err(Error::BudgetExceeded(
                "antichain sum node budget exhausted".into(),
            ));
        }
        *budget -= 1;
        let d = c.depth();
        if d == ctx.m {
            terms.push(ctx.kernel.weight_log2(ctx.q, &c)?);
            return Ok(());
        }
        if ctx.closed_forms && ctx.target.covers(&c) {
            let rest = (ctx.m - d) as f64;
            let measure = &ctx.kernel.measure;
            match measure.subtree_kind(c.word()) {
                SubtreeKind::Halving => {
                    let base = ctx.theta * measure.log2_mass(&c);
                    terms.push(base + rest * (1.0 - ctx.theta));
                    return Ok(());
                }
                SubtreeKind::Bernoulli => {
                    let base = ctx.theta * measure.log2_mass(&c);
                    let step = log2_sum_exp2(&[
                        ctx.theta * measure.log2_p0(),
                        ctx.theta * measure.log2_p1(),
                    ]);
                    terms.push(base + rest * step);
                    return Ok(());
                }
                SubtreeKind::Mixed => {}
            }
        }
        rec(c.child(0)?, ctx, terms, budget)?;
        rec(c.child(1)?, ctx, terms, budget)?;
        Ok(())
    }

    let ctx = Ctx {
        target,
        kernel,
        q,
        theta: kernel.effective_theta(q),
        closed_forms: !matches!(kernel.variant, KernelVariant::PerturbedProduct { .. }),
        m,
    };
    let mut terms: Vec<f64> = Vec::new();
    let mut budget: u64 = 1 << 24;
    rec(Cylinder::root(), &ctx, &mut terms, &mut budget)?;
    if terms.is_empty() {
        return Err(Error::EmptyTarget(format!(
            "no depth-{m} cylinders meet the set"
        )));
    }
    Ok(log2_sum_exp2(&terms))
}

/// One spectrum estimate: per-depth block sums, fitted slope over the
/// deepest half, residual, and the closed form when the measure has one.
#[derive(Clone, Debug, Serialize)]
pub struct SpectrumEstimate {
    pub theta: f64,
    pub depths: Vec<usize>,
    pub log2_sums: Vec<f64>,
    pub slope: f64,
    pub residual: f64,
    pub closed_form: Option<f64>,
}

/// Estimate the Lq spectrum: the slope of log2(block sum at depth m) in m.
pub fn lq_spectrum(
    target: &TargetSet,
    kernel: &Kernel,
    q: &ParamVector,
    depths: &[usize],
) -> Result<SpectrumEstimate> {
    if depths.len() < 4 {
        return Err(Error::DegenerateFit(format!(
            "need >= 4 depths, got {}",
            depths.len()
        )));
    }
    if target.is_empty() {
        return Err(Error::EmptyTarget("spectrum of an empty set".into()));
    }
    let theta = kernel.effective_theta(q);
    let mut log2_sums = Vec::with_capacity(depths.len());
    for &m in depths {
        log2_sums.push(antichain_sum_log2(target, kernel, q, m)?);
    }
    let (slope, residual) = fit_deepest_half(depths, &log2_sums)?;
    let closed_form = if target.is_whole_space() {
        match kernel.measure.rule() {
            SelectionRule::None => Some(1.0 - theta),
            SelectionRule::All => Some(log2_sum_exp2(&[
                theta * kernel.measure.log2_p0(),
                theta * kernel.measure.log2_p1(),
            ])),
            _ => None,
        }
    } else {
        None
    };
    Ok(SpectrumEstimate {
        theta,
        depths: depths.to_vec(),
        log2_sums,
        slope,
        residual,
        closed_form,
    })
}

/// How to extract the critical exponent.
#[derive(Clone, Copy, Debug)]
pub enum ExponentMethod {
    /// Fitted slope of the block sums over the working depths.
    SlopeFit,
    /// Bisection on t: the sup-packing value grows geometrically in depth
    /// below the critical t and shrinks above it. Cross-checks the fit at
    /// DP-tractable depths.
    Bisection { d1: usize, d2: usize, tol: f64 },
}

pub fn critical_exponent(
    target: &TargetSet,
    kernel: &Kernel,
    q: &ParamVector,
    depths: &[usize],
    method: ExponentMethod,
) -> Result<f64> {
    match method {
        ExponentMethod::SlopeFit => Ok(lq_spectrum(target, kernel, q, depths)?.slope),
        ExponentMethod::Bisection { d1, d2, tol } => {
            let est = lq_spectrum(target, kernel, q, depths)?.slope;
            let growth = |t: f64| -> Result<f64> {
                let a = sup_packing_log2(target, kernel, q, t, 1, d1)?;
                let b = sup_packing_log2(target, kernel, q, t, 1, d2)?;
                Ok((b - a) / (d2 as f64 - d1 as f64))
            };
            // Below the critical t the DP value grows linearly in depth;
            // above it the best antichain is the shallowest one and the
            // growth rate is zero. Bisect on "strictly growing".
            let mut lo = est - 2.0;
            let mut hi = est + 2.0;
            if growth(lo)? <= 0.0 || growth(hi)? > 0.0 {
                return Err(Error::SearchIntervalExhausted(
                    "critical exponent not bracketed".into(),
                ));
            }
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                if growth(mid)? > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(0.5 * (lo + hi))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cascade::{build_generations, CascadeParams, Schedule};
    use crate::numeric::parse_rational;
    use crate::space::TailRule;
    use std::sync::Arc;

    fn word(s: &str) -> Word {
        Word::parse(s).unwrap()
    }

    fn bernoulli(p0: &str) -> Arc<CascadeMeasure> {
        Arc::new(CascadeMeasure::bernoulli(parse_rational(p0).unwrap()).unwrap())
    }

    #[test]
    fn target_set_normalization_and_meets() {
        let a = TargetSet::from_cylinders(vec![
            Cylinder(word("01")),
            Cylinder(word("0110")),
            Cylinder(word("10")),
        ]);
        assert_eq!(a.cylinders().len(), 2); // [0110] sits inside [01]
        assert!(a.meets(&Cylinder(word("0"))));
        assert!(a.meets(&Cylinder(word("0111"))));
        assert!(!a.meets(&Cylinder(word("00"))));
        assert!(a.covers(&Cylinder(word("011"))));
        assert!(!a.covers(&Cylinder(word("0"))));
    }

    #[test]
    fn packing_sum_counts_and_mass() {
        // chi = 0 (Olsen q=0), t = 0: the sum counts the balls.
        let k = Kernel::olsen(Arc::new(CascadeMeasure::uniform()));
        let balls: Vec<(Point, DyadicRadius)> = ["00", "01", "10", "11"]
            .iter()
            .map(|s| {
                (
                    Point::new(word(s), TailRule::RepeatOne),
                    DyadicRadius::new(2).unwrap(),
                )
            })
            .collect();
        let p = CenteredPacking::new(balls);
        let v = packing_sum(&p, &k, &ParamVector::scalar(0.0), 0.0).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
        // Olsen q=1, t=0, full uniform packing: mass conservation gives 1.
        let v1 = packing_sum(&p, &k, &ParamVector::scalar(1.0), 0.0).unwrap();
        assert!((v1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_binomial_identity() {
        // Full depth-m packing, Olsen q = theta:
        // sum = (p0^theta + p1^theta)^m * 2^(-m t), against direct summation.
        let k = Kernel::olsen(bernoulli("0.3"));
        for m in [4usize, 8, 12] {
            let p = CenteredPacking::uniform_over(&TargetSet::whole_space(), m, 1 << 16).unwrap();
            assert_eq!(p.balls.len(), 1 << m);
            for (theta, t) in [(0.5, 0.0), (2.0, -1.0), (3.0, 1.5)] {
                let direct = packing_sum_log2(&p, &k, &ParamVector::scalar(theta), t).unwrap();
                let closed = (m as f64)
                    * (log2_sum_exp2(&[theta * 0.3f64.log2(), theta * 0.7f64.log2()]) - t);
                assert!(
                    (direct - closed).abs() < 1e-9,
                    "m={m} theta={theta} t={t}: {direct} vs {closed}"
                );
            }
        }
    }

    #[test]
    fn sup_examples() {
        let uni = Arc::new(CascadeMeasure::uniform());
        let k = Kernel::olsen(uni);
        let x = TargetSet::whole_space();
        // chi = 0, t = 1: all antichains telescope to at most 1.
        let v = sup_packing_value(&x, &k, &ParamVector::scalar(0.0), 1.0, 1, 6).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // chi = 0, t = 0: take all the deepest cylinders.
        let v = sup_packing_value(&x, &k, &ParamVector::scalar(0.0), 0.0, 1, 10).unwrap();
        assert!((v - 1024.0).abs() < 1e-9);
    }

    #[test]
    fn sup_monotone_in_eps_and_subadditive() {
        let k = Kernel::olsen(bernoulli("0.3"));
        let q = ParamVector::scalar(1.7);
        let t = 0.3;
        let x = TargetSet::whole_space();
        // admissible packings shrink as eps decreases
        let mut prev = f64::INFINITY;
        for m in 1..=5usize {
            let v = sup_packing_log2(&x, &k, &q, t, m, 8).unwrap();
            assert!(v <= prev + 1e-12, "eps monotonicity at m={m}");
            prev = v;
        }
        // subadditivity over a disjoint split
        let a = TargetSet::from_cylinders(vec![Cylinder(word("0"))]);
        let b = TargetSet::from_cylinders(vec![Cylinder(word("1"))]);
        let whole = sup_packing_value(&x, &k, &q, t, 2, 8).unwrap();
        let va = sup_packing_value(&a, &k, &q, t, 2, 8).unwrap();
        let vb = sup_packing_value(&b, &k, &q, t, 2, 8).unwrap();
        assert!(whole <= va + vb + 1e-9);
    }

    #[test]
    fn spectrum_uniform_and_bernoulli() {
        let x = TargetSet::whole_space();
        let uni = Kernel::olsen(Arc::new(CascadeMeasure::uniform()));
        let depths: Vec<usize> = (4..=16).collect();
        for theta in [-1.0, 0.0, 0.5, 1.0, 2.0] {
            let s = lq_spectrum(&x, &uni, &ParamVector::scalar(theta), &depths).unwrap();
            assert!((s.slope - (1.0 - theta)).abs() < 1e-9, "theta={theta}");
            assert!(s.residual < 1e-9);
            assert_eq!(s.closed_form, Some(1.0 - theta));
        }
        let ber = Kernel::olsen(bernoulli("0.3"));
        for theta in [0.5, 1.0, 2.0] {
            let s = lq_spectrum(&x, &ber, &ParamVector::scalar(theta), &depths).unwrap();
            let cf = s.closed_form.unwrap();
            assert!((s.slope - cf).abs() < 1e-9, "theta={theta}");
            if theta == 1.0 {
                assert!(s.slope.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spectrum_example_measure_small_depth() {
        let params = CascadeParams::from_decimal("0.3", 0.10, 0.20, 0.25, 0.35, 6).unwrap();
        let sched = Schedule::compressed(vec![6, 12, 24, 48]).unwrap();
        let gs = Arc::new(build_generations(&params, &sched, 24).unwrap());
        let k = Kernel::olsen(Arc::new(CascadeMeasure::from_generations(gs)));
        let depths: Vec<usize> = (4..=24).step_by(2).collect();
        let s = lq_spectrum(&TargetSet::whole_space(), &k, &ParamVector::scalar(1.0), &depths)
            .unwrap();
        // mass conservation: every block sum is exactly 1
        for v in &s.log2_sums {
            assert!(v.abs() < 1e-10);
        }
        assert!(s.slope.abs() < 1e-11);
        // theta = 0 gives the box dimension of the full tree
        let s0 = lq_spectrum(&TargetSet::whole_space(), &k, &ParamVector::scalar(0.0), &depths)
            .unwrap();
        assert!((s0.slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spectrum_convexity_bernoulli() {
        let x = TargetSet::whole_space();
        let k = Kernel::olsen(bernoulli("0.3"));
        let depths: Vec<usize> = (4..=16).collect();
        let thetas: Vec<f64> = (0..=12).map(|i| i as f64 * 0.5 - 2.0).collect();
        let vals: Vec<f64> = thetas
            .iter()
            .map(|&t| {
                lq_spectrum(&x, &k, &ParamVector::scalar(t), &depths)
                    .unwrap()
                    .slope
            })
            .collect();
        for w in vals.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-9, "convexity");
        }
    }

    #[test]
    fn critical_exponent_examples() {
        let x = TargetSet::whole_space();
        let depths: Vec<usize> = (4..=16).collect();
        // chi = 0: prepacking dimension of the whole space is 1
        let uni = Kernel::olsen(Arc::new(CascadeMeasure::uniform()));
        let d = critical_exponent(
            &x,
            &uni,
            &ParamVector::scalar(0.0),
            &depths,
            ExponentMethod::SlopeFit,
        )
        .unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        // Olsen q = 1: Lambda(1) = 0
        let ber = Kernel::olsen(bernoulli("0.3"));
        let d1 = critical_exponent(
            &x,
            &ber,
            &ParamVector::scalar(1.0),
            &depths,
            ExponentMethod::SlopeFit,
        )
        .unwrap();
        assert!(d1.abs() < 1e-12);
        // Olsen q = 2 on Bernoulli(0.3, 0.7): log2(0.09 + 0.49), by bisection
        let d2 = critical_exponent(
            &x,
            &ber,
            &ParamVector::scalar(2.0),
            &depths,
            ExponentMethod::Bisection {
                d1: 8,
                d2: 16,
                tol: 1e-6,
            },
        )
        .unwrap();
        assert!((d2 - (0.09f64 + 0.49).log2()).abs() < 1e-5, "{d2}");
    }

    #[test]
    fn besicovitch_validation() {
        let x = TargetSet::whole_space();
        let u = DyadicRadius::new(1).unwrap();
        let mk = |s: &str, m: u32| {
            (
                Point::new(word(s), TailRule::RepeatOne),
                DyadicRadius::new(m).unwrap(),
            )
        };
        // a valid packing is a 1-Besicovitch packing for every k >= 1
        let p = BesicovitchPacking {
            balls: vec![mk("00", 2), mk("01", 2)],
            groups: vec![0, 0],
        };
        for k in 1..=3 {
            assert!(validate_besicovitch(&p, k, &x, u).unwrap().0);
        }
        // overlap within one group fails
        let bad = BesicovitchPacking {
            balls: vec![mk("0", 1), mk("00", 2)],
            groups: vec![0, 0],
        };
        assert!(!validate_besicovitch(&bad, 2, &x, u).unwrap().0);
        // the same two balls split across groups pass with k = 2
        let ok = BesicovitchPacking {
            balls: vec![mk("0", 1), mk("00", 2)],
            groups: vec![0, 1],
        };
        assert!(validate_besicovitch(&ok, 2, &x, u).unwrap().0);
        assert!(!validate_besicovitch(&ok, 1, &x, u).unwrap().0);
    }

    #[test]
    fn exact_dp_matches_log_dp() {
        let measure = bernoulli("0.3");
        let k = Kernel::olsen(measure.clone());
        let a = TargetSet::from_cylinders(vec![Cylinder(word("0")), Cylinder(word("10"))]);
        for (theta, t) in [(0i64, 0i64), (1, 0), (2, -1), (-1, 1)] {
            let exact = sup_packing_exact(&a, &measure, theta, t, 1, 5).unwrap();
            let log =
                sup_packing_log2(&a, &k, &ParamVector::scalar(theta as f64), t as f64, 1, 5)
                    .unwrap();
            let exact_log = crate::numeric::log2_rational(&exact);
            assert!((exact_log - log).abs() < 1e-9, "theta={theta} t={t}");
        }
    }
}
