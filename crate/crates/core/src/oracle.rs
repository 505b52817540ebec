//! Brute-force evaluators at tiny depth. These ground every search result:
//! the packing DP against literal antichain enumeration, and the min-max
//! value L against exhaustive assignment search. Enumeration order is
//! canonical (lexicographic) so failures come with a minimal witness, and
//! nothing here draws randomness.

use num_rational::BigRational;
use num_traits::Zero;

use crate::cascade::CascadeMeasure;
use crate::error::{Error, Result};
use crate::kernel::{Kernel, ParamVector};
use crate::packing::{packing_sum_exact, TargetSet};
use crate::space::Cylinder;

/// Every maximal antichain of cylinders meeting the target with depths in
/// [m, depth_max]. Maximal antichains suffice for packing suprema: every
/// term is nonnegative, so extending a packing never lowers the sum.
fn maximal_antichains(
    c: Cylinder,
    target: &TargetSet,
    m: usize,
    depth_max: usize,
    budget: &mut u64,
) -> Result<Vec<Vec<Cylinder>>> {
    if !target.meets(&c) {
        return Ok(vec![Vec::new()]);
    }
    if *budget == 0 {
        return Err(Error::BudgetExceeded("antichain enumeration".into()));
    }
    *budget -= 1;
    let d = c.depth();
    let mut out: Vec<Vec<Cylinder>> = Vec::new();
    if d >= m {
        out.push(vec![c]);
    }
    if d < depth_max {
        let left = maximal_antichains(c.child(0)?, target, m, depth_max, budget)?;
        let right = maximal_antichains(c.child(1)?, target, m, depth_max, budget)?;
        if out.len() + left.len() * right.len() > 2_000_000 {
            return Err(Error::BudgetExceeded("antichain cross product".into()));
        }
        for l in &left {
            for r in &right {
                let mut v = l.clone();
                v.extend_from_slice(r);
                out.push(v);
            }
        }
    }
    Ok(out)
}

/// Ground truth for the pre-packing supremum at depth <= 5: enumerate the
/// maximal antichains explicitly, evaluate each with the exact packing sum,
/// return the maximum and the lexicographically least witness attaining it.
pub fn brute_force_sup_packing(
    target: &TargetSet,
    measure: &CascadeMeasure,
    theta: i64,
    t: i64,
    m: usize,
    depth_max: usize,
) -> Result<(BigRational, Vec<Cylinder>)> {
    if depth_max > 5 {
        return Err(Error::BudgetExceeded(
            "brute-force packing supremum capped at depth 5".into(),
        ));
    }
    if m > depth_max {
        return Err(Error::InvalidConfig("need m <= depth_max".into()));
    }
    let mut budget: u64 = 1 << 22;
    let chains = maximal_antichains(Cylinder::root(), target, m, depth_max, &mut budget)?;
    let mut best = BigRational::zero();
    let mut witness: Vec<Cylinder> = Vec::new();
    for chain in chains {
        let v = packing_sum_exact(&chain, measure, theta, t)?;
        if v > best || (witness.is_empty() && !chain.is_empty() && v == best) {
            best = v;
            witness = chain;
        }
    }
    Ok((best, witness))
}

/// Ground truth for the min-max quantity L_eps^{q,k}(A) at depth <= 4,
/// k <= 3: for every maximal packing (the supremum is attained there —
/// restricting a replacement family to a sub-index-set never raises its
/// sup), run an exhaustive branch-and-bound over all index-matched
/// k-grouped replacement families and take the true infimum of the maximal
/// ratio; then the maximum over packings.
pub fn brute_force_l(
    target: &TargetSet,
    kernel: &Kernel,
    q: &ParamVector,
    k: usize,
    m_eps: usize,
    u_depth: usize,
    depth_max: usize,
) -> Result<f64> {
    if depth_max > 4 || k > 3 {
        return Err(Error::BudgetExceeded(
            "brute-force L capped at depth 4, k <= 3".into(),
        ));
    }
    if u_depth > m_eps {
        return Err(Error::InvalidConfig(
            "u_eps must be at least eps (u_depth <= m_eps)".into(),
        ));
    }
    if target.is_empty() {
        return Err(Error::EmptyTarget("L of an empty set".into()));
    }

    // Replacement candidates: every cylinder meeting A with depth in
    // [u_depth, depth_max], i.e. every admissible ball centered in A.
    let mut candidates: Vec<Cylinder> = Vec::new();
    collect_meeting(Cylinder::root(), target, u_depth, depth_max, &mut candidates)?;
    candidates.sort();
    let cand_chi: Vec<f64> = candidates
        .iter()
        .map(|c| kernel.chi_cylinder(q, c))
        .collect::<Result<_>>()?;

    let mut budget: u64 = 1 << 22;
    let packings = maximal_antichains(Cylinder::root(), target, m_eps, depth_max, &mut budget)?;

    let mut l_eps = f64::NEG_INFINITY;
    for packing in packings {
        if packing.is_empty() {
            continue;
        }
        let denoms: Vec<f64> = packing
            .iter()
            .map(|c| -(c.depth() as f64) * std::f64::consts::LN_2)
            .collect();
        // per-index candidate order by ascending ratio
        let order: Vec<Vec<usize>> = denoms
            .iter()
            .map(|denom| {
                let mut idx: Vec<usize> = (0..candidates.len()).collect();
                idx.sort_by(|&a, &b| {
                    let ra = cand_chi[a] / denom;
                    let rb = cand_chi[b] / denom;
                    ra.partial_cmp(&rb).unwrap().then(a.cmp(&b))
                });
                idx
            })
            .collect();

        let mut best = f64::INFINITY;
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
        assign(
            0,
            &candidates,
            &cand_chi,
            &denoms,
            &order,
            f64::NEG_INFINITY,
            &mut groups,
            &mut best,
            &mut budget,
        )?;
        if best.is_finite() && best > l_eps {
            l_eps = best;
        }
    }
    if l_eps == f64::NEG_INFINITY {
        return Err(Error::EmptyTarget("no admissible packing".into()));
    }
    Ok(l_eps)
}

fn collect_meeting(
    c: Cylinder,
    target: &TargetSet,
    lo: usize,
    hi: usize,
    out: &mut Vec<Cylinder>,
) -> Result<()> {
    if !target.meets(&c) {
        return Ok(());
    }
    if c.depth() >= lo {
        out.push(c);
    }
    if c.depth() < hi {
        collect_meeting(c.child(0)?, target, lo, hi, out)?;
        collect_meeting(c.child(1)?, target, lo, hi, out)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn assign(
    i: usize,
    candidates: &[Cylinder],
    cand_chi: &[f64],
    denoms: &[f64],
    order: &[Vec<usize>],
    cur_max: f64,
    groups: &mut Vec<Vec<usize>>,
    best: &mut f64,
    budget: &mut u64,
) -> Result<()> {
    if cur_max >= *best {
        return Ok(()); // cannot improve the incumbent
    }
    if i == denoms.len() {
        *best = cur_max;
        return Ok(());
    }
    if *budget == 0 {
        return Err(Error::BudgetExceeded("L assignment search".into()));
    }
    *budget -= 1;
    for &ci in &order[i] {
        let ratio = cand_chi[ci] / denoms[i];
        if ratio.max(cur_max) >= *best {
            // candidates sorted by ratio: nothing further can improve
            break;
        }
        for g in 0..groups.len() {
            let ok = groups[g]
                .iter()
                .all(|&other| candidates[other].is_disjoint(&candidates[ci]));
            if ok {
                groups[g].push(ci);
                assign(
                    i + 1,
                    candidates,
                    cand_chi,
                    denoms,
                    order,
                    ratio.max(cur_max),
                    groups,
                    best,
                    budget,
                )?;
                groups[g].pop();
                // empty groups are interchangeable; trying the first is enough
                if groups[g].is_empty() {
                    break;
                }
            }
        }
    }
    Ok(())
}
