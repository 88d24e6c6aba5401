//! Reduction of pseudo-group determining equations to a section.
//!
//! The reduced jet coordinates are `Z̄^a_J = D_x^J Z^a`, computed with the
//! lifted total derivatives and simplified by the determining equations.
//! Implicitization then eliminates the parametric diffeomorphism jets by
//! triangular solve-and-substitute; whatever relations remain are the reduced
//! determining equations.

use std::collections::HashMap;

use crate::expr::{Coord, Expr, Space};
use crate::jetcalc::{total_derivative, JetContext, JetPoint};
use crate::multiindex::MultiIndex;
use crate::system::{DifferentialSystem, SystemError, SystemKind};
use num_traits::Zero;

/// A pseudo-group given by its determining system over diffeomorphism jets.
#[derive(Clone, Debug)]
pub struct PseudoGroupSpec {
    pub ctx: JetContext,
    pub determining: DifferentialSystem,
}

impl PseudoGroupSpec {
    pub fn new(determining: DifferentialSystem) -> Self {
        assert_eq!(determining.kind, SystemKind::PseudoGroup);
        PseudoGroupSpec {
            ctx: determining.ctx.clone(),
            determining,
        }
    }

    /// Fiber dimension `d^{(n)}` of the determining system, prolonging as
    /// needed.
    pub fn fiber_dim(&self, n: usize) -> Result<u64, SystemError> {
        let sys = self
            .determining
            .prolonged_to(n.max(self.determining.order))?;
        Ok(sys.fiber_dim(n))
    }
}

/// Reduced determining equations on a fixed section, with the elimination
/// record that produced them.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub system: DifferentialSystem,
    /// Parametric diffeomorphism jets eliminated during implicitization,
    /// with the expressions (in reduced jets and section jets) they equal.
    pub eliminated: HashMap<Coord, Expr>,
}

impl ReducedSystem {
    pub fn fiber_dim(&self, n: usize) -> Result<u64, SystemError> {
        let sys = self.system.prolonged_to(n.max(self.system.order))?;
        Ok(sys.fiber_dim(n))
    }
}

/// Computes the reduced determining equations of `g` on the section encoded
/// in `point`, up to order `up_to`.
///
/// The section enters only through the regularity of elimination pivots; the
/// produced equations keep the section jets symbolic.
pub fn reduce(
    g: &PseudoGroupSpec,
    point: &JetPoint,
    up_to: usize,
) -> Result<ReducedSystem, SystemError> {
    let ctx = &g.ctx;
    let det = g.determining.prolonged_to(up_to.max(g.determining.order))?;
    let det_subst = det.principal_substitution();
    // Elimination state: parametric diffeo jets solved so far.
    let mut eliminated: HashMap<Coord, Expr> = HashMap::new();
    let mut equations: Vec<(Coord, Expr)> = Vec::new();
    // reduced jet expressions, built order by order
    let mut reduced_exprs: HashMap<Coord, Expr> = HashMap::new();
    for a in 1..=ctx.m() as u8 {
        reduced_exprs.insert(
            Coord::red(a, MultiIndex::empty()),
            Expr::coord(Coord::diffeo(a, MultiIndex::empty())),
        );
    }
    let eval = |e: &Expr, elim: &HashMap<Coord, Expr>| -> Option<crate::scalar::Rat> {
        // evaluate at the identity jet after applying eliminations
        let reduced = fixpoint_subst(e, elim);
        reduced.eval(&|c: &Coord| point.eval_identity(c)).ok()
    };
    for order in 0..=up_to {
        // raw expressions for this order's reduced jets
        let mut batch: Vec<(Coord, Expr)> = Vec::new();
        for a in 1..=ctx.m() as u8 {
            for j in MultiIndex::all_of_order(ctx.p as u8, order) {
                let coord = Coord::red(a, j.clone());
                let expr = if order == 0 {
                    fixpoint_subst(&reduced_exprs[&coord], &det_subst)
                } else {
                    let first = j.entries()[0];
                    let rest = j.remove(first).unwrap();
                    let prev = reduced_exprs[&Coord::red(a, rest)].clone();
                    let d = total_derivative(&prev, first, ctx);
                    fixpoint_subst(&d, &det_subst)
                };
                reduced_exprs.insert(coord.clone(), expr.clone());
                batch.push((coord, expr));
            }
        }
        // apply known eliminations
        let mut pending: Vec<(Coord, Expr)> = batch
            .into_iter()
            .map(|(c, e)| (c, fixpoint_subst(&e, &eliminated)))
            .collect();
        // triangular elimination within this order
        let det_principal: std::collections::HashSet<Coord> =
            det_subst.keys().cloned().collect();
        loop {
            let mut best: Option<(usize, Coord, Expr)> = None;
            for (i, (red_coord, expr)) in pending.iter().enumerate() {
                let candidates =
                    linear_parametric_candidates(expr, &eliminated, &det_principal);
                if candidates.is_empty() {
                    continue;
                }
                // prefer the diffeomorphism jet whose multi-index embeds the
                // reduced index (the pure base-direction shadow), then any
                let shadow = Coord::diffeo(red_coord.dep, red_coord.index.clone());
                let mut ranked: Vec<&Coord> = candidates.iter().collect();
                ranked.sort_by_key(|c| if **c == shadow { 0 } else { 1 });
                for cand in ranked {
                    let coeff = expr.partial(cand);
                    if let Some(v) = eval(&coeff, &eliminated) {
                        if !v.is_zero() {
                            let preferred = *cand == shadow;
                            if best.is_none() || preferred {
                                best = Some((i, cand.clone(), coeff));
                            }
                            break;
                        }
                    }
                }
                if let Some((_, c, _)) = &best {
                    if *c == shadow {
                        break;
                    }
                }
            }
            let Some((i, cand, coeff)) = best else { break };
            let (red_coord, expr) = pending.remove(i);
            // solve  red = expr  for cand:  cand = (red - expr|cand=0)/coeff
            let mut zeroed = HashMap::new();
            zeroed.insert(cand.clone(), Expr::zero());
            let rest = expr.substitute(&zeroed);
            let solved = Expr::div(Expr::sub(Expr::coord(red_coord.clone()), rest), coeff);
            eliminated.insert(cand, solved);
            // refresh recorded eliminations and pending rows
            let keys: Vec<Coord> = eliminated.keys().cloned().collect();
            let snapshot = eliminated.clone();
            for c in keys {
                let e = fixpoint_subst(&eliminated[&c], &snapshot);
                eliminated.insert(c, e);
            }
            for (_, e) in pending.iter_mut() {
                *e = fixpoint_subst(e, &eliminated);
            }
        }
        // whatever remains at this order: reduced determining equations
        for (red_coord, expr) in pending {
            let residual_parametric: Vec<Coord> = expr
                .coords()
                .into_iter()
                .filter(|c| c.space == Space::Diffeo && !eliminated.contains_key(c))
                .collect();
            if !residual_parametric.is_empty() {
                return Err(SystemError::EliminationFailed {
                    residue: residual_parametric
                        .iter()
                        .map(|c| format!("{c} in {red_coord} = {expr}"))
                        .collect(),
                });
            }
            equations.push((red_coord, expr));
        }
    }
    // Assemble and re-solve into reduced Cartan normal form order by order.
    let mut sys = DifferentialSystem::new(SystemKind::Reduced, ctx.clone(), point.clone());
    for order in 0..=up_to {
        let batch: Vec<Expr> = equations
            .iter()
            .filter(|(c, _)| c.index.order() == order)
            .map(|(c, e)| sys.substitute_to_fixpoint(&Expr::sub(Expr::coord(c.clone()), e.clone())))
            .filter(|e| !e.is_zero_const())
            .collect();
        if batch.is_empty() {
            continue;
        }
        let (solved, residue) = sys.solve_linear_for_order(batch, order)?;
        let nonzero: Vec<String> = residue
            .iter()
            .filter(|e| {
                let mut rng = crate::scalar::SeededRng::new(17);
                (0..5).any(|_| {
                    let vals = crate::system::random_point(e, &mut rng);
                    e.eval(&|c: &Coord| vals.get(c).cloned())
                        .map(|v| !v.is_zero())
                        .unwrap_or(false)
                })
            })
            .map(|e| format!("{e}"))
            .collect();
        if !nonzero.is_empty() {
            return Err(SystemError::EliminationFailed { residue: nonzero });
        }
        for (lhs, rhs) in solved {
            sys.add_equation(lhs, rhs);
        }
    }
    sys.order = up_to;
    Ok(ReducedSystem {
        system: sys,
        eliminated,
    })
}

fn fixpoint_subst(e: &Expr, map: &HashMap<Coord, Expr>) -> Expr {
    let mut cur = e.clone();
    for _ in 0..64 {
        let next = cur.substitute(map);
        if !next.coords().iter().any(|c| map.contains_key(c)) {
            return next;
        }
        cur = next;
    }
    panic!("substitution loop did not close");
}

/// Uneliminated parametric diffeomorphism jets that occur linearly in `e`.
fn linear_parametric_candidates(
    e: &Expr,
    eliminated: &HashMap<Coord, Expr>,
    det_principal: &std::collections::HashSet<Coord>,
) -> Vec<Coord> {
    let mut out = Vec::new();
    for c in e.coords() {
        if c.space != Space::Diffeo
            || eliminated.contains_key(&c)
            || det_principal.contains(&c)
        {
            continue;
        }
        // linear iff the formal partial no longer mentions the candidate
        let d = e.partial(&c);
        if d.coords().contains(&c) {
            continue;
        }
        out.push(c);
    }
    out
}

/// Reducibility report: per-order fiber dimension comparison.
#[derive(Clone, Debug)]
pub struct ReducibilityReport {
    /// `(order, d^{(n)}, d̄^{(n)})` triples over the inspected range.
    pub dims: Vec<(usize, u64, u64)>,
    /// First order from which the dimensions agree through the range.
    pub reducibility_order: Option<usize>,
}

/// Compares pseudo-group and reduced fiber dimensions over `orders`.
pub fn reducibility_check(
    g: &PseudoGroupSpec,
    red: &ReducedSystem,
    orders: std::ops::RangeInclusive<usize>,
) -> Result<ReducibilityReport, SystemError> {
    let mut dims = Vec::new();
    for n in orders.clone() {
        dims.push((n, g.fiber_dim(n)?, red.fiber_dim(n)?));
    }
    let mut reducibility_order = None;
    for (i, &(n, d, dr)) in dims.iter().enumerate() {
        if d == dr && dims[i..].iter().all(|&(_, a, b)| a == b) {
            reducibility_order = Some(n);
            break;
        }
    }
    Ok(ReducibilityReport {
        dims,
        reducibility_order,
    })
}

/// Cartan-character comparison between the determining equations and their
/// reduction: the first `p` characters agree and the remaining `q` vanish.
pub fn reduced_character_check(
    g: &PseudoGroupSpec,
    red: &ReducedSystem,
    n: usize,
) -> Result<bool, SystemError> {
    let det = g.determining.prolonged_to(n)?;
    let reduced = red.system.prolonged_to(n)?;
    let full = det.symbol(n)?;
    let r = reduced.symbol(n)?;
    let p = g.ctx.p;
    let heads_match = (0..p).all(|i| full.characters[i] == r.characters[i]);
    let tail_zero = full.characters[p..].iter().all(|&a| a == 0);
    Ok(heads_match && tail_zero)
}

/// Checks that every equation of a reduced system vanishes under the
/// reduced-identity substitution, by evaluation at several random section
/// jets.  The base point stays at the system's own regular base so open
/// conditions on the base coordinates keep holding.
pub fn vanishes_at_reduced_identity(sys: &DifferentialSystem, trials: u64) -> bool {
    for seed in 0..trials {
        let point = JetPoint::generic(sys.ctx.p, sys.ctx.q, 1000 + seed)
            .with_base(sys.point.base.clone());
        for eq in &sys.equations {
            let expr = Expr::sub(Expr::coord(eq.lhs.clone()), eq.rhs.clone());
            match expr.eval(&|c: &Coord| point.eval_identity(c)) {
                Ok(v) => {
                    if !v.is_zero() {
                        return false;
                    }
                }
                Err(_) => return false,
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat_int;

    fn mi(e: &[u8]) -> MultiIndex {
        MultiIndex::new(e.to_vec())
    }

    /// The affine group X = a x + b, U = c u + d x + e on curves.
    fn affine_group() -> PseudoGroupSpec {
        let ctx = JetContext::new(1, 1);
        let point = JetPoint::generic(1, 1, 9);
        let mut det = DifferentialSystem::new(SystemKind::PseudoGroup, ctx, point);
        // X_u = 0; all second derivatives of X and U vanish.
        det.add_equation(Coord::diffeo(1, mi(&[2])), Expr::zero());
        for idx in [mi(&[1, 1]), mi(&[1, 2]), mi(&[2, 2])] {
            det.add_equation(Coord::diffeo(1, idx.clone()), Expr::zero());
            det.add_equation(Coord::diffeo(2, idx), Expr::zero());
        }
        PseudoGroupSpec::new(det)
    }

    #[test]
    fn affine_reduction_matches_closed_form() {
        // With u_xx != 0 the order-3 reduced system contains
        // Ur_xxx = (u_xxx/u_xx) Ur_xx.
        let g = affine_group();
        let mut point = JetPoint::generic(1, 1, 9);
        point.set(1, mi(&[1, 1]), rat_int(3));
        let red = reduce(&g, &point, 3).unwrap();
        let want_lhs = Coord::red(2, mi(&[1, 1, 1]));
        let eq = red
            .system
            .equations
            .iter()
            .find(|e| e.lhs == want_lhs)
            .expect("third-order reduced equation");
        // check semantically: rhs == (u_xxx/u_xx) * Ur_xx at random points
        let expect = Expr::div(
            Expr::mul(vec![
                Expr::coord(Coord::sub(1, mi(&[1, 1, 1]))),
                Expr::coord(Coord::red(2, mi(&[1, 1]))),
            ]),
            Expr::coord(Coord::sub(1, mi(&[1, 1]))),
        );
        let mut rng = crate::scalar::SeededRng::new(4);
        for _ in 0..5 {
            let mut vals = crate::system::random_point(&eq.rhs, &mut rng);
            for c in expect.coords() {
                vals.entry(c).or_insert_with(|| rng.small_rat());
            }
            let a = eq.rhs.eval(&|c: &Coord| vals.get(c).cloned()).unwrap();
            let b = expect.eval(&|c: &Coord| vals.get(c).cloned()).unwrap();
            assert_eq!(a, b);
        }
        // X̄_xx = 0 and X̄_xxx = 0 are the horizontal relations
        for idx in [mi(&[1, 1]), mi(&[1, 1, 1])] {
            let eq = red
                .system
                .equations
                .iter()
                .find(|e| e.lhs == Coord::red(1, idx.clone()))
                .unwrap();
            assert!(eq.rhs.is_zero_const());
        }
    }

    #[test]
    fn affine_reducibility_dims() {
        // d^{(1)} = 5 > d̄^{(1)} = 4, equal from order 2 on.
        let g = affine_group();
        let mut point = JetPoint::generic(1, 1, 9);
        point.set(1, mi(&[1, 1]), rat_int(3));
        let red = reduce(&g, &point, 3).unwrap();
        let report = reducibility_check(&g, &red, 1..=4).unwrap();
        assert_eq!(report.dims[0], (1, 5, 4));
        for &(n, d, dr) in &report.dims[1..] {
            assert_eq!(d, 5, "order {n}");
            assert_eq!(dr, 5, "order {n}");
        }
        assert_eq!(report.reducibility_order, Some(2));
    }

    #[test]
    fn reduced_identity_annihilates_equations() {
        let g = affine_group();
        let mut point = JetPoint::generic(1, 1, 9);
        point.set(1, mi(&[1, 1]), rat_int(3));
        let red = reduce(&g, &point, 3).unwrap();
        assert!(vanishes_at_reduced_identity(&red.system, 4));
    }
}
