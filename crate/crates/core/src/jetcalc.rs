//! Jet-coordinate bookkeeping and the derivative operators.
//!
//! Three families of differentiation appear in the pipeline and all are
//! served by one operator that dispatches on the coordinate family:
//!
//! * plain total derivatives on submanifold and reduced jets (append the
//!   direction to the multi-index),
//! * lifted total derivatives on diffeomorphism jets (`Z^a_{B,i} + Σ_α
//!   u^α_i Z^a_{B,(p+α)}`),
//! * chain-rule differentiation of target jets (`Û^α_{J,j}` weighted by the
//!   reduced horizontal Jacobian entries `X̄^j_{x^i}`).
//!
//! Prolongation of pseudo-group determining systems instead differentiates
//! with respect to every source coordinate `z^a`; see
//! [`diffeo_total_derivative`].

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::expr::{Coord, Expr, Space};
use crate::multiindex::{IndexedCoordinate, MultiIndex};
use crate::scalar::{rat, rat_from_str, rat_to_string, Rat, SeededRng};
use crate::series::Series;
use crate::system::DifferentialSystem;

/// Ambient dimensions and naming for one computation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JetContext {
    /// Number of independent variables.
    pub p: usize,
    /// Number of dependent variables.
    pub q: usize,
    pub x_names: Vec<String>,
    pub u_names: Vec<String>,
    /// Default truncation order for series attached to sections.
    pub truncation_order: usize,
}

impl JetContext {
    pub fn new(p: usize, q: usize) -> Self {
        JetContext {
            p,
            q,
            x_names: (1..=p).map(|i| format!("x{i}")).collect(),
            u_names: (1..=q).map(|a| format!("u{a}")).collect(),
            truncation_order: 8,
        }
    }

    pub fn with_names(mut self, x: &[&str], u: &[&str]) -> Self {
        self.x_names = x.iter().map(|s| s.to_string()).collect();
        self.u_names = u.iter().map(|s| s.to_string()).collect();
        self
    }

    /// Total-space dimension `m = p + q`.
    pub fn m(&self) -> usize {
        self.p + self.q
    }
}

/// Total derivative `D_{x^i}` acting across all coordinate families.
pub fn total_derivative(e: &Expr, i: u8, ctx: &JetContext) -> Expr {
    let mut memo = HashMap::new();
    d_total(e, i, ctx, &mut memo)
}

fn d_total(e: &Expr, i: u8, ctx: &JetContext, memo: &mut HashMap<usize, Expr>) -> Expr {
    // derivative of a single coordinate
    let coord_rule = |c: &Coord| -> Expr {
        match c.space {
            Space::Base => {
                if c.dep == i {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Space::Sub => Expr::coord(Coord::sub(c.dep, c.index.append(i))),
            Space::Red => Expr::coord(Coord::red(c.dep, c.index.append(i))),
            Space::Diffeo => {
                let mut terms = vec![Expr::coord(Coord::diffeo(c.dep, c.index.append(i)))];
                for alpha in 1..=ctx.q as u8 {
                    terms.push(Expr::mul(vec![
                        Expr::coord(Coord::sub(alpha, MultiIndex::single(i))),
                        Expr::coord(Coord::diffeo(c.dep, c.index.append(ctx.p as u8 + alpha))),
                    ]));
                }
                Expr::add(terms)
            }
            Space::Target => {
                let mut terms = Vec::new();
                for j in 1..=ctx.p as u8 {
                    terms.push(Expr::mul(vec![
                        Expr::coord(Coord::red(j, MultiIndex::single(i))),
                        Expr::coord(Coord::target(c.dep, c.index.append(j))),
                    ]));
                }
                Expr::add(terms)
            }
        }
    };
    derive_expr(e, &coord_rule, memo)
}

/// Source-coordinate total derivative `∂_{z^a}` on diffeomorphism jet
/// expressions, used to prolong pseudo-group determining systems.
pub fn diffeo_total_derivative(e: &Expr, a: u8, ctx: &JetContext) -> Expr {
    let mut memo = HashMap::new();
    let coord_rule = |c: &Coord| -> Expr {
        match c.space {
            Space::Base => {
                if c.dep == a {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            // order-zero dependent variables are source coordinates z^{p+α}
            Space::Sub if c.index.is_empty() => {
                if ctx.p as u8 + c.dep == a {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Space::Diffeo => Expr::coord(Coord::diffeo(c.dep, c.index.append(a))),
            _ => panic!("coordinate {c} cannot appear in a determining system"),
        }
    };
    derive_expr(e, &coord_rule, &mut memo)
}

fn derive_expr(
    e: &Expr,
    coord_rule: &dyn Fn(&Coord) -> Expr,
    memo: &mut HashMap<usize, Expr>,
) -> Expr {
    let _ = memo;
    e.derive(coord_rule)
}

/// Implicit total derivative operators `D_{X^i} = Σ_j W^j_i D_{x^j}` with
/// `(W^j_i)` the inverse of the (determining-equation-simplified) reduced
/// Jacobian.  Returns the full family, one operator per direction.
pub struct ImplicitOperators {
    /// `weights[i][j] = W^j_i`, so applying direction `i` uses row `i`.
    pub weights: Vec<Vec<Expr>>,
}

/// Inverts a small matrix of expressions by cofactor expansion.
pub fn invert_expr_matrix(m: &[Vec<Expr>]) -> Vec<Vec<Expr>> {
    let n = m.len();
    let det = det_expr(m);
    let mut inv = vec![vec![Expr::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            // cofactor C_ji / det
            let minor = minor_matrix(m, j, i);
            let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
            inv[i][j] = Expr::div(
                Expr::mul(vec![Expr::int(sign), det_expr(&minor)]),
                det.clone(),
            );
        }
    }
    inv
}

fn minor_matrix(m: &[Vec<Expr>], row: usize, col: usize) -> Vec<Vec<Expr>> {
    m.iter()
        .enumerate()
        .filter(|(r, _)| *r != row)
        .map(|(_, rvec)| {
            rvec.iter()
                .enumerate()
                .filter(|(c, _)| *c != col)
                .map(|(_, e)| e.clone())
                .collect()
        })
        .collect()
}

fn det_expr(m: &[Vec<Expr>]) -> Expr {
    match m.len() {
        0 => Expr::one(),
        1 => m[0][0].clone(),
        n => {
            let mut terms = Vec::new();
            for j in 0..n {
                if m[0][j].is_zero_const() {
                    continue;
                }
                let sign = if j % 2 == 0 { 1 } else { -1 };
                let minor = minor_matrix(m, 0, j);
                terms.push(Expr::mul(vec![
                    Expr::int(sign),
                    m[0][j].clone(),
                    det_expr(&minor),
                ]));
            }
            Expr::add(terms)
        }
    }
}

impl ImplicitOperators {
    /// Builds the operators from a reduced system: the Jacobian `(X̄^i_j)` is
    /// simplified by the system's equations before inversion.  The operator
    /// in direction `i` uses the `i`-th column of the inverse Jacobian:
    /// `D_{X^i} = Σ_j (A^{-1})_{ji} D_{x^j}`.
    pub fn from_reduced_system(red: &DifferentialSystem) -> Self {
        let p = red.ctx.p;
        let subst = red.principal_substitution();
        let mut jac = vec![vec![Expr::zero(); p]; p];
        for i in 0..p {
            for j in 0..p {
                let entry = Expr::coord(Coord::red(i as u8 + 1, MultiIndex::single(j as u8 + 1)));
                jac[i][j] = red.substitute_to_fixpoint(&entry.substitute(&subst));
            }
        }
        let inv = invert_expr_matrix(&jac);
        let weights = (0..p)
            .map(|i| (0..p).map(|j| inv[j][i].clone()).collect())
            .collect();
        ImplicitOperators { weights }
    }

    /// Applies `D_{X^i}` to `e`, simplifying with the reduced system.
    pub fn apply(&self, e: &Expr, i: u8, red: &DifferentialSystem) -> Expr {
        let ctx = &red.ctx;
        let mut terms = Vec::new();
        for j in 1..=ctx.p as u8 {
            let w = &self.weights[(i - 1) as usize][(j - 1) as usize];
            if w.is_zero_const() {
                continue;
            }
            let d = total_derivative(e, j, ctx);
            if d.is_zero_const() {
                continue;
            }
            terms.push(Expr::mul(vec![w.clone(), d]));
        }
        red.substitute_to_fixpoint(&Expr::add(terms))
    }
}

/// Chain-rule total derivative: the unified operator, named for the use case
/// where the expression mixes target jets with reduced horizontal jets.
pub fn chain_rule_derivative(e: &Expr, i: u8, ctx: &JetContext) -> Expr {
    total_derivative(e, i, ctx)
}

/// Prolonged action: expressions for every `Û^α_J`, `|J| ≤ up_to`, in terms
/// of submanifold jets and parametric reduced pseudo-group jets.
///
/// `red` must be prolonged to order `up_to` so the substitutions close.
pub fn prolong_action(
    red: &DifferentialSystem,
    up_to: usize,
) -> BTreeMap<IndexedCoordinate, Expr> {
    let ctx = &red.ctx;
    let ops = ImplicitOperators::from_reduced_system(red);
    let mut out: BTreeMap<IndexedCoordinate, Expr> = BTreeMap::new();
    for alpha in 1..=ctx.q as u8 {
        out.insert(
            IndexedCoordinate::new(alpha, MultiIndex::empty()),
            red.substitute_to_fixpoint(&Expr::coord(Coord::red(
                ctx.p as u8 + alpha,
                MultiIndex::empty(),
            ))),
        );
    }
    for order in 1..=up_to {
        for j in MultiIndex::all_of_order(ctx.p as u8, order) {
            let first = j.entries()[0];
            let rest = j.remove(first).expect("nonempty");
            for alpha in 1..=ctx.q as u8 {
                let prev = out
                    .get(&IndexedCoordinate::new(alpha, rest.clone()))
                    .expect("built in order")
                    .clone();
                let next = ops.apply(&prev, first, red);
                out.insert(IndexedCoordinate::new(alpha, j.clone()), next);
            }
        }
    }
    out
}

/// A finite jet of a section at a base point, optionally carrying the full
/// truncated Taylor series per dependent variable.
#[derive(Clone, Debug)]
pub struct SectionJet {
    pub base: Vec<Rat>,
    pub jets: BTreeMap<IndexedCoordinate, Rat>,
    pub series: Option<Vec<Series>>,
}

impl SectionJet {
    pub fn new(base: Vec<Rat>) -> Self {
        SectionJet {
            base,
            jets: BTreeMap::new(),
            series: None,
        }
    }

    pub fn set(&mut self, dep: u8, index: MultiIndex, value: Rat) {
        self.jets
            .insert(IndexedCoordinate::new(dep, index), value);
    }

    pub fn get(&self, dep: u8, index: &MultiIndex) -> Option<Rat> {
        self.jets
            .get(&IndexedCoordinate::new(dep, index.clone()))
            .cloned()
    }

    /// Builds the jet of a section given by explicit series (centered at the
    /// base point), up to `order`: `u^α_J = J! · coeff_J`.
    pub fn from_series(base: Vec<Rat>, series: Vec<Series>, order: usize) -> Self {
        let p = series[0].num_vars();
        let mut jet = SectionJet::new(base);
        for (a, s) in series.iter().enumerate() {
            for k in 0..=order.min(s.truncation_order()) {
                for j in MultiIndex::all_of_order(p as u8, k) {
                    let c = s.coeff(&j);
                    let v = c * Rat::from_integer(j.factorial().into());
                    if !num_traits::Zero::is_zero(&v) {
                        jet.set(a as u8 + 1, j, v);
                    }
                }
            }
        }
        jet.series = Some(series);
        jet
    }

    /// Checks stored jet values against the attached series coefficients.
    pub fn consistent_with_series(&self) -> bool {
        let Some(series) = &self.series else {
            return true;
        };
        self.jets.iter().all(|(c, v)| {
            let s = &series[(c.dep - 1) as usize];
            let expected = s.coeff(&c.index) * Rat::from_integer(c.index.factorial().into());
            expected == *v
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "base": self.base.iter().map(rat_to_string).collect::<Vec<_>>(),
            "jets": self.jets.iter().map(|(c, v)| serde_json::json!({
                "dep": c.dep,
                "index": c.index.entries(),
                "value": rat_to_string(v),
            })).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Option<SectionJet> {
        let base = v
            .get("base")?
            .as_array()?
            .iter()
            .map(|b| rat_from_str(b.as_str()?))
            .collect::<Option<Vec<_>>>()?;
        let mut jet = SectionJet::new(base);
        for item in v.get("jets")?.as_array()? {
            let dep = item.get("dep")?.as_u64()? as u8;
            let index: Vec<u8> = item
                .get("index")?
                .as_array()?
                .iter()
                .map(|e| e.as_u64().map(|x| x as u8))
                .collect::<Option<Vec<_>>>()?;
            let value = rat_from_str(item.get("value")?.as_str()?)?;
            jet.set(dep, MultiIndex::new(index), value);
        }
        Some(jet)
    }
}

/// Evaluation point for symbols and linearizations: a section jet (explicit
/// values plus a deterministic generic fallback), with every other family
/// pinned to the identity jet.
#[derive(Clone, Debug)]
pub struct JetPoint {
    pub p: usize,
    pub q: usize,
    pub base: Vec<Rat>,
    pub overrides: BTreeMap<IndexedCoordinate, Rat>,
    pub seed: u64,
}

impl JetPoint {
    pub fn generic(p: usize, q: usize, seed: u64) -> Self {
        JetPoint {
            p,
            q,
            base: vec![Rat::from_integer(0.into()); p],
            overrides: BTreeMap::new(),
            seed,
        }
    }

    pub fn with_base(mut self, base: Vec<Rat>) -> Self {
        self.base = base;
        self
    }

    pub fn set(&mut self, dep: u8, index: MultiIndex, value: Rat) {
        self.overrides
            .insert(IndexedCoordinate::new(dep, index), value);
    }

    pub fn from_section(p: usize, q: usize, jet: &SectionJet, seed: u64) -> Self {
        JetPoint {
            p,
            q,
            base: jet.base.clone(),
            overrides: jet.jets.clone(),
            seed,
        }
    }

    /// Section jet value: explicit override or a deterministic small nonzero
    /// rational derived from the coordinate and the seed.
    pub fn u_value(&self, dep: u8, index: &MultiIndex) -> Rat {
        if let Some(v) = self
            .overrides
            .get(&IndexedCoordinate::new(dep, index.clone()))
        {
            return v.clone();
        }
        let mut h = SeededRng::new(self.seed ^ 0x5851f42d4c957f2d);
        let mut acc = dep as u64;
        for &e in index.entries() {
            acc = acc.wrapping_mul(31).wrapping_add(e as u64);
        }
        let mut rng = SeededRng::new(h.next_u64() ^ acc.wrapping_mul(0x2545f4914f6cdd1d));
        let n = (rng.below(9) + 1) as i64 * if rng.below(2) == 0 { 1 } else { -1 };
        let d = (rng.below(4) + 1) as i64;
        rat(n, d)
    }

    /// Identity-jet evaluation across all families (the reduced identity for
    /// reduced jets, the identity diffeomorphism jet for diffeomorphism
    /// jets, section values for target jets).
    pub fn eval_identity(&self, c: &Coord) -> Option<Rat> {
        let zero = Rat::from_integer(0.into());
        let one = Rat::from_integer(1.into());
        match c.space {
            Space::Base => self.base.get((c.dep - 1) as usize).cloned(),
            Space::Sub => Some(self.u_value(c.dep, &c.index)),
            Space::Target => Some(self.u_value(c.dep, &c.index)),
            Space::Red => {
                if (c.dep as usize) <= self.p {
                    match c.index.order() {
                        0 => self.base.get((c.dep - 1) as usize).cloned(),
                        1 => Some(if c.index.entries()[0] == c.dep {
                            one
                        } else {
                            zero
                        }),
                        _ => Some(zero),
                    }
                } else {
                    Some(self.u_value(c.dep - self.p as u8, &c.index))
                }
            }
            Space::Diffeo => match c.index.order() {
                0 => {
                    if (c.dep as usize) <= self.p {
                        self.base.get((c.dep - 1) as usize).cloned()
                    } else {
                        Some(self.u_value(c.dep - self.p as u8, &MultiIndex::empty()))
                    }
                }
                1 => Some(if c.index.entries()[0] == c.dep { one } else { zero }),
                _ => Some(zero),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::bind;
    use crate::scalar::rat_int;
    use std::collections::HashMap;

    fn ctx11() -> JetContext {
        JetContext::new(1, 1)
    }

    #[test]
    fn total_derivative_of_sub_jet() {
        let ctx = ctx11();
        let u_x = Expr::coord(Coord::sub(1, MultiIndex::single(1)));
        let d = total_derivative(&u_x, 1, &ctx);
        assert_eq!(
            d.as_coord(),
            Some(&Coord::sub(1, MultiIndex::repeated(1, 2)))
        );
    }

    #[test]
    fn lifted_derivative_of_diffeo_jet() {
        // D_x(X) = X_x + u_x X_u for p = q = 1.
        let ctx = ctx11();
        let x = Expr::coord(Coord::diffeo(1, MultiIndex::empty()));
        let d = total_derivative(&x, 1, &ctx);
        let mut vals: HashMap<Coord, Rat> = HashMap::new();
        vals.insert(Coord::diffeo(1, MultiIndex::single(1)), rat_int(5));
        vals.insert(Coord::diffeo(1, MultiIndex::single(2)), rat_int(7));
        vals.insert(Coord::sub(1, MultiIndex::single(1)), rat_int(2));
        assert_eq!(d.eval(&bind(&vals)).unwrap(), rat_int(5 + 2 * 7));
    }

    #[test]
    fn second_lifted_derivative_matches_expansion() {
        // D_x^2(X) = X_xx + 2 u_x X_xu + u_x^2 X_uu + u_xx X_u.
        let ctx = ctx11();
        let x = Expr::coord(Coord::diffeo(1, MultiIndex::empty()));
        let d2 = total_derivative(&total_derivative(&x, 1, &ctx), 1, &ctx);
        let mut vals: HashMap<Coord, Rat> = HashMap::new();
        let assign = [
            (Coord::diffeo(1, MultiIndex::new(vec![1, 1])), 3),
            (Coord::diffeo(1, MultiIndex::new(vec![1, 2])), 5),
            (Coord::diffeo(1, MultiIndex::new(vec![2, 2])), 7),
            (Coord::diffeo(1, MultiIndex::single(2)), 11),
            (Coord::diffeo(1, MultiIndex::single(1)), 13),
            (Coord::sub(1, MultiIndex::single(1)), 2),
            (Coord::sub(1, MultiIndex::repeated(1, 2)), 9),
        ];
        for (c, v) in assign {
            vals.insert(c, rat_int(v));
        }
        let expect = 3 + 2 * 2 * 5 + 4 * 7 + 9 * 11;
        assert_eq!(d2.eval(&bind(&vals)).unwrap(), rat_int(expect));
    }

    #[test]
    fn chain_rule_first_and_second_order() {
        // p = q = 1: D_x(Ut) = Ut_X Zr_x; D_x^2(Ut) = Ut_XX Zr_x^2 + Ut_X Zr_xx.
        let ctx = ctx11();
        let u_hat = Expr::coord(Coord::target(1, MultiIndex::empty()));
        let d1 = chain_rule_derivative(&u_hat, 1, &ctx);
        let d2 = chain_rule_derivative(&d1, 1, &ctx);
        let mut vals: HashMap<Coord, Rat> = HashMap::new();
        vals.insert(Coord::red(1, MultiIndex::single(1)), rat_int(3));
        vals.insert(Coord::red(1, MultiIndex::repeated(1, 2)), rat_int(5));
        vals.insert(Coord::target(1, MultiIndex::single(1)), rat_int(7));
        vals.insert(Coord::target(1, MultiIndex::repeated(1, 2)), rat_int(11));
        assert_eq!(d1.eval(&bind(&vals)).unwrap(), rat_int(21));
        assert_eq!(d2.eval(&bind(&vals)).unwrap(), rat_int(11 * 9 + 7 * 5));
    }

    #[test]
    fn total_derivatives_commute() {
        // Mixed partials agree at random points for a nontrivial expression.
        let ctx = JetContext::new(2, 1);
        let e = Expr::mul(vec![
            Expr::coord(Coord::sub(1, MultiIndex::single(1))),
            Expr::coord(Coord::sub(1, MultiIndex::single(2))),
            Expr::coord(Coord::sub(1, MultiIndex::empty())),
        ]);
        let dxy = total_derivative(&total_derivative(&e, 1, &ctx), 2, &ctx);
        let dyx = total_derivative(&total_derivative(&e, 2, &ctx), 1, &ctx);
        for seed in 0..5u64 {
            let pt = JetPoint::generic(2, 1, seed);
            let f = |c: &Coord| pt.eval_identity(c);
            assert_eq!(dxy.eval(&f).unwrap(), dyx.eval(&f).unwrap());
        }
    }

    #[test]
    fn section_jet_series_consistency() {
        let mut s = Series::zero(2, 4);
        s.set(MultiIndex::repeated(2, 2), rat(1, 2));
        s.set(MultiIndex::new(vec![1, 2, 2]), rat(1, 3));
        let jet = SectionJet::from_series(vec![rat_int(0), rat_int(0)], vec![s], 4);
        assert!(jet.consistent_with_series());
        assert_eq!(
            jet.get(1, &MultiIndex::repeated(2, 2)).unwrap(),
            rat_int(1)
        );
        assert_eq!(
            jet.get(1, &MultiIndex::new(vec![1, 2, 2])).unwrap(),
            rat(2, 3)
        );
    }

    #[test]
    fn json_round_trip_section() {
        let mut jet = SectionJet::new(vec![rat_int(0)]);
        jet.set(1, MultiIndex::repeated(1, 2), rat(3, 4));
        let back = SectionJet::from_json(&jet.to_json()).unwrap();
        assert_eq!(back.get(1, &MultiIndex::repeated(1, 2)), Some(rat(3, 4)));
    }
}
