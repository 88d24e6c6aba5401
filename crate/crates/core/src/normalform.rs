//! Normal form determining equations, their linearization, vertical and
//! prolonged-annihilator symbols, well-posed cross-sections, and the
//! order-by-order moving-frame solver that emits normal-form power series.

use std::collections::{BTreeMap, HashMap};

use num_traits::Zero;

use crate::expr::{Coord, EvalError, Expr, Space};
use crate::jetcalc::{prolong_action, JetPoint};
use crate::linalg::{equal_row_spaces, solve_square, Mat};
use crate::multiindex::{verify_rees, IndexedCoordinate, MultiIndex, ReesVerdict};
use crate::reduction::ReducedSystem;
use crate::scalar::{rat_from_str, rat_to_string, Rat, Scalar};
use crate::series::TruncatedSeries;
use crate::system::{DifferentialSystem, SystemError, SystemKind};

/// Normal form determining equations: unknowns `{X̄^i_J, u^α_J}`, target jets
/// held as bound parameters.
#[derive(Clone, Debug)]
pub struct NormalFormSystem {
    pub system: DifferentialSystem,
    /// Chain-rule expressions substituted for the reduced vertical jets.
    pub chain_record: BTreeMap<Coord, Expr>,
}

/// Builds the normal form determining equations from the reduced system by
/// substituting the chain-rule formulas for every reduced vertical jet and
/// re-solving into Cartan normal form.
pub fn build_nf_system(red: &ReducedSystem, up_to: usize) -> Result<NormalFormSystem, SystemError> {
    let reduced = red.system.prolonged_to(up_to.max(red.system.order))?;
    let ctx = &reduced.ctx;
    // chain-rule formulas: Ur^α_J = D_x^J ( Û^α ∘ X̄ )
    let mut chain: BTreeMap<Coord, Expr> = BTreeMap::new();
    for alpha in 1..=ctx.q as u8 {
        chain.insert(
            Coord::red(ctx.p as u8 + alpha, MultiIndex::empty()),
            Expr::coord(Coord::target(alpha, MultiIndex::empty())),
        );
    }
    for order in 1..=up_to {
        for j in MultiIndex::all_of_order(ctx.p as u8, order) {
            let first = j.entries()[0];
            let rest = j.remove(first).unwrap();
            for alpha in 1..=ctx.q as u8 {
                let prev = chain[&Coord::red(ctx.p as u8 + alpha, rest.clone())].clone();
                let d = crate::jetcalc::total_derivative(&prev, first, ctx);
                chain.insert(Coord::red(ctx.p as u8 + alpha, j.clone()), d);
            }
        }
    }
    let chain_map: HashMap<Coord, Expr> =
        chain.iter().map(|(c, e)| (c.clone(), e.clone())).collect();
    // substitute into every reduced equation and re-solve order by order
    let mut nf =
        DifferentialSystem::new(SystemKind::NormalForm, ctx.clone(), reduced.point.clone());
    for order in 0..=up_to {
        let mut batch = Vec::new();
        for eq in reduced.equations_of_order(order) {
            let expr = Expr::sub(Expr::coord(eq.lhs.clone()), eq.rhs.clone());
            let substituted = expr.substitute(&chain_map);
            let cleaned = nf.substitute_to_fixpoint(&substituted);
            if !cleaned.is_zero_const() {
                batch.push(cleaned);
            }
        }
        if batch.is_empty() {
            continue;
        }
        let (solved, residue) = nf.solve_linear_for_order(batch, order)?;
        for (lhs, rhs) in solved {
            nf.add_equation(lhs, rhs);
        }
        for r in residue {
            // a relation that dropped order during re-solving
            let cleaned = nf.substitute_to_fixpoint(&r);
            if cleaned.is_zero_const() {
                continue;
            }
            let lower = nf.order_of_unknowns(&cleaned);
            let (solved_low, rest) = nf.solve_linear_for_order(vec![cleaned], lower)?;
            for (lhs, rhs) in solved_low {
                nf.add_equation(lhs, rhs);
            }
            for r2 in rest {
                if !r2.is_zero_const() {
                    return Err(SystemError::NotSolvable(format!(
                        "normal form re-solve left residue {r2}"
                    )));
                }
            }
        }
    }
    nf.order = up_to;
    Ok(NormalFormSystem {
        system: nf,
        chain_record: chain,
    })
}

/// One linear equation over the linearization symbols, keyed by the system's
/// unknown tags: `(tag, J) -> coefficient`.
pub type LinRow = BTreeMap<(u8, MultiIndex), Rat>;

/// Linearizes a system at the identity jet over the given point; one row per
/// equation.
pub fn linearize(sys: &DifferentialSystem, point: &JetPoint) -> Result<Vec<LinRow>, SystemError> {
    let mut rows = Vec::new();
    for eq in &sys.equations {
        let mut row: LinRow = BTreeMap::new();
        let tag = sys.coord_tag(&eq.lhs).unwrap();
        row.insert((tag, eq.lhs.index.clone()), Rat::from_integer(1.into()));
        for c in eq.rhs.coords() {
            let Some(t) = sys.coord_tag(&c) else { continue };
            let coeff = eq
                .rhs
                .partial(&c)
                .eval(&|cc: &Coord| point.eval_identity(cc))
                .map_err(|e| SystemError::SingularPoint(e.to_string()))?;
            if !coeff.is_zero() {
                let entry = row.entry((t, c.index.clone())).or_insert_with(Rat::zero);
                *entry -= coeff;
            }
        }
        row.retain(|_, v| !v.is_zero());
        rows.push(row);
    }
    Ok(rows)
}

fn rows_to_matrix(rows: &[LinRow], columns: &[(u8, MultiIndex)]) -> Mat<Rat> {
    let pos: HashMap<&(u8, MultiIndex), usize> =
        columns.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let data = rows
        .iter()
        .map(|r| {
            let mut row = vec![Rat::zero(); columns.len()];
            for (k, v) in r {
                if let Some(&i) = pos.get(k) {
                    row[i] = v.clone();
                }
            }
            row
        })
        .collect();
    Mat::new(data, columns.len())
}

fn sym_columns(
    sys: &DifferentialSystem,
    orders: std::ops::RangeInclusive<usize>,
    tags: &[u8],
) -> Vec<(u8, MultiIndex)> {
    let mut cols = Vec::new();
    for k in orders {
        for ic in sys.term_order.columns(tags, k) {
            cols.push((ic.dep, ic.index));
        }
    }
    cols
}

fn horizontal_tags(sys: &DifferentialSystem) -> Vec<u8> {
    ((sys.ctx.q as u8 + 1)..=(sys.ctx.q + sys.ctx.p) as u8).collect()
}

fn vertical_tags(sys: &DifferentialSystem) -> Vec<u8> {
    (1..=sys.ctx.q as u8).collect()
}

/// A linear space of symbol equations over the order-`n` vertical symbols
/// `ψ^α_J`, as a canonical RREF matrix with its column labels.
#[derive(Clone, Debug)]
pub struct VerticalSpace {
    pub order: usize,
    pub columns: Vec<(u8, MultiIndex)>,
    pub matrix: Mat<Rat>,
}

impl VerticalSpace {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn equal(&self, other: &VerticalSpace) -> bool {
        assert_eq!(self.columns, other.columns);
        equal_row_spaces(&self.matrix, &other.matrix)
    }

    /// Pivot coordinates of the canonical form, tagged per the normal-form
    /// convention.
    pub fn pivots(&self) -> Vec<(u8, MultiIndex)> {
        let mut m = self.matrix.clone();
        let piv = m.rref();
        piv.into_iter().map(|i| self.columns[i].clone()).collect()
    }
}

/// Vertical symbol `Ψ^n`: order-`n` symbol equations involving only the
/// `ψ^α_J` with `|J| = n`.
pub fn vertical_symbol(
    nf: &NormalFormSystem,
    n: usize,
    point: &JetPoint,
) -> Result<VerticalSpace, SystemError> {
    let sys = &nf.system;
    let rows = linearize(sys, point)?;
    // order-n equations, truncated to their top-order terms
    let top_rows: Vec<LinRow> = sys
        .equations
        .iter()
        .zip(rows.iter())
        .filter(|(eq, _)| eq.lhs.index.order() == n)
        .map(|(_, row)| {
            row.iter()
                .filter(|((_, j), _)| j.order() == n)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect()
        })
        .collect();
    let xi_cols = sym_columns(sys, n..=n, &horizontal_tags(sys));
    let psi_cols = sym_columns(sys, n..=n, &vertical_tags(sys));
    let mut columns = xi_cols.clone();
    columns.extend(psi_cols.iter().cloned());
    let mat = rows_to_matrix(&top_rows, &columns);
    let eliminated =
        crate::linalg::eliminate_columns(&mat, &(0..xi_cols.len()).collect::<Vec<_>>());
    let psi_block: Vec<Vec<Rat>> = eliminated
        .rows
        .iter()
        .map(|r| r[xi_cols.len()..].to_vec())
        .collect();
    let mut matrix = Mat::new(psi_block, psi_cols.len());
    matrix.rref();
    Ok(VerticalSpace {
        order: n,
        columns: psi_cols,
        matrix,
    })
}

/// Prolonged annihilator data: the linear consequences of the order-`n`
/// linearization lying in `span{ξ̄, ψ^{(n)}}`, plus the top-order part `Υ^n`.
pub struct Annihilator {
    /// Column labels of `z_basis`: `ξ̄` (order 0, tags `q+1..`) then every
    /// `ψ` of order `0..=n`.
    pub z_columns: Vec<(u8, MultiIndex)>,
    pub z_basis: Mat<Rat>,
    pub upsilon: VerticalSpace,
}

pub fn prolonged_annihilator(
    nf: &NormalFormSystem,
    n: usize,
    point: &JetPoint,
) -> Result<Annihilator, SystemError> {
    let sys = &nf.system;
    let rows = linearize(sys, point)?;
    let keep_rows: Vec<LinRow> = sys
        .equations
        .iter()
        .zip(rows)
        .filter(|(eq, _)| eq.lhs.index.order() <= n)
        .map(|(_, r)| r)
        .collect();
    let xi_all = sym_columns(sys, 0..=n, &horizontal_tags(sys));
    let psi_all = sym_columns(sys, 0..=n, &vertical_tags(sys));
    let mut columns = xi_all.clone();
    columns.extend(psi_all.iter().cloned());
    let mat = rows_to_matrix(&keep_rows, &columns);
    let elim: Vec<usize> = (0..xi_all.len())
        .filter(|&i| xi_all[i].1.order() >= 1)
        .collect();
    let z = crate::linalg::eliminate_columns(&mat, &elim);
    let kept_cols: Vec<usize> = (0..columns.len()).filter(|i| !elim.contains(i)).collect();
    let z_columns: Vec<(u8, MultiIndex)> =
        kept_cols.iter().map(|&i| columns[i].clone()).collect();
    let z_basis = Mat::new(
        z.rows
            .iter()
            .map(|r| kept_cols.iter().map(|&i| r[i].clone()).collect())
            .collect(),
        z_columns.len(),
    );
    // Υ^n: image of Z^{(n)} under projection to the order-n ψ columns
    let psi_n = sym_columns(sys, n..=n, &vertical_tags(sys));
    let psi_pos: Vec<usize> = psi_n
        .iter()
        .map(|c| z_columns.iter().position(|z| z == c).unwrap())
        .collect();
    let mut upsilon_mat = Mat::new(
        z_basis
            .rows
            .iter()
            .map(|r| psi_pos.iter().map(|&i| r[i].clone()).collect())
            .collect(),
        psi_n.len(),
    );
    upsilon_mat.rref();
    Ok(Annihilator {
        z_columns,
        z_basis,
        upsilon: VerticalSpace {
            order: n,
            columns: psi_n,
            matrix: upsilon_mat,
        },
    })
}

/// Infinitesimal freeness: the only solution of the order-`n` linearization
/// with `ξ̄ = 0` and `ψ^{(n)} = 0` is zero.
pub fn linearized_isotropy_trivial(
    nf: &NormalFormSystem,
    n: usize,
    point: &JetPoint,
) -> Result<bool, SystemError> {
    let sys = &nf.system;
    let rows = linearize(sys, point)?;
    let keep: Vec<LinRow> = sys
        .equations
        .iter()
        .zip(rows)
        .filter(|(eq, _)| eq.lhs.index.order() <= n)
        .map(|(_, r)| r)
        .collect();
    let xi_all = sym_columns(sys, 0..=n, &horizontal_tags(sys));
    let psi_all = sym_columns(sys, 0..=n, &vertical_tags(sys));
    let mut columns = xi_all.clone();
    columns.extend(psi_all.iter().cloned());
    let mut mat = rows_to_matrix(&keep, &columns);
    for (i, c) in columns.iter().enumerate() {
        let is_xi0 = i < xi_all.len() && c.1.is_empty();
        let is_psi = i >= xi_all.len();
        if is_xi0 || is_psi {
            let mut row = vec![Rat::zero(); columns.len()];
            row[i] = Rat::from_integer(1.into());
            mat.rows.push(row);
        }
    }
    Ok(mat.rank() == columns.len())
}

/// Smallest order `<= bound` with trivial linearized isotropy.
pub fn freeness_order(
    nf: &NormalFormSystem,
    bound: usize,
    point: &JetPoint,
) -> Result<Option<usize>, SystemError> {
    for n in 1..=bound {
        if linearized_isotropy_trivial(nf, n, point)? {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// Compatibility: `Ψ^k = Υ^k` for every order in `range`, with freeness at
/// `n_f` verified first.
pub fn compatibility_check(
    nf: &NormalFormSystem,
    n_f: usize,
    range: std::ops::RangeInclusive<usize>,
    point: &JetPoint,
) -> Result<bool, SystemError> {
    if !linearized_isotropy_trivial(nf, n_f, point)? {
        return Ok(false);
    }
    for k in range {
        let psi = vertical_symbol(nf, k, point)?;
        let ann = prolonged_annihilator(nf, k, point)?;
        if !psi.equal(&ann.upsilon) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A family of cross-section indices: `fixed` concatenated with any
/// multi-index over `tail_vars`.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexFamily {
    pub dep: u8,
    pub fixed: MultiIndex,
    pub tail_vars: Vec<u8>,
}

impl IndexFamily {
    pub fn contains(&self, c: &IndexedCoordinate) -> bool {
        if c.dep != self.dep {
            return false;
        }
        match c.index.subtract(&self.fixed) {
            Some(extra) => extra.entries().iter().all(|e| self.tail_vars.contains(e)),
            None => false,
        }
    }
}

/// Coordinate cross-section: base normalizations plus jet normalizations,
/// finite overrides on top of patterned families with a default constant.
#[derive(Clone, Debug)]
pub struct CrossSection {
    /// Values `c^i` pinning the base coordinates `x^i`.
    pub base: Vec<Rat>,
    /// Explicit normalizations `(α;J) -> c^α_J`.
    pub explicit: BTreeMap<IndexedCoordinate, Rat>,
    /// Families of normalizations sharing a default constant.
    pub families: Vec<(IndexFamily, Rat)>,
}

impl CrossSection {
    pub fn contains(&self, c: &IndexedCoordinate) -> bool {
        self.explicit.contains_key(c) || self.families.iter().any(|(f, _)| f.contains(c))
    }

    pub fn constant(&self, c: &IndexedCoordinate) -> Option<Rat> {
        if let Some(v) = self.explicit.get(c) {
            return Some(v.clone());
        }
        self.families
            .iter()
            .find(|(f, _)| f.contains(c))
            .map(|(_, v)| v.clone())
    }

    /// All members of a given order.
    pub fn members_of_order(&self, p: u8, q: u8, order: usize) -> Vec<IndexedCoordinate> {
        let mut out = Vec::new();
        for j in MultiIndex::all_of_order(p, order) {
            for dep in 1..=q {
                let c = IndexedCoordinate::new(dep, j.clone());
                if self.contains(&c) {
                    out.push(c);
                }
            }
        }
        out
    }

    /// Cross-section power series `C^α(y)` assembled from the normalization
    /// constants, truncated at `order`.
    pub fn cross_section_series(&self, p: usize, q: usize, order: usize) -> Vec<TruncatedSeries<Rat>> {
        (1..=q as u8)
            .map(|alpha| {
                let mut s = TruncatedSeries::zero(p, order);
                for k in 0..=order {
                    for j in MultiIndex::all_of_order(p as u8, k) {
                        let ic = IndexedCoordinate::new(alpha, j.clone());
                        if let Some(c) = self.constant(&ic) {
                            let fact = Rat::from_integer(j.factorial().into());
                            s.set(j, c / fact);
                        }
                    }
                }
                s
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "base": self.base.iter().map(rat_to_string).collect::<Vec<_>>(),
            "normalizations": self.explicit.iter().map(|(c, v)| serde_json::json!({
                "dep": c.dep, "index": c.index.entries(), "value": rat_to_string(v),
            })).collect::<Vec<_>>(),
            "families": self.families.iter().map(|(f, v)| serde_json::json!({
                "dep": f.dep, "fixed": f.fixed.entries(), "tail": f.tail_vars,
                "value": rat_to_string(v),
            })).collect::<Vec<_>>(),
            // derived: the family roots, suggesting the cone generators of
            // the high-order defining indices
            "generators_hint": self.families.iter().map(|(f, _)| serde_json::json!({
                "dep": f.dep, "index": f.fixed.entries(),
            })).collect::<Vec<_>>(),
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Option<CrossSection> {
        let base = v
            .get("base")?
            .as_array()?
            .iter()
            .map(|b| rat_from_str(b.as_str()?))
            .collect::<Option<Vec<_>>>()?;
        let mut explicit = BTreeMap::new();
        for item in v.get("normalizations")?.as_array()? {
            let dep = item.get("dep")?.as_u64()? as u8;
            let idx: Vec<u8> = item
                .get("index")?
                .as_array()?
                .iter()
                .map(|e| e.as_u64().map(|x| x as u8))
                .collect::<Option<Vec<_>>>()?;
            explicit.insert(
                IndexedCoordinate::new(dep, MultiIndex::new(idx)),
                rat_from_str(item.get("value")?.as_str()?)?,
            );
        }
        let mut families = Vec::new();
        for item in v.get("families")?.as_array()? {
            let dep = item.get("dep")?.as_u64()? as u8;
            let fixed: Vec<u8> = item
                .get("fixed")?
                .as_array()?
                .iter()
                .map(|e| e.as_u64().map(|x| x as u8))
                .collect::<Option<Vec<_>>>()?;
            let tail: Vec<u8> = item
                .get("tail")?
                .as_array()?
                .iter()
                .map(|e| e.as_u64().map(|x| x as u8))
                .collect::<Option<Vec<_>>>()?;
            families.push((
                IndexFamily {
                    dep,
                    fixed: MultiIndex::new(fixed),
                    tail_vars: tail,
                },
                rat_from_str(item.get("value")?.as_str()?)?,
            ));
        }
        Some(CrossSection {
            base,
            explicit,
            families,
        })
    }
}

/// Well-posedness verdict.
#[derive(Clone, Debug)]
pub struct WellPosedVerdict {
    /// `(order, slot count, d^{(n)})` mismatches at orders `>= n_f`.
    pub count_mismatches: Vec<(usize, u64, u64)>,
    pub jacobian_ok: bool,
    pub rees: ReesVerdict,
}

impl WellPosedVerdict {
    pub fn ok(&self) -> bool {
        self.count_mismatches.is_empty() && self.jacobian_ok && self.rees.ok()
    }
}

/// Checks well-posedness of a cross-section for the reduced action: minimal
/// order counting (slots of order `<= n` equal `d^{(n)}` once the action is
/// free), full-rank normalization Jacobians, and the Rees decomposition of
/// the defining indices above the order of freeness.
pub fn wellposed_check(
    cs: &CrossSection,
    red: &ReducedSystem,
    n_f: usize,
    depth: usize,
) -> Result<WellPosedVerdict, SystemError> {
    let p = red.system.ctx.p;
    let q = red.system.ctx.q;
    let hi = n_f + depth;
    let reduced = red.system.prolonged_to(hi + 1)?;
    let mut count_mismatches = Vec::new();
    let mut slots = p as u64; // x^i = c^i
    for k in 0..=hi {
        slots += cs.members_of_order(p as u8, q as u8, k).len() as u64;
        if k >= n_f {
            let d = reduced.fiber_dim(k);
            if slots != d {
                count_mismatches.push((k, slots, d));
            }
        }
    }
    let pa = prolong_action(&reduced, n_f);
    let jacobian_ok = {
        let mut ok = true;
        for n in 1..=n_f {
            let slots_n = cs.members_of_order(p as u8, q as u8, n);
            if slots_n.is_empty() {
                continue;
            }
            let unknowns: Vec<Coord> = (0..=n)
                .flat_map(|k| reduced.parametric_coords(k))
                .filter(|c| c.space == Space::Red)
                .collect();
            let mut rows = Vec::new();
            for slot in &slots_n {
                let e = &pa[slot];
                let row: Vec<Rat> = unknowns
                    .iter()
                    .map(|u| {
                        e.partial(u)
                            .eval(&|c: &Coord| reduced.point.eval_identity(c))
                            .unwrap_or_else(|_| Rat::zero())
                    })
                    .collect();
                rows.push(row);
            }
            let m = Mat::new(rows, unknowns.len());
            if m.rank() < slots_n.len() {
                ok = false;
            }
        }
        ok
    };
    let generators = cs.members_of_order(p as u8, q as u8, n_f + 1);
    let deps: Vec<u8> = (1..=q as u8).collect();
    let rees = verify_rees(
        &generators,
        |c| cs.contains(c),
        p as u8,
        &deps,
        (n_f + 1, hi),
    );
    Ok(WellPosedVerdict {
        count_mismatches,
        jacobian_ok,
        rees,
    })
}

/// Solved moving frame: values of the parametric reduced pseudo-group jets.
#[derive(Clone, Debug)]
pub struct FrameSolution<T: Scalar> {
    pub values: BTreeMap<Coord, T>,
    /// True when the solve ran in the float lane.
    pub float_fallback: bool,
}

/// Phantom/invariant classification of one normal-form coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotKind {
    Phantom,
    Invariant,
}

/// Emitted normal-form power series data: one entry per jet slot.
#[derive(Clone, Debug)]
pub struct NormalFormSeries<T: Scalar> {
    pub p: usize,
    pub order: usize,
    pub slots: BTreeMap<IndexedCoordinate, (SlotKind, T)>,
}

impl<T: Scalar> NormalFormSeries<T> {
    /// The assembled truncated series per dependent variable (`u_J / J!`).
    pub fn to_series(&self, q: usize) -> Vec<TruncatedSeries<T>> {
        let mut out = vec![TruncatedSeries::zero(self.p, self.order); q];
        for (c, (_, v)) in &self.slots {
            let fact = T::from_rat(&Rat::from_integer(c.index.factorial().into()));
            out[(c.dep - 1) as usize].set(c.index.clone(), v.clone() / fact);
        }
        out
    }

    /// CSV rows: dep, index, kind, value.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("dep,index,kind,value\n");
        for (c, (kind, v)) in &self.slots {
            let idx: Vec<String> = c.index.entries().iter().map(|e| e.to_string()).collect();
            s.push_str(&format!(
                "{},{},{},{}\n",
                c.dep,
                idx.join(" "),
                match kind {
                    SlotKind::Phantom => "phantom",
                    SlotKind::Invariant => "invariant",
                },
                v
            ));
        }
        s
    }

    /// Every phantom slot carries exactly its cross-section constant.
    pub fn lies_in_cross_section(&self, cs: &CrossSection) -> bool {
        self.slots.iter().all(|(c, (kind, v))| match kind {
            SlotKind::Phantom => {
                let want = T::from_rat(&cs.constant(c).unwrap_or_else(Rat::zero));
                v.clone() == want
            }
            SlotKind::Invariant => true,
        })
    }

    pub fn invariant(&self, dep: u8, index: &MultiIndex) -> Option<T> {
        self.slots
            .get(&IndexedCoordinate::new(dep, index.clone()))
            .map(|(_, v)| v.clone())
    }
}

/// Inputs for the frame solver beyond the reduced system itself.
pub struct FrameProblem<'a> {
    pub red: &'a ReducedSystem,
    pub cs: &'a CrossSection,
    /// Order of freeness; orders `<= n_f` use the closed forms.
    pub n_f: usize,
    /// Closed-form frame values for the parametric reduced jets of order
    /// `<= n_f`, as expressions over target jets (submanifold coordinates
    /// bound to the target's values) and already-solved frame entries.
    pub closed_forms: &'a [(Coord, Expr)],
}

/// Error from the frame solver.
#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("system error: {0}")]
    System(#[from] SystemError),
    #[error("target violates a regularity condition: {0}")]
    Singular(String),
    #[error("{0}")]
    Eval(#[from] EvalError),
}

/// Solves the moving frame on a target jet and emits the normal-form series.
///
/// Orders `<= n_f` come from the catalog's closed forms; every higher order
/// is a linear solve for the new parametric group jets.  If exact evaluation
/// hits an irrational square root, the whole solve reruns in the float lane
/// with the fallback flagged.
pub fn solve_frame(
    problem: &FrameProblem,
    target: &BTreeMap<IndexedCoordinate, Rat>,
    up_to: usize,
) -> Result<(FrameSolution<Rat>, NormalFormSeries<Rat>), FrameError> {
    solve_frame_in::<Rat>(problem, &|c| target.get(c).cloned(), up_to)
}

/// Float-lane frame solve, for the fallback mode and the oracles.
pub fn solve_frame_float(
    problem: &FrameProblem,
    target: &BTreeMap<IndexedCoordinate, f64>,
    up_to: usize,
) -> Result<(FrameSolution<f64>, NormalFormSeries<f64>), FrameError> {
    solve_frame_in::<f64>(problem, &|c| target.get(c).copied(), up_to)
}

fn solve_frame_in<T: Scalar>(
    problem: &FrameProblem,
    target: &dyn Fn(&IndexedCoordinate) -> Option<T>,
    up_to: usize,
) -> Result<(FrameSolution<T>, NormalFormSeries<T>), FrameError> {
    let red = problem.red.system.prolonged_to(up_to)?;
    let ctx = &red.ctx;
    let pa = prolong_action(&red, up_to);
    let mut frame: BTreeMap<Coord, T> = BTreeMap::new();
    let eval_with = |e: &Expr, frame: &BTreeMap<Coord, T>| -> Result<T, FrameError> {
        let f = |c: &Coord| -> Option<T> {
            match c.space {
                Space::Sub => target(&IndexedCoordinate::new(c.dep, c.index.clone())),
                Space::Red => frame.get(c).cloned(),
                _ => None,
            }
        };
        Ok(e.eval(&f)?)
    };
    // orders <= n_f: closed forms, in the listed order
    for (coord, form) in problem.closed_forms {
        let v = eval_with(form, &frame)?;
        frame.insert(coord.clone(), v);
    }
    // the low-order frame must land every normalization slot on its
    // constant; a failure here means the catalog closed forms are wrong for
    // this target rather than a singular solve
    if T::EXACT {
        for k in 0..=problem.n_f {
            for slot in problem.cs.members_of_order(ctx.p as u8, ctx.q as u8, k) {
                let got = eval_with(&pa[&slot], &frame)?;
                let want = problem
                    .cs
                    .constant(&slot)
                    .map(|r| T::from_rat(&r))
                    .unwrap_or_else(T::zero);
                if got != want {
                    return Err(FrameError::Singular(format!(
                        "closed-form frame misses slot {slot}: {got} vs {want}"
                    )));
                }
            }
        }
    }
    // orders n_f+1 ..= up_to: linear solves
    for k in (problem.n_f + 1)..=up_to {
        let slots = problem.cs.members_of_order(ctx.p as u8, ctx.q as u8, k);
        let unknowns: Vec<Coord> = red
            .parametric_coords(k)
            .into_iter()
            .filter(|c| c.space == Space::Red)
            .collect();
        if slots.len() != unknowns.len() {
            return Err(FrameError::Singular(format!(
                "order {k}: {} normalization slots vs {} group jets",
                slots.len(),
                unknowns.len()
            )));
        }
        if unknowns.is_empty() {
            continue;
        }
        let mut with_zero = frame.clone();
        for u in &unknowns {
            with_zero.insert(u.clone(), T::zero());
        }
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for slot in &slots {
            let e = &pa[slot];
            let base = eval_with(e, &with_zero)?;
            let row: Vec<T> = unknowns
                .iter()
                .map(|u| eval_with(&e.partial(u), &with_zero))
                .collect::<Result<_, _>>()?;
            rows.push(row);
            let c = problem
                .cs
                .constant(slot)
                .map(|r| T::from_rat(&r))
                .unwrap_or_else(T::zero);
            rhs.push(c - base);
        }
        let mat = Mat::new(rows, unknowns.len());
        let sol = solve_square(&mat, &rhs).ok_or_else(|| {
            FrameError::Singular(format!("singular normalization solve at order {k}"))
        })?;
        for (u, v) in unknowns.iter().zip(sol) {
            frame.insert(u.clone(), v);
        }
        if T::EXACT {
            // phantom residuals vanish exactly in the rational lane
            for slot in &slots {
                let got = eval_with(&pa[slot], &frame)?;
                let want = problem
                    .cs
                    .constant(slot)
                    .map(|r| T::from_rat(&r))
                    .unwrap_or_else(T::zero);
                if got != want {
                    return Err(FrameError::Singular(format!(
                        "phantom residual at {slot} after solve"
                    )));
                }
            }
        }
    }
    // emit the series
    let mut slots_out = BTreeMap::new();
    for k in 0..=up_to {
        for j in MultiIndex::all_of_order(ctx.p as u8, k) {
            for alpha in 1..=ctx.q as u8 {
                let ic = IndexedCoordinate::new(alpha, j.clone());
                if problem.cs.contains(&ic) {
                    let c = problem
                        .cs
                        .constant(&ic)
                        .map(|r| T::from_rat(&r))
                        .unwrap_or_else(T::zero);
                    slots_out.insert(ic, (SlotKind::Phantom, c));
                } else {
                    let v = eval_with(&pa[&ic], &frame)?;
                    slots_out.insert(ic, (SlotKind::Invariant, v));
                }
            }
        }
    }
    Ok((
        FrameSolution {
            values: frame,
            float_fallback: !T::EXACT,
        },
        NormalFormSeries {
            p: ctx.p,
            order: up_to,
            slots: slots_out,
        },
    ))
}

/// Damped-Newton brute-force oracle: solves the full stacked normalization
/// equations in float mode, initialized at the reduced identity jet.
pub fn newton_frame_oracle(
    problem: &FrameProblem,
    target: &BTreeMap<IndexedCoordinate, f64>,
    up_to: usize,
) -> Result<NormalFormSeries<f64>, FrameError> {
    let red = problem.red.system.prolonged_to(up_to)?;
    let ctx = &red.ctx;
    let pa = prolong_action(&red, up_to);
    let mut unknowns: Vec<Coord> = Vec::new();
    for k in 0..=up_to {
        unknowns.extend(
            red.parametric_coords(k)
                .into_iter()
                .filter(|c| c.space == Space::Red),
        );
    }
    // equations: base slots X̄^i = c^i plus every cross-section slot <= up_to
    let mut eqs: Vec<(Expr, f64)> = Vec::new();
    for i in 1..=ctx.p as u8 {
        eqs.push((
            Expr::coord(Coord::red(i, MultiIndex::empty())),
            problem.cs.base[(i - 1) as usize].to_f64(),
        ));
    }
    for k in 0..=up_to {
        for slot in problem.cs.members_of_order(ctx.p as u8, ctx.q as u8, k) {
            let c = problem
                .cs
                .constant(&slot)
                .map(|r| r.to_f64())
                .unwrap_or(0.0);
            eqs.push((pa[&slot].clone(), c));
        }
    }
    // initial guess: reduced identity jet on the target
    let mut x: Vec<f64> = unknowns
        .iter()
        .map(|c| {
            if (c.dep as usize) <= ctx.p {
                match c.index.order() {
                    1 if c.index.entries()[0] == c.dep => 1.0,
                    _ => 0.0,
                }
            } else {
                target
                    .get(&IndexedCoordinate::new(c.dep - ctx.p as u8, c.index.clone()))
                    .copied()
                    .unwrap_or(0.0)
            }
        })
        .collect();
    let eval_res = |x: &[f64]| -> Result<Vec<f64>, FrameError> {
        let frame: BTreeMap<Coord, f64> =
            unknowns.iter().cloned().zip(x.iter().copied()).collect();
        let f = |c: &Coord| -> Option<f64> {
            match c.space {
                Space::Sub => target
                    .get(&IndexedCoordinate::new(c.dep, c.index.clone()))
                    .copied(),
                Space::Red => frame.get(c).copied(),
                _ => None,
            }
        };
        eqs.iter().map(|(e, c)| Ok(e.eval(&f)? - *c)).collect()
    };
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut stalled = false;
    for _ in 0..400 {
        let r = eval_res(&x)?;
        let r0 = norm(&r);
        if r0 < 1e-12 || stalled {
            break;
        }
        let frame: BTreeMap<Coord, f64> =
            unknowns.iter().cloned().zip(x.iter().copied()).collect();
        let f = |c: &Coord| -> Option<f64> {
            match c.space {
                Space::Sub => target
                    .get(&IndexedCoordinate::new(c.dep, c.index.clone()))
                    .copied(),
                Space::Red => frame.get(c).copied(),
                _ => None,
            }
        };
        let mut jac = Vec::new();
        for (e, _) in &eqs {
            let row: Vec<f64> = unknowns
                .iter()
                .map(|u| e.partial(u).eval(&f).unwrap_or(0.0))
                .collect();
            jac.push(row);
        }
        let mat = Mat::new(jac, unknowns.len());
        let Some(step) = solve_square(&mat, &r) else {
            return Err(FrameError::Singular("singular Newton Jacobian".into()));
        };
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = x
                .iter()
                .zip(step.iter())
                .map(|(xi, si)| xi - t * si)
                .collect();
            if norm(&eval_res(&cand)?) < r0 {
                x = cand;
                break;
            }
            if t < 1e-9 {
                stalled = true;
                break;
            }
            t /= 2.0;
        }
    }
    let frame: BTreeMap<Coord, f64> = unknowns.into_iter().zip(x).collect();
    let f = |c: &Coord| -> Option<f64> {
        match c.space {
            Space::Sub => target
                .get(&IndexedCoordinate::new(c.dep, c.index.clone()))
                .copied(),
            Space::Red => frame.get(c).copied(),
            _ => None,
        }
    };
    let mut slots = BTreeMap::new();
    for k in 0..=up_to {
        for j in MultiIndex::all_of_order(ctx.p as u8, k) {
            for alpha in 1..=ctx.q as u8 {
                let ic = IndexedCoordinate::new(alpha, j.clone());
                let kind = if problem.cs.contains(&ic) {
                    SlotKind::Phantom
                } else {
                    SlotKind::Invariant
                };
                let v = pa[&ic].eval(&f)?;
                slots.insert(ic, (kind, v));
            }
        }
    }
    Ok(NormalFormSeries {
        p: ctx.p,
        order: up_to,
        slots,
    })
}

/// The prolongation-formula substitution identifying the linearized reduced
/// determining equations with the linearized normal form equations:
/// `φ̄^α_J ↦ D_x^J(Σ u^α_i ξ̄^i) − Σ u^α_{J,i} ξ̄^i − ψ^α_J`.
///
/// Returns rows over the normal-form symbol columns, evaluated at `point`.
pub fn substitute_linearized_reduced(
    red: &DifferentialSystem,
    point: &JetPoint,
) -> Result<Vec<LinRow>, SystemError> {
    let ctx = &red.ctx;
    let p = ctx.p as u8;
    let q = ctx.q as u8;
    let mut cache: HashMap<(u8, MultiIndex), LinRow> = HashMap::new();
    let mut phi_row = |alpha: u8, j: &MultiIndex| -> Result<LinRow, SystemError> {
        if let Some(r) = cache.get(&(alpha, j.clone())) {
            return Ok(r.clone());
        }
        // characteristic Σ_i u^α_i ξ̄^i, with ξ̄^i modeled as the reduced
        // horizontal jet coordinates so total derivatives prolong them
        let mut char_terms = Vec::new();
        for i in 1..=p {
            char_terms.push(Expr::mul(vec![
                Expr::coord(Coord::sub(alpha, MultiIndex::single(i))),
                Expr::coord(Coord::red(i, MultiIndex::empty())),
            ]));
        }
        let mut e = Expr::add(char_terms);
        for &dir in j.entries() {
            e = crate::jetcalc::total_derivative(&e, dir, ctx);
        }
        let mut tail = Vec::new();
        for i in 1..=p {
            tail.push(Expr::mul(vec![
                Expr::int(-1),
                Expr::coord(Coord::sub(alpha, j.append(i))),
                Expr::coord(Coord::red(i, MultiIndex::empty())),
            ]));
        }
        let full = Expr::add(vec![e, Expr::add(tail)]);
        let mut row: LinRow = BTreeMap::new();
        for c in full.coords() {
            if c.space != Space::Red {
                continue;
            }
            let coeff = full
                .partial(&c)
                .eval(&|cc: &Coord| point.eval_identity(cc))
                .map_err(|e| SystemError::SingularPoint(e.to_string()))?;
            if !coeff.is_zero() {
                *row.entry((q + c.dep, c.index.clone()))
                    .or_insert_with(Rat::zero) += coeff;
            }
        }
        *row.entry((alpha, j.clone())).or_insert_with(Rat::zero) -= Rat::from_integer(1.into());
        cache.insert((alpha, j.clone()), row.clone());
        Ok(row)
    };
    let lin = linearize(red, point)?;
    let mut out = Vec::new();
    for row in lin {
        let mut new_row: LinRow = BTreeMap::new();
        for ((tag, j), v) in row {
            if tag <= p {
                *new_row.entry((q + tag, j)).or_insert_with(Rat::zero) += v;
            } else {
                let alpha = tag - p;
                let sub = phi_row(alpha, &j)?;
                for (k, c) in sub {
                    *new_row.entry(k).or_insert_with(Rat::zero) += v.clone() * c;
                }
            }
        }
        new_row.retain(|_, v| !v.is_zero());
        out.push(new_row);
    }
    Ok(out)
}

/// Row-space comparison of two linear systems over a shared column set.
pub fn equal_linear_systems(a: &[LinRow], b: &[LinRow], columns: &[(u8, MultiIndex)]) -> bool {
    let ma = rows_to_matrix(a, columns);
    let mb = rows_to_matrix(b, columns);
    equal_row_spaces(&ma, &mb)
}

/// All linearization columns of a normal form system up to an order.
pub fn nf_symbol_columns(sys: &DifferentialSystem, up_to: usize) -> Vec<(u8, MultiIndex)> {
    let mut tags = horizontal_tags(sys);
    tags.extend(vertical_tags(sys));
    sym_columns(sys, 0..=up_to, &tags)
}

/// Initial-condition schema read off a cross-section: base-point constraints
/// for the horizontal components plus the normalization slots merged into
/// function data and point constants on a bounded order window.
pub fn cross_section_schema(
    cs: &CrossSection,
    p: usize,
    q: usize,
    window: usize,
) -> crate::system::Schema {
    let mut entries: Vec<crate::system::SchemaEntry> = (1..=p as u8)
        .map(|index| crate::system::SchemaEntry::BasePoint { index })
        .collect();
    for alpha in 1..=q as u8 {
        let members: std::collections::BTreeSet<MultiIndex> = (0..=window)
            .flat_map(|k| {
                cs.members_of_order(p as u8, q as u8, k)
                    .into_iter()
                    .filter(|c| c.dep == alpha)
                    .map(|c| c.index)
                    .collect::<Vec<_>>()
            })
            .collect();
        entries.extend(crate::system::orthant_schema(alpha, &members, p, window));
    }
    crate::system::Schema { entries }
}
