//! Recomputes every published value carried by the catalog and diffs.
//!
//! Each check runs the pipeline from the transcribed systems; nothing here
//! asserts — the acceptance suite does that on top of the returned report.

use std::collections::{BTreeMap, HashMap};

use num_traits::Zero;

use super::entries::dsl::{add, mi, mul, sub2, t, u, zr};
use super::{builtin, reduced_system, transform_section};
use crate::expr::{Coord, Expr};
use crate::jetcalc::JetPoint;
use crate::multiindex::{IndexedCoordinate, MultiIndex};
use crate::normalform::{
    self, build_nf_system, linearize, solve_frame, vertical_symbol, wellposed_check, CrossSection,
    FrameProblem, LinRow, NormalFormSystem, SlotKind, VerticalSpace,
};
use crate::reduction::{reducibility_check, reduced_character_check, PseudoGroupSpec};
use crate::scalar::{rat, rat_int, Rat, Scalar, SeededRng};
use crate::series::Series;
use crate::system::{DifferentialSystem, SystemError};

/// One recomputed golden value.
#[derive(Clone, Debug)]
pub struct GoldenCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl GoldenCheck {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        GoldenCheck {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

fn check(out: &mut Vec<GoldenCheck>, name: &str, passed: bool, detail: String) {
    out.push(GoldenCheck::new(name, passed, detail));
}

fn err_check(out: &mut Vec<GoldenCheck>, name: &str, err: &dyn std::fmt::Display) {
    out.push(GoldenCheck::new(name, false, format!("error: {err}")));
}

/// Runs every golden recomputation.
pub fn run_all_goldens(seed: u64) -> Vec<GoldenCheck> {
    let mut out = Vec::new();
    running_determining(&mut out);
    running_reduced(&mut out);
    ex4(&mut out);
    reducibility(&mut out);
    running_normal_form(&mut out, seed);
    ex13_normal_form(&mut out);
    wellposed(&mut out);
    frame(&mut out, seed);
    invariance(&mut out, seed);
    ex12(&mut out, seed);
    cm_complex(&mut out);
    n2(&mut out);
    redfree(&mut out);
    group_smoke(&mut out, seed);
    out
}

pub(crate) fn running_determining(out: &mut Vec<GoldenCheck>) {
    let name = "running: determining system order 2";
    let entry = builtin("running").unwrap();
    let det = entry.determining.unwrap();
    let report = match det.symbol(2) {
        Ok(r) => r,
        Err(e) => return err_check(out, name, &e),
    };
    let verdict = match det.involutivity() {
        Ok(v) => v,
        Err(e) => return err_check(out, name, &e),
    };
    let d3 = verdict.prolonged_parametric;
    let ok = report.indices == vec![7, 6, 3]
        && report.characters == vec![2, 0, 0]
        && verdict.prolonged_rank == 28
        && d3 == 2
        && verdict.involutive;
    check(
        out,
        name,
        ok,
        format!(
            "indices {:?} characters {:?} r3 {} d3 {} involutive {}",
            report.indices, report.characters, verdict.prolonged_rank, d3, verdict.involutive
        ),
    );
    // fiber dimensions d^{(n)} = 2n + 4
    let g = PseudoGroupSpec::new(builtin("running").unwrap().determining.unwrap());
    let dims: Vec<u64> = (1..=4)
        .map(|n| g.fiber_dim(n).unwrap_or(0))
        .collect();
    check(
        out,
        "running: determining fiber dimensions",
        dims == vec![6, 8, 10, 12],
        format!("d^(1..4) = {dims:?}"),
    );
}

/// The reduced running-example system computed through the reduction map.
pub(crate) fn running_reduced_system(up_to: usize) -> Result<crate::reduction::ReducedSystem, SystemError> {
    let entry = builtin("running").unwrap();
    reduced_system(&entry, up_to)
}

pub(crate) fn running_reduced(out: &mut Vec<GoldenCheck>) {
    let name = "running: reduced system order 2";
    let red = match running_reduced_system(2) {
        Ok(r) => r,
        Err(e) => return err_check(out, name, &e),
    };
    let report = match red.system.symbol(2) {
        Ok(r) => r,
        Err(e) => return err_check(out, name, &e),
    };
    let verdict = match red.system.involutivity() {
        Ok(v) => v,
        Err(e) => return err_check(out, name, &e),
    };
    let ok = report.indices == vec![4, 3]
        && report.characters == vec![2, 0]
        && verdict.prolonged_rank == 10
        && verdict.prolonged_parametric == 2
        && verdict.involutive;
    check(
        out,
        name,
        ok,
        format!(
            "indices {:?} characters {:?} r3 {} d3 {} involutive {}",
            report.indices,
            report.characters,
            verdict.prolonged_rank,
            verdict.prolonged_parametric,
            verdict.involutive
        ),
    );
    // golden second-order equations
    let golden: Vec<(Coord, Expr)> = vec![
        (Coord::red(1, mi(&[2])), Expr::zero()),
        (
            Coord::red(2, mi(&[1])),
            mul(vec![sub2(zr(3, &[]), u(1, &[])), zr(1, &[1])]),
        ),
        (Coord::red(2, mi(&[2])), zr(1, &[1])),
        (
            Coord::red(1, mi(&[1, 1])),
            mul(vec![sub2(zr(3, &[2]), u(1, &[2])), zr(1, &[1])]),
        ),
        (Coord::red(1, mi(&[1, 2])), Expr::zero()),
        (Coord::red(1, mi(&[2, 2])), Expr::zero()),
        (
            Coord::red(2, mi(&[1, 1])),
            mul(vec![
                add(vec![
                    sub2(zr(3, &[1]), u(1, &[1])),
                    mul(vec![
                        sub2(zr(3, &[]), u(1, &[])),
                        sub2(zr(3, &[2]), u(1, &[2])),
                    ]),
                ]),
                zr(1, &[1]),
            ]),
        ),
        (
            Coord::red(2, mi(&[1, 2])),
            mul(vec![sub2(zr(3, &[2]), u(1, &[2])), zr(1, &[1])]),
        ),
        (Coord::red(2, mi(&[2, 2])), Expr::zero()),
        (Coord::red(3, mi(&[2, 2])), u(1, &[2, 2])),
    ];
    check(
        out,
        "running: reduced equations match",
        system_matches(&red.system, &golden, 2),
        "semantic comparison at 5 random points".into(),
    );
    // parametric reduced jets: Xr, Yr, Ur, Xr_x, Ur_{x^k}, Ur_{x^{k-1}y}
    let sys = red.system.prolonged_to(4).unwrap();
    let mut expected: Vec<Coord> = vec![
        Coord::red(1, mi(&[])),
        Coord::red(2, mi(&[])),
        Coord::red(3, mi(&[])),
        Coord::red(1, mi(&[1])),
    ];
    for k in 1..=4usize {
        expected.push(Coord::red(3, MultiIndex::repeated(1, k)));
        if k >= 2 {
            let mut v = vec![1u8; k - 1];
            v.push(2);
            expected.push(Coord::red(3, MultiIndex::new(v)));
        } else {
            expected.push(Coord::red(3, mi(&[2])));
        }
    }
    let mut actual: Vec<Coord> = (0..=4).flat_map(|k| sys.parametric_coords(k)).collect();
    expected.sort();
    actual.sort();
    check(
        out,
        "running: reduced parametric list",
        expected == actual,
        format!("{} parametric jets through order 4", actual.len()),
    );
    // fiber dimensions 2n + 4 for n = 1..6
    let sys6 = red.system.prolonged_to(6).unwrap();
    let dims: Vec<u64> = (1..=6).map(|n| sys6.fiber_dim(n)).collect();
    check(
        out,
        "running: reduced fiber dimensions",
        dims == vec![6, 8, 10, 12, 14, 16],
        format!("dbar^(1..6) = {dims:?}"),
    );
    // order-3 prolongation contains Ur_yyy = u_yyy
    let (p3, conds) = red.system.prolong().unwrap();
    let eq = p3
        .equations
        .iter()
        .find(|e| e.lhs == Coord::red(3, mi(&[2, 2, 2])));
    let ok = conds.is_empty()
        && eq.is_some_and(|e| {
            exprs_semantically_equal(&e.rhs, &u(1, &[2, 2, 2]), 5)
        });
    check(
        out,
        "running: order-3 reduced prolongation",
        ok,
        "Ur_yyy = u_yyy with no integrability conditions".into(),
    );
    // reduction commutes with prolongation + projection
    let direct = running_reduced_system(3).unwrap();
    check(
        out,
        "running: reduce commutes with prolong",
        systems_semantically_equal(&p3, &direct.system, 3),
        "order-3 reduced equations agree along both routes".into(),
    );
    // reduced character comparison with the full determining system
    let g = PseudoGroupSpec::new(builtin("running").unwrap().determining.unwrap());
    match reduced_character_check(&g, &red, 2) {
        Ok(okc) => check(
            out,
            "running: reduced character equalities",
            okc,
            "first p characters agree, the rest vanish".into(),
        ),
        Err(e) => err_check(out, "running: reduced character equalities", &e),
    }
}

pub(crate) fn ex4(out: &mut Vec<GoldenCheck>) {
    let entry = builtin("ex4").unwrap();
    let det = entry.determining.clone().unwrap();
    match (det.symbol(2), det.involutivity()) {
        (Ok(r), Ok(v)) => {
            check(
                out,
                "ex4: determining system",
                r.indices == vec![6, 6, 3] && r.characters == vec![3, 0, 0] && v.involutive,
                format!("indices {:?} characters {:?}", r.indices, r.characters),
            );
        }
        (Err(e), _) | (_, Err(e)) => err_check(out, "ex4: determining system", &e),
    }
    // order 2: the symbol test fails with 8 against the rank of the
    // order-3 reduced equations (the reduction adds a third-order relation
    // that prolongation alone cannot see)
    let red2 = match reduced_system(&entry, 2) {
        Ok(r) => r,
        Err(e) => return err_check(out, "ex4: reduction", &e),
    };
    let red3 = match reduced_system(&entry, 3) {
        Ok(r) => r,
        Err(e) => return err_check(out, "ex4: reduction", &e),
    };
    match (red2.system.symbol(2), red3.system.symbol(3)) {
        (Ok(r2), Ok(r3)) => check(
            out,
            "ex4: reduced order 2 fails",
            r2.indices == vec![4, 2]
                && r2.characters == vec![2, 1]
                && r2.weighted_index_sum() == 8
                && r3.rank == 9,
            format!(
                "indices {:?} characters {:?} sum {} vs r3 {}",
                r2.indices,
                r2.characters,
                r2.weighted_index_sum(),
                r3.rank
            ),
        ),
        (Err(e), _) | (_, Err(e)) => err_check(out, "ex4: reduced order 2 fails", &e),
    }
    // order 3: involutive with indices (6,3), characters (3,0), 12 = r4
    let red3 = match reduced_system(&entry, 3) {
        Ok(r) => r,
        Err(e) => return err_check(out, "ex4: reduction", &e),
    };
    // projecting the order-3 reduction back adds nothing at order 2
    let conds = DifferentialSystem::project_check(&red3.system, &red2.system);
    check(
        out,
        "ex4: projection adds no order-2 conditions",
        conds.is_empty(),
        format!("{} integrability conditions", conds.len()),
    );
    let three = red3.system;
    match (three.symbol(3), three.involutivity()) {
        (Ok(r), Ok(v)) => check(
            out,
            "ex4: reduced order 3 involutive",
            r.indices == vec![6, 3]
                && r.characters == vec![3, 0]
                && v.weighted_sum == 12
                && v.prolonged_rank == 12
                && v.involutive,
            format!(
                "indices {:?} characters {:?} sum {} r4 {}",
                r.indices, r.characters, v.weighted_sum, v.prolonged_rank
            ),
        ),
        (Err(e), _) | (_, Err(e)) => err_check(out, "ex4: reduced order 3 involutive", &e),
    }
}

pub(crate) fn reducibility(out: &mut Vec<GoldenCheck>) {
    // ex5
    let entry = builtin("ex5").unwrap();
    let g = PseudoGroupSpec::new(entry.determining.clone().unwrap());
    match reduced_system(&entry, 3) {
        Ok(red) => match reducibility_check(&g, &red, 1..=4) {
            Ok(rep) => {
                let d1 = rep.dims[0];
                let later_ok = rep.dims[1..].iter().all(|&(_, d, dr)| d == 5 && dr == 5);
                check(
                    out,
                    "ex5: reducibility order 2",
                    d1 == (1, 5, 4) && later_ok && rep.reducibility_order == Some(2),
                    format!("dims {:?}", rep.dims),
                );
            }
            Err(e) => err_check(out, "ex5: reducibility order 2", &e),
        },
        Err(e) => err_check(out, "ex5: reducibility order 2", &e),
    }
    // ex99
    let entry = builtin("ex99").unwrap();
    let det = entry.determining.clone().unwrap();
    match det.symbol(2) {
        Ok(r) => check(
            out,
            "ex99: determining indices",
            r.indices == vec![3, 2] && r.characters == vec![1, 0],
            format!("indices {:?} characters {:?}", r.indices, r.characters),
        ),
        Err(e) => err_check(out, "ex99: determining indices", &e),
    }
    let g = PseudoGroupSpec::new(det);
    match reduced_system(&entry, 3) {
        Ok(red) => {
            match reducibility_check(&g, &red, 1..=4) {
                Ok(rep) => {
                    let expect: Vec<(usize, u64, u64)> =
                        (1..=4).map(|k| (k, k as u64 + 3, k as u64 + 2)).collect();
                    check(
                        out,
                        "ex99: non-reducible dims",
                        rep.dims == expect && rep.reducibility_order.is_none(),
                        format!("dims {:?}", rep.dims),
                    );
                }
                Err(e) => err_check(out, "ex99: non-reducible dims", &e),
            }
            for n in 2..=3 {
                match reduced_character_check(&g, &red, n) {
                    Ok(okc) => check(
                        out,
                        &format!("ex99: character equalities at order {n}"),
                        okc,
                        "equalities hold despite non-reducibility".into(),
                    ),
                    Err(e) => err_check(out, "ex99: character equalities", &e),
                }
            }
        }
        Err(e) => err_check(out, "ex99: reduction", &e),
    }
    // xfxu
    let entry = builtin("xfxu").unwrap();
    let g = PseudoGroupSpec::new(entry.determining.clone().unwrap());
    match reduced_system(&entry, 3) {
        Ok(red) => {
            let d: Vec<u64> = (1..=4).map(|n| g.fiber_dim(n).unwrap_or(0)).collect();
            let expect_d: Vec<u64> = (1..=4u64).map(|n| (n + 1) * (n + 2) / 2).collect();
            check(
                out,
                "xfxu: determining dimensions",
                d == expect_d,
                format!("d^(1..4) = {d:?}"),
            );
            let dbar: Vec<u64> = (1..=4)
                .map(|n| red.fiber_dim(n).unwrap_or(0))
                .collect();
            // published value: dbar^(n) = n.  The pipeline counts the free
            // order-zero fiber coordinate Ur as well, giving n + 1; the
            // check records the published figure and therefore fails.
            let spec_expect: Vec<u64> = (1..=4u64).collect();
            check(
                out,
                "xfxu: reduced dimensions (published figure)",
                dbar == spec_expect,
                format!("computed dbar^(1..4) = {dbar:?}, published n"),
            );
            check(
                out,
                "xfxu: non-reducible",
                dbar.iter().zip(d.iter()).all(|(a, b)| a < b),
                format!("dbar {dbar:?} < d {d:?}"),
            );
            match reduced_character_check(&g, &red, 1) {
                Ok(okc) => check(
                    out,
                    "xfxu: tail character nonzero flags non-reducibility",
                    !okc,
                    "a character beyond the first p is nonzero".into(),
                ),
                Err(e) => err_check(out, "xfxu: tail character", &e),
            }
        }
        Err(e) => err_check(out, "xfxu: reduction", &e),
    }
}

/// Semantic equality of two expressions by evaluation at random rational
/// points covering both coordinate sets.
pub(crate) fn exprs_semantically_equal(a: &Expr, b: &Expr, points: usize) -> bool {
    let mut rng = SeededRng::new(0xeea1);
    for _ in 0..points {
        let mut vals: HashMap<Coord, Rat> = HashMap::new();
        for c in a.coords().into_iter().chain(b.coords()) {
            vals.entry(c).or_insert_with(|| rng.small_rat());
        }
        let va = a.eval(&|c: &Coord| vals.get(c).cloned());
        let vb = b.eval(&|c: &Coord| vals.get(c).cloned());
        match (va, vb) {
            (Ok(x), Ok(y)) => {
                if x != y {
                    return false;
                }
            }
            // a singular sample decides nothing; try the next point
            (Err(_), Err(_)) | (Err(_), Ok(_)) | (Ok(_), Err(_)) => continue,
        }
    }
    true
}

/// A system carries exactly the golden equations through `order`: same
/// principal coordinates, semantically equal right hand sides.
pub(crate) fn system_matches(
    sys: &DifferentialSystem,
    golden: &[(Coord, Expr)],
    order: usize,
) -> bool {
    let actual: BTreeMap<&Coord, &Expr> = sys
        .equations
        .iter()
        .filter(|e| e.lhs.index.order() <= order)
        .map(|e| (&e.lhs, &e.rhs))
        .collect();
    if actual.len() != golden.len() {
        return false;
    }
    golden.iter().all(|(c, e)| {
        actual
            .get(c)
            .is_some_and(|rhs| exprs_semantically_equal(rhs, e, 5))
    })
}

/// Two systems agree through `order`: same principal set, semantically
/// equal right hand sides.
pub(crate) fn systems_semantically_equal(
    a: &DifferentialSystem,
    b: &DifferentialSystem,
    order: usize,
) -> bool {
    let golden: Vec<(Coord, Expr)> = b
        .equations
        .iter()
        .filter(|e| e.lhs.index.order() <= order)
        .map(|e| (e.lhs.clone(), e.rhs.clone()))
        .collect();
    system_matches(a, &golden, order)
}

/// Golden normal form equations for the running example through order 3.
pub(crate) fn running_nf_golden() -> Vec<(Coord, Expr)> {
    let xr_x = || zr(1, &[1]);
    let uu = |idx: &[u8]| u(1, idx);
    let tt = |idx: &[u8]| t(1, idx);
    let pow2 = || Expr::pow(xr_x(), 2);
    let pow3 = || Expr::pow(xr_x(), 3);
    let du = || sub2(t(1, &[]), u(1, &[]));
    vec![
        (Coord::red(1, mi(&[2])), Expr::zero()),
        (Coord::red(2, mi(&[1])), mul(vec![du(), xr_x()])),
        (Coord::red(2, mi(&[2])), xr_x()),
        // order 2
        (
            Coord::red(1, mi(&[1, 1])),
            sub2(mul(vec![tt(&[2]), pow2()]), mul(vec![uu(&[2]), xr_x()])),
        ),
        (Coord::red(1, mi(&[1, 2])), Expr::zero()),
        (Coord::red(1, mi(&[2, 2])), Expr::zero()),
        (
            Coord::red(2, mi(&[1, 1])),
            sub2(
                mul(vec![
                    add(vec![tt(&[1]), mul(vec![Expr::int(2), du(), tt(&[2])])]),
                    pow2(),
                ]),
                mul(vec![
                    add(vec![uu(&[1]), mul(vec![du(), uu(&[2])])]),
                    xr_x(),
                ]),
            ),
        ),
        (
            Coord::red(2, mi(&[1, 2])),
            sub2(mul(vec![tt(&[2]), pow2()]), mul(vec![uu(&[2]), xr_x()])),
        ),
        (Coord::red(2, mi(&[2, 2])), Expr::zero()),
        (Coord::sub(1, mi(&[2, 2])), mul(vec![tt(&[2, 2]), pow2()])),
        // order 3
        (
            Coord::red(1, mi(&[1, 1, 1])),
            add(vec![
                mul(vec![
                    sub2(Expr::pow(uu(&[2]), 2), uu(&[1, 2])),
                    xr_x(),
                ]),
                mul(vec![Expr::int(-3), uu(&[2]), tt(&[2]), pow2()]),
                mul(vec![
                    add(vec![
                        tt(&[1, 2]),
                        mul(vec![Expr::int(2), Expr::pow(tt(&[2]), 2)]),
                        mul(vec![du(), tt(&[2, 2])]),
                    ]),
                    pow3(),
                ]),
            ]),
        ),
        (Coord::red(1, mi(&[1, 1, 2])), Expr::zero()),
        (Coord::red(1, mi(&[1, 2, 2])), Expr::zero()),
        (Coord::red(1, mi(&[2, 2, 2])), Expr::zero()),
        (Coord::red(2, mi(&[1, 2, 2])), Expr::zero()),
        (Coord::red(2, mi(&[2, 2, 2])), Expr::zero()),
        (
            Coord::red(2, mi(&[1, 1, 1])),
            add(vec![
                mul(vec![
                    add(vec![
                        mul(vec![Expr::int(2), uu(&[1]), uu(&[2])]),
                        Expr::neg(uu(&[1, 1])),
                        mul(vec![du(), sub2(Expr::pow(uu(&[2]), 2), uu(&[1, 2]))]),
                    ]),
                    xr_x(),
                ]),
                mul(vec![
                    Expr::int(-3),
                    add(vec![
                        mul(vec![uu(&[1]), tt(&[2])]),
                        mul(vec![uu(&[2]), tt(&[1])]),
                        mul(vec![Expr::int(2), du(), uu(&[2]), tt(&[2])]),
                    ]),
                    pow2(),
                ]),
                mul(vec![
                    add(vec![
                        tt(&[1, 1]),
                        mul(vec![Expr::int(4), tt(&[1]), tt(&[2])]),
                        mul(vec![
                            Expr::int(3),
                            du(),
                            add(vec![
                                tt(&[1, 2]),
                                mul(vec![Expr::int(2), Expr::pow(tt(&[2]), 2)]),
                            ]),
                        ]),
                        mul(vec![Expr::int(2), Expr::pow(du(), 2), tt(&[2, 2])]),
                    ]),
                    pow3(),
                ]),
            ]),
        ),
        (
            Coord::red(2, mi(&[1, 1, 2])),
            add(vec![
                mul(vec![
                    sub2(Expr::pow(uu(&[2]), 2), uu(&[1, 2])),
                    xr_x(),
                ]),
                mul(vec![Expr::int(-3), uu(&[2]), tt(&[2]), pow2()]),
                mul(vec![
                    add(vec![
                        tt(&[1, 2]),
                        mul(vec![Expr::int(2), Expr::pow(tt(&[2]), 2)]),
                        mul(vec![du(), tt(&[2, 2])]),
                    ]),
                    pow3(),
                ]),
            ]),
        ),
        (
            Coord::sub(1, mi(&[1, 2, 2])),
            add(vec![
                mul(vec![Expr::int(-2), uu(&[2]), tt(&[2, 2]), pow2()]),
                mul(vec![
                    add(vec![
                        tt(&[1, 2, 2]),
                        mul(vec![Expr::int(2), tt(&[2]), tt(&[2, 2])]),
                        mul(vec![du(), tt(&[2, 2, 2])]),
                    ]),
                    pow3(),
                ]),
            ]),
        ),
        (
            Coord::sub(1, mi(&[2, 2, 2])),
            mul(vec![tt(&[2, 2, 2]), pow3()]),
        ),
    ]
}

/// Golden linearized normal form equations through order 3, with symbolic
/// section-jet coefficients.  Rows are `(tag, J) -> coefficient expression`
/// over the normal-form tags (u = 1, Xr = 2, Yr = 3).
pub(crate) fn running_lin_nf_golden() -> Vec<Vec<((u8, MultiIndex), Expr)>> {
    let one = Expr::one;
    let m1 = || Expr::int(-1);
    let psi = 1u8;
    let xi = 2u8;
    let eta = 3u8;
    vec![
        // order 1
        vec![((xi, mi(&[2])), one())],
        vec![((eta, mi(&[1])), one()), ((psi, mi(&[])), one())],
        vec![((eta, mi(&[2])), one()), ((xi, mi(&[1])), m1())],
        // order 2
        vec![
            ((xi, mi(&[1, 1])), one()),
            ((xi, mi(&[1])), Expr::neg(u(1, &[2]))),
            ((psi, mi(&[2])), one()),
        ],
        vec![((xi, mi(&[1, 2])), one())],
        vec![((xi, mi(&[2, 2])), one())],
        vec![
            ((eta, mi(&[1, 1])), one()),
            ((xi, mi(&[1])), Expr::neg(u(1, &[1]))),
            ((psi, mi(&[])), u(1, &[2])),
            ((psi, mi(&[1])), one()),
        ],
        vec![
            ((eta, mi(&[1, 2])), one()),
            ((xi, mi(&[1])), Expr::neg(u(1, &[2]))),
            ((psi, mi(&[2])), one()),
        ],
        vec![((eta, mi(&[2, 2])), one())],
        vec![
            ((psi, mi(&[2, 2])), one()),
            ((xi, mi(&[1])), mul(vec![Expr::int(-2), u(1, &[2, 2])])),
        ],
        // order 3
        vec![
            ((xi, mi(&[1, 1, 1])), one()),
            (
                (xi, mi(&[1])),
                Expr::neg(add(vec![
                    mul(vec![Expr::int(2), u(1, &[1, 2])]),
                    Expr::pow(u(1, &[2]), 2),
                ])),
            ),
            ((psi, mi(&[1, 2])), one()),
            ((psi, mi(&[2])), u(1, &[2])),
            ((psi, mi(&[])), u(1, &[2, 2])),
        ],
        vec![((xi, mi(&[1, 1, 2])), one())],
        vec![((xi, mi(&[1, 2, 2])), one())],
        vec![((xi, mi(&[2, 2, 2])), one())],
        // The xi_x coefficient here is 2 u_xx + 2 u_x u_y, the value obtained
        // by linearizing the third-order equation for the second horizontal
        // component (and confirmed through the prolongation-formula route);
        // the printed linear display carries u_xy in its place.
        vec![
            ((eta, mi(&[1, 1, 1])), one()),
            (
                (xi, mi(&[1])),
                Expr::neg(add(vec![
                    mul(vec![Expr::int(2), u(1, &[1, 1])]),
                    mul(vec![Expr::int(2), u(1, &[1]), u(1, &[2])]),
                ])),
            ),
            ((psi, mi(&[1, 1])), one()),
            ((psi, mi(&[1])), u(1, &[2])),
            ((psi, mi(&[2])), u(1, &[1])),
            (
                (psi, mi(&[])),
                add(vec![
                    mul(vec![Expr::int(2), u(1, &[1, 2])]),
                    Expr::pow(u(1, &[2]), 2),
                ]),
            ),
        ],
        vec![
            ((eta, mi(&[1, 1, 2])), one()),
            (
                (xi, mi(&[1])),
                Expr::neg(add(vec![
                    mul(vec![Expr::int(2), u(1, &[1, 2])]),
                    Expr::pow(u(1, &[2]), 2),
                ])),
            ),
            ((psi, mi(&[1, 2])), one()),
            ((psi, mi(&[2])), u(1, &[2])),
            ((psi, mi(&[])), u(1, &[2, 2])),
        ],
        vec![((eta, mi(&[1, 2, 2])), one())],
        vec![((eta, mi(&[2, 2, 2])), one())],
        vec![
            ((psi, mi(&[1, 2, 2])), one()),
            (
                (xi, mi(&[1])),
                Expr::neg(add(vec![
                    mul(vec![Expr::int(3), u(1, &[1, 2, 2])]),
                    mul(vec![Expr::int(2), u(1, &[2]), u(1, &[2, 2])]),
                ])),
            ),
            ((psi, mi(&[2])), mul(vec![Expr::int(2), u(1, &[2, 2])])),
            ((psi, mi(&[])), u(1, &[2, 2, 2])),
        ],
        vec![
            ((psi, mi(&[2, 2, 2])), one()),
            (
                (xi, mi(&[1])),
                mul(vec![Expr::int(-3), u(1, &[2, 2, 2])]),
            ),
        ],
    ]
}

fn eval_lin_golden(
    rows: &[Vec<((u8, MultiIndex), Expr)>],
    point: &JetPoint,
) -> Option<Vec<LinRow>> {
    rows.iter()
        .map(|row| {
            let mut out: LinRow = BTreeMap::new();
            for ((tag, j), e) in row {
                let v = e.eval(&|c: &Coord| point.eval_identity(c)).ok()?;
                if !v.is_zero() {
                    *out.entry((*tag, j.clone())).or_insert_with(Rat::zero) += v;
                }
            }
            Some(out)
        })
        .collect()
}

pub(crate) fn running_nf(up_to: usize) -> Result<NormalFormSystem, SystemError> {
    let red = running_reduced_system(up_to)?;
    build_nf_system(&red, up_to)
}

pub(crate) fn running_normal_form(out: &mut Vec<GoldenCheck>, seed: u64) {
    let nf = match running_nf(3) {
        Ok(nf) => nf,
        Err(e) => return err_check(out, "running: normal form build", &e),
    };
    check(
        out,
        "running: normal form equations",
        system_matches(&nf.system, &running_nf_golden(), 3),
        "orders 1..3 match the published system semantically".into(),
    );
    // linearization at several random section points
    let golden = running_lin_nf_golden();
    let mut lin_ok = true;
    for s in 0..3u64 {
        let point = JetPoint::generic(2, 1, 100 + seed + s);
        let got = match linearize(&nf.system, &point) {
            Ok(r) => r,
            Err(e) => return err_check(out, "running: linearized normal form", &e),
        };
        let Some(want) = eval_lin_golden(&golden, &point) else {
            return err_check(out, "running: linearized normal form", &"golden eval failed");
        };
        let columns = normalform::nf_symbol_columns(&nf.system, 3);
        if !normalform::equal_linear_systems(&got, &want, &columns) {
            lin_ok = false;
        }
    }
    check(
        out,
        "running: linearized normal form",
        lin_ok,
        "row spaces agree at 3 random section points".into(),
    );
    // linearized reduced system + prolongation substitution = linearized NF
    let red = running_reduced_system(3).unwrap();
    let mut subst_ok = true;
    for s in 0..2u64 {
        let point = JetPoint::generic(2, 1, 300 + seed + s);
        let a = normalform::substitute_linearized_reduced(&red.system, &point).unwrap();
        let b = linearize(&nf.system, &point).unwrap();
        let columns = normalform::nf_symbol_columns(&nf.system, 3);
        if !normalform::equal_linear_systems(&a, &b, &columns) {
            subst_ok = false;
        }
    }
    check(
        out,
        "running: linearized reduced equals linearized normal form",
        subst_ok,
        "after the prolongation-formula substitution".into(),
    );
    // vertical symbols
    let nf5 = match running_nf(5) {
        Ok(nf) => nf,
        Err(e) => return err_check(out, "running: vertical symbols", &e),
    };
    let point = nf5.system.point.clone();
    let mut psi_ok = true;
    for n in 2..=5usize {
        let psi = match vertical_symbol(&nf5, n, &point) {
            Ok(p) => p,
            Err(e) => return err_check(out, "running: vertical symbols", &e),
        };
        let want = expected_running_psi(&nf5, n);
        if !psi.equal(&want) {
            psi_ok = false;
        }
    }
    check(
        out,
        "running: vertical symbol pattern",
        psi_ok,
        "Psi^n spanned by psi_{x^j y^{n-j}}, j <= n-2, for n = 2..5".into(),
    );
    // annihilator at the u_yy != 0 point: golden Z^(3) rows
    match normalform::prolonged_annihilator(&nf5, 3, &point) {
        Ok(ann) => {
            let golden_rows = running_z3_golden(&point);
            let mut z_cols = ann.z_columns.clone();
            let got_rows: Vec<LinRow> = ann
                .z_basis
                .rows
                .iter()
                .map(|r| {
                    let mut row = BTreeMap::new();
                    for (i, v) in r.iter().enumerate() {
                        if !v.is_zero() {
                            row.insert(z_cols[i].clone(), v.clone());
                        }
                    }
                    row
                })
                .collect();
            z_cols.sort();
            let ok = normalform::equal_linear_systems(&got_rows, &golden_rows, &ann.z_columns);
            check(
                out,
                "running: prolonged annihilator order 3",
                ok,
                "Z^(3) matches the two published relations".into(),
            );
        }
        Err(e) => err_check(out, "running: prolonged annihilator order 3", &e),
    }
    // Upsilon = Psi at the u_yy != 0 point for n = 3..5
    match normalform::compatibility_check(&nf5, 2, 3..=5, &point) {
        Ok(ok) => check(
            out,
            "running: compatibility at generic point",
            ok,
            "Upsilon^n = Psi^n for n = 3..5".into(),
        ),
        Err(e) => err_check(out, "running: compatibility at generic point", &e),
    }
    // and at a u_yy = 0 point for n = 2..5: the published equalities refer
    // to a flat jet (every coefficient jet in the annihilator relations
    // vanishes there); away from it the order-3 equality genuinely fails
    // because the action is no longer free at order 2
    let mut degenerate = JetPoint::generic(2, 1, 707);
    for k in 0..=6usize {
        for j in MultiIndex::all_of_order(2, k) {
            degenerate.set(1, j, rat_int(0));
        }
    }
    let mut ok_deg = true;
    for n in 2..=5usize {
        let psi = vertical_symbol(&nf5, n, &degenerate).unwrap();
        let ups = normalform::prolonged_annihilator(&nf5, n, &degenerate).unwrap();
        if !psi.equal(&ups.upsilon) {
            ok_deg = false;
        }
    }
    check(
        out,
        "running: compatibility at degenerate point",
        ok_deg,
        "Upsilon^n = Psi^n for n = 2..5 where u_yy = 0".into(),
    );
}

fn expected_running_psi(nf: &NormalFormSystem, n: usize) -> VerticalSpace {
    // span of psi_{x^j y^{n-j}} for 0 <= j <= n-2
    let sys = &nf.system;
    let cols: Vec<(u8, MultiIndex)> = sys
        .term_order
        .columns(&[1], n)
        .into_iter()
        .map(|ic| (ic.dep, ic.index))
        .collect();
    let mut rows = Vec::new();
    for j in 0..=n.saturating_sub(2) {
        let mut v = vec![1u8; j];
        v.extend(vec![2u8; n - j]);
        let target = MultiIndex::new(v);
        let mut row = vec![Rat::zero(); cols.len()];
        let pos = cols.iter().position(|(_, m)| *m == target).unwrap();
        row[pos] = Rat::from_integer(1.into());
        rows.push(row);
    }
    let mut matrix = crate::linalg::Mat::new(rows, cols.len());
    matrix.rref();
    VerticalSpace {
        order: n,
        columns: cols,
        matrix,
    }
}

fn running_z3_golden(point: &JetPoint) -> Vec<LinRow> {
    // psi_yyy = (3 u_yyy / 2 u_yy) psi_yy
    // psi_xyy = (3 u_xyy / (2 u_yy) + u_y) psi_yy − 2 u_yy psi_y − u_yyy psi
    let v = |idx: &[u8]| point.u_value(1, &mi(idx));
    let two = rat_int(2);
    let three = rat_int(3);
    let r1: LinRow = [
        ((1u8, mi(&[2, 2, 2])), rat_int(1)),
        (
            (1u8, mi(&[2, 2])),
            -(three.clone() * v(&[2, 2, 2]) / (two.clone() * v(&[2, 2]))),
        ),
    ]
    .into_iter()
    .collect();
    let r2: LinRow = [
        ((1u8, mi(&[1, 2, 2])), rat_int(1)),
        (
            (1u8, mi(&[2, 2])),
            -(three * v(&[1, 2, 2]) / (two * v(&[2, 2])) + v(&[2])),
        ),
        ((1u8, mi(&[2])), two_times(&v(&[2, 2]))),
        ((1u8, mi(&[])), v(&[2, 2, 2])),
    ]
    .into_iter()
    .collect();
    vec![r1, r2]
}

fn two_times(r: &Rat) -> Rat {
    rat_int(2) * r.clone()
}

pub(crate) fn ex13_normal_form(out: &mut Vec<GoldenCheck>) {
    // order-1 normal form equation: u_y = u_x Ut_Y / Ut_X
    let entry = builtin("ex13").unwrap();
    let red = match reduced_system(&entry, 1) {
        Ok(r) => r,
        Err(e) => return err_check(out, "ex13: normal form order 1", &e),
    };
    let nf = match build_nf_system(&red, 1) {
        Ok(nf) => nf,
        Err(e) => return err_check(out, "ex13: normal form order 1", &e),
    };
    let eq = nf
        .system
        .equations
        .iter()
        .find(|e| e.lhs == Coord::sub(1, mi(&[2])));
    let want = Expr::div(
        mul(vec![u(1, &[1]), t(1, &[2])]),
        t(1, &[1]),
    );
    let ok = eq.is_some_and(|e| exprs_semantically_equal(&e.rhs, &want, 5));
    check(
        out,
        "ex13: normal form order 1",
        ok,
        "u_y = u_x U_Y / U_X".into(),
    );
}

pub(crate) fn wellposed(out: &mut Vec<GoldenCheck>) {
    // running: C(3,0) ⊎ C(2,1)
    wellposed_one(
        out,
        "running",
        2,
        &[mi(&[1, 1, 1]), mi(&[1, 1, 2])],
    );
    wellposed_one(out, "ex13", 1, &[mi(&[1, 1])]);
    wellposed_one(out, "ex14", 1, &[mi(&[1, 1]), mi(&[1, 2]), mi(&[2, 2])]);
    wellposed_one(out, "ex15", 1, &[mi(&[1, 1]), mi(&[1, 2])]);
    // altered running cross-section: normalizing u_{y^k} instead of u_{x^k}
    // breaks the Rees decomposition
    let entry = builtin("running").unwrap();
    let red = reduced_system(&entry, 2).unwrap();
    let altered = CrossSection {
        base: vec![rat_int(0), rat_int(0)],
        explicit: {
            let mut m = BTreeMap::new();
            m.insert(IndexedCoordinate::new(1, mi(&[2, 2])), rat_int(1));
            m
        },
        families: vec![
            (
                normalform::IndexFamily {
                    dep: 1,
                    fixed: mi(&[]),
                    tail_vars: vec![2],
                },
                rat_int(0),
            ),
            (
                normalform::IndexFamily {
                    dep: 1,
                    fixed: mi(&[1]),
                    tail_vars: vec![2],
                },
                rat_int(0),
            ),
        ],
    };
    match wellposed_check(&altered, &red, 2, 5) {
        Ok(v) => check(
            out,
            "running: altered cross-section fails",
            !v.rees.ok(),
            format!(
                "uncovered {} overlapped {} excess {}",
                v.rees.uncovered.len(),
                v.rees.overlapped.len(),
                v.rees.excess.len()
            ),
        ),
        Err(e) => err_check(out, "running: altered cross-section fails", &e),
    }
}

fn wellposed_one(
    out: &mut Vec<GoldenCheck>,
    id: &str,
    n_f: usize,
    expected_generators: &[MultiIndex],
) {
    let name = format!("{id}: well-posed cross-section");
    let entry = builtin(id).unwrap();
    let cs = entry.cross_section.clone().unwrap();
    let red = match reduced_system(&entry, n_f.max(entry.n_star.unwrap_or(1))) {
        Ok(r) => r,
        Err(e) => return err_check(out, &name, &e),
    };
    match wellposed_check(&cs, &red, n_f, 5) {
        Ok(v) => {
            let p = red.system.ctx.p as u8;
            let q = red.system.ctx.q as u8;
            let gens: Vec<MultiIndex> = cs
                .members_of_order(p, q, n_f + 1)
                .into_iter()
                .map(|c| c.index)
                .collect();
            let gens_ok = {
                let mut a = gens.clone();
                let mut b = expected_generators.to_vec();
                a.sort();
                b.sort();
                a == b
            };
            check(
                out,
                &name,
                v.ok() && gens_ok,
                format!(
                    "count mismatches {:?}, jacobian {}, rees ok {}, generators {:?}",
                    v.count_mismatches,
                    v.jacobian_ok,
                    v.rees.ok(),
                    gens
                ),
            );
        }
        Err(e) => err_check(out, &name, &e),
    }
}

/// The rational target jet used by the frame checks: a degree-6 polynomial
/// section with U_YY = 4 at the origin.
pub fn running_target_jets(order: usize) -> BTreeMap<IndexedCoordinate, Rat> {
    let mut vals = BTreeMap::new();
    let assign: Vec<(&[u8], Rat)> = vec![
        (&[], rat_int(1)),
        (&[1], rat(1, 2)),
        (&[2], rat(1, 3)),
        (&[1, 1], rat(1, 5)),
        (&[1, 2], rat(2, 7)),
        (&[2, 2], rat_int(4)),
        (&[1, 1, 1], rat(1, 2)),
        (&[1, 1, 2], rat(3, 5)),
        (&[1, 2, 2], rat(1, 7)),
        (&[2, 2, 2], rat_int(8)),
        (&[1, 1, 1, 1], rat(1, 3)),
        (&[1, 1, 1, 2], rat(2, 5)),
        (&[1, 1, 2, 2], rat(1, 4)),
        (&[1, 2, 2, 2], rat(3, 7)),
        (&[2, 2, 2, 2], rat(5, 3)),
        (&[1, 1, 1, 1, 1], rat(1, 6)),
        (&[1, 1, 1, 1, 2], rat(1, 8)),
        (&[1, 1, 1, 2, 2], rat(2, 9)),
        (&[1, 1, 2, 2, 2], rat(1, 5)),
        (&[1, 2, 2, 2, 2], rat(3, 8)),
        (&[2, 2, 2, 2, 2], rat(7, 5)),
    ];
    for (idx, v) in assign {
        if idx.len() <= order {
            vals.insert(IndexedCoordinate::new(1, mi(idx)), v);
        }
    }
    // any remaining slots up to the requested order default to simple values
    for k in 0..=order {
        for j in MultiIndex::all_of_order(2, k) {
            vals.entry(IndexedCoordinate::new(1, j.clone()))
                .or_insert_with(|| rat(1, 9) + rat_int(j.count(1) as i64));
        }
    }
    vals
}

/// The same target as an exact series (coefficients `u_J / J!`).
pub fn running_target_series(order: usize) -> Series {
    let jets = running_target_jets(order);
    let mut s = Series::zero(2, order);
    for (c, v) in jets {
        let fact = Rat::from_integer(c.index.factorial().into());
        s.set(c.index, v / fact);
    }
    s
}

pub(crate) fn running_frame_problem(
    up_to: usize,
) -> Result<(crate::reduction::ReducedSystem, CrossSection, Vec<(Coord, Expr)>), SystemError> {
    let entry = builtin("running").unwrap();
    let red = reduced_system(&entry, up_to)?;
    Ok((
        red,
        entry.cross_section.clone().unwrap(),
        entry.closed_forms.clone(),
    ))
}

pub(crate) fn frame(out: &mut Vec<GoldenCheck>, _seed: u64) {
    let up_to = 5;
    let (red, cs, closed) = match running_frame_problem(up_to) {
        Ok(x) => x,
        Err(e) => return err_check(out, "running: frame solve", &e),
    };
    let problem = FrameProblem {
        red: &red,
        cs: &cs,
        n_f: 2,
        closed_forms: &closed,
    };
    let target = running_target_jets(up_to);
    let (frame, series) = match solve_frame(&problem, &target, up_to) {
        Ok(x) => x,
        Err(e) => return err_check(out, "running: frame solve", &e),
    };
    // order-2 frame at U_YY = 4, U = 1: the square root normalizes to
    // Xr_x = 2 and the mixed slot to Ur_xy = -4 U = -4; the pure-x slot
    // solves to Ur_xx = U^2 U_YY = 4
    let want = [(Coord::red(1, mi(&[])), rat_int(0)),
        (Coord::red(2, mi(&[])), rat_int(0)),
        (Coord::red(3, mi(&[])), rat_int(0)),
        (Coord::red(1, mi(&[1])), rat_int(2)),
        (Coord::red(3, mi(&[1])), rat_int(0)),
        (Coord::red(3, mi(&[2])), rat_int(0)),
        (Coord::red(3, mi(&[1, 1])), rat_int(4)),
        (Coord::red(3, mi(&[1, 2])), rat_int(-4))];
    let frame_ok = want
        .iter()
        .all(|(c, v)| frame.values.get(c) == Some(v));
    check(
        out,
        "running: order-2 frame",
        frame_ok && !frame.float_fallback,
        format!("Xr_x = {:?}", frame.values.get(&Coord::red(1, mi(&[1])))),
    );
    // third-order invariants against the published formulas
    let tv = |idx: &[u8]| target[&IndexedCoordinate::new(1, mi(idx))].clone();
    let u_yy = tv(&[2, 2]);
    let root = u_yy.clone() * u_yy.try_sqrt().unwrap(); // u_yy^{3/2} = 8
    let want_i03 = tv(&[2, 2, 2]) / root.clone();
    let want_i12 =
        (tv(&[1, 2, 2]) + tv(&[]) * tv(&[2, 2, 2]) + rat_int(2) * tv(&[2]) * u_yy) / root;
    let got_i03 = series.invariant(1, &mi(&[2, 2, 2]));
    let got_i12 = series.invariant(1, &mi(&[1, 2, 2]));
    check(
        out,
        "running: third-order invariants",
        got_i03 == Some(want_i03.clone()) && got_i12 == Some(want_i12.clone()),
        format!("I03 {got_i03:?} want {want_i03}, I12 {got_i12:?} want {want_i12}"),
    );
    // phantom slots land on the cross-section
    check(
        out,
        "running: series lies in the cross-section",
        series.lies_in_cross_section(&cs),
        "phantom slots equal the normalization constants".into(),
    );
    // orders 4 and 5 against the Newton oracle
    let float_target: BTreeMap<IndexedCoordinate, f64> = target
        .iter()
        .map(|(c, v)| (c.clone(), v.to_f64()))
        .collect();
    match normalform::newton_frame_oracle(&problem, &float_target, up_to) {
        Ok(oracle) => {
            let mut max_dev: f64 = 0.0;
            for (c, (kind, v)) in &series.slots {
                if *kind == SlotKind::Invariant && c.order() >= 4 {
                    let o = oracle.slots[c].1;
                    max_dev = max_dev.max((v.to_f64() - o).abs());
                }
            }
            check(
                out,
                "running: order 4-5 invariants vs Newton oracle",
                max_dev < 1e-9,
                format!("max deviation {max_dev:.3e}"),
            );
        }
        Err(e) => err_check(out, "running: order 4-5 invariants vs Newton oracle", &e),
    }
}

pub(crate) fn invariance(out: &mut Vec<GoldenCheck>, seed: u64) {
    invariance_one(out, "running", 6, seed);
    invariance_one(out, "ex10", 5, seed);
    invariance_one(out, "ex13", 5, seed);
}

pub fn emit_invariants(
    id: &str,
    sections: &[Series],
    up_to: usize,
) -> Result<BTreeMap<IndexedCoordinate, Rat>, String> {
    let entry = builtin(id).unwrap();
    let red = reduced_system(&entry, up_to).map_err(|e| e.to_string())?;
    let cs = entry.cross_section.clone().ok_or("no cross-section")?;
    let problem = FrameProblem {
        red: &red,
        cs: &cs,
        n_f: entry.n_f.unwrap_or(1),
        closed_forms: &entry.closed_forms,
    };
    let base = vec![Rat::zero(); red.system.ctx.p];
    let jet = crate::jetcalc::SectionJet::from_series(base, sections.to_vec(), up_to);
    let target: BTreeMap<IndexedCoordinate, Rat> = jet.jets.clone();
    let (_, series) = solve_frame(&problem, &target, up_to).map_err(|e| e.to_string())?;
    Ok(series
        .slots
        .into_iter()
        .filter(|(_, (kind, _))| *kind == SlotKind::Invariant)
        .map(|(c, (_, v))| (c, v))
        .collect())
}

fn invariance_one(out: &mut Vec<GoldenCheck>, id: &str, up_to: usize, seed: u64) {
    let name = format!("{id}: invariance under group elements");
    let start = std::time::Instant::now();
    let target = match id {
        "running" => running_target_series(up_to),
        "ex10" => {
            // positive section value at the origin
            let mut s = running_target_series(up_to);
            s.set(mi(&[]), rat_int(2));
            s
        }
        "ex13" => {
            let mut s = running_target_series(up_to);
            s.set(mi(&[1]), rat_int(1)); // u_x != 0
            s
        }
        _ => unreachable!(),
    };
    let base = match emit_invariants(id, std::slice::from_ref(&target), up_to) {
        Ok(b) => b,
        Err(e) => return err_check(out, &name, &e),
    };
    let mut ok = true;
    let mut detail = String::new();
    for k in 0..3u64 {
        let transformed = transform_section(id, std::slice::from_ref(&target), seed + 1000 * k)
            .expect("transformable entry");
        match emit_invariants(id, &transformed, up_to) {
            Ok(after) => {
                if after != base {
                    ok = false;
                    for (c, v) in &base {
                        if after.get(c) != Some(v) {
                            detail = format!("first mismatch at {c}: {:?} vs {v}", after.get(c));
                            break;
                        }
                    }
                }
            }
            Err(e) => {
                ok = false;
                detail = e;
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        out,
        &name,
        ok && elapsed.as_secs() < 30,
        if ok {
            format!("3 group elements, exact match; {elapsed:.2?}")
        } else {
            format!("{detail}; {elapsed:.2?}")
        },
    );
}

pub(crate) fn ex12(out: &mut Vec<GoldenCheck>, seed: u64) {
    // original chart is not delta-regular
    let entry = builtin("ex12-original").unwrap();
    let sys = entry.reduced.clone().unwrap();
    match sys.delta_regularity_probe(12, seed) {
        Ok(probe) => check(
            out,
            "ex12: original chart flagged",
            probe.delta_irregular && probe.original == 6 && probe.max_found == 7,
            format!("sum {} -> max {}", probe.original, probe.max_found),
        ),
        Err(e) => err_check(out, "ex12: original chart flagged", &e),
    }
    // regularized chart: NF involutive at order 2 with (4,3)/(2,0)
    let entry = builtin("ex12-regularized").unwrap();
    let red = reduced_system(&entry, 2).unwrap();
    match build_nf_system(&red, 2) {
        Ok(nf) => match (nf.system.symbol(2), nf.system.involutivity()) {
            (Ok(r), Ok(v)) => check(
                out,
                "ex12: regularized normal form",
                r.indices == vec![4, 3]
                    && r.characters == vec![2, 0]
                    && v.weighted_sum == 10
                    && v.prolonged_rank == 10
                    && v.involutive,
                format!(
                    "indices {:?} characters {:?} sum {} r3 {}",
                    r.indices, r.characters, v.weighted_sum, v.prolonged_rank
                ),
            ),
            (Err(e), _) | (_, Err(e)) => err_check(out, "ex12: regularized normal form", &e),
        },
        Err(e) => err_check(out, "ex12: regularized normal form", &e),
    }
    // regularized probe does not flag
    let sys = builtin("ex12-regularized").unwrap().reduced.unwrap();
    match sys.delta_regularity_probe(8, seed) {
        Ok(probe) => check(
            out,
            "ex12: regularized chart not flagged",
            !probe.delta_irregular,
            format!("sum stays at {}", probe.original),
        ),
        Err(e) => err_check(out, "ex12: regularized chart not flagged", &e),
    }
    // well-posed cross-section with C(2,0) ⊎ C(1,1)
    wellposed_one(out, "ex12-regularized", 1, &[mi(&[1, 1]), mi(&[1, 2])]);
}

pub(crate) fn cm_complex(out: &mut Vec<GoldenCheck>) {
    let entry = builtin("cm-complex").unwrap();
    let sys = entry.reduced.unwrap();
    match (sys.symbol(1), sys.involutivity()) {
        (Ok(r), Ok(v)) => check(
            out,
            "cm-complex: involutivity",
            r.indices == vec![0, 0, 2, 2]
                && r.characters == vec![2, 2, 0, 0]
                && v.weighted_sum == 14
                && v.prolonged_rank == 14
                && v.involutive,
            format!(
                "indices {:?} characters {:?} sum {} r2 {}",
                r.indices, r.characters, v.weighted_sum, v.prolonged_rank
            ),
        ),
        (Err(e), _) | (_, Err(e)) => err_check(out, "cm-complex: involutivity", &e),
    }
    // Rees decomposition shape of the hypersurface cross-section, pinned at
    // n0 = 7 (the freeness order for this class is only bounded below); exponents over
    // (w, z, zb).
    let n0 = 7usize;
    let mut generators = Vec::new();
    for j in 0..=n0 + 1 {
        generators.push(gen3(n0 + 1 - j, j, 0));
    }
    for j in 1..=n0 {
        generators.push(gen3(n0 - j, j, 1));
    }
    generators.push(gen3(n0 - 3, 2, 2));
    generators.push(gen3(n0 - 4, 3, 2));
    generators.push(gen3(n0 - 5, 3, 3));
    let universe = |c: &IndexedCoordinate| {
        let e = c.index.exponents(3);
        let (l, j, k) = (e[0], e[1], e[2]);
        k == 0
            || (j == 1 && k == 1 && l >= 1)
            || (j >= 2 && k == 1)
            || (j == 2 && k == 2)
            || (j == 3 && (k == 2 || k == 3))
    };
    let verdict = crate::multiindex::verify_rees(&generators, universe, 3, &[1], (n0 + 1, n0 + 3));
    check(
        out,
        "cm-complex: cross-section Rees shape",
        verdict.ok(),
        format!(
            "uncovered {} overlapped {} excess {}",
            verdict.uncovered.len(),
            verdict.overlapped.len(),
            verdict.excess.len()
        ),
    );
}

fn gen3(l: usize, j: usize, k: usize) -> IndexedCoordinate {
    let mut v = vec![1u8; l];
    v.extend(vec![2u8; j]);
    v.extend(vec![3u8; k]);
    IndexedCoordinate::new(1, MultiIndex::new(v))
}

pub(crate) fn n2(out: &mut Vec<GoldenCheck>) {
    let entry = builtin("n2").unwrap();
    let red = reduced_system(&entry, 2).unwrap();
    let nf = match build_nf_system(&red, 2) {
        Ok(nf) => nf,
        Err(e) => return err_check(out, "n2: normal form build", &e),
    };
    let point = entry.regular_point.clone();
    // published Psi^1: psi_y = 0, gamma_x = (v_x/u_x) psi_x, gamma_y = 0
    let psi1 = vertical_symbol(&nf, 1, &point).unwrap();
    let ux = point.u_value(1, &mi(&[1]));
    let vx = point.u_value(2, &mi(&[1]));
    let golden1: Vec<LinRow> = vec![
        [((1u8, mi(&[2])), rat_int(1))].into_iter().collect(),
        [
            ((2u8, mi(&[1])), rat_int(1)),
            ((1u8, mi(&[1])), -(vx / ux)),
        ]
        .into_iter()
        .collect(),
        [((2u8, mi(&[2])), rat_int(1))].into_iter().collect(),
    ];
    let golden_mat = rows_to_space(&golden1, &psi1.columns);
    check(
        out,
        "n2: vertical symbol order 1",
        psi1.equal(&golden_mat),
        "psi_y, gamma_x - (v_x/u_x) psi_x, gamma_y".into(),
    );
    // Upsilon^k = Psi^k for k = 1, 2
    match normalform::compatibility_check(&nf, 1, 1..=2, &point) {
        Ok(ok) => check(
            out,
            "n2: compatibility orders 1-2",
            ok,
            "Upsilon = Psi away from y = 0".into(),
        ),
        Err(e) => err_check(out, "n2: compatibility orders 1-2", &e),
    }
}

fn rows_to_space(rows: &[LinRow], columns: &[(u8, MultiIndex)]) -> VerticalSpace {
    let pos: HashMap<&(u8, MultiIndex), usize> =
        columns.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut data = Vec::new();
    for r in rows {
        let mut row = vec![Rat::zero(); columns.len()];
        for (k, v) in r {
            row[pos[k]] = v.clone();
        }
        data.push(row);
    }
    let mut matrix = crate::linalg::Mat::new(data, columns.len());
    matrix.rref();
    VerticalSpace {
        order: columns.first().map(|c| c.1.order()).unwrap_or(0),
        columns: columns.to_vec(),
        matrix,
    }
}

pub(crate) fn redfree(out: &mut Vec<GoldenCheck>) {
    // pg3 acts freely at order 1 where u_y != 0; pg1/pg2 have free reduced
    // actions; pg1 and pg2 are non-reducible, pg3 is reducible.
    for (id, expect_red) in [
        ("redfree-pg1", false),
        ("redfree-pg2", false),
        ("redfree-pg3", true),
    ] {
        let entry = builtin(id).unwrap();
        let g = PseudoGroupSpec::new(entry.determining.clone().unwrap());
        match reduced_system(&entry, 2) {
            Ok(red) => match reducibility_check(&g, &red, 1..=3) {
                Ok(rep) => check(
                    out,
                    &format!("{id}: reducibility"),
                    rep.reducibility_order.is_some() == expect_red,
                    format!("dims {:?}", rep.dims),
                ),
                Err(e) => err_check(out, &format!("{id}: reducibility"), &e),
            },
            Err(e) => err_check(out, &format!("{id}: reducibility"), &e),
        }
        // reduced-action freeness probe through the normal form linearization
        let entry = builtin(id).unwrap();
        if let Ok(red) = reduced_system(&entry, 2) {
            if let Ok(nf) = build_nf_system(&red, 2) {
                let free = normalform::freeness_order(&nf, 2, &entry.regular_point)
                    .unwrap_or(None);
                check(
                    out,
                    &format!("{id}: reduced action free"),
                    free.is_some(),
                    format!("freeness order {free:?}"),
                );
            }
        }
    }
}

/// Emits the full normal-form slot map of a target section (float view).
pub fn emit_slots_f64(
    id: &str,
    target: &Series,
    up_to: usize,
) -> Result<BTreeMap<IndexedCoordinate, f64>, String> {
    let entry = builtin(id).unwrap();
    let red = reduced_system(&entry, up_to).map_err(|e| e.to_string())?;
    let cs = entry.cross_section.clone().ok_or("no cross-section")?;
    let problem = FrameProblem {
        red: &red,
        cs: &cs,
        n_f: entry.n_f.unwrap_or(1),
        closed_forms: &entry.closed_forms,
    };
    let base = vec![Rat::zero(); red.system.ctx.p];
    let jet = crate::jetcalc::SectionJet::from_series(base, vec![target.clone()], up_to);
    let (_, series) = solve_frame(&problem, &jet.jets, up_to).map_err(|e| e.to_string())?;
    Ok(series
        .slots
        .into_iter()
        .map(|(c, (_, v))| (c, v.to_f64()))
        .collect())
}

/// End-to-end chain revalidation for the running example: integrate the
/// rectifying ODEs for the catalog target and compare the recomposed data
/// with the normal-form slots emitted by the exact pipeline.
pub fn running_chain_revalidation(
    nf_order: usize,
) -> Result<crate::chains::RevalidateReport, String> {
    let target = running_target_series(nf_order);
    let expected = emit_slots_f64("running", &target, nf_order)?;
    let u_yy0 = target.to_float().derivative(2).derivative(2).eval(&[0.0, 0.0]);
    let prob = crate::chains::ChainProblem {
        kind: crate::chains::ChainKind::JetTranslation {
            c: crate::series::SeriesF::zero(1, 4),
            d: crate::series::SeriesF::zero(1, 4),
        },
        target: target.to_float(),
        // the quadratic normalization pins the initial frame scale
        initial: vec![0.0, 1.0 / u_yy0.sqrt(), 0.0],
        span: 0.06,
        step: 1e-4,
    };
    let traj = crate::chains::integrate_chain(&prob).map_err(|e| e.to_string())?;
    crate::chains::revalidate(&prob, &traj, &expected).map_err(|e| e.to_string())
}

/// Scalar-chain revalidation for the reciprocal-scaling entry: the on-line
/// slot stays at the cross-section constant and the first-order invariant at
/// the base point matches the frame pipeline.
pub fn ex10_chain_revalidation() -> Result<crate::chains::RevalidateReport, String> {
    let up_to = 3;
    let mut target = running_target_series(up_to);
    target.set(mi(&[]), rat_int(2)); // positive section value
    let y0 = 0.0;
    let prob = crate::chains::ChainProblem {
        kind: crate::chains::ChainKind::ReciprocalScaling { y0 },
        target: target.to_float(),
        initial: vec![0.0],
        span: 0.4,
        step: 1e-3,
    };
    let traj = crate::chains::integrate_chain(&prob).map_err(|e| e.to_string())?;
    let mut report = crate::chains::revalidate(&prob, &traj, &BTreeMap::new())
        .map_err(|e| e.to_string())?;
    // base-point invariant u_y(0,0) = U_Y(X0, Y0) / U(X0, Y0) vs the frame
    let inv = emit_invariants("ex10", std::slice::from_ref(&target), up_to)?;
    let want = inv
        .get(&IndexedCoordinate::new(1, mi(&[2])))
        .ok_or("missing first-order invariant")?
        .to_f64();
    let ft = target.to_float();
    let got = ft.derivative(2).eval(&[0.0, y0]) / ft.eval(&[0.0, y0]);
    report
        .invariant_deviations
        .push((mi(&[2]), (got - want).abs()));
    Ok(report)
}

/// Character monotonicity and the prolonged-character relation over the
/// involutive catalog systems.
pub fn character_property_suite() -> Result<bool, String> {
    let mut systems: Vec<(String, DifferentialSystem, usize)> = Vec::new();
    let running = builtin("running").unwrap();
    systems.push((
        "running determining".into(),
        running.determining.clone().unwrap(),
        2,
    ));
    systems.push((
        "running reduced".into(),
        running_reduced_system(2).map_err(|e| e.to_string())?.system,
        2,
    ));
    let ex4 = builtin("ex4").unwrap();
    systems.push(("ex4 determining".into(), ex4.determining.clone().unwrap(), 2));
    systems.push((
        "ex4 reduced order 3".into(),
        reduced_system(&ex4, 3).map_err(|e| e.to_string())?.system,
        3,
    ));
    let cm = builtin("cm-complex").unwrap();
    systems.push(("cm-complex".into(), cm.reduced.clone().unwrap(), 1));
    for id in ["ex10", "ex12-regularized", "ex14", "ex15"] {
        let entry = builtin(id).unwrap();
        let order = entry.n_star.unwrap_or(1);
        let red = reduced_system(&entry, order).map_err(|e| e.to_string())?;
        let nf = build_nf_system(&red, order).map_err(|e| e.to_string())?;
        systems.push((format!("{id} normal form"), nf.system, order));
    }
    let mut ok = true;
    for (name, sys, n) in systems {
        let base = sys.symbol(n).map_err(|e| format!("{name}: {e}"))?;
        // non-increasing characters
        for w in base.characters.windows(2) {
            if w[0] < w[1] {
                ok = false;
            }
        }
        // alpha_{n+k}^{(i)} = sum_j C(k+j-i-1, k-1) alpha_n^{(j)}
        let mut prolonged = sys.clone();
        for k in 1..=3usize {
            prolonged = prolonged
                .prolong()
                .map_err(|e| format!("{name}: {e}"))?
                .0;
            let rep = prolonged
                .symbol(n + k)
                .map_err(|e| format!("{name}: {e}"))?;
            let p = base.characters.len();
            for i in 1..=p {
                let mut want = 0u64;
                for j in i..=p {
                    want += binom((k + j - i) as u64 - 1, k as u64 - 1)
                        * base.characters[j - 1];
                }
                if rep.characters[i - 1] != want {
                    ok = false;
                }
            }
        }
    }
    Ok(ok)
}

fn binom(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut b = 1u64;
    for i in 1..=k {
        b = b * (n - k + i) / i;
    }
    b
}

/// Mixed total derivatives commute on right-hand sides drawn from the
/// catalog, checked by evaluation at random rational points.
pub fn commutativity_property_suite(points: usize) -> Result<bool, String> {
    let mut ok = true;
    for id in ["running", "n2", "ex10", "ex14", "ex15"] {
        let entry = builtin(id).unwrap();
        let red = reduced_system(&entry, entry.n_star.unwrap_or(1))
            .map_err(|e| e.to_string())?;
        let sys = &red.system;
        let ctx = &sys.ctx;
        if ctx.p < 2 {
            continue;
        }
        let e = Expr::add(
            sys.equations
                .iter()
                .map(|eq| eq.rhs.clone())
                .collect::<Vec<_>>(),
        );
        let dxy = crate::jetcalc::total_derivative(
            &crate::jetcalc::total_derivative(&e, 1, ctx),
            2,
            ctx,
        );
        let dyx = crate::jetcalc::total_derivative(
            &crate::jetcalc::total_derivative(&e, 2, ctx),
            1,
            ctx,
        );
        let mut rng = SeededRng::new(0xc0ede + points as u64);
        for _ in 0..points {
            let mut vals: HashMap<Coord, Rat> = HashMap::new();
            for c in dxy.coords().into_iter().chain(dyx.coords()) {
                vals.entry(c).or_insert_with(|| rng.small_rat());
            }
            let a = dxy.eval(&|c: &Coord| vals.get(c).cloned());
            let b = dyx.eval(&|c: &Coord| vals.get(c).cloned());
            match (a, b) {
                (Ok(x), Ok(y)) => {
                    if x != y {
                        ok = false;
                    }
                }
                _ => continue,
            }
        }
    }
    Ok(ok)
}

/// Coefficient-growth diagnostic: per order `k`, the maximum of
/// `|u_J|^{1/k}` over the emitted normal-form slots.
pub fn running_growth_diagnostic(order: usize) -> Result<Vec<(usize, f64)>, String> {
    let target = running_target_series(order);
    let slots = emit_slots_f64("running", &target, order)?;
    let mut rows = Vec::new();
    for k in 1..=order {
        let mut m = 0.0f64;
        for (c, v) in &slots {
            if c.order() == k {
                m = m.max(v.abs().powf(1.0 / k as f64));
            }
        }
        rows.push((k, m));
    }
    Ok(rows)
}

pub(crate) fn group_smoke(out: &mut Vec<GoldenCheck>, seed: u64) {
    for id in [
        "running",
        "ex4",
        "ex5",
        "ex99",
        "xfxu",
        "redfree-pg1",
        "redfree-pg2",
        "redfree-pg3",
        "ex13",
    ] {
        let entry = builtin(id).unwrap();
        let det = entry.determining.unwrap();
        let det = match det.prolonged_to(det.order + 1) {
            Ok(d) => d,
            Err(e) => return err_check(out, &format!("{id}: group jet smoke"), &e),
        };
        let mut ok = true;
        for s in 0..3u64 {
            let Some(vals) = super::transforms::sample_group_jet(id, seed + 13 * s + 1, det.order)
            else {
                ok = false;
                break;
            };
            for eq in &det.equations {
                let expr = Expr::sub(Expr::coord(eq.lhs.clone()), eq.rhs.clone());
                match expr.eval(&|c: &Coord| vals.get(c).cloned()) {
                    Ok(v) => {
                        if !v.is_zero() {
                            ok = false;
                        }
                    }
                    Err(_) => ok = false,
                }
            }
        }
        check(
            out,
            &format!("{id}: group jet smoke"),
            ok,
            "determining equations vanish on sampled group jets".into(),
        );
    }
}

/// The running example's normal form determining system, built through the
/// reduction map; exposed for the cross-check tests.
pub fn running_normal_form_system(up_to: usize) -> Result<NormalFormSystem, SystemError> {
    running_nf(up_to)
}
