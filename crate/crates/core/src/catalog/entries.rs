//! Hand-transcribed systems for every catalog entry.
//!
//! The determining (or reduced) equations are entered in reduced Cartan
//! normal form exactly as published, at the orders shown there; higher
//! orders are produced by prolongation.

use super::CatalogEntry;
use crate::expr::{Coord, Expr};
use crate::jetcalc::{JetContext, JetPoint};
use crate::multiindex::{IndexedCoordinate, MultiIndex};
use crate::normalform::{CrossSection, IndexFamily};
use crate::scalar::rat_int;
use crate::system::{DifferentialSystem, SystemKind};

pub(crate) fn mi(entries: &[u8]) -> MultiIndex {
    MultiIndex::new(entries.to_vec())
}

/// Diffeomorphism jet `Z^a_B` as an expression.
pub(crate) fn z(dep: u8, idx: &[u8]) -> Expr {
    Expr::coord(Coord::diffeo(dep, mi(idx)))
}

/// Reduced jet `Z̄^a_J` as an expression.
pub(crate) fn zr(dep: u8, idx: &[u8]) -> Expr {
    Expr::coord(Coord::red(dep, mi(idx)))
}

/// Submanifold jet `u^α_J` as an expression.
pub(crate) fn u(dep: u8, idx: &[u8]) -> Expr {
    Expr::coord(Coord::sub(dep, mi(idx)))
}

pub(crate) fn base(i: u8) -> Expr {
    Expr::coord(Coord::base(i))
}

pub(crate) fn add(terms: Vec<Expr>) -> Expr {
    Expr::add(terms)
}

pub(crate) fn mul(factors: Vec<Expr>) -> Expr {
    Expr::mul(factors)
}

pub(crate) fn sub2(a: Expr, b: Expr) -> Expr {
    Expr::sub(a, b)
}

/// Builds the built-in entry for `id`.
pub fn build(id: &str) -> Option<CatalogEntry> {
    match id {
        "running" => Some(running()),
        "ex4" => Some(ex4()),
        "ex5" => Some(ex5()),
        "ex99" => Some(ex99()),
        "xfxu" => Some(xfxu()),
        "redfree-pg1" => Some(redfree_pg1()),
        "redfree-pg2" => Some(redfree_pg2()),
        "redfree-pg3" => Some(redfree_pg3()),
        "n2" => Some(n2()),
        "ex10" => Some(ex10()),
        "ex12-original" => Some(ex12_original()),
        "ex12-regularized" => Some(ex12_regularized()),
        "ex13" => Some(ex13()),
        "ex14" => Some(ex14()),
        "ex15" => Some(ex15()),
        "cm-complex" => Some(cm_complex()),
        _ => None,
    }
}

/// Running example: X = f(x), Y = f_x y + g(x), U = u + (f_xx y + g_x)/f_x
/// acting on surfaces u(x, y).
fn running() -> CatalogEntry {
    let ctx = JetContext::new(2, 1).with_names(&["x", "y"], &["u"]);
    // regular point: section with u_yy = 4 so the frame root is rational
    let mut point = JetPoint::generic(2, 1, 11);
    point.set(1, mi(&[2, 2]), rat_int(4));
    let mut det = DifferentialSystem::new(SystemKind::PseudoGroup, ctx, point.clone());
    // deps: X = 1, Y = 2, U = 3; source coordinates x, y, u = directions 1, 2, 3
    let x_ = 1u8;
    let y_ = 2u8;
    let u_ = 3u8;
    // order 1
    det.add_equation(Coord::diffeo(x_, mi(&[2])), Expr::zero()); // X_y = 0
    det.add_equation(Coord::diffeo(x_, mi(&[3])), Expr::zero()); // X_u = 0
    det.add_equation(
        Coord::diffeo(y_, mi(&[1])),
        mul(vec![sub2(z(u_, &[]), u(1, &[])), z(x_, &[1])]),
    ); // Y_x = (U - u) X_x
    det.add_equation(Coord::diffeo(y_, mi(&[2])), z(x_, &[1])); // Y_y = X_x
    det.add_equation(Coord::diffeo(y_, mi(&[3])), Expr::zero()); // Y_u = 0
    det.add_equation(Coord::diffeo(u_, mi(&[3])), Expr::one()); // U_u = 1
    // order 2
    det.add_equation(
        Coord::diffeo(x_, mi(&[1, 1])),
        mul(vec![z(u_, &[2]), z(x_, &[1])]),
    ); // X_xx = U_y X_x
    for idx in [&[1u8, 2][..], &[1, 3], &[2, 2], &[2, 3], &[3, 3]] {
        det.add_equation(Coord::diffeo(x_, mi(idx)), Expr::zero());
    }
    det.add_equation(
        Coord::diffeo(y_, mi(&[1, 1])),
        mul(vec![
            add(vec![
                z(u_, &[1]),
                mul(vec![sub2(z(u_, &[]), u(1, &[])), z(u_, &[2])]),
            ]),
            z(x_, &[1]),
        ]),
    ); // Y_xx = (U_x + (U - u) U_y) X_x
    det.add_equation(
        Coord::diffeo(y_, mi(&[1, 2])),
        mul(vec![z(u_, &[2]), z(x_, &[1])]),
    ); // Y_xy = U_y X_x
    for idx in [&[1u8, 3][..], &[2, 2], &[2, 3], &[3, 3]] {
        det.add_equation(Coord::diffeo(y_, mi(idx)), Expr::zero());
    }
    for idx in [&[1u8, 3][..], &[2, 2], &[2, 3], &[3, 3]] {
        det.add_equation(Coord::diffeo(u_, mi(idx)), Expr::zero());
    }
    // cross-section: x = y = 0, u_{x^k} = 0, u_{x^k y} = 0, u_yy = 1
    let mut explicit = std::collections::BTreeMap::new();
    explicit.insert(IndexedCoordinate::new(1, mi(&[2, 2])), rat_int(1));
    let cs = CrossSection {
        base: vec![rat_int(0), rat_int(0)],
        explicit,
        families: vec![
            (
                IndexFamily {
                    dep: 1,
                    fixed: mi(&[]),
                    tail_vars: vec![1],
                },
                rat_int(0),
            ),
            (
                IndexFamily {
                    dep: 1,
                    fixed: mi(&[2]),
                    tail_vars: vec![1],
                },
                rat_int(0),
            ),
        ],
    };
    // reduced right moving frame for orders <= 2, with the cross-section
    // constants set to zero and u_yy normalized to 1.  The second-order
    // values solve the quadratic normalizations: Ur_xy = -u u_yy and
    // Ur_xx = u^2 u_yy (cross-checked against a series-composition oracle;
    // the published display for the second one reads 0).
    let closed_forms = vec![
        (Coord::red(1, mi(&[])), Expr::zero()),
        (Coord::red(2, mi(&[])), Expr::zero()),
        (Coord::red(3, mi(&[])), Expr::zero()),
        (Coord::red(1, mi(&[1])), Expr::sqrt(u(1, &[2, 2]))),
        (Coord::red(3, mi(&[1])), Expr::zero()),
        (Coord::red(3, mi(&[2])), Expr::zero()),
        (
            Coord::red(3, mi(&[1, 1])),
            mul(vec![u(1, &[]), u(1, &[]), u(1, &[2, 2])]),
        ),
        (
            Coord::red(3, mi(&[1, 2])),
            Expr::neg(mul(vec![u(1, &[]), u(1, &[2, 2])])),
        ),
    ];
    CatalogEntry {
        id: "running",
        description: "fiber-preserving surface pseudo-group of the jet-space prolongation type",
        determining: Some(det),
        reduced: None,
        regular_point: point,
        cross_section: Some(cs),
        closed_forms,
        n_f: Some(2),
        n_star: Some(2),
        citations: vec![
            "indices (7,6,3), characters (2,0,0), r3 = 28, involutive at order 2",
            "reduced indices (4,3), characters (2,0), r3 = 10, involutive at order 2",
            "well-posed cross-section with Rees decomposition C(3,0) + C(2,1)",
            "right frame Xr_x = sqrt(u_yy), Ur_xy = -u u_yy; invariants I12, I03",
        ],
    }
}

/// X = x + a, Y = y + b, U = f(x) u + g(x) y + h(x).
fn ex4() -> CatalogEntry {
    let ctx = JetContext::new(2, 1).with_names(&["x", "y"], &["u"]);
    let mut point = JetPoint::generic(2, 1, 13);
    point.set(1, mi(&[2, 2]), rat_int(4));
    let mut det = DifferentialSystem::new(SystemKind::PseudoGroup, ctx, point.clone());
    let (x_, y_, u_) = (1u8, 2u8, 3u8);
    det.add_equation(Coord::diffeo(x_, mi(&[1])), Expr::one());
    det.add_equation(Coord::diffeo(x_, mi(&[2])), Expr::zero());
    det.add_equation(Coord::diffeo(x_, mi(&[3])), Expr::zero());
    det.add_equation(Coord::diffeo(y_, mi(&[1])), Expr::zero());
    det.add_equation(Coord::diffeo(y_, mi(&[2])), Expr::one());
    det.add_equation(Coord::diffeo(y_, mi(&[3])), Expr::zero());
    for idx in [
        &[1u8, 1][..],
        &[1, 2],
        &[1, 3],
        &[2, 2],
        &[2, 3],
        &[3, 3],
    ] {
        det.add_equation(Coord::diffeo(x_, mi(idx)), Expr::zero());
        det.add_equation(Coord::diffeo(y_, mi(idx)), Expr::zero());
    }
    for idx in [&[2u8, 2][..], &[2, 3], &[3, 3]] {
        det.add_equation(Coord::diffeo(u_, mi(idx)), Expr::zero());
    }
    CatalogEntry {
        id: "ex4",
        description: "translations in the base with a fiber-affine factor depending on x",
        determining: Some(det),
        reduced: None,
        regular_point: point,
        cross_section: None,
        closed_forms: Vec::new(),
        n_f: None,
        n_star: Some(2),
        citations: vec![
            "determining system involutive at order 2 with characters (3,0,0)",
            "reduced system fails the symbol test at order 2 (8 vs 9), involutive at 3",
        ],
    }
}

/// X = a x + b, U = c u + d x + e.
fn ex5() -> CatalogEntry {
    let ctx = JetContext::new(1, 1).with_names(&["x"], &["u"]);
    let mut point = JetPoint::generic(1, 1, 17);
    point.set(1, mi(&[1, 1]), rat_int(3));
    let mut det = DifferentialSystem::new(SystemKind::PseudoGroup, ctx, point.clone());
    det.add_equation(Coord::diffeo(1, mi(&[2])), Expr::zero()); // X_u = 0
    for idx in [&[1u8, 1][..], &[1, 2], &[2, 2]] {
        det.add_equation(Coord::diffeo(1, mi(idx)), Expr::zero());
        det.add_equation(Coord::diffeo(2, mi(idx)), Expr::zero());
    }
    CatalogEntry {
        id: "ex5",
        description: "five-parameter affine action on curves",
        determining: Some(det),
        reduced: None,
        regular_point: point,
        cross_section: None,
        closed_forms: Vec::new(),
        n_f: None,
        n_star: Some(2),
        citations: vec!["reducibility order 2: dims 4 then 5 = group dimension"],
    }
}

/// X = x + a, U = λ u + f(x).
fn ex99() -> CatalogEntry {
    let ctx = JetContext::new(1, 1).with_names(&["x"], &["u"]);
    let point = JetPoint::generic(1, 1, 19);
    let mut det = DifferentialSystem::new(SystemKind::PseudoGroup, ctx, point.clone());
    det.add_equation(Coord::diffeo(1, mi(&[1])), Expr::one()); // X_x = 1
    det.add_equation(Coord::diffeo(1, mi(&[2])), Expr::zero()); // X_u = 0
    for idx in [&[1u8, 1][..], &[1, 2], &[2, 2]] {
        det.add_equation(Coord::diffeo(1, mi(idx)), Expr::zero());
    }
    det.add_equation(Coord::diffeo(2, mi(&[1, 2])), Expr::zero()); // U_xu = 0
    det.add_equation(Coord::diffeo(2, mi(&[2, 2])), Expr::zero()); // U_uu = 0
    CatalogEntry {
        id: "ex99",
        description: "base translation with fiber scaling plus an arbitrary x-shift",
        determining: Some(det),
        reduced: None,
        regular_point: point,
        cross_section: None,
        closed_forms: Vec::new(),
        n_f: None,
        n_star: Some(2),
        citations: vec![
            "indices (3,2), characters (1,0) at order 2",
            "non-reducible: d^{(k)} = k+3 vs reduced k+2, yet the character equalities hold",
        ],
    }
}

/// X = x, U = f(x, u).
fn xfxu() -> CatalogEntry {
    let ctx = JetContext::new(1, 1).with_names(&["x"], &["u"]);
    let point = JetPoint::generic(1, 1, 23);
    let mut det = DifferentialSystem::new(SystemKind::PseudoGroup, ctx, point.clone());
    det.add_equation(Coord::diffeo(1, mi(&[])), base(1)); // X = x
    det.add_equation(Coord::diffeo(1, mi(&[1])), Expr::one());
    det.add_equation(Coord::diffeo(1, mi(&[2])), Expr::zero());
    CatalogEntry {
        id: "xfxu",
        description: "identity on the base with an arbitrary fiber map of two variables",
        determining: Some(det),
        reduced: None,
        regular_point: point,
        cross_section: None,
        closed_forms: Vec::new(),
        n_f: None,
        n_star: Some(1),
        citations: vec!["non-reducible: the transformations depend on a function of p+1 variables"],
    }
}

/// X = x + a, U = f(x, u) on curves.
fn redfree_pg1() -> CatalogEntry {
    let ctx = JetContext::new(1, 1).with_names(&["x"], &["u"]);
    let mut point = JetPoint::generic(1, 1, 29);
    point.set(1, mi(&[1]), rat_int(2));
    let mut det = DifferentialSystem::new(SystemKind::PseudoGroup, ctx, point.clone());
    det.add_equation(Coord::diffeo(1, mi(&[1])), Expr::one());
    det.add_equation(Coord::diffeo(1, mi(&[2])), Expr::zero());
    CatalogEntry {
        id: "redfree-pg1",
        description: "base translation with arbitrary fiber map; free reduced action only",
        determining: Some(det),
        reduced: None,
        regular_point: point,
        cross_section: None,
        closed_forms: Vec::new(),
        n_f: None,
        n_star: Some(1),
        citations: vec!["reduced action is free although the action itself is not"],
    }
}

/// X = x + a, U = f(x, u), V = v + b with p = 1, q = 2.
fn redfree_pg2() -> CatalogEntry {
    let ctx = JetContext::new(1, 2).with_names(&["x"], &["u", "v"]);
    let mut point = JetPoint::generic(1, 2, 31);
    point.set(1, mi(&[1]), rat_int(2));
    let mut det = DifferentialSystem::new(SystemKind::PseudoGroup, ctx, point.clone());
    // source coordinates: x = 1, u = 2, v = 3; deps X = 1, U = 2, V = 3
    det.add_equation(Coord::diffeo(1, mi(&[1])), Expr::one());
    det.add_equation(Coord::diffeo(1, mi(&[2])), Expr::zero());
    det.add_equation(Coord::diffeo(1, mi(&[3])), Expr::zero());
    det.add_equation(Coord::diffeo(2, mi(&[3])), Expr::zero()); // U_v = 0
    det.add_equation(Coord::diffeo(3, mi(&[1])), Expr::zero());
    det.add_equation(Coord::diffeo(3, mi(&[2])), Expr::zero());
    det.add_equation(Coord::diffeo(3, mi(&[3])), Expr::one());
    CatalogEntry {
        id: "redfree-pg2",
        description: "intransitive extension with a second translated fiber coordinate",
        determining: Some(det),
        reduced: None,
        regular_point: point,
        cross_section: None,
        closed_forms: Vec::new(),
        n_f: None,
        n_star: Some(1),
        citations: vec!["intransitive, non-free, with invariants v_{x^n}"],
    }
}

/// X = x + a, Y = y + b, U = f(x, u) with p = 2, q = 1.
fn redfree_pg3() -> CatalogEntry {
    let ctx = JetContext::new(2, 1).with_names(&["x", "y"], &["u"]);
    let mut point = JetPoint::generic(2, 1, 37);
    point.set(1, mi(&[2]), rat_int(2)); // u_y != 0
    let mut det = DifferentialSystem::new(SystemKind::PseudoGroup, ctx, point.clone());
    // source: x = 1, y = 2, u = 3; deps X = 1, Y = 2, U = 3
    det.add_equation(Coord::diffeo(1, mi(&[1])), Expr::one());
    det.add_equation(Coord::diffeo(1, mi(&[2])), Expr::zero());
    det.add_equation(Coord::diffeo(1, mi(&[3])), Expr::zero());
    det.add_equation(Coord::diffeo(2, mi(&[1])), Expr::zero());
    det.add_equation(Coord::diffeo(2, mi(&[2])), Expr::one());
    det.add_equation(Coord::diffeo(2, mi(&[3])), Expr::zero());
    det.add_equation(Coord::diffeo(3, mi(&[2])), Expr::zero()); // U_y = 0
    CatalogEntry {
        id: "redfree-pg3",
        description: "planar translations with an arbitrary (x,u) fiber map; free where u_y is nonzero",
        determining: Some(det),
        reduced: None,
        regular_point: point,
        cross_section: None,
        closed_forms: Vec::new(),
        n_f: Some(1),
        n_star: Some(1),
        citations: vec!["acts freely and transitively where u_y is nonzero"],
    }
}

/// X = f(x), Y = λ y, U = u + b, V = v + c with p = q = 2, away from y = 0.
fn n2() -> CatalogEntry {
    let ctx = JetContext::new(2, 2).with_names(&["x", "y"], &["u", "v"]);
    let mut point = JetPoint::generic(2, 2, 41)
        .with_base(vec![rat_int(0), rat_int(1)]);
    point.set(1, mi(&[1]), rat_int(2)); // u_x != 0
    let mut red = DifferentialSystem::new(SystemKind::Reduced, ctx, point.clone());
    // reduced deps: Xr = 1, Yr = 2, Ur = 3, Vr = 4
    red.add_equation(Coord::red(1, mi(&[2])), Expr::zero()); // Xr_y = 0
    red.add_equation(Coord::red(2, mi(&[1])), Expr::zero()); // Yr_x = 0
    red.add_equation(Coord::red(2, mi(&[2])), Expr::div(zr(2, &[]), base(2))); // Yr_y = Yr / y
    red.add_equation(Coord::red(3, mi(&[1])), u(1, &[1])); // Ur_x = u_x
    red.add_equation(Coord::red(3, mi(&[2])), u(1, &[2]));
    red.add_equation(Coord::red(4, mi(&[1])), u(2, &[1]));
    red.add_equation(Coord::red(4, mi(&[2])), u(2, &[2]));
    CatalogEntry {
        id: "n2",
        description: "independent reparametrization of x, scaling of y, fiber translations",
        determining: None,
        reduced: Some(red),
        regular_point: point,
        cross_section: None,
        closed_forms: Vec::new(),
        n_f: Some(1),
        n_star: Some(1),
        citations: vec!["vertical and annihilator symbols agree from order one on"],
    }
}

/// X = f(x), Y = y + b, U = u / f_x on surfaces with u != 0.
fn ex10() -> CatalogEntry {
    let ctx = JetContext::new(2, 1).with_names(&["x", "y"], &["u"]);
    let mut point = JetPoint::generic(2, 1, 43);
    point.set(1, mi(&[]), rat_int(2)); // u != 0
    let mut red = DifferentialSystem::new(SystemKind::Reduced, ctx, point.clone());
    red.add_equation(Coord::red(1, mi(&[2])), Expr::zero()); // Xr_y = 0
    red.add_equation(Coord::red(2, mi(&[1])), Expr::zero()); // Yr_x = 0
    red.add_equation(Coord::red(2, mi(&[2])), Expr::one()); // Yr_y = 1
    red.add_equation(
        Coord::red(1, mi(&[1])),
        Expr::div(u(1, &[]), zr(3, &[])),
    ); // Xr_x = u / Ur
    red.add_equation(
        Coord::red(3, mi(&[2])),
        Expr::div(mul(vec![u(1, &[2]), zr(3, &[])]), u(1, &[])),
    ); // Ur_y = (u_y / u) Ur
    let mut explicit = std::collections::BTreeMap::new();
    explicit.insert(IndexedCoordinate::new(1, mi(&[])), rat_int(1)); // u = 1
    let cs = CrossSection {
        base: vec![rat_int(0), rat_int(0)],
        explicit,
        families: vec![(
            IndexFamily {
                dep: 1,
                fixed: mi(&[1]),
                tail_vars: vec![1],
            },
            rat_int(0),
        )],
    };
    let closed_forms = vec![
        (Coord::red(1, mi(&[])), Expr::zero()),
        (Coord::red(2, mi(&[])), Expr::zero()),
        (Coord::red(3, mi(&[])), Expr::one()),
        (Coord::red(3, mi(&[1])), Expr::zero()),
    ];
    CatalogEntry {
        id: "ex10",
        description: "base reparametrization with reciprocal fiber scaling; the scalar chain",
        determining: None,
        reduced: Some(red),
        regular_point: point,
        cross_section: Some(cs),
        closed_forms,
        n_f: Some(1),
        n_star: Some(1),
        citations: vec![
            "normal form system involutive at order one with indices (2,3)",
            "chain equation Xr_x = 1 / U(Xr, Y0)",
        ],
    }
}

/// X = f(x), Y = g(y), U = u + c in the raw coordinates.
fn ex12_original() -> CatalogEntry {
    let ctx = JetContext::new(2, 1).with_names(&["x", "y"], &["u"]);
    let point = JetPoint::generic(2, 1, 47);
    let mut red = DifferentialSystem::new(SystemKind::Reduced, ctx, point.clone());
    red.add_equation(Coord::red(1, mi(&[2])), Expr::zero()); // Xr_y = 0
    red.add_equation(Coord::red(2, mi(&[1])), Expr::zero()); // Yr_x = 0
    red.add_equation(Coord::red(3, mi(&[1])), u(1, &[1])); // Ur_x = u_x
    red.add_equation(Coord::red(3, mi(&[2])), u(1, &[2])); // Ur_y = u_y
    CatalogEntry {
        id: "ex12-original",
        description: "independent reparametrizations of both base coordinates, raw chart",
        determining: None,
        reduced: Some(red),
        regular_point: point,
        cross_section: None,
        closed_forms: Vec::new(),
        n_f: None,
        n_star: None,
        citations: vec!["not delta-regular: the weighted index sum increases under rotation"],
    }
}

/// X = f(x+y) + g(x-y), Y = f(x+y) - g(x-y), U = u + c: the regularized chart.
fn ex12_regularized() -> CatalogEntry {
    let ctx = JetContext::new(2, 1).with_names(&["x", "y"], &["u"]);
    let mut point = JetPoint::generic(2, 1, 53);
    point.set(1, mi(&[1]), rat_int(1)); // c(x) = x on the cross-section
    let mut red = DifferentialSystem::new(SystemKind::Reduced, ctx, point.clone());
    // Yr_x = Xr_y, Yr_y = Xr_x, Ur = u-jets
    red.add_equation(Coord::red(3, mi(&[2])), u(1, &[2])); // Ur_y = u_y
    red.add_equation(Coord::red(2, mi(&[2])), zr(1, &[1])); // Yr_y = Xr_x
    red.add_equation(Coord::red(1, mi(&[2])), zr(2, &[1])); // Xr_y = Yr_x
    red.add_equation(Coord::red(3, mi(&[1])), u(1, &[1])); // Ur_x = u_x
    let mut explicit = std::collections::BTreeMap::new();
    explicit.insert(IndexedCoordinate::new(1, mi(&[1])), rat_int(1)); // u_x = 1
    let cs = CrossSection {
        base: vec![rat_int(0), rat_int(0)],
        explicit,
        families: vec![
            (
                IndexFamily {
                    dep: 1,
                    fixed: mi(&[]),
                    tail_vars: vec![1],
                },
                rat_int(0),
            ),
            (
                IndexFamily {
                    dep: 1,
                    fixed: mi(&[2]),
                    tail_vars: vec![1],
                },
                rat_int(0),
            ),
        ],
    };
    CatalogEntry {
        id: "ex12-regularized",
        description: "light-cone recombination of two base reparametrizations",
        determining: None,
        reduced: Some(red),
        regular_point: point,
        cross_section: Some(cs),
        closed_forms: Vec::new(),
        n_f: Some(1),
        n_star: Some(2),
        citations: vec![
            "normal form system involutive at order 2 with indices (4,3), sum 10 = r3",
            "well-posed cross-section with Rees decomposition C(2,0) + C(1,1)",
        ],
    }
}

/// X = x + a, Y = y + b, U = f(u).
fn ex13() -> CatalogEntry {
    let ctx = JetContext::new(2, 1).with_names(&["x", "y"], &["u"]);
    let mut point = JetPoint::generic(2, 1, 59);
    point.set(1, mi(&[1]), rat_int(2)); // u_x != 0
    let mut det = DifferentialSystem::new(SystemKind::PseudoGroup, ctx, point.clone());
    let (x_, y_, u_) = (1u8, 2u8, 3u8);
    det.add_equation(Coord::diffeo(x_, mi(&[1])), Expr::one());
    det.add_equation(Coord::diffeo(x_, mi(&[2])), Expr::zero());
    det.add_equation(Coord::diffeo(x_, mi(&[3])), Expr::zero());
    det.add_equation(Coord::diffeo(y_, mi(&[1])), Expr::zero());
    det.add_equation(Coord::diffeo(y_, mi(&[2])), Expr::one());
    det.add_equation(Coord::diffeo(y_, mi(&[3])), Expr::zero());
    det.add_equation(Coord::diffeo(u_, mi(&[1])), Expr::zero()); // U_x = 0
    det.add_equation(Coord::diffeo(u_, mi(&[2])), Expr::zero()); // U_y = 0
    let mut explicit = std::collections::BTreeMap::new();
    explicit.insert(IndexedCoordinate::new(1, mi(&[1])), rat_int(1)); // u_x = 1
    let cs = CrossSection {
        base: vec![rat_int(0), rat_int(0)],
        explicit,
        families: vec![(
            IndexFamily {
                dep: 1,
                fixed: mi(&[]),
                tail_vars: vec![1],
            },
            rat_int(0),
        )],
    };
    let closed_forms = vec![
        (Coord::red(1, mi(&[])), Expr::zero()),
        (Coord::red(2, mi(&[])), Expr::zero()),
        (Coord::red(3, mi(&[])), Expr::zero()),
        (Coord::red(3, mi(&[1])), Expr::one()),
    ];
    CatalogEntry {
        id: "ex13",
        description: "base translations with an arbitrary fiber reparametrization",
        determining: Some(det),
        reduced: None,
        regular_point: point,
        cross_section: Some(cs),
        closed_forms,
        n_f: Some(1),
        n_star: Some(1),
        citations: vec![
            "normal form equations at order one solve u_y = u_x U_Y / U_X",
            "well-posed cross-section with Rees decomposition C(2,0)",
        ],
    }
}

/// X = x + a, Y = g(x, y), Z = z + b, U = u on 3-dimensional submanifolds.
fn ex14() -> CatalogEntry {
    let ctx = JetContext::new(3, 1).with_names(&["x", "y", "z"], &["u"]);
    let mut point = JetPoint::generic(3, 1, 61);
    point.set(1, mi(&[2]), rat_int(2)); // u_y != 0 (U_Y != 0 on the target)
    let mut red = DifferentialSystem::new(SystemKind::Reduced, ctx, point.clone());
    // deps: Xr = 1, Yr = 2, Zr = 3, Ur = 4
    red.add_equation(Coord::red(4, mi(&[])), u(1, &[])); // Ur = u
    red.add_equation(Coord::red(1, mi(&[1])), Expr::one());
    red.add_equation(Coord::red(1, mi(&[2])), Expr::zero());
    red.add_equation(Coord::red(1, mi(&[3])), Expr::zero());
    red.add_equation(Coord::red(2, mi(&[3])), Expr::zero()); // Yr_z = 0
    red.add_equation(Coord::red(3, mi(&[1])), Expr::zero());
    red.add_equation(Coord::red(3, mi(&[2])), Expr::zero());
    red.add_equation(Coord::red(3, mi(&[3])), Expr::one());
    red.add_equation(Coord::red(4, mi(&[1])), u(1, &[1]));
    red.add_equation(Coord::red(4, mi(&[2])), u(1, &[2]));
    red.add_equation(Coord::red(4, mi(&[3])), u(1, &[3]));
    // cross-section: x = y = z = 0, u_{x^{k+1}} = 0, u_{x^j y^{k+1}} = 0
    let cs = CrossSection {
        base: vec![rat_int(0), rat_int(0), rat_int(0)],
        explicit: std::collections::BTreeMap::new(),
        families: vec![
            (
                IndexFamily {
                    dep: 1,
                    fixed: mi(&[1]),
                    tail_vars: vec![1],
                },
                rat_int(0),
            ),
            (
                IndexFamily {
                    dep: 1,
                    fixed: mi(&[2]),
                    tail_vars: vec![1, 2],
                },
                rat_int(0),
            ),
        ],
    };
    CatalogEntry {
        id: "ex14",
        description: "translations in x and z with an arbitrary reparametrization of y",
        determining: None,
        reduced: Some(red),
        regular_point: point,
        cross_section: Some(cs),
        closed_forms: Vec::new(),
        n_f: Some(1),
        n_star: Some(1),
        citations: vec![
            "normal form indices (3,3,4), characters (1,1,0), involutive at order one",
            "Rees decomposition C(2,0) + C(1,1) + C(0,2)",
        ],
    }
}

/// X = x + a, Y = y + b, Z = z + f(x,y), U = u + g(x,y) with f, g conjugate
/// harmonic.
fn ex15() -> CatalogEntry {
    let ctx = JetContext::new(3, 1).with_names(&["x", "y", "z"], &["u"]);
    let mut point = JetPoint::generic(3, 1, 67);
    point.set(1, mi(&[3]), rat_int(2)); // u_z generic
    let mut red = DifferentialSystem::new(SystemKind::Reduced, ctx, point.clone());
    // deps: Xr = 1, Yr = 2, Zr = 3, Ur = 4
    red.add_equation(Coord::red(1, mi(&[1])), Expr::one());
    red.add_equation(Coord::red(1, mi(&[2])), Expr::zero());
    red.add_equation(Coord::red(1, mi(&[3])), Expr::zero());
    red.add_equation(Coord::red(2, mi(&[1])), Expr::zero());
    red.add_equation(Coord::red(2, mi(&[2])), Expr::one());
    red.add_equation(Coord::red(2, mi(&[3])), Expr::zero());
    red.add_equation(Coord::red(3, mi(&[3])), Expr::one()); // Zr_z = 1
    red.add_equation(
        Coord::red(4, mi(&[1])),
        sub2(u(1, &[1]), zr(3, &[2])),
    ); // Ur_x = u_x - Zr_y
    red.add_equation(
        Coord::red(4, mi(&[2])),
        add(vec![u(1, &[2]), zr(3, &[1])]),
    ); // Ur_y = u_y + Zr_x
    red.add_equation(Coord::red(4, mi(&[3])), u(1, &[3])); // Ur_z = u_z
    // complete to order 2, then impose the conjugate-harmonic constraint
    // Zr_yy + Zr_xx = 0, which is not a prolongation consequence
    let mut red = red.prolonged_to(2).expect("first-order system prolongs");
    red.absorb(vec![Expr::add(vec![
        Expr::coord(Coord::red(3, mi(&[2, 2]))),
        zr(3, &[1, 1]),
    ])])
    .expect("harmonic relation solves");
    let cs = CrossSection {
        base: vec![rat_int(0), rat_int(0), rat_int(0)],
        explicit: std::collections::BTreeMap::new(),
        families: vec![
            (
                IndexFamily {
                    dep: 1,
                    fixed: mi(&[]),
                    tail_vars: vec![1],
                },
                rat_int(0),
            ),
            (
                IndexFamily {
                    dep: 1,
                    fixed: mi(&[2]),
                    tail_vars: vec![1],
                },
                rat_int(0),
            ),
        ],
    };
    CatalogEntry {
        id: "ex15",
        description: "translations plus a conjugate-harmonic shear of z and u",
        determining: None,
        reduced: Some(red),
        regular_point: point,
        cross_section: Some(cs),
        closed_forms: Vec::new(),
        n_f: Some(1),
        n_star: Some(2),
        citations: vec![
            "normal form indices (10,8,4), characters (2,0,0), sum 38 = r3",
            "Rees decomposition C(2,0,0) + C(1,1,0)",
        ],
    }
}

/// Holomorphic pseudo-group of C^2 in complex jet coordinates, with the
/// ordering w < z < zbar < wbar.
fn cm_complex() -> CatalogEntry {
    let ctx = JetContext::new(4, 2).with_names(&["z", "w", "zb", "wb"], &["Z", "W"]);
    let point = JetPoint::generic(4, 2, 71);
    let order = crate::multiindex::ClassTermOrder::with_variable_order(&[2, 1, 3, 4], 2);
    let mut sys =
        DifferentialSystem::new(SystemKind::Plain, ctx, point.clone()).with_term_order(order);
    // Z_zb = Z_wb = W_zb = W_wb = 0
    sys.add_equation(Coord::sub(1, mi(&[3])), Expr::zero());
    sys.add_equation(Coord::sub(1, mi(&[4])), Expr::zero());
    sys.add_equation(Coord::sub(2, mi(&[3])), Expr::zero());
    sys.add_equation(Coord::sub(2, mi(&[4])), Expr::zero());
    CatalogEntry {
        id: "cm-complex",
        description: "holomorphy constraints for hypersurface normal forms, complex chart",
        determining: None,
        reduced: Some(sys),
        regular_point: point,
        cross_section: None,
        closed_forms: Vec::new(),
        n_f: None,
        n_star: Some(1),
        citations: vec![
            "indices (0,0,2,2), characters (2,2,0,0), weighted sum 14 = r2",
            "cross-section indices admit a Rees decomposition above the order of freeness",
        ],
    }
}

/// Helpers shared with the golden checks.
pub(crate) mod dsl {
    pub(crate) use super::{add, mi, mul, sub2, u, zr};
    use crate::expr::{Coord, Expr};

    /// Target jet `Û^α_J` as an expression.
    pub fn t(dep: u8, idx: &[u8]) -> Expr {
        Expr::coord(Coord::target(dep, super::mi(idx)))
    }
}
