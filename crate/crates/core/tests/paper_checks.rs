//! Cross-checks of the operator pipeline against independent oracles:
//! series composition for the prolonged action, finite differences for
//! formal derivatives, and the published closed forms for the running
//! example's operators and initial-condition schema.

use std::collections::{BTreeMap, HashMap};

use ijets_core::catalog;
use ijets_core::jetcalc::{prolong_action, JetContext, JetPoint};
use ijets_core::multiindex::MultiIndex;
use ijets_core::normalform::cross_section_schema;
use ijets_core::scalar::{rat_int, Rat, Scalar, SeededRng};
use ijets_core::series::{reversion, Series};
use ijets_core::system::SchemaEntry;
use ijets_core::{Coord, Expr, IndexedCoordinate};

fn mi(e: &[u8]) -> MultiIndex {
    MultiIndex::new(e.to_vec())
}

/// The prolonged action of the running example agrees with transforming a
/// concrete section by a concrete group element via pure series algebra.
#[test]
fn prolonged_action_matches_series_composition() {
    let n = 6usize;
    let mut rng = SeededRng::new(99);
    let mut s = Series::zero(2, n);
    for k in 0..=n {
        for j in MultiIndex::all_of_order(2, k) {
            s.set(j, rng.small_rat_or_zero());
        }
    }
    let mut f = Series::zero(1, n + 2);
    f.set(mi(&[1]), rat_int(2));
    for k in 2..=n + 2 {
        f.set(MultiIndex::repeated(1, k), rng.small_rat_or_zero());
    }
    let mut g = Series::zero(1, n + 2);
    for k in 1..=n + 2 {
        g.set(MultiIndex::repeated(1, k), rng.small_rat_or_zero());
    }
    // transformed graph: X = f(x), Y = f_x y + g, U = s + (f_xx y + g_x)/f_x
    let lift = |sr: &Series, var: u8| -> Series {
        let mut out = Series::zero(2, n);
        for (j, c) in sr.terms() {
            out.set(MultiIndex::repeated(var, j.order()), c.clone());
        }
        out
    };
    let trunc1 = |sr: &Series| -> Series {
        let mut out = Series::zero(1, n);
        for (j, c) in sr.terms() {
            out.set(j.clone(), c.clone());
        }
        out
    };
    let x_of = lift(&reversion(&f).unwrap(), 1);
    let f1 = f.derivative(1);
    let f2 = f1.derivative(1);
    let g1 = g.derivative(1);
    let comp = |sr: &Series| trunc1(sr).compose(std::slice::from_ref(&x_of)).unwrap();
    let fx = comp(&f1);
    let fxx = comp(&f2);
    let gx = comp(&g1);
    let g_at = comp(&g);
    let fx_inv = fx.invert().unwrap();
    let y_of = Series::variable(2, n, 2).sub(&g_at).unwrap().mul(&fx_inv).unwrap();
    let transformed = s
        .compose(&[x_of.clone(), y_of.clone()])
        .unwrap()
        .add(&fxx.mul(&y_of).unwrap().add(&gx).unwrap().mul(&fx_inv).unwrap())
        .unwrap();
    // prolonged action evaluated on the same element's reduced jets
    let entry = catalog::builtin("running").unwrap();
    let red = catalog::reduced_system(&entry, 4).unwrap();
    let sys = red.system.prolonged_to(4).unwrap();
    let pa = prolong_action(&sys, 4);
    let ur = s
        .add(
            &lift(&f2, 1)
                .mul(&Series::variable(2, n, 2))
                .unwrap()
                .add(&lift(&g1, 1))
                .unwrap()
                .mul(&lift(&f1, 1).invert().unwrap())
                .unwrap(),
        )
        .unwrap();
    let xr = lift(&f, 1);
    let mut vals: BTreeMap<Coord, Rat> = BTreeMap::new();
    for k in 0..=4usize {
        for j in MultiIndex::all_of_order(2, k) {
            let fact = Rat::from_integer(j.factorial().into());
            vals.insert(Coord::sub(1, j.clone()), s.coeff(&j) * fact.clone());
            vals.insert(Coord::red(3, j.clone()), ur.coeff(&j) * fact.clone());
            vals.insert(Coord::red(1, j.clone()), xr.coeff(&j) * fact);
        }
    }
    let lookup = |c: &Coord| vals.get(c).cloned();
    for k in 0..=4usize {
        for j in MultiIndex::all_of_order(2, k) {
            let want = transformed.coeff(&j) * Rat::from_integer(j.factorial().into());
            let got = pa[&IndexedCoordinate::new(1, j.clone())].eval(&lookup).unwrap();
            assert_eq!(got, want, "target jet at {j}");
        }
    }
}

/// Published second and third order prolonged-action formulas.
#[test]
fn prolonged_action_closed_forms() {
    let entry = catalog::builtin("running").unwrap();
    let red = catalog::reduced_system(&entry, 3).unwrap();
    let sys = red.system.prolonged_to(3).unwrap();
    let pa = prolong_action(&sys, 3);
    let xr_x = Expr::coord(Coord::red(1, mi(&[1])));
    // U_YY = u_yy / Xr_x^2 and U_YYY = u_yyy / Xr_x^3
    let want_yy = Expr::div(
        Expr::coord(Coord::sub(1, mi(&[2, 2]))),
        Expr::pow(xr_x.clone(), 2),
    );
    let want_yyy = Expr::div(
        Expr::coord(Coord::sub(1, mi(&[2, 2, 2]))),
        Expr::pow(xr_x.clone(), 3),
    );
    // U_Y = Ur_y / Xr_x and U_X = (Ur_x + (u - Ur) Ur_y) / Xr_x
    let want_y = Expr::div(Expr::coord(Coord::red(3, mi(&[2]))), xr_x.clone());
    let want_x = Expr::div(
        Expr::add(vec![
            Expr::coord(Coord::red(3, mi(&[1]))),
            Expr::mul(vec![
                Expr::sub(
                    Expr::coord(Coord::sub(1, mi(&[]))),
                    Expr::coord(Coord::red(3, mi(&[]))),
                ),
                Expr::coord(Coord::red(3, mi(&[2]))),
            ]),
        ]),
        xr_x,
    );
    let pairs = [
        (mi(&[2, 2]), want_yy),
        (mi(&[2, 2, 2]), want_yyy),
        (mi(&[2]), want_y),
        (mi(&[1]), want_x),
    ];
    let mut rng = SeededRng::new(5);
    for (idx, want) in pairs {
        let got = &pa[&IndexedCoordinate::new(1, idx.clone())];
        for _ in 0..5 {
            let mut vals: HashMap<Coord, Rat> = HashMap::new();
            for c in got.coords().into_iter().chain(want.coords()) {
                vals.entry(c).or_insert_with(|| rng.small_rat());
            }
            let a = got.eval(&|c: &Coord| vals.get(c).cloned());
            let b = want.eval(&|c: &Coord| vals.get(c).cloned());
            match (a, b) {
                (Ok(x), Ok(y)) => assert_eq!(x, y, "action at {idx}"),
                _ => continue,
            }
        }
    }
}

/// Simplified initial-condition schema for the running example: two base
/// constants, two one-variable functions, one point constraint.
#[test]
fn running_example_schema() {
    let entry = catalog::builtin("running").unwrap();
    let cs = entry.cross_section.unwrap();
    let schema = cross_section_schema(&cs, 2, 1, 6);
    assert_eq!(
        schema.entries,
        vec![
            SchemaEntry::BasePoint { index: 1 },
            SchemaEntry::BasePoint { index: 2 },
            SchemaEntry::Function {
                dep: 1,
                derivative: mi(&[]),
                args: 1
            },
            SchemaEntry::Function {
                dep: 1,
                derivative: mi(&[2]),
                args: 1
            },
            SchemaEntry::Point {
                dep: 1,
                derivative: mi(&[2, 2])
            },
        ],
        "{:?}",
        schema.render(&|_| "u".into(), 2)
    );
}

/// The three-variable entry prescribes its second function on a plane.
#[test]
fn plane_function_schema() {
    let entry = catalog::builtin("ex14").unwrap();
    let cs = entry.cross_section.unwrap();
    let schema = cross_section_schema(&cs, 3, 1, 5);
    assert!(schema.entries.contains(&SchemaEntry::Function {
        dep: 1,
        derivative: mi(&[2]),
        args: 2
    }));
    assert!(schema.entries.contains(&SchemaEntry::Function {
        dep: 1,
        derivative: mi(&[1]),
        args: 1
    }));
}

/// The first-order representation of the running example's normal form
/// system keeps the Cartan characters (2, 0).
#[test]
fn normal_form_first_order_reduction() {
    let nf = catalog::running_normal_form_system(3).unwrap();
    let original = nf.system.symbol(3).unwrap();
    let first = nf.system.first_order_reduction();
    let reduced = first.symbol(1).unwrap();
    assert_eq!(original.characters, vec![2, 0]);
    assert_eq!(reduced.characters, vec![2, 0]);
}

/// Formal partials agree with central finite differences of the evaluation.
#[test]
fn partial_matches_finite_differences() {
    let u = |idx: &[u8]| Expr::coord(Coord::sub(1, mi(idx)));
    let e = Expr::div(
        Expr::add(vec![
            Expr::mul(vec![u(&[1]), u(&[2]), u(&[2])]),
            Expr::sqrt(u(&[2, 2])),
        ]),
        u(&[]),
    );
    let mut rng = SeededRng::new(31);
    for _ in 0..5 {
        let mut vals: HashMap<Coord, f64> = HashMap::new();
        for c in e.coords() {
            vals.insert(c, rng.small_rat().to_f64().abs() + 0.5);
        }
        for wrt in e.coords() {
            let d = e.partial(&wrt);
            let exact = d.eval(&|c: &Coord| vals.get(c).copied()).unwrap();
            let h = 1e-6;
            let mut up = vals.clone();
            let mut dn = vals.clone();
            *up.get_mut(&wrt).unwrap() += h;
            *dn.get_mut(&wrt).unwrap() -= h;
            let fd = (e.eval(&|c: &Coord| up.get(c).copied()).unwrap()
                - e.eval(&|c: &Coord| dn.get(c).copied()).unwrap())
                / (2.0 * h);
            let denom = exact.abs().max(1.0);
            assert!(
                ((exact - fd) / denom).abs() < 1e-6,
                "{wrt}: {exact} vs {fd}"
            );
        }
    }
}

/// Unified total derivatives reduce to the published lifted formulas, and
/// the identity Jacobian case collapses the implicit operator to the plain
/// total derivative.
#[test]
fn implicit_operator_identity_case() {
    let ctx = JetContext::new(2, 1);
    // identity reduced jets: Jacobian = I, so D_X e = D_x e
    let mut sys = ijets_core::DifferentialSystem::new(
        ijets_core::SystemKind::Reduced,
        ctx.clone(),
        JetPoint::generic(2, 1, 3),
    );
    sys.add_equation(Coord::red(1, mi(&[1])), Expr::one());
    sys.add_equation(Coord::red(1, mi(&[2])), Expr::zero());
    sys.add_equation(Coord::red(2, mi(&[1])), Expr::zero());
    sys.add_equation(Coord::red(2, mi(&[2])), Expr::one());
    let ops = ijets_core::jetcalc::ImplicitOperators::from_reduced_system(&sys);
    let e = Expr::mul(vec![
        Expr::coord(Coord::sub(1, mi(&[1]))),
        Expr::coord(Coord::sub(1, mi(&[2]))),
    ]);
    let implicit = ops.apply(&e, 1, &sys);
    let plain = ijets_core::jetcalc::total_derivative(&e, 1, &ctx);
    let mut rng = SeededRng::new(8);
    for _ in 0..5 {
        let mut vals: HashMap<Coord, Rat> = HashMap::new();
        for c in implicit.coords().into_iter().chain(plain.coords()) {
            vals.entry(c).or_insert_with(|| rng.small_rat());
        }
        assert_eq!(
            implicit.eval(&|c: &Coord| vals.get(c).cloned()).unwrap(),
            plain.eval(&|c: &Coord| vals.get(c).cloned()).unwrap()
        );
    }
}

/// Evaluating a total derivative on the jet of a genuine series equals the
/// derivative of the composed series, computed entirely by series
/// arithmetic.
#[test]
fn total_derivative_matches_series_calculus() {
    let n = 6usize;
    let mut rng = SeededRng::new(77);
    let mut s = Series::zero(2, n);
    for k in 0..=n {
        for j in MultiIndex::all_of_order(2, k) {
            s.set(j, rng.small_rat_or_zero());
        }
    }
    // e = u_x * u_yy + u * u_y
    let u = |idx: &[u8]| Expr::coord(Coord::sub(1, mi(idx)));
    let e = Expr::add(vec![
        Expr::mul(vec![u(&[1]), u(&[2, 2])]),
        Expr::mul(vec![u(&[]), u(&[2])]),
    ]);
    // composed function as a series: F = s_x s_yy + s s_y
    let s_x = s.derivative(1);
    let s_y = s.derivative(2);
    let s_yy = s_y.derivative(2);
    let composed = s_x
        .mul(&s_yy)
        .unwrap()
        .add(&s.mul(&s_y).unwrap())
        .unwrap();
    let ctx = JetContext::new(2, 1);
    for dir in 1..=2u8 {
        let d = ijets_core::jetcalc::total_derivative(&e, dir, &ctx);
        // left: evaluate the operator result on the jet of s at the origin
        let jet = ijets_core::SectionJet::from_series(
            vec![Rat::from_integer(0.into()), Rat::from_integer(0.into())],
            vec![s.clone()],
            n,
        );
        let got = d
            .eval(&|c: &Coord| {
                jet.get(c.dep, &c.index)
            })
            .unwrap();
        // right: the series derivative of the composition at the origin
        let want = composed.derivative(dir).coeff(&MultiIndex::empty());
        assert_eq!(got, want, "direction {dir}");
    }
}

/// The involutivity verdict does not depend on the free tie-break inside a
/// class: flipping the dependent-tag priority leaves every index count
/// unchanged.
#[test]
fn tie_break_invariance_of_indices() {
    use ijets_core::ClassTermOrder;
    let entry = catalog::builtin("running").unwrap();
    let det = entry.determining.unwrap();
    let base = det.symbol(2).unwrap();
    let flipped = det
        .clone()
        .with_term_order(ClassTermOrder::natural(3, 3).with_dep_priority(vec![1, 2, 3]));
    let other = flipped.symbol(2).unwrap();
    assert_eq!(base.indices, other.indices);
    assert_eq!(base.characters, other.characters);
    let v1 = det.involutivity().unwrap();
    let v2 = flipped.involutivity().unwrap();
    assert_eq!(v1.involutive, v2.involutive);
    assert_eq!(v1.prolonged_rank, v2.prolonged_rank);
}

/// Determining systems evaluate to identities at the identity jet.
#[test]
fn determining_systems_vanish_at_identity() {
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
        let entry = catalog::builtin(id).unwrap();
        let det = entry.determining.unwrap();
        for seed in 0..3u64 {
            let point = JetPoint::generic(det.ctx.p, det.ctx.q, 400 + seed);
            for eq in &det.equations {
                let expr = Expr::sub(Expr::coord(eq.lhs.clone()), eq.rhs.clone());
                let v = expr
                    .eval(&|c: &Coord| point.eval_identity(c))
                    .unwrap_or_else(|_| panic!("{id}: unbound at identity"));
                assert!(num_traits::Zero::is_zero(&v), "{id}: {} at identity", eq.lhs);
            }
        }
    }
}

/// The parametric-jet route to the schema also yields the plane function
/// for the three-variable entry.
#[test]
fn parametric_schema_for_three_variables() {
    let entry = catalog::builtin("ex14").unwrap();
    let red = catalog::reduced_system(&entry, 2).unwrap();
    let nf = ijets_core::normalform::build_nf_system(&red, 2).unwrap();
    let sys = nf.system.prolonged_to(4).unwrap();
    let schema = ijets_core::system::initial_condition_schema(&sys, 4);
    assert!(schema.entries.contains(&SchemaEntry::Function {
        dep: 1,
        derivative: mi(&[2]),
        args: 2
    }));
    assert!(schema.entries.contains(&SchemaEntry::Function {
        dep: 1,
        derivative: mi(&[1]),
        args: 1
    }));
}

/// A target whose quadratic normalization needs an irrational root: the
/// exact lane refuses, the float lane solves and flags itself, and the
/// emitted third-order invariant matches the closed form numerically.
#[test]
fn frame_float_fallback_on_irrational_root() {
    use ijets_core::normalform::{solve_frame, solve_frame_float, FrameError, FrameProblem};
    let entry = catalog::builtin("running").unwrap();
    let red = catalog::reduced_system(&entry, 3).unwrap();
    let cs = entry.cross_section.clone().unwrap();
    let problem = FrameProblem {
        red: &red,
        cs: &cs,
        n_f: 2,
        closed_forms: &entry.closed_forms,
    };
    let mut target = catalog::running_target_jets(3);
    target.insert(IndexedCoordinate::new(1, mi(&[2, 2])), rat_int(2));
    match solve_frame(&problem, &target, 3) {
        Err(FrameError::Eval(ijets_core::expr::EvalError::IrrationalRoot)) => {}
        other => panic!("expected the exact lane to refuse, got {other:?}"),
    }
    let ftarget: BTreeMap<IndexedCoordinate, f64> = target
        .iter()
        .map(|(c, v)| (c.clone(), ijets_core::scalar::rat_to_f64(v)))
        .collect();
    let (frame, series) = solve_frame_float(&problem, &ftarget, 3).unwrap();
    assert!(frame.float_fallback);
    let uyy = ftarget[&IndexedCoordinate::new(1, mi(&[2, 2]))];
    let uyyy = ftarget[&IndexedCoordinate::new(1, mi(&[2, 2, 2]))];
    let want = uyyy / uyy.powf(1.5);
    let got = series.invariant(1, &mi(&[2, 2, 2])).unwrap();
    assert!((got - want).abs() < 1e-12, "{got} vs {want}");
}
