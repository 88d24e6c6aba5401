//! Group-element actions on sections, used by the invariance checks and the
//! determining-equation smoke tests.
//!
//! For entries whose transformations are explicit, a random group element
//! (polynomial data plus constants) acts on a section given as a truncated
//! series; the transformed graph is recovered exactly with series division,
//! composition and reversion.

use std::collections::HashMap;

use crate::expr::Coord;
use crate::multiindex::MultiIndex;
use crate::scalar::{Rat, SeededRng};
use crate::series::{reversion, Series};

fn mi(entries: &[u8]) -> MultiIndex {
    MultiIndex::new(entries.to_vec())
}

/// Random univariate polynomial fixing the origin, truncated at `n`.  When
/// `unit_linear` is set the linear coefficient is positive, staying in the
/// identity component where the square-root frame branch lives.
fn random_poly_fixing_origin(rng: &mut SeededRng, n: usize, unit_linear: bool) -> Series {
    let mut s = Series::zero(1, n);
    let lin = if unit_linear {
        num_traits::Signed::abs(&rng.small_rat())
    } else {
        rng.small_rat_or_zero()
    };
    s.set(mi(&[1]), lin);
    for k in 2..=n {
        s.set(MultiIndex::repeated(1, k), rng.small_rat_or_zero());
    }
    s
}

/// Embeds a univariate series as a series in `nv` variables via variable
/// `var`, truncated at `order`.
fn lift_to(s: &Series, nv: usize, var: u8, order: usize) -> Series {
    let mut out = Series::zero(nv, order);
    for (j, c) in s.terms() {
        out.set(MultiIndex::repeated(var, j.order()), c.clone());
    }
    out
}

/// Applies a random catalog group element to the graph of `sections`
/// (series in the entry's base variables, centered at the origin) and
/// returns the transformed graph, also centered at the origin.  `None` when
/// the entry has no transform implemented.
pub fn transform_section(id: &str, sections: &[Series], seed: u64) -> Option<Vec<Series>> {
    let mut rng = SeededRng::new(seed);
    match id {
        "running" => Some(vec![transform_running(&sections[0], &mut rng)]),
        "ex10" => Some(vec![transform_ex10(&sections[0], &mut rng)]),
        "ex13" => Some(vec![transform_ex13(&sections[0], &mut rng)]),
        _ => None,
    }
}

/// X = f(x), Y = f_x y + g(x), U = u + (f_xx y + g_x)/f_x with f(0) = 0,
/// g(0) = 0 so the base point stays at the origin.
fn transform_running(target: &Series, rng: &mut SeededRng) -> Series {
    let n = target.truncation_order();
    let f = random_poly_fixing_origin(rng, n + 2, true);
    let g = random_poly_fixing_origin(rng, n + 2, false);
    let x_of_cap = lift_to(&reversion(&f).expect("unit linear term"), 2, 1, n);
    let f1 = f.derivative(1);
    let f2 = f1.derivative(1);
    let g1 = g.derivative(1);
    let compose1 = |s: &Series| -> Series {
        lift_to(s, 1, 1, n)
            .compose(std::slice::from_ref(&x_of_cap))
            .expect("zero constant term")
    };
    let fx = compose1(&f1);
    let fxx = compose1(&f2);
    let gx = compose1(&g1);
    let g_at = compose1(&g);
    let fx_inv = fx.invert().expect("f_x(0) nonzero");
    // y(X, Y) = (Y − g(x)) / f_x(x)
    let cap_y = Series::variable(2, n, 2);
    let y_of = cap_y.sub(&g_at).unwrap().mul(&fx_inv).unwrap();
    let composed = target
        .compose(&[x_of_cap.clone(), y_of.clone()])
        .expect("origin-fixing transform");
    let correction = fxx
        .mul(&y_of)
        .unwrap()
        .add(&gx)
        .unwrap()
        .mul(&fx_inv)
        .unwrap();
    composed.add(&correction).unwrap()
}

/// X = f(x), Y = y, U = u / f_x with f(0) = 0.
fn transform_ex10(target: &Series, rng: &mut SeededRng) -> Series {
    let n = target.truncation_order();
    let f = random_poly_fixing_origin(rng, n + 2, true);
    let x_of_cap = lift_to(&reversion(&f).expect("unit linear term"), 2, 1, n);
    let f1 = f.derivative(1);
    let fx = lift_to(&f1, 1, 1, n)
        .compose(std::slice::from_ref(&x_of_cap))
        .expect("zero constant term");
    let cap_y = Series::variable(2, n, 2);
    target
        .compose(&[x_of_cap, cap_y])
        .unwrap()
        .mul(&fx.invert().expect("f_x(0) nonzero"))
        .unwrap()
}

/// X = x, Y = y, U = f(u) with f_u nonzero at the section's value.
fn transform_ex13(target: &Series, rng: &mut SeededRng) -> Series {
    let n = target.truncation_order();
    // polynomial f with f'(F(0,0)) != 0: expand around the section value
    let f0 = target.coeff(&MultiIndex::empty());
    let mut f = Series::zero(1, n + 2);
    f.set(mi(&[]), rng.small_rat_or_zero());
    f.set(mi(&[1]), rng.small_rat());
    for k in 2..=n + 2 {
        f.set(MultiIndex::repeated(1, k), rng.small_rat_or_zero());
    }
    // f(F) = f_recentered(F − F0)
    let f_at = f.recenter(std::slice::from_ref(&f0));
    let shifted = {
        let mut s = target.clone();
        let cur = s.coeff(&MultiIndex::empty());
        s.set(MultiIndex::empty(), cur - f0.clone());
        s
    };
    let mut truncated = Series::zero(1, n);
    for (j, c) in f_at.terms() {
        truncated.set(j.clone(), c.clone());
    }
    truncated
        .compose(std::slice::from_ref(&shifted))
        .expect("zero constant term after shift")
}

/// Samples the full diffeomorphism jet of a random group element of the
/// entry, at a generic base point, up to `max_order`.  Returns a binding for
/// every diffeomorphism jet coordinate plus the base coordinates, suitable
/// for checking that the determining equations vanish on group jets.
pub fn sample_group_jet(
    id: &str,
    seed: u64,
    max_order: usize,
) -> Option<HashMap<Coord, Rat>> {
    let mut rng = SeededRng::new(seed);
    let n = max_order + 1;
    // base point
    let components: Vec<Series>;
    let m: usize;
    let base: Vec<Rat>;
    match id {
        "running" => {
            // source (x, y, u); f' (at the base point) must not vanish
            m = 3;
            base = vec![rng.small_rat(), rng.small_rat(), rng.small_rat()];
            let f = random_series(&mut rng, 1, n, true);
            let g = random_series(&mut rng, 1, n, false);
            let xi1 = Series::variable(m, n, 1);
            let f_at = shift_compose(&f, &base[0..1], std::slice::from_ref(&xi1));
            let f1_at = shift_compose(&f.derivative(1), &base[0..1], std::slice::from_ref(&xi1));
            let f2_at = shift_compose(&f.derivative(1).derivative(1), &base[0..1], std::slice::from_ref(&xi1));
            let g_at = shift_compose(&g, &base[0..1], std::slice::from_ref(&xi1));
            let g1_at = shift_compose(&g.derivative(1), &base[0..1], &[xi1]);
            let y_full = Series::variable(m, n, 2).recentered_plus(&base[1]);
            let u_full = Series::variable(m, n, 3).recentered_plus(&base[2]);
            let cap_x = f_at.clone();
            let cap_y = f1_at.mul(&y_full).unwrap().add(&g_at).unwrap();
            let cap_u = u_full
                .add(
                    &f2_at
                        .mul(&y_full)
                        .unwrap()
                        .add(&g1_at)
                        .unwrap()
                        .mul(&f1_at.invert().expect("f' nonzero"))
                        .unwrap(),
                )
                .unwrap();
            components = vec![cap_x, cap_y, cap_u];
        }
        "ex4" => {
            m = 3;
            base = vec![rng.small_rat(), rng.small_rat(), rng.small_rat()];
            let a = rng.small_rat_or_zero();
            let b = rng.small_rat_or_zero();
            let f = random_series(&mut rng, 1, n, true);
            let g = random_series(&mut rng, 1, n, false);
            let h = random_series(&mut rng, 1, n, false);
            let xi1 = Series::variable(m, n, 1);
            let f_at = shift_compose(&f, &base[0..1], std::slice::from_ref(&xi1));
            let g_at = shift_compose(&g, &base[0..1], std::slice::from_ref(&xi1));
            let h_at = shift_compose(&h, &base[0..1], std::slice::from_ref(&xi1));
            let y_full = Series::variable(m, n, 2).recentered_plus(&base[1]);
            let u_full = Series::variable(m, n, 3).recentered_plus(&base[2]);
            let cap_x = xi1.recentered_plus(&(base[0].clone() + a));
            let cap_y = Series::variable(m, n, 2).recentered_plus(&(base[1].clone() + b));
            let cap_u = f_at
                .mul(&u_full)
                .unwrap()
                .add(&g_at.mul(&y_full).unwrap())
                .unwrap()
                .add(&h_at)
                .unwrap();
            components = vec![cap_x, cap_y, cap_u];
        }
        "ex5" => {
            m = 2;
            base = vec![rng.small_rat(), rng.small_rat()];
            let a = rng.small_rat();
            let b = rng.small_rat_or_zero();
            let c = rng.small_rat();
            let d = rng.small_rat_or_zero();
            let e = rng.small_rat_or_zero();
            let x_full = Series::variable(m, n, 1).recentered_plus(&base[0]);
            let u_full = Series::variable(m, n, 2).recentered_plus(&base[1]);
            let cap_x = x_full.scale(&a).add(&Series::constant(m, n, b)).unwrap();
            let cap_u = u_full
                .scale(&c)
                .add(&x_full.scale(&d))
                .unwrap()
                .add(&Series::constant(m, n, e))
                .unwrap();
            components = vec![cap_x, cap_u];
        }
        "ex99" => {
            m = 2;
            base = vec![rng.small_rat(), rng.small_rat()];
            let a = rng.small_rat_or_zero();
            let lambda = rng.small_rat();
            let f = random_series(&mut rng, 1, n, false);
            let xi1 = Series::variable(m, n, 1);
            let f_at = shift_compose(&f, &base[0..1], std::slice::from_ref(&xi1));
            let cap_x = xi1.recentered_plus(&(base[0].clone() + a));
            let cap_u = Series::variable(m, n, 2)
                .recentered_plus(&base[1])
                .scale(&lambda)
                .add(&f_at)
                .unwrap();
            components = vec![cap_x, cap_u];
        }
        "xfxu" | "redfree-pg1" => {
            m = 2;
            base = vec![rng.small_rat(), rng.small_rat()];
            let a = if id == "xfxu" {
                Rat::zero()
            } else {
                rng.small_rat_or_zero()
            };
            let f = random_series2(&mut rng, n);
            let xi = [Series::variable(m, n, 1), Series::variable(m, n, 2)];
            let f_at = shift_compose(&f, &base[0..2], &xi);
            let cap_x = Series::variable(m, n, 1).recentered_plus(&(base[0].clone() + a));
            components = vec![cap_x, f_at];
        }
        "redfree-pg2" => {
            m = 3;
            base = vec![rng.small_rat(), rng.small_rat(), rng.small_rat()];
            let a = rng.small_rat_or_zero();
            let b = rng.small_rat_or_zero();
            let f = random_series2(&mut rng, n);
            let xi = [Series::variable(m, n, 1), Series::variable(m, n, 2)];
            let f_at = shift_compose(&f, &base[0..2], &xi);
            let cap_x = Series::variable(m, n, 1).recentered_plus(&(base[0].clone() + a));
            let cap_v = Series::variable(m, n, 3).recentered_plus(&(base[2].clone() + b));
            components = vec![cap_x, f_at, cap_v];
        }
        "redfree-pg3" => {
            m = 3;
            base = vec![rng.small_rat(), rng.small_rat(), rng.small_rat()];
            let a = rng.small_rat_or_zero();
            let b = rng.small_rat_or_zero();
            let f = random_series2(&mut rng, n);
            let xi = [Series::variable(m, n, 1), Series::variable(m, n, 3)];
            let f_at = shift_compose(&f, &[base[0].clone(), base[2].clone()], &xi);
            let cap_x = Series::variable(m, n, 1).recentered_plus(&(base[0].clone() + a));
            let cap_y = Series::variable(m, n, 2).recentered_plus(&(base[1].clone() + b));
            components = vec![cap_x, cap_y, f_at];
        }
        "ex13" => {
            m = 3;
            base = vec![rng.small_rat(), rng.small_rat(), rng.small_rat()];
            let a = rng.small_rat_or_zero();
            let b = rng.small_rat_or_zero();
            let f = random_series(&mut rng, 1, n, true);
            let xi3 = Series::variable(m, n, 3);
            let f_at = shift_compose(&f, &base[2..3], &[xi3]);
            let cap_x = Series::variable(m, n, 1).recentered_plus(&(base[0].clone() + a));
            let cap_y = Series::variable(m, n, 2).recentered_plus(&(base[1].clone() + b));
            components = vec![cap_x, cap_y, f_at];
        }
        _ => return None,
    }
    let mut out = HashMap::new();
    for (i, v) in base.iter().enumerate() {
        out.insert(Coord::base(i as u8 + 1), v.clone());
    }
    // the u-coordinate of the source point doubles as the order-zero
    // submanifold jet that appears in the determining equations
    for a in 1..=(m as u8) {
        for k in 0..=max_order {
            for b_idx in MultiIndex::all_of_order(m as u8, k) {
                let coeff = components[(a - 1) as usize].coeff(&b_idx);
                let val = coeff * Rat::from_integer(b_idx.factorial().into());
                out.insert(Coord::diffeo(a, b_idx), val);
            }
        }
    }
    // base fiber values as order-zero sub jets (e.g. the lone `u` in the
    // running example's determining equations)
    match id {
        "running" | "ex4" | "redfree-pg3" | "ex13" => {
            out.insert(Coord::sub(1, MultiIndex::empty()), base[2].clone());
        }
        "ex5" | "ex99" | "xfxu" | "redfree-pg1" => {
            out.insert(Coord::sub(1, MultiIndex::empty()), base[1].clone());
        }
        "redfree-pg2" => {
            out.insert(Coord::sub(1, MultiIndex::empty()), base[1].clone());
            out.insert(Coord::sub(2, MultiIndex::empty()), base[2].clone());
        }
        _ => {}
    }
    Some(out)
}

use num_traits::Zero;

fn random_series(rng: &mut SeededRng, nv: usize, n: usize, unit_linear: bool) -> Series {
    let mut s = Series::zero(nv, n);
    s.set(MultiIndex::empty(), rng.small_rat_or_zero());
    let lin = if unit_linear {
        rng.small_rat()
    } else {
        rng.small_rat_or_zero()
    };
    s.set(mi(&[1]), lin);
    for k in 2..=n {
        for j in MultiIndex::all_of_order(nv as u8, k) {
            s.set(j, rng.small_rat_or_zero());
        }
    }
    s
}

fn random_series2(rng: &mut SeededRng, n: usize) -> Series {
    let mut s = Series::zero(2, n);
    for k in 0..=n {
        for j in MultiIndex::all_of_order(2, k) {
            s.set(j, rng.small_rat_or_zero());
        }
    }
    // ensure f_u != 0 at the base point
    s.set(mi(&[2]), rng.small_rat());
    s
}

/// Recenter `f` at the point `at` and compose with displacement series.
fn shift_compose(f: &Series, at: &[Rat], displacement: &[Series]) -> Series {
    let shifted = f.recenter(at);
    let n = displacement[0].truncation_order();
    let mut truncated = Series::zero(f.num_vars(), n);
    for (j, c) in shifted.terms() {
        truncated.set(j.clone(), c.clone());
    }
    truncated.compose(displacement).expect("displacements vanish at 0")
}

trait RecenterPlus {
    fn recentered_plus(&self, c: &Rat) -> Series;
}

impl RecenterPlus for Series {
    /// Adds a constant to the series (the variable plus a base value).
    fn recentered_plus(&self, c: &Rat) -> Series {
        let mut out = self.clone();
        let cur = out.coeff(&MultiIndex::empty());
        out.set(MultiIndex::empty(), cur + c.clone());
        out
    }
}
