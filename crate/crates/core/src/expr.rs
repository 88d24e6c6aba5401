//! Small expression trees over jet coordinates.
//!
//! Expressions are immutable DAGs (`Arc`-shared) with constant folding at
//! construction and nothing smarter: semantic equality is decided by
//! evaluation at random rational points, not by rewriting.  Evaluation,
//! substitution and formal differentiation are memoized by node identity so
//! that the sharing created by repeated substitution stays cheap.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::multiindex::MultiIndex;
use crate::scalar::{rat_from_str, rat_to_string, Rat, Scalar};

/// Families of coordinates an expression can reference.
///
/// * `Base` — independent variables `x^i` (tag `i`, empty index).
/// * `Sub` — submanifold jets `u^α_J`, differentiated in `x`.
/// * `Diffeo` — diffeomorphism jets `Z^a_B` on the total space, with
///   multi-indices over all `m = p + q` source coordinates.
/// * `Red` — reduced jets `Z̄^a_J` (restrictions to a section), with tags
///   `1..=p` horizontal and `p+1..=p+q` vertical, indices over `x` only.
/// * `Target` — jets `Û^α_J` of the prescribed target section, evaluated at
///   the transformed base point; `x`-differentiation goes through the chain
///   rule with the reduced horizontal Jacobian.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Base,
    Sub,
    Diffeo,
    Red,
    Target,
}

/// A single coordinate: family, dependent tag, multi-index.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub struct Coord {
    pub space: Space,
    pub dep: u8,
    pub index: MultiIndex,
}

impl Coord {
    pub fn new(space: Space, dep: u8, index: MultiIndex) -> Self {
        Coord { space, dep, index }
    }

    pub fn base(i: u8) -> Self {
        Coord::new(Space::Base, i, MultiIndex::empty())
    }

    pub fn sub(dep: u8, index: MultiIndex) -> Self {
        Coord::new(Space::Sub, dep, index)
    }

    pub fn diffeo(dep: u8, index: MultiIndex) -> Self {
        Coord::new(Space::Diffeo, dep, index)
    }

    pub fn red(dep: u8, index: MultiIndex) -> Self {
        Coord::new(Space::Red, dep, index)
    }

    pub fn target(dep: u8, index: MultiIndex) -> Self {
        Coord::new(Space::Target, dep, index)
    }

    pub fn order(&self) -> usize {
        self.index.order()
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.space {
            Space::Base => "x",
            Space::Sub => "u",
            Space::Diffeo => "Z",
            Space::Red => "Zr",
            Space::Target => "Ut",
        };
        if self.index.is_empty() {
            write!(f, "{}{}", tag, self.dep)
        } else {
            write!(f, "{}{}_{}", tag, self.dep, self.index)
        }
    }
}

#[derive(Debug)]
enum Node {
    Const(Rat),
    Coord(Coord),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Div(Expr, Expr),
    Pow(Expr, i32),
    Sqrt(Expr),
}

#[derive(Debug)]
struct Inner {
    node: Node,
    /// Structural hash, cached at construction for like-term folding.
    hash: u64,
}

/// Immutable shared expression.
#[derive(Clone)]
pub struct Expr(Arc<Inner>);

fn mix(seed: u64, v: u64) -> u64 {
    let mut z = seed ^ v.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z ^ (z >> 31)
}

fn node_hash(node: &Node) -> u64 {
    use std::collections::hash_map::DefaultHasher;
    use std::hash::{Hash, Hasher};
    match node {
        Node::Const(c) => {
            let mut h = DefaultHasher::new();
            c.hash(&mut h);
            mix(1, h.finish())
        }
        Node::Coord(c) => {
            let mut h = DefaultHasher::new();
            c.hash(&mut h);
            mix(2, h.finish())
        }
        Node::Add(ts) => {
            // order-insensitive combination
            let mut acc = 0u64;
            for t in ts {
                acc = acc.wrapping_add(mix(3, t.hash()));
            }
            mix(3, acc)
        }
        Node::Mul(ts) => {
            let mut acc = 0u64;
            for t in ts {
                acc = acc.wrapping_add(mix(4, t.hash()));
            }
            mix(4, acc)
        }
        Node::Div(a, b) => mix(5, mix(a.hash(), b.hash())),
        Node::Pow(a, k) => mix(6, mix(a.hash(), *k as u64)),
        Node::Sqrt(a) => mix(7, a.hash()),
    }
}

// Nodes are hash-consed per thread: structurally equal expressions share one
// allocation, so pointer identity doubles as structural equality and the
// evaluation/substitution memos collapse duplicated work.
thread_local! {
    static INTERN: std::cell::RefCell<HashMap<u64, Vec<Arc<Inner>>>> =
        std::cell::RefCell::new(HashMap::new());
}

/// Shallow structural equality: children are interned, so pointer equality
/// suffices below the first level.
fn shallow_eq(a: &Node, b: &Node) -> bool {
    match (a, b) {
        (Node::Const(x), Node::Const(y)) => x == y,
        (Node::Coord(x), Node::Coord(y)) => x == y,
        (Node::Add(x), Node::Add(y)) | (Node::Mul(x), Node::Mul(y)) => {
            x.len() == y.len()
                && x.iter()
                    .zip(y.iter())
                    .all(|(s, t)| Arc::ptr_eq(&s.0, &t.0))
        }
        (Node::Div(x1, x2), Node::Div(y1, y2)) => {
            Arc::ptr_eq(&x1.0, &y1.0) && Arc::ptr_eq(&x2.0, &y2.0)
        }
        (Node::Pow(x, j), Node::Pow(y, k)) => j == k && Arc::ptr_eq(&x.0, &y.0),
        (Node::Sqrt(x), Node::Sqrt(y)) => Arc::ptr_eq(&x.0, &y.0),
        _ => false,
    }
}

fn make(node: Node) -> Expr {
    let hash = node_hash(&node);
    INTERN.with(|table| {
        let mut table = table.borrow_mut();
        let bucket = table.entry(hash).or_default();
        for existing in bucket.iter() {
            if shallow_eq(&existing.node, &node) {
                return Expr(existing.clone());
            }
        }
        let arc = Arc::new(Inner { node, hash });
        bucket.push(arc.clone());
        Expr(arc)
    })
}

impl Expr {
    fn hash(&self) -> u64 {
        self.0.hash
    }

    /// Structural equality; with interning this is pointer equality.
    pub fn deep_eq(&self, other: &Expr) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0.node {
            Node::Const(c) => write!(f, "{}", rat_to_string(c)),
            Node::Coord(c) => write!(f, "{c}"),
            Node::Add(terms) => {
                write!(f, "(")?;
                for (i, t) in terms.iter().enumerate() {
                    if i > 0 {
                        write!(f, " + ")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
            Node::Mul(factors) => {
                write!(f, "(")?;
                for (i, t) in factors.iter().enumerate() {
                    if i > 0 {
                        write!(f, "*")?;
                    }
                    write!(f, "{t}")?;
                }
                write!(f, ")")
            }
            Node::Div(a, b) => write!(f, "({a}/{b})"),
            Node::Pow(a, k) => write!(f, "{a}^{k}"),
            Node::Sqrt(a) => write!(f, "sqrt({a})"),
        }
    }
}

/// Evaluation failures.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound coordinate {0}")]
    Unbound(Coord),
    #[error("division by zero")]
    DivisionByZero,
    #[error("negative radicand")]
    NegativeRadicand,
    #[error("radicand has no exact square root; float fallback required")]
    IrrationalRoot,
}

impl Expr {
    fn id(&self) -> usize {
        Arc::as_ptr(&self.0) as usize
    }

    pub fn constant(c: Rat) -> Expr {
        make(Node::Const(c))
    }

    pub fn int(n: i64) -> Expr {
        Expr::constant(Rat::from_integer(n.into()))
    }

    pub fn zero() -> Expr {
        Expr::int(0)
    }

    pub fn one() -> Expr {
        Expr::int(1)
    }

    pub fn coord(c: Coord) -> Expr {
        make(Node::Coord(c))
    }

    pub fn as_const(&self) -> Option<&Rat> {
        match &self.0.node {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn as_coord(&self) -> Option<&Coord> {
        match &self.0.node {
            Node::Coord(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero_const(&self) -> bool {
        matches!(&self.0.node, Node::Const(c) if c.is_zero())
    }

    /// Splits a term into a rational coefficient and its core factor.
    fn as_scaled(&self) -> (Rat, Expr) {
        if let Node::Mul(fs) = &self.0.node {
            if let Node::Const(c) = &fs[0].0.node {
                let core = if fs.len() == 2 {
                    fs[1].clone()
                } else {
                    make(Node::Mul(fs[1..].to_vec()))
                };
                return (c.clone(), core);
            }
        }
        (Rat::from_integer(1.into()), self.clone())
    }

    pub fn add(terms: Vec<Expr>) -> Expr {
        let mut acc = Rat::zero();
        // like-term folding keyed by structural hash of the core factor
        let mut buckets: HashMap<u64, Vec<(Expr, Rat)>> = HashMap::new();
        let mut order: Vec<(u64, usize)> = Vec::new();
        let push = |t: Expr,
                        acc: &mut Rat,
                        buckets: &mut HashMap<u64, Vec<(Expr, Rat)>>,
                        order: &mut Vec<(u64, usize)>| {
            if let Node::Const(c) = &t.0.node {
                *acc += c.clone();
                return;
            }
            let (coeff, core) = t.as_scaled();
            let bucket = buckets.entry(core.hash()).or_default();
            for (existing, total) in bucket.iter_mut() {
                if existing.deep_eq(&core) {
                    *total += coeff;
                    return;
                }
            }
            order.push((core.hash(), bucket.len()));
            bucket.push((core, coeff));
        };
        for t in terms {
            match &t.0.node {
                Node::Add(inner) => {
                    for s in inner {
                        push(s.clone(), &mut acc, &mut buckets, &mut order);
                    }
                }
                _ => push(t, &mut acc, &mut buckets, &mut order),
            }
        }
        let mut flat: Vec<Expr> = Vec::new();
        for (h, i) in order {
            let (core, coeff) = &buckets[&h][i];
            if coeff.is_zero() {
                continue;
            }
            if coeff.is_one() {
                flat.push(core.clone());
            } else {
                flat.push(Expr::mul(vec![Expr::constant(coeff.clone()), core.clone()]));
            }
        }
        if !acc.is_zero() {
            flat.push(Expr::constant(acc));
        }
        match flat.len() {
            0 => Expr::zero(),
            1 => flat.pop().unwrap(),
            _ => make(Node::Add(flat)),
        }
    }

    pub fn mul(factors: Vec<Expr>) -> Expr {
        let mut flat: Vec<Expr> = Vec::new();
        let mut denominators: Vec<Expr> = Vec::new();
        let mut acc = Rat::from_integer(1.into());
        for t in factors {
            match &t.0.node {
                Node::Const(c) => {
                    if c.is_zero() {
                        return Expr::zero();
                    }
                    acc *= c.clone();
                }
                Node::Mul(inner) => {
                    for s in inner {
                        match &s.0.node {
                            Node::Const(c) => {
                                if c.is_zero() {
                                    return Expr::zero();
                                }
                                acc *= c.clone();
                            }
                            Node::Div(n, d) => {
                                flat.push(n.clone());
                                denominators.push(d.clone());
                            }
                            _ => flat.push(s.clone()),
                        }
                    }
                }
                Node::Div(n, d) => {
                    flat.push(n.clone());
                    denominators.push(d.clone());
                }
                _ => flat.push(t),
            }
        }
        // combine repeated factors into powers
        let group = |parts: Vec<Expr>| -> Vec<Expr> {
            let mut buckets: HashMap<u64, Vec<(Expr, i32)>> = HashMap::new();
            let mut order: Vec<(u64, usize)> = Vec::new();
            for f in parts {
                let (base, k) = match &f.0.node {
                    Node::Pow(b, k) => (b.clone(), *k),
                    _ => (f, 1),
                };
                let bucket = buckets.entry(base.hash()).or_default();
                let mut found = false;
                for (existing, total) in bucket.iter_mut() {
                    if existing.deep_eq(&base) {
                        *total += k;
                        found = true;
                        break;
                    }
                }
                if !found {
                    order.push((base.hash(), bucket.len()));
                    bucket.push((base, k));
                }
            }
            let mut out = Vec::new();
            for (h, i) in order {
                let (base, k) = &buckets[&h][i];
                if *k != 0 {
                    out.push(Expr::pow_raw(base.clone(), *k));
                }
            }
            out
        };
        let mut flat = group(flat);
        if !acc.is_one() || flat.is_empty() {
            flat.insert(0, Expr::constant(acc));
        }
        let num = match flat.len() {
            1 => flat.pop().unwrap(),
            _ => make(Node::Mul(flat)),
        };
        if denominators.is_empty() {
            num
        } else {
            let mut denominators = group(denominators);
            let den = match denominators.len() {
                0 => return num,
                1 => denominators.pop().unwrap(),
                _ => make(Node::Mul(denominators)),
            };
            Expr::div(num, den)
        }
    }

    /// Power node without the div-splitting rewrite (used internally by the
    /// factor grouping, where the base is already canonical).
    fn pow_raw(e: Expr, k: i32) -> Expr {
        match k {
            0 => Expr::one(),
            1 => e,
            _ => {
                if let Some(c) = e.as_const() {
                    let mut acc = Rat::from_integer(1.into());
                    for _ in 0..k.unsigned_abs() {
                        acc *= c.clone();
                    }
                    if k < 0 {
                        acc = acc.recip();
                    }
                    return Expr::constant(acc);
                }
                make(Node::Pow(e, k))
            }
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::add(vec![a, Expr::neg(b)])
    }

    pub fn neg(a: Expr) -> Expr {
        Expr::mul(vec![Expr::int(-1), a])
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        if a.is_zero_const() {
            return Expr::zero();
        }
        if let Some(c) = b.as_const() {
            assert!(!c.is_zero(), "constant division by zero");
            return Expr::mul(vec![Expr::constant(c.recip()), a]);
        }
        // Keep divisions shallow: a single quotient at the top of each
        // subtree prevents the quotient rule from nesting under repeated
        // differentiation.
        match (&a.0.node, &b.0.node) {
            (Node::Div(an, ad), Node::Div(bn, bd)) => {
                let num = Expr::mul(vec![an.clone(), bd.clone()]);
                let den = Expr::mul(vec![ad.clone(), bn.clone()]);
                Expr::div(num, den)
            }
            (Node::Div(an, ad), _) => {
                let den = Expr::mul(vec![ad.clone(), b.clone()]);
                Expr::div(an.clone(), den)
            }
            (_, Node::Div(bn, bd)) => {
                let num = Expr::mul(vec![a.clone(), bd.clone()]);
                Expr::div(num, bn.clone())
            }
            _ => make(Node::Div(a, b)),
        }
    }

    pub fn pow(e: Expr, k: i32) -> Expr {
        match k {
            0 => Expr::one(),
            1 => e,
            _ => {
                if let Some(c) = e.as_const() {
                    let mut acc = Rat::from_integer(1.into());
                    for _ in 0..k.unsigned_abs() {
                        acc *= c.clone();
                    }
                    if k < 0 {
                        acc = acc.recip();
                    }
                    return Expr::constant(acc);
                }
                if let Node::Div(a, b) = &e.0.node {
                    return Expr::div(
                        Expr::pow(a.clone(), k),
                        Expr::pow(b.clone(), k),
                    );
                }
                if let Node::Pow(a, j) = &e.0.node {
                    return Expr::pow_raw(a.clone(), j * k);
                }
                make(Node::Pow(e, k))
            }
        }
    }

    pub fn sqrt(e: Expr) -> Expr {
        if let Some(c) = e.as_const() {
            if let Some(r) = c.try_sqrt() {
                return Expr::constant(r);
            }
        }
        make(Node::Sqrt(e))
    }

    /// All coordinates referenced by the expression.
    pub fn coords(&self) -> Vec<Coord> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        self.collect_coords(&mut seen, &mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_coords(&self, seen: &mut HashMap<usize, ()>, out: &mut Vec<Coord>) {
        if seen.insert(self.id(), ()).is_some() {
            return;
        }
        match &self.0.node {
            Node::Const(_) => {}
            Node::Coord(c) => out.push(c.clone()),
            Node::Add(ts) | Node::Mul(ts) => {
                for t in ts {
                    t.collect_coords(seen, out);
                }
            }
            Node::Div(a, b) => {
                a.collect_coords(seen, out);
                b.collect_coords(seen, out);
            }
            Node::Pow(a, _) | Node::Sqrt(a) => a.collect_coords(seen, out),
        }
    }

    /// Evaluates using a coordinate binding.  Exact over `Rat`, approximate
    /// over `f64` (where irrational square roots succeed).
    pub fn eval<T: Scalar>(&self, values: &dyn Fn(&Coord) -> Option<T>) -> Result<T, EvalError> {
        let mut memo: HashMap<usize, T> = HashMap::new();
        self.eval_memo(values, &mut memo)
    }

    fn eval_memo<T: Scalar>(
        &self,
        values: &dyn Fn(&Coord) -> Option<T>,
        memo: &mut HashMap<usize, T>,
    ) -> Result<T, EvalError> {
        if let Some(v) = memo.get(&self.id()) {
            return Ok(v.clone());
        }
        let v = match &self.0.node {
            Node::Const(c) => T::from_rat(c),
            Node::Coord(c) => values(c).ok_or_else(|| EvalError::Unbound(c.clone()))?,
            Node::Add(ts) => {
                let mut acc = T::zero();
                for t in ts {
                    acc = acc + t.eval_memo(values, memo)?;
                }
                acc
            }
            Node::Mul(ts) => {
                let mut acc = T::one();
                for t in ts {
                    acc = acc * t.eval_memo(values, memo)?;
                    if acc.is_zero() {
                        break;
                    }
                }
                acc
            }
            Node::Div(a, b) => {
                let den = b.eval_memo(values, memo)?;
                if den.is_zero() {
                    return Err(EvalError::DivisionByZero);
                }
                a.eval_memo(values, memo)? / den
            }
            Node::Pow(a, k) => {
                let base = a.eval_memo(values, memo)?;
                if *k < 0 && base.is_zero() {
                    return Err(EvalError::DivisionByZero);
                }
                let mut acc = T::one();
                for _ in 0..k.unsigned_abs() {
                    acc = acc * base.clone();
                }
                if *k < 0 {
                    acc = T::one() / acc;
                }
                acc
            }
            Node::Sqrt(a) => {
                let v = a.eval_memo(values, memo)?;
                if v.is_negative() {
                    return Err(EvalError::NegativeRadicand);
                }
                v.try_sqrt().ok_or(EvalError::IrrationalRoot)?
            }
        };
        memo.insert(self.id(), v.clone());
        Ok(v)
    }

    /// Structural derivative for an arbitrary rule on coordinate leaves:
    /// one memoized pass over the DAG, chain rule at every node.  Used by
    /// the total-derivative operators where the per-coordinate partials
    /// would lose all sharing.
    pub fn derive(&self, rule: &dyn Fn(&Coord) -> Expr) -> Expr {
        let mut memo = HashMap::new();
        self.derive_memo(rule, &mut memo)
    }

    fn derive_memo(
        &self,
        rule: &dyn Fn(&Coord) -> Expr,
        memo: &mut HashMap<usize, Expr>,
    ) -> Expr {
        if let Some(d) = memo.get(&self.id()) {
            return d.clone();
        }
        let d = match &self.0.node {
            Node::Const(_) => Expr::zero(),
            Node::Coord(c) => rule(c),
            Node::Add(ts) => Expr::add(ts.iter().map(|t| t.derive_memo(rule, memo)).collect()),
            Node::Mul(ts) => {
                let derivatives: Vec<Expr> =
                    ts.iter().map(|t| t.derive_memo(rule, memo)).collect();
                let mut sum = Vec::new();
                for (i, dt) in derivatives.iter().enumerate() {
                    if dt.is_zero_const() {
                        continue;
                    }
                    let mut factors: Vec<Expr> = Vec::with_capacity(ts.len());
                    factors.push(dt.clone());
                    for (j, s) in ts.iter().enumerate() {
                        if i != j {
                            factors.push(s.clone());
                        }
                    }
                    sum.push(Expr::mul(factors));
                }
                Expr::add(sum)
            }
            Node::Div(a, b) => {
                let da = a.derive_memo(rule, memo);
                let db = b.derive_memo(rule, memo);
                if db.is_zero_const() {
                    Expr::div(da, b.clone())
                } else {
                    Expr::div(
                        Expr::sub(
                            Expr::mul(vec![da, b.clone()]),
                            Expr::mul(vec![a.clone(), db]),
                        ),
                        Expr::pow(b.clone(), 2),
                    )
                }
            }
            Node::Pow(a, k) => {
                let da = a.derive_memo(rule, memo);
                if da.is_zero_const() {
                    Expr::zero()
                } else {
                    Expr::mul(vec![Expr::int(*k as i64), Expr::pow(a.clone(), k - 1), da])
                }
            }
            Node::Sqrt(a) => {
                let da = a.derive_memo(rule, memo);
                if da.is_zero_const() {
                    Expr::zero()
                } else {
                    Expr::div(da, Expr::mul(vec![Expr::int(2), Expr::sqrt(a.clone())]))
                }
            }
        };
        memo.insert(self.id(), d.clone());
        d
    }

    /// Formal partial derivative treating coordinates as independent symbols.
    pub fn partial(&self, wrt: &Coord) -> Expr {
        let mut memo = HashMap::new();
        self.partial_memo(wrt, &mut memo)
    }

    fn partial_memo(&self, wrt: &Coord, memo: &mut HashMap<usize, Expr>) -> Expr {
        if let Some(d) = memo.get(&self.id()) {
            return d.clone();
        }
        let d = match &self.0.node {
            Node::Const(_) => Expr::zero(),
            Node::Coord(c) => {
                if c == wrt {
                    Expr::one()
                } else {
                    Expr::zero()
                }
            }
            Node::Add(ts) => Expr::add(ts.iter().map(|t| t.partial_memo(wrt, memo)).collect()),
            Node::Mul(ts) => {
                let mut sum = Vec::new();
                for (i, t) in ts.iter().enumerate() {
                    let dt = t.partial_memo(wrt, memo);
                    if dt.is_zero_const() {
                        continue;
                    }
                    let mut factors: Vec<Expr> = Vec::with_capacity(ts.len());
                    factors.push(dt);
                    for (j, s) in ts.iter().enumerate() {
                        if i != j {
                            factors.push(s.clone());
                        }
                    }
                    sum.push(Expr::mul(factors));
                }
                Expr::add(sum)
            }
            Node::Div(a, b) => {
                let da = a.partial_memo(wrt, memo);
                let db = b.partial_memo(wrt, memo);
                if db.is_zero_const() {
                    Expr::div(da, b.clone())
                } else {
                    // (da*b - a*db) / b^2
                    Expr::div(
                        Expr::sub(
                            Expr::mul(vec![da, b.clone()]),
                            Expr::mul(vec![a.clone(), db]),
                        ),
                        Expr::pow(b.clone(), 2),
                    )
                }
            }
            Node::Pow(a, k) => {
                let da = a.partial_memo(wrt, memo);
                if da.is_zero_const() {
                    Expr::zero()
                } else {
                    Expr::mul(vec![
                        Expr::int(*k as i64),
                        Expr::pow(a.clone(), k - 1),
                        da,
                    ])
                }
            }
            Node::Sqrt(a) => {
                let da = a.partial_memo(wrt, memo);
                if da.is_zero_const() {
                    Expr::zero()
                } else {
                    Expr::div(da, Expr::mul(vec![Expr::int(2), Expr::sqrt(a.clone())]))
                }
            }
        };
        memo.insert(self.id(), d.clone());
        d
    }

    /// Replaces coordinates by expressions (single parallel pass).
    pub fn substitute(&self, map: &HashMap<Coord, Expr>) -> Expr {
        if map.is_empty() {
            return self.clone();
        }
        let mut memo = HashMap::new();
        self.substitute_memo(map, &mut memo)
    }

    fn substitute_memo(
        &self,
        map: &HashMap<Coord, Expr>,
        memo: &mut HashMap<usize, Expr>,
    ) -> Expr {
        if let Some(e) = memo.get(&self.id()) {
            return e.clone();
        }
        let e = match &self.0.node {
            Node::Const(_) => self.clone(),
            Node::Coord(c) => map.get(c).cloned().unwrap_or_else(|| self.clone()),
            Node::Add(ts) => {
                Expr::add(ts.iter().map(|t| t.substitute_memo(map, memo)).collect())
            }
            Node::Mul(ts) => {
                Expr::mul(ts.iter().map(|t| t.substitute_memo(map, memo)).collect())
            }
            Node::Div(a, b) => Expr::div(
                a.substitute_memo(map, memo),
                b.substitute_memo(map, memo),
            ),
            Node::Pow(a, k) => Expr::pow(a.substitute_memo(map, memo), *k),
            Node::Sqrt(a) => Expr::sqrt(a.substitute_memo(map, memo)),
        };
        memo.insert(self.id(), e.clone());
        e
    }

    /// Structural node count (DAG nodes, shared nodes counted once).
    pub fn dag_size(&self) -> usize {
        let mut seen = HashMap::new();
        self.size_memo(&mut seen);
        seen.len()
    }

    fn size_memo(&self, seen: &mut HashMap<usize, ()>) {
        if seen.insert(self.id(), ()).is_some() {
            return;
        }
        match &self.0.node {
            Node::Const(_) | Node::Coord(_) => {}
            Node::Add(ts) | Node::Mul(ts) => {
                for t in ts {
                    t.size_memo(seen);
                }
            }
            Node::Div(a, b) => {
                a.size_memo(seen);
                b.size_memo(seen);
            }
            Node::Pow(a, _) | Node::Sqrt(a) => a.size_memo(seen),
        }
    }

    /// Serializes into the JSON tree format used by system files.
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::json;
        match &self.0.node {
            Node::Const(c) => json!({ "const": rat_to_string(c) }),
            Node::Coord(c) => json!({ "coord": c }),
            Node::Add(ts) => json!({ "op": "add", "args": ts.iter().map(|t| t.to_json()).collect::<Vec<_>>() }),
            Node::Mul(ts) => json!({ "op": "mul", "args": ts.iter().map(|t| t.to_json()).collect::<Vec<_>>() }),
            Node::Div(a, b) => json!({ "op": "div", "args": [a.to_json(), b.to_json()] }),
            Node::Pow(a, k) => json!({ "op": "pow", "exp": k, "args": [a.to_json()] }),
            Node::Sqrt(a) => json!({ "op": "sqrt", "args": [a.to_json()] }),
        }
    }

    pub fn from_json(v: &serde_json::Value) -> Option<Expr> {
        if let Some(c) = v.get("const") {
            return Some(Expr::constant(rat_from_str(c.as_str()?)?));
        }
        if let Some(c) = v.get("coord") {
            let coord: Coord = serde_json::from_value(c.clone()).ok()?;
            return Some(Expr::coord(coord));
        }
        let op = v.get("op")?.as_str()?;
        let args: Vec<Expr> = v
            .get("args")?
            .as_array()?
            .iter()
            .map(Expr::from_json)
            .collect::<Option<Vec<_>>>()?;
        match op {
            "add" => Some(Expr::add(args)),
            "mul" => Some(Expr::mul(args)),
            "div" => {
                let [a, b] = <[Expr; 2]>::try_from(args).ok()?;
                Some(Expr::div(a, b))
            }
            "pow" => {
                let k = v.get("exp")?.as_i64()? as i32;
                let [a] = <[Expr; 1]>::try_from(args).ok()?;
                Some(Expr::pow(a, k))
            }
            "sqrt" => {
                let [a] = <[Expr; 1]>::try_from(args).ok()?;
                Some(Expr::sqrt(a))
            }
            _ => None,
        }
    }
}

impl From<Coord> for Expr {
    fn from(c: Coord) -> Expr {
        Expr::coord(c)
    }
}

/// Convenience binding backed by a map.
pub fn bind<T: Scalar>(map: &HashMap<Coord, T>) -> impl Fn(&Coord) -> Option<T> + '_ {
    move |c| map.get(c).cloned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{rat, rat_int};

    fn red(dep: u8, idx: &[u8]) -> Coord {
        Coord::red(dep, MultiIndex::new(idx.to_vec()))
    }

    fn point(pairs: &[(Coord, Rat)]) -> HashMap<Coord, Rat> {
        pairs.iter().cloned().collect()
    }

    #[test]
    fn eval_prolonged_action_checkpoint() {
        // u_yy / Zr_x^2 with u_yy = 4 and the horizontal derivative = 2
        // normalizes to 1.
        let u_yy = Coord::sub(1, MultiIndex::new(vec![2, 2]));
        let xr_x = red(1, &[1]);
        let e = Expr::div(
            Expr::coord(u_yy.clone()),
            Expr::pow(Expr::coord(xr_x.clone()), 2),
        );
        let vals = point(&[(u_yy, rat_int(4)), (xr_x, rat_int(2))]);
        assert_eq!(e.eval(&bind(&vals)).unwrap(), rat_int(1));
    }

    #[test]
    fn eval_empty_constant() {
        let vals: HashMap<Coord, Rat> = HashMap::new();
        assert_eq!(Expr::zero().eval(&bind(&vals)).unwrap(), rat_int(0));
    }

    #[test]
    fn eval_sqrt_power_checkpoint() {
        // u_yyy / u_yy^{3/2} at u_yyy = 8, u_yy = 4 gives exactly 1.
        let u_yyy = Coord::sub(1, MultiIndex::new(vec![2, 2, 2]));
        let u_yy = Coord::sub(1, MultiIndex::new(vec![2, 2]));
        let e = Expr::div(
            Expr::coord(u_yyy.clone()),
            Expr::mul(vec![
                Expr::coord(u_yy.clone()),
                Expr::sqrt(Expr::coord(u_yy.clone())),
            ]),
        );
        let vals = point(&[(u_yyy, rat_int(8)), (u_yy, rat_int(4))]);
        assert_eq!(e.eval(&bind(&vals)).unwrap(), rat_int(1));
    }

    #[test]
    fn eval_errors() {
        let c = red(1, &[1]);
        let e = Expr::coord(c.clone());
        let empty: HashMap<Coord, Rat> = HashMap::new();
        assert!(matches!(
            e.eval(&bind(&empty)),
            Err(EvalError::Unbound(_))
        ));
        let div = Expr::div(Expr::one(), Expr::coord(c.clone()));
        let vals = point(&[(c.clone(), rat_int(0))]);
        assert_eq!(div.eval(&bind(&vals)), Err(EvalError::DivisionByZero));
        let sq = Expr::sqrt(Expr::coord(c.clone()));
        let neg = point(&[(c.clone(), rat_int(-1))]);
        assert_eq!(sq.eval(&bind(&neg)), Err(EvalError::NegativeRadicand));
        let irr = point(&[(c, rat_int(2))]);
        assert_eq!(sq.eval(&bind(&irr)), Err(EvalError::IrrationalRoot));
        // float lane succeeds on the same radicand
        let fvals: HashMap<Coord, f64> = sq
            .coords()
            .into_iter()
            .map(|c| (c, 2.0f64))
            .collect();
        assert!((sq.eval(&bind(&fvals)).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn partial_product_rule() {
        // d(u_x * Zu)/d u_x = Zu
        let u_x = Coord::sub(1, MultiIndex::single(1));
        let z_u = Coord::diffeo(1, MultiIndex::single(2));
        let e = Expr::mul(vec![Expr::coord(u_x.clone()), Expr::coord(z_u.clone())]);
        let d = e.partial(&u_x);
        assert_eq!(d.as_coord(), Some(&z_u));
    }

    #[test]
    fn partial_power_and_sqrt() {
        let x = red(1, &[1]);
        let sq = Expr::pow(Expr::coord(x.clone()), 2);
        let d = sq.partial(&x);
        let vals = point(&[(x.clone(), rat(7, 3))]);
        assert_eq!(d.eval(&bind(&vals)).unwrap(), rat(14, 3));

        let u_yy = Coord::sub(1, MultiIndex::new(vec![2, 2]));
        let s = Expr::sqrt(Expr::coord(u_yy.clone()));
        let ds = s.partial(&u_yy);
        // 1/(2 sqrt(u_yy)) at u_yy = 4 is 1/4.
        let vals = point(&[(u_yy, rat_int(4))]);
        assert_eq!(ds.eval(&bind(&vals)).unwrap(), rat(1, 4));
    }

    #[test]
    fn substitution_and_folding() {
        let a = red(1, &[1]);
        let b = red(2, &[1]);
        let e = Expr::add(vec![
            Expr::coord(a.clone()),
            Expr::mul(vec![Expr::int(3), Expr::coord(b.clone())]),
        ]);
        let mut map = HashMap::new();
        map.insert(b, Expr::zero());
        let s = e.substitute(&map);
        assert_eq!(s.as_coord(), Some(&a));
    }

    #[test]
    fn json_round_trip_exprs() {
        let a = red(1, &[1]);
        let e = Expr::div(
            Expr::add(vec![Expr::coord(a.clone()), Expr::int(2)]),
            Expr::sqrt(Expr::coord(a.clone())),
        );
        let back = Expr::from_json(&e.to_json()).unwrap();
        let vals = point(&[(a, rat_int(4))]);
        assert_eq!(
            e.eval(&bind(&vals)).unwrap(),
            back.eval(&bind(&vals)).unwrap()
        );
    }
}
