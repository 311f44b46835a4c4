//! Bounded primal simplex on a dense tableau, generic over the number type.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use super::RowSense;

pub trait Scalar: Clone + Debug + PartialOrd {
    const EXACT: bool;
    fn zero() -> Self;
    fn from_i64(v: i64) -> Self;
    fn from_f64(v: f64) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    /// Strictly positive beyond the pivot tolerance.
    fn is_pos(&self) -> bool;
    fn is_neg(&self) -> bool;
    fn to_f64(&self) -> f64;
    /// Nearest integer if the value is integral within tolerance.
    fn as_integer(&self) -> Option<i64>;
    /// Distance to the nearest integer, for branching.
    fn fractionality(&self) -> f64;
}

const PIVOT_TOL: f64 = 1e-9;
const INTEGRAL_TOL: f64 = 1e-6;

impl Scalar for f64 {
    const EXACT: bool = false;
    fn zero() -> Self {
        0.0
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn is_pos(&self) -> bool {
        *self > PIVOT_TOL
    }
    fn is_neg(&self) -> bool {
        *self < -PIVOT_TOL
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn as_integer(&self) -> Option<i64> {
        let r = self.round();
        ((self - r).abs() <= INTEGRAL_TOL).then_some(r as i64)
    }
    fn fractionality(&self) -> f64 {
        (self - self.round()).abs()
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;
    fn zero() -> Self {
        Zero::zero()
    }
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).unwrap_or_else(Zero::zero)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn is_pos(&self) -> bool {
        self.is_positive()
    }
    fn is_neg(&self) -> bool {
        self.is_negative()
    }
    fn to_f64(&self) -> f64 {
        self.to_f64_lossy()
    }
    fn as_integer(&self) -> Option<i64> {
        self.is_integer().then(|| self.to_integer().to_i64()).flatten()
    }
    fn fractionality(&self) -> f64 {
        let f = self - self.floor();
        let f = f.to_f64_lossy();
        f.min(1.0 - f)
    }
}

trait LossyF64 {
    fn to_f64_lossy(&self) -> f64;
}

impl LossyF64 for BigRational {
    fn to_f64_lossy(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// A linear relaxation: `rows` over `n` bounded variables.
#[derive(Debug, Clone)]
pub struct Lp<'a> {
    pub n: usize,
    pub rows: Vec<(Vec<(usize, i64)>, RowSense, i64)>,
    pub lo: &'a [i64],
    pub hi: &'a [i64],
    pub cost: &'a [f64],
}

#[derive(Debug, Clone)]
pub enum LpOutcome<S> {
    Infeasible,
    Optimal { x: Vec<S>, objective: f64 },
    /// Iteration cap reached; no bound is available.
    Stalled,
}

struct Tableau<S> {
    m: usize,
    cols: usize,
    t: Vec<S>,
    beta: Vec<S>,
    basis: Vec<usize>,
    lo: Vec<S>,
    hi: Vec<Option<S>>,
    at_upper: Vec<bool>,
    is_basic: Vec<bool>,
}

impl<S: Scalar> Tableau<S> {
    fn at(&self, i: usize, j: usize) -> &S {
        &self.t[i * self.cols + j]
    }

    fn nonbasic_value(&self, j: usize) -> S {
        if self.at_upper[j] {
            self.hi[j].clone().expect("at upper implies finite bound")
        } else {
            self.lo[j].clone()
        }
    }

    fn reduced_costs(&self, c: &[S]) -> Vec<S> {
        let mut d = c.to_vec();
        for i in 0..self.m {
            let cb = &c[self.basis[i]];
            if cb.is_pos() || cb.is_neg() {
                for (j, dj) in d.iter_mut().enumerate() {
                    let a = self.at(i, j);
                    if a.is_pos() || a.is_neg() {
                        *dj = dj.sub(&cb.mul(a));
                    }
                }
            }
        }
        d
    }

    fn pivot(&mut self, r: usize, e: usize, d: &mut [S]) {
        let cols = self.cols;
        let p = self.at(r, e).clone();
        for j in 0..cols {
            let v = self.t[r * cols + j].div(&p);
            self.t[r * cols + j] = v;
        }
        let row_r: Vec<S> = self.t[r * cols..(r + 1) * cols].to_vec();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.at(i, e).clone();
            if f.is_pos() || f.is_neg() {
                for j in 0..cols {
                    if row_r[j].is_pos() || row_r[j].is_neg() {
                        let v = self.t[i * cols + j].sub(&f.mul(&row_r[j]));
                        self.t[i * cols + j] = v;
                    }
                }
                self.t[i * cols + e] = S::zero();
            }
        }
        let f = d[e].clone();
        if f.is_pos() || f.is_neg() {
            for j in 0..cols {
                if row_r[j].is_pos() || row_r[j].is_neg() {
                    d[j] = d[j].sub(&f.mul(&row_r[j]));
                }
            }
            d[e] = S::zero();
        }
        self.is_basic[self.basis[r]] = false;
        self.basis[r] = e;
        self.is_basic[e] = true;
    }

    /// Run simplex iterations minimising `c`. Returns false on the iteration cap.
    fn optimise(&mut self, c: &[S], max_iter: usize) -> bool {
        let mut d = self.reduced_costs(c);
        for iter in 0..max_iter {
            let bland = iter > max_iter / 4;
            let mut entering: Option<(usize, bool)> = None;
            let mut best = 0.0f64;
            for j in 0..self.cols {
                if self.is_basic[j] {
                    continue;
                }
                let fixed = self.hi[j].as_ref().is_some_and(|h| !h.sub(&self.lo[j]).is_pos());
                if fixed {
                    continue;
                }
                let up = !self.at_upper[j] && d[j].is_neg();
                let down = self.at_upper[j] && d[j].is_pos();
                if up || down {
                    let score = d[j].to_f64().abs();
                    if bland {
                        entering = Some((j, up));
                        break;
                    }
                    if entering.is_none() || score > best {
                        best = score;
                        entering = Some((j, up));
                    }
                }
            }
            let Some((e, up)) = entering else { return true };
            let dir_pos = up;
            let mut step: Option<S> = self.hi[e].as_ref().map(|h| h.sub(&self.lo[e]));
            let mut leave: Option<(usize, bool)> = None;
            for i in 0..self.m {
                let a = self.at(i, e);
                let alpha = if dir_pos { a.clone() } else { S::zero().sub(a) };
                let b = self.basis[i];
                let limit = if alpha.is_pos() {
                    Some((self.beta[i].sub(&self.lo[b]).div(&alpha), false))
                } else if alpha.is_neg() {
                    self.hi[b].as_ref().map(|h| (h.sub(&self.beta[i]).div(&S::zero().sub(&alpha)), true))
                } else {
                    None
                };
                if let Some((lim, to_upper)) = limit {
                    let lim = if lim.is_neg() { S::zero() } else { lim };
                    let better = match (&step, &leave) {
                        (None, _) => true,
                        (Some(s), _) => lim < *s,
                    };
                    if better {
                        step = Some(lim);
                        leave = Some((i, to_upper));
                    }
                }
            }
            let Some(step) = step else { return false };
            let signed = if dir_pos { step.clone() } else { S::zero().sub(&step) };
            for i in 0..self.m {
                let a = self.at(i, e).clone();
                if a.is_pos() || a.is_neg() {
                    self.beta[i] = self.beta[i].sub(&signed.mul(&a));
                }
            }
            match leave {
                None => {
                    self.at_upper[e] = !self.at_upper[e];
                }
                Some((r, to_upper)) => {
                    let entering_value = self.nonbasic_value(e).add(&signed);
                    let leaving = self.basis[r];
                    self.at_upper[leaving] = to_upper;
                    self.pivot(r, e, &mut d);
                    self.beta[r] = entering_value;
                    self.at_upper[e] = false;
                }
            }
        }
        false
    }
}

const FEASIBILITY_MARGIN: f64 = 1e-6;

impl<'a> Lp<'a> {
    pub fn solve<S: Scalar>(&self) -> LpOutcome<S> {
        let n = self.n;
        let m = self.rows.len();
        let cols = n + 2 * m;
        let mut lo: Vec<S> = Vec::with_capacity(cols);
        let mut hi: Vec<Option<S>> = Vec::with_capacity(cols);
        for j in 0..n {
            lo.push(S::from_i64(self.lo[j]));
            hi.push(Some(S::from_i64(self.hi[j])));
        }
        for (_, sense, _) in &self.rows {
            lo.push(S::zero());
            hi.push(if *sense == RowSense::Eq { Some(S::zero()) } else { None });
        }
        for _ in 0..m {
            lo.push(S::zero());
            hi.push(None);
        }
        let mut t = vec![S::zero(); m * cols];
        let mut beta = Vec::with_capacity(m);
        for (i, (coeffs, sense, rhs)) in self.rows.iter().enumerate() {
            let mut resid = *rhs as i128;
            for (j, a) in coeffs {
                resid -= *a as i128 * self.lo[*j] as i128;
            }
            let tau: i64 = if resid >= 0 { 1 } else { -1 };
            for (j, a) in coeffs {
                t[i * cols + j] = S::from_i64(a * tau);
            }
            let sigma = if *sense == RowSense::Ge { -1 } else { 1 };
            t[i * cols + n + i] = S::from_i64(sigma * tau);
            t[i * cols + n + m + i] = S::from_i64(1);
            beta.push(S::from_i64((resid.abs()) as i64));
        }
        let basis: Vec<usize> = (0..m).map(|i| n + m + i).collect();
        let mut is_basic = vec![false; cols];
        for b in &basis {
            is_basic[*b] = true;
        }
        let mut tab = Tableau { m, cols, t, beta, basis, lo, hi, at_upper: vec![false; cols], is_basic };
        let max_iter = 50 * (cols + m) + 1000;

        let mut c1 = vec![S::zero(); cols];
        for c in c1.iter_mut().skip(n + m) {
            *c = S::from_i64(1);
        }
        if !tab.optimise(&c1, max_iter) {
            return LpOutcome::Stalled;
        }
        let infeas: f64 = (0..m).filter(|i| tab.basis[*i] >= n + m).map(|i| tab.beta[i].to_f64()).sum();
        let infeasible = if S::EXACT {
            (0..m).any(|i| tab.basis[i] >= n + m && tab.beta[i].is_pos())
        } else {
            infeas > FEASIBILITY_MARGIN
        };
        if infeasible {
            return LpOutcome::Infeasible;
        }
        for j in n + m..cols {
            tab.hi[j] = Some(S::zero());
        }
        for i in 0..m {
            if tab.basis[i] >= n + m {
                tab.beta[i] = S::zero();
            }
        }
        let mut c2 = vec![S::zero(); cols];
        for j in 0..n {
            c2[j] = S::from_f64(self.cost[j]);
        }
        if !tab.optimise(&c2, max_iter) {
            return LpOutcome::Stalled;
        }
        let mut x: Vec<S> = (0..n).map(|j| tab.nonbasic_value(j)).collect();
        for i in 0..m {
            if tab.basis[i] < n {
                x[tab.basis[i]] = tab.beta[i].clone();
            }
        }
        let objective = x.iter().zip(self.cost).map(|(v, c)| v.to_f64() * c).sum();
        LpOutcome::Optimal { x, objective }
    }
}
