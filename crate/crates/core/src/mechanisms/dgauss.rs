//! Exact discrete Gaussian sampling by rejection from a discrete Laplace proposal,
//! using only rational arithmetic and uniform integers.

use num_bigint::{BigInt, RandBigInt};
use num_integer::Roots;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;

fn bernoulli<R: Rng>(p: &BigRational, rng: &mut R) -> bool {
    if p >= &BigRational::one() {
        return true;
    }
    if !p.is_positive() {
        return false;
    }
    let d = p.denom().magnitude();
    let u = rng.gen_biguint_below(d);
    BigInt::from(u) < *p.numer()
}

/// Bernoulli(exp(-gamma)) for rational `gamma >= 0`.
fn bernoulli_exp<R: Rng>(gamma: &BigRational, rng: &mut R) -> bool {
    if gamma <= &BigRational::one() {
        let mut k = BigInt::one();
        loop {
            if !bernoulli(&(gamma / BigRational::from_integer(k.clone())), rng) {
                break;
            }
            k += 1;
        }
        return k.bit(0);
    }
    let whole = gamma.floor();
    let one = BigRational::one();
    let mut i = BigRational::zero();
    while i < whole {
        if !bernoulli_exp(&one, rng) {
            return false;
        }
        i += &one;
    }
    bernoulli_exp(&(gamma - whole), rng)
}

/// P(X = x) proportional to exp(-|x| / t).
fn discrete_laplace<R: Rng>(t: &BigInt, rng: &mut R) -> BigInt {
    let tr = BigRational::from_integer(t.clone());
    let one = BigRational::one();
    loop {
        let u = BigInt::from(rng.gen_biguint_below(t.magnitude()));
        if !bernoulli_exp(&(BigRational::from_integer(u.clone()) / &tr), rng) {
            continue;
        }
        let mut v = BigInt::zero();
        while bernoulli_exp(&one, rng) {
            v += 1;
        }
        let x = u + t * v;
        let negative = rng.gen::<bool>();
        if negative && x.is_zero() {
            continue;
        }
        return if negative { -x } else { x };
    }
}

/// One draw from the discrete Gaussian on the integers with parameter `sigma2`.
pub fn sample_discrete_gaussian<R: Rng>(sigma2: &BigRational, rng: &mut R) -> BigInt {
    let t: BigInt = Roots::sqrt(&sigma2.floor().to_integer()) + 1;
    let tr = BigRational::from_integer(t.clone());
    let two_sigma2 = sigma2 * BigRational::from_integer(2.into());
    loop {
        let y = discrete_laplace(&t, rng);
        let dev = BigRational::from_integer(y.abs()) - sigma2 / &tr;
        let gamma = &dev * &dev / &two_sigma2;
        if bernoulli_exp(&gamma, rng) {
            return y;
        }
    }
}

/// `value` plus discrete Gaussian noise with parameter `variance`.
pub fn discrete_gaussian<R: Rng>(value: i64, variance: f64, rng: &mut R) -> i64 {
    assert!(variance.is_finite() && variance > 0.0, "variance must be finite and positive");
    let sigma2 = BigRational::from_float(variance).expect("finite variance");
    let noise = sample_discrete_gaussian(&sigma2, rng);
    value.saturating_add(noise.to_i64().unwrap_or(if noise.is_negative() { i64::MIN } else { i64::MAX }))
}
