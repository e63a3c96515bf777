//! Exact discrete Laplace and discrete Gaussian samplers.
//!
//! Both samplers work on exact rationals and only ever draw uniform integers,
//! following Canonne, Kamath and Steinke (2020): Bernoulli(exp(-γ)) is built
//! from Bernoulli(γ/k) trials, the discrete Laplace from a uniform draw plus a
//! geometric tail, and the discrete Gaussian by rejection from a discrete
//! Laplace envelope. No floating-point value influences the output law.
//!
//! Real-valued parameters are rounded *up* to a multiple of `2^-20` before
//! sampling, which only adds noise.

use rand::Rng;

use super::DpError;

const PARAM_SCALE_BITS: u32 = 20;
/// Largest accepted parameter (variance or scale).
const MAX_PARAM: f64 = (1u64 << 36) as f64;

/// Non-negative rational `num / den` with `den > 0`, kept reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Rational {
    num: u128,
    den: u128,
}

impl Rational {
    fn new(num: u128, den: u128) -> Self {
        let g = gcd(num, den);
        Self {
            num: num / g,
            den: den / g,
        }
    }

    /// Smallest multiple of `2^-20` that is `≥ value`.
    fn ceil_from_f64(value: f64) -> Self {
        let scaled = (value * f64::from(1u32 << PARAM_SCALE_BITS)).ceil();
        Self::new(scaled as u128, 1u128 << PARAM_SCALE_BITS)
    }

    fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

fn isqrt(n: u128) -> u128 {
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as u128;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

fn validate_param(value: f64, err: fn(f64) -> DpError) -> Result<Rational, DpError> {
    if !(value > 0.0 && value <= MAX_PARAM) {
        return Err(err(value));
    }
    Ok(Rational::ceil_from_f64(value))
}

/// Bernoulli(num/den), `num ≤ den`.
fn bernoulli_ratio<R: Rng + ?Sized>(num: u128, den: u128, rng: &mut R) -> bool {
    rng.gen_range(0..den) < num
}

/// Bernoulli(exp(-num/den)) for `0 ≤ num/den ≤ 1`.
fn bernoulli_exp_unit<R: Rng + ?Sized>(num: u128, den: u128, rng: &mut R) -> bool {
    let mut k: u128 = 1;
    loop {
        // Bernoulli(γ / k)
        let scaled_den = den
            .checked_mul(k)
            .expect("rational parameter exceeds u128 range");
        if !bernoulli_ratio(num, scaled_den, rng) {
            break;
        }
        k += 1;
    }
    k % 2 == 1
}

/// Bernoulli(exp(-num/den)) for any `num/den ≥ 0`.
fn bernoulli_exp<R: Rng + ?Sized>(num: u128, den: u128, rng: &mut R) -> bool {
    let whole = num / den;
    for _ in 0..whole {
        if !bernoulli_exp_unit(1, 1, rng) {
            return false;
        }
    }
    bernoulli_exp_unit(num % den, den, rng)
}

/// Integer `Y` with `P(Y = y) ∝ exp(-|y| · s / t)`.
fn discrete_laplace_raw<R: Rng + ?Sized>(t: u128, s: u128, rng: &mut R) -> i64 {
    loop {
        let u = rng.gen_range(0..t);
        if !bernoulli_exp_unit(u, t, rng) {
            continue;
        }
        let mut v: u128 = 0;
        while bernoulli_exp_unit(1, 1, rng) {
            v += 1;
        }
        let magnitude = (u + t * v) / s;
        let negative = rng.gen::<bool>();
        if negative && magnitude == 0 {
            continue;
        }
        let magnitude = magnitude as i64;
        return if negative { -magnitude } else { magnitude };
    }
}

/// Discrete Laplace distribution on ℤ with mass ∝ `exp(-|x| / b)`.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteLaplace {
    scale: Rational,
}

impl DiscreteLaplace {
    pub fn new(scale: f64) -> Result<Self, DpError> {
        Ok(Self {
            scale: validate_param(scale, DpError::InvalidScale)?,
        })
    }

    /// Effective scale after rounding up.
    pub fn scale(&self) -> f64 {
        self.scale.to_f64()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        discrete_laplace_raw(self.scale.num, self.scale.den, rng)
    }
}

/// Discrete Gaussian `𝒩_ℤ(0, σ²)`: mass ∝ `exp(-x² / (2σ²))` on ℤ.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteGaussian {
    sigma2: Rational,
    /// Envelope scale `⌊σ⌋ + 1`.
    envelope: u128,
}

impl DiscreteGaussian {
    pub fn new(sigma2: f64) -> Result<Self, DpError> {
        let sigma2 = validate_param(sigma2, DpError::InvalidVariance)?;
        let envelope = isqrt(sigma2.num / sigma2.den) + 1;
        Ok(Self { sigma2, envelope })
    }

    /// Effective variance parameter after rounding up.
    pub fn sigma2(&self) -> f64 {
        self.sigma2.to_f64()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let Rational { num: n, den: d } = self.sigma2;
        let t = self.envelope;
        loop {
            let y = discrete_laplace_raw(t, 1, rng);
            // γ = (|y| − σ²/t)² / (2σ²) = (|y|·t·d − n)² / (2·n·d·t²)
            let scaled = u128::from(y.unsigned_abs()) * t * d;
            let diff = scaled.abs_diff(n);
            let gamma_num = diff.checked_mul(diff);
            let gamma_den = 2 * n * d * t * t;
            match gamma_num {
                Some(num) => {
                    if bernoulli_exp(num, gamma_den, rng) {
                        return y;
                    }
                }
                // |y| beyond ~2^14 envelope widths: acceptance mass is nil.
                None => continue,
            }
        }
    }
}

/// One exact draw from `𝒩_ℤ(0, σ²)`.
pub fn sample_discrete_gaussian<R: Rng + ?Sized>(sigma2: f64, rng: &mut R) -> Result<i64, DpError> {
    Ok(DiscreteGaussian::new(sigma2)?.sample(rng))
}

/// One exact draw from the discrete Laplace with scale `b`.
pub fn sample_discrete_laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> Result<i64, DpError> {
    Ok(DiscreteLaplace::new(scale)?.sample(rng))
}
