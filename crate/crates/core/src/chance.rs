//! Translation of discounted chance specifications into moment bounds, and
//! the exact discounted chance mass of a closed loop for verification.
//!
//! For `sum_t alpha^t Pr(|g'x_t| >= h) <= eps` the Markov translation
//! `Q1 = g g'`, `beta = eps h^2` is sound for every policy: if the solved
//! moments satisfy `g'Z_xx g <= eps h^2` then the chance mass is at most
//! `eps`. The Gaussian translation `beta = h^2 / (2 erfinv(1 - eps m^{-1}
//! ... )^2)` is implemented literally as a tighter alternative; its exactness
//! rests on treating the normalized occupancy as one Gaussian, whereas under
//! a linear policy it is a discounted mixture of Gaussians, so only the
//! Markov direction is asserted as a guarantee.

use crate::error::{Error, Result};
use crate::problem::{ChanceMode, ChanceSpec, DiscountedLqgProblem, MomentBound, QuadraticStageCost};
use crate::riccati::discounted_spectral_radius;
use crate::scalar::{as_f64, fl, FloatT};
use crate::sim::truncation_horizon;
use nalgebra::DMatrix;

/// `erf(x)` by Maclaurin series near zero and a continued fraction for the
/// complement in the tails; accurate to a few ulps in `f64`.
pub fn erf<T: FloatT>(x: T) -> T {
    if x < T::zero() {
        return -erf(-x);
    }
    if x <= fl(2.0) {
        erf_series(x)
    } else {
        T::one() - erfc_continued_fraction(x)
    }
}

/// Complementary error function, relative-accurate in the upper tail.
pub fn erfc<T: FloatT>(x: T) -> T {
    if x < T::zero() {
        return fl::<T>(2.0) - erfc(-x);
    }
    if x <= fl(2.0) {
        T::one() - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

fn erf_series<T: FloatT>(x: T) -> T {
    // 2/sqrt(pi) * sum_k (-1)^k x^(2k+1) / (k! (2k+1))
    let two_over_sqrt_pi = fl::<T>(std::f64::consts::FRAC_2_SQRT_PI);
    let x2 = x * x;
    let mut coeff = x; // (-1)^k x^(2k+1) / k!
    let mut sum = x;
    let eps = fl::<T>(1e-18);
    for k in 1..200usize {
        coeff *= -x2 / fl_usize::<T>(k);
        let term = coeff / fl_usize::<T>(2 * k + 1);
        sum += term;
        if term.abs() <= eps * sum.abs() {
            break;
        }
    }
    two_over_sqrt_pi * sum
}

fn fl_usize<T: FloatT>(k: usize) -> T {
    fl::<T>(k as f64)
}

/// Modified Lentz evaluation of
/// `erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + (2/2)/(x + ...)))`
/// for `x >= 2`.
fn erfc_continued_fraction<T: FloatT>(x: T) -> T {
    let tiny = fl::<T>(1e-300);
    let eps = fl::<T>(1e-17);
    let mut f = x;
    let mut c = x;
    let mut d = T::zero();
    for k in 1..400usize {
        let a = fl_usize::<T>(k) * fl::<T>(0.5);
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = T::one() / d;
        let delta = c * d;
        f *= delta;
        if (delta - T::one()).abs() < eps {
            break;
        }
    }
    let sqrt_pi = fl::<T>(std::f64::consts::PI).sqrt();
    (-x * x).exp() / (sqrt_pi * f)
}

/// Inverse of [`erfc`] on `(0, 2)` by bisection refined with safeguarded
/// Newton; the root satisfies `|erfc(t) - c| <= 1e-12 (1 + c)`.
pub fn erfc_inv<T: FloatT>(c: T) -> Result<T> {
    let two = fl::<T>(2.0);
    if c <= T::zero() || c >= two {
        return Err(Error::InvalidArgument(format!(
            "erfc_inv argument {} outside (0, 2)",
            as_f64(c)
        )));
    }
    if c > T::one() {
        return Ok(-erfc_inv(two - c)?);
    }
    if c == T::one() {
        return Ok(T::zero());
    }
    // Bracket [0, 30]: erfc(30) underflows below the smallest positive c.
    let mut lo = T::zero();
    let mut hi = fl::<T>(30.0);
    for _ in 0..80 {
        let mid = (lo + hi) * fl::<T>(0.5);
        if erfc(mid) > c {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut t = (lo + hi) * fl::<T>(0.5);
    let sqrt_pi = fl::<T>(std::f64::consts::PI).sqrt();
    for _ in 0..8 {
        // d erfc/dt = -2 exp(-t^2)/sqrt(pi); guard the exp against overflow.
        let t2 = t * t;
        if t2 > fl(700.0) {
            break;
        }
        let newton = t + (erfc(t) - c) * sqrt_pi * fl::<T>(0.5) * t2.exp();
        if newton > lo && newton < hi {
            t = newton;
        } else {
            t = (lo + hi) * fl::<T>(0.5);
        }
        if erfc(t) > c {
            lo = t;
        } else {
            hi = t;
        }
    }
    Ok(t)
}

/// Inverse error function on `(-1, 1)`, accurate to `1e-12` or better.
pub fn erf_inv<T: FloatT>(y: T) -> Result<T> {
    if y.abs() >= T::one() {
        return Err(Error::InvalidArgument(format!(
            "erf_inv argument {} outside (-1, 1)",
            as_f64(y)
        )));
    }
    erfc_inv(T::one() - y)
}

/// Standard normal CDF through the complementary error function; accurate in
/// both tails.
pub fn normal_cdf<T: FloatT>(x: T) -> T {
    let sqrt2 = fl::<T>(std::f64::consts::SQRT_2);
    erfc(-x / sqrt2) * fl::<T>(0.5)
}

/// `Pr(|v| >= h)` for `v ~ N(mu, sigma^2)`; degenerates to an indicator when
/// `sigma = 0`.
pub fn prob_abs_ge<T: FloatT>(mu: T, sigma: T, h: T) -> T {
    if sigma <= T::zero() {
        return if mu.abs() >= h { T::one() } else { T::zero() };
    }
    let sqrt2 = fl::<T>(std::f64::consts::SQRT_2);
    let upper = erfc((h - mu) / (sigma * sqrt2));
    let lower = erfc((h + mu) / (sigma * sqrt2));
    (upper + lower) * fl::<T>(0.5)
}

/// Markov translation: `Q1 = g g'`, `R1 = 0`, `beta = eps h^2`. Sound for
/// any policy.
pub fn markov_bound<T: FloatT>(spec: &ChanceSpec<T>, num_inputs: usize) -> MomentBound<T> {
    let q1 = &spec.g * spec.g.transpose();
    MomentBound {
        cost: QuadraticStageCost {
            q: q1,
            r: DMatrix::zeros(num_inputs, num_inputs),
        },
        beta: spec.eps * spec.h * spec.h,
    }
}

/// Gaussian translation: `beta = h^2 / (2 t^2)` with `erfc(t) = eps (1 -
/// alpha)` (that is, `t = erfinv(1 - eps/m)` for the total mass `m`).
/// Requires `0 < eps < m`.
pub fn gaussian_bound<T: FloatT>(
    spec: &ChanceSpec<T>,
    alpha: T,
    num_inputs: usize,
) -> Result<MomentBound<T>> {
    let mass = T::one() / (T::one() - alpha);
    if spec.eps >= mass {
        return Err(Error::InvalidArgument(format!(
            "gaussian chance translation needs eps < 1/(1 - alpha) = {}, got eps = {}",
            as_f64(mass),
            as_f64(spec.eps)
        )));
    }
    if spec.eps <= T::zero() {
        return Err(Error::InvalidArgument("eps must be positive".into()));
    }
    // erfc form of the printed erfinv(1 - eps/m) avoids cancellation for
    // small eps/m.
    let t = erfc_inv(spec.eps / mass)?;
    let q1 = &spec.g * spec.g.transpose();
    let beta = spec.h * spec.h / (fl::<T>(2.0) * t * t);
    Ok(MomentBound {
        cost: QuadraticStageCost {
            q: q1,
            r: DMatrix::zeros(num_inputs, num_inputs),
        },
        beta,
    })
}

/// Replaces every chance spec by its moment-bound translation. The builders
/// only accept problems whose chance list is empty, so call this first.
pub fn expand_chance_specs<T: FloatT>(
    p: &DiscountedLqgProblem<T>,
) -> Result<DiscountedLqgProblem<T>> {
    p.check_dimensions()?;
    let mut out = p.clone();
    for spec in &p.chance_specs {
        if spec.h <= T::zero() || spec.g.iter().all(|&v| v == T::zero()) {
            return Err(Error::InvalidArgument(
                "chance spec needs h > 0 and g != 0".into(),
            ));
        }
        let bound = match spec.mode {
            ChanceMode::Markov => markov_bound(spec, p.num_inputs()),
            ChanceMode::Gaussian => gaussian_bound(spec, p.alpha, p.num_inputs())?,
        };
        out.moment_bounds.push(bound);
    }
    out.chance_specs.clear();
    Ok(out)
}

/// Exact discounted chance mass plus its truncation bound.
#[derive(Debug, Clone, Copy)]
pub struct ChanceMass<T: FloatT> {
    /// `sum_{t <= T} alpha^t Pr(|g'x_t| >= h)` under the closed loop.
    pub mass: T,
    /// Tail bound `alpha^{T+1} / (1 - alpha)` of the dropped terms.
    pub truncation: T,
    pub horizon: usize,
}

/// Propagates the exact per-time Gaussian state laws under `u = K x` and sums
/// the discounted exceedance probabilities until the tail bound drops below
/// `tail_tol`.
pub fn analytic_chance_mass<T: FloatT>(
    p: &DiscountedLqgProblem<T>,
    gain: &nalgebra::DMatrix<T>,
    g: &nalgebra::DVector<T>,
    h: T,
    tail_tol: T,
) -> Result<ChanceMass<T>> {
    p.check_dimensions()?;
    if g.len() != p.num_states() {
        return Err(Error::DimensionMismatch("chance direction g".into()));
    }
    let closed = &p.system.a + &p.system.b * gain;
    let rho = discounted_spectral_radius(&closed, p.alpha);
    if rho >= T::one() {
        return Err(Error::Unstable {
            rho: as_f64(rho),
            context: "analytic_chance_mass".into(),
        });
    }
    let horizon = truncation_horizon(p.alpha, tail_tol)?;
    let mut mean = p.init.mean.clone();
    let mut cov = p.init.cov.clone();
    let mut mass = T::zero();
    let mut disc = T::one();
    for _ in 0..=horizon {
        let mu = g.dot(&mean);
        let var = (g.transpose() * &cov * g)[(0, 0)].max(T::zero());
        mass += disc * prob_abs_ge(mu, var.sqrt(), h);
        disc *= p.alpha;
        mean = &closed * &mean;
        cov = &closed * &cov * closed.transpose() + &p.system.w;
    }
    // disc is now alpha^{horizon+1}.
    let truncation = disc / (T::one() - p.alpha);
    Ok(ChanceMass {
        mass,
        truncation,
        horizon,
    })
}
