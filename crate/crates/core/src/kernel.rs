//! Stationary covariance functions.
//!
//! Matérn kernels with ν ∈ {1/2, 3/2, 5/2} use their closed forms. Any other
//! smoothness goes through the modified Bessel function of the second kind,
//! evaluated with Temme's series for x < 2 and Steed's continued fraction
//! otherwise, then carried up to ν by forward recurrence. Both expansions are
//! truncated once the next term falls below `BESSEL_EPS` relative to the sum.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const BESSEL_EPS: f64 = 1e-16;
const BESSEL_MAX_TERMS: usize = 10_000;
const TEMME_CUTOVER: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    Matern { nu: f64 },
    SquaredExponential,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub family: KernelFamily,
    pub lengthscale: f64,
    pub signal_variance: f64,
}

impl KernelSpec {
    pub fn matern(lengthscale: f64, nu: f64, signal_variance: f64) -> Result<Self> {
        let spec = Self {
            family: KernelFamily::Matern { nu },
            lengthscale,
            signal_variance,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn squared_exponential(lengthscale: f64, signal_variance: f64) -> Result<Self> {
        let spec = Self {
            family: KernelFamily::SquaredExponential,
            lengthscale,
            signal_variance,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(Error::invalid("kernel.lengthscale", format!("{} is not > 0", self.lengthscale)));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::invalid(
                "kernel.signal_variance",
                format!("{} is not > 0", self.signal_variance),
            ));
        }
        if let KernelFamily::Matern { nu } = self.family {
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(Error::invalid("kernel.nu", format!("{nu} is not > 0")));
            }
        }
        Ok(())
    }

    /// k(z, z′). Fails only on a dimension mismatch.
    pub fn eval(&self, z: &[f64], z_prime: &[f64]) -> Result<f64> {
        if z.len() != z_prime.len() {
            return Err(Error::usage(format!(
                "kernel arguments have dimensions {} and {}",
                z.len(),
                z_prime.len()
            )));
        }
        Ok(self.eval_unchecked(z, z_prime))
    }

    pub(crate) fn eval_unchecked(&self, z: &[f64], z_prime: &[f64]) -> f64 {
        let r2: f64 = z.iter().zip(z_prime).map(|(a, b)| (a - b) * (a - b)).sum();
        self.signal_variance * self.correlation(r2)
    }

    /// Correlation at squared distance `r2`; equals 1 at zero distance.
    fn correlation(&self, r2: f64) -> f64 {
        let l = self.lengthscale;
        match self.family {
            KernelFamily::SquaredExponential => (-0.5 * r2 / (l * l)).exp(),
            KernelFamily::Matern { nu } => {
                let r = r2.sqrt() / l;
                if nu == 0.5 {
                    (-r).exp()
                } else if nu == 1.5 {
                    let s = 3f64.sqrt() * r;
                    (1.0 + s) * (-s).exp()
                } else if nu == 2.5 {
                    let s = 5f64.sqrt() * r;
                    (1.0 + s + s * s / 3.0) * (-s).exp()
                } else {
                    matern_general(nu, r)
                }
            }
        }
    }
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            family: KernelFamily::Matern { nu: 10.0 },
            lengthscale: 1.0,
            signal_variance: 1.0,
        }
    }
}

/// Matérn correlation at scaled distance `r = |z − z′| / l` via the Bessel form
/// `2^{1−ν}/Γ(ν) · x^ν K_ν(x)`, `x = √(2ν) r`.
pub fn matern_general(nu: f64, r: f64) -> f64 {
    let x = (2.0 * nu).sqrt() * r;
    if x == 0.0 {
        return 1.0;
    }
    let (mantissa, log_scale) = bessel_k_scaled(nu, x);
    if mantissa <= 0.0 {
        return 0.0;
    }
    let log_value =
        (1.0 - nu) * std::f64::consts::LN_2 - libm::lgamma(nu) + nu * x.ln() + mantissa.ln() + log_scale;
    log_value.exp().min(1.0)
}

/// K_ν(x) for ν ≥ 0, x > 0.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    let (mantissa, log_scale) = bessel_k_scaled(nu, x);
    mantissa * log_scale.exp()
}

/// K_ν(x) as `mantissa · exp(log_scale)` so large orders at small x and large
/// x at any order stay representable.
fn bessel_k_scaled(nu: f64, x: f64) -> (f64, f64) {
    debug_assert!(nu >= 0.0 && x > 0.0);
    let nl = (nu + 0.5).floor();
    let mu = nu - nl;
    let (mut k_mu, mut k_mu1, mut log_scale) = if x < TEMME_CUTOVER {
        let (a, b) = temme_series(mu, x);
        (a, b, 0.0)
    } else {
        let (a, b) = steed_cf2(mu, x);
        (a, b, -x)
    };
    let two_over_x = 2.0 / x;
    for i in 1..=(nl as usize) {
        let next = (mu + i as f64) * two_over_x * k_mu1 + k_mu;
        k_mu = k_mu1;
        k_mu1 = next;
        if k_mu1 > 1e250 {
            k_mu /= 1e250;
            k_mu1 /= 1e250;
            log_scale += 250.0 * std::f64::consts::LN_10;
        }
    }
    (k_mu, log_scale)
}

/// K_μ(x), K_{μ+1}(x) for |μ| ≤ 1/2 and small x.
fn temme_series(mu: f64, x: f64) -> (f64, f64) {
    let x2 = 0.5 * x;
    let pimu = std::f64::consts::PI * mu;
    let fact = if pimu.abs() < f64::EPSILON { 1.0 } else { pimu / pimu.sin() };
    let d = -x2.ln();
    let e = mu * d;
    let fact2 = if e.abs() < f64::EPSILON { 1.0 } else { e.sinh() / e };
    let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let e = e.exp();
    let mut p = 0.5 * e / gampl;
    let mut q = 0.5 / (e * gammi);
    let mut c = 1.0;
    let d = x2 * x2;
    let mut sum1 = p;
    let mu2 = mu * mu;
    for i in 1..=BESSEL_MAX_TERMS {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu2);
        c *= d / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - fi * ff);
        if del.abs() < sum.abs() * BESSEL_EPS {
            break;
        }
    }
    (sum, sum1 * 2.0 / x)
}

/// K_μ(x), K_{μ+1}(x) for |μ| ≤ 1/2 and x ≥ 2, returned without the e^{−x} factor.
fn steed_cf2(mu: f64, x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu * mu;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..=BESSEL_MAX_TERMS {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < BESSEL_EPS {
            break;
        }
    }
    let h = a1 * h;
    let k_mu = (std::f64::consts::PI / (2.0 * x)).sqrt() / s;
    let k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
    (k_mu, k_mu1)
}

/// Coefficients of 1/Γ(z) = Σ c_k z^k (Abramowitz & Stegun 6.1.34), c_1 first.
const RECIP_GAMMA: [f64; 26] = [
    1.0000000000000000,
    0.5772156649015329,
    -0.6558780715202538,
    -0.0420026350340952,
    0.1665386113822915,
    -0.0421977345555443,
    -0.0096219715278770,
    0.0072189432466630,
    -0.0011651675918591,
    -0.0002152416741149,
    0.0001280502823882,
    -0.0000201348547807,
    -0.0000012504934821,
    0.0000011330272320,
    -0.0000002056338417,
    0.0000000061160950,
    0.0000000050020075,
    -0.0000000011812746,
    0.0000000001043427,
    0.0000000000077823,
    -0.0000000000036968,
    0.0000000000005100,
    -0.0000000000000206,
    -0.0000000000000054,
    0.0000000000000014,
    0.0000000000000001,
];

/// (Γ₁, Γ₂, 1/Γ(1+μ), 1/Γ(1−μ)) for Temme's series. 1/Γ(1+μ) = Σ c_{j+1} μ^j,
/// so the odd and even parts give Γ₁ and Γ₂ without cancellation at μ → 0.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let mu2 = mu * mu;
    let mut even = 0.0;
    let mut odd = 0.0;
    let mut pow = 1.0;
    for pair in RECIP_GAMMA.chunks(2) {
        even += pair[0] * pow;
        if let Some(c) = pair.get(1) {
            odd += c * pow;
        }
        pow *= mu2;
    }
    let gampl = even + mu * odd;
    let gammi = even - mu * odd;
    (-odd, even, gampl, gammi)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// K_ν(x) = ∫₀^∞ exp(−x cosh t) cosh(ν t) dt, trapezoid rule.
    fn bessel_k_quadrature(nu: f64, x: f64) -> f64 {
        let h: f64 = 1e-3;
        let mut sum = 0.5 * (-x).exp();
        let mut t = h;
        loop {
            let term = (-x * t.cosh() + nu * t).exp() * 0.5 * (1.0 + (-2.0 * nu * t).exp());
            sum += term;
            if term < 1e-300 || (t > 1.0 && term < sum * 1e-18) {
                break;
            }
            t += h;
        }
        sum * h
    }

    #[test]
    fn zero_distance_is_signal_variance() {
        for spec in [
            KernelSpec::matern(1.0, 0.5, 2.0).unwrap(),
            KernelSpec::matern(0.3, 10.0, 0.7).unwrap(),
            KernelSpec::matern(2.0, 1.2, 1.0).unwrap(),
            KernelSpec::squared_exponential(1.0, 3.0).unwrap(),
        ] {
            let z = [0.4, -1.3];
            assert_eq!(spec.eval(&z, &z).unwrap(), spec.signal_variance);
        }
    }

    #[test]
    fn closed_form_values() {
        let exp_kernel = KernelSpec::matern(1.0, 0.5, 1.0).unwrap();
        let v = exp_kernel.eval(&[0.0], &[1.0]).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-15);
        assert!((v - 0.3679).abs() < 1e-4);

        let se = KernelSpec::squared_exponential(1.0, 1.0).unwrap();
        let v = se.eval(&[0.0, 0.0], &[2.0, 0.0]).unwrap();
        assert!((v - (-2f64).exp()).abs() < 1e-15);
        assert!((v - 0.1353).abs() < 1e-4);
    }

    #[test]
    fn general_path_agrees_with_closed_forms() {
        for nu in [0.5, 1.5, 2.5] {
            let spec = KernelSpec::matern(1.0, nu, 1.0).unwrap();
            for i in 0..400 {
                let r = i as f64 * 0.025;
                let closed = spec.correlation(r * r);
                let general = matern_general(nu, r);
                assert!(
                    (closed - general).abs() < 1e-12,
                    "nu={nu} r={r}: closed {closed} vs general {general}"
                );
            }
        }
    }

    #[test]
    fn bessel_matches_reference_values() {
        let cases = [
            (0.0, 1.0, 0.421_024_438_240_708_3),
            (1.0, 1.0, 0.601_907_230_197_234_6),
            (0.0, 2.0, 0.113_893_872_749_533_4),
            (1.0, 2.0, 0.139_865_881_816_522_4),
        ];
        for (nu, x, expected) in cases {
            let got = bessel_k(nu, x);
            assert!((got - expected).abs() < 1e-14 * expected.max(1.0), "K_{nu}({x}) = {got}");
        }
    }

    #[test]
    fn bessel_matches_integral_representation() {
        for nu in [0.3, 2.0, 7.25, 10.0] {
            for x in [0.05, 0.4, 1.0, 1.9, 2.1, 5.0, 12.0, 40.0] {
                let got = bessel_k(nu, x);
                let oracle = bessel_k_quadrature(nu, x);
                assert!(
                    ((got - oracle) / oracle).abs() < 1e-10,
                    "K_{nu}({x}): {got} vs quadrature {oracle}"
                );
            }
        }
    }

    #[test]
    fn recip_gamma_series_matches_libm() {
        for mu in [-0.5, -0.31, -1e-3, 0.0, 1e-3, 0.2, 0.5] {
            let (_, _, gampl, gammi) = temme_gammas(mu);
            assert!((gampl - 1.0 / libm::tgamma(1.0 + mu)).abs() < 1e-15);
            assert!((gammi - 1.0 / libm::tgamma(1.0 - mu)).abs() < 1e-15);
        }
    }

    #[test]
    fn nu_ten_is_bounded_monotone_and_finite() {
        let spec = KernelSpec::matern(1.0, 10.0, 1.0).unwrap();
        let mut prev = 1.0;
        for i in 1..2000 {
            let r = i as f64 * 1e-2;
            let v = spec.eval(&[0.0], &[r]).unwrap();
            assert!(v.is_finite() && (0.0..=1.0).contains(&v));
            assert!(v <= prev + 1e-15, "non-monotone at r={r}");
            prev = v;
        }
        // tiny separations must not overflow the x^ν K_ν(x) product
        let v = spec.eval(&[0.0], &[1e-12]).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_in_arguments() {
        let spec = KernelSpec::matern(0.8, 10.0, 1.3).unwrap();
        let a = [0.1, 2.3, -0.7];
        let b = [1.4, 0.2, 0.5];
        assert_eq!(spec.eval(&a, &b).unwrap(), spec.eval(&b, &a).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_usage_error() {
        let spec = KernelSpec::default();
        assert!(matches!(spec.eval(&[0.0], &[0.0, 1.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        assert!(KernelSpec::matern(0.0, 1.0, 1.0).is_err());
        assert!(KernelSpec::matern(1.0, -1.0, 1.0).is_err());
        assert!(KernelSpec::squared_exponential(1.0, 0.0).is_err());
    }
}
