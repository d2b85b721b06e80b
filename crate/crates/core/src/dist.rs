//! Arm distributions and their inverse CDFs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reward distribution of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ArmSpec {
    Gaussian { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
    /// Uniform on `[lo, hi]`.
    BoundedUniform { lo: f64, hi: f64 },
}

impl ArmSpec {
    pub fn gaussian(mean: f64, sd: f64) -> Self {
        ArmSpec::Gaussian { mean, sd }
    }

    pub fn bernoulli(p: f64) -> Self {
        ArmSpec::Bernoulli { p }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ArmSpec::Gaussian { mean, sd } => {
                if !mean.is_finite() {
                    return Err(Error::domain(format!("gaussian mean {mean} is not finite")));
                }
                if !(sd > 0.0 && sd.is_finite()) {
                    return Err(Error::domain(format!("gaussian sd must be > 0, got {sd}")));
                }
            }
            ArmSpec::Bernoulli { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::domain(format!("bernoulli p must lie in [0,1], got {p}")));
                }
            }
            ArmSpec::BoundedUniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::domain(format!("uniform needs lo < hi, got [{lo}, {hi}]")));
                }
            }
        }
        Ok(())
    }

    /// Analytic mean of the family.
    pub fn mean(&self) -> f64 {
        match *self {
            ArmSpec::Gaussian { mean, .. } => mean,
            ArmSpec::Bernoulli { p } => p,
            ArmSpec::BoundedUniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    /// Convex hull of the support, `None` for unbounded families.
    pub fn support_hull(&self) -> Option<(f64, f64)> {
        match *self {
            ArmSpec::Gaussian { .. } => None,
            ArmSpec::Bernoulli { .. } => Some((0.0, 1.0)),
            ArmSpec::BoundedUniform { lo, hi } => Some((lo, hi)),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, ArmSpec::Bernoulli { .. })
    }
}

/// Generalized inverse CDF `F^{-1}(u) = inf { x : F(x) >= u }`.
pub fn inverse_cdf(arm: &ArmSpec, u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::domain(format!("inverse_cdf needs u in (0,1), got {u}")));
    }
    Ok(inverse_cdf_unchecked(arm, u))
}

#[inline]
pub(crate) fn inverse_cdf_unchecked(arm: &ArmSpec, u: f64) -> f64 {
    match *arm {
        ArmSpec::Gaussian { mean, sd } => mean + sd * normal_quantile(u),
        ArmSpec::Bernoulli { p } => {
            if u <= 1.0 - p {
                0.0
            } else {
                1.0
            }
        }
        ArmSpec::BoundedUniform { lo, hi } => lo + u * (hi - lo),
    }
}

/// Standard normal quantile, Wichura's AS241 (PPND16).
///
/// Relative accuracy is about 1e-16 over (0, 1). Callers are responsible for
/// keeping `p` inside the open interval.
pub fn normal_quantile(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((r * 2509.080_928_730_122_7 + 33430.575_583_588_128) * r
                + 67265.770_927_008_7)
                * r
                + 45921.953_931_549_87)
                * r
                + 13731.693_765_509_461)
                * r
                + 1971.590_950_306_551_3)
                * r
                + 133.141_667_891_784_38)
                * r
                + 3.387_132_872_796_366_5)
            / (((((((r * 5226.495_278_852_545 + 28729.085_735_721_943) * r
                + 39307.895_800_092_71)
                * r
                + 21213.794_301_586_597)
                * r
                + 5394.196_021_424_751)
                * r
                + 687.187_007_492_057_9)
                * r
                + 42.313_330_701_600_91)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        (((((((r * 7.745_450_142_783_414e-4 + 0.022_723_844_989_269_184) * r
            + 0.241_780_725_177_450_6)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_546)
            * r
            + 1.423_437_110_749_683_5)
            / (((((((r * 1.050_750_071_644_416_9e-9 + 5.475_938_084_995_345e-4) * r
                + 0.015_198_666_563_616_457)
                * r
                + 0.148_103_976_427_480_08)
                * r
                + 0.689_767_334_985_100_1)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_759)
                * r
                + 1.0)
    } else {
        let r = r - 5.0;
        (((((((r * 2.010_334_399_292_288_1e-7 + 2.711_555_568_743_487_6e-5) * r
            + 0.001_242_660_947_388_078_4)
            * r
            + 0.026_532_189_526_576_124)
            * r
            + 0.296_560_571_828_504_9)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103)
            / (((((((r * 2.044_263_103_389_939_7e-15 + 1.421_511_758_316_446e-7) * r
                + 1.846_318_317_510_054_8e-5)
                * r
                + 7.868_691_311_456_133e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_8)
                * r
                + 0.599_832_206_555_888)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn gaussian_median() {
        assert_eq!(inverse_cdf(&ArmSpec::gaussian(0.0, 1.0), 0.5).unwrap(), 0.0);
    }

    #[test]
    fn bernoulli_threshold() {
        let arm = ArmSpec::bernoulli(0.3);
        assert_eq!(inverse_cdf(&arm, 0.65).unwrap(), 0.0);
        assert_eq!(inverse_cdf(&arm, 0.75).unwrap(), 1.0);
    }

    #[test]
    fn gaussian_one_sigma_against_independent_cdf() {
        // Phi(1) from statrs' erf, independent of AS241.
        let u = Normal::standard().cdf(1.0);
        assert!((u - 0.841_344_746).abs() < 1e-9);
        let x = inverse_cdf(&ArmSpec::gaussian(2.0, 1.0), u).unwrap();
        assert!((x - 3.0).abs() < 1e-6, "{x}");
    }

    /// Phi via musl's erfc, accurate to about one ulp.
    fn phi(x: f64) -> f64 {
        0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
    }

    #[test]
    fn quantile_inverts_cdf_over_grid() {
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            let x = normal_quantile(p);
            assert!((phi(x) - p).abs() < 1e-15, "p={p} x={x}");
        }
        for &p in &[1e-300, 1e-100, 1e-20, 1e-10] {
            let back = phi(normal_quantile(p));
            assert!(((back - p) / p).abs() < 1e-12, "p={p} back={back}");
        }
        let q = 1e-12;
        let x = normal_quantile(1.0 - q);
        // 1 - p is only known to ~1e-16 / 1e-12 relative
        assert!(((0.5 * libm::erfc(x / std::f64::consts::SQRT_2) - q) / q).abs() < 1e-3);
    }

    #[test]
    fn rejects_closed_endpoints() {
        let arm = ArmSpec::gaussian(0.0, 1.0);
        assert!(matches!(inverse_cdf(&arm, 0.0), Err(Error::Domain(_))));
        assert!(matches!(inverse_cdf(&arm, 1.0), Err(Error::Domain(_))));
        assert!(inverse_cdf(&arm, f64::NAN).is_err());
    }

    #[test]
    fn validation() {
        assert!(ArmSpec::gaussian(0.0, 0.0).validate().is_err());
        assert!(ArmSpec::bernoulli(1.5).validate().is_err());
        assert!(ArmSpec::BoundedUniform { lo: 1.0, hi: 1.0 }.validate().is_err());
        assert!(ArmSpec::BoundedUniform { lo: -1.0, hi: 3.0 }.validate().is_ok());
        assert_eq!(ArmSpec::BoundedUniform { lo: -1.0, hi: 3.0 }.mean(), 1.0);
    }

    proptest::proptest! {
        #[test]
        fn inverse_cdf_is_monotone(a in 1e-12f64..1.0, b in 1e-12f64..1.0, mean in -5.0f64..5.0, sd in 0.1f64..3.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            proptest::prop_assume!(hi < 1.0);
            for arm in [ArmSpec::gaussian(mean, sd), ArmSpec::bernoulli(0.4), ArmSpec::BoundedUniform { lo: mean, hi: mean + sd }] {
                proptest::prop_assert!(inverse_cdf(&arm, lo).unwrap() <= inverse_cdf(&arm, hi).unwrap());
            }
        }
    }
}
