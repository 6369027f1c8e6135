//! Standard normal density, distribution, and quantile functions.
//!
//! Self-contained double precision implementations: the error function pair
//! uses W. J. Cody's rational Chebyshev approximations (SPECFUN `calerf`),
//! the quantile function uses M. J. Wichura's algorithm AS 241 (`PPND16`).
//! Both are accurate to close to machine precision, which is more than the
//! bandwidth rules and test statistics built on top of them require.

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density `φ(x)`.
#[inline]
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function `Φ(x)`.
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal quantile function `Φ⁻¹(p)` for `p ∈ (0, 1)`.
///
/// Panics outside the open unit interval; callers validate their inputs.
pub fn inv_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "inv_cdf requires p in (0, 1), got {p}");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        // Central region: rational approximation in r = 0.180625 - q².
        let r = 0.180625 - q * q;
        let num = poly(
            &[
                2.509_080_928_730_122_7e3,
                3.343_057_558_358_812_8e4,
                6.726_577_092_700_870_1e4,
                4.592_195_393_154_987_15e4,
                1.373_169_376_550_946_1e4,
                1.971_590_950_306_551_3e3,
                1.331_416_678_917_843_8e2,
                3.387_132_872_796_366_608,
            ],
            r,
        );
        let den = poly(
            &[
                5.226_495_278_852_854_5e3,
                2.872_908_573_572_194_3e4,
                3.930_789_580_009_271e4,
                2.121_379_430_158_659_7e4,
                5.394_196_021_424_751e3,
                6.871_870_074_920_579e2,
                4.231_333_070_160_091e1,
                1.0,
            ],
            r,
        );
        return q * num / den;
    }
    // Tail regions: rational approximations in r = sqrt(-ln(min(p, 1-p))).
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        let num = poly(
            &[
                7.745_450_142_783_414e-4,
                2.272_384_498_926_918_4e-2,
                2.417_807_251_774_506e-1,
                1.270_458_252_452_368_4,
                3.647_848_324_763_204_5,
                5.769_497_221_460_691,
                4.630_337_846_156_546,
                1.423_437_110_749_683_5,
            ],
            r,
        );
        let den = poly(
            &[
                1.050_750_071_644_416_9e-9,
                5.475_938_084_995_345e-4,
                1.519_866_656_361_645_7e-2,
                1.481_039_764_274_800_8e-1,
                6.897_673_349_851e-1,
                1.676_384_830_183_803_8,
                2.053_191_626_637_758_8,
                1.0,
            ],
            r,
        );
        num / den
    } else {
        let r = r - 5.0;
        let num = poly(
            &[
                2.010_334_399_292_288_1e-7,
                2.711_555_568_743_487_6e-5,
                1.242_660_947_388_078_4e-3,
                2.653_218_952_657_612_3e-2,
                2.965_605_718_285_048_9e-1,
                1.784_826_539_917_291_3,
                5.463_784_911_164_114,
                6.657_904_643_501_103,
            ],
            r,
        );
        let den = poly(
            &[
                2.044_263_103_389_939_7e-15,
                1.421_511_758_316_446e-7,
                1.846_318_317_510_054_68e-5,
                7.868_691_311_456_132_6e-4,
                1.487_536_129_085_061_5e-2,
                1.369_298_809_227_358e-1,
                5.998_322_065_558_88e-1,
                1.0,
            ],
            r,
        );
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Complementary error function `erfc(x)`.
pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        return 1.0 - erf_small(x);
    }
    let result = if y <= 4.0 {
        let num = poly(
            &[
                2.153_115_354_744_038_46e-8,
                5.641_884_969_886_700_89e-1,
                8.883_149_794_388_375_94,
                6.611_919_063_714_162_95e1,
                2.986_351_381_974_001_31e2,
                8.819_522_212_417_690_9e2,
                1.712_047_612_634_070_58e3,
                2.051_078_377_826_071_47e3,
                1.230_339_354_797_997_25e3,
            ],
            y,
        );
        let den = poly(
            &[
                1.0,
                1.574_492_611_070_983_47e1,
                1.176_939_508_913_124_99e2,
                5.371_811_018_620_098_58e2,
                1.621_389_574_566_690_19e3,
                3.290_799_235_733_459_63e3,
                4.362_619_090_143_247_16e3,
                3.439_367_674_143_721_64e3,
                1.230_339_354_803_749_42e3,
            ],
            y,
        );
        exp_neg_sq(y) * num / den
    } else {
        // Asymptotic region.
        let z = 1.0 / (y * y);
        let num = poly(
            &[
                1.631_538_713_730_209_78e-2,
                3.053_266_349_612_323_44e-1,
                3.603_448_999_498_044_39e-1,
                1.257_817_261_112_292_46e-1,
                1.608_378_514_874_227_66e-2,
                6.587_491_615_298_378_03e-4,
            ],
            z,
        );
        let den = poly(
            &[
                1.0,
                2.568_520_192_289_822_42,
                1.872_952_849_923_460_47,
                5.279_051_029_514_284_12e-1,
                6.051_834_131_244_131_91e-2,
                2.335_204_976_268_691_85e-3,
            ],
            z,
        );
        let r = z * num / den;
        exp_neg_sq(y) * (0.564_189_583_547_756_287 - r) / y
    };
    if x < 0.0 {
        2.0 - result
    } else {
        result
    }
}

/// `erf(x)` for `|x| ≤ 0.46875`.
fn erf_small(x: f64) -> f64 {
    let z = x * x;
    let num = poly(
        &[
            1.857_777_061_846_031_53e-1,
            3.161_123_743_870_565_6,
            1.138_641_541_510_501_56e2,
            3.774_852_376_853_020_21e2,
            3.209_377_589_138_469_47e3,
        ],
        z,
    );
    let den = poly(
        &[
            1.0,
            2.360_129_095_234_412_09e1,
            2.440_246_379_344_441_73e2,
            1.282_616_526_077_372_28e3,
            2.844_236_833_439_170_62e3,
        ],
        z,
    );
    x * num / den
}

/// `exp(-y²)` split as in `calerf` to avoid cancellation for large `y`.
fn exp_neg_sq(y: f64) -> f64 {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp()
}

/// Horner evaluation with coefficients ordered from highest degree down.
#[inline]
fn poly(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in &coeffs[..coeffs.len() - 1] {
        acc = (acc + c) * x;
    }
    acc + coeffs[coeffs.len() - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values computed with 50-digit arithmetic (mpmath).
    const REF: &[(f64, f64)] = &[
        (-3.0, 1.349_898_031_630_094_6e-3),
        (-1.0, 0.158_655_253_931_457_05),
        (0.0, 0.5),
        (0.5, 0.691_462_461_274_013_1),
        (1.0, 0.841_344_746_068_542_9),
        (1.959_963_984_540_054, 0.975),
        (4.0, 0.999_968_328_758_166_9),
    ];

    #[test]
    fn cdf_matches_reference_values() {
        for &(x, p) in REF {
            assert!(
                (cdf(x) - p).abs() < 1e-14,
                "cdf({x}) = {} vs reference {p}",
                cdf(x)
            );
        }
    }

    #[test]
    fn pdf_at_zero_and_one() {
        assert!((pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-16);
        assert!((pdf(1.0) - 0.241_970_724_519_143_37).abs() < 1e-16);
    }

    #[test]
    fn inv_cdf_matches_reference_values() {
        assert!((inv_cdf(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((inv_cdf(0.5)).abs() < 1e-15);
        assert!((inv_cdf(0.01) - (-2.326_347_874_040_841)).abs() < 1e-12);
        assert!((inv_cdf(1e-10) - (-6.361_340_902_404_056)).abs() < 1e-8);
    }

    #[test]
    fn inv_cdf_round_trips_through_cdf() {
        for i in 1..200 {
            let p = i as f64 / 200.0;
            let x = inv_cdf(p);
            assert!(
                (cdf(x) - p).abs() < 1e-12,
                "round trip failed at p = {p}: cdf(inv_cdf(p)) = {}",
                cdf(x)
            );
        }
    }

    #[test]
    fn cdf_is_symmetric() {
        for i in 0..50 {
            let x = i as f64 * 0.17;
            assert!((cdf(x) + cdf(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    #[should_panic(expected = "inv_cdf requires p in (0, 1)")]
    fn inv_cdf_rejects_endpoints() {
        inv_cdf(1.0);
    }
}
