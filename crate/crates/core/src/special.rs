//! Complementary error function in linear and log domain.

/// Beyond this point erfc is evaluated through its continued fraction in
/// the log domain, which never underflows.
const SWITCH: f64 = 5.0;

const LN_SQRT_PI: f64 = 0.572_364_942_924_700_1;

// Cody's rational Chebyshev approximations, one set per interval.
const A: [f64; 5] = [
    3.161_123_743_870_565_6e0,
    1.138_641_541_510_501_6e2,
    3.774_852_376_853_020_2e2,
    3.209_377_589_138_469_5e3,
    1.857_777_061_846_031_5e-1,
];
const B: [f64; 4] = [
    2.360_129_095_234_412_1e1,
    2.440_246_379_344_441_7e2,
    1.282_616_526_077_372_3e3,
    2.844_236_833_439_170_6e3,
];
const C: [f64; 9] = [
    5.641_884_969_886_700_9e-1,
    8.883_149_794_388_375_9e0,
    6.611_919_063_714_163e1,
    2.986_351_381_974_001_3e2,
    8.819_522_212_417_691e2,
    1.712_047_612_634_070_6e3,
    2.051_078_377_826_071_5e3,
    1.230_339_354_797_997_2e3,
    2.153_115_354_744_038_5e-8,
];
const D: [f64; 8] = [
    1.574_492_611_070_983_5e1,
    1.176_939_508_913_125e2,
    5.371_811_018_620_098_6e2,
    1.621_389_574_566_690_2e3,
    3.290_799_235_733_459_6e3,
    4.362_619_090_143_247e3,
    3.439_367_674_143_721_6e3,
    1.230_339_354_803_749_4e3,
];
const P: [f64; 6] = [
    3.053_266_349_612_323_4e-1,
    3.603_448_999_498_044_4e-1,
    1.257_817_261_112_292_5e-1,
    1.608_378_514_874_227_7e-2,
    6.587_491_615_298_378e-4,
    1.631_538_713_730_209_8e-2,
];
const Q: [f64; 5] = [
    2.568_520_192_289_822_4e0,
    1.872_952_849_923_467_3e0,
    5.279_051_029_514_284e-1,
    6.051_834_131_244_132e-2,
    2.335_204_976_268_691_9e-3,
];
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// `e^{-y²}` split so the rounding of `y²` does not cost digits.
fn gauss_tail(y: f64) -> f64 {
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp()
}

/// Complementary error function, relative error near 1e-15 on [0, 5].
pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    let r = if y <= 0.468_75 {
        let ysq = if y > 1.11e-16 { y * y } else { 0.0 };
        let mut num = A[4] * ysq;
        let mut den = ysq;
        for i in 0..3 {
            num = (num + A[i]) * ysq;
            den = (den + B[i]) * ysq;
        }
        return 1.0 - x * (num + A[3]) / (den + B[3]);
    } else if y <= 4.0 {
        let mut num = C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + C[i]) * y;
            den = (den + D[i]) * y;
        }
        gauss_tail(y) * (num + C[7]) / (den + D[7])
    } else if y < 26.7 {
        let ysq = 1.0 / (y * y);
        let mut num = P[5] * ysq;
        let mut den = ysq;
        for i in 0..4 {
            num = (num + P[i]) * ysq;
            den = (den + Q[i]) * ysq;
        }
        let r = ysq * (num + P[4]) / (den + Q[4]);
        gauss_tail(y) * (FRAC_1_SQRT_PI - r) / y
    } else {
        0.0
    };
    if x < 0.0 {
        2.0 - r
    } else {
        r
    }
}

/// Continued-fraction tail `a_k/(x + a_{k+1}/(x + …))` with `a_j = j/2`,
/// by Lentz's method. Converges quickly for `x ≥ SWITCH`.
fn cf_tail(x: f64, k: usize) -> f64 {
    let tiny = 1e-300;
    let mut f = tiny;
    let mut c = f;
    let mut d = 0.0;
    for j in k..k + 500 {
        let a = 0.5 * j as f64;
        d = x + a * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = x + a / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    f
}

/// `√π·e^{x²}·erfc(x) = 1/(x + (1/2)/(x + 1/(x + …)))`.
fn scaled_erfc_cf(x: f64) -> f64 {
    1.0 / (x + cf_tail(x, 1))
}

/// ln erfc(x), accurate without underflow for large positive x.
pub fn ln_erfc(x: f64) -> f64 {
    if x <= SWITCH {
        erfc(x).ln()
    } else {
        -x * x - LN_SQRT_PI + scaled_erfc_cf(x).ln()
    }
}

/// `x² + ln erfc(x)`, the log of the scaled complementary error function.
pub fn ln_erfcx(x: f64) -> f64 {
    if x <= SWITCH {
        x * x + erfc(x).ln()
    } else {
        -LN_SQRT_PI + scaled_erfc_cf(x).ln()
    }
}

/// Mills-type ratio `m(z) = e^{-z²} / (√π·erfc(z))`.
pub fn mills(z: f64) -> f64 {
    if z <= SWITCH {
        (-z * z).exp() / (std::f64::consts::PI.sqrt() * erfc(z))
    } else {
        z + cf_tail(z, 1)
    }
}

/// `1 − 2z(m(z) − z)`, free of cancellation for large z where it behaves
/// like `1/z²`.
pub fn mills_moment(z: f64) -> f64 {
    if z <= SWITCH {
        1.0 - 2.0 * z * (mills(z) - z)
    } else {
        // m − z = (1/2)/(z + F₂) so the expression equals F₂/(z + F₂)
        let f2 = cf_tail(z, 2);
        f2 / (z + f2)
    }
}
