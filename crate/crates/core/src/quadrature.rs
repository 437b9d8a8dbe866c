//! Globally adaptive Gauss–Kronrod (7/15-point) integration on finite
//! intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature budget of {intervals} intervals exhausted (error estimate {error:e})")]
    BudgetExhausted { intervals: usize, error: f64 },
    #[error("integrand returned a non-finite value at x = {0}")]
    NonFinite(f64),
    #[error("invalid integration interval")]
    BadInterval,
}

/// Tolerances and the subdivision budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureBudget {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadratureBudget {
    fn default() -> Self {
        Self { abs_tol: 1e-15, rel_tol: 1e-13, max_intervals: 4000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Panel, QuadratureError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let eval = |x: f64| {
        let y = f(x);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(QuadratureError::NonFinite(x))
        }
    };
    let fc = eval(c)?;
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = eval(c - dx)? + eval(c + dx)?;
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    Ok(Panel { a, b, value: k * h, error: ((k - g) * h).abs() })
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    budget: &QuadratureBudget,
) -> Result<Estimate, QuadratureError> {
    integrate_panels(f, &[a, b], budget)
}

/// Integrates `f` over the union of consecutive panels given by
/// `breakpoints`, refining wherever the Kronrod error estimate is largest.
pub fn integrate_panels<F: Fn(f64) -> f64>(
    f: F,
    breakpoints: &[f64],
    budget: &QuadratureBudget,
) -> Result<Estimate, QuadratureError> {
    if breakpoints.len() < 2
        || breakpoints.iter().any(|x| !x.is_finite())
        || breakpoints.windows(2).any(|w| w[1] < w[0])
    {
        return Err(QuadratureError::BadInterval);
    }
    let mut heap = BinaryHeap::new();
    let (mut value, mut error) = (0.0, 0.0);
    for w in breakpoints.windows(2) {
        if w[1] > w[0] {
            let p = kronrod(&f, w[0], w[1])?;
            value += p.value;
            error += p.error;
            heap.push(p);
        }
    }
    loop {
        let intervals = heap.len();
        if error <= budget.abs_tol.max(budget.rel_tol * value.abs()) {
            // Re-sum in interval order so the result does not depend on refinement history.
            let mut panels: Vec<&Panel> = heap.iter().collect();
            panels.sort_by(|p, q| p.a.total_cmp(&q.a));
            let value = panels.iter().map(|p| p.value).sum();
            let error = panels.iter().map(|p| p.error).sum();
            return Ok(Estimate { value, error, intervals });
        }
        if intervals >= budget.max_intervals {
            return Err(QuadratureError::BudgetExhausted { intervals, error });
        }
        let worst = heap.pop().expect("at least one panel");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel cannot be split further in floating point.
            return Err(QuadratureError::BudgetExhausted { intervals, error });
        }
        let left = kronrod(&f, worst.a, mid)?;
        let right = kronrod(&f, mid, worst.b)?;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x| x.powi(5) - 2.0 * x, 0.0, 2.0, &QuadratureBudget::default()).unwrap();
        assert_abs_diff_eq!(r.value, 64.0 / 6.0 - 4.0, epsilon = 1e-13);
    }

    #[test]
    fn oscillatory() {
        // ∫_0^40 e^{-x} sin(17x) dx = 17/(1+17²)·(1 - e^{-40}(cos 680 + sin(680)/17))
        let exact = {
            let w: f64 = 17.0;
            let e = (-40.0f64).exp();
            (w - e * (w * (40.0 * w).cos() + (40.0 * w).sin())) / (1.0 + w * w)
        };
        let pts: Vec<f64> = (0..=40).map(f64::from).collect();
        let r = integrate_panels(|x| (-x).exp() * (17.0 * x).sin(), &pts, &QuadratureBudget::default())
            .unwrap();
        assert_abs_diff_eq!(r.value, exact, epsilon = 1e-14);
    }

    #[test]
    fn budget_and_errors() {
        let tight = QuadratureBudget { abs_tol: 0.0, rel_tol: 0.0, max_intervals: 5 };
        assert!(matches!(
            integrate(|x| x.sqrt(), 0.0, 1.0, &tight),
            Err(QuadratureError::BudgetExhausted { .. })
        ));
        assert!(matches!(
            integrate(|x| 1.0 / x, -1.0, 1.0, &QuadratureBudget::default()),
            Err(QuadratureError::NonFinite(_)) | Err(QuadratureError::BudgetExhausted { .. })
        ));
        assert_eq!(
            integrate(|x| x, 1.0, 0.0, &QuadratureBudget::default()),
            Err(QuadratureError::BadInterval)
        );
    }
}
