//! Golden-section search for unimodal objectives on a closed interval.

const INV_PHI: f64 = 0.618_033_988_749_894_9;
const MAX_ITERS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub arg: f64,
    pub value: f64,
}

/// Maximizes a unimodal `f` on `[lo, hi]` until the bracket is narrower than
/// `rel_tol` relative to its midpoint. NaN evaluations count as `-inf`, which
/// lets callers mark points outside an objective's domain.
pub fn golden_section_max<F>(mut f: F, lo: f64, hi: f64, rel_tol: f64) -> Maximum
where
    F: FnMut(f64) -> f64,
{
    let mut eval = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c);
    let mut fd = eval(d);
    for _ in 0..MAX_ITERS {
        if (b - a).abs() <= rel_tol * 0.5 * (a.abs() + b.abs()) + f64::MIN_POSITIVE {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d);
        }
    }
    if fc >= fd {
        Maximum { arg: c, value: fc }
    } else {
        Maximum { arg: d, value: fd }
    }
}
