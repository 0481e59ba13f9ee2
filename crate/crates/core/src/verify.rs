//! Fast self-checks behind `cliffsolve verify`: algebra identities and
//! MacDonald-function cross-checks at fixed seeds. Each check reports a
//! name, a pass flag, and the measured quantity so failures carry numbers.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::clifford::Multivector;
use crate::special::{bessel_k_general, derivative_recursion_residual, half_integer_k};

/// One named check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn bounded(name: &str, measured: f64, bound: f64) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        pass: measured.is_finite() && measured <= bound,
        detail: format!("measured {measured:.3e}, bound {bound:.1e}"),
    }
}

fn random_multivector(rng: &mut ChaCha8Rng, dim: usize) -> Multivector<f64> {
    let mut m = Multivector::zero(dim);
    for mask in 0..(1u16 << dim) {
        m.set_coeff(
            mask,
            Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
        );
    }
    m
}

/// Largest coefficient of `a - b` relative to the scale of `b`.
fn rel_gap(a: &Multivector<f64>, b: &Multivector<f64>) -> f64 {
    let mut diff = a.clone();
    diff.add_scaled(b, -1.0);
    diff.max_abs_coeff() / b.max_abs_coeff().max(1.0)
}

/// Generator relations, associativity, the two anti-automorphisms, and the
/// coefficient-norm identity, on every dimension the algebra supports.
pub fn algebra_suite() -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_a1);

    // e_j^2 = -1 and e_j e_k + e_k e_j = 0, exhaustively.
    let mut worst = 0.0f64;
    for n in 2..=4 {
        for j in 1..=n {
            let ej = Multivector::<f64>::basis_vector(n, j);
            let mut sq = ej.try_mul(&ej).unwrap();
            sq.add_scaled(&Multivector::real_scalar(n, -1.0), -1.0);
            worst = worst.max(sq.max_abs_coeff());
            for k in (j + 1)..=n {
                let ek = Multivector::<f64>::basis_vector(n, k);
                let mut anti = ej.try_mul(&ek).unwrap();
                anti.add_scaled(&ek.try_mul(&ej).unwrap(), 1.0);
                worst = worst.max(anti.max_abs_coeff());
            }
        }
    }
    out.push(bounded("generator-relations", worst, 0.0));

    // (ab)c = a(bc) on random full-complex elements.
    let mut worst = 0.0f64;
    for n in 2..=4 {
        for _ in 0..100 {
            let (a, b, c) = (
                random_multivector(&mut rng, n),
                random_multivector(&mut rng, n),
                random_multivector(&mut rng, n),
            );
            let left = a.try_mul(&b).unwrap().try_mul(&c).unwrap();
            let right = a.try_mul(&b.try_mul(&c).unwrap()).unwrap();
            worst = worst.max(rel_gap(&left, &right));
        }
    }
    out.push(bounded("associativity", worst, 1e-12));

    // tilde(ab) = tilde(b) tilde(a) and bar(ab) = bar(b) bar(a).
    let mut worst_tilde = 0.0f64;
    let mut worst_bar = 0.0f64;
    for n in 2..=4 {
        for _ in 0..100 {
            let a = random_multivector(&mut rng, n);
            let b = random_multivector(&mut rng, n);
            let ab = a.try_mul(&b).unwrap();
            worst_tilde =
                worst_tilde.max(rel_gap(&ab.tilde(), &b.tilde().try_mul(&a.tilde()).unwrap()));
            worst_bar = worst_bar.max(rel_gap(&ab.bar(), &b.bar().try_mul(&a.bar()).unwrap()));
        }
    }
    out.push(bounded("reversal-antihomomorphism", worst_tilde, 1e-12));
    out.push(bounded("conjugation-antihomomorphism", worst_bar, 1e-12));

    // [c,c] equals the coefficient norm square.
    let mut worst = 0.0f64;
    for n in 2..=4 {
        for _ in 0..100 {
            let c = random_multivector(&mut rng, n);
            let gap = (c.scalar_product(&c).unwrap() - c.norm_sq()).abs() / c.norm_sq().max(1.0);
            worst = worst.max(gap);
        }
    }
    out.push(bounded("scalar-product-norm", worst, 1e-12));

    // P + Q = identity and the two projections annihilate each other.
    let mut worst = 0.0f64;
    for n in 2..=4 {
        for _ in 0..50 {
            let c = random_multivector(&mut rng, n);
            let mut sum = c.projection_p();
            sum.add_scaled(&c.projection_q(), 1.0);
            worst = worst.max(rel_gap(&sum, &c));
            worst = worst.max(c.projection_p().projection_q().max_abs_coeff());
            worst = worst.max(c.projection_q().projection_p().max_abs_coeff());
        }
    }
    out.push(bounded("projection-decomposition", worst, 0.0));

    out
}

/// Three-term recursion, half-integer closed forms, derivative recursion,
/// and monotone decay of the MacDonald functions.
pub fn special_suite() -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    let orders: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 2.5];
    let args: [f64; 6] = [0.3, 0.5, 1.0, 2.0, 5.0, 10.0];

    // K_{p+1}(t) = K_{p-1}(t) + (2p/t) K_p(t), relative to K_{p+1}.
    let mut worst = 0.0f64;
    for &p in &orders {
        for &t in &args {
            // K is even in the order, so K_{p-1} = K_{|p-1|}.
            let km = bessel_k_general((p - 1.0).abs(), t).unwrap();
            let k0 = bessel_k_general(p, t).unwrap();
            let kp = bessel_k_general(p + 1.0, t).unwrap();
            worst = worst.max((kp - km - 2.0 * p / t * k0).abs() / kp);
        }
    }
    out.push(bounded("macdonald-recursion", worst, 1e-6));

    // Closed forms sqrt(pi/2t) e^{-t} * polynomial vs the general path.
    let mut worst = 0.0f64;
    for m in 0..=3usize {
        for &t in &args {
            let closed = half_integer_k(m, t).unwrap();
            let general = bessel_k_general(m as f64 + 0.5, t).unwrap();
            worst = worst.max((closed - general).abs() / closed);
        }
    }
    out.push(bounded("half-integer-closed-forms", worst, 1e-10));

    // K_p'(t) = -(K_{p-1}(t) + K_{p+1}(t)) / 2 against a finite difference.
    let mut worst = 0.0f64;
    for &p in &orders {
        for &t in &args {
            worst = worst.max(derivative_recursion_residual(p, t, None).unwrap());
        }
    }
    out.push(bounded("derivative-recursion", worst, 1e-5));

    // Positivity and strict decay in t.
    let mut ok = true;
    for &p in &orders {
        let mut prev = f64::INFINITY;
        for &t in &args {
            let k = bessel_k_general(p, t).unwrap();
            ok &= k > 0.0 && k < prev;
            prev = k;
        }
    }
    out.push(CheckOutcome {
        name: "macdonald-positive-decay".to_string(),
        pass: ok,
        detail: format!("orders {orders:?} over t in {args:?}"),
    });

    out
}

/// Everything `cliffsolve verify` runs.
pub fn run_all() -> Vec<CheckOutcome> {
    let mut out = algebra_suite();
    out.extend(special_suite());
    out
}
