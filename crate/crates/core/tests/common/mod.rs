#![allow(dead_code)]

use adiabatic::schedule::ScheduleFamily;
use adiabatic::{AdiabaticSpec, Generator, RateBound, StochasticMatrix};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub fn random_stochastic(rng: &mut impl Rng, n: usize) -> StochasticMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        })
        .collect();
    StochasticMatrix::from_rows(&rows).unwrap()
}

/// Random generator whose largest exit rate is exactly `max_exit`.
pub fn random_generator(rng: &mut impl Rng, n: usize, max_exit: f64) -> Generator {
    let mut rates = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(0.5) {
                rates[(i, j)] = rng.gen_range(0.0..1.0);
            }
        }
        // keep the chain irreducible
        rates[(i, (i + 1) % n)] += 0.05;
    }
    let top = (0..n).map(|i| rates.row(i).sum()).fold(0.0, f64::max);
    Generator::from_off_diagonal(rates * (max_exit / top)).unwrap()
}

pub fn random_continuous_spec(rng: &mut impl Rng, n: usize, lambda: f64) -> AdiabaticSpec {
    let a = random_generator(rng, n, lambda);
    let b = random_generator(rng, n, lambda);
    AdiabaticSpec::continuous(
        a,
        b,
        ScheduleFamily::default(),
        RateBound::new(lambda).unwrap(),
    )
    .unwrap()
}

/// Dormand–Prince 5(4) for the row-vector system `y' = y A(t)`, with a tight
/// mixed error control. Used only as an independent reference.
pub fn dopri(y0: &[f64], a: impl Fn(f64) -> DMatrix<f64>, t_end: f64, tol: f64) -> Vec<f64> {
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];
    let f = |t: f64, y: &DVector<f64>| (y.transpose() * a(t)).transpose();
    let mut y = DVector::from_column_slice(y0);
    let mut t = 0.0;
    let mut h = (t_end / 100.0).min(0.01);
    while t < t_end {
        h = h.min(t_end - t);
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        for i in 0..7 {
            let mut yi = y.clone();
            for (j, kj) in k.iter().enumerate() {
                yi += kj * (A[i][j] * h);
            }
            k.push(f(t + C[i] * h, &yi));
        }
        let mut next = y.clone();
        let mut err = DVector::zeros(y.len());
        for i in 0..7 {
            next += &k[i] * (B[i] * h);
            err += &k[i] * (E[i] * h);
        }
        let e = err.amax();
        if e <= tol {
            t += h;
            y = next;
        }
        let factor = if e > 0.0 {
            0.9 * (tol / e).powf(0.2)
        } else {
            5.0
        };
        h *= factor.clamp(0.2, 5.0);
    }
    y.iter().copied().collect()
}
