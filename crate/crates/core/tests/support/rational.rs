//! Exact rational arithmetic for golden-value replays.
//!
//! The reference values of the worked two-microgrid example are simple
//! fractions; this module recomputes them independently of the library's
//! floating-point path, with exact Gauss-Jordan inversion over i128
//! rationals.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rat {
    num: i128,
    den: i128,
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Rat {
    pub fn new(num: i128, den: i128) -> Self {
        assert!(den != 0, "zero denominator");
        let sign = if den < 0 { -1 } else { 1 };
        let g = gcd(num, den).max(1);
        Rat {
            num: sign * num / g,
            den: sign * den / g,
        }
    }

    pub fn int(n: i128) -> Self {
        Rat { num: n, den: 1 }
    }

    pub fn zero() -> Self {
        Rat::int(0)
    }

    pub fn one() -> Self {
        Rat::int(1)
    }

    pub fn is_zero(self) -> bool {
        self.num == 0
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Add for Rat {
    type Output = Rat;
    fn add(self, rhs: Rat) -> Rat {
        Rat::new(self.num * rhs.den + rhs.num * self.den, self.den * rhs.den)
    }
}

impl Sub for Rat {
    type Output = Rat;
    fn sub(self, rhs: Rat) -> Rat {
        Rat::new(self.num * rhs.den - rhs.num * self.den, self.den * rhs.den)
    }
}

impl Mul for Rat {
    type Output = Rat;
    fn mul(self, rhs: Rat) -> Rat {
        Rat::new(self.num * rhs.num, self.den * rhs.den)
    }
}

impl Div for Rat {
    type Output = Rat;
    fn div(self, rhs: Rat) -> Rat {
        assert!(!rhs.is_zero(), "division by zero");
        Rat::new(self.num * rhs.den, self.den * rhs.num)
    }
}

impl Neg for Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat {
            num: -self.num,
            den: self.den,
        }
    }
}

pub type Matrix = Vec<Vec<Rat>>;

pub fn from_i128(rows: &[&[i128]]) -> Matrix {
    rows.iter()
        .map(|row| row.iter().map(|&x| Rat::int(x)).collect())
        .collect()
}

pub fn identity(n: usize) -> Matrix {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { Rat::one() } else { Rat::zero() })
                .collect()
        })
        .collect()
}

pub fn mat_mul(a: &Matrix, b: &Matrix) -> Matrix {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| (0..k).fold(Rat::zero(), |acc, l| acc + a[i][l] * b[l][j]))
                .collect()
        })
        .collect()
}

pub fn mat_vec(a: &Matrix, x: &[Rat]) -> Vec<Rat> {
    a.iter()
        .map(|row| {
            row.iter()
                .zip(x)
                .fold(Rat::zero(), |acc, (&a, &b)| acc + a * b)
        })
        .collect()
}

pub fn transpose(a: &Matrix) -> Matrix {
    let (n, m) = (a.len(), a[0].len());
    (0..m).map(|j| (0..n).map(|i| a[i][j]).collect()).collect()
}

pub fn sub(a: &Matrix, b: &Matrix) -> Matrix {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(&x, &y)| x - y).collect())
        .collect()
}

/// Exact inverse by Gauss-Jordan elimination; panics on singular input.
pub fn inverse(a: &Matrix) -> Matrix {
    let n = a.len();
    let mut work: Vec<Vec<Rat>> = a
        .iter()
        .zip(identity(n))
        .map(|(row, id_row)| row.iter().copied().chain(id_row).collect())
        .collect();
    for col in 0..n {
        let pivot_row = (col..n)
            .find(|&r| !work[r][col].is_zero())
            .expect("singular matrix");
        work.swap(col, pivot_row);
        let pivot = work[col][col];
        for x in work[col].iter_mut() {
            *x = *x / pivot;
        }
        for row in 0..n {
            if row != col && !work[row][col].is_zero() {
                let factor = work[row][col];
                for j in 0..2 * n {
                    let delta = factor * work[col][j];
                    work[row][j] = work[row][j] - delta;
                }
            }
        }
    }
    work.into_iter().map(|row| row[n..].to_vec()).collect()
}

/// Elementwise reciprocal diagonal action: `[x]⁻¹ v`.
pub fn div_elementwise(v: &[Rat], x: &[Rat]) -> Vec<Rat> {
    v.iter().zip(x).map(|(&a, &b)| a / b).collect()
}
