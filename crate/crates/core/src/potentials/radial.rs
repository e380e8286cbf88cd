use serde::{Deserialize, Serialize};

/// Closed-form radial functions with derivatives of every order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum RadialFunction {
    /// `depth · [(r0/r)^12 - 2 (r0/r)^6]`, minimum `-depth` at `r0`.
    LennardJones {
        #[serde(default = "one")]
        depth: f64,
        #[serde(default = "one")]
        r0: f64,
    },
    /// `depth · [e^{-2a(r - r0)} - 2 e^{-a(r - r0)}]`.
    Morse {
        #[serde(default = "one")]
        depth: f64,
        stiffness: f64,
        #[serde(default = "one")]
        r0: f64,
    },
    /// `coeff · r^{-exponent}`.
    PowerLaw { coeff: f64, exponent: f64 },
    /// `coeff · e^{-decay (r - r0)}`.
    Exponential {
        coeff: f64,
        decay: f64,
        #[serde(default = "one")]
        r0: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// `d^k/dr^k r^{-p}`
fn power_deriv(r: f64, p: f64, k: u32) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c *= -(p + i as f64);
    }
    c * r.powf(-p - k as f64)
}

impl RadialFunction {
    pub fn lennard_jones() -> Self {
        Self::LennardJones { depth: 1.0, r0: 1.0 }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.deriv(r, 0)
    }

    /// `k`-th derivative at `r`.
    pub fn deriv(&self, r: f64, k: u32) -> f64 {
        match *self {
            Self::LennardJones { depth, r0 } => {
                depth
                    * (r0.powi(12) * power_deriv(r, 12.0, k)
                        - 2.0 * r0.powi(6) * power_deriv(r, 6.0, k))
            }
            Self::Morse { depth, stiffness: a, r0 } => {
                let e1 = (-a * (r - r0)).exp();
                depth * ((-2.0 * a).powi(k as i32) * e1 * e1 - 2.0 * (-a).powi(k as i32) * e1)
            }
            Self::PowerLaw { coeff, exponent } => coeff * power_deriv(r, exponent, k),
            Self::Exponential { coeff, decay, r0 } => {
                coeff * (-decay).powi(k as i32) * (-decay * (r - r0)).exp()
            }
        }
    }

    /// Minimum and maximum of `φ` on `[lo, hi]`, by dense sampling.
    pub fn range(&self, lo: f64, hi: f64) -> (f64, f64) {
        const SAMPLES: usize = 256;
        (0..=SAMPLES)
            .map(|i| self.value(lo + (hi - lo) * i as f64 / SAMPLES as f64))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    }

    /// Supremum of `|φ^{(k)}|` on `[lo, hi]`, by dense sampling.
    pub fn sup_abs(&self, k: u32, lo: f64, hi: f64) -> f64 {
        const SAMPLES: usize = 256;
        (0..=SAMPLES)
            .map(|i| {
                let r = lo + (hi - lo) * i as f64 / SAMPLES as f64;
                self.deriv(r, k).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// `G(s) = Σ_i c_i s^i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    pub fn deriv(&self, s: f64, k: u32) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(k as usize)
            .map(|(i, &c)| {
                let mut f = c;
                for j in 0..k {
                    f *= (i as u32 - j) as f64;
                }
                f * s.powi((i as u32 - k) as i32)
            })
            .sum()
    }

    pub fn value(&self, s: f64) -> f64 {
        self.deriv(s, 0)
    }

    pub fn sup_abs(&self, k: u32, lo: f64, hi: f64) -> f64 {
        const SAMPLES: usize = 256;
        (0..=SAMPLES)
            .map(|i| self.deriv(lo + (hi - lo) * i as f64 / SAMPLES as f64, k).abs())
            .fold(0.0, f64::max)
    }
}
