use serde::{Deserialize, Serialize};

use super::SmoothnessParams;

/// Which trace theorem's parameter window applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theorem {
    /// Besov traces: `0 < s < 1`, `max(Q/(lambda+s), (Q-lambda)/s) < p < inf`.
    Thm1,
    /// Triebel–Lizorkin traces: the window of `Thm1` and `q > Q/(Q+s)`.
    Thm2,
    /// Hajłasz–Sobolev traces: `max(Q/(lambda+1), Q-lambda) < p < inf`.
    Thm3,
}

impl Theorem {
    pub fn number(self) -> u8 {
        match self {
            Theorem::Thm1 => 1,
            Theorem::Thm2 => 2,
            Theorem::Thm3 => 3,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Theorem::Thm1),
            2 => Some(Theorem::Thm2),
            3 => Some(Theorem::Thm3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub admissible: bool,
    /// `s - (Q-lambda)/p`, with `s = 1` for `Thm3`.
    pub trace_smoothness: f64,
    /// The strict lower bound on `p`.
    pub p_floor: f64,
    /// Empty when admissible.
    pub reasons: Vec<String>,
}

/// Checks the parameter window of `theorem` for a `Q`-regular space and a
/// `lambda`-regular subset.
pub fn admissibility(
    big_q: f64,
    lambda: f64,
    params: &SmoothnessParams,
    theorem: Theorem,
) -> Admissibility {
    let gamma = big_q - lambda;
    let mut reasons = Vec::new();
    if !(lambda > 0.0 && lambda <= big_q) {
        reasons.push(format!("need 0 < lambda <= Q, got lambda = {lambda}, Q = {big_q}"));
    }
    let (s, p_floor) = match theorem {
        Theorem::Thm1 | Theorem::Thm2 => {
            let s = params.s;
            if !(s > 0.0 && s < 1.0) {
                reasons.push(format!("need 0 < s < 1, got {s}"));
            }
            (s, f64::max(big_q / (lambda + s), gamma / s))
        }
        Theorem::Thm3 => (1.0, f64::max(big_q / (lambda + 1.0), gamma)),
    };
    let p = params.p;
    if !(p > p_floor) {
        reasons.push(format!("need p > {p_floor}, got {p}"));
    }
    if !p.is_finite() {
        reasons.push("need p < inf".into());
    }
    if theorem == Theorem::Thm2 {
        let q_floor = big_q / (big_q + s);
        if !(params.q > q_floor) {
            reasons.push(format!("need q > Q/(Q+s) = {q_floor}, got {}", params.q));
        }
    }
    Admissibility {
        admissible: reasons.is_empty(),
        trace_smoothness: s - gamma / p,
        p_floor,
        reasons,
    }
}

/// Trace smoothness window for a `lambda`-dimensional subset of `[0,1]^d`:
/// `lambda * max(0, 1/p - 1) < sigma <= 1 - (d - lambda)/p`.
pub fn example_window(d: f64, lambda: f64, p: f64, sigma: f64) -> bool {
    let lower = lambda * f64::max(0.0, 1.0 / p - 1.0);
    let upper = 1.0 - (d - lambda) / p;
    lower < sigma && sigma <= upper
}
