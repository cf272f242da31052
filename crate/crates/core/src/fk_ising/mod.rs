//! Critical Ising model: spin measure, loop representation and the
//! fermionic observable.

pub mod interface;
pub mod ising;
pub mod loops;
pub mod medial;
pub mod observable;

pub use medial::{LoopBoundary, LoopCounts, TileDomain, TileState, Visit};

/// `β_c = ln(1 + √2)/2`, the root of `sinh 2β = 1`.
pub fn critical_beta() -> f64 {
    std::f64::consts::SQRT_2.ln_1p() / 2.0
}

/// Probability `q = e^{−2β}` that an equal-spin diagonal is cut.
pub fn cut_probability(beta: f64) -> f64 {
    (-2.0 * beta).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_values() {
        let b = critical_beta();
        assert!(((2.0 * b).sinh() - 1.0).abs() < 1e-14);
        assert!((cut_probability(b) - (2f64.sqrt() - 1.0)).abs() < 1e-14);
        assert!((1.0 - cut_probability(b) - (2.0 - 2f64.sqrt())).abs() < 1e-14);
    }
}
