//! csch and coth − csch for nonnegative arguments, overflow-free.
//!
//! Above `SCALED_FROM` the exponentially scaled forms are used:
//! csch u = 2e^{−u}/(1 − e^{−2u}) and coth u − csch u = (1 − e^{−u})/(1 + e^{−u}).

pub const SCALED_FROM: f64 = 30.0;

/// csch u for u > 0. Underflows gracefully to 0 for huge u.
pub fn csch(u: f64) -> f64 {
    if u > SCALED_FROM {
        let e = (-u).exp();
        2.0 * e / (1.0 - e * e)
    } else {
        1.0 / u.sinh()
    }
}

/// ln csch u for u > 0, finite for every finite positive u.
pub fn ln_csch(u: f64) -> f64 {
    if u > SCALED_FROM {
        std::f64::consts::LN_2 - u - (-(-2.0 * u).exp()).ln_1p()
    } else {
        -u.sinh().ln()
    }
}

/// coth u − csch u = tanh(u/2), computed without cancellation for small u.
pub fn coth_minus_csch(u: f64) -> f64 {
    if u > SCALED_FROM {
        let e = (-u).exp();
        (1.0 - e) / (1.0 + e)
    } else {
        (0.5 * u).tanh()
    }
}

/// coth u for u > 0.
pub fn coth(u: f64) -> f64 {
    if u > SCALED_FROM {
        let e = (-2.0 * u).exp();
        (1.0 + e) / (1.0 - e)
    } else {
        1.0 / u.tanh()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branches_agree_at_switch() {
        let below = 1.0 / SCALED_FROM.sinh();
        let above = {
            let e = (-SCALED_FROM).exp();
            2.0 * e / (1.0 - e * e)
        };
        assert!((below - above).abs() <= 1e-15 * below);
        assert!((coth_minus_csch(30.0 - 1e-12) - coth_minus_csch(30.0 + 1e-12)).abs() < 1e-15);
    }

    #[test]
    fn identities_at_moderate_arguments() {
        for &u in &[1e-8, 1e-3, 0.5, 2.0, 10.0, 29.0, 31.0, 200.0] {
            let c = coth(u);
            let s = csch(u);
            // coth² − csch² = 1
            assert!((c * c - s * s - 1.0).abs() < 1e-9 * c * c, "u = {u}");
            assert!((coth_minus_csch(u) - (0.5 * u).tanh()).abs() < 1e-15);
            if s > 0.0 {
                assert!((ln_csch(u) - s.ln()).abs() < 1e-12 * (1.0 + s.ln().abs()));
            }
        }
    }

    #[test]
    fn huge_arguments_stay_finite() {
        assert_eq!(csch(2.0e4), 0.0);
        assert!((ln_csch(2.0e4) - (std::f64::consts::LN_2 - 2.0e4)).abs() < 1e-9);
        assert_eq!(coth_minus_csch(2.0e4), 1.0);
    }
}
